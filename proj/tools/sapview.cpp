#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sapview/harness.hpp"

namespace {

using namespace sapview;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (SAPCFG1)");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the run seed");
  cmd->add_option("--out", c.out, "output directory (overrides run.output_dir)");
  cmd->add_flag("--force", c.force, "write into a non-empty output directory");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : parse_config(read_file(c.config));
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

std::vector<SkeletonSequence> eval_split(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "all") {
    auto all = ds.train;
    all.insert(all.end(), ds.test.begin(), ds.test.end());
    return all;
  }
  return ds.test.empty() ? ds.train : ds.test;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sapview: skeleton action recognition with learned view anchors"};
  app.require_subcommand(1);

  Common gen_opts;
  auto* gen = app.add_subcommand("generate", "write the configured dataset as SKL1 files plus a manifest");
  add_common(gen, gen_opts);

  Common train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint.ckpt, metrics.csv, config.cfg");
  add_common(train_cmd, train_opts);

  Common eval_opts;
  std::string eval_ckpt, eval_split_name = "test";
  bool eval_clean = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (config corruption applied unless --clean)");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split_name, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
  eval->add_flag("--clean", eval_clean, "ignore the [corruption] section");

  Common rob_opts;
  std::vector<std::string> rob_ckpts;
  auto* rob = app.add_subcommand("robustness", "evaluate checkpoints on the corruption grid");
  add_common(rob, rob_opts);
  rob->add_option("--checkpoint", rob_ckpts, "name=path, repeatable")->required();

  Common exp_opts;
  std::string exp_ckpt, exp_seq;
  auto* exp = app.add_subcommand("export-views", "write anchors, angles and an SVG for one sequence");
  add_common(exp, exp_opts, false);
  exp->add_option("--checkpoint", exp_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  exp->add_option("--sequence", exp_seq, "SKL1 or NTU .skeleton file")->required()->check(CLI::ExistingFile);

  Common abl_opts;
  std::string axis;
  auto* abl = app.add_subcommand("ablate", "train one model per arm of an ablation axis");
  add_common(abl, abl_opts);
  abl->add_option("--axis", axis, "heads, fusion or location")
      ->required()
      ->check(CLI::IsMember({"heads", "fusion", "location"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      auto cfg = load_config(gen_opts);
      if (gen_opts.seed) cfg.dataset.synthetic.seed = *gen_opts.seed;
      const auto entries = cmd_generate(cfg, cfg.output_dir, gen_opts.force);
      std::cout << "wrote " << entries.size() << " sequences to " << cfg.output_dir << "\n";
    } else if (*train_cmd) {
      const auto cfg = load_config(train_opts);
      const auto result = cmd_train(cfg, cfg.output_dir, train_opts.force, &std::cerr);
      const auto& last = result.metrics.back();
      std::cout << "final " << last.split << " accuracy " << format_double(last.accuracy) << "\n";
    } else if (*eval) {
      const auto cfg = load_config(eval_opts);
      const auto model = load_checkpoint(eval_ckpt);
      const auto ds = prepare_dataset(cfg);
      std::optional<CorruptionSpec> corruption;
      if (!eval_clean && cfg.corruption.kind != CorruptionKind::none) corruption = cfg.corruption;
      const auto report = cmd_eval(model, eval_split(ds, eval_split_name), corruption);
      const auto csv = eval_report_to_csv(report);
      if (!eval_opts.out.empty()) {
        prepare_output_dir(cfg.output_dir, eval_opts.force);
        write_file(std::filesystem::path(cfg.output_dir) / "eval.csv", csv);
        write_resolved_config(cfg.output_dir, cfg);
      }
      std::cout << csv;
    } else if (*rob) {
      const auto cfg = load_config(rob_opts);
      std::vector<std::pair<std::string, Model>> models;
      for (const auto& spec : rob_ckpts) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw SpecError("--checkpoint expects name=path, got '" + spec + "'");
        models.emplace_back(spec.substr(0, eq), load_checkpoint(spec.substr(eq + 1)));
      }
      const auto ds = prepare_dataset(cfg);
      const auto report = cmd_robustness(models, ds.test.empty() ? ds.train : ds.test, cfg.seed);
      const std::filesystem::path out = cfg.output_dir;
      prepare_output_dir(out, rob_opts.force);
      write_resolved_config(out, cfg);
      write_file(out / "robustness.csv", robustness_to_csv(report));
      write_file(out / "robustness_table.csv", robustness_table_csv(report));
      write_file(out / "robustness_summary.csv", robustness_summary_csv(report));
      std::cout << robustness_table_csv(report);
    } else if (*exp) {
      const auto model = load_checkpoint(exp_ckpt);
      const auto seq = load_sequence(exp_seq);
      const std::filesystem::path out = exp_opts.out.empty() ? "views" : exp_opts.out;
      const auto ex = cmd_export_views(model, seq, out, exp_opts.force);
      std::cout << "wrote " << ex.views.pairs.size() << " anchor pairs to " << out.string() << "\n";
    } else if (*abl) {
      const auto cfg = load_config(abl_opts);
      const auto rows = cmd_ablate(cfg, ablation_axis_from_string(axis), cfg.output_dir, abl_opts.force, &std::cerr);
      std::cout << ablation_to_csv(rows);
    }
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const RefusedOverwrite& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
