#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sapview/checkpoint.hpp"
#include "sapview/config.hpp"
#include "sapview/corruption.hpp"
#include "sapview/model.hpp"
#include "sapview/skeleton.hpp"
#include "sapview/synthetic.hpp"
#include "sapview/train.hpp"

namespace sapview {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Data plumbing
// ---------------------------------------------------------------------------

inline std::vector<SkeletonSequence> load_sequences(const DatasetConfig& d) {
  if (d.source == DatasetSource::synthetic) return generate_synthetic(d.synthetic);
  if (d.manifest.empty()) throw SpecError("dataset source is manifest but no manifest path is set");
  auto data = load_manifest(d.manifest);
  if (data.empty()) throw EmptySequence("manifest lists no sequences");
  for (auto& s : data)
    if (s.frames() != d.frames) s = resample(s, d.frames);
  return data;
}

/// Corrupts every sequence with its own seed derived from (spec.seed, index).
inline std::vector<SkeletonSequence> corrupt_all(std::span<const SkeletonSequence> data, const CorruptionSpec& spec) {
  std::vector<SkeletonSequence> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CorruptionSpec s = spec;
    s.seed = mix_seed(spec.seed, i);
    out.push_back(corrupt(data[i], s));
  }
  return out;
}

struct Dataset {
  std::vector<SkeletonSequence> train, test;
  std::size_t joints = 0, num_classes = 0;
  std::vector<Bone> bones;
};

/// Loads the configured data and splits off the held-out part (seeded by the
/// run seed). Training data is corrupted only when `corrupt_train` is set.
inline Dataset prepare_dataset(const ExperimentConfig& cfg) {
  auto all = load_sequences(cfg.dataset);
  if (all.empty()) throw EmptySequence("dataset is empty");
  Dataset ds;
  ds.joints = all.front().joints();
  ds.bones = all.front().bones();
  int max_label = 0;
  for (const auto& s : all) {
    if (s.joints() != ds.joints) throw ModelError("dataset mixes skeletons with different joint counts");
    if (s.label() < 0) throw ParseError("negative class label", 0);
    max_label = std::max(max_label, s.label());
  }
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  auto [train, test] = split_holdout(all, cfg.dataset.holdout, cfg.seed);
  ds.train = std::move(train);
  ds.test = std::move(test);
  if (cfg.corrupt_train && cfg.corruption.kind != CorruptionKind::none)
    ds.train = corrupt_all(ds.train, cfg.corruption);
  return ds;
}

/// The experiment's model architecture completed with the dataset's shape.
inline ModelConfig resolve_model(const ExperimentConfig& cfg, const Dataset& ds) {
  ModelConfig m = cfg.model;
  m.joints = ds.joints;
  m.num_classes = ds.num_classes;
  m.bones = ds.bones;
  return m;
}

/// Creates `dir`; an existing non-empty directory is an error unless `force`.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw RefusedOverwrite(dir.string() + " exists and is not a directory");
    if (!force && !fs::is_empty(dir))
      throw RefusedOverwrite(dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

inline void write_resolved_config(const fs::path& dir, const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.output_dir = dir.string();
  write_file(dir / "config.cfg", serialize_config(c));
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Writes one SKL1 file per sequence plus `manifest.txt`; returns the entries.
inline std::vector<ManifestEntry> cmd_generate(const ExperimentConfig& cfg, const fs::path& out, bool force) {
  const auto data = load_sequences(cfg.dataset);
  prepare_output_dir(out, force);
  std::vector<ManifestEntry> entries;
  char name[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::snprintf(name, sizeof(name), "seq_%05zu.skl", i);
    write_file(out / name, serialize_skl1(data[i]));
    entries.push_back({name, data[i].label()});
  }
  write_file(out / "manifest.txt", serialize_manifest(entries));
  write_resolved_config(out, cfg);
  return entries;
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

inline Model initial_model(const ExperimentConfig& cfg, const Dataset& ds) {
  return Model::init(resolve_model(cfg, ds), cfg.seed);
}

/// Trains on the configured data and writes checkpoint.ckpt, metrics.csv and
/// config.cfg into `out`. Progress lines go to `log` when given.
inline TrainResult cmd_train(const ExperimentConfig& cfg, const fs::path& out, bool force, std::ostream* log = nullptr) {
  const auto ds = prepare_dataset(cfg);
  prepare_output_dir(out, force);
  write_resolved_config(out, cfg);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  auto result = train(initial_model(cfg, ds), ds.train, ds.test, tc, [&](const EpochMetrics& m) {
    if (log)
      *log << "epoch " << m.epoch << " " << m.split << " loss " << format_double(m.loss) << " acc "
           << format_double(m.accuracy) << "\n";
  });
  save_checkpoint(out / "checkpoint.ckpt", result.model);
  write_file(out / "metrics.csv", metrics_to_csv(result.metrics));
  return result;
}

struct EvalReport {
  EvalResult result;
  std::size_t num_classes = 0;

  /// Top-5 is only meaningful with more than five classes.
  bool has_top5() const { return num_classes > 5; }
};

inline EvalReport cmd_eval(const Model& model, std::span<const SkeletonSequence> data,
                           const std::optional<CorruptionSpec>& corruption = std::nullopt) {
  EvalReport r;
  r.num_classes = model.config.num_classes;
  if (corruption && corruption->kind != CorruptionKind::none) {
    for (const auto& s : data) validate(*corruption, s.joints());
    const auto noisy = corrupt_all(data, *corruption);
    r.result = evaluate(model, noisy);
  } else {
    r.result = evaluate(model, data);
  }
  return r;
}

/// CSV `metric,value`.
inline std::string eval_report_to_csv(const EvalReport& r) {
  std::string out = "metric,value\n";
  out += "count," + std::to_string(r.result.count) + "\n";
  out += "loss," + format_double(r.result.loss) + "\n";
  out += "top1," + format_double(r.result.top1) + "\n";
  if (r.has_top5()) out += "top5," + format_double(r.result.top5) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// robustness
// ---------------------------------------------------------------------------

struct RobustnessCondition {
  CorruptionKind kind = CorruptionKind::none;
  double level = 0.0;  // rotation bound (rad) or nominal joint count on a 25-joint skeleton
  CorruptionSpec spec;
};

/// Joint count for a J-joint skeleton matching `nominal` joints out of 25.
inline std::size_t scaled_joint_count(std::size_t nominal, std::size_t joints) {
  if (joints == kNtuJoints) return nominal;
  const auto n = round_half_up(static_cast<double>(nominal) * static_cast<double>(joints) / 25.0);
  return std::clamp<std::size_t>(n, 1, joints);
}

/// Clean row plus rotation 0.1/0.2/0.3 rad, remove 1/10/15 joints in 10 % of
/// frames, and N(0, 1) disturbance of 1/10/25 joints in 1 % of frames.
inline std::vector<RobustnessCondition> robustness_grid(std::size_t joints, std::uint64_t seed) {
  std::vector<RobustnessCondition> grid;
  grid.push_back({CorruptionKind::none, 0.0, {}});
  for (double b : {0.1, 0.2, 0.3}) {
    CorruptionSpec s;
    s.kind = CorruptionKind::rotation;
    s.rotation_bound = b;
    grid.push_back({s.kind, b, s});
  }
  for (std::size_t n : {1, 10, 15}) {
    CorruptionSpec s;
    s.kind = CorruptionKind::remove_joints;
    s.affected_frame_fraction = 0.1;
    s.joints_per_frame = scaled_joint_count(n, joints);
    grid.push_back({s.kind, static_cast<double>(n), s});
  }
  for (std::size_t n : {1, 10, 25}) {
    CorruptionSpec s;
    s.kind = CorruptionKind::disturb_joints;
    s.affected_frame_fraction = 0.01;
    s.joints_per_frame = scaled_joint_count(n, joints);
    s.noise_mean = 0.0;
    s.noise_std = 1.0;
    grid.push_back({s.kind, static_cast<double>(n), s});
  }
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i].spec.seed = mix_seed(seed, 0xD000 + i);
  return grid;
}

struct RobustnessRow {
  std::string model;
  RobustnessCondition condition;
  double accuracy = 0.0;
};

struct RobustnessReport {
  std::vector<std::string> models;
  std::vector<RobustnessCondition> grid;
  std::vector<RobustnessRow> rows;  // model-major, grid order

  double accuracy(std::size_t model, std::size_t condition) const { return rows[model * grid.size() + condition].accuracy; }
};

/// Every model sees the same corrupted copies of `data` for each condition.
inline RobustnessReport cmd_robustness(std::span<const std::pair<std::string, Model>> models,
                                       std::span<const SkeletonSequence> data, std::uint64_t seed) {
  RobustnessReport rep;
  if (data.empty()) return rep;
  rep.grid = robustness_grid(data.front().joints(), seed);
  for (const auto& [name, model] : models) rep.models.push_back(name);
  std::vector<std::vector<SkeletonSequence>> corrupted;
  for (const auto& c : rep.grid)
    corrupted.push_back(c.kind == CorruptionKind::none ? std::vector<SkeletonSequence>(data.begin(), data.end())
                                                       : corrupt_all(data, c.spec));
  for (const auto& [name, model] : models)
    for (std::size_t i = 0; i < rep.grid.size(); ++i)
      rep.rows.push_back({name, rep.grid[i], evaluate(model, corrupted[i]).top1});
  return rep;
}

inline std::string condition_label(const RobustnessCondition& c) {
  switch (c.kind) {
    case CorruptionKind::none: return "clean";
    case CorruptionKind::rotation: return "rotation [-" + format_double(c.level) + " rad, " + format_double(c.level) + " rad]";
    case CorruptionKind::remove_joints:
      return "remove " + std::to_string(c.spec.joints_per_frame) + " joints in " + format_double(c.spec.affected_frame_fraction * 100) +
             "% frames";
    case CorruptionKind::disturb_joints:
      return "disturb " + std::to_string(c.spec.joints_per_frame) + " joints in " + format_double(c.spec.affected_frame_fraction * 100) +
             "% frames";
  }
  return "";
}

/// Long form: `model,kind,level,joints_per_frame,frame_fraction,accuracy`.
inline std::string robustness_to_csv(const RobustnessReport& rep) {
  std::string out = "model,kind,level,joints_per_frame,frame_fraction,accuracy\n";
  for (const auto& r : rep.rows) {
    const auto& c = r.condition;
    out += r.model + "," + to_string(c.kind) + "," + format_double(c.level) + "," + std::to_string(c.spec.joints_per_frame) +
           "," + format_double(c.spec.affected_frame_fraction) + "," + format_double(r.accuracy) + "\n";
  }
  return out;
}

/// Wide form: one row per condition, one accuracy column per model.
inline std::string robustness_table_csv(const RobustnessReport& rep) {
  std::string out = "condition";
  for (const auto& m : rep.models) out += "," + m;
  out += "\n";
  for (std::size_t i = 0; i < rep.grid.size(); ++i) {
    out += "\"" + condition_label(rep.grid[i]) + "\"";
    for (std::size_t m = 0; m < rep.models.size(); ++m) out += "," + format_double(rep.accuracy(m, i));
    out += "\n";
  }
  return out;
}

/// Accuracies clean -> level 1 -> level 2 -> level 3 for one corruption kind.
inline std::vector<double> kind_curve(const RobustnessReport& rep, std::size_t model, CorruptionKind kind) {
  std::vector<double> out{rep.accuracy(model, 0)};
  for (std::size_t i = 0; i < rep.grid.size(); ++i)
    if (rep.grid[i].kind == kind) out.push_back(rep.accuracy(model, i));
  return out;
}

/// Non-increasing, except for at most `allowed` rises of at most `slack` each.
inline bool non_increasing(std::span<const double> v, double slack = 0.01, std::size_t allowed = 1) {
  std::size_t rises = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] <= v[i - 1]) continue;
    if (v[i] - v[i - 1] > slack + 1e-12) return false;
    ++rises;
  }
  return rises <= allowed;
}

/// `model,kind,monotone,clean,max_level,drop`.
inline std::string robustness_summary_csv(const RobustnessReport& rep) {
  std::string out = "model,kind,monotone,clean,max_level,drop\n";
  for (std::size_t m = 0; m < rep.models.size(); ++m)
    for (auto kind : {CorruptionKind::rotation, CorruptionKind::remove_joints, CorruptionKind::disturb_joints}) {
      const auto curve = kind_curve(rep, m, kind);
      out += rep.models[m] + "," + to_string(kind) + "," + (non_increasing(curve) ? "true" : "false") + "," +
             format_double(curve.front()) + "," + format_double(curve.back()) + "," +
             format_double(curve.front() - curve.back()) + "\n";
    }
  return out;
}

// ---------------------------------------------------------------------------
// export-views
// ---------------------------------------------------------------------------

/// Scatter of the time-averaged joints (with bones) and the anchors on the
/// x-y, x-z and y-z planes.
inline std::string views_svg(std::span<const Vec3> xbar, std::span<const Bone> bones, const ViewSet& views) {
  constexpr double kPanel = 260.0, kPad = 20.0;
  const std::array<std::array<int, 2>, 3> planes{{{0, 1}, {0, 2}, {1, 2}}};
  const std::array<const char*, 3> names{"x-y", "x-z", "y-z"};
  const std::array<const char*, 6> colors{"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::vector<Vec3> all(xbar.begin(), xbar.end());
  for (const auto& p : views.pairs) {
    all.push_back(p.a);
    all.push_back(p.b);
  }
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(3 * kPanel) + "\" height=\"" +
         num(kPanel + kPad) + "\">\n";
  for (std::size_t pi = 0; pi < 3; ++pi) {
    const int u = planes[pi][0], v = planes[pi][1];
    double lo_u = 1e300, hi_u = -1e300, lo_v = 1e300, hi_v = -1e300;
    for (const auto& p : all) {
      lo_u = std::min(lo_u, p[u]);
      hi_u = std::max(hi_u, p[u]);
      lo_v = std::min(lo_v, p[v]);
      hi_v = std::max(hi_v, p[v]);
    }
    const double span = std::max({hi_u - lo_u, hi_v - lo_v, 1e-9});
    const double ox = static_cast<double>(pi) * kPanel;
    auto px = [&](const Vec3& p) { return ox + kPad + (p[u] - lo_u) / span * (kPanel - 2 * kPad); };
    auto py = [&](const Vec3& p) { return kPanel - kPad - (p[v] - lo_v) / span * (kPanel - 2 * kPad) + kPad; };
    svg += "<g>\n<rect x=\"" + num(ox + 2) + "\" y=\"2\" width=\"" + num(kPanel - 4) + "\" height=\"" +
           num(kPanel + kPad - 4) + "\" fill=\"none\" stroke=\"#bbbbbb\"/>\n";
    svg += "<text x=\"" + num(ox + 8) + "\" y=\"16\" font-size=\"12\">" + names[pi] + "</text>\n";
    for (const auto& b : bones) {
      if (b.parent >= xbar.size() || b.child >= xbar.size()) continue;
      svg += "<line x1=\"" + num(px(xbar[b.parent])) + "\" y1=\"" + num(py(xbar[b.parent])) + "\" x2=\"" +
             num(px(xbar[b.child])) + "\" y2=\"" + num(py(xbar[b.child])) + "\" stroke=\"#888888\"/>\n";
    }
    for (const auto& p : xbar)
      svg += "<circle cx=\"" + num(px(p)) + "\" cy=\"" + num(py(p)) + "\" r=\"3\" fill=\"#333333\"/>\n";
    for (std::size_t k = 0; k < views.pairs.size(); ++k) {
      const auto* color = colors[k % colors.size()];
      const auto& pr = views.pairs[k];
      svg += "<line x1=\"" + num(px(pr.a)) + "\" y1=\"" + num(py(pr.a)) + "\" x2=\"" + num(px(pr.b)) + "\" y2=\"" +
             num(py(pr.b)) + "\" stroke=\"" + color + "\" stroke-dasharray=\"3,3\"/>\n";
      for (const auto* q : {&pr.a, &pr.b})
        svg += "<rect x=\"" + num(px(*q) - 3) + "\" y=\"" + num(py(*q) - 3) + "\" width=\"6\" height=\"6\" fill=\"" +
               color + "\"/>\n";
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

struct ExportedViews {
  ViewSet views;
  AngleTensor angles;
};

/// Writes anchors.csv, provenance.csv, angles.csv and views.svg for one
/// sequence, in the coordinate frame the model sees.
inline ExportedViews cmd_export_views(const Model& model, const SkeletonSequence& raw, const fs::path& out, bool force) {
  if (!model.config.uses(StreamKind::angles)) throw ModelError("checkpoint has no angle stream");
  if (raw.joints() != model.config.joints)
    throw ModelError("model expects J = " + std::to_string(model.config.joints) + ", sequence has " +
                     std::to_string(raw.joints()));
  const auto seq = model_input(model.config, raw);
  ExportedViews ex;
  ex.views = model_views(model, seq);
  ex.angles = view_translate(seq, ex.views.pairs, model.config.eps);
  prepare_output_dir(out, force);
  write_file(out / "anchors.csv", anchors_to_csv(ex.views));
  write_file(out / "provenance.csv", provenance_to_csv(ex.views));
  write_file(out / "angles.csv", angles_to_csv(ex.angles));
  const auto xbar = time_average(seq);
  write_file(out / "views.svg", views_svg(xbar, seq.bones(), ex.views));
  return ex;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

enum class AblationAxis { heads, fusion, location };

inline std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::heads: return "heads";
    case AblationAxis::fusion: return "fusion";
    case AblationAxis::location: return "location";
  }
  return "";
}

inline AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "heads") return AblationAxis::heads;
  if (s == "fusion") return AblationAxis::fusion;
  if (s == "location") return AblationAxis::location;
  throw SpecError("unknown ablation axis '" + s + "'");
}

inline constexpr std::array<std::size_t, 6> kAblationHeads{1, 3, 5, 7, 10, 15};

struct AblationArm {
  std::string name;
  ExperimentConfig config;
};

/// One arm per axis value, all sharing the base seed. The heads axis adds the
/// fixed-7 joint-pair baseline; the location axis covers fixed_pairs and the
/// three anchor modes. Every arm keeps the angle stream enabled.
inline std::vector<AblationArm> ablation_arms(const ExperimentConfig& base, AblationAxis axis) {
  std::vector<AblationArm> arms;
  auto with_angles = [&] {
    ExperimentConfig c = base;
    c.model.streams[static_cast<std::size_t>(StreamKind::angles)] = true;
    c.model.view_source = ViewSource::sap;
    return c;
  };
  auto fixed = [&] {
    ExperimentConfig c = with_angles();
    c.model.view_source = ViewSource::fixed_pairs;
    return c;
  };
  switch (axis) {
    case AblationAxis::heads:
      for (auto m : kAblationHeads) {
        auto c = with_angles();
        c.model.sap.pairs = m;
        arms.push_back({"heads_" + std::to_string(m), c});
      }
      arms.push_back({"fixed_" + std::to_string(base.model.fixed_pairs.size()), fixed()});
      break;
    case AblationAxis::fusion:
      for (auto f : {FusionStrategy::sum, FusionStrategy::max, FusionStrategy::concatenate, FusionStrategy::attention}) {
        auto c = with_angles();
        c.model.fusion = f;
        arms.push_back({to_string(f), c});
      }
      break;
    case AblationAxis::location:
      arms.push_back({"fixed_pairs", fixed()});
      for (auto m : {AnchorMode::on_joints, AnchorMode::within_body, AnchorMode::around_body}) {
        auto c = with_angles();
        c.model.sap.mode = m;
        c.model.sap.alpha = 0.0;  // mode default
        arms.push_back({to_string(m), c});
      }
      break;
  }
  return arms;
}

struct AblationRow {
  std::string axis, arm;
  std::size_t views = 0;
  std::string fusion, location;
  EvalResult result;
};

/// CSV `axis,arm,views,fusion,location,loss,top1`.
inline std::string ablation_to_csv(std::span<const AblationRow> rows) {
  std::string out = "axis,arm,views,fusion,location,loss,top1\n";
  for (const auto& r : rows)
    out += r.axis + "," + r.arm + "," + std::to_string(r.views) + "," + r.fusion + "," + r.location + "," +
           format_double(r.result.loss) + "," + format_double(r.result.top1) + "\n";
  return out;
}

/// Trains every arm of `axis` on the shared split and writes
/// `ablation_<axis>.csv` plus one sub-directory per arm (config, metrics).
inline std::vector<AblationRow> cmd_ablate(const ExperimentConfig& base, AblationAxis axis, const fs::path& out, bool force,
                                           std::ostream* log = nullptr) {
  const auto ds = prepare_dataset(base);
  prepare_output_dir(out, force);
  write_resolved_config(out, base);
  std::vector<AblationRow> rows;
  for (const auto& arm : ablation_arms(base, axis)) {
    if (log) *log << "ablate " << to_string(axis) << " arm " << arm.name << "\n";
    const auto dir = out / arm.name;
    prepare_output_dir(dir, true);
    write_resolved_config(dir, arm.config);
    TrainConfig tc = arm.config.train;
    tc.seed = arm.config.seed;
    auto result = train(initial_model(arm.config, ds), ds.train, ds.test, tc);
    write_file(dir / "metrics.csv", metrics_to_csv(result.metrics));
    const auto& mc = arm.config.model;
    AblationRow row;
    row.axis = to_string(axis);
    row.arm = arm.name;
    row.views = mc.views();
    row.fusion = to_string(mc.fusion);
    row.location = mc.view_source == ViewSource::fixed_pairs ? "fixed_pairs" : to_string(mc.sap.mode);
    row.result = evaluate(result.model, ds.test);
    rows.push_back(row);
    if (log) *log << "  top1 " << format_double(row.result.top1) << "\n";
  }
  write_file(out / ("ablation_" + to_string(axis) + ".csv"), ablation_to_csv(rows));
  return rows;
}

}  // namespace sapview
