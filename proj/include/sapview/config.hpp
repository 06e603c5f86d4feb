#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "sapview/corruption.hpp"
#include "sapview/model.hpp"
#include "sapview/skeleton.hpp"
#include "sapview/synthetic.hpp"
#include "sapview/train.hpp"

namespace sapview {

// ---------------------------------------------------------------------------
// Sectioned key-value text
// ---------------------------------------------------------------------------

/// `[section]` headers followed by `key = value` lines; `#` starts a comment
/// line. Sections and keys keep their insertion order when written.
class KvDocument {
 public:
  struct Entry {
    std::string key, value;
    std::size_t line = 0;
  };
  struct Section {
    std::string name;
    std::vector<Entry> entries;
    std::size_t line = 0;
  };

  Section& section(const std::string& name) {
    for (auto& s : sections_)
      if (s.name == name) return s;
    sections_.push_back({name, {}, 0});
    return sections_.back();
  }
  const Section* find(const std::string& name) const {
    for (const auto& s : sections_)
      if (s.name == name) return &s;
    return nullptr;
  }
  void set(const std::string& sec, const std::string& key, std::string value) {
    section(sec).entries.push_back({key, std::move(value), 0});
  }
  const std::vector<Section>& sections() const noexcept { return sections_; }

  std::string serialize(const std::string& header) const {
    std::string out = header + "\n";
    for (const auto& s : sections_) {
      out += "\n[" + s.name + "]\n";
      for (const auto& e : s.entries) out += e.key + " = " + e.value + "\n";
    }
    return out;
  }

  /// Parses `text`, whose first non-comment line must equal `header`.
  static KvDocument parse(const std::string& text, const std::string& header) {
    KvDocument doc;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    bool seen_header = false;
    Section* current = nullptr;
    while (std::getline(in, line)) {
      ++n;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto last = line.find_last_not_of(" \t");
      const std::string body = line.substr(first, last - first + 1);
      if (!seen_header) {
        if (body != header) throw ParseError("expected header '" + header + "'", n);
        seen_header = true;
        continue;
      }
      if (body.front() == '[') {
        if (body.back() != ']' || body.size() < 3) throw ParseError("malformed section header", n);
        const auto name = body.substr(1, body.size() - 2);
        if (doc.find(name)) throw ParseError("duplicate section [" + name + "]", n);
        current = &doc.section(name);
        current->line = n;
        continue;
      }
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw ParseError("expected 'key = value'", n);
      if (!current) throw ParseError("key outside of any section", n);
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t");
        return s.substr(a, b - a + 1);
      };
      Entry e{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), n};
      if (e.key.empty()) throw ParseError("empty key", n);
      for (const auto& other : current->entries)
        if (other.key == e.key) throw ParseError("duplicate key '" + e.key + "'", n);
      current->entries.push_back(std::move(e));
    }
    if (!seen_header) throw ParseError("missing header '" + header + "'", n ? n : 1);
    return doc;
  }

 private:
  std::vector<Section> sections_;
};

/// Typed reads from one section; every key must be consumed by `finish`.
class KvReader {
 public:
  KvReader(const KvDocument& doc, const std::string& section) : name_(section), sec_(doc.find(section)) {}

  bool present() const noexcept { return sec_ != nullptr; }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (!sec_) return std::nullopt;
    for (const auto& e : sec_->entries)
      if (e.key == key) {
        line_ = e.line;
        return e.value;
      }
    return std::nullopt;
  }

  void read(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }
  void read(const std::string& key, double& out) {
    if (auto v = raw(key))
      if (!parse_double(*v, out)) fail(key, "a number");
  }
  template <class Int>
    requires(std::is_unsigned_v<Int> && !std::is_same_v<Int, bool>)
  void read(const std::string& key, Int& out) {
    if (auto v = raw(key))
      if (!parse_int(*v, out)) fail(key, "a non-negative integer");
  }
  void read(const std::string& key, bool& out) {
    if (auto v = raw(key)) {
      if (*v == "true") out = true;
      else if (*v == "false") out = false;
      else fail(key, "true or false");
    }
  }
  void read(const std::string& key, std::vector<std::size_t>& out) {
    if (auto v = raw(key)) {
      out.clear();
      for (const auto& item : split_list(*v)) {
        std::size_t x = 0;
        if (!parse_int(item, x)) fail(key, "a comma-separated list of integers");
        out.push_back(x);
      }
    }
  }
  template <class Enum, class Conv>
  void read_enum(const std::string& key, Enum& out, Conv from_string) {
    if (auto v = raw(key)) {
      try {
        out = from_string(*v);
      } catch (const SpecError& e) {
        throw ParseError(e.what(), line_);
      }
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& expected) const {
    throw ParseError("[" + name_ + "] " + key + ": expected " + expected, line_);
  }

  void finish() const {
    if (!sec_) return;
    for (const auto& e : sec_->entries)
      if (!used_.count(e.key)) throw ParseError("unknown key '" + e.key + "' in [" + name_ + "]", e.line);
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
      const auto comma = s.find(',', start);
      auto item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      const auto a = item.find_first_not_of(" \t");
      const auto b = item.find_last_not_of(" \t");
      out.push_back(a == std::string::npos ? std::string() : item.substr(a, b - a + 1));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }

  std::size_t line() const noexcept { return line_; }

 private:
  std::string name_;
  const KvDocument::Section* sec_;
  std::set<std::string> used_;
  std::size_t line_ = 0;
};

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

inline std::string bool_string(bool b) { return b ? "true" : "false"; }

// ---------------------------------------------------------------------------
// Model section (shared by experiment configs and checkpoints)
// ---------------------------------------------------------------------------

inline std::string streams_to_string(const std::array<bool, 3>& streams) {
  std::string out;
  for (std::size_t s = 0; s < 3; ++s)
    if (streams[s]) out += (out.empty() ? "" : ",") + std::string(kStreamNames[s]);
  return out;
}

inline std::array<bool, 3> streams_from_string(const std::string& text) {
  std::array<bool, 3> out{false, false, false};
  for (const auto& item : KvReader::split_list(text)) {
    bool found = false;
    for (std::size_t s = 0; s < 3; ++s)
      if (item == kStreamNames[s]) out[s] = found = true;
    if (!found) throw SpecError("unknown stream '" + item + "'");
  }
  return out;
}

/// `a-b` joint pairs, comma separated.
inline std::string pairs_to_string(const std::vector<JointPair>& pairs) {
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    out += (i ? "," : "") + std::to_string(pairs[i].first) + "-" + std::to_string(pairs[i].second);
  return out;
}

inline std::vector<JointPair> pairs_from_string(const std::string& text) {
  std::vector<JointPair> out;
  for (const auto& item : KvReader::split_list(text)) {
    const auto dash = item.find('-');
    JointPair p;
    if (dash == std::string::npos || !parse_int(std::string_view(item).substr(0, dash), p.first) ||
        !parse_int(std::string_view(item).substr(dash + 1), p.second))
      throw SpecError("malformed joint pair '" + item + "'");
    out.push_back(p);
  }
  return out;
}

inline std::string bones_to_string(const std::vector<Bone>& bones) {
  std::string out;
  for (std::size_t i = 0; i < bones.size(); ++i)
    out += (i ? "," : "") + std::to_string(bones[i].parent) + ":" + std::to_string(bones[i].child);
  return out;
}

inline std::vector<Bone> bones_from_string(const std::string& text) {
  std::vector<Bone> out;
  for (const auto& item : KvReader::split_list(text)) {
    const auto colon = item.find(':');
    Bone b;
    if (colon == std::string::npos || !parse_int(std::string_view(item).substr(0, colon), b.parent) ||
        !parse_int(std::string_view(item).substr(colon + 1), b.child))
      throw SpecError("malformed bone '" + item + "'");
    out.push_back(b);
  }
  return out;
}

/// Writes the architecture keys. Dataset-derived fields (joints, classes,
/// bones) are written only when `with_shape` is set.
inline void write_model_section(KvDocument& doc, const std::string& sec, const ModelConfig& m, bool with_shape) {
  if (with_shape) {
    doc.set(sec, "joints", std::to_string(m.joints));
    doc.set(sec, "num_classes", std::to_string(m.num_classes));
    doc.set(sec, "bones", bones_to_string(m.bones));
  }
  doc.set(sec, "streams", streams_to_string(m.streams));
  doc.set(sec, "view_source", to_string(m.view_source));
  doc.set(sec, "fixed_pairs", pairs_to_string(m.fixed_pairs));
  doc.set(sec, "pairs", std::to_string(m.sap.pairs));
  doc.set(sec, "dim", std::to_string(m.sap.dim));
  doc.set(sec, "mode", to_string(m.sap.mode));
  doc.set(sec, "alpha", format_double(m.sap.alpha));
  doc.set(sec, "alpha_snap", format_double(m.sap.alpha_snap));
  doc.set(sec, "fusion", to_string(m.fusion));
  doc.set(sec, "widths", join_sizes(m.widths));
  doc.set(sec, "aggregation", to_string(m.aggregation));
  doc.set(sec, "ensemble_weights", format_double(m.ensemble_weights[0]) + "," + format_double(m.ensemble_weights[1]) +
                                       "," + format_double(m.ensemble_weights[2]));
  doc.set(sec, "eps", format_double(m.eps));
  doc.set(sec, "freeze_backbone", bool_string(m.freeze_backbone));
  doc.set(sec, "train_ensemble", bool_string(m.train_ensemble));
  doc.set(sec, "input_norm", bool_string(m.input_norm));
  doc.set(sec, "center_on_root", bool_string(m.center_on_root));
}

inline void read_model_section(KvReader& r, ModelConfig& m, bool with_shape) {
  auto guarded = [&](auto&& fn) {
    try {
      fn();
    } catch (const SpecError& e) {
      throw ParseError(e.what(), r.line());
    }
  };
  if (with_shape) {
    r.read("joints", m.joints);
    r.read("num_classes", m.num_classes);
    if (auto v = r.raw("bones")) guarded([&] { m.bones = bones_from_string(*v); });
  }
  if (auto v = r.raw("streams")) guarded([&] { m.streams = streams_from_string(*v); });
  r.read_enum("view_source", m.view_source, view_source_from_string);
  if (auto v = r.raw("fixed_pairs")) guarded([&] { m.fixed_pairs = pairs_from_string(*v); });
  r.read("pairs", m.sap.pairs);
  r.read("dim", m.sap.dim);
  r.read_enum("mode", m.sap.mode, anchor_mode_from_string);
  r.read("alpha", m.sap.alpha);
  r.read("alpha_snap", m.sap.alpha_snap);
  r.read_enum("fusion", m.fusion, fusion_from_string);
  r.read("widths", m.widths);
  r.read_enum("aggregation", m.aggregation, aggregation_from_string);
  if (auto v = r.raw("ensemble_weights")) {
    const auto items = KvReader::split_list(*v);
    if (items.size() != 3) r.fail("ensemble_weights", "three comma-separated numbers");
    for (std::size_t s = 0; s < 3; ++s)
      if (!parse_double(items[s], m.ensemble_weights[s])) r.fail("ensemble_weights", "three numbers");
  }
  r.read("eps", m.eps);
  r.read("freeze_backbone", m.freeze_backbone);
  r.read("train_ensemble", m.train_ensemble);
  r.read("input_norm", m.input_norm);
  r.read("center_on_root", m.center_on_root);
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

inline constexpr const char* kConfigHeader = "SAPCFG1";

enum class DatasetSource { synthetic, manifest };

inline std::string to_string(DatasetSource s) { return s == DatasetSource::synthetic ? "synthetic" : "manifest"; }
inline DatasetSource dataset_source_from_string(const std::string& s) {
  if (s == "synthetic") return DatasetSource::synthetic;
  if (s == "manifest") return DatasetSource::manifest;
  throw SpecError("unknown dataset source '" + s + "'");
}

/// Fixed joint pairs for the fixed-view baseline. On the NTU layout: head-hips,
/// both hands, feet, elbows, knees, shoulders and wrists. On the synthetic
/// template (no shoulders or wrists) the last two are chest-right hand and
/// chest-left hand.
inline std::vector<JointPair> default_fixed_pairs(std::size_t joints) {
  if (joints == kNtuJoints) return {{3, 0}, {7, 11}, {15, 19}, {5, 9}, {13, 17}, {4, 8}, {6, 10}};
  return {{2, 0}, {6, 4}, {10, 8}, {5, 3}, {9, 7}, {1, 4}, {1, 6}};
}

struct DatasetConfig {
  DatasetSource source = DatasetSource::synthetic;
  SyntheticDatasetSpec synthetic;
  std::string manifest;
  std::size_t frames = 64;  // manifest sequences are resampled to this length
  double holdout = 0.25;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model = [] {
    ModelConfig m;
    m.fixed_pairs = default_fixed_pairs(SyntheticDatasetSpec{}.joints);
    return m;
  }();  // joints / num_classes / bones are filled from the data
  TrainConfig train = [] {
    TrainConfig t;
    t.seed = 42;  // mirrors `seed`
    return t;
  }();
  CorruptionSpec corruption;
  bool corrupt_train = false;
  std::uint64_t seed = 42;
  std::string output_dir = "out";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline std::string serialize_config(const ExperimentConfig& c) {
  KvDocument doc;
  const auto& d = c.dataset;
  doc.set("dataset", "source", to_string(d.source));
  doc.set("dataset", "num_classes", std::to_string(d.synthetic.num_classes));
  doc.set("dataset", "sequences_per_class", std::to_string(d.synthetic.sequences_per_class));
  doc.set("dataset", "frames", std::to_string(d.synthetic.frames));
  doc.set("dataset", "joints", std::to_string(d.synthetic.joints));
  doc.set("dataset", "view_ambiguity", format_double(d.synthetic.view_ambiguity));
  doc.set("dataset", "seed", std::to_string(d.synthetic.seed));
  doc.set("dataset", "manifest", d.manifest);
  doc.set("dataset", "resample_frames", std::to_string(d.frames));
  doc.set("dataset", "holdout", format_double(d.holdout));

  write_model_section(doc, "model", c.model, false);

  const auto& t = c.train;
  doc.set("optimizer", "lr", format_double(t.sgd.lr));
  doc.set("optimizer", "momentum", format_double(t.sgd.momentum));
  doc.set("optimizer", "weight_decay", format_double(t.sgd.weight_decay));
  doc.set("optimizer", "gamma", format_double(t.sgd.gamma));
  doc.set("optimizer", "milestones", join_sizes(t.sgd.milestones));
  doc.set("optimizer", "epochs", std::to_string(t.epochs));
  doc.set("optimizer", "batch", std::to_string(t.batch));

  const auto& k = c.corruption;
  doc.set("corruption", "kind", to_string(k.kind));
  doc.set("corruption", "rotation_bound", format_double(k.rotation_bound));
  doc.set("corruption", "affected_frame_fraction", format_double(k.affected_frame_fraction));
  doc.set("corruption", "joints_per_frame", std::to_string(k.joints_per_frame));
  doc.set("corruption", "noise_mean", format_double(k.noise_mean));
  doc.set("corruption", "noise_std", format_double(k.noise_std));
  doc.set("corruption", "seed", std::to_string(k.seed));
  doc.set("corruption", "apply_to_train", bool_string(c.corrupt_train));

  doc.set("run", "seed", std::to_string(c.seed));
  doc.set("run", "output_dir", c.output_dir);
  return doc.serialize(kConfigHeader);
}

/// Missing keys keep their defaults; unknown keys or sections are errors.
inline ExperimentConfig parse_config(const std::string& text) {
  const auto doc = KvDocument::parse(text, kConfigHeader);
  for (const auto& s : doc.sections())
    if (s.name != "dataset" && s.name != "model" && s.name != "optimizer" && s.name != "corruption" && s.name != "run")
      throw ParseError("unknown section [" + s.name + "]", s.line);

  ExperimentConfig c;
  bool pairs_given = false;
  {
    KvReader r(doc, "dataset");
    auto& d = c.dataset;
    r.read_enum("source", d.source, dataset_source_from_string);
    r.read("num_classes", d.synthetic.num_classes);
    r.read("sequences_per_class", d.synthetic.sequences_per_class);
    r.read("frames", d.synthetic.frames);
    r.read("joints", d.synthetic.joints);
    r.read("view_ambiguity", d.synthetic.view_ambiguity);
    r.read("seed", d.synthetic.seed);
    r.read("manifest", d.manifest);
    r.read("resample_frames", d.frames);
    r.read("holdout", d.holdout);
    r.finish();
  }
  {
    KvReader r(doc, "model");
    if (r.present()) {
      const auto* sec = doc.find("model");
      for (const auto& e : sec->entries) pairs_given = pairs_given || e.key == "fixed_pairs";
    }
    read_model_section(r, c.model, false);
    r.finish();
  }
  if (!pairs_given)
    c.model.fixed_pairs =
        default_fixed_pairs(c.dataset.source == DatasetSource::synthetic ? c.dataset.synthetic.joints : kNtuJoints);
  {
    KvReader r(doc, "optimizer");
    r.read("lr", c.train.sgd.lr);
    r.read("momentum", c.train.sgd.momentum);
    r.read("weight_decay", c.train.sgd.weight_decay);
    r.read("gamma", c.train.sgd.gamma);
    r.read("milestones", c.train.sgd.milestones);
    r.read("epochs", c.train.epochs);
    r.read("batch", c.train.batch);
    r.finish();
  }
  {
    KvReader r(doc, "corruption");
    r.read_enum("kind", c.corruption.kind, corruption_kind_from_string);
    r.read("rotation_bound", c.corruption.rotation_bound);
    r.read("affected_frame_fraction", c.corruption.affected_frame_fraction);
    r.read("joints_per_frame", c.corruption.joints_per_frame);
    r.read("noise_mean", c.corruption.noise_mean);
    r.read("noise_std", c.corruption.noise_std);
    r.read("seed", c.corruption.seed);
    r.read("apply_to_train", c.corrupt_train);
    r.finish();
  }
  {
    KvReader r(doc, "run");
    r.read("seed", c.seed);
    r.read("output_dir", c.output_dir);
    r.finish();
  }
  c.train.seed = c.seed;
  return c;
}

}  // namespace sapview
