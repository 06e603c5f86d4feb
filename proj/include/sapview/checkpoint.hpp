#pragma once

#include <string>
#include <vector>

#include "sapview/config.hpp"
#include "sapview/model.hpp"

namespace sapview {

inline constexpr const char* kCheckpointHeader = "SAPCKPT1";

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

inline std::vector<double> split_doubles(const std::string& s, std::size_t line) {
  std::vector<double> out;
  for (const auto& tok : split_ws(s)) {
    double x = 0.0;
    if (!parse_double(tok, x)) throw ParseError("malformed number '" + std::string(tok) + "'", line);
    out.push_back(x);
  }
  return out;
}

}  // namespace detail

/// Text checkpoint: the model architecture (`[model]`), frozen input
/// normalization (`[norm]`) and one `name = d0xd1x...: values` line per
/// parameter tensor (`[tensors]`). Numbers use the shortest round-trip form,
/// so save/load is exact.
inline std::string serialize_checkpoint(const Model& model) {
  KvDocument doc;
  write_model_section(doc, "model", model.config, true);
  for (std::size_t s = 0; s < 3; ++s) {
    if (model.norms[s].empty()) continue;
    doc.set("norm", std::string(kStreamNames[s]) + ".mean", detail::join_doubles(model.norms[s].mean));
    doc.set("norm", std::string(kStreamNames[s]) + ".scale", detail::join_doubles(model.norms[s].scale));
  }
  Model copy = model;
  copy.visit([&](const std::string& name, Tensor& t, bool) {
    doc.set("tensors", name, t.shape_string() + ": " + detail::join_doubles(t.data));
  });
  return doc.serialize(kCheckpointHeader);
}

inline Model parse_checkpoint(const std::string& text) {
  const auto doc = KvDocument::parse(text, kCheckpointHeader);
  ModelConfig cfg;
  {
    KvReader r(doc, "model");
    if (!r.present()) throw ParseError("checkpoint has no [model] section", 0);
    read_model_section(r, cfg, true);
    r.finish();
  }
  Model model;
  try {
    model = Model::init(cfg, 0);
  } catch (const SpecError& e) {
    throw ParseError(std::string("invalid model in checkpoint: ") + e.what(), 0);
  }

  if (const auto* sec = doc.find("norm")) {
    for (const auto& e : sec->entries) {
      const auto dot = e.key.rfind('.');
      const auto stream = e.key.substr(0, dot == std::string::npos ? 0 : dot);
      const auto field = dot == std::string::npos ? std::string() : e.key.substr(dot + 1);
      std::size_t s = 3;
      for (std::size_t k = 0; k < 3; ++k)
        if (stream == kStreamNames[k]) s = k;
      if (s == 3 || (field != "mean" && field != "scale") || !cfg.streams[s])
        throw ParseError("unexpected normalization entry '" + e.key + "'", e.line);
      (field == "mean" ? model.norms[s].mean : model.norms[s].scale) = detail::split_doubles(e.value, e.line);
    }
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& n = model.norms[s];
      if (n.mean.size() != n.scale.size() || (!n.empty() && n.mean.size() != model.nets[s].in_channels))
        throw ParseError(std::string("normalization for stream ") + kStreamNames[s] + " has the wrong size", sec->line);
    }
  }

  const auto* tensors = doc.find("tensors");
  if (!tensors) throw ParseError("checkpoint has no [tensors] section", 0);
  std::vector<const KvDocument::Entry*> entries;
  for (const auto& e : tensors->entries) entries.push_back(&e);
  std::size_t matched = 0;
  model.visit([&](const std::string& name, Tensor& t, bool) {
    const KvDocument::Entry* e = nullptr;
    for (const auto* cand : entries)
      if (cand->key == name) e = cand;
    if (!e) throw ParseError("checkpoint is missing tensor '" + name + "'", tensors->line);
    ++matched;
    const auto colon = e->value.find(':');
    if (colon == std::string::npos) throw ParseError("tensor line needs 'shape: values'", e->line);
    std::vector<std::size_t> shape;
    const auto dims = e->value.substr(0, colon);
    std::size_t start = 0;
    while (start <= dims.size()) {
      const auto x = dims.find('x', start);
      const auto tok = dims.substr(start, x == std::string::npos ? std::string::npos : x - start);
      std::size_t d = 0;
      if (!parse_int(tok, d)) throw ParseError("malformed shape '" + dims + "'", e->line);
      shape.push_back(d);
      if (x == std::string::npos) break;
      start = x + 1;
    }
    if (shape != t.shape)
      throw ModelError("tensor '" + name + "' has shape " + dims + ", architecture expects " + t.shape_string());
    auto values = detail::split_doubles(e->value.substr(colon + 1), e->line);
    if (values.size() != t.size()) throw ParseError("tensor '" + name + "' has the wrong number of values", e->line);
    t.data = std::move(values);
  });
  if (matched != entries.size()) throw ParseError("checkpoint has tensors the architecture does not use", tensors->line);
  return model;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  write_file(path, serialize_checkpoint(model));
}

inline Model load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace sapview
