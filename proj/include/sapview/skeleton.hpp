#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sapview/core.hpp"

namespace sapview {

struct Bone {
  std::size_t parent = 0;
  std::size_t child = 0;
  friend bool operator==(const Bone&, const Bone&) = default;
};

/// T frames x J joints of 3D coordinates (sensor frame, meters) plus the bone
/// graph, a class label, and a per-entry validity mask. Storage is frame-major.
class SkeletonSequence {
 public:
  SkeletonSequence() = default;

  SkeletonSequence(std::size_t frames, std::size_t joints, std::vector<Bone> bones, int label = 0)
      : frames_(frames),
        joints_(joints),
        coords_(frames * joints),
        valid_(frames * joints, 1),
        bones_(std::move(bones)),
        label_(label) {
    if (frames_ < 1) throw EmptySequence("sequence must have at least one frame");
    if (joints_ < 2) throw SpecError("sequence must have at least two joints");
    for (const auto& b : bones_)
      if (b.parent >= joints_ || b.child >= joints_)
        throw SpecError("bone index out of range");
  }

  std::size_t frames() const noexcept { return frames_; }
  std::size_t joints() const noexcept { return joints_; }
  const std::vector<Bone>& bones() const noexcept { return bones_; }
  int label() const noexcept { return label_; }
  void set_label(int label) noexcept { label_ = label; }

  Vec3& at(std::size_t t, std::size_t j) { return coords_[t * joints_ + j]; }
  const Vec3& at(std::size_t t, std::size_t j) const { return coords_[t * joints_ + j]; }

  bool valid(std::size_t t, std::size_t j) const { return valid_[t * joints_ + j] != 0; }
  void set_valid(std::size_t t, std::size_t j, bool v) { valid_[t * joints_ + j] = v ? 1 : 0; }

  const std::vector<Vec3>& coords() const noexcept { return coords_; }
  std::vector<Vec3>& coords() noexcept { return coords_; }
  const std::vector<std::uint8_t>& mask() const noexcept { return valid_; }

  /// Throws SpecError when a valid entry holds a non-finite coordinate.
  void check_finite() const {
    for (std::size_t k = 0; k < coords_.size(); ++k)
      if (valid_[k] && !is_finite(coords_[k])) throw SpecError("non-finite coordinate in valid joint");
  }

  friend bool operator==(const SkeletonSequence&, const SkeletonSequence&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t joints_ = 0;
  std::vector<Vec3> coords_;
  std::vector<std::uint8_t> valid_;
  std::vector<Bone> bones_;
  int label_ = 0;
};

// ---------------------------------------------------------------------------
// NTU RGB+D template
// ---------------------------------------------------------------------------

inline constexpr std::size_t kNtuJoints = 25;

/// The 24 bones of the Kinect v2 / NTU skeleton as (parent, child), 0-based,
/// rooted at the spine base.
inline std::vector<Bone> ntu_bones() {
  // child -> parent for joints 1..24; joint 0 (spine base) is the root.
  static constexpr std::size_t parent_of[kNtuJoints] = {
      0,  0,  20, 2,  20, 4,  5,  6,  20, 8,  9,  10, 0,
      12, 13, 14, 0,  16, 17, 18, 1,  7,  7,  11, 11};
  std::vector<Bone> bones;
  for (std::size_t c = 1; c < kNtuJoints; ++c) bones.push_back({parent_of[c], c});
  return bones;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  /// Next non-blank line; ParseError at end of input.
  std::string_view next(const char* expecting) {
    while (pos_ < text_.size()) {
      auto end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      auto line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_no_;
      if (!split_ws(line).empty()) return line;
    }
    throw ParseError(std::string("unexpected end of input, expected ") + expecting, line_no_ + 1);
  }

  bool at_end() {
    while (pos_ < text_.size()) {
      auto end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      if (!split_ws(text_.substr(pos_, end - pos_)).empty()) return false;
      pos_ = end + 1;
      ++line_no_;
    }
    return true;
  }

  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

template <class Int>
Int read_count(LineReader& in, const char* what) {
  auto line = in.next(what);
  auto toks = split_ws(line);
  Int v{};
  if (toks.size() != 1 || !parse_int(toks[0], v) || v < 0)
    throw ParseError(std::string("malformed ") + what + " line", in.line_no());
  return v;
}

}  // namespace detail

/// Parses the raw NTU `.skeleton` layout and keeps the first body of every
/// frame. Frames that report zero bodies keep zero coordinates and are masked.
inline SkeletonSequence parse_ntu_skeleton(std::string_view text) {
  detail::LineReader in(text);
  const auto frames = detail::read_count<long>(in, "frame count");
  if (frames == 0) throw EmptySequence("NTU file declares zero frames");

  SkeletonSequence seq(static_cast<std::size_t>(frames), kNtuJoints, ntu_bones());
  for (long t = 0; t < frames; ++t) {
    const auto bodies = detail::read_count<long>(in, "body count");
    if (bodies == 0) {
      for (std::size_t j = 0; j < kNtuJoints; ++j) seq.set_valid(static_cast<std::size_t>(t), j, false);
      continue;
    }
    for (long b = 0; b < bodies; ++b) {
      in.next("body info");
      const auto joints = detail::read_count<long>(in, "joint count");
      if (joints != static_cast<long>(kNtuJoints))
        throw UnsupportedSkeleton("expected 25 joints per body, got " + std::to_string(joints));
      for (std::size_t j = 0; j < kNtuJoints; ++j) {
        auto toks = detail::split_ws(in.next("joint line"));
        Vec3 p;
        if (toks.size() < 3 || !parse_double(toks[0], p.x) || !parse_double(toks[1], p.y) ||
            !parse_double(toks[2], p.z))
          throw ParseError("malformed joint line", in.line_no());
        if (b == 0) seq.at(static_cast<std::size_t>(t), j) = p;
      }
    }
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Native SKL1 format
// ---------------------------------------------------------------------------

inline std::string serialize_skl1(const SkeletonSequence& seq) {
  std::string out = "SKL1 " + std::to_string(seq.joints()) + " " + std::to_string(seq.frames()) + " " +
                    std::to_string(seq.bones().size()) + " " + std::to_string(seq.label()) + "\n";
  for (std::size_t k = 0; k < seq.bones().size(); ++k) {
    if (k) out += ' ';
    out += std::to_string(seq.bones()[k].parent) + ":" + std::to_string(seq.bones()[k].child);
  }
  out += '\n';
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t j = 0; j < seq.joints(); ++j) {
      const auto& p = seq.at(t, j);
      for (std::size_t c = 0; c < 3; ++c) {
        if (j || c) out += ' ';
        out += format_double(p[c]);
      }
    }
    out += '\n';
  }
  for (auto m : seq.mask()) out += m ? '1' : '0';
  out += '\n';
  return out;
}

/// Inverse of serialize_skl1. A missing mask line means every joint is valid.
inline SkeletonSequence parse_skl1(std::string_view text) {
  detail::LineReader in(text);
  auto header = detail::split_ws(in.next("SKL1 header"));
  std::size_t joints = 0, frames = 0, nbones = 0;
  int label = 0;
  if (header.size() != 5 || header[0] != "SKL1" || !parse_int(header[1], joints) ||
      !parse_int(header[2], frames) || !parse_int(header[3], nbones) || !parse_int(header[4], label))
    throw ParseError("malformed SKL1 header", in.line_no());
  if (frames == 0) throw EmptySequence("SKL1 file declares zero frames");

  std::vector<Bone> bones;
  if (nbones > 0) {
    auto toks = detail::split_ws(in.next("bone list"));
    if (toks.size() != nbones) throw ParseError("bone count mismatch", in.line_no());
    for (auto tok : toks) {
      auto colon = tok.find(':');
      Bone b;
      if (colon == std::string_view::npos || !parse_int(tok.substr(0, colon), b.parent) ||
          !parse_int(tok.substr(colon + 1), b.child))
        throw ParseError("malformed bone pair", in.line_no());
      bones.push_back(b);
    }
  }

  SkeletonSequence seq(frames, joints, std::move(bones), label);
  for (std::size_t t = 0; t < frames; ++t) {
    auto toks = detail::split_ws(in.next("frame line"));
    if (toks.size() != 3 * joints) throw ParseError("frame has wrong value count", in.line_no());
    for (std::size_t j = 0; j < joints; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        if (!parse_double(toks[3 * j + c], seq.at(t, j)[c]))
          throw ParseError("malformed coordinate", in.line_no());
  }
  if (!in.at_end()) {
    auto toks = detail::split_ws(in.next("mask line"));
    if (toks.size() != 1 || toks[0].size() != frames * joints)
      throw ParseError("mask line has wrong length", in.line_no());
    for (std::size_t k = 0; k < toks[0].size(); ++k) {
      char ch = toks[0][k];
      if (ch != '0' && ch != '1') throw ParseError("mask must contain only 0/1", in.line_no());
      seq.set_valid(k / joints, k % joints, ch == '1');
    }
    if (!in.at_end()) throw ParseError("trailing content after mask line", in.line_no() + 1);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// File helpers and dataset manifests
// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

/// Loads an SKL1 file, or a raw NTU file when the extension is `.skeleton`.
inline SkeletonSequence load_sequence(const std::filesystem::path& path) {
  auto text = read_file(path);
  if (path.extension() == ".skeleton") return parse_ntu_skeleton(text);
  return parse_skl1(text);
}

struct ManifestEntry {
  std::string path;
  int label = 0;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// One `<path> <label>` per line; the label is the last token. Relative paths
/// resolve against the manifest's directory.
inline std::string serialize_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += e.path + " " + std::to_string(e.label) + "\n";
  return out;
}

inline std::vector<ManifestEntry> parse_manifest(std::string_view text) {
  std::vector<ManifestEntry> entries;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto sp = line.find_last_of(" \t");
    ManifestEntry e;
    if (sp == std::string_view::npos || !parse_int(line.substr(sp + 1), e.label))
      throw ParseError("manifest line must be '<path> <label>'", line_no);
    e.path = std::string(line.substr(0, sp));
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<SkeletonSequence> load_manifest(const std::filesystem::path& manifest) {
  auto entries = parse_manifest(read_file(manifest));
  std::vector<SkeletonSequence> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    std::filesystem::path p(e.path);
    if (p.is_relative()) p = manifest.parent_path() / p;
    auto seq = load_sequence(p);
    seq.set_label(e.label);
    out.push_back(std::move(seq));
  }
  return out;
}

/// Linear interpolation along time to exactly `frames` frames. Validity of a
/// resampled entry is the AND of the source entries it draws weight from.
inline SkeletonSequence resample(const SkeletonSequence& seq, std::size_t frames) {
  if (frames == 0) throw SpecError("resample target must be positive");
  if (frames == seq.frames()) return seq;
  SkeletonSequence out(frames, seq.joints(), seq.bones(), seq.label());
  const double scale =
      frames > 1 ? static_cast<double>(seq.frames() - 1) / static_cast<double>(frames - 1) : 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    const double src = scale * static_cast<double>(t);
    const auto lo = std::min(static_cast<std::size_t>(src), seq.frames() - 1);
    const auto hi = std::min(lo + 1, seq.frames() - 1);
    const double w = src - static_cast<double>(lo);
    for (std::size_t j = 0; j < seq.joints(); ++j) {
      out.at(t, j) = seq.at(lo, j) * (1.0 - w) + seq.at(hi, j) * w;
      out.set_valid(t, j, seq.valid(lo, j) && (w == 0.0 || seq.valid(hi, j)));
    }
  }
  return out;
}

}  // namespace sapview
