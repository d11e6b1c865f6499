// Copyright 2026 The FFD Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Embedding corpus: `<name>.manifest.json` (metadata, counts, provenance)
// plus `<name>.embeddings.bin` (float32 little-endian, row-major, records in
// manifest order). This file pair is the hand-off format from feature
// extraction to training and evaluation.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "ffd/error.hpp"
#include "ffd/matrix.hpp"
#include "ffd/random.hpp"

namespace ffd::embedstore {

using json = nlohmann::json;

enum class Condition { control, alcohol, drug, sleep };
enum class Eye { left, right };
enum class Split { train, val, test };

inline constexpr std::array kConditions = {Condition::control, Condition::alcohol, Condition::drug, Condition::sleep};
inline constexpr std::array kUnfitConditions = {Condition::alcohol, Condition::drug, Condition::sleep};
inline constexpr std::array kSplits = {Split::train, Split::val, Split::test};

inline constexpr std::string_view kDtype = "float32-le";

constexpr std::string_view to_string(Condition c) noexcept {
  switch (c) {
    case Condition::control: return "control";
    case Condition::alcohol: return "alcohol";
    case Condition::drug: return "drug";
    case Condition::sleep: return "sleep";
  }
  return "?";
}

constexpr std::string_view to_string(Eye e) noexcept { return e == Eye::left ? "left" : "right"; }

constexpr std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Condition parse_condition(std::string_view s) {
  for (Condition c : kConditions) {
    if (s == to_string(c)) return c;
  }
  fail(Errc::schema, "unknown condition label '" + std::string(s) + "'");
}

inline Eye parse_eye(std::string_view s) {
  if (s == "left") return Eye::left;
  if (s == "right") return Eye::right;
  fail(Errc::schema, "unknown eye '" + std::string(s) + "'");
}

inline Split parse_split(std::string_view s) {
  for (Split sp : kSplits) {
    if (s == to_string(sp)) return sp;
  }
  fail(Errc::schema, "unknown split '" + std::string(s) + "'");
}

/// Fit is the positive class.
constexpr int binary_label(Condition c) noexcept { return c == Condition::control ? 1 : 0; }

struct RecordMeta {
  std::string record_id;
  std::string subject_id;
  Eye eye = Eye::left;
  Condition condition = Condition::control;
  Split split = Split::train;

  bool operator==(const RecordMeta&) const = default;
};

struct EmbeddingRecord : RecordMeta {
  std::vector<float> vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

/// counts[split][condition]
using CountTable = std::array<std::array<std::size_t, 4>, 3>;

struct DatasetManifest {
  std::string name;
  std::size_t dim = 0;
  std::string dtype{kDtype};
  std::string backbone_tag;
  CountTable counts{};
  std::vector<RecordMeta> records;
  json provenance = json::object();

  std::size_t count(Split s, Condition c) const {
    return counts[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)];
  }
  std::size_t split_total(Split s) const {
    std::size_t n = 0;
    for (std::size_t c : counts[static_cast<std::size_t>(s)]) n += c;
    return n;
  }
};

struct Corpus {
  DatasetManifest manifest;
  std::vector<EmbeddingRecord> records;
};

struct CorpusPaths {
  std::filesystem::path manifest;
  std::filesystem::path blob;
  std::string name;
};

/// Accepts either the corpus prefix (`dir/name`) or the manifest path.
inline CorpusPaths corpus_paths(const std::filesystem::path& path) {
  std::string base = path.string();
  constexpr std::string_view kManifestSuffix = ".manifest.json";
  constexpr std::string_view kBlobSuffix = ".embeddings.bin";
  if (base.ends_with(kManifestSuffix)) base.resize(base.size() - kManifestSuffix.size());
  else if (base.ends_with(kBlobSuffix)) base.resize(base.size() - kBlobSuffix.size());
  const std::filesystem::path prefix(base);
  return {std::filesystem::path(base + std::string(kManifestSuffix)),
          std::filesystem::path(base + std::string(kBlobSuffix)), prefix.filename().string()};
}

inline CountTable tally(std::span<const RecordMeta> records) {
  CountTable counts{};
  for (const RecordMeta& r : records) {
    ++counts[static_cast<std::size_t>(r.split)][static_cast<std::size_t>(r.condition)];
  }
  return counts;
}

/// Checks the manifest's own invariants: positive dim, known dtype, unique
/// ids, and counts that equal the record tally.
inline void validate_manifest(const DatasetManifest& m) {
  require(m.dim >= 1, Errc::schema, "manifest dim must be positive");
  require(m.dtype == kDtype, Errc::schema, "unsupported dtype '" + m.dtype + "'");
  std::unordered_set<std::string_view> ids;
  ids.reserve(m.records.size());
  for (const RecordMeta& r : m.records) {
    require(!r.record_id.empty(), Errc::schema, "empty record_id");
    require(ids.insert(r.record_id).second, Errc::duplicate_id, "duplicate record_id '" + r.record_id + "'");
  }
  const CountTable actual = tally(m.records);
  for (Split s : kSplits) {
    for (Condition c : kConditions) {
      require(m.count(s, c) == actual[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)], Errc::schema,
              "manifest count for " + std::string(to_string(s)) + "/" + std::string(to_string(c)) + " is " +
                  std::to_string(m.count(s, c)) + " but records tally " +
                  std::to_string(actual[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)]));
    }
  }
}

struct CorpusOptions {
  std::string name;  // defaults to the path's file name
  std::string backbone_tag = "unspecified";
  json provenance = json::object();
};

inline DatasetManifest build_manifest(std::span<const EmbeddingRecord> records, const CorpusOptions& options) {
  require(!records.empty(), Errc::empty_input, "corpus has no records");
  DatasetManifest m;
  m.name = options.name;
  m.dim = records.front().vector.size();
  m.backbone_tag = options.backbone_tag;
  m.provenance = options.provenance;
  require(m.dim >= 1, Errc::dimension_mismatch, "records have empty vectors");
  std::unordered_set<std::string_view> ids;
  ids.reserve(records.size());
  m.records.reserve(records.size());
  for (const EmbeddingRecord& r : records) {
    require(r.vector.size() == m.dim, Errc::dimension_mismatch,
            "record '" + r.record_id + "' has dim " + std::to_string(r.vector.size()) + ", expected " +
                std::to_string(m.dim));
    require(ids.insert(r.record_id).second, Errc::duplicate_id, "duplicate record_id '" + r.record_id + "'");
    for (float v : r.vector) {
      require(std::isfinite(v), Errc::invalid_input, "record '" + r.record_id + "' has a non-finite component");
    }
    m.records.push_back(static_cast<const RecordMeta&>(r));
  }
  m.counts = tally(m.records);
  return m;
}

inline json manifest_to_json(const DatasetManifest& m) {
  json counts = json::object();
  for (Split s : kSplits) {
    json row = json::object();
    for (Condition c : kConditions) row[std::string(to_string(c))] = m.count(s, c);
    counts[std::string(to_string(s))] = row;
  }
  json records = json::array();
  for (const RecordMeta& r : m.records) {
    records.push_back({{"record_id", r.record_id},
                       {"subject_id", r.subject_id},
                       {"eye", to_string(r.eye)},
                       {"condition", to_string(r.condition)},
                       {"split", to_string(r.split)}});
  }
  return json{{"name", m.name},         {"dim", m.dim},
              {"dtype", m.dtype},       {"backbone_tag", m.backbone_tag},
              {"record_count", m.records.size()},
              {"counts", counts},       {"provenance", m.provenance},
              {"records", records}};
}

inline DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    const auto dim = j.at("dim").get<std::int64_t>();
    require(dim >= 1, Errc::schema, "manifest dim must be positive");
    m.dim = static_cast<std::size_t>(dim);
    m.dtype = j.at("dtype").get<std::string>();
    m.backbone_tag = j.value("backbone_tag", std::string{});
    m.provenance = j.value("provenance", json::object());
    const json& counts = j.at("counts");
    for (Split s : kSplits) {
      const json& row = counts.at(std::string(to_string(s)));
      for (auto it = row.begin(); it != row.end(); ++it) parse_condition(it.key());
      for (Condition c : kConditions) {
        m.counts[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)] =
            row.at(std::string(to_string(c))).get<std::size_t>();
      }
    }
    const json& records = j.at("records");
    require(records.is_array(), Errc::schema, "manifest records must be an array");
    m.records.reserve(records.size());
    for (const json& r : records) {
      m.records.push_back({r.at("record_id").get<std::string>(), r.at("subject_id").get<std::string>(),
                           parse_eye(r.at("eye").get<std::string>()),
                           parse_condition(r.at("condition").get<std::string>()),
                           parse_split(r.at("split").get<std::string>())});
    }
    if (j.contains("record_count")) {
      require(j.at("record_count").get<std::size_t>() == m.records.size(), Errc::schema,
              "record_count disagrees with the record list");
    }
  } catch (const json::exception& e) {
    fail(Errc::schema, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

namespace detail {

inline void write_atomically(const std::filesystem::path& target, const std::string& bytes) {
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) fail(Errc::io, "cannot move " + tmp.string() + " into place: " + ec.message());
}

inline void append_f32_le(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((bits >> shift) & 0xffU));
}

inline float load_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace detail

/// Writes the blob and then the manifest, each via temp-file rename.
inline DatasetManifest write_corpus(std::span<const EmbeddingRecord> records, const std::filesystem::path& path,
                                    CorpusOptions options = {}) {
  const CorpusPaths paths = corpus_paths(path);
  if (options.name.empty()) options.name = paths.name;
  DatasetManifest manifest = build_manifest(records, options);

  std::string blob;
  blob.reserve(records.size() * manifest.dim * 4);
  for (const EmbeddingRecord& r : records) {
    for (float v : r.vector) detail::append_f32_le(blob, v);
  }
  if (paths.manifest.has_parent_path()) std::filesystem::create_directories(paths.manifest.parent_path());
  detail::write_atomically(paths.blob, blob);
  detail::write_atomically(paths.manifest, manifest_to_json(manifest).dump(1) + "\n");
  return manifest;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  const CorpusPaths paths = corpus_paths(path);
  const std::string text = detail::read_file(paths.manifest);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::schema, paths.manifest.string() + ": " + e.what());
  }
  DatasetManifest m = manifest_from_json(j);
  validate_manifest(m);
  return m;
}

/// Reads and validates a corpus; records come back in manifest order.
inline Corpus read_corpus(const std::filesystem::path& path) {
  const CorpusPaths paths = corpus_paths(path);
  Corpus corpus;
  corpus.manifest = read_manifest(path);
  const DatasetManifest& m = corpus.manifest;
  const std::string blob = detail::read_file(paths.blob);
  const std::size_t expected = m.records.size() * m.dim * 4;
  require(blob.size() == expected, Errc::corrupt_corpus,
          paths.blob.string() + " holds " + std::to_string(blob.size()) + " bytes, expected " +
              std::to_string(expected) + " (" + std::to_string(m.records.size()) + " records x " +
              std::to_string(m.dim) + " dims x 4)");

  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  corpus.records.reserve(m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    EmbeddingRecord r;
    static_cast<RecordMeta&>(r) = m.records[i];
    r.vector.resize(m.dim);
    for (std::size_t k = 0; k < m.dim; ++k) {
      const float v = detail::load_f32_le(bytes + (i * m.dim + k) * 4);
      require(std::isfinite(v), Errc::corrupt_corpus, "record '" + r.record_id + "' has a non-finite component");
      r.vector[k] = v;
    }
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

/// Subjects whose records fall into more than one split. Splits are not
/// required to be subject-disjoint, so this is reported, not enforced.
inline std::vector<std::string> subjects_spanning_splits(std::span<const RecordMeta> records) {
  std::map<std::string, std::set<Split>> seen;
  for (const RecordMeta& r : records) seen[r.subject_id].insert(r.split);
  std::vector<std::string> out;
  for (const auto& [subject, splits] : seen) {
    if (splits.size() > 1) out.push_back(subject);
  }
  return out;
}

struct ValidationResult {
  DatasetManifest manifest;
  std::vector<std::string> warnings;
};

inline ValidationResult validate_corpus(const std::filesystem::path& path) {
  Corpus corpus = read_corpus(path);
  ValidationResult result{std::move(corpus.manifest), {}};
  for (const std::string& subject : subjects_spanning_splits(result.manifest.records)) {
    result.warnings.push_back("subject '" + subject + "' appears in more than one split");
  }
  return result;
}

/// Feature matrix plus binary labels (1 = fit, 0 = unfit).
struct LabeledSet {
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
};

/// fit-vs-unfit view: control -> 1, alcohol/drug/sleep -> 0.
inline LabeledSet binary_view(std::span<const EmbeddingRecord> records) {
  LabeledSet out;
  if (records.empty()) return out;
  const std::size_t dim = records.front().vector.size();
  out.features = Matrix(records.size(), dim);
  out.labels.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    require(records[i].vector.size() == dim, Errc::dimension_mismatch, "mixed dimensions in binary view");
    auto row = out.features.row(i);
    for (std::size_t k = 0; k < dim; ++k) row[k] = records[i].vector[k];
    out.labels.push_back(binary_label(records[i].condition));
  }
  return out;
}

/// Records whose split and condition are both in the given sets.
inline std::vector<EmbeddingRecord> select(std::span<const EmbeddingRecord> records, std::initializer_list<Split> splits,
                                           std::span<const Condition> conditions) {
  std::vector<EmbeddingRecord> out;
  for (const EmbeddingRecord& r : records) {
    const bool split_ok = std::find(splits.begin(), splits.end(), r.split) != splits.end();
    const bool cond_ok = std::find(conditions.begin(), conditions.end(), r.condition) != conditions.end();
    if (split_ok && cond_ok) out.push_back(r);
  }
  return out;
}

inline std::vector<EmbeddingRecord> select(std::span<const EmbeddingRecord> records, Split split) {
  return select(records, {split}, kConditions);
}

struct SynthOptions {
  std::size_t n_per_condition = 500;
  std::size_t dim = 768;
  /// Distance between the fit mean and an unfit mean, in noise stddevs.
  double separation = 4.0;
  std::uint64_t seed = 7;
  /// Per-condition multiplier on `separation` along the shared direction
  /// (order: control, alcohol, drug, sleep).
  std::array<double, 4> condition_scale = {0.0, 1.0, 1.0, 1.0};
  double train_fraction = 0.60;
  double val_fraction = 0.15;
};

/// Gaussian clusters, unit variance per component. Each condition's mean sits
/// at `separation * condition_scale[c]` along one seeded unit direction.
/// Subjects contribute a left and a right eye and are assigned to splits as
/// a whole.
inline std::vector<EmbeddingRecord> synth_corpus(const SynthOptions& opt) {
  require(opt.n_per_condition >= 1, Errc::invalid_parameter, "n_per_condition must be at least 1");
  require(opt.dim >= 2, Errc::invalid_parameter, "dim must be at least 2");
  require(std::isfinite(opt.separation) && opt.separation >= 0.0, Errc::invalid_parameter,
          "separation must be nonnegative");
  require(opt.train_fraction >= 0.0 && opt.val_fraction >= 0.0 && opt.train_fraction + opt.val_fraction <= 1.0,
          Errc::invalid_parameter, "split fractions must be nonnegative and sum to at most 1");

  Rng direction_rng(mix_seed(opt.seed, 1));
  std::vector<double> direction(opt.dim);
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (double& d : direction) {
      d = direction_rng.normal();
      norm += d * d;
    }
  }
  norm = std::sqrt(norm);
  for (double& d : direction) d /= norm;

  Rng rng(mix_seed(opt.seed, 2));
  std::vector<EmbeddingRecord> records;
  records.reserve(opt.n_per_condition * kConditions.size());
  for (Condition c : kConditions) {
    const double offset = opt.separation * opt.condition_scale[static_cast<std::size_t>(c)];
    const std::size_t subjects = (opt.n_per_condition + 1) / 2;
    std::vector<std::size_t> order(subjects);
    for (std::size_t s = 0; s < subjects; ++s) order[s] = s;
    rng.shuffle(std::span<std::size_t>(order));
    const auto n_train = static_cast<std::size_t>(std::lround(opt.train_fraction * static_cast<double>(subjects)));
    const auto n_val = std::min(subjects - n_train,
                                static_cast<std::size_t>(std::lround(opt.val_fraction * static_cast<double>(subjects))));
    std::vector<Split> subject_split(subjects, Split::test);
    for (std::size_t rank = 0; rank < subjects; ++rank) {
      if (rank < n_train) subject_split[order[rank]] = Split::train;
      else if (rank < n_train + n_val) subject_split[order[rank]] = Split::val;
    }

    for (std::size_t i = 0; i < opt.n_per_condition; ++i) {
      const std::size_t subject = i / 2;
      EmbeddingRecord r;
      r.eye = (i % 2 == 0) ? Eye::left : Eye::right;
      r.condition = c;
      r.split = subject_split[subject];
      r.subject_id = std::string(to_string(c)) + "-s" + std::to_string(subject);
      r.record_id = r.subject_id + "-" + std::string(to_string(r.eye));
      r.vector.resize(opt.dim);
      for (std::size_t k = 0; k < opt.dim; ++k) {
        r.vector[k] = static_cast<float>(offset * direction[k] + rng.normal());
      }
      records.push_back(std::move(r));
    }
  }
  return records;
}

inline json synth_provenance(const SynthOptions& opt) {
  return json{{"generator", "synthetic-gaussian"},
              {"n_per_condition", opt.n_per_condition},
              {"dim", opt.dim},
              {"separation", opt.separation},
              {"seed", opt.seed},
              {"condition_scale", opt.condition_scale},
              {"train_fraction", opt.train_fraction},
              {"val_fraction", opt.val_fraction}};
}

}  // namespace ffd::embedstore
