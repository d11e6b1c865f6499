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

// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
// budgets are fixed here.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "ffd/cli.hpp"
#include "ffd/ffd.hpp"
#include "test_support.hpp"

using namespace ffd;
using nlohmann::json;

namespace {

constexpr double kTapTolerance = 1e-9;
constexpr double kGradientTolerance = 1e-4;
constexpr double kSeparableEer = 0.02;
constexpr double kChanceLow = 0.45;
constexpr double kChanceHigh = 0.55;

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> run;
};

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ffd");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0 && code != cli::kExitValidation) std::cerr << err.str();
  return code;
}

std::string slurp(const std::filesystem::path& p) { return embedstore::detail::read_file(p); }

double report_eer(const std::filesystem::path& dir) { return json::parse(slurp(dir / "report.json"))["eer"].get<double>(); }

std::string fmt(double v) { return report::format_number(v); }

Outcome log_kernel() {
  const quality::LogKernel k14 = quality::make_log_kernel(1.4);
  const double expected = -1.0 / (std::numbers::pi * std::pow(1.4, 4));
  const double centre_error = std::abs(k14.tap(0, 0) - expected);
  bool ok = centre_error <= kTapTolerance;
  std::size_t violations = 0;
  for (double sigma : {0.8, 1.4, 2.0}) {
    const quality::LogKernel k = quality::make_log_kernel(sigma);
    const long r = static_cast<long>(k.radius);
    const double zero_ring = 2.0 * sigma * sigma;
    for (long y = -r; y <= r; ++y) {
      for (long x = -r; x <= r; ++x) {
        const double t = k.tap(x, y);
        if (t != k.tap(y, x) || t != k.tap(-x, y) || t != k.tap(x, -y)) ++violations;
        const double r2 = static_cast<double>(x * x + y * y);
        if ((r2 < zero_ring && !(t < 0.0)) || (r2 > zero_ring && !(t > 0.0))) ++violations;
      }
    }
  }
  ok = ok && violations == 0;
  return {ok, "centre tap error " + fmt(centre_error) + ", invariant violations " + std::to_string(violations)};
}

Outcome sharpness_ordering() {
  const quality::LogKernel k = quality::make_log_kernel(1.4);
  std::size_t pairs = 0;
  std::size_t decreasing = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const GrayImage texture = testing::random_texture(96, 80, seed);
    double previous = std::numeric_limits<double>::infinity();
    bool first = true;
    for (double sigma : {0.0, 1.0, 2.0, 4.0}) {
      const double s = quality::sharpness(gaussian_blur(texture, sigma), k).value;
      if (!first) {
        ++pairs;
        decreasing += s < previous;
      }
      first = false;
      previous = s;
    }
  }
  return {pairs > 0 && decreasing == pairs,
          std::to_string(decreasing) + "/" + std::to_string(pairs) + " adjacent pairs strictly decreasing over 12 textures"};
}

Outcome gradient_check() {
  double worst = 0.0;
  for (std::size_t depth = 1; depth <= 3; ++depth) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const testing::GradientProblem p = testing::random_gradient_problem(depth, seed);
      const head::Gradients g = head::backward(p.head, head::forward(p.head, p.x), p.y);
      worst = std::max(worst, testing::max_relative_error(g.values, testing::finite_difference_gradient(p.head, p.x, p.y)));
    }
  }
  return {worst < kGradientTolerance, "max relative error " + fmt(worst) + " over depths 1-3 x 5 seeds"};
}

Outcome metrics_oracle() {
  Rng rng(2026);
  std::size_t fnr_mismatch = 0;
  std::size_t eer_mismatch = 0;
  std::size_t invariance_mismatch = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.below(11);
    metrics::ScoreSet s;
    std::set<int> used;
    for (std::size_t i = 0; i < n; ++i) {
      int v;
      do {
        v = static_cast<int>(rng.below(1001));
      } while (used.count(v));
      used.insert(v);
      s.scores.push_back(v / 1000.0);
      s.labels.push_back(static_cast<int>(rng.below(2)));
    }
    s.labels[0] = 1;
    s.labels[1] = 0;
    const metrics::DetCurve c = metrics::det_curve(s);
    for (double target : {metrics::kFpr10, metrics::kFpr20, metrics::kFpr100}) {
      if (metrics::fnr_at_fpr(c, target).fnr != testing::brute_force_fnr_at(s.scores, s.labels, target)) ++fnr_mismatch;
    }
    const double step = std::max(1.0 / static_cast<double>(c.positives), 1.0 / static_cast<double>(c.negatives));
    const double e = metrics::eer(c).eer;
    if (std::abs(e - testing::dense_sweep_eer(s.scores, s.labels, 10000)) > step + 1e-12) ++eer_mismatch;

    metrics::ScoreSet t = s;
    for (double& v : t.scores) v = std::exp(3.0 * v) - 7.0;
    const metrics::DetCurve ct = metrics::det_curve(t);
    bool same = ct.points.size() == c.points.size() && metrics::eer(ct).eer == e;
    for (std::size_t i = 0; same && i < c.points.size(); ++i) {
      same = c.points[i].fpr == ct.points[i].fpr && c.points[i].fnr == ct.points[i].fnr;
    }
    for (double target : {metrics::kFpr10, metrics::kFpr20, metrics::kFpr100}) {
      same = same && metrics::fnr_at_fpr(c, target).fnr == metrics::fnr_at_fpr(ct, target).fnr;
    }
    invariance_mismatch += !same;
  }
  return {fnr_mismatch == 0 && eer_mismatch == 0 && invariance_mismatch == 0,
          "500 sets: fnr_at mismatches " + std::to_string(fnr_mismatch) + ", EER outside one step " +
              std::to_string(eer_mismatch) + ", transform-invariance failures " + std::to_string(invariance_mismatch)};
}

Outcome end_to_end(const std::filesystem::path& root) {
  const std::string separable = (root / "sep6" / "corpus").string();
  const std::string chance = (root / "sep0" / "corpus").string();
  bool ok = run_cli({"corpus", "synth", "--separation", "6", "--n", "300", "--dim", "64", "--out", separable}) == 0;
  ok = ok && run_cli({"corpus", "synth", "--separation", "0", "--n", "300", "--dim", "64", "--out", chance}) == 0;
  ok = ok && run_cli({"run", "--mode", "fine-tune", "--corpus", separable, "--out", (root / "sep6" / "out").string()}) == 0;
  ok = ok && run_cli({"run", "--mode", "fine-tune", "--corpus", chance, "--out", (root / "sep0" / "out").string()}) == 0;
  if (!ok) return {false, "CLI pipeline returned a nonzero exit code"};
  const double e6 = report_eer(root / "sep6" / "out" / "fine-tune");
  const double e0 = report_eer(root / "sep0" / "out" / "fine-tune");
  return {e6 <= kSeparableEer && e0 >= kChanceLow && e0 <= kChanceHigh,
          "separation 6 test EER " + fmt(e6) + " (<= 0.02), separation 0 test EER " + fmt(e0) + " (in [0.45, 0.55])"};
}

Outcome loo_leakage(const std::filesystem::path& root) {
  const std::string corpus = (root / "sep6" / "corpus").string();
  if (!std::filesystem::exists(corpus + ".manifest.json")) {
    if (run_cli({"corpus", "synth", "--separation", "6", "--n", "300", "--dim", "64", "--out", corpus}) != 0) {
      return {false, "corpus synth failed"};
    }
  }
  const std::filesystem::path out = root / "loo";
  const int code = run_cli({"run", "--mode", "loo", "--corpus", corpus, "--out", out.string()});
  if (code != 0) return {false, "run --mode loo exited with " + std::to_string(code)};

  std::size_t leaked = 0;
  std::size_t guarded = 0;
  std::set<std::string> held;
  for (const char* rotation : {"loo-alcohol", "loo-drug", "loo-sleep"}) {
    const json rep = json::parse(slurp(out / rotation / "report.json"));
    leaked += rep["extra"]["leakage_count"].get<std::size_t>();
    guarded += rep["extra"]["guarded_rows"].get<std::size_t>();
    held.insert(rep["extra"]["held_out"].get<std::string>());
  }
  std::istringstream summary(slurp(out / "summary.csv"));
  std::string header;
  while (std::getline(summary, header) && header.starts_with("#")) {
  }
  const std::string expected_header = "experiment,EER,FNR10,FNR20,FNR100,ACC";
  std::size_t rows = 0;
  for (std::string line; std::getline(summary, line);) rows += !line.empty();
  return {leaked == 0 && guarded > 0 && held.size() == 3 && header == expected_header && rows == 3,
          "held-out records in training batches " + std::to_string(leaked) + " of " + std::to_string(guarded) +
              " guarded rows, 3 rotations, summary header '" + header + "'"};
}

Outcome determinism(const std::filesystem::path& root) {
  const std::string corpus = (root / "det" / "corpus").string();
  if (run_cli({"corpus", "synth", "--separation", "4", "--n", "200", "--dim", "32", "--seed", "11", "--out", corpus}) != 0) {
    return {false, "corpus synth failed"};
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const char* mode : {"zero-shot", "fine-tune", "loo"}) {
    for (const char* run : {"a", "b"}) {
      const std::filesystem::path out = root / "det" / run / mode;
      if (run_cli({"run", "--mode", mode, "--corpus", corpus, "--seed", "3", "--out", out.string()}) != 0) {
        return {false, std::string("run --mode ") + mode + " failed"};
      }
    }
    const std::filesystem::path a = root / "det" / "a" / mode;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
      const auto rel = std::filesystem::relative(entry.path(), a);
      const std::filesystem::path b = root / "det" / "b" / mode / rel;
      ++compared;
      if (!std::filesystem::exists(b) || slurp(entry.path()) != slurp(b)) differing.push_back(std::string(mode) + "/" + rel.string());
    }
  }
  std::string detail = std::to_string(compared) + " CSVs compared across zero-shot, fine-tune and loo reruns, " +
                       std::to_string(differing.size()) + " differ";
  if (!differing.empty()) detail += " (first: " + differing.front() + ")";
  return {compared >= 8 && differing.empty(), detail};
}

Outcome corpus_round_trip(const std::filesystem::path& root) {
  Rng rng(99);
  std::vector<embedstore::EmbeddingRecord> records;
  const std::array<float, 6> special = {0.0f, -0.0f, std::numeric_limits<float>::denorm_min(),
                                        std::numeric_limits<float>::max(), std::numeric_limits<float>::lowest(),
                                        std::numeric_limits<float>::epsilon()};
  for (std::size_t i = 0; i < 1000; ++i) {
    embedstore::EmbeddingRecord r;
    r.record_id = "rec-" + std::to_string(i);
    r.subject_id = "subj-" + std::to_string(i / 2);
    r.eye = i % 2 ? embedstore::Eye::right : embedstore::Eye::left;
    r.condition = embedstore::kConditions[rng.below(4)];
    r.split = embedstore::kSplits[rng.below(3)];
    r.vector.resize(48);
    for (float& v : r.vector) v = static_cast<float>(rng.normal(0.0, 3.0));
    r.vector[i % 48] = special[i % special.size()];
    records.push_back(std::move(r));
  }
  const std::filesystem::path prefix = root / "rt" / "corpus";
  embedstore::write_corpus(records, prefix);
  const embedstore::Corpus back = embedstore::read_corpus(prefix);
  std::size_t mismatched = back.records.size() == records.size() ? 0 : records.size();
  for (std::size_t i = 0; mismatched == 0 && i < records.size(); ++i) {
    const auto& a = records[i];
    const auto& b = back.records[i];
    const bool bits = std::memcmp(a.vector.data(), b.vector.data(), a.vector.size() * sizeof(float)) == 0;
    if (!bits || static_cast<const embedstore::RecordMeta&>(a) != static_cast<const embedstore::RecordMeta&>(b)) ++mismatched;
  }
  const int clean = run_cli({"corpus", "validate", prefix.string()});
  const std::filesystem::path blob = prefix.string() + ".embeddings.bin";
  std::filesystem::resize_file(blob, std::filesystem::file_size(blob) - 5);
  const int truncated = run_cli({"corpus", "validate", prefix.string()});
  embedstore::write_corpus(records, prefix);
  {
    std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4 * 1234);
    const unsigned char nan_bits[4] = {0x00, 0x00, 0xc0, 0x7f};
    f.write(reinterpret_cast<const char*>(nan_bits), 4);
  }
  const int poisoned = run_cli({"corpus", "validate", prefix.string()});
  return {mismatched == 0 && clean == 0 && truncated == 3 && poisoned == 3,
          "1000 records, " + std::to_string(mismatched) + " mismatched; validate exit codes clean=" +
              std::to_string(clean) + " truncated=" + std::to_string(truncated) + " non-finite=" +
              std::to_string(poisoned)};
}

}  // namespace

int main() {
  testing::TempDir root;
  const std::vector<Criterion> criteria = {
      {"AC1", "LoG kernel centre tap, symmetry and sign structure", 1.0, log_kernel},
      {"AC2", "Sharpness strictly decreasing in blur", 10.0, sharpness_ordering},
      {"AC3", "Head gradient check against central differences", 30.0, gradient_check},
      {"AC4", "Metrics agree with exhaustive and dense-sweep oracles", 30.0, metrics_oracle},
      {"AC5", "End-to-end synthetic fine-tune via the CLI", 120.0, [&] { return end_to_end(root.path()); }},
      {"AC6", "LOO leakage guard and summary columns", 120.0, [&] { return loo_leakage(root.path()); }},
      {"AC7", "Byte-identical report CSVs on rerun", 300.0, [&] { return determinism(root.path()); }},
      {"AC8", "Corpus round-trip and corrupted-blob exit code", 30.0, [&] { return corpus_round_trip(root.path()); }},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = seconds < c.budget_seconds;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    char timing[64];
    std::snprintf(timing, sizeof timing, "%.2fs of %.0fs budget", seconds, c.budget_seconds);
    std::cout << (pass ? "PASS " : "FAIL ") << c.id << " " << c.title << ": " << o.detail << "; " << timing
              << (in_budget ? "" : " (over budget)") << std::endl;
  }
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
