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

// Experiment protocols over an embedding corpus: zero-shot scoring of frozen
// features (parameter-free centroid scorer or affine probe), fine-tuning of
// the classification head, and the leave-one-condition-out rotation.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ffd/embedstore.hpp"
#include "ffd/error.hpp"
#include "ffd/head.hpp"
#include "ffd/metrics.hpp"
#include "ffd/report.hpp"

namespace ffd::protocols {

using json = nlohmann::json;
using embedstore::Condition;
using embedstore::EmbeddingRecord;
using embedstore::Split;

enum class Mode { zero_shot_centroid, zero_shot_probe, fine_tune, loo };

constexpr std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::zero_shot_centroid: return "zero-shot-centroid";
    case Mode::zero_shot_probe: return "zero-shot-probe";
    case Mode::fine_tune: return "fine-tune";
    case Mode::loo: return "loo";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  for (Mode m : {Mode::zero_shot_centroid, Mode::zero_shot_probe, Mode::fine_tune, Mode::loo}) {
    if (s == to_string(m)) return m;
  }
  fail(Errc::invalid_parameter, "unknown protocol mode '" + std::string(s) + "'");
}

struct ExperimentConfig {
  Mode mode = Mode::fine_tune;
  head::TrainConfig train;
  bool grid_search = false;
  std::filesystem::path corpus;
  std::uint64_t seed = 7;
  std::filesystem::path output_dir;
};

/// The experiment seed is the only source of randomness; it overrides the
/// training seed.
inline head::TrainConfig effective_train_config(const ExperimentConfig& cfg) {
  head::TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  return t;
}

inline json to_json(const ExperimentConfig& cfg) {
  return json{{"mode", to_string(cfg.mode)},
              {"seed", cfg.seed},
              {"grid_search", cfg.grid_search},
              {"corpus", cfg.corpus.string()},
              {"train", head::to_json(effective_train_config(cfg))}};
}

inline ExperimentConfig experiment_config_from_json(const json& j, ExperimentConfig cfg = {}) {
  try {
    if (j.contains("mode")) cfg.mode = parse_mode(j.at("mode").get<std::string>());
    cfg.seed = j.value("seed", cfg.seed);
    cfg.grid_search = j.value("grid_search", cfg.grid_search);
    if (j.contains("corpus")) cfg.corpus = j.at("corpus").get<std::string>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("train")) cfg.train = head::train_config_from_json(j.at("train"), cfg.train);
  } catch (const json::exception& e) {
    fail(Errc::schema, std::string("bad experiment config: ") + e.what());
  }
  head::validate(cfg.train);
  return cfg;
}

struct ExperimentOutcome {
  std::string name;
  Mode mode = Mode::fine_tune;
  metrics::EvalReport report;
  json details = json::object();
  std::optional<head::MlpHead> model;
};

namespace detail {

inline void require_both_classes(std::span<const EmbeddingRecord> records, std::string_view what) {
  bool fit = false;
  bool unfit = false;
  for (const EmbeddingRecord& r : records) (embedstore::binary_label(r.condition) == 1 ? fit : unfit) = true;
  require(fit && unfit, Errc::degenerate_labels, std::string(what) + " must contain both fit and unfit records");
}

inline metrics::ScoreSet score_with_head(const head::MlpHead& model, std::span<const EmbeddingRecord> records) {
  const embedstore::LabeledSet set = embedstore::binary_view(records);
  return {head::logits(model, set.features), set.labels};
}

inline json history_json(const head::TrainResult& run) {
  json epochs = json::array();
  for (const head::EpochStats& e : run.history) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_eer", report::optional_json(e.val_eer)},
                      {"val_loss", report::optional_json(e.val_loss)}});
  }
  return json{{"best_epoch", run.best_epoch},
              {"best_val_eer", report::optional_json(run.best_val_eer)},
              {"last_val_eer", run.history.empty() ? json(nullptr) : report::optional_json(run.history.back().val_eer)},
              {"history", epochs}};
}

inline json grid_json(const head::GridResult& grid) {
  json cells = json::array();
  for (const head::GridCell& c : grid.cells) {
    cells.push_back({{"depth", c.depth}, {"learning_rate", c.learning_rate}, {"val_eer", c.val_eer},
                     {"best_epoch", c.best_epoch}});
  }
  return json{{"cells", cells},
              {"winner", {{"depth", grid.best_config.depth}, {"learning_rate", grid.best_config.learning_rate}}}};
}

struct Fitted {
  head::MlpHead model;
  json details;
};

// Trains (or grid-searches) a head and rounds it to the stored precision so
// that the evaluated model is exactly the one written to disk.
inline Fitted fit_head(const embedstore::LabeledSet& train, const embedstore::LabeledSet& val,
                       const head::TrainConfig& cfg, bool use_grid, const head::BatchObserver& observer = {}) {
  Fitted out;
  if (use_grid) {
    require(!observer, Errc::invalid_parameter, "batch observers are not supported with grid search");
    head::GridResult grid = head::grid_search(train, val, cfg);
    out.model = grid.best_result.best;
    out.details = {{"grid", grid_json(grid)}, {"training", history_json(grid.best_result)}};
  } else {
    head::TrainResult run = head::train(train, val, cfg, observer);
    out.model = run.best;
    out.details = {{"training", history_json(run)}};
  }
  out.model.round_to_float32();
  return out;
}

}  // namespace detail

/// Parameter-free scorer: distance to the unfit class mean minus distance
/// to the fit class mean, means taken over the training split.
struct CentroidScorer {
  static constexpr std::size_t kTrainableParameters = 0;

  std::vector<double> fit_mean;
  std::vector<double> unfit_mean;

  static CentroidScorer from_records(std::span<const EmbeddingRecord> train) {
    detail::require_both_classes(train, "centroid training split");
    const std::size_t dim = train.front().vector.size();
    CentroidScorer s{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
    std::size_t n_fit = 0;
    std::size_t n_unfit = 0;
    for (const EmbeddingRecord& r : train) {
      const bool fit = embedstore::binary_label(r.condition) == 1;
      auto& mean = fit ? s.fit_mean : s.unfit_mean;
      (fit ? n_fit : n_unfit)++;
      for (std::size_t k = 0; k < dim; ++k) mean[k] += r.vector[k];
    }
    for (double& v : s.fit_mean) v /= static_cast<double>(n_fit);
    for (double& v : s.unfit_mean) v /= static_cast<double>(n_unfit);
    return s;
  }

  double score(std::span<const float> x) const {
    require(x.size() == fit_mean.size(), Errc::shape, "embedding width does not match centroid width");
    double d_fit = 0.0;
    double d_unfit = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double a = x[k] - fit_mean[k];
      const double b = x[k] - unfit_mean[k];
      d_fit += a * a;
      d_unfit += b * b;
    }
    return std::sqrt(d_unfit) - std::sqrt(d_fit);
  }

  metrics::ScoreSet score(std::span<const EmbeddingRecord> records) const {
    metrics::ScoreSet s;
    for (const EmbeddingRecord& r : records) {
      s.scores.push_back(score(r.vector));
      s.labels.push_back(embedstore::binary_label(r.condition));
    }
    return s;
  }
};

static_assert(CentroidScorer::kTrainableParameters == 0);

inline ExperimentOutcome run_zero_shot(std::span<const EmbeddingRecord> corpus, Mode mode, const ExperimentConfig& cfg) {
  require(mode == Mode::zero_shot_centroid || mode == Mode::zero_shot_probe, Errc::invalid_parameter,
          "run_zero_shot needs a zero-shot mode");
  const auto train = embedstore::select(corpus, Split::train);
  const auto test = embedstore::select(corpus, Split::test);
  detail::require_both_classes(train, "training split");
  detail::require_both_classes(test, "test split");

  ExperimentOutcome out;
  out.mode = mode;
  out.name = std::string(to_string(mode));
  if (mode == Mode::zero_shot_centroid) {
    const CentroidScorer scorer = CentroidScorer::from_records(train);
    out.report = metrics::evaluate(scorer.score(test), 0.0);
    out.details = {{"scorer", "centroid"}, {"trainable_parameters", CentroidScorer::kTrainableParameters},
                   {"score", "distance to unfit mean minus distance to fit mean"}};
    return out;
  }
  head::TrainConfig probe = effective_train_config(cfg);
  probe.depth = 0;
  const auto val = embedstore::select(corpus, Split::val);
  detail::Fitted fitted =
      detail::fit_head(embedstore::binary_view(train), embedstore::binary_view(val), probe, false);
  out.report = metrics::evaluate(detail::score_with_head(fitted.model, test), 0.0);
  out.details = fitted.details;
  out.details["scorer"] = "affine-probe";
  out.details["trainable_parameters"] = fitted.model.param_count();
  out.model = std::move(fitted.model);
  return out;
}

inline ExperimentOutcome run_fine_tune(std::span<const EmbeddingRecord> corpus, const ExperimentConfig& cfg) {
  const auto train = embedstore::select(corpus, Split::train);
  const auto val = embedstore::select(corpus, Split::val);
  const auto test = embedstore::select(corpus, Split::test);
  require(!train.empty(), Errc::empty_input, "corpus has no training split");
  require(!test.empty(), Errc::empty_input, "corpus has no test split");
  detail::require_both_classes(test, "test split");

  detail::Fitted fitted = detail::fit_head(embedstore::binary_view(train), embedstore::binary_view(val),
                                           effective_train_config(cfg), cfg.grid_search);
  ExperimentOutcome out;
  out.mode = Mode::fine_tune;
  out.name = "fine-tune";
  out.report = metrics::evaluate(detail::score_with_head(fitted.model, test), 0.0);
  out.details = fitted.details;
  out.details["layer_dims"] = fitted.model.layer_dims();
  out.model = std::move(fitted.model);
  return out;
}

/// One leave-one-out round: the held-out unfit condition is absent from
/// training and validation, and the test set is control(test) plus the
/// held-out condition's test records.
struct LooRotation {
  Condition held_out = Condition::alcohol;

  std::vector<Condition> train_conditions() const {
    std::vector<Condition> out{Condition::control};
    for (Condition c : embedstore::kUnfitConditions) {
      if (c != held_out) out.push_back(c);
    }
    return out;
  }
};

inline std::array<LooRotation, 3> loo_rotations() {
  return {LooRotation{Condition::alcohol}, LooRotation{Condition::drug}, LooRotation{Condition::sleep}};
}

struct LooOutcome {
  std::vector<ExperimentOutcome> rotations;
  /// Held-out records seen in training batches, per rotation.
  std::vector<std::size_t> leakage;
  /// Total mini-batch rows inspected by the guard, per rotation.
  std::vector<std::size_t> rows_checked;
};

inline LooOutcome run_loo(std::span<const EmbeddingRecord> corpus, const ExperimentConfig& cfg) {
  for (Condition c : embedstore::kConditions) {
    const bool present = std::any_of(corpus.begin(), corpus.end(), [c](const EmbeddingRecord& r) { return r.condition == c; });
    require(present, Errc::missing_condition, "corpus has no '" + std::string(embedstore::to_string(c)) + "' records");
  }

  LooOutcome out;
  for (const LooRotation& rot : loo_rotations()) {
    const std::vector<Condition> kept = rot.train_conditions();
    const std::array<Condition, 2> test_conditions{Condition::control, rot.held_out};
    const auto train = embedstore::select(corpus, {Split::train}, kept);
    const auto val = embedstore::select(corpus, {Split::val}, kept);
    const auto test = embedstore::select(corpus, {Split::test}, test_conditions);
    const std::string held = std::string(embedstore::to_string(rot.held_out));
    require(!train.empty(), Errc::empty_input, "rotation " + held + ": no training records");
    detail::require_both_classes(test, "rotation " + held + " test set");

    std::size_t leaked = 0;
    std::size_t checked = 0;
    const head::BatchObserver guard = [&](std::span<const std::size_t> rows) {
      for (std::size_t i : rows) {
        ++checked;
        if (train[i].condition == rot.held_out) ++leaked;
      }
    };
    detail::Fitted fitted = detail::fit_head(embedstore::binary_view(train), embedstore::binary_view(val),
                                             effective_train_config(cfg), false, guard);
    if (leaked != 0) {
      fail(Errc::assertion, "leakage guard: " + std::to_string(leaked) + " held-out '" + held +
                                "' records reached training batches");
    }

    ExperimentOutcome o;
    o.mode = Mode::loo;
    o.name = "loo-" + held;
    o.report = metrics::evaluate(detail::score_with_head(fitted.model, test), 0.0);
    json train_names = json::array();
    for (Condition c : kept) train_names.push_back(embedstore::to_string(c));
    o.details = fitted.details;
    o.details["held_out"] = held;
    o.details["train_conditions"] = train_names;
    o.details["test_composition"] = "control(test) + " + held + "(test)";
    o.details["leakage_count"] = leaked;
    o.details["guarded_rows"] = checked;
    o.model = std::move(fitted.model);
    out.rotations.push_back(std::move(o));
    out.leakage.push_back(leaked);
    out.rows_checked.push_back(checked);
  }
  return out;
}

inline const std::array<std::string_view, 5> kSummaryColumns = {"EER", "FNR10", "FNR20", "FNR100", "ACC"};

struct SummaryRow {
  std::string experiment;
  std::array<double, 5> values{};  // order of kSummaryColumns; ACC at the EER threshold
  bool operator==(const SummaryRow&) const = default;
};

inline std::vector<SummaryRow> summarize(std::span<const ExperimentOutcome> outcomes) {
  std::vector<SummaryRow> rows;
  for (const ExperimentOutcome& o : outcomes) {
    const metrics::EvalReport& r = o.report;
    rows.push_back({o.name,
                    {r.eer, r.fnr10.fnr, r.fnr20.fnr, r.fnr100.fnr, r.at_eer_threshold.accuracy.value_or(0.0)}});
  }
  return rows;
}

inline std::string summary_csv(std::span<const SummaryRow> rows, const report::ReportContext& ctx) {
  std::string out = "# seed=" + std::to_string(ctx.seed) + "\n# context=" + report::provenance_line(ctx) + "\n";
  out += "experiment";
  for (std::string_view c : kSummaryColumns) out += "," + std::string(c);
  out += "\n";
  for (const SummaryRow& row : rows) {
    out += row.experiment;
    for (double v : row.values) out += "," + report::format_number(v);
    out += "\n";
  }
  return out;
}

inline report::ReportContext context_for(const ExperimentOutcome& o, const ExperimentConfig& cfg) {
  return {o.name, std::string(to_string(o.mode)), cfg.seed, to_json(cfg), o.details};
}

/// Writes each outcome under `<out>/<name>/` (report, DET files, model when
/// one was trained) and `<out>/summary.csv`.
inline void write_outputs(std::span<const ExperimentOutcome> outcomes, const ExperimentConfig& cfg,
                          const std::filesystem::path& out_dir) {
  report::create_output_dir(out_dir);
  for (const ExperimentOutcome& o : outcomes) {
    const report::ReportContext ctx = context_for(o, cfg);
    const std::filesystem::path dir = out_dir / o.name;
    report::emit_report(o.report, ctx, dir);
    if (o.model) {
      head::TrainConfig t = effective_train_config(cfg);
      t.depth = o.model->hidden_layers();
      head::save_head(*o.model, dir / "model.ffd", t, {{"experiment", o.name}, {"context", to_json(cfg)}});
    }
  }
  report::ReportContext summary_ctx{"summary", std::string(to_string(cfg.mode)), cfg.seed, to_json(cfg), {}};
  embedstore::detail::write_atomically(out_dir / "summary.csv", summary_csv(summarize(outcomes), summary_ctx));
}

}  // namespace ffd::protocols
