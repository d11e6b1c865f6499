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

// Command-line routing. Each subcommand parses its flags, logs the resolved
// configuration, and calls into the library; errors map to exit codes by
// family (I/O 2, validation 3, assertion 4, usage 64).

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <ostream>
#include <regex>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ffd/embedstore.hpp"
#include "ffd/error.hpp"
#include "ffd/head.hpp"
#include "ffd/image_io.hpp"
#include "ffd/metrics.hpp"
#include "ffd/protocols.hpp"
#include "ffd/quality.hpp"
#include "ffd/report.hpp"

namespace ffd::cli {

using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitAssertion = 4;
inline constexpr int kExitUsage = 64;

constexpr int exit_code(ErrorFamily f) noexcept {
  switch (f) {
    case ErrorFamily::io: return kExitIo;
    case ErrorFamily::validation: return kExitValidation;
    case ErrorFamily::assertion: return kExitAssertion;
  }
  return 1;
}

/// Frames of one capture share a name up to a trailing `_<n>` / `-<n>`
/// frame counter, e.g. `s01_left_003.png` belongs to `s01_left`.
inline std::string capture_key(const std::filesystem::path& file) {
  static const std::regex kFrameSuffix("^(.*?)[_-][0-9]+$");
  const std::string stem = file.stem().string();
  std::smatch m;
  if (std::regex_match(stem, m, kFrameSuffix) && m[1].length() > 0) return m[1].str();
  return stem;
}

/// Groups the images in `dir` by capture and picks the sharpest frame of
/// each group.
inline json select_frames(const std::filesystem::path& dir, double sigma, std::size_t radius) {
  if (!std::filesystem::is_directory(dir)) fail(Errc::io, "input directory " + dir.string() + " does not exist");
  const quality::LogKernel kernel = radius == 0 ? quality::make_log_kernel(sigma) : quality::make_log_kernel(sigma, radius);
  std::map<std::string, std::vector<std::filesystem::path>> groups;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) groups[capture_key(entry.path())].push_back(entry.path());
  }
  require(!groups.empty(), Errc::empty_input, "no PNG/PGM images in " + dir.string());

  json out = json::array();
  for (auto& [key, files] : groups) {
    std::sort(files.begin(), files.end());
    std::vector<GrayImage> frames;
    frames.reserve(files.size());
    for (const auto& f : files) frames.push_back(read_image(f));
    const quality::FrameSelection sel = quality::select_best_frame(frames, kernel);
    json frame_list = json::array();
    for (std::size_t i = 0; i < files.size(); ++i) {
      frame_list.push_back({{"file", files[i].filename().string()}, {"sharpness", sel.scores[i].value}});
    }
    out.push_back({{"capture", key},
                   {"selected", files[sel.index].filename().string()},
                   {"index", sel.index},
                   {"sharpness", sel.score.value},
                   {"frames", frame_list}});
  }
  return json{{"kernel", {{"sigma", kernel.sigma}, {"radius", kernel.radius}}}, {"captures", out}};
}

namespace detail {

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

inline void log_config(const Streams& io, const std::string& command, const json& config) {
  io.err << "[ffd] " << command << " resolved config: " << config.dump() << "\n";
}

inline std::vector<embedstore::EmbeddingRecord> records_of_split(const std::vector<embedstore::EmbeddingRecord>& all,
                                                                 const std::string& split) {
  return embedstore::select(all, embedstore::parse_split(split));
}

}  // namespace detail

/// Parses argv and runs the selected subcommand. Returns the exit code.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const detail::Streams io{out, err};
  CLI::App app{"Fitness-for-duty evaluation toolkit", "ffd"};
  app.failure_message(CLI::FailureMessage::help);
  app.require_subcommand(1);
  std::function<void()> action;

  // select-frames
  std::string frames_input;
  std::string frames_out;
  double frames_sigma = quality::kDefaultSigma;
  std::size_t frames_radius = 0;
  auto* sel = app.add_subcommand("select-frames", "Pick the sharpest frame of each capture by LoG sharpness");
  sel->add_option("--input", frames_input, "Directory of PNG/PGM frames")->required();
  sel->add_option("--sigma", frames_sigma, "Gaussian sigma of the LoG kernel")->capture_default_str();
  sel->add_option("--radius", frames_radius, "Kernel radius in pixels (0 = ceil(4 sigma))")->capture_default_str();
  sel->add_option("--out", frames_out, "Selection manifest (JSON) to write")->required();
  sel->callback([&] {
    action = [&] {
      const json cfg{{"input", frames_input}, {"sigma", frames_sigma}, {"radius", frames_radius}, {"out", frames_out}};
      detail::log_config(io, "select-frames", cfg);
      json result = select_frames(frames_input, frames_sigma, frames_radius);
      result["config"] = cfg;
      const std::filesystem::path out_path(frames_out);
      if (out_path.has_parent_path()) report::create_output_dir(out_path.parent_path());
      embedstore::detail::write_atomically(out_path, result.dump(2) + "\n");
      io.out << "selected " << result["captures"].size() << " captures -> " << frames_out << "\n";
    };
  });

  // corpus validate | synth
  auto* corpus = app.add_subcommand("corpus", "Embedding corpus management");
  corpus->require_subcommand(1);
  std::string validate_path;
  auto* validate = corpus->add_subcommand("validate", "Check manifest/blob consistency");
  validate->add_option("path,--corpus", validate_path, "Corpus prefix or manifest path")->required();
  validate->callback([&] {
    action = [&] {
      detail::log_config(io, "corpus validate", {{"corpus", validate_path}});
      const embedstore::ValidationResult v = embedstore::validate_corpus(validate_path);
      for (const std::string& w : v.warnings) io.err << "[ffd] warning: " << w << "\n";
      io.out << "corpus '" << v.manifest.name << "' ok: " << v.manifest.records.size() << " records, dim "
             << v.manifest.dim << ", train " << v.manifest.split_total(embedstore::Split::train) << " / val "
             << v.manifest.split_total(embedstore::Split::val) << " / test "
             << v.manifest.split_total(embedstore::Split::test) << "\n";
    };
  });

  embedstore::SynthOptions synth_opt;
  std::string synth_out;
  std::string synth_backbone = "synthetic";
  std::vector<double> synth_scale;
  auto* synth = corpus->add_subcommand("synth", "Generate a synthetic Gaussian-cluster corpus");
  synth->add_option("--n", synth_opt.n_per_condition, "Records per condition")->capture_default_str();
  synth->add_option("--dim", synth_opt.dim, "Embedding width")->capture_default_str();
  synth->add_option("--separation", synth_opt.separation, "Fit/unfit mean distance in stddevs")->capture_default_str();
  synth->add_option("--seed", synth_opt.seed, "Random seed")->capture_default_str();
  synth->add_option("--condition-scale", synth_scale, "Per-condition multipliers: control alcohol drug sleep")
      ->expected(4);
  synth->add_option("--backbone-tag", synth_backbone, "Tag recorded in the manifest")->capture_default_str();
  synth->add_option("--out", synth_out, "Corpus prefix to write")->required();
  synth->callback([&] {
    action = [&] {
      if (!synth_scale.empty()) std::copy(synth_scale.begin(), synth_scale.end(), synth_opt.condition_scale.begin());
      const json prov = embedstore::synth_provenance(synth_opt);
      detail::log_config(io, "corpus synth", prov);
      const auto records = embedstore::synth_corpus(synth_opt);
      const embedstore::DatasetManifest m =
          embedstore::write_corpus(records, synth_out, {"", synth_backbone, prov});
      io.out << "wrote " << m.records.size() << " records (dim " << m.dim << ") to "
             << embedstore::corpus_paths(synth_out).manifest.string() << "\n";
    };
  });

  // train
  std::string train_corpus;
  std::string train_out;
  head::TrainConfig train_cfg;
  bool train_grid = false;
  auto* tr = app.add_subcommand("train", "Train a classification head on a corpus");
  tr->add_option("--corpus", train_corpus, "Corpus prefix or manifest path")->required();
  tr->add_option("--epochs", train_cfg.epochs, "Training epochs")->capture_default_str();
  tr->add_option("--lr", train_cfg.learning_rate, "Adam learning rate")->capture_default_str();
  tr->add_option("--layers", train_cfg.depth, "Hidden layers (prefix of 364,182,64; 0 = affine)")->capture_default_str();
  tr->add_option("--batch-size", train_cfg.batch_size, "Mini-batch size")->capture_default_str();
  tr->add_option("--seed", train_cfg.seed, "Random seed")->capture_default_str();
  tr->add_flag("--grid", train_grid, "Grid-search depth {1,2,3} x lr {1e-3,1e-4} on the validation split");
  tr->add_option("--out", train_out, "Model file to write")->required();
  tr->callback([&] {
    action = [&] {
      head::validate(train_cfg);
      json cfg = head::to_json(train_cfg);
      cfg["corpus"] = train_corpus;
      cfg["grid"] = train_grid;
      detail::log_config(io, "train", cfg);
      const embedstore::Corpus c = embedstore::read_corpus(train_corpus);
      const auto train_set = embedstore::binary_view(detail::records_of_split(c.records, "train"));
      const auto val_set = embedstore::binary_view(detail::records_of_split(c.records, "val"));
      protocols::detail::Fitted fitted = protocols::detail::fit_head(train_set, val_set, train_cfg, train_grid);
      head::TrainConfig saved = train_cfg;
      saved.depth = fitted.model.hidden_layers();
      if (fitted.details.contains("grid")) {
        saved.learning_rate = fitted.details["grid"]["winner"]["learning_rate"].get<double>();
      }
      head::save_head(fitted.model, train_out, saved, {{"corpus", train_corpus}, {"training", fitted.details}});
      const json& t = fitted.details["training"];
      io.out << "trained head " << json(fitted.model.layer_dims()).dump() << ", best epoch " << t["best_epoch"]
             << ", best val EER " << t["best_val_eer"].dump() << " -> " << train_out << "\n";
    };
  });

  // evaluate
  std::string eval_model;
  std::string eval_corpus;
  std::string eval_split = "test";
  std::string eval_report;
  auto* ev = app.add_subcommand("evaluate", "Score a corpus split with a trained head and write a report");
  ev->add_option("--model", eval_model, "Model file")->required();
  ev->add_option("--corpus", eval_corpus, "Corpus prefix or manifest path")->required();
  ev->add_option("--split", eval_split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  ev->add_option("--report", eval_report, "Output directory")->required();
  ev->callback([&] {
    action = [&] {
      const head::LoadedHead loaded = head::load_head(eval_model);
      const json cfg{{"model", eval_model}, {"corpus", eval_corpus}, {"split", eval_split},
                     {"model_config", loaded.header.value("config", json::object())}};
      detail::log_config(io, "evaluate", cfg);
      const embedstore::Corpus c = embedstore::read_corpus(eval_corpus);
      const auto set = embedstore::binary_view(detail::records_of_split(c.records, eval_split));
      require(!set.empty(), Errc::empty_input, "split '" + eval_split + "' is empty");
      const metrics::ScoreSet scores{head::logits(loaded.head, set.features), set.labels};
      const metrics::EvalReport r = metrics::evaluate(scores, 0.0);
      report::ReportContext ctx{"evaluate", "evaluate", loaded.header.value("seed", std::uint64_t{0}), cfg, {}};
      report::emit_report(r, ctx, eval_report);
      io.out << "EER " << r.eer << ", FNR10 " << r.fnr10.fnr << ", FNR20 " << r.fnr20.fnr << ", FNR100 "
             << r.fnr100.fnr << " -> " << eval_report << "\n";
    };
  });

  // run
  std::string run_mode;
  std::string run_corpus;
  std::string run_config;
  std::string run_out;
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "Run an experiment protocol");
  run->add_option("--mode", run_mode, "Protocol")
      ->required()
      ->check(CLI::IsMember({"zero-shot", "zero-shot-centroid", "zero-shot-probe", "fine-tune", "loo"}));
  run->add_option("--corpus", run_corpus, "Corpus prefix or manifest path")->required();
  run->add_option("--config", run_config, "Experiment config (JSON)");
  run->add_option("--seed", run_seed, "Override the config seed");
  run->add_option("--out", run_out, "Output directory")->required();
  run->callback([&] {
    action = [&] {
      protocols::ExperimentConfig cfg;
      if (!run_config.empty()) {
        const std::string text = embedstore::detail::read_file(run_config);
        json j;
        try {
          j = json::parse(text);
        } catch (const json::exception& e) {
          fail(Errc::schema, run_config + ": " + e.what());
        }
        cfg = protocols::experiment_config_from_json(j);
      }
      cfg.corpus = run_corpus;
      cfg.output_dir = run_out;
      if (run_seed) cfg.seed = *run_seed;
      std::vector<protocols::Mode> modes;
      if (run_mode == "zero-shot") {
        modes = {protocols::Mode::zero_shot_centroid, protocols::Mode::zero_shot_probe};
      } else {
        modes = {protocols::parse_mode(run_mode)};
      }
      cfg.mode = modes.front();
      detail::log_config(io, "run", protocols::to_json(cfg));

      const embedstore::Corpus c = embedstore::read_corpus(cfg.corpus);
      std::vector<protocols::ExperimentOutcome> outcomes;
      for (protocols::Mode m : modes) {
        switch (m) {
          case protocols::Mode::zero_shot_centroid:
          case protocols::Mode::zero_shot_probe:
            outcomes.push_back(protocols::run_zero_shot(c.records, m, cfg));
            break;
          case protocols::Mode::fine_tune:
            outcomes.push_back(protocols::run_fine_tune(c.records, cfg));
            break;
          case protocols::Mode::loo: {
            protocols::LooOutcome loo = protocols::run_loo(c.records, cfg);
            for (auto& o : loo.rotations) outcomes.push_back(std::move(o));
            break;
          }
        }
      }
      protocols::write_outputs(outcomes, cfg, cfg.output_dir);
      for (const protocols::SummaryRow& row : protocols::summarize(outcomes)) {
        io.out << row.experiment;
        for (std::size_t i = 0; i < row.values.size(); ++i) {
          io.out << " " << protocols::kSummaryColumns[i] << "=" << report::format_number(row.values[i]);
        }
        io.out << "\n";
      }
    };
  });

  // report
  std::string report_in;
  auto* rep = app.add_subcommand("report", "Re-render DET plots from existing det.csv files");
  rep->add_option("--in", report_in, "Report directory (searched recursively for det.csv)")->required();
  rep->callback([&] {
    action = [&] {
      detail::log_config(io, "report", {{"in", report_in}});
      if (!std::filesystem::is_directory(report_in)) fail(Errc::io, report_in + " is not a directory");
      std::vector<std::filesystem::path> dirs;
      if (std::filesystem::exists(std::filesystem::path(report_in) / "det.csv")) dirs.emplace_back(report_in);
      for (const auto& e : std::filesystem::recursive_directory_iterator(report_in)) {
        if (e.is_directory() && std::filesystem::exists(e.path() / "det.csv")) dirs.push_back(e.path());
      }
      require(!dirs.empty(), Errc::empty_input, "no det.csv under " + report_in);
      std::sort(dirs.begin(), dirs.end());
      for (const auto& d : dirs) io.out << "rendered " << report::rerender_svg(d).string() << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, io.out, io.err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const Error& e) {
    io.err << "[ffd] error: " << e.what() << "\n";
    return exit_code(e.family());
  } catch (const std::filesystem::filesystem_error& e) {
    io.err << "[ffd] error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    io.err << "[ffd] error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ffd::cli
