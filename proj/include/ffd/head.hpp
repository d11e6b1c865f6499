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

// Trainable classification head over frozen embeddings: fully connected
// layers with GELU between hidden layers and a sigmoid output, trained with
// Adam on mean binary cross-entropy. Gradients are analytic.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ffd/embedstore.hpp"
#include "ffd/error.hpp"
#include "ffd/matrix.hpp"
#include "ffd/metrics.hpp"
#include "ffd/random.hpp"

namespace ffd::head {

using json = nlohmann::json;
using embedstore::LabeledSet;

/// Exact GELU, x * Phi(x).
inline double gelu(double x) { return 0.5 * x * std::erfc(-x / std::numbers::sqrt2); }

inline double gelu_derivative(double x) {
  const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline const std::vector<std::size_t> kDefaultHiddenDims = {364, 182, 64};

/// Layer widths from input to the single output unit. Parameters live in
/// one flat buffer: for each layer its weight matrix (out x in, row-major)
/// followed by its bias vector.
class MlpHead {
 public:
  MlpHead() = default;

  explicit MlpHead(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
    require(dims_.size() >= 2, Errc::shape, "head needs an input and an output width");
    require(dims_.back() == 1, Errc::shape, "head output width must be 1");
    for (std::size_t d : dims_) require(d >= 1, Errc::shape, "layer widths must be positive");
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      offsets_.push_back(offsets_.back() + dims_[l + 1] * dims_[l] + dims_[l + 1]);
    }
    params_.assign(offsets_.back(), 0.0);
  }

  /// Input width D followed by the first `depth` entries of `hidden`.
  static MlpHead with_depth(std::size_t input_dim, std::size_t depth,
                            std::span<const std::size_t> hidden = kDefaultHiddenDims) {
    require(depth <= hidden.size(), Errc::invalid_parameter,
            "depth " + std::to_string(depth) + " exceeds the " + std::to_string(hidden.size()) + " hidden widths");
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.begin() + static_cast<std::ptrdiff_t>(depth));
    dims.push_back(1);
    return MlpHead(std::move(dims));
  }

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::size_t num_layers() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
  std::size_t hidden_layers() const noexcept { return num_layers() == 0 ? 0 : num_layers() - 1; }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t param_count() const noexcept { return params_.size(); }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  std::span<double> weights(std::size_t l) { return {params_.data() + offsets_[l], dims_[l + 1] * dims_[l]}; }
  std::span<const double> weights(std::size_t l) const {
    return {params_.data() + offsets_[l], dims_[l + 1] * dims_[l]};
  }
  std::span<double> biases(std::size_t l) {
    return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
  }
  std::span<const double> biases(std::size_t l) const {
    return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
  }

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
  void init_uniform(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 3));
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const double limit = std::sqrt(6.0 / static_cast<double>(dims_[l] + dims_[l + 1]));
      for (double& w : weights(l)) w = rng.uniform(-limit, limit);
      std::fill(biases(l).begin(), biases(l).end(), 0.0);
    }
  }

  /// Rounds every parameter to float32, the precision of the model file.
  void round_to_float32() {
    for (double& p : params_) p = static_cast<double>(static_cast<float>(p));
  }

  bool operator==(const MlpHead&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

struct ForwardCache {
  std::vector<Matrix> pre;         // per layer: affine output
  std::vector<Matrix> act;         // act[0] is the input, act[l + 1] = gelu(pre[l]) for hidden layers
  std::vector<double> logits;
  std::vector<double> probabilities;
};

namespace detail {

// out = in * W^T + b
inline Matrix affine(const Matrix& in, std::span<const double> w, std::span<const double> b, std::size_t out_dim) {
  Matrix out(in.rows, out_dim);
  for (std::size_t i = 0; i < in.rows; ++i) {
    const auto x = in.row(i);
    auto y = out.row(i);
    for (std::size_t j = 0; j < out_dim; ++j) {
      const double* wj = w.data() + j * in.cols;
      double acc = b[j];
      for (std::size_t k = 0; k < in.cols; ++k) acc += wj[k] * x[k];
      y[j] = acc;
    }
  }
  return out;
}

}  // namespace detail

inline ForwardCache forward(const MlpHead& head, const Matrix& batch) {
  require(batch.cols == head.input_dim(), Errc::shape,
          "batch width " + std::to_string(batch.cols) + " does not match head input " +
              std::to_string(head.input_dim()));
  for (double v : batch.data) require(std::isfinite(v), Errc::invalid_input, "non-finite input to head");

  ForwardCache cache;
  cache.act.push_back(batch);
  const auto& dims = head.layer_dims();
  for (std::size_t l = 0; l < head.num_layers(); ++l) {
    cache.pre.push_back(detail::affine(cache.act.back(), head.weights(l), head.biases(l), dims[l + 1]));
    if (l + 1 < head.num_layers()) {
      Matrix a = cache.pre.back();
      for (double& v : a.data) v = gelu(v);
      cache.act.push_back(std::move(a));
    }
  }
  cache.logits = cache.pre.back().data;
  cache.probabilities.reserve(cache.logits.size());
  constexpr double kLow = std::numeric_limits<double>::denorm_min();
  constexpr double kHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  for (double z : cache.logits) cache.probabilities.push_back(std::clamp(sigmoid(z), kLow, kHigh));
  return cache;
}

/// Output logits; these are the scores handed to the metrics.
inline std::vector<double> logits(const MlpHead& head, const Matrix& batch) { return forward(head, batch).logits; }

inline constexpr double kLossClamp = 1e-7;

struct Gradients {
  std::vector<double> values;  // same layout as MlpHead::params()
  double loss = 0.0;
};

/// Mean binary cross-entropy and its exact gradient. The probability is
/// clamped to [1e-7, 1 - 1e-7] inside the loss value only.
inline Gradients backward(const MlpHead& head, const ForwardCache& cache, std::span<const int> labels) {
  const std::size_t n = cache.logits.size();
  require(labels.size() == n, Errc::shape, "label count does not match the forward batch");
  require(n >= 1, Errc::empty_input, "empty batch");
  for (int y : labels) require(y == 0 || y == 1, Errc::invalid_label, "labels must be 0 or 1");

  Gradients g;
  g.values.assign(head.param_count(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);

  Matrix delta(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(cache.probabilities[i], kLossClamp, 1.0 - kLossClamp);
    g.loss -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
    delta(i, 0) = (sigmoid(cache.logits[i]) - static_cast<double>(labels[i])) * inv_n;
  }
  g.loss *= inv_n;

  // Parameter offsets in the flat layout.
  std::vector<std::size_t> offset{0};
  const auto& dims = head.layer_dims();
  for (std::size_t l = 0; l < head.num_layers(); ++l) offset.push_back(offset.back() + dims[l + 1] * dims[l] + dims[l + 1]);

  for (std::size_t l = head.num_layers(); l-- > 0;) {
    const Matrix& input = cache.act[l];
    const std::size_t in_dim = dims[l];
    const std::size_t out_dim = dims[l + 1];
    double* dw = g.values.data() + offset[l];
    double* db = dw + out_dim * in_dim;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = input.row(i);
      const auto d = delta.row(i);
      for (std::size_t j = 0; j < out_dim; ++j) {
        const double dj = d[j];
        if (dj == 0.0) continue;
        double* row = dw + j * in_dim;
        for (std::size_t k = 0; k < in_dim; ++k) row[k] += dj * x[k];
        db[j] += dj;
      }
    }
    if (l == 0) break;

    // Propagate through W and the GELU of the previous layer.
    const auto w = head.weights(l);
    Matrix prev(n, in_dim);
    for (std::size_t i = 0; i < n; ++i) {
      auto out = prev.row(i);
      const auto d = delta.row(i);
      for (std::size_t j = 0; j < out_dim; ++j) {
        const double dj = d[j];
        if (dj == 0.0) continue;
        const double* wj = w.data() + j * in_dim;
        for (std::size_t k = 0; k < in_dim; ++k) out[k] += dj * wj[k];
      }
      const auto z = cache.pre[l - 1].row(i);
      for (std::size_t k = 0; k < in_dim; ++k) out[k] *= gelu_derivative(z[k]);
    }
    delta = std::move(prev);
  }
  return g;
}

/// Adam with bias correction.
struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  static AdamState for_size(std::size_t n, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    s.first_moment.assign(n, 0.0);
    s.second_moment.assign(n, 0.0);
    return s;
  }
};

inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size() &&
              params.size() == state.second_moment.size(),
          Errc::shape, "Adam parameter, gradient and state shapes differ");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

struct TrainConfig {
  std::size_t epochs = 50;
  double learning_rate = 1e-4;
  std::size_t batch_size = 256;
  std::uint64_t seed = 7;
  std::vector<std::size_t> hidden_dims = kDefaultHiddenDims;
  /// Number of hidden layers used (a prefix of hidden_dims). 0 is an affine probe.
  std::size_t depth = 3;
  std::vector<std::size_t> depth_grid = {1, 2, 3};
  std::vector<double> lr_grid = {1e-3, 1e-4};
};

inline void validate(const TrainConfig& cfg) {
  require(cfg.epochs >= 1, Errc::invalid_parameter, "epochs must be at least 1");
  require(std::isfinite(cfg.learning_rate) && cfg.learning_rate > 0.0, Errc::invalid_parameter,
          "learning rate must be positive");
  require(cfg.batch_size >= 1, Errc::invalid_parameter, "batch size must be at least 1");
  require(cfg.depth <= cfg.hidden_dims.size(), Errc::invalid_parameter, "depth exceeds the hidden widths");
  require(!cfg.depth_grid.empty() && !cfg.lr_grid.empty(), Errc::invalid_parameter, "grids must be nonempty");
  for (std::size_t d : cfg.depth_grid) {
    require(d <= cfg.hidden_dims.size(), Errc::invalid_parameter, "depth grid entry exceeds the hidden widths");
  }
  for (double lr : cfg.lr_grid) {
    require(std::isfinite(lr) && lr > 0.0, Errc::invalid_parameter, "lr grid entries must be positive");
  }
}

inline json to_json(const TrainConfig& cfg) {
  return json{{"epochs", cfg.epochs},         {"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size}, {"seed", cfg.seed},
              {"hidden_dims", cfg.hidden_dims}, {"depth", cfg.depth},
              {"depth_grid", cfg.depth_grid}, {"lr_grid", cfg.lr_grid}};
}

/// Missing keys keep their defaults.
inline TrainConfig train_config_from_json(const json& j, TrainConfig cfg = {}) {
  try {
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.hidden_dims = j.value("hidden_dims", cfg.hidden_dims);
    cfg.depth = j.value("depth", cfg.depth);
    cfg.depth_grid = j.value("depth_grid", cfg.depth_grid);
    cfg.lr_grid = j.value("lr_grid", cfg.lr_grid);
  } catch (const json::exception& e) {
    fail(Errc::schema, std::string("bad training config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_eer;
  std::optional<double> val_loss;
};

struct TrainResult {
  /// Snapshot with the lowest validation EER, ties going to the lower
  /// validation loss (last epoch if there is no validation set).
  MlpHead best;
  MlpHead last;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_eer;
};

/// Receives the training-set row indices of every mini-batch.
using BatchObserver = std::function<void(std::span<const std::size_t>)>;

inline void check_labeled_set(const LabeledSet& set, const char* what) {
  require(set.features.rows == set.labels.size(), Errc::shape, std::string(what) + ": feature/label count mismatch");
  for (int y : set.labels) require(y == 0 || y == 1, Errc::invalid_label, std::string(what) + ": labels must be 0 or 1");
}

struct ValidationScore {
  double eer = 1.0;
  double loss = 0.0;
};

inline ValidationScore validate_head(const MlpHead& head, const LabeledSet& val) {
  const ForwardCache cache = forward(head, val.features);
  double loss = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const double p = std::clamp(cache.probabilities[i], kLossClamp, 1.0 - kLossClamp);
    loss -= val.labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  const metrics::ScoreSet scores{cache.logits, val.labels};
  return {metrics::eer(metrics::det_curve(scores)).eer, loss / static_cast<double>(val.size())};
}

/// Mini-batch Adam over a seeded per-epoch shuffle. The batch partition
/// sequence depends only on the seed and the training-set size.
inline TrainResult train(const LabeledSet& train_set, const LabeledSet& val_set, const TrainConfig& cfg,
                         const BatchObserver& observer = {}) {
  validate(cfg);
  require(!train_set.empty(), Errc::empty_input, "training set is empty");
  check_labeled_set(train_set, "training set");
  check_labeled_set(val_set, "validation set");
  if (!val_set.empty()) {
    require(val_set.features.cols == train_set.features.cols, Errc::shape, "validation width differs from training");
  }

  MlpHead head = MlpHead::with_depth(train_set.features.cols, cfg.depth, cfg.hidden_dims);
  head.init_uniform(cfg.seed);
  AdamState adam = AdamState::for_size(head.param_count(), cfg.learning_rate);
  Rng shuffler(mix_seed(cfg.seed, 4));

  TrainResult result;
  const std::size_t n = train_set.size();
  const std::size_t dim = train_set.features.cols;
  std::vector<std::size_t> order(n);
  double best_val_loss = 0.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffler.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      if (observer) observer(idx);
      Matrix batch(idx.size(), dim);
      std::vector<int> labels(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto src = train_set.features.row(idx[b]);
        std::copy(src.begin(), src.end(), batch.row(b).begin());
        labels[b] = train_set.labels[idx[b]];
      }
      const ForwardCache cache = forward(head, batch);
      const Gradients grads = backward(head, cache, labels);
      loss_sum += grads.loss * static_cast<double>(idx.size());
      adam_step(head.params(), grads.values, adam);
    }

    EpochStats stats{epoch, loss_sum / static_cast<double>(n), std::nullopt, std::nullopt};
    if (!val_set.empty()) {
      const ValidationScore v = validate_head(head, val_set);
      stats.val_eer = v.eer;
      stats.val_loss = v.loss;
      if (!result.best_val_eer || v.eer < *result.best_val_eer ||
          (v.eer == *result.best_val_eer && v.loss < best_val_loss)) {
        result.best_val_eer = v.eer;
        result.best_epoch = epoch;
        result.best = head;
        best_val_loss = v.loss;
      }
    }
    result.history.push_back(stats);
  }
  result.last = head;
  if (!result.best_val_eer) {
    result.best = head;
    result.best_epoch = cfg.epochs;
  }
  return result;
}

struct GridCell {
  std::size_t depth = 0;
  double learning_rate = 0.0;
  double val_eer = 1.0;
  std::size_t best_epoch = 0;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
  TrainConfig best_config;
  TrainResult best_result;
};

/// One training run per (depth, lr) cell; winner is the lowest validation
/// EER, ties broken by fewer layers and then smaller learning rate.
inline GridResult grid_search(const LabeledSet& train_set, const LabeledSet& val_set, const TrainConfig& cfg) {
  validate(cfg);
  require(!val_set.empty(), Errc::empty_input, "grid search needs a validation set");
  GridResult out;
  std::optional<TrainResult> best_result;
  for (std::size_t depth : cfg.depth_grid) {
    for (double lr : cfg.lr_grid) {
      TrainConfig cell_cfg = cfg;
      cell_cfg.depth = depth;
      cell_cfg.learning_rate = lr;
      TrainResult run;
      try {
        run = train(train_set, val_set, cell_cfg);
      } catch (const Error& e) {
        throw Error(e.code(), "grid cell (depth=" + std::to_string(depth) + ", lr=" + std::to_string(lr) +
                                  "): " + e.what());
      }
      const GridCell cell{depth, lr, *run.best_val_eer, run.best_epoch};
      const bool better = [&] {
        if (!best_result) return true;
        const GridCell& cur = out.cells[out.best];
        if (cell.val_eer != cur.val_eer) return cell.val_eer < cur.val_eer;
        if (cell.depth != cur.depth) return cell.depth < cur.depth;
        return cell.learning_rate < cur.learning_rate;
      }();
      out.cells.push_back(cell);
      if (better) {
        out.best = out.cells.size() - 1;
        out.best_config = cell_cfg;
        best_result = std::move(run);
      }
    }
  }
  out.best_result = std::move(*best_result);
  return out;
}

inline constexpr std::string_view kModelMagic = "FFDHEAD 1";

/// Model file: a magic line, a one-line JSON header (layer dims,
/// activation, seed, training config, caller metadata), then the parameters
/// as float32 little-endian in MlpHead::params() order.
inline void save_head(const MlpHead& head, const std::filesystem::path& path, const TrainConfig& cfg,
                      const json& metadata = json::object()) {
  json header{{"format", "ffd-mlp-head"},
              {"layer_dims", head.layer_dims()},
              {"activation", "gelu"},
              {"output", "sigmoid"},
              {"dtype", embedstore::kDtype},
              {"param_count", head.param_count()},
              {"seed", cfg.seed},
              {"config", to_json(cfg)},
              {"metadata", metadata}};
  std::string bytes = std::string(kModelMagic) + "\n" + header.dump() + "\n";
  bytes.reserve(bytes.size() + head.param_count() * 4);
  for (double p : head.params()) embedstore::detail::append_f32_le(bytes, static_cast<float>(p));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  embedstore::detail::write_atomically(path, bytes);
}

struct LoadedHead {
  MlpHead head;
  json header;
};

inline LoadedHead load_head(const std::filesystem::path& path) {
  const std::string bytes = embedstore::detail::read_file(path);
  const std::size_t magic_end = bytes.find('\n');
  require(magic_end != std::string::npos && bytes.compare(0, magic_end, kModelMagic) == 0, Errc::schema,
          path.string() + ": not a head model file");
  const std::size_t header_end = bytes.find('\n', magic_end + 1);
  require(header_end != std::string::npos, Errc::schema, path.string() + ": missing model header");
  LoadedHead out;
  try {
    out.header = json::parse(bytes.substr(magic_end + 1, header_end - magic_end - 1));
    out.head = MlpHead(out.header.at("layer_dims").get<std::vector<std::size_t>>());
    require(out.header.at("param_count").get<std::size_t>() == out.head.param_count(), Errc::schema,
            path.string() + ": param_count disagrees with layer dims");
  } catch (const json::exception& e) {
    fail(Errc::schema, path.string() + ": " + e.what());
  }
  const std::size_t blob = bytes.size() - header_end - 1;
  require(blob == out.head.param_count() * 4, Errc::corrupt_corpus,
          path.string() + ": parameter blob holds " + std::to_string(blob) + " bytes, expected " +
              std::to_string(out.head.param_count() * 4));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + header_end + 1);
  auto params = out.head.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float v = embedstore::detail::load_f32_le(p + 4 * i);
    require(std::isfinite(v), Errc::corrupt_corpus, path.string() + ": non-finite parameter");
    params[i] = v;
  }
  return out;
}

}  // namespace ffd::head
