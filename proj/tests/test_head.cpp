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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

#include "ffd/head.hpp"
#include "test_support.hpp"

using namespace ffd;
using namespace ffd::head;
using Catch::Approx;

TEST_CASE("GELU values", "[head][gelu]") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(std::abs(gelu(10.0) - 10.0) < 1e-9);
  // x*Phi(x) - x*Phi(-x) = x
  CHECK(gelu(-1.3) == Approx(-1.3 + gelu(1.3)).margin(1e-15));
  CHECK(gelu(1.0) == Approx(0.8413447460685429).epsilon(1e-14));
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double h = 1e-6;
    CHECK(gelu_derivative(x) == Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("forward: closed forms", "[head][forward]") {
  MlpHead zero = MlpHead::with_depth(5, 2, std::vector<std::size_t>{4, 3});
  Matrix x(3, 5, 0.7);
  for (double p : forward(zero, x).probabilities) CHECK(p == 0.5);

  MlpHead affine({3, 1});
  const std::vector<double> w = {0.5, -1.0, 2.0};
  std::copy(w.begin(), w.end(), affine.weights(0).begin());
  affine.biases(0)[0] = 0.25;
  Matrix v(1, 3);
  v.data = {1.0, 2.0, 0.5};
  const double z = 0.5 * 1.0 - 1.0 * 2.0 + 2.0 * 0.5 + 0.25;
  CHECK(forward(affine, v).probabilities[0] == Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-15));

  MlpHead deep = MlpHead::with_depth(4, 3, std::vector<std::size_t>{6, 5, 3});
  deep.init_uniform(3);
  Matrix twin(2, 4);
  twin.data = {0.1, -0.2, 0.3, 0.9, 0.1, -0.2, 0.3, 0.9};
  const auto p = forward(deep, twin).probabilities;
  CHECK(p[0] == p[1]);
}

TEST_CASE("forward: errors", "[head][forward][errors]") {
  MlpHead h = MlpHead::with_depth(4, 1, std::vector<std::size_t>{3});
  try {
    forward(h, Matrix(2, 5));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::shape);
  }
  Matrix bad(1, 4);
  bad.data[2] = std::numeric_limits<double>::infinity();
  try {
    forward(h, bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_input);
  }
}

TEST_CASE("probabilities stay inside (0,1) and the loss stays finite", "[head][forward][property]") {
  MlpHead h({2, 1});
  h.weights(0)[0] = 1000.0;
  Matrix x(2, 2);
  x.data = {5.0, 0.0, -5.0, 0.0};
  const ForwardCache c = forward(h, x);
  CHECK(c.probabilities[0] < 1.0);
  CHECK(c.probabilities[1] > 0.0);
  const std::vector<int> wrong = {0, 1};
  const Gradients g = backward(h, c, wrong);
  CHECK(std::isfinite(g.loss));
  CHECK(g.loss == Approx(-std::log(1e-7)));
}

TEST_CASE("backward: loss of an uninformed prediction is ln 2", "[head][backward]") {
  MlpHead h({3, 1});
  Matrix x(1, 3, 0.4);
  const std::vector<int> y = {1};
  CHECK(backward(h, forward(h, x), y).loss == Approx(std::numbers::ln2).epsilon(1e-14));
}

TEST_CASE("backward matches central finite differences on an 8-4-1 head", "[head][backward][gradcheck]") {
  MlpHead h = MlpHead::with_depth(8, 1, std::vector<std::size_t>{4});
  h.init_uniform(21);
  Rng rng(22);
  for (double& b : h.biases(0)) b = rng.uniform(-0.5, 0.5);
  Matrix x(16, 8);
  for (double& v : x.data) v = rng.normal();
  std::vector<int> y;
  for (int i = 0; i < 16; ++i) y.push_back(i % 3 == 0 ? 1 : 0);
  const Gradients g = backward(h, forward(h, x), y);
  CHECK(g.loss == Approx(testing::reference_loss(h, x, y)).epsilon(1e-13));
  CHECK(testing::max_relative_error(g.values, testing::finite_difference_gradient(h, x, y)) < 1e-4);
}

TEST_CASE("backward matches finite differences for depths 0-3", "[head][backward][gradcheck][property]") {
  for (std::size_t depth = 0; depth <= 3; ++depth) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const testing::GradientProblem p = testing::random_gradient_problem(depth, seed);
      const Gradients g = backward(p.head, forward(p.head, p.x), p.y);
      INFO("depth " << depth << " seed " << seed);
      CHECK(testing::max_relative_error(g.values, testing::finite_difference_gradient(p.head, p.x, p.y)) < 1e-4);
    }
  }
}

TEST_CASE("backward: duplicating the batch leaves mean gradients unchanged", "[head][backward]") {
  const testing::GradientProblem p = testing::random_gradient_problem(2, 5);
  Matrix doubled(p.x.rows * 2, p.x.cols);
  std::vector<int> y2;
  for (std::size_t i = 0; i < p.x.rows; ++i) {
    for (int rep = 0; rep < 2; ++rep) {
      std::copy(p.x.row(i).begin(), p.x.row(i).end(), doubled.row(2 * i + rep).begin());
      y2.push_back(p.y[i]);
    }
  }
  const Gradients a = backward(p.head, forward(p.head, p.x), p.y);
  const Gradients b = backward(p.head, forward(p.head, doubled), y2);
  CHECK(a.loss == Approx(b.loss).epsilon(1e-14));
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == Approx(b.values[i]).margin(1e-15).epsilon(1e-12));
}

TEST_CASE("backward rejects labels outside {0,1}", "[head][backward][errors]") {
  MlpHead h({2, 1});
  Matrix x(2, 2, 0.1);
  const std::vector<int> y = {1, 2};
  try {
    backward(h, forward(h, x), y);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_label);
  }
}

TEST_CASE("Adam first step moves each parameter by about lr against the gradient", "[head][adam]") {
  std::vector<double> params = {1.0, -2.0, 0.5};
  const std::vector<double> grads = {0.3, -4.0, 1e-3};
  AdamState s = AdamState::for_size(3, 1e-4);
  const std::vector<double> before = params;
  adam_step(params, grads, s);
  CHECK(s.step == 1);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double delta = params[i] - before[i];
    CHECK(delta == Approx(-1e-4 * grads[i] / (std::abs(grads[i]) + 1e-8)).epsilon(1e-12));
    CHECK(std::abs(delta) == Approx(1e-4).epsilon(1e-4));
  }
}

TEST_CASE("Adam with zero gradients leaves parameters unchanged", "[head][adam]") {
  std::vector<double> params = {1.0, -2.0};
  const std::vector<double> zeros = {0.0, 0.0};
  AdamState s = AdamState::for_size(2, 1e-3);
  for (int i = 0; i < 100; ++i) adam_step(params, zeros, s);
  CHECK(params == std::vector<double>{1.0, -2.0});
}

TEST_CASE("Adam is elementwise: split and joint updates agree", "[head][adam]") {
  Rng rng(8);
  std::vector<double> joint(10);
  for (double& v : joint) v = rng.normal();
  std::vector<double> left(joint.begin(), joint.begin() + 4);
  std::vector<double> right(joint.begin() + 4, joint.end());
  AdamState sj = AdamState::for_size(10, 1e-3);
  AdamState sl = AdamState::for_size(4, 1e-3);
  AdamState sr = AdamState::for_size(6, 1e-3);
  for (int step = 0; step < 20; ++step) {
    std::vector<double> g(10);
    for (double& v : g) v = rng.normal();
    adam_step(joint, g, sj);
    adam_step(left, std::span<const double>(g).first(4), sl);
    adam_step(right, std::span<const double>(g).subspan(4), sr);
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(left[i] == joint[i]);
  for (std::size_t i = 0; i < 6; ++i) CHECK(right[i] == joint[4 + i]);

  AdamState wrong = AdamState::for_size(3, 1e-3);
  try {
    adam_step(joint, std::vector<double>(10, 0.0), wrong);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::shape);
  }
}

TEST_CASE("training separates well-separated clusters", "[head][train]") {
  const auto train_set = testing::two_class_set(200, 16, 8.0, 31);
  TrainConfig cfg;
  cfg.hidden_dims = {32, 16, 8};
  cfg.depth = 3;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 32;
  cfg.epochs = 50;
  const TrainResult r = train(train_set, {}, cfg);
  const auto z = logits(r.best, train_set.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < z.size(); ++i) correct += (z[i] >= 0.0) == (train_set.labels[i] == 1);
  CHECK(static_cast<double>(correct) / static_cast<double>(z.size()) >= 0.99);
  CHECK(r.best_epoch == cfg.epochs);
  CHECK(r.best == r.last);
}

TEST_CASE("training on indistinguishable classes stays at chance", "[head][train]") {
  const auto train_set = testing::two_class_set(300, 16, 0.0, 41);
  const auto val_set = testing::two_class_set(1000, 16, 0.0, 42);
  TrainConfig cfg;
  cfg.hidden_dims = {32, 16, 8};
  cfg.epochs = 10;
  cfg.learning_rate = 1e-3;
  const TrainResult r = train(train_set, val_set, cfg);
  REQUIRE(r.history.back().val_eer.has_value());
  CHECK(*r.history.back().val_eer >= 0.45);
  CHECK(*r.history.back().val_eer <= 0.55);
}

TEST_CASE("training is deterministic and loss decreases", "[head][train][property]") {
  const auto train_set = testing::two_class_set(150, 12, 4.0, 51);
  const auto val_set = testing::two_class_set(60, 12, 4.0, 52);
  TrainConfig cfg;
  cfg.hidden_dims = {24, 12, 6};
  cfg.epochs = 12;
  cfg.batch_size = 64;
  cfg.learning_rate = 1e-3;
  const TrainResult a = train(train_set, val_set, cfg);
  const TrainResult b = train(train_set, val_set, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_eer == b.history[i].val_eer);
  }
  CHECK(a.best == b.best);
  CHECK(a.history[4].train_loss < a.history[0].train_loss);

  // Snapshot optimality.
  double min_eer = 1.0;
  for (const EpochStats& e : a.history) min_eer = std::min(min_eer, *e.val_eer);
  CHECK(*a.best_val_eer == min_eer);
  CHECK(*a.history[a.best_epoch - 1].val_eer == min_eer);
  CHECK(validate_head(a.best, val_set).eer == min_eer);
}

TEST_CASE("batch partitions depend only on seed and training-set size", "[head][train][property]") {
  const auto first = testing::two_class_set(50, 4, 2.0, 61);
  const auto second = testing::two_class_set(50, 4, 2.0, 62);
  TrainConfig cfg;
  cfg.hidden_dims = {4};
  cfg.depth = 1;
  cfg.depth_grid = {1};
  cfg.epochs = 3;
  cfg.batch_size = 16;
  std::vector<std::size_t> seen_a;
  std::vector<std::size_t> seen_b;
  train(first, {}, cfg, [&](std::span<const std::size_t> idx) { seen_a.insert(seen_a.end(), idx.begin(), idx.end()); });
  train(second, {}, cfg, [&](std::span<const std::size_t> idx) { seen_b.insert(seen_b.end(), idx.begin(), idx.end()); });
  CHECK(seen_a == seen_b);
  CHECK(seen_a.size() == 3 * 100);

  cfg.seed = 8;
  std::vector<std::size_t> seen_c;
  train(first, {}, cfg, [&](std::span<const std::size_t> idx) { seen_c.insert(seen_c.end(), idx.begin(), idx.end()); });
  CHECK(seen_c != seen_a);
}

TEST_CASE("training errors", "[head][train][errors]") {
  TrainConfig cfg;
  try {
    train({}, {}, cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_input);
  }
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(testing::two_class_set(4, 2, 1.0, 1), {}, cfg), Error);
  cfg = {};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = {};
  cfg.depth = 4;
  CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("grid search", "[head][grid]") {
  const auto train_set = testing::two_class_set(100, 8, 8.0, 71);
  const auto val_set = testing::two_class_set(50, 8, 8.0, 72);
  TrainConfig cfg;
  cfg.hidden_dims = {16, 8, 4};
  cfg.epochs = 10;
  cfg.batch_size = 32;

  SECTION("a single cell is returned as is") {
    cfg.depth_grid = {2};
    cfg.lr_grid = {1e-3};
    const GridResult g = grid_search(train_set, val_set, cfg);
    REQUIRE(g.cells.size() == 1);
    CHECK(g.best == 0);
    CHECK(g.best_config.depth == 2);
    CHECK(g.best_config.learning_rate == 1e-3);
  }
  SECTION("ties on separable data go to fewer layers") {
    cfg.depth_grid = {3, 1};
    cfg.lr_grid = {1e-3};
    cfg.epochs = 30;
    const GridResult g = grid_search(train_set, val_set, cfg);
    REQUIRE(g.cells.size() == 2);
    CHECK(g.cells[0].val_eer == 0.0);
    CHECK(g.cells[1].val_eer == 0.0);
    CHECK(g.best_config.depth == 1);
  }
  SECTION("the default learning rate is a grid point") {
    CHECK(std::find(cfg.lr_grid.begin(), cfg.lr_grid.end(), 1e-4) != cfg.lr_grid.end());
    CHECK(cfg.learning_rate == 1e-4);
    CHECK(cfg.epochs == 10);
    CHECK(TrainConfig{}.epochs == 50);
  }
  SECTION("cell failures name the cell") {
    auto single_class = val_set;
    std::fill(single_class.labels.begin(), single_class.labels.end(), 1);
    cfg.depth_grid = {1};
    cfg.lr_grid = {1e-3};
    try {
      grid_search(train_set, single_class, cfg);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::degenerate_labels);
      CHECK(std::string(e.what()).find("grid cell (depth=1") != std::string::npos);
    }
  }
}

TEST_CASE("model files round-trip at float32 precision", "[head][serialize]") {
  testing::TempDir dir;
  MlpHead h = MlpHead::with_depth(6, 2, std::vector<std::size_t>{5, 3});
  h.init_uniform(17);
  TrainConfig cfg;
  cfg.seed = 17;
  save_head(h, dir / "m.ffd", cfg, {{"note", "unit"}});
  const LoadedHead loaded = load_head(dir / "m.ffd");
  MlpHead rounded = h;
  rounded.round_to_float32();
  CHECK(loaded.head == rounded);
  CHECK(loaded.header["seed"].get<int>() == 17);
  CHECK(loaded.header["activation"] == "gelu");
  CHECK(loaded.header["metadata"]["note"] == "unit");

  const auto size = std::filesystem::file_size(dir / "m.ffd");
  std::filesystem::resize_file(dir / "m.ffd", size - 3);
  try {
    load_head(dir / "m.ffd");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::corrupt_corpus);
  }
  std::ofstream(dir / "junk.ffd") << "hello\n";
  CHECK_THROWS_AS(load_head(dir / "junk.ffd"), Error);
}
