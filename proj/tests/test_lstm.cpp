#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "gridplan/lstm.hpp"
#include "gridplan/rng.hpp"
#include "gridplan/stats.hpp"

using namespace gridplan;

namespace {

LstmDims tiny_dims() {
  LstmDims d;
  d.n_buses = 3;
  d.history = 4;
  d.hidden = 8;
  d.horizon = 2;
  return d;
}

Eigen::VectorXd random_window(const LstmDims& d, Rng& rng) {
  Eigen::VectorXd w(d.window_size());
  for (int i = 0; i < w.size(); ++i) w(i) = rng.uniform(-1.0, 1.0);
  return w;
}

// Collect every parameter tensor as (pointer, count) for finite differencing.
std::vector<std::pair<double*, int>> tensor_views(LstmParams& p) {
  return {{p.w_in.data(), static_cast<int>(p.w_in.size())},
          {p.w_rec.data(), static_cast<int>(p.w_rec.size())},
          {p.bias.data(), static_cast<int>(p.bias.size())},
          {p.head_lo.data(), static_cast<int>(p.head_lo.size())},
          {p.head_gap.data(), static_cast<int>(p.head_gap.size())},
          {p.head_lo_b.data(), static_cast<int>(p.head_lo_b.size())},
          {p.head_gap_b.data(), static_cast<int>(p.head_gap_b.size())}};
}

std::vector<std::pair<const double*, int>> grad_views(const LstmGrads& g) {
  return {{g.w_in.data(), static_cast<int>(g.w_in.size())},
          {g.w_rec.data(), static_cast<int>(g.w_rec.size())},
          {g.bias.data(), static_cast<int>(g.bias.size())},
          {g.head_lo.data(), static_cast<int>(g.head_lo.size())},
          {g.head_gap.data(), static_cast<int>(g.head_gap.size())},
          {g.head_lo_b.data(), static_cast<int>(g.head_lo_b.size())},
          {g.head_gap_b.data(), static_cast<int>(g.head_gap_b.size())}};
}

}  // namespace

TEST_CASE("zero weights give constant ordered outputs") {
  LstmDims d = tiny_dims();
  LstmParams p = LstmParams::init(d, 1);
  p.w_in.setZero();
  p.w_rec.setZero();
  p.bias.setZero();
  p.head_lo.setZero();
  p.head_gap.setZero();

  Rng rng(5);
  Eigen::VectorXd w1 = random_window(d, rng), w2 = random_window(d, rng);
  QuantileForecast f1 = forward(p, w1), f2 = forward(p, w2);
  CHECK((f1.lower - f2.lower).cwiseAbs().maxCoeff() == 0.0);
  CHECK(f1.lower.cwiseAbs().maxCoeff() == 0.0);
  // upper sits softplus(0) above lower
  CHECK(f1.upper(0, 0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("different windows produce different hidden states") {
  LstmDims d = tiny_dims();
  LstmParams p = LstmParams::init(d, 2);
  Rng rng(6);
  Eigen::VectorXd w1 = random_window(d, rng), w2 = random_window(d, rng);
  QuantileForecast f1 = forward(p, w1), f2 = forward(p, w2);
  CHECK((f1.lower - f2.lower).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("lower <= upper structurally") {
  LstmDims d = tiny_dims();
  Rng rng(7);
  for (int it = 0; it < 20; ++it) {
    LstmParams p = LstmParams::init(d, 100 + it);
    // exaggerate weights to probe saturation
    p.head_gap *= 30.0;
    Eigen::VectorXd w = random_window(d, rng);
    QuantileForecast f = forward(p, w);
    CHECK(((f.upper - f.lower).array() >= 0.0).all());
    CHECK(f.lower.allFinite());
    CHECK(f.upper.allFinite());
  }
}

TEST_CASE("single-cell recurrence matches a hand computation") {
  LstmDims d;
  d.n_buses = 0;  // one weather-free input channel is impossible; use 4ch zeros
  d.history = 1;
  d.hidden = 1;
  d.horizon = 1;
  LstmParams p = LstmParams::init(d, 3);
  p.w_in.setConstant(0.3);
  p.w_rec.setConstant(0.5);
  p.bias << 0.1, 0.2, 0.3, 0.4;
  p.head_lo.setConstant(1.0);
  p.head_gap.setConstant(0.25);
  p.head_lo_b.setConstant(-0.05);
  p.head_gap_b.setConstant(0.15);

  Eigen::VectorXd w(d.window_size());
  w << 0.7, -0.2, 0.4, 0.9, 0.6;  // 4 weather channels + price

  // one step by hand
  double x_sum = 0.3 * (0.7 - 0.2 + 0.4 + 0.9);
  double ig = sigmoid(x_sum + 0.1);
  double fg = sigmoid(x_sum + 0.2);
  double gg = std::tanh(x_sum + 0.3);
  double og = sigmoid(x_sum + 0.4);
  double c = fg * 0.0 + ig * gg;
  double h = og * std::tanh(c);
  double lo = 1.0 * h + 1.0 * 0.6 - 0.05;
  double up = lo + softplus(0.25 * h + 0.25 * 0.6 + 0.15);

  QuantileForecast f = forward(p, w);
  CHECK(f.lower(0, 0) == doctest::Approx(lo).epsilon(1e-12));
  CHECK(f.upper(0, 0) == doctest::Approx(up).epsilon(1e-12));
}

TEST_CASE("nll at the midpoint is the pure log term") {
  LstmDims d = tiny_dims();
  QuantileForecast f;
  f.lower = Eigen::MatrixXd::Zero(d.horizon, 6);
  f.upper = Eigen::MatrixXd::Constant(d.horizon, 6, 2.0);
  Eigen::MatrixXd truth = Eigen::MatrixXd::Constant(d.horizon, 6, 1.0);
  double alpha = 0.1;
  NllResult r = nll_loss(f, truth, alpha);
  double z = normal_quantile(1.0 - alpha / 2.0);
  double sigma = 2.0 / (2.0 * z) + 1e-6;
  double expect = d.horizon * 6 * 0.5 * std::log(2.0 * M_PI * sigma * sigma);
  CHECK(r.loss == doctest::Approx(expect).epsilon(1e-12));

  // moving the truth one sigma off the midpoint adds 1/2 per entry
  Eigen::MatrixXd shifted = truth.array() + sigma;
  NllResult r2 = nll_loss(f, shifted, alpha);
  CHECK(r2.loss - r.loss == doctest::Approx(0.5 * d.horizon * 6).epsilon(1e-9));

  // narrow interval far from truth loses to a wide one at the same midpoint
  QuantileForecast narrow = f, wide = f;
  narrow.lower.setConstant(0.9);
  narrow.upper.setConstant(1.1);
  wide.lower.setConstant(-1.0);
  wide.upper.setConstant(3.0);
  Eigen::MatrixXd far = Eigen::MatrixXd::Constant(d.horizon, 6, 5.0);
  CHECK(nll_loss(narrow, far, alpha).loss > nll_loss(wide, far, alpha).loss);
}

TEST_CASE("backward matches finite differences on every tensor") {
  LstmDims d = tiny_dims();
  LstmParams p = LstmParams::init(d, 11);
  Rng rng(12);
  Eigen::VectorXd w = random_window(d, rng);

  Eigen::MatrixXd du(d.horizon, 6), dl(d.horizon, 6);
  for (int s = 0; s < d.horizon; ++s)
    for (int k = 0; k < 6; ++k) {
      dl(s, k) = rng.uniform(-1.0, 1.0);
      du(s, k) = rng.uniform(-1.0, 1.0);
    }

  LstmCache cache;
  forward(p, w, &cache);
  LstmGrads g = backward(p, w, cache, dl, du);

  auto loss = [&](LstmParams& q) {
    QuantileForecast f = forward(q, w);
    return (dl.cwiseProduct(f.lower) + du.cwiseProduct(f.upper)).sum();
  };

  auto tviews = tensor_views(p);
  auto gviews = grad_views(g);
  const double h = 1e-6;
  double max_rel = 0.0;
  for (size_t ti = 0; ti < tviews.size(); ++ti) {
    auto [ptr, n] = tviews[ti];
    for (int j = 0; j < n; j += std::max(1, n / 17)) {  // sampled entries
      double keep = ptr[j];
      ptr[j] = keep + h;
      double up = loss(p);
      ptr[j] = keep - h;
      double dn = loss(p);
      ptr[j] = keep;
      double fd = (up - dn) / (2 * h);
      double rel = std::abs(fd - gviews[ti].first[j]) / (1.0 + std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel <= 1e-5);
}

TEST_CASE("nll gradient matches finite differences through the full chain") {
  LstmDims d = tiny_dims();
  LstmParams p = LstmParams::init(d, 21);
  Rng rng(22);
  Eigen::VectorXd w = random_window(d, rng);
  Eigen::MatrixXd truth(d.horizon, 6);
  for (int s = 0; s < d.horizon; ++s)
    for (int k = 0; k < 6; ++k) truth(s, k) = rng.uniform(-0.5, 0.5);

  LstmCache cache;
  QuantileForecast f = forward(p, w, &cache);
  NllResult nll = nll_loss(f, truth, 0.1);
  LstmGrads g = backward(p, w, cache, nll.d_lower, nll.d_upper);

  auto loss = [&](LstmParams& q) {
    return nll_loss(forward(q, w), truth, 0.1).loss;
  };
  auto tviews = tensor_views(p);
  auto gviews = grad_views(g);
  const double h = 1e-6;
  for (size_t ti = 0; ti < tviews.size(); ++ti) {
    auto [ptr, n] = tviews[ti];
    for (int j = 0; j < n; j += std::max(1, n / 7)) {
      double keep = ptr[j];
      ptr[j] = keep + h;
      double up = loss(p);
      ptr[j] = keep - h;
      double dn = loss(p);
      ptr[j] = keep;
      double fd = (up - dn) / (2 * h);
      CHECK(std::abs(fd - gviews[ti].first[j]) <= 1e-5 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("backward linearity: duplicated upstream doubles the gradient") {
  LstmDims d = tiny_dims();
  LstmParams p = LstmParams::init(d, 31);
  Rng rng(32);
  Eigen::VectorXd w = random_window(d, rng);
  Eigen::MatrixXd dl = Eigen::MatrixXd::Constant(d.horizon, 6, 0.3);
  Eigen::MatrixXd du = Eigen::MatrixXd::Constant(d.horizon, 6, -0.2);
  LstmCache cache;
  forward(p, w, &cache);
  LstmGrads g1 = backward(p, w, cache, dl, du);
  LstmGrads g2 = backward(p, w, cache, 2.0 * dl, 2.0 * du);
  g1.scale(2.0);
  g1.add(g2, -1.0);
  CHECK(std::sqrt(g1.squared_norm()) < 1e-12);

  // zero upstream -> zero gradient
  LstmGrads gz = backward(p, w, cache, Eigen::MatrixXd::Zero(d.horizon, 6),
                          Eigen::MatrixXd::Zero(d.horizon, 6));
  CHECK(gz.squared_norm() == 0.0);
}

TEST_CASE("cache mismatch detected") {
  LstmDims d = tiny_dims();
  LstmParams p = LstmParams::init(d, 41);
  Rng rng(42);
  Eigen::VectorXd w = random_window(d, rng);
  LstmCache cache;
  forward(p, w, &cache);
  Eigen::VectorXd w2 = w;
  w2(0) += 1.0;
  CHECK_THROWS_AS(backward(p, w2, cache, Eigen::MatrixXd::Zero(d.horizon, 6),
                           Eigen::MatrixXd::Zero(d.horizon, 6)),
                  Error);
  Eigen::VectorXd bad(3);
  CHECK_THROWS_AS(forward(p, bad), Error);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  LstmDims d = tiny_dims();
  LstmParams p = LstmParams::init(d, 51);
  LstmParams before = p;
  AdamState st = AdamState::zero(d);
  adam_step(p, LstmGrads::zero(d), 0.01, st);
  CHECK((p.w_in - before.w_in).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.head_gap_b - before.head_gap_b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: first step moves by about lr in the gradient sign") {
  LstmDims d = tiny_dims();
  LstmParams p = LstmParams::init(d, 61);
  double w0 = p.w_in(0, 0);
  LstmGrads g = LstmGrads::zero(d);
  g.w_in(0, 0) = 0.37;
  AdamState st = AdamState::zero(d);
  adam_step(p, g, 0.01, st);
  // bias-corrected first step: -lr * g / (|g| + eps') ~ -lr
  CHECK(p.w_in(0, 0) == doctest::Approx(w0 - 0.01).epsilon(1e-3));

  // constant gradient keeps steps bounded by ~lr
  for (int it = 0; it < 50; ++it) adam_step(p, g, 0.01, st);
  CHECK(std::abs(p.w_in(0, 0) - w0) < 0.01 * 52);
}

TEST_CASE("checkpoint round-trips bit-exact") {
  LstmDims d = tiny_dims();
  LstmParams p = LstmParams::init(d, 71);
  p.in_mean.setConstant(0.25);
  p.out_std.setConstant(1.75);
  CheckpointMeta meta;
  meta.lambda = 0.8;
  meta.alpha = 0.05;
  meta.task_scale = 123.456;
  meta.seed = 99;
  meta.epochs = 7;
  meta.mode = "end_to_end";
  std::string path = "/tmp/gridplan_test_ckpt.bin";
  save_checkpoint(path, p, meta);

  CheckpointMeta got;
  LstmParams q = load_checkpoint(path, &got);
  CHECK(q.dims == p.dims);
  CHECK((q.w_in - p.w_in).cwiseAbs().maxCoeff() == 0.0);
  CHECK((q.w_rec - p.w_rec).cwiseAbs().maxCoeff() == 0.0);
  CHECK((q.head_lo - p.head_lo).cwiseAbs().maxCoeff() == 0.0);
  CHECK((q.out_std - p.out_std).cwiseAbs().maxCoeff() == 0.0);
  CHECK(got.lambda == meta.lambda);
  CHECK(got.alpha == meta.alpha);
  CHECK(got.task_scale == meta.task_scale);
  CHECK(got.mode == meta.mode);

  CHECK_THROWS_AS(load_checkpoint("/tmp/definitely_missing_ckpt.bin"), Error);
}
