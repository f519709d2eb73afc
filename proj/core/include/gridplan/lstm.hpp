#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "gridplan/errors.hpp"

namespace gridplan {

// Sequence model over M history steps of (N bus loads + 4 weather channels)
// plus the most recent price scalar. Two heads emit the lower quantile and a
// softplus-positive gap to the upper one, for 3 price + 3 load dimensions
// over each of the tau+1 horizon steps.
struct LstmDims {
  int n_buses = 8;   // load feature channels
  int history = 24;  // M
  int hidden = 64;
  int horizon = 24;  // tau+1

  int input_size() const { return n_buses + 4; }
  int window_size() const { return (n_buses + 4) * history + 1; }
  int head_out() const { return 6 * horizon; }
  bool operator==(const LstmDims&) const = default;
};

struct LstmParams {
  LstmDims dims;
  // gate rows stacked [input; forget; cell; output], H rows each
  Eigen::MatrixXd w_in;    // 4H x input_size
  Eigen::MatrixXd w_rec;   // 4H x H
  Eigen::VectorXd bias;    // 4H
  Eigen::MatrixXd head_lo;   // 6T x (H+1), last column reads the price scalar
  Eigen::MatrixXd head_gap;  // 6T x (H+1)
  Eigen::VectorXd head_lo_b, head_gap_b;  // 6T
  // Standardization statistics. Inputs per channel (loads+weather, price
  // last); outputs per dimension (price a,b,c then load a,b,c).
  Eigen::VectorXd in_mean, in_std;   // input_size + 1
  Eigen::VectorXd out_mean, out_std; // 6

  // truncated-normal weights (std 0.1), +1 forget-gate bias, unit stats
  static LstmParams init(const LstmDims& dims, uint64_t seed);
};

struct QuantileForecast {
  Eigen::MatrixXd lower, upper;  // horizon x 6, physical units
};

struct LstmCache {
  Eigen::VectorXd window;  // copy for backward consistency checks
  Eigen::MatrixXd xs;      // input_size x M, standardized
  Eigen::MatrixXd ig, fg, gg, og, cs, hs, tanh_c;  // hidden x M
  Eigen::VectorXd feat;     // H+1
  Eigen::VectorXd gap_raw;  // 6T
};

QuantileForecast forward(const LstmParams& params, const Eigen::VectorXd& window,
                         LstmCache* cache = nullptr);

// Gaussian negative log-likelihood of the truth under mu = box midpoint,
// sigma = width / (2 z_{1-alpha/2}) + eps, summed over steps and dimensions.
// Also returns the loss gradient with respect to the physical box bounds.
struct NllResult {
  double loss = 0.0;
  Eigen::MatrixXd d_lower, d_upper;  // horizon x 6
};
NllResult nll_loss(const QuantileForecast& forecast, const Eigen::MatrixXd& truth,
                   double alpha);

struct LstmGrads {
  Eigen::MatrixXd w_in, w_rec, head_lo, head_gap;
  Eigen::VectorXd bias, head_lo_b, head_gap_b;

  static LstmGrads zero(const LstmDims& dims);
  void add(const LstmGrads& other, double scale = 1.0);
  void scale(double s);
  double squared_norm() const;
};

// Exact gradients of sum(d_lower .* lower + d_upper .* upper) by
// backpropagation through time. The cache must come from forward() on the
// same window and parameters.
LstmGrads backward(const LstmParams& params, const Eigen::VectorXd& window,
                   const LstmCache& cache, const Eigen::MatrixXd& d_lower,
                   const Eigen::MatrixXd& d_upper);

struct AdamState {
  LstmGrads m, v;
  int64_t step = 0;
  static AdamState zero(const LstmDims& dims);
};

void adam_step(LstmParams& params, const LstmGrads& grads, double lr, AdamState& state,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Versioned binary checkpoint; weights round-trip bit-exact.
struct CheckpointMeta {
  double lambda = 0.8;
  double alpha = 0.1;
  double task_scale = 1.0;
  uint64_t seed = 0;
  int32_t epochs = 0;
  std::string mode;  // "end_to_end" or "eto"
};

void save_checkpoint(const std::string& path, const LstmParams& params,
                     const CheckpointMeta& meta);
LstmParams load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace gridplan
