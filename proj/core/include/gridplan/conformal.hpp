#pragma once

#include <vector>

#include "gridplan/lstm.hpp"
#include "gridplan/robust.hpp"

namespace gridplan {

struct ConformalThreshold {
  double q_star = 0.0;  // +inf when the index exceeds the calibration size
  double alpha = 0.1;
  int m_cal = 0;
  bool floor_index = false;  // paper's floor variant instead of the
                             // guarantee-preserving ceiling
};

// Nonconformity score: max over all steps and dimensions of
// (lower - truth) and (truth - upper). Negative iff the truth is strictly
// inside the box everywhere.
double score(const QuantileForecast& forecast, const Eigen::MatrixXd& truth);

// Same, restricted to a column range [begin, end): columns 0..2 are prices,
// 3..5 loads, for per-target calibration.
double score_cols(const QuantileForecast& forecast, const Eigen::MatrixXd& truth,
                  int col_begin, int col_end);

// Sorts ascending (stable) and selects the ceil((M+1)(1-alpha))-th element
// (1-based); +inf beyond the sample. floor_index selects floor((M+1)(1-alpha))
// instead. Throws EmptyCalibration.
ConformalThreshold calibrate(std::vector<double> scores, double alpha,
                             bool floor_index = false);

// Physical limits replacing infinite boxes.
struct ClipLimits {
  double price_min = 0.0;
  double price_max = 1e3;
  double load_min = 0.0;
  double load_max = 10.0;
};

struct ForecastBoxes {
  BoxSet price;  // steps x 3
  BoxSet load;   // steps x 3
};

// [lower - q*, upper + q*] per entry; infinite thresholds collapse to the
// configured physical limits.
ForecastBoxes inflate(const QuantileForecast& forecast, const ConformalThreshold& thr,
                      const ClipLimits& limits = {});

// Separate thresholds for the price and load blocks (a shared q* mixes their
// units); each block inflates and clips independently.
ForecastBoxes inflate_per_target(const QuantileForecast& forecast,
                                 const ConformalThreshold& price_thr,
                                 const ConformalThreshold& load_thr,
                                 const ClipLimits& limits = {});

// Also usable without calibration: the raw quantile box.
ForecastBoxes raw_boxes(const QuantileForecast& forecast);

// Fraction of scores <= q*. Throws EmptyTestSet.
double coverage(const std::vector<double>& test_scores, const ConformalThreshold& thr);

}  // namespace gridplan
