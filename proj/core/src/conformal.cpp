#include "gridplan/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gridplan {

double score_cols(const QuantileForecast& forecast, const Eigen::MatrixXd& truth,
                  int col_begin, int col_end) {
  if (truth.rows() != forecast.lower.rows() || truth.cols() != forecast.lower.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "truth shape differs from forecast");
  }
  double s = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < truth.rows(); ++r)
    for (int c = col_begin; c < col_end; ++c) {
      s = std::max(s, forecast.lower(r, c) - truth(r, c));
      s = std::max(s, truth(r, c) - forecast.upper(r, c));
    }
  return s;
}

double score(const QuantileForecast& forecast, const Eigen::MatrixXd& truth) {
  return score_cols(forecast, truth, 0, static_cast<int>(truth.cols()));
}

ConformalThreshold calibrate(std::vector<double> scores, double alpha, bool floor_index) {
  if (scores.empty()) {
    throw Error(ErrorKind::EmptyCalibration, "no calibration scores");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorKind::ConfigInvalid, "alpha must lie in (0, 1)");
  }
  std::stable_sort(scores.begin(), scores.end());
  const int m = static_cast<int>(scores.size());
  double raw = (m + 1) * (1.0 - alpha);
  int index = floor_index ? static_cast<int>(std::floor(raw))
                          : static_cast<int>(std::ceil(raw));
  index = std::max(index, 1);
  ConformalThreshold thr;
  thr.alpha = alpha;
  thr.m_cal = m;
  thr.floor_index = floor_index;
  thr.q_star = index > m ? std::numeric_limits<double>::infinity() : scores[index - 1];
  return thr;
}

ForecastBoxes raw_boxes(const QuantileForecast& forecast) {
  ForecastBoxes out;
  const int T = static_cast<int>(forecast.lower.rows());
  out.price.lower = forecast.lower.leftCols(3);
  out.price.upper = forecast.upper.leftCols(3);
  out.load.lower = forecast.lower.rightCols(3);
  out.load.upper = forecast.upper.rightCols(3);
  (void)T;
  return out;
}

ForecastBoxes inflate(const QuantileForecast& forecast, const ConformalThreshold& thr,
                      const ClipLimits& limits) {
  ForecastBoxes out = raw_boxes(forecast);
  if (std::isinf(thr.q_star)) {
    out.price.lower.setConstant(limits.price_min);
    out.price.upper.setConstant(limits.price_max);
    out.load.lower.setConstant(limits.load_min);
    out.load.upper.setConstant(limits.load_max);
    return out;
  }
  out.price.lower.array() -= thr.q_star;
  out.price.upper.array() += thr.q_star;
  out.load.lower.array() -= thr.q_star;
  out.load.upper.array() += thr.q_star;
  return out;
}

ForecastBoxes inflate_per_target(const QuantileForecast& forecast,
                                 const ConformalThreshold& price_thr,
                                 const ConformalThreshold& load_thr,
                                 const ClipLimits& limits) {
  ForecastBoxes out = raw_boxes(forecast);
  if (std::isinf(price_thr.q_star)) {
    out.price.lower.setConstant(limits.price_min);
    out.price.upper.setConstant(limits.price_max);
  } else {
    out.price.lower.array() -= price_thr.q_star;
    out.price.upper.array() += price_thr.q_star;
  }
  if (std::isinf(load_thr.q_star)) {
    out.load.lower.setConstant(limits.load_min);
    out.load.upper.setConstant(limits.load_max);
  } else {
    out.load.lower.array() -= load_thr.q_star;
    out.load.upper.array() += load_thr.q_star;
  }
  return out;
}

double coverage(const std::vector<double>& test_scores, const ConformalThreshold& thr) {
  if (test_scores.empty()) {
    throw Error(ErrorKind::EmptyTestSet, "no test scores");
  }
  int hits = 0;
  for (double s : test_scores)
    if (s <= thr.q_star) ++hits;
  return static_cast<double>(hits) / test_scores.size();
}

}  // namespace gridplan
