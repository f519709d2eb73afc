#include "gridplan/lstm.hpp"

#include <cstdio>
#include <cstring>

#include "gridplan/rng.hpp"
#include "gridplan/stats.hpp"

namespace gridplan {

LstmParams LstmParams::init(const LstmDims& dims, uint64_t seed) {
  Rng rng(seed ^ 0x5eed5eedULL);
  const int H = dims.hidden;
  LstmParams p;
  p.dims = dims;
  auto tn = [&rng](Eigen::MatrixXd& m, int r, int c) {
    m.resize(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.truncated_normal(0.1);
  };
  tn(p.w_in, 4 * H, dims.input_size());
  tn(p.w_rec, 4 * H, H);
  tn(p.head_lo, dims.head_out(), H + 1);
  tn(p.head_gap, dims.head_out(), H + 1);
  p.bias = Eigen::VectorXd::Zero(4 * H);
  p.bias.segment(H, H).setOnes();  // forget gate starts open
  p.head_lo_b = Eigen::VectorXd::Zero(dims.head_out());
  p.head_gap_b = Eigen::VectorXd::Zero(dims.head_out());
  p.in_mean = Eigen::VectorXd::Zero(dims.input_size() + 1);
  p.in_std = Eigen::VectorXd::Ones(dims.input_size() + 1);
  p.out_mean = Eigen::VectorXd::Zero(6);
  p.out_std = Eigen::VectorXd::Ones(6);
  return p;
}

QuantileForecast forward(const LstmParams& params, const Eigen::VectorXd& window,
                         LstmCache* cache) {
  const LstmDims& d = params.dims;
  if (window.size() != d.window_size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "window has " + std::to_string(window.size()) + " features, expected " +
                    std::to_string(d.window_size()));
  }
  const int H = d.hidden, M = d.history, I = d.input_size();

  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
  if (cache) {
    cache->window = window;
    cache->xs.resize(I, M);
    cache->ig.resize(H, M);
    cache->fg.resize(H, M);
    cache->gg.resize(H, M);
    cache->og.resize(H, M);
    cache->cs.resize(H, M);
    cache->hs.resize(H, M);
    cache->tanh_c.resize(H, M);
  }

  for (int t = 0; t < M; ++t) {
    Eigen::VectorXd x = window.segment(t * I, I);
    for (int j = 0; j < I; ++j) x(j) = (x(j) - params.in_mean(j)) / params.in_std(j);
    Eigen::VectorXd pre = params.w_in * x + params.w_rec * h + params.bias;
    Eigen::VectorXd ig(H), fg(H), gg(H), og(H);
    for (int j = 0; j < H; ++j) {
      ig(j) = sigmoid(pre(j));
      fg(j) = sigmoid(pre(H + j));
      gg(j) = std::tanh(pre(2 * H + j));
      og(j) = sigmoid(pre(3 * H + j));
    }
    c = fg.cwiseProduct(c) + ig.cwiseProduct(gg);
    Eigen::VectorXd tc = c.array().tanh();
    h = og.cwiseProduct(tc);
    if (cache) {
      cache->xs.col(t) = x;
      cache->ig.col(t) = ig;
      cache->fg.col(t) = fg;
      cache->gg.col(t) = gg;
      cache->og.col(t) = og;
      cache->cs.col(t) = c;
      cache->hs.col(t) = h;
      cache->tanh_c.col(t) = tc;
    }
  }

  double price_std = (window(d.window_size() - 1) - params.in_mean(I)) / params.in_std(I);
  Eigen::VectorXd feat(H + 1);
  feat << h, price_std;
  Eigen::VectorXd lo_std = params.head_lo * feat + params.head_lo_b;
  Eigen::VectorXd gap_raw = params.head_gap * feat + params.head_gap_b;
  if (cache) {
    cache->feat = feat;
    cache->gap_raw = gap_raw;
  }

  QuantileForecast out;
  out.lower.resize(d.horizon, 6);
  out.upper.resize(d.horizon, 6);
  for (int s = 0; s < d.horizon; ++s) {
    for (int k = 0; k < 6; ++k) {
      int idx = s * 6 + k;
      double lo = params.out_mean(k) + params.out_std(k) * lo_std(idx);
      out.lower(s, k) = lo;
      out.upper(s, k) = lo + params.out_std(k) * softplus(gap_raw(idx));
    }
  }
  return out;
}

NllResult nll_loss(const QuantileForecast& forecast, const Eigen::MatrixXd& truth,
                   double alpha) {
  if (truth.rows() != forecast.lower.rows() || truth.cols() != forecast.lower.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "truth shape differs from forecast");
  }
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double eps = 1e-6;
  NllResult res;
  res.d_lower = Eigen::MatrixXd::Zero(truth.rows(), truth.cols());
  res.d_upper = Eigen::MatrixXd::Zero(truth.rows(), truth.cols());
  for (int s = 0; s < truth.rows(); ++s) {
    for (int k = 0; k < truth.cols(); ++k) {
      double lo = forecast.lower(s, k), up = forecast.upper(s, k), y = truth(s, k);
      double mu = 0.5 * (lo + up);
      double sigma = (up - lo) / (2.0 * z) + eps;
      double dev = y - mu;
      res.loss += 0.5 * std::log(2.0 * M_PI * sigma * sigma) +
                  dev * dev / (2.0 * sigma * sigma);
      double dmu = -dev / (sigma * sigma);
      double dsigma = 1.0 / sigma - dev * dev / (sigma * sigma * sigma);
      res.d_lower(s, k) = 0.5 * dmu - dsigma / (2.0 * z);
      res.d_upper(s, k) = 0.5 * dmu + dsigma / (2.0 * z);
    }
  }
  return res;
}

LstmGrads LstmGrads::zero(const LstmDims& d) {
  LstmGrads g;
  g.w_in = Eigen::MatrixXd::Zero(4 * d.hidden, d.input_size());
  g.w_rec = Eigen::MatrixXd::Zero(4 * d.hidden, d.hidden);
  g.bias = Eigen::VectorXd::Zero(4 * d.hidden);
  g.head_lo = Eigen::MatrixXd::Zero(d.head_out(), d.hidden + 1);
  g.head_gap = Eigen::MatrixXd::Zero(d.head_out(), d.hidden + 1);
  g.head_lo_b = Eigen::VectorXd::Zero(d.head_out());
  g.head_gap_b = Eigen::VectorXd::Zero(d.head_out());
  return g;
}

void LstmGrads::add(const LstmGrads& o, double s) {
  w_in += s * o.w_in;
  w_rec += s * o.w_rec;
  bias += s * o.bias;
  head_lo += s * o.head_lo;
  head_gap += s * o.head_gap;
  head_lo_b += s * o.head_lo_b;
  head_gap_b += s * o.head_gap_b;
}

void LstmGrads::scale(double s) {
  w_in *= s;
  w_rec *= s;
  bias *= s;
  head_lo *= s;
  head_gap *= s;
  head_lo_b *= s;
  head_gap_b *= s;
}

double LstmGrads::squared_norm() const {
  return w_in.squaredNorm() + w_rec.squaredNorm() + bias.squaredNorm() +
         head_lo.squaredNorm() + head_gap.squaredNorm() + head_lo_b.squaredNorm() +
         head_gap_b.squaredNorm();
}

LstmGrads backward(const LstmParams& params, const Eigen::VectorXd& window,
                   const LstmCache& cache, const Eigen::MatrixXd& d_lower,
                   const Eigen::MatrixXd& d_upper) {
  const LstmDims& d = params.dims;
  const int H = d.hidden, M = d.history;
  if (cache.window.size() != window.size() || cache.window != window ||
      cache.hs.cols() != M || cache.hs.rows() != H) {
    throw Error(ErrorKind::CacheMismatch, "cache does not match this window/params");
  }
  if (d_lower.rows() != d.horizon || d_lower.cols() != 6 ||
      d_upper.rows() != d.horizon || d_upper.cols() != 6) {
    throw Error(ErrorKind::DimensionMismatch, "upstream gradient shape");
  }

  LstmGrads g = LstmGrads::zero(d);

  // Heads: lower = out_mean + out_std * lo_std, upper = lower + out_std * softplus(gap).
  Eigen::VectorXd d_lo_std(d.head_out()), d_gap_raw(d.head_out());
  for (int s = 0; s < d.horizon; ++s) {
    for (int k = 0; k < 6; ++k) {
      int idx = s * 6 + k;
      d_lo_std(idx) = params.out_std(k) * (d_lower(s, k) + d_upper(s, k));
      d_gap_raw(idx) = params.out_std(k) * d_upper(s, k) * sigmoid(cache.gap_raw(idx));
    }
  }
  g.head_lo = d_lo_std * cache.feat.transpose();
  g.head_gap = d_gap_raw * cache.feat.transpose();
  g.head_lo_b = d_lo_std;
  g.head_gap_b = d_gap_raw;

  Eigen::VectorXd d_feat =
      params.head_lo.transpose() * d_lo_std + params.head_gap.transpose() * d_gap_raw;
  Eigen::VectorXd dh = d_feat.head(H);
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(H);

  for (int t = M - 1; t >= 0; --t) {
    Eigen::VectorXd ig = cache.ig.col(t), fg = cache.fg.col(t), gg = cache.gg.col(t),
                    og = cache.og.col(t), tc = cache.tanh_c.col(t);
    Eigen::VectorXd c_prev =
        t > 0 ? Eigen::VectorXd(cache.cs.col(t - 1)) : Eigen::VectorXd(Eigen::VectorXd::Zero(H));
    Eigen::VectorXd h_prev =
        t > 0 ? Eigen::VectorXd(cache.hs.col(t - 1)) : Eigen::VectorXd(Eigen::VectorXd::Zero(H));

    dc += dh.cwiseProduct(og).cwiseProduct(
        (Eigen::VectorXd::Ones(H) - tc.cwiseProduct(tc)));
    Eigen::VectorXd do_ = dh.cwiseProduct(tc);
    Eigen::VectorXd di = dc.cwiseProduct(gg);
    Eigen::VectorXd dg = dc.cwiseProduct(ig);
    Eigen::VectorXd df = dc.cwiseProduct(c_prev);

    Eigen::VectorXd dpre(4 * H);
    dpre.segment(0, H) = di.cwiseProduct(ig).cwiseProduct(Eigen::VectorXd::Ones(H) - ig);
    dpre.segment(H, H) = df.cwiseProduct(fg).cwiseProduct(Eigen::VectorXd::Ones(H) - fg);
    dpre.segment(2 * H, H) =
        dg.cwiseProduct(Eigen::VectorXd::Ones(H) - gg.cwiseProduct(gg));
    dpre.segment(3 * H, H) = do_.cwiseProduct(og).cwiseProduct(Eigen::VectorXd::Ones(H) - og);

    g.w_in += dpre * cache.xs.col(t).transpose();
    g.w_rec += dpre * h_prev.transpose();
    g.bias += dpre;

    dh = params.w_rec.transpose() * dpre;
    dc = dc.cwiseProduct(fg);
  }
  return g;
}

AdamState AdamState::zero(const LstmDims& d) {
  AdamState s;
  s.m = LstmGrads::zero(d);
  s.v = LstmGrads::zero(d);
  s.step = 0;
  return s;
}

void adam_step(LstmParams& params, const LstmGrads& grads, double lr, AdamState& state,
               double beta1, double beta2, double eps) {
  ++state.step;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  auto upd = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g.cwiseProduct(g);
    auto mhat = (m / bc1).eval();
    auto vhat = (v / bc2).eval();
    p -= lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
  };
  upd(params.w_in, grads.w_in, state.m.w_in, state.v.w_in);
  upd(params.w_rec, grads.w_rec, state.m.w_rec, state.v.w_rec);
  upd(params.bias, grads.bias, state.m.bias, state.v.bias);
  upd(params.head_lo, grads.head_lo, state.m.head_lo, state.v.head_lo);
  upd(params.head_gap, grads.head_gap, state.m.head_gap, state.v.head_gap);
  upd(params.head_lo_b, grads.head_lo_b, state.m.head_lo_b, state.v.head_lo_b);
  upd(params.head_gap_b, grads.head_gap_b, state.m.head_gap_b, state.v.head_gap_b);
}

// ---------------------------------------------------------------------------
// Checkpoint format: "GPCK" magic, u32 version, dims, tensors as
// (u32 rows, u32 cols, float64 column-major), then metadata.
// ---------------------------------------------------------------------------

namespace {

void put_u32(FILE* f, uint32_t v) { std::fwrite(&v, sizeof v, 1, f); }
void put_i64(FILE* f, int64_t v) { std::fwrite(&v, sizeof v, 1, f); }
void put_f64(FILE* f, double v) { std::fwrite(&v, sizeof v, 1, f); }

void put_matrix(FILE* f, const Eigen::MatrixXd& m) {
  put_u32(f, static_cast<uint32_t>(m.rows()));
  put_u32(f, static_cast<uint32_t>(m.cols()));
  std::fwrite(m.data(), sizeof(double), m.size(), f);
}

uint32_t get_u32(FILE* f) {
  uint32_t v = 0;
  if (std::fread(&v, sizeof v, 1, f) != 1)
    throw Error(ErrorKind::ParseError, "truncated checkpoint");
  return v;
}
int64_t get_i64(FILE* f) {
  int64_t v = 0;
  if (std::fread(&v, sizeof v, 1, f) != 1)
    throw Error(ErrorKind::ParseError, "truncated checkpoint");
  return v;
}
double get_f64(FILE* f) {
  double v = 0;
  if (std::fread(&v, sizeof v, 1, f) != 1)
    throw Error(ErrorKind::ParseError, "truncated checkpoint");
  return v;
}

Eigen::MatrixXd get_matrix(FILE* f) {
  uint32_t r = get_u32(f), c = get_u32(f);
  Eigen::MatrixXd m(r, c);
  if (std::fread(m.data(), sizeof(double), m.size(), f) != static_cast<size_t>(m.size()))
    throw Error(ErrorKind::ParseError, "truncated checkpoint tensor");
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const LstmParams& params,
                     const CheckpointMeta& meta) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(ErrorKind::ValidationError, "cannot write " + path);
  std::fwrite("GPCK", 1, 4, f);
  put_u32(f, 1);  // version
  put_u32(f, static_cast<uint32_t>(params.dims.n_buses));
  put_u32(f, static_cast<uint32_t>(params.dims.history));
  put_u32(f, static_cast<uint32_t>(params.dims.hidden));
  put_u32(f, static_cast<uint32_t>(params.dims.horizon));
  put_matrix(f, params.w_in);
  put_matrix(f, params.w_rec);
  put_matrix(f, params.bias);
  put_matrix(f, params.head_lo);
  put_matrix(f, params.head_gap);
  put_matrix(f, params.head_lo_b);
  put_matrix(f, params.head_gap_b);
  put_matrix(f, params.in_mean);
  put_matrix(f, params.in_std);
  put_matrix(f, params.out_mean);
  put_matrix(f, params.out_std);
  put_f64(f, meta.lambda);
  put_f64(f, meta.alpha);
  put_f64(f, meta.task_scale);
  put_i64(f, static_cast<int64_t>(meta.seed));
  put_i64(f, meta.epochs);
  put_u32(f, static_cast<uint32_t>(meta.mode.size()));
  std::fwrite(meta.mode.data(), 1, meta.mode.size(), f);
  std::fclose(f);
}

LstmParams load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error(ErrorKind::ParseError, "cannot open " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "GPCK", 4) != 0) {
    std::fclose(f);
    throw Error(ErrorKind::ParseError, "not a checkpoint file: " + path);
  }
  try {
    uint32_t version = get_u32(f);
    if (version != 1) throw Error(ErrorKind::ParseError, "unknown checkpoint version");
    LstmParams p;
    p.dims.n_buses = static_cast<int>(get_u32(f));
    p.dims.history = static_cast<int>(get_u32(f));
    p.dims.hidden = static_cast<int>(get_u32(f));
    p.dims.horizon = static_cast<int>(get_u32(f));
    p.w_in = get_matrix(f);
    p.w_rec = get_matrix(f);
    p.bias = get_matrix(f);
    p.head_lo = get_matrix(f);
    p.head_gap = get_matrix(f);
    p.head_lo_b = get_matrix(f);
    p.head_gap_b = get_matrix(f);
    p.in_mean = get_matrix(f);
    p.in_std = get_matrix(f);
    p.out_mean = get_matrix(f);
    p.out_std = get_matrix(f);
    CheckpointMeta m;
    m.lambda = get_f64(f);
    m.alpha = get_f64(f);
    m.task_scale = get_f64(f);
    m.seed = static_cast<uint64_t>(get_i64(f));
    m.epochs = static_cast<int32_t>(get_i64(f));
    uint32_t mode_len = get_u32(f);
    m.mode.resize(mode_len);
    if (mode_len && std::fread(m.mode.data(), 1, mode_len, f) != mode_len)
      throw Error(ErrorKind::ParseError, "truncated checkpoint metadata");
    if (meta) *meta = m;
    std::fclose(f);
    return p;
  } catch (...) {
    std::fclose(f);
    throw;
  }
}

}  // namespace gridplan
