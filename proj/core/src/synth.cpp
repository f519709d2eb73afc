#include "gridplan/synth.hpp"

#include <cmath>

#include "gridplan/rng.hpp"

namespace gridplan {

double price_to_internal(double dollars_per_kwh, const ScenarioSpec& spec) {
  return dollars_per_kwh * spec.base_power_kw * spec.step_hours;
}

double load_to_internal(double kw, const ScenarioSpec& spec) {
  return kw / spec.base_power_kw;
}

namespace {

Matrix3C circulant_from_impedance(cplx zs, cplx zm) {
  Matrix3C z;
  z << zs, zm, zm, zm, zs, zm, zm, zm, zs;
  return z.inverse();
}

double clear_sky(double hour) {
  double s = std::sin(M_PI * (hour - 6.0) / 12.0);
  return s > 0.0 ? s : 0.0;
}

}  // namespace

Dataset generate(const ScenarioSpec& spec) {
  if (spec.n_buses < 1 || spec.days < 1 || spec.step_hours <= 0.0 ||
      std::fmod(24.0, spec.step_hours) != 0.0) {
    throw Error(ErrorKind::ConfigInvalid, "bad scenario: buses/days/step");
  }
  Rng rng(spec.seed);
  Dataset data;
  data.spec = spec;

  // ---- network: slack + chain of load buses, one transformer line mid-way.
  Network& net = data.network;
  const int nb = spec.n_buses + 1;
  std::vector<double> share(nb, 0.0);
  double share_total = 0.0;
  for (int i = 0; i < nb; ++i) {
    Bus b;
    b.id = i;
    b.kind = i == 0 ? BusKind::Slack : BusKind::Load;
    // No reverse active power at the substation: the feeder buys energy,
    // it does not sell it, which keeps the worst-case price substitution
    // exact (procurement cost is increasing in the price).
    b.s_min = i == 0 ? Complex3::Constant(cplx(0.0, -10.0))
                     : Complex3::Constant(cplx(-5.0, -2.0));
    b.s_max = i == 0 ? Complex3::Constant(cplx(10.0, 10.0))
                     : Complex3::Constant(cplx(5.0, 2.0));
    b.v_min = i == 0 ? 0.81 : 0.9025;   // slack box loose; the reference row pins it
    b.v_max = i == 0 ? 1.21 : 1.1025;
    b.bess_candidate = i != 0;
    b.bess_cost = i == 0 ? 0.0 : rng.uniform(spec.bess_cost_lo, spec.bess_cost_hi);
    if (i != 0) {
      share[i] = rng.uniform(0.6, 1.4);
      share_total += share[i];
    }
    net.buses.push_back(b);
  }
  data.weights = Eigen::MatrixXd::Zero(nb, 3);
  for (int i = 1; i < nb; ++i) {
    share[i] /= share_total;
    for (int p = 0; p < 3; ++p) data.weights(i, p) = share[i];
    // PV sized against the bus share of the aggregate base load
    double pv_pu = spec.pv_fraction * share[i] * spec.load.base_total_kw / spec.base_power_kw;
    net.buses[i].pv_scale = Eigen::Vector3d::Constant(pv_pu / 3.0);
  }

  const int transformer_at = spec.n_buses / 2;
  for (int i = 0; i + 1 < nb; ++i) {
    Line l;
    l.from = i;
    l.to = i + 1;
    double scale = rng.uniform(0.8, 1.2);
    l.y_fwd = l.y_rev =
        circulant_from_impedance(cplx(0.01, 0.04) * scale, cplx(0.003, 0.012) * scale);
    if (i == transformer_at) {
      Complex3 ap = alpha_plus();
      Matrix3C A = ap * ap.adjoint();
      cplx g(30.0, -90.0);
      l.y_fwd = (g / 3.0) * A;
      l.y_rev = (0.9 * g / 3.0) * A * std::polar(1.0, M_PI / 6.0);
      l.is_transformer = true;
    }
    net.lines.push_back(l);
  }

  // ---- weather, loads and prices (physical units).
  const int steps_per_day = static_cast<int>(std::lround(24.0 / spec.step_hours));
  const int S = spec.days * steps_per_day;
  TimeSeries& ts = data.series;
  ts.step_hours = spec.step_hours;
  ts.price.resize(S, 3);
  ts.weather.resize(S, 4);
  ts.bus_load.assign(spec.n_buses, Eigen::MatrixXd(S, 3));
  ts.bus_ids.resize(spec.n_buses);
  for (int i = 0; i < spec.n_buses; ++i) ts.bus_ids[i] = i + 1;

  const WeatherParams& W = spec.weather;
  const LoadParams& L = spec.load;
  const PriceParams& P = spec.price;
  for (int t = 0; t < S; ++t) {
    double hour = std::fmod(t * spec.step_hours, 24.0);
    double temp = W.temp_mean + W.temp_amp * std::sin(2 * M_PI * (hour - 14.0) / 24.0) +
                  rng.normal(0.0, W.temp_noise);
    double wind = std::max(
        0.0, W.wind_mean + W.wind_amp * std::sin(2 * M_PI * (hour - 3.0) / 24.0) +
                 rng.normal(0.0, W.wind_noise));
    double humid =
        std::min(100.0, std::max(0.0, W.humid_mean -
                                          W.humid_amp * std::sin(2 * M_PI * (hour - 14.0) / 24.0) +
                                          rng.normal(0.0, W.humid_noise)));
    double solar = clear_sky(hour) * std::max(0.0, 1.0 + rng.normal(0.0, W.solar_noise));
    ts.weather(t, 0) = wind;
    ts.weather(t, 1) = temp;
    ts.weather(t, 2) = humid;
    ts.weather(t, 3) = solar;

    double shape = 1.0 + L.daily_amp * std::sin(2 * M_PI * (hour - 18.0) / 24.0);
    double coupled = 1.0 + L.temp_coupling * (temp - W.temp_mean);
    double agg = 0.0;
    for (int i = 0; i < spec.n_buses; ++i) {
      // noise multiplier clamped so loads stay inside a fixed cap
      double mult = std::min(2.0, std::max(0.1, 1.0 + rng.normal(0.0, L.noise_sigma)));
      double kw = share[i + 1] * L.base_total_kw * shape * coupled * mult;
      kw = std::min(kw, 3.0 * share[i + 1] * L.base_total_kw);
      for (int p = 0; p < 3; ++p) ts.bus_load[i](t, p) = kw / 3.0;
      agg += kw;
    }

    double rel_load = agg / L.base_total_kw - 1.0;
    bool spike = rng.uniform() < P.spike_prob;
    double price_cap = P.base * P.spike_mult * 4.0;
    for (int p = 0; p < 3; ++p) {
      double price = P.base * (1.0 + P.temp_coeff * (temp - W.temp_mean) +
                               P.load_coeff * rel_load) +
                     rng.normal(0.0, P.noise_sigma);
      if (spike) price *= P.spike_mult;
      ts.price(t, p) = std::min(price_cap, std::max(0.001, price));
    }
  }

  data.samples = make_samples(ts, spec);
  split_samples(data);
  return data;
}

std::vector<Sample> make_samples(const TimeSeries& series, const ScenarioSpec& spec) {
  const int S = series.steps();
  const int N = static_cast<int>(series.bus_load.size());
  const int M = spec.history, T = spec.horizon;
  std::vector<Sample> out;
  for (int t0 = M; t0 + T <= S; t0 += spec.stride) {
    Sample s;
    s.t0 = t0;
    s.window.resize((N + 4) * M + 1);
    int k = 0;
    for (int m = t0 - M; m < t0; ++m) {
      for (int i = 0; i < N; ++i) {
        // per-phase loads are balanced; the feature is the per-unit bus total
        double kw = series.bus_load[i].row(m).sum();
        s.window(k++) = load_to_internal(kw, spec);
      }
      for (int w = 0; w < 4; ++w) s.window(k++) = series.weather(m, w);
    }
    s.window(k++) = price_to_internal(series.price.row(t0 - 1).mean(), spec);
    s.truth.resize(T, 6);
    for (int h = 0; h < T; ++h) {
      for (int p = 0; p < 3; ++p) {
        s.truth(h, p) = price_to_internal(series.price(t0 + h, p), spec);
        double agg_kw = 0.0;
        for (int i = 0; i < N; ++i) agg_kw += series.bus_load[i](t0 + h, p);
        s.truth(h, 3 + p) = load_to_internal(agg_kw, spec);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

void split_samples(Dataset& data) {
  const int S = data.series.steps();
  const int M = data.spec.history, T = data.spec.horizon;
  const int train_end = static_cast<int>(0.6 * S);
  const int cal_end = static_cast<int>(0.8 * S);
  data.train_idx.clear();
  data.cal_idx.clear();
  data.test_idx.clear();
  for (size_t i = 0; i < data.samples.size(); ++i) {
    int lo = data.samples[i].t0 - M;
    int hi = data.samples[i].t0 + T;  // exclusive
    if (hi <= train_end) {
      data.train_idx.push_back(static_cast<int>(i));
    } else if (lo >= train_end && hi <= cal_end) {
      data.cal_idx.push_back(static_cast<int>(i));
    } else if (lo >= cal_end) {
      data.test_idx.push_back(static_cast<int>(i));
    }
    // windows straddling a boundary are dropped to keep the splits disjoint
  }
}

std::vector<Complex3> pv_profile_for(const Network& net, int bus_index,
                                     const TimeSeries& series, const ScenarioSpec& spec,
                                     int t0) {
  std::vector<Complex3> out(spec.horizon, Complex3::Zero());
  const Bus& bus = net.buses[bus_index];
  for (int h = 0; h < spec.horizon; ++h) {
    int t = t0 + h;
    double solar = t < series.steps() ? series.weather(t, 3) : 0.0;
    for (int p = 0; p < 3; ++p) out[h](p) = cplx(bus.pv_scale(p) * solar, 0.0);
  }
  return out;
}

}  // namespace gridplan
