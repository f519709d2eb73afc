#include "gridplan/io.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace gridplan {

using nlohmann::json;

namespace {

json complex_to_json(const cplx& c) { return json::array({c.real(), c.imag()}); }

cplx json_to_complex(const json& j) {
  if (!j.is_array() || j.size() != 2)
    throw Error(ErrorKind::ParseError, "complex value must be [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json matrix3c_to_json(const Matrix3C& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) {
    json row = json::array();
    for (int c = 0; c < 3; ++c) row.push_back(complex_to_json(m(r, c)));
    rows.push_back(row);
  }
  return rows;
}

Matrix3C json_to_matrix3c(const json& j) {
  if (!j.is_array() || j.size() != 3)
    throw Error(ErrorKind::ParseError, "admittance must be a 3x3 array");
  Matrix3C m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3)
      throw Error(ErrorKind::ParseError, "admittance must be a 3x3 array");
    for (int c = 0; c < 3; ++c) m(r, c) = json_to_complex(j[r][c]);
  }
  return m;
}

int64_t parse_iso(const std::string& ts, const std::string& where) {
  std::tm tm = {};
  std::istringstream is(ts);
  is >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
  if (is.fail()) {
    throw Error(ErrorKind::ParseError, "bad timestamp '" + ts + "' at " + where);
  }
  return timegm(&tm);
}

std::string format_iso(int64_t epoch) {
  std::tm tm;
  time_t t = static_cast<time_t>(epoch);
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void save_network(const std::string& path, const Network& net, double base_power_kw,
                  double base_voltage_kv) {
  json doc;
  doc["version"] = 1;
  doc["base"] = {{"power_kw", base_power_kw}, {"voltage_kv", base_voltage_kv}};
  json buses = json::array();
  for (const Bus& b : net.buses) {
    json jb;
    jb["id"] = b.id;
    jb["kind"] = b.kind == BusKind::Slack ? "slack" : "load";
    json smin, smax;
    for (int p = 0; p < 3; ++p) {
      smin.push_back(complex_to_json(b.s_min(p) * base_power_kw));
      smax.push_back(complex_to_json(b.s_max(p) * base_power_kw));
    }
    jb["s_min_kw"] = smin;
    jb["s_max_kw"] = smax;
    jb["v_min"] = b.v_min;
    jb["v_max"] = b.v_max;
    jb["pv_scale_kw"] = {b.pv_scale(0) * base_power_kw, b.pv_scale(1) * base_power_kw,
                         b.pv_scale(2) * base_power_kw};
    jb["bess_cost_per_kwh"] = b.bess_cost / base_power_kw;
    jb["bess_candidate"] = b.bess_candidate;
    buses.push_back(jb);
  }
  doc["buses"] = buses;
  json lines = json::array();
  for (const Line& l : net.lines) {
    json jl;
    jl["from"] = l.from;
    jl["to"] = l.to;
    jl["y_fwd"] = matrix3c_to_json(l.y_fwd);
    jl["y_rev"] = matrix3c_to_json(l.y_rev);
    jl["is_transformer"] = l.is_transformer;
    if (l.flow_cap) jl["flow_cap"] = *l.flow_cap;
    lines.push_back(jl);
  }
  doc["lines"] = lines;

  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::ValidationError, "cannot write " + path);
  os << std::setprecision(17) << doc.dump(2) << "\n";
}

Network load_network(const std::string& path, double* base_power_kw,
                     double* base_voltage_kv) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::ParseError, "cannot open " + path);
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
  try {
    double base = doc.at("base").at("power_kw").get<double>();
    if (!(base > 0.0)) throw Error(ErrorKind::ValidationError, "base power must be positive");
    if (base_power_kw) *base_power_kw = base;
    if (base_voltage_kv) *base_voltage_kv = doc.at("base").at("voltage_kv").get<double>();

    Network net;
    for (const json& jb : doc.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      std::string kind = jb.at("kind").get<std::string>();
      if (kind != "slack" && kind != "load")
        throw Error(ErrorKind::ParseError, "bus kind must be slack|load");
      b.kind = kind == "slack" ? BusKind::Slack : BusKind::Load;
      for (int p = 0; p < 3; ++p) {
        b.s_min(p) = json_to_complex(jb.at("s_min_kw")[p]) / base;
        b.s_max(p) = json_to_complex(jb.at("s_max_kw")[p]) / base;
        if (b.s_min(p).real() > b.s_max(p).real() ||
            b.s_min(p).imag() > b.s_max(p).imag())
          throw Error(ErrorKind::ValidationError,
                      "bus " + std::to_string(b.id) + ": s_min exceeds s_max");
      }
      b.v_min = jb.at("v_min").get<double>();
      b.v_max = jb.at("v_max").get<double>();
      if (!(b.v_min > 0.0 && b.v_min <= b.v_max))
        throw Error(ErrorKind::ValidationError,
                    "bus " + std::to_string(b.id) + ": bad voltage box");
      const json& pv = jb.at("pv_scale_kw");
      for (int p = 0; p < 3; ++p) b.pv_scale(p) = pv[p].get<double>() / base;
      b.bess_cost = jb.at("bess_cost_per_kwh").get<double>() * base;
      b.bess_candidate = jb.at("bess_candidate").get<bool>();
      net.buses.push_back(b);
    }
    for (const json& jl : doc.at("lines")) {
      Line l;
      l.from = jl.at("from").get<int>();
      l.to = jl.at("to").get<int>();
      l.y_fwd = json_to_matrix3c(jl.at("y_fwd"));
      l.y_rev = json_to_matrix3c(jl.at("y_rev"));
      l.is_transformer = jl.value("is_transformer", false);
      if (jl.contains("flow_cap") && !jl["flow_cap"].is_null())
        l.flow_cap = jl["flow_cap"].get<double>();
      net.lines.push_back(l);
    }
    validate_radial(net);  // radiality is part of the file contract
    return net;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
}

void save_timeseries(const std::string& path, const TimeSeries& series) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::ValidationError, "cannot write " + path);
  os << "timestamp,price_a,price_b,price_c,windspeed,temperature,humidity,solar";
  for (int id : series.bus_ids)
    os << ",load_bus" << id << "_a,load_bus" << id << "_b,load_bus" << id << "_c";
  os << "\n";
  os << std::setprecision(17);
  int64_t start = parse_iso(series.start_iso, "start_iso");
  int64_t step = static_cast<int64_t>(series.step_hours * 3600.0);
  for (int t = 0; t < series.steps(); ++t) {
    os << format_iso(start + t * step);
    for (int p = 0; p < 3; ++p) os << "," << series.price(t, p);
    for (int w = 0; w < 4; ++w) os << "," << series.weather(t, w);
    for (size_t i = 0; i < series.bus_load.size(); ++i)
      for (int p = 0; p < 3; ++p) os << "," << series.bus_load[i](t, p);
    os << "\n";
  }
}

TimeSeries load_timeseries(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::ParseError, "cannot open " + path);
  std::string header;
  if (!std::getline(is, header))
    throw Error(ErrorKind::ParseError, path + ": empty file");
  std::vector<std::string> cols = split_csv_line(header);
  const std::vector<std::string> fixed = {"timestamp", "price_a",     "price_b",
                                          "price_c",   "windspeed",   "temperature",
                                          "humidity",  "solar"};
  for (size_t i = 0; i < fixed.size(); ++i) {
    if (i >= cols.size() || cols[i] != fixed[i]) {
      throw Error(ErrorKind::ParseError,
                  path + ": missing or misplaced column '" + fixed[i] + "'");
    }
  }
  TimeSeries series;
  size_t c = fixed.size();
  while (c < cols.size()) {
    // load_bus<k>_a,_b,_c triplets
    const std::string& name = cols[c];
    if (name.rfind("load_bus", 0) != 0 || name.size() < 11 ||
        name.substr(name.size() - 2) != "_a") {
      throw Error(ErrorKind::ParseError, path + ": unexpected column '" + name + "'");
    }
    int id = std::stoi(name.substr(8, name.size() - 10));
    std::string base = "load_bus" + std::to_string(id);
    if (c + 2 >= cols.size() || cols[c + 1] != base + "_b" || cols[c + 2] != base + "_c") {
      throw Error(ErrorKind::ParseError, path + ": missing column '" + base + "_b/_c'");
    }
    series.bus_ids.push_back(id);
    c += 3;
  }
  if (series.bus_ids.empty())
    throw Error(ErrorKind::ParseError, path + ": no load_bus columns");

  std::vector<std::vector<double>> rows;
  std::vector<int64_t> stamps;
  std::string line;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != cols.size()) {
      throw Error(ErrorKind::ParseError, path + ":" + std::to_string(lineno) +
                                             ": expected " + std::to_string(cols.size()) +
                                             " cells, got " + std::to_string(cells.size()));
    }
    stamps.push_back(parse_iso(cells[0], path + ":" + std::to_string(lineno)));
    std::vector<double> row;
    for (size_t i = 1; i < cells.size(); ++i) {
      if (cells[i].empty())
        throw Error(ErrorKind::ParseError,
                    path + ":" + std::to_string(lineno) + ": empty cell in '" + cols[i] + "'");
      try {
        row.push_back(std::stod(cells[i]));
      } catch (...) {
        throw Error(ErrorKind::ParseError, path + ":" + std::to_string(lineno) +
                                               ": bad number '" + cells[i] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw Error(ErrorKind::ValidationError, path + ": need >= 2 rows");

  int64_t step = stamps[1] - stamps[0];
  if (step <= 0)
    throw Error(ErrorKind::ValidationError, path + ": timestamps not increasing at row 2");
  for (size_t t = 1; t < stamps.size(); ++t) {
    if (stamps[t] - stamps[t - 1] != step) {
      throw Error(ErrorKind::ValidationError,
                  path + ": timestamp gap at row " + std::to_string(t + 2) + " (" +
                      format_iso(stamps[t - 1]) + " -> " + format_iso(stamps[t]) + ")");
    }
  }
  const int S = static_cast<int>(rows.size());
  const int NB = static_cast<int>(series.bus_ids.size());
  series.start_iso = format_iso(stamps[0]);
  series.step_hours = static_cast<double>(step) / 3600.0;
  series.price.resize(S, 3);
  series.weather.resize(S, 4);
  series.bus_load.assign(NB, Eigen::MatrixXd(S, 3));
  for (int t = 0; t < S; ++t) {
    for (int p = 0; p < 3; ++p) series.price(t, p) = rows[t][p];
    for (int w = 0; w < 4; ++w) series.weather(t, w) = rows[t][3 + w];
    for (int i = 0; i < NB; ++i)
      for (int p = 0; p < 3; ++p) series.bus_load[i](t, p) = rows[t][7 + 3 * i + p];
  }
  return series;
}

Eigen::MatrixXd weights_from_series(const Network& net, const TimeSeries& series) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(net.bus_count(), 3);
  Eigen::Vector3d totals = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector3d> sums(net.bus_count(), Eigen::Vector3d::Zero());
  for (size_t i = 0; i < series.bus_load.size(); ++i) {
    int b = net.bus_index(series.bus_ids[i]);
    for (int p = 0; p < 3; ++p) {
      double s = series.bus_load[i].col(p).sum();
      sums[b](p) = s;
      totals(p) += s;
    }
  }
  for (int b = 0; b < net.bus_count(); ++b)
    for (int p = 0; p < 3; ++p)
      w(b, p) = totals(p) > 0.0 ? sums[b](p) / totals(p) : 0.0;
  return w;
}

ScenarioSpec RunConfig::scenario(const TimeSeries& series) const {
  ScenarioSpec spec;
  spec.n_buses = static_cast<int>(series.bus_ids.size());
  spec.step_hours = series.step_hours;
  spec.history = history;
  spec.horizon = model.horizon;
  spec.stride = stride;
  spec.seed = seed;
  spec.base_power_kw = base_power_kw;
  return spec;
}

RunConfig load_runconfig(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::ParseError, "cannot open " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  auto dir = std::filesystem::path(path).parent_path();
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    try {
      if (key == "network") cfg.network_path = (dir / val).string();
      else if (key == "timeseries") cfg.timeseries_path = (dir / val).string();
      else if (key == "out_dir") cfg.out_dir = (dir / val).string();
      else if (key == "horizon") cfg.model.horizon = std::stoi(val);
      else if (key == "history") cfg.history = std::stoi(val);
      else if (key == "stride") cfg.stride = std::stoi(val);
      else if (key == "hidden") cfg.hidden = std::stoi(val);
      else if (key == "soc_min") cfg.model.soc_min = std::stod(val);
      else if (key == "soc_max") cfg.model.soc_max = std::stod(val);
      else if (key == "dispatch_min") cfg.model.sd_min = std::stod(val);
      else if (key == "dispatch_max") cfg.model.sd_max = std::stod(val);
      else if (key == "x_max") cfg.model.x_max = std::stod(val);
      else if (key == "voltage_mode") {
        if (val == "impedance") cfg.model.mode = VoltageMode::Impedance;
        else if (val == "admittance") cfg.model.mode = VoltageMode::Admittance;
        else if (val == "auto") cfg.model.mode = VoltageMode::Auto;
        else throw Error(ErrorKind::ParseError, "voltage_mode must be impedance|admittance|auto");
      }
      else if (key == "lambda") cfg.lambda = std::stod(val);
      else if (key == "alpha") cfg.alpha = std::stod(val);
      else if (key == "lr") cfg.lr = std::stod(val);
      else if (key == "epochs") cfg.epochs = std::stoi(val);
      else if (key == "batch") cfg.batch = std::stoi(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "base_power_kw") cfg.base_power_kw = std::stod(val);
      else if (key == "conformal_floor_index") cfg.conformal_floor_index = val == "true" || val == "1";
      else if (key == "price_cap") cfg.price_cap = std::stod(val);
      else if (key == "load_cap_factor") cfg.load_cap_factor = std::stod(val);
      else throw Error(ErrorKind::ParseError, "unknown key '" + key + "'");
    } catch (const Error&) {
      throw;
    } catch (...) {
      throw Error(ErrorKind::ParseError,
                  path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
  if (cfg.model.horizon < 1) throw Error(ErrorKind::ValidationError, "horizon must be >= 1");
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0))
    throw Error(ErrorKind::ValidationError, "lambda must lie in [0, 1]");
  for (const std::string& p : {cfg.network_path, cfg.timeseries_path}) {
    if (!p.empty() && !std::filesystem::exists(p)) {
      throw Error(ErrorKind::ValidationError, "referenced path does not exist: " + p);
    }
  }
  return cfg;
}

void save_runconfig(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::ValidationError, "cannot write " + path);
  os << std::setprecision(17);
  auto rel = [&path](const std::string& p) {
    auto dir = std::filesystem::path(path).parent_path();
    return std::filesystem::relative(p, dir.empty() ? "." : dir).string();
  };
  os << "network = " << rel(cfg.network_path) << "\n";
  os << "timeseries = " << rel(cfg.timeseries_path) << "\n";
  os << "out_dir = " << rel(cfg.out_dir) << "\n";
  os << "horizon = " << cfg.model.horizon << "\n";
  os << "history = " << cfg.history << "\n";
  os << "stride = " << cfg.stride << "\n";
  os << "hidden = " << cfg.hidden << "\n";
  os << "soc_min = " << cfg.model.soc_min << "\n";
  os << "soc_max = " << cfg.model.soc_max << "\n";
  os << "dispatch_min = " << cfg.model.sd_min << "\n";
  os << "dispatch_max = " << cfg.model.sd_max << "\n";
  os << "x_max = " << cfg.model.x_max << "\n";
  os << "voltage_mode = "
     << (cfg.model.mode == VoltageMode::Impedance
             ? "impedance"
             : cfg.model.mode == VoltageMode::Admittance ? "admittance" : "auto")
     << "\n";
  os << "lambda = " << cfg.lambda << "\n";
  os << "alpha = " << cfg.alpha << "\n";
  os << "lr = " << cfg.lr << "\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "batch = " << cfg.batch << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "base_power_kw = " << cfg.base_power_kw << "\n";
  os << "conformal_floor_index = " << (cfg.conformal_floor_index ? "true" : "false") << "\n";
  os << "price_cap = " << cfg.price_cap << "\n";
  os << "load_cap_factor = " << cfg.load_cap_factor << "\n";
}

void save_threshold(const std::string& path, const ConformalThreshold& thr) {
  json doc;
  doc["alpha"] = thr.alpha;
  doc["q_star"] = std::isinf(thr.q_star) ? json("inf") : json(thr.q_star);
  doc["m_cal"] = thr.m_cal;
  doc["floor_index"] = thr.floor_index;
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::ValidationError, "cannot write " + path);
  os << std::setprecision(17) << doc.dump(2) << "\n";
}

ConformalThreshold load_threshold(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::MissingThreshold, "cannot open " + path);
  json doc;
  try {
    is >> doc;
    ConformalThreshold thr;
    thr.alpha = doc.at("alpha").get<double>();
    thr.q_star = doc.at("q_star").is_string()
                     ? std::numeric_limits<double>::infinity()
                     : doc.at("q_star").get<double>();
    thr.m_cal = doc.at("m_cal").get<int>();
    thr.floor_index = doc.value("floor_index", false);
    return thr;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
}

SolveBoxes load_boxes(const std::string& path, const ScenarioSpec& spec) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::ParseError, "cannot open " + path);
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
  auto read = [&](const char* key, bool price) {
    const json& arr = doc.at(key);
    Eigen::MatrixXd m(arr.size(), 3);
    for (size_t t = 0; t < arr.size(); ++t) {
      if (!arr[t].is_array() || arr[t].size() != 3)
        throw Error(ErrorKind::ParseError, std::string(key) + " rows must have 3 entries");
      for (int p = 0; p < 3; ++p) {
        double v = arr[t][p].get<double>();
        m(t, p) = price ? price_to_internal(v, spec) : load_to_internal(v, spec);
      }
    }
    return m;
  };
  SolveBoxes out;
  try {
    out.price.lower = read("price_lower", true);
    out.price.upper = read("price_upper", true);
    out.load.lower = read("load_lower", false);
    out.load.upper = read("load_upper", false);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
  out.price.validate();
  out.load.validate();
  return out;
}

void save_boxes(const std::string& path, const SolveBoxes& boxes, const ScenarioSpec& spec) {
  json doc;
  auto write = [&](const Eigen::MatrixXd& m, bool price) {
    json arr = json::array();
    for (int t = 0; t < m.rows(); ++t) {
      json row = json::array();
      for (int p = 0; p < 3; ++p) {
        double v = m(t, p);
        row.push_back(price ? v / (spec.base_power_kw * spec.step_hours)
                            : v * spec.base_power_kw);
      }
      arr.push_back(row);
    }
    return arr;
  };
  doc["price_lower"] = write(boxes.price.lower, true);
  doc["price_upper"] = write(boxes.price.upper, true);
  doc["load_lower"] = write(boxes.load.lower, false);
  doc["load_upper"] = write(boxes.load.upper, false);
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::ValidationError, "cannot write " + path);
  os << std::setprecision(17) << doc.dump(2) << "\n";
}

}  // namespace gridplan
