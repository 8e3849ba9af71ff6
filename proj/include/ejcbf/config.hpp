#pragma once

#include <cctype>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ejcbf/errors.hpp"
#include "ejcbf/gp.hpp"
#include "ejcbf/robot.hpp"

namespace ejcbf {

/// Value of the TOML subset used for configs: number, boolean, string, or a
/// flat array of numbers.
struct TomlValue {
  enum class Kind { Number, Boolean, String, Array };
  Kind kind = Kind::Number;
  double num = 0.0;
  bool boolean = false;
  std::string str;
  std::vector<double> arr;

  static TomlValue number(double v) { TomlValue t; t.kind = Kind::Number; t.num = v; return t; }
  static TomlValue flag(bool v) { TomlValue t; t.kind = Kind::Boolean; t.boolean = v; return t; }
  static TomlValue text(std::string v) {
    TomlValue t;
    t.kind = Kind::String;
    t.str = std::move(v);
    return t;
  }
  static TomlValue array(std::vector<double> v) {
    TomlValue t;
    t.kind = Kind::Array;
    t.arr = std::move(v);
    return t;
  }
};

/// Parsed key/value document. Keys are "section.key" paths; insertion order
/// is preserved per section so emit() is canonical and stable.
class TomlDoc {
 public:
  bool has(const std::string& path) const { return values_.count(path) != 0; }

  const TomlValue& at(const std::string& path) const {
    auto it = values_.find(path);
    if (it == values_.end()) throw ConfigError("config: missing key '" + path + "'");
    return it->second;
  }

  double number(const std::string& path) const {
    const auto& v = at(path);
    if (v.kind != TomlValue::Kind::Number)
      throw ConfigError("config: '" + path + "' is not a number");
    return v.num;
  }
  double number_or(const std::string& path, double fallback) const {
    return has(path) ? number(path) : fallback;
  }
  bool flag(const std::string& path) const {
    const auto& v = at(path);
    if (v.kind != TomlValue::Kind::Boolean)
      throw ConfigError("config: '" + path + "' is not a boolean");
    return v.boolean;
  }
  bool flag_or(const std::string& path, bool fallback) const {
    return has(path) ? flag(path) : fallback;
  }
  const std::string& text(const std::string& path) const {
    const auto& v = at(path);
    if (v.kind != TomlValue::Kind::String)
      throw ConfigError("config: '" + path + "' is not a string");
    return v.str;
  }
  std::string text_or(const std::string& path, const std::string& fallback) const {
    return has(path) ? text(path) : fallback;
  }
  const std::vector<double>& array(const std::string& path) const {
    const auto& v = at(path);
    if (v.kind != TomlValue::Kind::Array)
      throw ConfigError("config: '" + path + "' is not an array");
    return v.arr;
  }

  void set(const std::string& path, TomlValue v) {
    if (!values_.count(path)) order_.push_back(path);
    values_[path] = std::move(v);
  }

  static TomlDoc parse(const std::string& text) {
    TomlDoc doc;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string s = strip(line);
      if (s.empty() || s[0] == '#') continue;
      if (s.front() == '[') {
        if (s.back() != ']') throw ConfigError(err(lineno, "unterminated section header"));
        section = strip(s.substr(1, s.size() - 2));
        if (section.empty()) throw ConfigError(err(lineno, "empty section name"));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(err(lineno, "expected key = value"));
      const std::string key = strip(s.substr(0, eq));
      const std::string val = strip(s.substr(eq + 1));
      if (key.empty() || val.empty()) throw ConfigError(err(lineno, "empty key or value"));
      const std::string path = section.empty() ? key : section + "." + key;
      doc.set(path, parse_value(val, lineno));
    }
    return doc;
  }

  /// Canonical emission: sections in first-appearance order, keys in
  /// insertion order, full double precision.
  std::string emit() const {
    std::ostringstream out;
    out << std::setprecision(17);
    std::string section;
    bool first = true;
    for (const auto& path : order_) {
      const auto dot = path.rfind('.');
      const std::string sec = dot == std::string::npos ? "" : path.substr(0, dot);
      const std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
      if (sec != section || first) {
        if (!first) out << '\n';
        if (!sec.empty()) out << '[' << sec << "]\n";
        section = sec;
        first = false;
      }
      out << key << " = ";
      const auto& v = values_.at(path);
      switch (v.kind) {
        case TomlValue::Kind::Number: out << v.num; break;
        case TomlValue::Kind::Boolean: out << (v.boolean ? "true" : "false"); break;
        case TomlValue::Kind::String: out << '"' << v.str << '"'; break;
        case TomlValue::Kind::Array:
          out << '[';
          for (size_t i = 0; i < v.arr.size(); ++i) out << (i ? ", " : "") << v.arr[i];
          out << ']';
          break;
      }
      out << '\n';
    }
    return out.str();
  }

 private:
  static std::string strip(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  static std::string err(int lineno, const std::string& what) {
    return "config: line " + std::to_string(lineno) + ": " + what;
  }

  static double parse_number(const std::string& s, int lineno) {
    size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      throw ConfigError(err(lineno, "bad number '" + s + "'"));
    }
    if (pos != s.size()) throw ConfigError(err(lineno, "trailing characters in '" + s + "'"));
    return v;
  }

  static TomlValue parse_value(const std::string& s, int lineno) {
    if (s == "true") return TomlValue::flag(true);
    if (s == "false") return TomlValue::flag(false);
    if (s.front() == '"') {
      if (s.size() < 2 || s.back() != '"')
        throw ConfigError(err(lineno, "unterminated string"));
      return TomlValue::text(s.substr(1, s.size() - 2));
    }
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(err(lineno, "unterminated array"));
      std::vector<double> arr;
      std::string body = s.substr(1, s.size() - 2);
      std::istringstream items(body);
      for (std::string item; std::getline(items, item, ',');) {
        const std::string t = strip(item);
        if (!t.empty()) arr.push_back(parse_number(t, lineno));
      }
      return TomlValue::array(std::move(arr));
    }
    return TomlValue::number(parse_number(s, lineno));
  }

  std::map<std::string, TomlValue> values_;
  std::vector<std::string> order_;
};

inline void robot_params_to_toml(const RobotParams& p, TomlDoc& doc) {
  doc.set("robot.dof", TomlValue::number(p.dof));
  doc.set("robot.link_masses", TomlValue::array({p.link_masses(0), p.link_masses(1)}));
  doc.set("robot.link_lengths", TomlValue::array({p.link_lengths(0), p.link_lengths(1)}));
  doc.set("robot.motor_inertia_scale", TomlValue::number(p.motor_inertia_scale));
  doc.set("robot.stiffness_scale", TomlValue::number(p.stiffness_scale));
  doc.set("robot.gravity", TomlValue::number(p.gravity));
}

inline RobotParams robot_params_from_toml(const TomlDoc& doc) {
  RobotParams p;
  p.dof = static_cast<int>(doc.number_or("robot.dof", 2));
  if (doc.has("robot.link_masses")) {
    const auto& m = doc.array("robot.link_masses");
    if (m.size() != 2) throw ConfigError("config: robot.link_masses needs 2 entries");
    p.link_masses = Vector2d(m[0], m[1]);
  }
  if (doc.has("robot.link_lengths")) {
    const auto& l = doc.array("robot.link_lengths");
    if (l.size() != 2) throw ConfigError("config: robot.link_lengths needs 2 entries");
    p.link_lengths = Vector2d(l[0], l[1]);
  }
  p.motor_inertia_scale = doc.number_or("robot.motor_inertia_scale", 0.001);
  p.stiffness_scale = doc.number_or("robot.stiffness_scale", 1.0);
  p.gravity = doc.number_or("robot.gravity", 9.81);
  p.validate();
  return p;
}

namespace detail {

inline void kernel_to_toml(const SeKernel& k, const std::string& path, TomlDoc& doc) {
  doc.set(path + ".signal_std", TomlValue::number(k.signal_std));
  std::vector<double> ls(k.lengthscales.data(), k.lengthscales.data() + k.lengthscales.size());
  doc.set(path + ".lengthscales", TomlValue::array(std::move(ls)));
}

inline SeKernel kernel_from_toml(const TomlDoc& doc, const std::string& path) {
  SeKernel k;
  k.signal_std = doc.number(path + ".signal_std");
  const auto& ls = doc.array(path + ".lengthscales");
  k.lengthscales = Eigen::Map<const VectorXd>(ls.data(), static_cast<long>(ls.size()));
  k.validate();
  return k;
}

}  // namespace detail

inline void kernel_params_to_toml(const KernelParams& kp, TomlDoc& doc) {
  const int m = kp.output_dim();
  doc.set("kernels.outputs", TomlValue::number(m));
  for (int i = 0; i < m; ++i) {
    detail::kernel_to_toml(kp.kf[i], "kernels.f" + std::to_string(i + 1), doc);
    for (int j = 0; j < m; ++j)
      detail::kernel_to_toml(kp.kg[i][j],
                             "kernels.g" + std::to_string(i + 1) + std::to_string(j + 1), doc);
  }
}

inline KernelParams kernel_params_from_toml(const TomlDoc& doc) {
  const int m = static_cast<int>(doc.number("kernels.outputs"));
  KernelParams kp;
  kp.kf.resize(m);
  kp.kg.assign(m, std::vector<SeKernel>(m));
  for (int i = 0; i < m; ++i) {
    kp.kf[i] = detail::kernel_from_toml(doc, "kernels.f" + std::to_string(i + 1));
    for (int j = 0; j < m; ++j)
      kp.kg[i][j] = detail::kernel_from_toml(
          doc, "kernels.g" + std::to_string(i + 1) + std::to_string(j + 1));
  }
  kp.validate();
  return kp;
}

/// Everything the pipeline needs, with the simulation study's defaults.
struct StudyConfig {
  RobotParams robot;           // gravity 0: horizontal-plane study arm
  double beta = 24.0;
  double delta = 0.05;
  double zeta = 0.95;
  double sigma_on = 0.1;
  int n_train = 786;
  double prior_rel_error = 0.01;  // relative parameter error of the nominal model
  double u_max = 30.0;
  std::uint64_t data_seed = 2024;
  bool use_paper_gamma = false;  // true: gamma_G = [97, 1640] verbatim
  double paper_gamma_lo = 97.0;
  double paper_gamma_hi = 1640.0;
  double barrier_offset = 0.8;   // b(q) = 0.8 - q1
  double kappa = 16.0;
  double dt_ctrl = 0.01;
  int substeps = 10;
  double horizon = 30.0;
  int n_trials = 100;
  double c_lo = 4.0, c_hi = 100.0;
  std::uint64_t master_seed = 7;
  int threads = 1;
  Eigen::MatrixXd L;  // m x 4m tracking gain
  KernelParams kernels;  // fitted hyperparameters; empty -> must fit
  bool have_kernels = false;

  StudyConfig() {
    robot.gravity = 0.0;
    L = Eigen::MatrixXd::Zero(2, 8);
    const double g[4] = {1e4, 1e3, 300.0, 10.0};
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 4; ++k) L(j, 2 * k + j) = g[k];
  }
};

inline TomlDoc study_config_to_toml(const StudyConfig& c) {
  TomlDoc doc;
  robot_params_to_toml(c.robot, doc);
  doc.set("gp.beta", TomlValue::number(c.beta));
  doc.set("gp.delta", TomlValue::number(c.delta));
  doc.set("gp.zeta", TomlValue::number(c.zeta));
  doc.set("data.sigma_on", TomlValue::number(c.sigma_on));
  doc.set("data.n_train", TomlValue::number(c.n_train));
  doc.set("data.u_max", TomlValue::number(c.u_max));
  doc.set("data.seed", TomlValue::number(static_cast<double>(c.data_seed)));
  doc.set("prior.rel_error", TomlValue::number(c.prior_rel_error));
  doc.set("bounds.use_paper_gamma", TomlValue::flag(c.use_paper_gamma));
  doc.set("bounds.paper_gamma_lo", TomlValue::number(c.paper_gamma_lo));
  doc.set("bounds.paper_gamma_hi", TomlValue::number(c.paper_gamma_hi));
  doc.set("cbf.barrier_offset", TomlValue::number(c.barrier_offset));
  doc.set("cbf.kappa", TomlValue::number(c.kappa));
  for (long i = 0; i < c.L.rows(); ++i) {
    std::vector<double> row(c.L.cols());
    for (long j = 0; j < c.L.cols(); ++j) row[j] = c.L(i, j);
    doc.set("tracking.L" + std::to_string(i + 1), TomlValue::array(std::move(row)));
  }
  doc.set("sim.dt_ctrl", TomlValue::number(c.dt_ctrl));
  doc.set("sim.substeps", TomlValue::number(c.substeps));
  doc.set("sim.horizon", TomlValue::number(c.horizon));
  doc.set("experiment.n_trials", TomlValue::number(c.n_trials));
  doc.set("experiment.c_range", TomlValue::array({c.c_lo, c.c_hi}));
  doc.set("experiment.master_seed", TomlValue::number(static_cast<double>(c.master_seed)));
  doc.set("experiment.threads", TomlValue::number(c.threads));
  if (c.have_kernels) kernel_params_to_toml(c.kernels, doc);
  return doc;
}

inline StudyConfig study_config_from_toml(const TomlDoc& doc) {
  StudyConfig c;
  c.robot = robot_params_from_toml(doc);
  c.beta = doc.number_or("gp.beta", c.beta);
  c.delta = doc.number_or("gp.delta", c.delta);
  c.zeta = doc.number_or("gp.zeta", c.zeta);
  c.sigma_on = doc.number_or("data.sigma_on", c.sigma_on);
  c.n_train = static_cast<int>(doc.number_or("data.n_train", c.n_train));
  c.u_max = doc.number_or("data.u_max", c.u_max);
  c.data_seed = static_cast<std::uint64_t>(doc.number_or("data.seed", 2024));
  c.prior_rel_error = doc.number_or("prior.rel_error", c.prior_rel_error);
  c.use_paper_gamma = doc.flag_or("bounds.use_paper_gamma", c.use_paper_gamma);
  c.paper_gamma_lo = doc.number_or("bounds.paper_gamma_lo", c.paper_gamma_lo);
  c.paper_gamma_hi = doc.number_or("bounds.paper_gamma_hi", c.paper_gamma_hi);
  c.barrier_offset = doc.number_or("cbf.barrier_offset", c.barrier_offset);
  c.kappa = doc.number_or("cbf.kappa", c.kappa);
  for (long i = 0; i < c.L.rows(); ++i) {
    const std::string key = "tracking.L" + std::to_string(i + 1);
    if (!doc.has(key)) continue;
    const auto& row = doc.array(key);
    if (static_cast<long>(row.size()) != c.L.cols())
      throw ConfigError("config: " + key + " needs " + std::to_string(c.L.cols()) + " entries");
    for (long j = 0; j < c.L.cols(); ++j) c.L(i, j) = row[j];
  }
  c.dt_ctrl = doc.number_or("sim.dt_ctrl", c.dt_ctrl);
  c.substeps = static_cast<int>(doc.number_or("sim.substeps", c.substeps));
  c.horizon = doc.number_or("sim.horizon", c.horizon);
  c.n_trials = static_cast<int>(doc.number_or("experiment.n_trials", c.n_trials));
  if (doc.has("experiment.c_range")) {
    const auto& r = doc.array("experiment.c_range");
    if (r.size() != 2 || !(r[0] > 0.0) || !(r[0] <= r[1]))
      throw ConfigError("config: experiment.c_range must be [lo, hi] with 0 < lo <= hi");
    c.c_lo = r[0];
    c.c_hi = r[1];
  }
  c.master_seed = static_cast<std::uint64_t>(doc.number_or("experiment.master_seed", 7));
  c.threads = static_cast<int>(doc.number_or("experiment.threads", 1));
  if (doc.has("kernels.outputs")) {
    c.kernels = kernel_params_from_toml(doc);
    c.have_kernels = true;
  }
  return c;
}

}  // namespace ejcbf
