#pragma once

#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "ejcbf/errors.hpp"
#include "ejcbf/gp.hpp"

namespace ejcbf {

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("io: cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("io: cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw ConfigError("io: short write to '" + path + "'");
}

/// Columns x[0..4m-1], u[0..m-1], y[0..m-1]; noise_std rides in a comment so
/// the round trip is lossless.
inline std::string training_set_to_csv(const TrainingSet& t) {
  t.validate();
  const int d = t.state_dim(), m = t.input_dim();
  std::ostringstream out;
  out << std::setprecision(17);
  out << "# noise_std=" << t.noise_std << '\n';
  for (int k = 0; k < d; ++k) out << (k ? "," : "") << 'x' << k;
  for (int j = 0; j < m; ++j) out << ",u" << j;
  for (int j = 0; j < m; ++j) out << ",y" << j;
  out << '\n';
  for (int n = 0; n < t.count(); ++n) {
    for (int k = 0; k < d; ++k) out << (k ? "," : "") << t.X(n, k);
    for (int j = 0; j < m; ++j) out << ',' << t.U(n, j);
    for (int j = 0; j < m; ++j) out << ',' << t.Y(n, j);
    out << '\n';
  }
  return out.str();
}

inline TrainingSet training_set_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  TrainingSet t;
  int d = -1, m = -1;
  std::vector<double> flat;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find("noise_std=");
      if (eq != std::string::npos) t.noise_std = std::stod(line.substr(eq + 10));
      continue;
    }
    if (d < 0) {  // header row: count x and u columns
      d = m = 0;
      std::istringstream cols(line);
      for (std::string c; std::getline(cols, c, ',');) {
        if (!c.empty() && c[0] == 'x') ++d;
        if (!c.empty() && c[0] == 'u') ++m;
      }
      if (d <= 0 || m <= 0) throw ConfigError("io: malformed training CSV header");
      continue;
    }
    std::istringstream cols(line);
    int got = 0;
    for (std::string c; std::getline(cols, c, ','); ++got) flat.push_back(std::stod(c));
    if (got != d + 2 * m) throw ConfigError("io: training CSV row has wrong column count");
    ++rows;
  }
  if (d < 0) throw ConfigError("io: training CSV has no header");
  t.X.resize(rows, d);
  t.U.resize(rows, m);
  t.Y.resize(rows, m);
  const double* p = flat.data();
  for (int n = 0; n < rows; ++n) {
    for (int k = 0; k < d; ++k) t.X(n, k) = *p++;
    for (int j = 0; j < m; ++j) t.U(n, j) = *p++;
    for (int j = 0; j < m; ++j) t.Y(n, j) = *p++;
  }
  t.validate();
  return t;
}

namespace detail {

inline nlohmann::json matrix_to_json(const MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (long i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (long j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline MatrixXd matrix_from_json(const nlohmann::json& rows, long cols_hint = 0) {
  const long r = static_cast<long>(rows.size());
  const long c = r == 0 ? cols_hint : static_cast<long>(rows[0].size());
  MatrixXd M(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) M(i, j) = rows[i][j].get<double>();
  return M;
}

inline nlohmann::json kernel_to_json(const SeKernel& k) {
  nlohmann::json j;
  j["signal_std"] = k.signal_std;
  j["lengthscales"] = std::vector<double>(
      k.lengthscales.data(), k.lengthscales.data() + k.lengthscales.size());
  return j;
}

inline SeKernel kernel_from_json(const nlohmann::json& j) {
  SeKernel k;
  k.signal_std = j.at("signal_std").get<double>();
  const auto ls = j.at("lengthscales").get<std::vector<double>>();
  k.lengthscales = Eigen::Map<const VectorXd>(ls.data(), static_cast<long>(ls.size()));
  return k;
}

}  // namespace detail

inline constexpr int kGpModelFormatVersion = 1;

/// Persists the dataset and hyperparameters; the prior is code, so loading
/// re-supplies it and rebuilds the Cholesky factors.
inline std::string gp_model_to_json(const GpModel& model) {
  nlohmann::json j;
  j["format"] = "ejcbf-gp";
  j["version"] = kGpModelFormatVersion;
  j["beta"] = model.beta();
  j["delta"] = model.delta();
  const auto& t = model.training_set();
  j["noise_std"] = t.noise_std;
  j["X"] = detail::matrix_to_json(t.X);
  j["U"] = detail::matrix_to_json(t.U);
  j["Y"] = detail::matrix_to_json(t.Y);
  const auto& kp = model.kernel_params();
  nlohmann::json kf = nlohmann::json::array(), kg = nlohmann::json::array();
  for (int i = 0; i < kp.output_dim(); ++i) {
    kf.push_back(detail::kernel_to_json(kp.kf[i]));
    nlohmann::json row = nlohmann::json::array();
    for (int q = 0; q < kp.output_dim(); ++q) row.push_back(detail::kernel_to_json(kp.kg[i][q]));
    kg.push_back(std::move(row));
  }
  j["kf"] = std::move(kf);
  j["kg"] = std::move(kg);
  return j.dump(2);
}

inline GpModel gp_model_from_json(const std::string& text, Prior prior) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("io: bad GP model JSON: ") + e.what());
  }
  if (j.value("format", "") != "ejcbf-gp" || j.value("version", 0) != kGpModelFormatVersion)
    throw ConfigError("io: unrecognized GP model format/version");
  TrainingSet t;
  t.noise_std = j.at("noise_std").get<double>();
  const int m = static_cast<int>(j.at("kf").size());
  t.X = detail::matrix_from_json(j.at("X"), 4 * m);
  t.U = detail::matrix_from_json(j.at("U"), m);
  t.Y = detail::matrix_from_json(j.at("Y"), m);
  KernelParams kp;
  kp.kf.resize(m);
  kp.kg.assign(m, std::vector<SeKernel>(m));
  for (int i = 0; i < m; ++i) {
    kp.kf[i] = detail::kernel_from_json(j.at("kf")[i]);
    for (int q = 0; q < m; ++q) kp.kg[i][q] = detail::kernel_from_json(j.at("kg")[i][q]);
  }
  return GpModel(std::move(t), std::move(prior), std::move(kp), j.at("beta").get<double>(),
                 j.at("delta").get<double>());
}

}  // namespace ejcbf
