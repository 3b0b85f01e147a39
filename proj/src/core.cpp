#include "mstack/core.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mstack {

void parallel_for(Index n, int threads, const std::function<void(Index)>& fn) {
  if (n <= 0) return;
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (t == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  const Index chunk = (n + t - 1) / t;
  for (int w = 0; w < t; ++w) {
    const Index lo = static_cast<Index>(w) * chunk;
    const Index hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (Index i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

bool ModelDrawMatrix::operator==(const ModelDrawMatrix& o) const {
  if (model_id != o.model_id) return false;
  if (loglik.rows() != o.loglik.rows() || loglik.cols() != o.loglik.cols()) return false;
  if (loglik != o.loglik) return false;
  if (pred_mean.has_value() != o.pred_mean.has_value()) return false;
  if (pred_mean && (*pred_mean != *o.pred_mean)) return false;
  return log_marginal == o.log_marginal;
}

bool Manifest::operator==(const Manifest& o) const {
  if (models.size() != o.models.size()) return false;
  for (size_t i = 0; i < models.size(); ++i)
    if (!(models[i] == o.models[i])) return false;
  if (seed != o.seed) return false;
  if (prior_model_probs.has_value() != o.prior_model_probs.has_value()) return false;
  if (prior_model_probs && (*prior_model_probs != *o.prior_model_probs)) return false;
  if (y.has_value() != o.y.has_value()) return false;
  if (y && (*y != *o.y)) return false;
  return true;
}

VectorXd Manifest::prior_or_uniform() const {
  if (prior_model_probs) return *prior_model_probs;
  const Index k = static_cast<Index>(models.size());
  return VectorXd::Constant(k, 1.0 / static_cast<double>(k));
}

bool is_simplex(const VectorXd& w, double tol) {
  if (w.size() == 0) return false;
  for (Index i = 0; i < w.size(); ++i)
    if (!(w(i) >= 0.0)) return false;
  return std::abs(w.sum() - 1.0) <= tol;
}

WeightVector WeightVector::checked(VectorXd w) {
  if (!is_simplex(w))
    throw ValidationError("weight vector is not on the simplex (sum=" +
                          std::to_string(w.sum()) + ")");
  return WeightVector{std::move(w)};
}

Manifest validate_manifest(Manifest m) {
  if (m.models.empty()) throw ValidationError("manifest has no models");
  m.K = static_cast<Index>(m.models.size());

  std::set<std::string> ids;
  for (const auto& model : m.models) {
    if (!ids.insert(model.model_id).second)
      throw ValidationError("duplicate model_id '" + model.model_id + "'");
  }

  m.n = m.models.front().points();
  for (const auto& model : m.models) {
    if (model.draws() < 1 || model.points() < 1)
      throw ValidationError("model '" + model.model_id + "' has an empty loglik matrix");
    if (model.points() != m.n)
      throw ValidationError("dimension mismatch: model '" + model.model_id + "' has n=" +
                            std::to_string(model.points()) + ", expected n=" +
                            std::to_string(m.n));
    for (Index i = 0; i < model.points(); ++i) {
      for (Index s = 0; s < model.draws(); ++s) {
        if (!std::isfinite(model.loglik(s, i)))
          throw NonFinite("non-finite loglik in model '" + model.model_id + "' at (draw " +
                          std::to_string(s + 1) + ", point " + std::to_string(i + 1) + ")");
      }
    }
    if (model.pred_mean) {
      if (model.pred_mean->rows() != model.draws() || model.pred_mean->cols() != model.points())
        throw ValidationError("pred_mean shape mismatch in model '" + model.model_id + "'");
      if (!model.pred_mean->allFinite())
        throw NonFinite("non-finite pred_mean in model '" + model.model_id + "'");
    }
    if (model.log_marginal && !std::isfinite(*model.log_marginal))
      throw NonFinite("non-finite log_marginal in model '" + model.model_id + "'");
  }

  if (m.prior_model_probs) {
    if (m.prior_model_probs->size() != m.K)
      throw ValidationError("prior_model_probs has length " +
                            std::to_string(m.prior_model_probs->size()) + ", expected " +
                            std::to_string(m.K));
    if (!is_simplex(*m.prior_model_probs))
      throw ValidationError("prior_model_probs is not on the simplex");
  }

  if (m.y && m.y->size() != m.n)
    throw ValidationError("y has length " + std::to_string(m.y->size()) +
                          ", expected n=" + std::to_string(m.n));

  return m;
}

namespace {

double parse_double(const std::string& token, Index row, Index col, const std::string& path) {
  const char* b = token.data();
  const char* e = b + token.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t' || *(e - 1) == '\r')) --e;
  double value = 0.0;
  const auto res = std::from_chars(b, e, value);
  if (res.ec != std::errc{} || res.ptr != e)
    throw ValidationError(path + ": cannot parse '" + std::string(b, e) + "' at row " +
                          std::to_string(row + 1) + ", column " + std::to_string(col + 1));
  return value;
}

}  // namespace

MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open matrix file '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    size_t start = 0;
    Index col = 0;
    while (true) {
      const size_t comma = line.find(',', start);
      const std::string token = line.substr(start, comma == std::string::npos
                                                       ? std::string::npos
                                                       : comma - start);
      row.push_back(parse_double(token, static_cast<Index>(rows.size()), col++, path));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ValidationError(path + ": row " + std::to_string(rows.size() + 1) + " has " +
                            std::to_string(row.size()) + " values, expected " +
                            std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(path + ": empty matrix file");

  MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
  return m;
}

void write_matrix_csv(const std::string& path, const MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write matrix file '" + path + "'");
  char buf[40];
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out << buf;
      if (c + 1 < m.cols()) out << ',';
    }
    out << '\n';
  }
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("manifest '" + path + "' is not valid JSON: " + e.what());
  }

  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&base](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  Manifest m;
  try {
    if (!j.contains("models") || !j["models"].is_array())
      throw ValidationError("manifest '" + path + "' lacks a \"models\" array");
    for (const auto& jm : j["models"]) {
      ModelDrawMatrix model;
      if (!jm.contains("id") || !jm.contains("loglik"))
        throw ValidationError("each manifest model needs \"id\" and \"loglik\"");
      model.model_id = jm["id"].get<std::string>();
      model.loglik = read_matrix_csv(resolve(jm["loglik"].get<std::string>()));
      if (jm.contains("pred_mean") && !jm["pred_mean"].is_null())
        model.pred_mean = read_matrix_csv(resolve(jm["pred_mean"].get<std::string>()));
      if (jm.contains("log_marginal") && !jm["log_marginal"].is_null())
        model.log_marginal = jm["log_marginal"].get<double>();
      m.models.push_back(std::move(model));
    }
    if (j.contains("prior_model_probs") && !j["prior_model_probs"].is_null()) {
      const auto v = j["prior_model_probs"].get<std::vector<double>>();
      m.prior_model_probs = Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
    }
    if (j.contains("seed") && !j["seed"].is_null()) m.seed = j["seed"].get<uint64_t>();
    if (j.contains("y") && !j["y"].is_null()) {
      const MatrixXd ym = read_matrix_csv(resolve(j["y"].get<std::string>()));
      if (ym.rows() != 1 && ym.cols() != 1)
        throw ValidationError("y file must be a single row or column");
      m.y = ym.rows() == 1 ? VectorXd(ym.row(0)) : VectorXd(ym.col(0));
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest '" + path + "': " + e.what());
  }

  return validate_manifest(std::move(m));
}

void save_manifest(const Manifest& m, const std::string& dir, const std::string& stem) {
  fs::create_directories(dir);
  const fs::path base(dir);

  json j;
  j["models"] = json::array();
  for (const auto& model : m.models) {
    json jm;
    jm["id"] = model.model_id;
    const std::string ll = stem + "_" + model.model_id + "_loglik.csv";
    write_matrix_csv((base / ll).string(), model.loglik);
    jm["loglik"] = ll;
    if (model.pred_mean) {
      const std::string pm = stem + "_" + model.model_id + "_pred_mean.csv";
      write_matrix_csv((base / pm).string(), *model.pred_mean);
      jm["pred_mean"] = pm;
    }
    if (model.log_marginal) jm["log_marginal"] = *model.log_marginal;
    j["models"].push_back(std::move(jm));
  }
  if (m.prior_model_probs) {
    std::vector<double> v(m.prior_model_probs->data(),
                          m.prior_model_probs->data() + m.prior_model_probs->size());
    j["prior_model_probs"] = v;
  }
  if (m.seed) j["seed"] = *m.seed;
  if (m.y) {
    const std::string yf = stem + "_y.csv";
    write_matrix_csv((base / yf).string(), m.y->transpose());
    j["y"] = yf;
  }

  std::ofstream out(base / (stem + ".json"));
  if (!out) throw ValidationError("cannot write manifest to '" + dir + "'");
  out << j.dump(2) << '\n';
}

}  // namespace mstack
