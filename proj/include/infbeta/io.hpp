#pragma once

// CSV ingestion, run configuration, model files and table emission.

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "infbeta/error.hpp"
#include "infbeta/fitting.hpp"
#include "infbeta/links.hpp"

#ifndef INFBETA_VERSION
#define INFBETA_VERSION "1.0.0"
#endif

namespace infbeta {

using Json = nlohmann::ordered_json;

inline constexpr const char* kModelSchema = "infbeta-model/1";

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or -1.
  long column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return static_cast<long>(j);
    }
    return -1;
  }
};

// RFC 4180: comma separated, double-quoted fields may contain commas, line
// breaks and doubled quotes. CRLF and LF line endings are accepted. A UTF-8
// byte-order mark is skipped.
inline CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) i = 3;
  long line = 1;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
    case '"':
      if (field_started || !field.empty()) {
        throw DataError("line " + std::to_string(line) + ": stray quote inside an unquoted field");
      }
      quoted = true;
      field_started = true;
      break;
    case ',':
      end_field();
      break;
    case '\r':
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      [[fallthrough]];
    case '\n':
      end_record();
      ++line;
      break;
    default:
      field.push_back(ch);
    }
  }
  if (quoted) throw DataError("unterminated quoted field at end of input");
  if (!field.empty() || !record.empty()) end_record();

  if (records.empty()) throw DataError("CSV input has no header row");
  CsvTable table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw DataError("row " + std::to_string(r) + ": expected " + std::to_string(table.header.size()) +
                      " fields, found " + std::to_string(records[r].size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text_file(path)); }

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

inline std::optional<double> parse_double(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Run configuration

struct PredictorConfig {
  LinkKind link = LinkKind::logit;
  std::vector<std::string> terms;
  bool intercept = true;
};

struct ModelConfig {
  int c = 0;
  std::string response = "y";
  PredictorConfig alpha{LinkKind::logit, {}, true};
  PredictorConfig mu{LinkKind::logit, {}, true};
  PredictorConfig phi{LinkKind::log, {}, true};
  double confidence = 0.95;
  std::uint64_t seed = 1;
};

namespace detail {

inline PredictorConfig parse_predictor(const Json& j, const char* key, LinkKind default_link) {
  PredictorConfig p{default_link, {}, true};
  if (!j.contains(key)) return p;
  const Json& s = j.at(key);
  if (!s.is_object()) throw UsageError(std::string("config field '") + key + "' must be an object");
  if (s.contains("link")) p.link = parse_link(s.at("link").get<std::string>());
  if (s.contains("terms")) p.terms = s.at("terms").get<std::vector<std::string>>();
  if (s.contains("intercept")) p.intercept = s.at("intercept").get<bool>();
  if (!p.intercept && p.terms.empty()) {
    throw UsageError(std::string("predictor '") + key + "' has no intercept and no terms");
  }
  return p;
}

inline Json predictor_json(const PredictorConfig& p) {
  Json j;
  j["link"] = std::string(to_string(p.link));
  j["terms"] = p.terms;
  j["intercept"] = p.intercept;
  return j;
}

} // namespace detail

inline ModelConfig parse_model_config(const Json& j) {
  try {
    ModelConfig cfg;
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    cfg.c = j.value("c", 0);
    if (cfg.c != 0 && cfg.c != 1) throw UsageError("config field 'c' must be 0 or 1");
    cfg.response = j.value("response", std::string("y"));
    cfg.alpha = detail::parse_predictor(j, "alpha", LinkKind::logit);
    cfg.mu = detail::parse_predictor(j, "mu", LinkKind::logit);
    cfg.phi = detail::parse_predictor(j, "phi", LinkKind::log);
    cfg.confidence = j.value("confidence", 0.95);
    if (!(cfg.confidence > 0.0 && cfg.confidence < 1.0)) {
      throw UsageError("config field 'confidence' must lie in (0, 1)");
    }
    cfg.seed = j.value("seed", std::uint64_t{1});
    if (!is_unit_link(cfg.alpha.link) || !is_unit_link(cfg.mu.link)) {
      throw UsageError("alpha and mu need a link for (0, 1)");
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed config: ") + e.what());
  }
}

inline Json to_json(const ModelConfig& cfg) {
  Json j;
  j["c"] = cfg.c;
  j["response"] = cfg.response;
  j["alpha"] = detail::predictor_json(cfg.alpha);
  j["mu"] = detail::predictor_json(cfg.mu);
  j["phi"] = detail::predictor_json(cfg.phi);
  j["confidence"] = cfg.confidence;
  j["seed"] = cfg.seed;
  return j;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline ModelConfig load_model_config(const std::filesystem::path& path) {
  return parse_model_config(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Data loading

struct LoadedData {
  Dataset data;
  ModelSpec spec;
};

namespace detail {

inline Matrix design_from_table(const CsvTable& table, const PredictorConfig& p, const char* label,
                                std::vector<std::string>& names) {
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(p.terms.size()) + (p.intercept ? 1 : 0);
  Matrix A(n, cols);
  names.clear();
  Eigen::Index j = 0;
  if (p.intercept) {
    A.col(j++).setOnes();
    names.push_back("(Intercept)");
  }
  for (const auto& term : p.terms) {
    const long col = table.column(term);
    if (col < 0) {
      throw DataError(std::string("column '") + term + "' used by " + label + " is not in the data");
    }
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto v = parse_double(table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]);
      if (!v) {
        throw DataError("row " + std::to_string(r + 1) + ", column '" + term + "': '" +
                        table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)] +
                        "' is not a finite number");
      }
      A(r, j) = *v;
    }
    names.push_back(term);
    ++j;
  }
  return A;
}

} // namespace detail

// Builds the response and the three designs. Rows are numbered from 1,
// counting data rows after the header.
inline LoadedData dataset_from_table(const CsvTable& table, const ModelConfig& cfg) {
  const long ycol = table.column(cfg.response);
  if (ycol < 0) throw DataError("response column '" + cfg.response + "' is not in the data");
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  if (n == 0) throw DataError("data file has no rows");
  Vector y(n);
  std::vector<std::string> bad_extreme;
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::string& cell = table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(ycol)];
    const auto v = detail::parse_double(cell);
    if (!v) {
      throw DataError("row " + std::to_string(r + 1) + ", column '" + cfg.response + "': '" + cell +
                      "' is not a finite number");
    }
    if (*v < 0.0 || *v > 1.0) {
      throw DataError("row " + std::to_string(r + 1) + ", column '" + cfg.response + "': " + cell +
                      " is outside [0, 1]");
    }
    if (*v == static_cast<double>(1 - cfg.c)) bad_extreme.push_back(std::to_string(r + 1));
    y[r] = *v;
  }
  if (!bad_extreme.empty()) {
    std::string rows;
    for (std::size_t i = 0; i < bad_extreme.size(); ++i) rows += (i ? ", " : "") + bad_extreme[i];
    throw DataError("column '" + cfg.response + "' equals " + std::to_string(1 - cfg.c) +
                    " (the non-inflated extreme for c = " + std::to_string(cfg.c) + ") at rows " + rows);
  }
  LoadedData out;
  out.data = Dataset(y, cfg.c);
  out.spec.c = cfg.c;
  out.spec.link_alpha = cfg.alpha.link;
  out.spec.link_mu = cfg.mu.link;
  out.spec.link_phi = cfg.phi.link;
  out.spec.V = detail::design_from_table(table, cfg.alpha, "alpha", out.spec.names_alpha);
  out.spec.X = detail::design_from_table(table, cfg.mu, "mu", out.spec.names_mu);
  out.spec.Z = detail::design_from_table(table, cfg.phi, "phi", out.spec.names_phi);
  return out;
}

inline LoadedData load_csv_dataset(const std::filesystem::path& path, const ModelConfig& cfg) {
  return dataset_from_table(read_csv(path), cfg);
}

// ---------------------------------------------------------------------------
// Number formatting

// 17 significant digits, enough to round-trip any double. Missing values
// are written as NA.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_table_value(const std::string& s) {
  if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
  if (s == "Inf") return std::numeric_limits<double>::infinity();
  if (s == "-Inf") return -std::numeric_limits<double>::infinity();
  const auto v = detail::parse_double(s);
  if (!v) throw DataError("'" + s + "' is not a number");
  return *v;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

// Column-oriented numeric table writer.
inline void write_numeric_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                              const std::vector<Vector>& columns) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << csv_quote(header[j]);
  out << '\n';
  const Eigen::Index rows = columns.empty() ? 0 : columns.front().size();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << format_double(columns[j][r]);
    out << '\n';
  }
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Model files

namespace detail {

inline void fnv1a(std::uint64_t& h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

inline void fnv1a_matrix(std::uint64_t& h, const Matrix& A) {
  const std::int64_t dims[2] = {A.rows(), A.cols()};
  fnv1a(h, dims, sizeof dims);
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double v = A(i, j);
      fnv1a(h, &v, sizeof v);
    }
  }
}

// JSON has no NaN; missing entries are stored as null.
inline Json number_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double json_number(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_json(v[i]));
  return a;
}

inline Vector json_vector(const Json& j, Eigen::Index expected, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != expected) {
    throw DataError(std::string("model file: '") + what + "' does not have " + std::to_string(expected) +
                    " entries");
  }
  Vector v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v[i] = json_number(j[static_cast<std::size_t>(i)]);
  return v;
}

inline Json matrix_json(const Matrix& A) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) rows.push_back(vector_json(A.row(i).transpose()));
  return rows;
}

inline Matrix json_matrix(const Json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw DataError(std::string("model file: '") + what + "' does not have " + std::to_string(rows) + " rows");
  }
  Matrix A(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) A.row(i) = json_vector(j[static_cast<std::size_t>(i)], cols, what);
  return A;
}

inline Json component_json(const ComponentFit& c) {
  Json j;
  j["converged"] = c.converged;
  j["iterations"] = c.iterations;
  j["score_norm"] = number_json(c.score_norm);
  j["loglik"] = number_json(c.loglik);
  j["estimate"] = vector_json(c.estimate);
  j["message"] = c.message;
  return j;
}

inline ComponentFit json_component(const Json& j, Eigen::Index size, const char* what) {
  ComponentFit c;
  c.converged = j.at("converged").get<bool>();
  c.iterations = j.at("iterations").get<int>();
  c.score_norm = json_number(j.at("score_norm"));
  c.loglik = json_number(j.at("loglik"));
  c.estimate = json_vector(j.at("estimate"), size, what);
  c.message = j.at("message").get<std::string>();
  return c;
}

} // namespace detail

// Hash of the response and the three designs; ties a model file to its data.
inline std::string data_hash(const ModelSpec& spec, const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  detail::fnv1a_matrix(h, data.y());
  detail::fnv1a_matrix(h, spec.V);
  detail::fnv1a_matrix(h, spec.X);
  detail::fnv1a_matrix(h, spec.Z);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct SavedModel {
  FittedModel fitted;
  std::optional<ModelConfig> config;
};

inline Json model_to_json(const FittedModel& f, const std::optional<ModelConfig>& cfg = std::nullopt) {
  const auto& s = f.spec;
  Json j;
  j["schema"] = kModelSchema;
  j["version"] = INFBETA_VERSION;
  j["config"] = cfg ? to_json(*cfg) : Json(nullptr);
  j["dimensions"] = {{"n", s.n()}, {"p", s.p()}, {"k", s.k()}, {"m", s.m()}};
  j["model"] = {{"c", s.c},
                {"link_alpha", std::string(to_string(s.link_alpha))},
                {"link_mu", std::string(to_string(s.link_mu))},
                {"link_phi", std::string(to_string(s.link_phi))},
                {"names_alpha", s.names_alpha},
                {"names_mu", s.names_mu},
                {"names_phi", s.names_phi}};
  j["data_hash"] = data_hash(s, f.data);
  j["theta"] = {{"rho", detail::vector_json(f.theta_hat.rho)},
                {"beta", detail::vector_json(f.theta_hat.beta)},
                {"gamma", detail::vector_json(f.theta_hat.gamma)}};
  j["inv_information"] = detail::matrix_json(f.inv_information);
  j["loglik"] = {{"total", detail::number_json(f.loglik)},
                 {"discrete", detail::number_json(f.loglik_discrete)},
                 {"continuous", detail::number_json(f.loglik_continuous)}};
  j["convergence"] = {{"discrete", detail::component_json(f.discrete)},
                      {"continuous", detail::component_json(f.continuous)}};
  j["fitted"] = {{"alpha", detail::vector_json(f.alpha)},
                 {"mu", detail::vector_json(f.mu)},
                 {"phi", detail::vector_json(f.phi)},
                 {"eta_alpha", detail::vector_json(f.eta_alpha)},
                 {"eta_mu", detail::vector_json(f.eta_mu)},
                 {"eta_phi", detail::vector_json(f.eta_phi)}};
  j["data"] = {{"y", detail::vector_json(f.data.y())},
               {"V", detail::matrix_json(s.V)},
               {"X", detail::matrix_json(s.X)},
               {"Z", detail::matrix_json(s.Z)}};
  return j;
}

inline SavedModel model_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("schema")) throw VersionError("model file has no schema field");
  const auto schema = j.at("schema").get<std::string>();
  if (schema != kModelSchema) {
    throw VersionError("model file schema '" + schema + "' is not supported (expected '" + kModelSchema + "')");
  }
  try {
    SavedModel out;
    if (!j.at("config").is_null()) out.config = parse_model_config(j.at("config"));
    const Json& dims = j.at("dimensions");
    const auto n = dims.at("n").get<Eigen::Index>();
    const auto p = dims.at("p").get<Eigen::Index>();
    const auto k = dims.at("k").get<Eigen::Index>();
    const auto m = dims.at("m").get<Eigen::Index>();
    if (n <= 0 || p <= 0 || k <= 0 || m <= 0) throw DataError("model file: dimensions must be positive");
    FittedModel& f = out.fitted;
    const Json& model = j.at("model");
    ModelSpec& s = f.spec;
    s.c = model.at("c").get<int>();
    s.link_alpha = parse_link(model.at("link_alpha").get<std::string>());
    s.link_mu = parse_link(model.at("link_mu").get<std::string>());
    s.link_phi = parse_link(model.at("link_phi").get<std::string>());
    s.names_alpha = model.at("names_alpha").get<std::vector<std::string>>();
    s.names_mu = model.at("names_mu").get<std::vector<std::string>>();
    s.names_phi = model.at("names_phi").get<std::vector<std::string>>();
    if (static_cast<Eigen::Index>(s.names_alpha.size()) != p ||
        static_cast<Eigen::Index>(s.names_mu.size()) != k ||
        static_cast<Eigen::Index>(s.names_phi.size()) != m) {
      throw DataError("model file: term names do not match the dimensions block");
    }
    const Json& data = j.at("data");
    s.V = detail::json_matrix(data.at("V"), n, p, "data.V");
    s.X = detail::json_matrix(data.at("X"), n, k, "data.X");
    s.Z = detail::json_matrix(data.at("Z"), n, m, "data.Z");
    f.data = Dataset(detail::json_vector(data.at("y"), n, "data.y"), s.c);
    if (data_hash(s, f.data) != j.at("data_hash").get<std::string>()) {
      throw DataError("model file: stored data do not match data_hash");
    }
    const Json& theta = j.at("theta");
    f.theta_hat.rho = detail::json_vector(theta.at("rho"), p, "theta.rho");
    f.theta_hat.beta = detail::json_vector(theta.at("beta"), k, "theta.beta");
    f.theta_hat.gamma = detail::json_vector(theta.at("gamma"), m, "theta.gamma");
    f.inv_information = detail::json_matrix(j.at("inv_information"), p + k + m, p + k + m, "inv_information");
    const Json& ll = j.at("loglik");
    f.loglik = detail::json_number(ll.at("total"));
    f.loglik_discrete = detail::json_number(ll.at("discrete"));
    f.loglik_continuous = detail::json_number(ll.at("continuous"));
    const Json& conv = j.at("convergence");
    f.discrete = detail::json_component(conv.at("discrete"), p, "convergence.discrete.estimate");
    f.continuous = detail::json_component(conv.at("continuous"), k + m, "convergence.continuous.estimate");
    const Json& fitted = j.at("fitted");
    f.alpha = detail::json_vector(fitted.at("alpha"), n, "fitted.alpha");
    f.mu = detail::json_vector(fitted.at("mu"), n, "fitted.mu");
    f.phi = detail::json_vector(fitted.at("phi"), n, "fitted.phi");
    f.eta_alpha = detail::json_vector(fitted.at("eta_alpha"), n, "fitted.eta_alpha");
    f.eta_mu = detail::json_vector(fitted.at("eta_mu"), n, "fitted.eta_mu");
    f.eta_phi = detail::json_vector(fitted.at("eta_phi"), n, "fitted.eta_phi");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

inline std::string model_file_text(const FittedModel& f, const std::optional<ModelConfig>& cfg = std::nullopt) {
  return model_to_json(f, cfg).dump(2) + "\n";
}

inline void save_model(const FittedModel& f, const std::filesystem::path& path,
                       const std::optional<ModelConfig>& cfg = std::nullopt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << model_file_text(f, cfg);
}

inline SavedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open model file '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("model file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

} // namespace infbeta
