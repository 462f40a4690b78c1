#ifndef ROBOMVO_CLI_HPP
#define ROBOMVO_CLI_HPP

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <robomvo/admm_engine.hpp>
#include <robomvo/calibration.hpp>
#include <robomvo/market_data.hpp>
#include <robomvo/mvo_core.hpp>
#include <robomvo/robo_pipeline.hpp>
#include <robomvo/views_bl.hpp>

namespace robomvo::cli {

using json = nlohmann::json;

enum ExitCode { kOk = 0, kInputError = 1, kSolverFailure = 2 };

/// Malformed or inconsistent input files and flags.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string out;
  bool pretty = false;
  std::uint64_t seed = 0;
  double tol = 1e-6;
};

// ---------------------------------------------------------------- I/O helpers

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a temporary sibling and renames it, so readers never see a partial file.
inline void write_atomic(const std::string& path, const std::string& content, std::ostream& stdout_) {
  if (path.empty() || path == "-") {
    stdout_ << content;
    return;
  }
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write " + path);
    os << content;
    if (!os.flush()) throw InputError("cannot write " + path);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw InputError("cannot write " + path + ": " + ec.message());
  }
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw InputError(where + ": unknown key '" + k + "'");
}

inline double to_double(const json& j, const std::string& where) {
  if (!j.is_number()) throw InputError(where + ": expected a number");
  return j.get<double>();
}

inline Vec to_vec(const json& j, const std::string& where) {
  if (!j.is_array()) throw InputError(where + ": expected an array");
  Vec v(Eigen::Index(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v(Eigen::Index(i)) = to_double(j[i], where);
  return v;
}

/// Rectangular matrix, or a symmetric one given by its ragged lower triangle.
inline Mat to_mat(const json& j, const std::string& where, bool allow_lower = false) {
  if (!j.is_array() || j.empty()) throw InputError(where + ": expected a nonempty array of rows");
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) {
    Vec v = to_vec(r, where);
    rows.emplace_back(v.data(), v.data() + v.size());
  }
  const size_t m = rows.size(), c = rows[0].size();
  bool rect = std::all_of(rows.begin(), rows.end(), [&](const auto& r) { return r.size() == c; });
  if (rect) {
    Mat out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(c));
    for (size_t i = 0; i < m; ++i)
      for (size_t k = 0; k < c; ++k) out(Eigen::Index(i), Eigen::Index(k)) = rows[i][k];
    return out;
  }
  if (!allow_lower) throw InputError(where + ": rows of unequal length");
  try {
    return from_lower_triangle(rows);
  } catch (const Error&) {
    throw InputError(where + ": neither a square matrix nor a lower triangle");
  }
}

inline json from_vec(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json from_mat(const Mat& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(from_vec(m.row(i).transpose()));
  return out;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n"), b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

inline double parse_number(const std::string& s, const std::string& where) {
  std::string t = trim(s);
  if (t.empty()) throw InputError(where + ": empty field");
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v))
    throw InputError(where + ": not a number '" + t + "'");
  return v;
}

/// CSV with a header row; a leading "date" column is kept as row labels.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::string> labels;
  Mat values;
};

inline CsvTable read_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  CsvTable t;
  if (!std::getline(in, line)) throw InputError(path + ": empty file");
  auto header = split(trim(line), ',');
  for (auto& h : header) h = trim(h);
  bool dated = !header.empty() && (header[0] == "date" || header[0] == "Date" || header[0] == "DATE");
  t.columns.assign(header.begin() + (dated ? 1 : 0), header.end());
  if (t.columns.empty()) throw InputError(path + ": no data columns");
  std::vector<std::vector<double>> rows;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(trim(line), ',');
    if (cells.size() != header.size())
      throw InputError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(header.size()) + " fields");
    if (dated) t.labels.push_back(trim(cells[0]));
    std::vector<double> r;
    for (size_t k = dated ? 1 : 0; k < cells.size(); ++k)
      r.push_back(parse_number(cells[k], path + ":" + std::to_string(lineno)));
    rows.push_back(std::move(r));
  }
  t.values.resize(Eigen::Index(rows.size()), Eigen::Index(t.columns.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t k = 0; k < t.columns.size(); ++k) t.values(Eigen::Index(i), Eigen::Index(k)) = rows[i][k];
  return t;
}

/// Avoids printing "-0.00" for values that round to zero.
inline double unsigned_zero(double v, int digits) {
  return std::abs(v) < 0.5 * std::pow(10.0, -digits) ? 0.0 : v;
}

/// Rows of numbers rendered as CSV (full precision) or, with --pretty, as an aligned table where
/// flagged columns are shown in percent.
struct Table {
  std::vector<std::string> header;
  std::vector<std::string> labels;  // optional first column
  std::string label_header;
  Mat values;
  std::vector<bool> percent;
  std::vector<std::string> trailer;  // optional last text column, one per row
  std::string trailer_header;

  std::string csv() const {
    std::ostringstream os;
    os.precision(17);
    bool lab = !labels.empty(), tr = !trailer.empty();
    if (lab) os << label_header << ',';
    for (size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
    if (tr) os << ',' << trailer_header;
    os << '\n';
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      if (lab) os << labels[size_t(i)] << ',';
      for (Eigen::Index k = 0; k < values.cols(); ++k) os << (k ? "," : "") << values(i, k);
      if (tr) os << ',' << trailer[size_t(i)];
      os << '\n';
    }
    return os.str();
  }

  std::string pretty() const {
    std::ostringstream os;
    size_t lw = label_header.size();
    for (const auto& l : labels) lw = std::max(lw, l.size());
    auto cell = [&](Eigen::Index i, Eigen::Index k) {
      std::ostringstream c;
      bool pc = size_t(k) < percent.size() && percent[size_t(k)];
      double v = values(i, k);
      if (std::isnan(v)) c << "-";
      else if (pc) c << std::fixed << std::setprecision(2) << unsigned_zero(100.0 * v, 2);
      else c << std::fixed << std::setprecision(4) << unsigned_zero(v, 4);
      return c.str();
    };
    std::vector<size_t> w(header.size());
    for (size_t k = 0; k < header.size(); ++k) {
      w[k] = header[k].size() + (k < percent.size() && percent[k] ? 4 : 0);
      for (Eigen::Index i = 0; i < values.rows(); ++i) w[k] = std::max(w[k], cell(i, Eigen::Index(k)).size());
    }
    if (!labels.empty()) os << std::left << std::setw(int(lw)) << label_header;
    for (size_t k = 0; k < header.size(); ++k) {
      std::string h = header[k] + (k < percent.size() && percent[k] ? " (%)" : "");
      os << "  " << std::right << std::setw(int(w[k])) << h;
    }
    if (!trailer.empty()) os << "  " << trailer_header;
    os << '\n';
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      if (!labels.empty()) os << std::left << std::setw(int(lw)) << labels[size_t(i)];
      for (Eigen::Index k = 0; k < values.cols(); ++k)
        os << "  " << std::right << std::setw(int(w[size_t(k)])) << cell(i, k);
      if (!trailer.empty()) os << "  " << trailer[size_t(i)];
      os << '\n';
    }
    return os.str();
  }

  std::string render(bool pretty_mode) const { return pretty_mode ? pretty() : csv(); }
};

inline std::vector<std::string> default_names(Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < n; ++i) out.push_back("asset" + std::to_string(i + 1));
  return out;
}

// ---------------------------------------------------------------- schemas

struct Moments {
  Vec mu;
  Mat sigma;
  double r = 0.0;
  std::vector<std::string> assets;
};

inline Moments parse_moments(const json& j, const std::string& where) {
  check_keys(j, {"assets", "mu", "sigma", "vol", "corr", "r", "scheme", "periods"}, where);
  Moments m;
  if (!j.contains("mu")) throw InputError(where + ": missing 'mu'");
  m.mu = to_vec(j["mu"], where + ".mu");
  const Eigen::Index n = m.mu.size();
  if (j.contains("sigma")) {
    if (j.contains("vol") || j.contains("corr")) throw InputError(where + ": give sigma or vol/corr, not both");
    m.sigma = to_mat(j["sigma"], where + ".sigma", true);
  } else {
    if (!j.contains("vol") || !j.contains("corr")) throw InputError(where + ": missing 'sigma' or 'vol'/'corr'");
    Vec vol = to_vec(j["vol"], where + ".vol");
    Mat corr = to_mat(j["corr"], where + ".corr", true);
    if (vol.size() != n || corr.rows() != n || corr.cols() != n)
      throw InputError(where + ": vol/corr sizes do not match mu");
    m.sigma = covariance_from(vol, corr);
  }
  if (m.sigma.rows() != n || m.sigma.cols() != n) throw InputError(where + ": sigma must be n x n");
  if (j.contains("r")) m.r = to_double(j["r"], where + ".r");
  if (j.contains("assets")) {
    if (!j["assets"].is_array() || Eigen::Index(j["assets"].size()) != n)
      throw InputError(where + ".assets: one name per asset");
    for (const auto& a : j["assets"]) {
      if (!a.is_string()) throw InputError(where + ".assets: names must be strings");
      m.assets.push_back(a.get<std::string>());
    }
  } else {
    m.assets = default_names(n);
  }
  return m;
}

inline Vec bound_vec(const json& j, Eigen::Index n, const std::string& where) {
  if (j.is_number()) return Vec::Constant(n, j.get<double>());
  if (j.is_string()) {
    auto s = j.get<std::string>();
    if (s == "inf") return Vec::Constant(n, kInf);
    if (s == "-inf") return Vec::Constant(n, -kInf);
    throw InputError(where + ": bound must be a number, an array, \"inf\" or \"-inf\"");
  }
  Vec v = to_vec(j, where);
  if (v.size() != n) throw InputError(where + ": one bound per asset");
  return v;
}

inline void parse_linear(const json& j, Eigen::Index n, Mat& A, Vec& b, const std::string& where) {
  check_keys(j, {"A", "b"}, where);
  if (!j.contains("A") || !j.contains("b")) throw InputError(where + ": needs A and b");
  A = to_mat(j["A"], where + ".A");
  b = to_vec(j["b"], where + ".b");
  if (A.cols() != n || A.rows() != b.size()) throw InputError(where + ": A must be m x n and b of size m");
}

inline ConstraintSet parse_constraints(const json& j, Eigen::Index n, const std::string& where,
                                       bool allow_budget) {
  std::set<std::string> keys = {"lower", "upper", "eq", "ineq"};
  if (allow_budget) keys.insert("budget");
  check_keys(j, keys, where);
  ConstraintSet cs;
  if (j.contains("budget")) {
    if (!j["budget"].is_null()) cs.budget = to_double(j["budget"], where + ".budget");
  }
  if (j.contains("lower")) cs.lower = bound_vec(j["lower"], n, where + ".lower");
  if (j.contains("upper")) cs.upper = bound_vec(j["upper"], n, where + ".upper");
  if (j.contains("eq")) parse_linear(j["eq"], n, cs.eq_A, cs.eq_b, where + ".eq");
  if (j.contains("ineq")) parse_linear(j["ineq"], n, cs.ineq_A, cs.ineq_b, where + ".ineq");
  return cs;
}

inline AdmmParams parse_admm(const json& j, const std::string& where, std::uint64_t seed) {
  check_keys(j, {"phi0", "mu", "tau_up", "tau_down", "eps_primal", "eps_dual", "max_iter", "adaptive",
                 "restarts"},
             where);
  AdmmParams p;
  p.seed = seed;
  if (j.contains("phi0")) p.phi0 = to_double(j["phi0"], where);
  if (j.contains("mu")) p.mu = to_double(j["mu"], where);
  if (j.contains("tau_up")) p.tau_up = to_double(j["tau_up"], where);
  if (j.contains("tau_down")) p.tau_down = to_double(j["tau_down"], where);
  if (j.contains("eps_primal")) p.eps_primal = to_double(j["eps_primal"], where);
  if (j.contains("eps_dual")) p.eps_dual = to_double(j["eps_dual"], where);
  if (j.contains("max_iter")) p.max_iter = int(to_double(j["max_iter"], where));
  if (j.contains("restarts")) p.restarts = int(to_double(j["restarts"], where));
  if (j.contains("adaptive")) {
    if (!j["adaptive"].is_boolean()) throw InputError(where + ".adaptive: expected a boolean");
    p.adaptive = j["adaptive"].get<bool>();
  }
  return p;
}

inline Mat parse_gamma_matrix(const json& j, const Mat& sigma, const std::string& where) {
  const Eigen::Index n = sigma.rows();
  if (j.is_string()) {
    auto s = j.get<std::string>();
    if (s == "identity") return Mat::Identity(n, n);
    if (s == "diag_vol") return Mat(sigma.diagonal().cwiseSqrt().asDiagonal());
    if (s == "sigma_chol") {
      Eigen::LLT<Mat> llt(sigma);
      if (llt.info() != Eigen::Success) throw InputError(where + ": sigma is not positive definite");
      return llt.matrixU();
    }
    throw InputError(where + ": expected identity, diag_vol, sigma_chol or a matrix");
  }
  Mat g = to_mat(j, where);
  if (g.cols() != n) throw InputError(where + ": Gamma needs n columns");
  return g;
}

inline RoboPenalty parse_penalty(const json& j, const Mat& sigma, const std::string& where) {
  check_keys(j, {"kind", "p", "rho", "gamma", "anchor"}, where);
  const Eigen::Index n = sigma.rows();
  if (!j.contains("kind") || !j["kind"].is_string()) throw InputError(where + ": missing kind");
  const std::string kind = j["kind"].get<std::string>();
  double rho = j.contains("rho") ? to_double(j["rho"], where + ".rho") : 0.0;
  Mat G = j.contains("gamma") ? parse_gamma_matrix(j["gamma"], sigma, where + ".gamma") : Mat();
  RoboPenalty p;
  if (kind == "l1") p.spec = PenaltySpec::l1(rho, G);
  else if (kind == "l2") p.spec = PenaltySpec::l2(rho, G);
  else if (kind == "lp") {
    if (!j.contains("p")) throw InputError(where + ": lp needs p");
    p.spec = PenaltySpec::lp(to_double(j["p"], where + ".p"), rho, G);
  } else {
    throw InputError(where + ": kind must be l1, l2 or lp");
  }
  if (j.contains("p") && kind != "lp") throw InputError(where + ": p is only valid for lp");
  p.anchor = PenaltyAnchor::Strategic;
  if (j.contains("anchor")) {
    const json& a = j["anchor"];
    if (a.is_string()) {
      auto s = a.get<std::string>();
      if (s == "strategic") p.anchor = PenaltyAnchor::Strategic;
      else if (s == "current") p.anchor = PenaltyAnchor::Current;
      else if (s == "none" || s == "zero") p.anchor = PenaltyAnchor::Zero;
      else throw InputError(where + ".anchor: strategic, current, none or an array");
    } else {
      p.anchor = PenaltyAnchor::Explicit;
      p.spec.anchor = to_vec(a, where + ".anchor");
      if (p.spec.anchor.size() != n) throw InputError(where + ".anchor: one entry per asset");
    }
  }
  return p;
}

struct RoboProblem {
  RoboConfig config;
  std::optional<double> te_target;
};

inline RoboProblem parse_robo(const json& j, const Moments& m, const GlobalOptions& g,
                              const std::string& where) {
  check_keys(j, {"kind", "strategic", "current", "objective", "penalties", "long_only", "budget",
                 "constraints", "gamma", "te_target", "admm"},
             where);
  const Eigen::Index n = m.mu.size();
  RoboProblem rp;
  RoboConfig& c = rp.config;
  if (!j.contains("strategic")) throw InputError(where + ": missing strategic");
  c.strategic = to_vec(j["strategic"], where + ".strategic");
  if (c.strategic.size() != n) throw InputError(where + ".strategic: one weight per asset");
  if (j.contains("current")) {
    c.current = to_vec(j["current"], where + ".current");
    if (c.current.size() != n) throw InputError(where + ".current: one weight per asset");
  }
  if (j.contains("objective")) {
    auto o = j["objective"].is_string() ? j["objective"].get<std::string>() : "";
    if (o == "mvo") c.objective = RoboObjective::Mvo;
    else if (o == "tracking_error") c.objective = RoboObjective::TrackingError;
    else throw InputError(where + ".objective: mvo or tracking_error");
  }
  if (j.contains("penalties")) {
    if (!j["penalties"].is_array()) throw InputError(where + ".penalties: expected an array");
    for (size_t k = 0; k < j["penalties"].size(); ++k)
      c.penalties.push_back(
          parse_penalty(j["penalties"][k], m.sigma, where + ".penalties[" + std::to_string(k) + "]"));
  }
  if (j.contains("long_only")) {
    if (!j["long_only"].is_boolean()) throw InputError(where + ".long_only: expected a boolean");
    c.long_only = j["long_only"].get<bool>();
  }
  if (j.contains("budget")) c.budget = to_double(j["budget"], where + ".budget");
  if (j.contains("constraints")) c.extra = parse_constraints(j["constraints"], n, where + ".constraints", false);
  if (j.contains("gamma") && j.contains("te_target"))
    throw InputError(where + ": give gamma or te_target, not both");
  if (j.contains("gamma")) c.gamma = to_double(j["gamma"], where + ".gamma");
  if (j.contains("te_target")) rp.te_target = to_double(j["te_target"], where + ".te_target");
  c.admm = j.contains("admm") ? parse_admm(j["admm"], where + ".admm", g.seed) : AdmmParams{};
  c.admm.seed = g.seed;
  c.r = m.r;
  return rp;
}

inline std::string kind_of(const json& j) {
  if (!j.is_object()) throw InputError("problem: expected an object");
  if (!j.contains("kind")) return "mvo";
  if (!j["kind"].is_string()) throw InputError("problem.kind: expected a string");
  auto k = j["kind"].get<std::string>();
  if (k != "mvo" && k != "robo") throw InputError("problem.kind: mvo or robo");
  return k;
}

// ---------------------------------------------------------------- reports

inline json report_json(const SolveReport& rep, const Moments& m) {
  json j;
  j["status"] = to_string(rep.status);
  j["assets"] = m.assets;
  j["weights"] = from_vec(rep.weights);
  j["objective"] = rep.objective;
  j["gamma"] = rep.gamma;
  j["iterations"] = rep.iterations;
  j["r_norm"] = rep.r_norm;
  j["s_norm"] = rep.s_norm;
  j["expected_return"] = portfolio_return(rep.weights, m.mu);
  j["volatility"] = portfolio_vol(rep.weights, m.sigma);
  if (rep.duals) {
    json d;
    if (rep.duals->budget) d["budget"] = *rep.duals->budget;
    if (rep.duals->eq.size()) d["eq"] = from_vec(rep.duals->eq);
    if (rep.duals->ineq.size()) d["ineq"] = from_vec(rep.duals->ineq);
    if (rep.duals->lower.size()) d["lower"] = from_vec(rep.duals->lower);
    if (rep.duals->upper.size()) d["upper"] = from_vec(rep.duals->upper);
    j["duals"] = d;
  }
  j["notes"] = rep.notes;
  return j;
}

inline std::string report_pretty(const SolveReport& rep, const Moments& m) {
  Table t;
  t.label_header = "asset";
  t.labels = m.assets;
  t.header = {"weight"};
  t.percent = {true};
  t.values = rep.weights;
  std::ostringstream os;
  os << t.pretty();
  os << std::fixed << std::setprecision(2);
  os << "expected return (%)  " << 100.0 * portfolio_return(rep.weights, m.mu) << '\n';
  os << "volatility (%)       " << 100.0 * portfolio_vol(rep.weights, m.sigma) << '\n';
  os << std::setprecision(6) << "gamma                " << rep.gamma << '\n';
  os << "objective            " << rep.objective << '\n';
  os << "status               " << to_string(rep.status) << '\n';
  return os.str();
}

// ---------------------------------------------------------------- commands

inline WeightScheme parse_scheme(const std::string& s) {
  if (s == "uniform") return WeightScheme::uniform();
  if (s.rfind("ewma:", 0) == 0) {
    double lam = parse_number(s.substr(5), "--scheme");
    if (!(lam > 0.0 && lam < 1.0)) throw InputError("--scheme: ewma decay must lie in (0, 1)");
    return WeightScheme::ewma(lam);
  }
  throw InputError("--scheme: uniform or ewma:<lambda>");
}

inline int cmd_estimate(const std::string& returns, const std::string& scheme, const GlobalOptions& g,
                        std::ostream& out) {
  CsvTable t = read_csv(returns);
  ReturnPanel panel{t.values, t.columns, t.labels};
  auto est = estimate_moments(panel, parse_scheme(scheme));
  std::string content;
  if (g.pretty) {
    Table tab;
    tab.label_header = "asset";
    tab.labels = t.columns;
    tab.header = {"mu", "vol"};
    tab.percent = {true, true};
    tab.values.resize(est.mu.size(), 2);
    tab.values.col(0) = est.mu;
    tab.values.col(1) = est.sigma.diagonal().cwiseSqrt();
    content = tab.pretty();
  } else {
    json j;
    j["assets"] = t.columns;
    j["mu"] = from_vec(est.mu);
    j["sigma"] = from_mat(est.sigma);
    j["scheme"] = est.scheme.name();
    j["periods"] = panel.periods();
    content = dump(j);
  }
  write_atomic(g.out, content, out);
  return kOk;
}

inline SolveReport run_mvo_problem(const json& j, const Moments& m, const GlobalOptions& g) {
  check_keys(j, {"kind", "gamma", "target", "constraints", "cardinality", "admm"}, "problem");
  const Eigen::Index n = m.mu.size();
  MvoInputs in{m.mu, m.sigma, m.r};
  ConstraintSet cs = j.contains("constraints")
                         ? parse_constraints(j["constraints"], n, "problem.constraints", true)
                         : ConstraintSet::budget_only(1.0);
  if (j.contains("gamma") == j.contains("target"))
    throw InputError("problem: give exactly one of gamma or target");
  AdmmParams admm = j.contains("admm") ? parse_admm(j["admm"], "problem.admm", g.seed) : AdmmParams{};
  admm.seed = g.seed;
  if (j.contains("cardinality")) {
    const json& c = j["cardinality"];
    check_keys(c, {"n1", "anchor"}, "problem.cardinality");
    if (!c.contains("n1")) throw InputError("problem.cardinality: missing n1");
    if (!j.contains("gamma")) throw InputError("problem.cardinality: needs gamma");
    int n1 = int(to_double(c["n1"], "problem.cardinality.n1"));
    Vec x0 = c.contains("anchor") ? to_vec(c["anchor"], "problem.cardinality.anchor") : Vec();
    double gamma = to_double(j["gamma"], "problem.gamma");
    auto rep = solve_cardinality(Quadratic::from_mvo(in, gamma), PenaltySpec::l2(0.0), Mat(), x0, n1, cs, admm);
    rep.gamma = gamma;
    return rep;
  }
  if (j.contains("gamma")) return solve_gamma_problem(in, to_double(j["gamma"], "problem.gamma"), cs);
  const json& t = j["target"];
  check_keys(t, {"volatility", "expected_return"}, "problem.target");
  if (t.size() != 1) throw InputError("problem.target: exactly one of volatility or expected_return");
  Target target = t.contains("volatility") ? Target::volatility(to_double(t["volatility"], "problem.target"))
                                           : Target::expected_return(to_double(t["expected_return"], "problem.target"));
  BisectionOptions opt;
  opt.tol = g.tol;
  return calibrate_gamma(in, target, cs, opt).report;
}

inline SolveReport run_robo_problem(const json& j, const Moments& m, const GlobalOptions& g) {
  RoboProblem rp = parse_robo(j, m, g, "problem");
  if (rp.te_target) {
    BisectionOptions opt;
    opt.tol = g.tol;
    return te_target_to_gamma(rp.config, m.mu, m.sigma, *rp.te_target, opt).report;
  }
  return rebalance(rp.config, m.mu, m.sigma);
}

inline int cmd_optimize(const std::string& moments, const std::string& problem, const GlobalOptions& g,
                        std::ostream& out) {
  Moments m = parse_moments(read_json(moments), "moments");
  json pj = read_json(problem);
  SolveReport rep = kind_of(pj) == "robo" ? run_robo_problem(pj, m, g) : run_mvo_problem(pj, m, g);
  write_atomic(g.out, g.pretty ? report_pretty(rep, m) : dump(report_json(rep, m)), out);
  return rep.converged() ? kOk : kSolverFailure;
}

inline GridSpec parse_grid(const std::string& s) {
  auto parts = split(s, ':');
  if (parts.size() != 4 || (parts[0] != "log" && parts[0] != "linear"))
    throw InputError("--grid: expected log:<from>:<to>:<points> or linear:<from>:<to>:<points>");
  GridSpec gs;
  gs.scale = parts[0];
  gs.from = parse_number(parts[1], "--grid");
  gs.to = parse_number(parts[2], "--grid");
  double pts = parse_number(parts[3], "--grid");
  if (pts < 1 || pts != std::floor(pts)) throw InputError("--grid: points must be a positive integer");
  gs.points = int(pts);
  try {
    gs.values();
  } catch (const Error& e) {
    throw InputError(std::string("--grid: ") + e.what());
  }
  return gs;
}

inline int cmd_path(const std::string& moments, const std::string& problem, const std::string& grid,
                    const std::string& param, const std::vector<size_t>& penalties, const GlobalOptions& g,
                    std::ostream& out) {
  Moments m = parse_moments(read_json(moments), "moments");
  json pj = read_json(problem);
  if (kind_of(pj) != "robo") throw InputError("path: the problem must be of kind robo");
  RoboProblem rp = parse_robo(pj, m, g, "problem");
  if (rp.te_target) throw InputError("path: te_target is not supported along a path");
  PathSpec ps;
  ps.param = param;
  ps.penalties = penalties;
  ps.grid = parse_grid(grid).values();
  for (size_t k : penalties)
    if (k >= rp.config.penalties.size()) throw InputError("--penalties: index out of range");
  PathTable t = regularization_path(rp.config, m.mu, m.sigma, ps);
  std::string content;
  if (g.pretty) {
    Table tab;
    tab.label_header = param;
    for (double v : t.grid) {
      std::ostringstream os;
      os << std::setprecision(6) << v;
      tab.labels.push_back(os.str());
    }
    tab.header = m.assets;
    tab.header.push_back("objective");
    tab.percent.assign(m.assets.size(), true);
    tab.percent.push_back(false);
    tab.values.resize(t.weights.rows(), t.weights.cols() + 1);
    tab.values.leftCols(t.weights.cols()) = t.weights;
    for (size_t i = 0; i < t.objective.size(); ++i) tab.values(Eigen::Index(i), t.weights.cols()) = t.objective[i];
    tab.trailer = t.status;
    tab.trailer_header = "status";
    content = tab.pretty();
  } else {
    std::ostringstream os;
    t.write_csv(os, m.assets);
    content = os.str();
  }
  write_atomic(g.out, content, out);
  bool ok = std::all_of(t.status.begin(), t.status.end(), [](const auto& s) { return s == "converged"; });
  return ok ? kOk : kSolverFailure;
}

inline int cmd_calibrate(const std::string& data, const std::string& y, const std::string& method,
                         const std::string& grid, int folds, const std::string& gamma2,
                         const GlobalOptions& g, std::ostream& out) {
  CsvTable t = read_csv(data);
  if (t.columns.size() < 2) throw InputError(data + ": needs a response and at least one regressor");
  size_t yi = 0;
  if (!y.empty()) {
    auto it = std::find(t.columns.begin(), t.columns.end(), y);
    if (it == t.columns.end()) throw InputError("--y: no column named " + y);
    yi = size_t(it - t.columns.begin());
  }
  RidgeRegressionData d;
  d.Y = t.values.col(Eigen::Index(yi));
  d.X.resize(t.values.rows(), t.values.cols() - 1);
  for (Eigen::Index k = 0, c = 0; k < t.values.cols(); ++k)
    if (size_t(k) != yi) d.X.col(c++) = t.values.col(k);
  if (!gamma2.empty()) d.gamma2 = to_mat(read_json(gamma2), "gamma2");
  auto values = parse_grid(grid).values();
  CvCurve curve;
  if (method == "press") curve = grid_search(values, [&](double r) { return press(d, r); });
  else if (method == "gcv") curve = grid_search(values, [&](double r) { return gcv(d, r); });
  else if (method == "kfold") curve = kfold_cv(d, folds, values, g.seed);
  else throw InputError("--method: press, gcv or kfold");
  Table tab;
  tab.header = {"rho2", "error", "best"};
  tab.values.resize(Eigen::Index(values.size()), 3);
  for (size_t i = 0; i < values.size(); ++i) {
    tab.values(Eigen::Index(i), 0) = curve.grid[i];
    tab.values(Eigen::Index(i), 1) = curve.error[i];
    tab.values(Eigen::Index(i), 2) = i == curve.best_index ? 1.0 : 0.0;
  }
  write_atomic(g.out, tab.render(g.pretty), out);
  return kOk;
}

inline int cmd_views(const std::string& moments, const std::string& views, const GlobalOptions& g,
                     std::ostream& out) {
  Moments m = parse_moments(read_json(moments), "moments");
  json j = read_json(views);
  check_keys(j, {"strategic", "scores", "sharpe", "delta", "tau", "card_scale", "P", "Q", "sigma_eps",
                 "mu_prior"},
             "views");
  const Eigen::Index n = m.mu.size();
  Table tab;
  tab.label_header = "asset";
  tab.labels = m.assets;
  if (j.contains("scores")) {
    for (const char* k : {"P", "Q", "sigma_eps", "mu_prior"})
      if (j.contains(k)) throw InputError(std::string("views: ") + k + " cannot be combined with scores");
    if (!j.contains("strategic") || !j.contains("sharpe"))
      throw InputError("views: grades need strategic and sharpe");
    Vec x = to_vec(j["strategic"], "views.strategic");
    if (x.size() != n) throw InputError("views.strategic: one weight per asset");
    GradeViews gv;
    gv.scores = to_vec(j["scores"], "views.scores");
    if (j.contains("delta")) gv.delta = to_double(j["delta"], "views.delta");
    if (j.contains("tau")) gv.tau = to_double(j["tau"], "views.tau");
    if (j.contains("card_scale")) gv.card_scale = int(to_double(j["card_scale"], "views.card_scale"));
    auto res = grades_to_expected_returns(x, m.sigma, m.r, to_double(j["sharpe"], "views.sharpe"), gv);
    tab.header = {"mu_tilde", "mu_breve", "mu"};
    tab.percent = {true, true, true};
    tab.values.resize(n, 3);
    tab.values << res.mu_tilde, res.mu_breve, res.mu;
  } else {
    for (const char* k : {"strategic", "sharpe", "delta", "tau", "card_scale"})
      if (j.contains(k)) throw InputError(std::string("views: ") + k + " is only valid with scores");
    if (!j.contains("P") || !j.contains("Q") || !j.contains("sigma_eps"))
      throw InputError("views: needs scores or P, Q and sigma_eps");
    ViewSet v{to_mat(j["P"], "views.P"), to_vec(j["Q"], "views.Q"), to_mat(j["sigma_eps"], "views.sigma_eps")};
    Vec prior = j.contains("mu_prior") ? to_vec(j["mu_prior"], "views.mu_prior") : m.mu;
    if (prior.size() != n) throw InputError("views.mu_prior: one entry per asset");
    auto post = bl_conditional(prior, m.sigma, v);
    tab.header = {"mu_prior", "mu_bar", "vol_bar"};
    tab.percent = {true, true, true};
    tab.values.resize(n, 3);
    tab.values << prior, post.mu_bar, post.sigma_bar.diagonal().cwiseSqrt();
  }
  write_atomic(g.out, tab.render(g.pretty), out);
  return kOk;
}

inline int cmd_stevens(const std::string& moments, std::optional<double> gamma, const GlobalOptions& g,
                       std::ostream& out) {
  Moments m = parse_moments(read_json(moments), "moments");
  auto rep = stevens_decomposition(MvoInputs{m.mu, m.sigma, m.r}, gamma);
  const Eigen::Index n = m.mu.size();
  Table tab;
  tab.label_header = "asset";
  tab.labels = m.assets;
  tab.header = {"alpha", "r2", "mu_hat", "sigma_hat", "s", "omega", "y_star", "z_star", "x_star"};
  tab.percent.assign(tab.header.size(), true);
  for (const auto& a : m.assets) {
    tab.header.push_back("beta_" + a);
    tab.percent.push_back(false);
  }
  tab.values = Mat::Constant(n, 9 + n, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& a = rep.assets[size_t(i)];
    tab.values.row(i).head(9) << a.alpha, a.r2, a.mu_hat, a.sigma_hat, a.s, a.omega, a.y_star, a.z_star,
        a.x_star;
    for (Eigen::Index j = 0, k = 0; j < n; ++j)
      if (j != i) tab.values(i, 9 + j) = a.beta(k++);
  }
  std::string content = tab.render(g.pretty);
  if (g.pretty) {
    std::ostringstream os;
    os << std::setprecision(6) << "gamma  " << rep.gamma << '\n';
    content += os.str();
  }
  write_atomic(g.out, content, out);
  return kOk;
}

// ---------------------------------------------------------------- entry point

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::MaxIterations:
    case ErrorCode::NumericalDivergence:
    case ErrorCode::NoConvergence:
      return kSolverFailure;
    default:
      return kInputError;
  }
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regularized mean-variance optimization toolkit"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--out", g.out, "Output file (default: standard output)");
  app.add_flag("--pretty", g.pretty, "Human-readable tables in percent");
  app.add_option("--seed", g.seed, "Random seed (default 0)");
  app.add_option("--tol", g.tol, "Calibration tolerance (default 1e-6)")->check(CLI::PositiveNumber);

  std::string returns, scheme = "uniform";
  auto* est = app.add_subcommand("estimate", "Estimate moments from a return panel");
  est->add_option("--returns", returns, "CSV panel")->required();
  est->add_option("--scheme", scheme, "uniform or ewma:<lambda>");

  std::string moments, problem;
  auto* opt = app.add_subcommand("optimize", "Solve an allocation problem");
  opt->add_option("--moments", moments, "Moments JSON")->required();
  opt->add_option("--problem", problem, "Problem JSON")->required();

  std::string grid, param = "rho";
  std::vector<size_t> penalties;
  auto* path = app.add_subcommand("path", "Regularization path");
  path->add_option("--moments", moments, "Moments JSON")->required();
  path->add_option("--problem", problem, "Problem JSON (kind robo)")->required();
  path->add_option("--grid", grid, "log|linear:<from>:<to>:<points>")->required();
  path->add_option("--param", param, "rho or gamma");
  path->add_option("--penalties", penalties, "Penalty indices to vary (default all)")->delimiter(',');

  std::string data, y, method, gamma2;
  int folds = 5;
  auto* cal = app.add_subcommand("calibrate", "Choose the ridge parameter");
  cal->add_option("--data", data, "CSV with response and regressors")->required();
  cal->add_option("--y", y, "Response column (default: first)");
  cal->add_option("--method", method, "press, gcv or kfold")->required();
  cal->add_option("--grid", grid, "log|linear:<from>:<to>:<points>")->required();
  cal->add_option("--folds", folds, "Number of folds for kfold");
  cal->add_option("--gamma2", gamma2, "JSON matrix Gamma2 (default identity)");

  std::string views;
  auto* vw = app.add_subcommand("views", "Blend implied returns with views");
  vw->add_option("--moments", moments, "Moments JSON")->required();
  vw->add_option("--views", views, "Views JSON")->required();

  std::optional<double> gamma;
  auto* st = app.add_subcommand("stevens", "Hedging-portfolio decomposition");
  st->add_option("--moments", moments, "Moments JSON")->required();
  st->add_option("--gamma", gamma, "Risk tolerance (default: fully invested)");

  for (auto* sub : {est, opt, path, cal, vw, st}) sub->fallthrough();

  std::vector<std::string> argv_store = args;
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }

  try {
    if (*est) return cmd_estimate(returns, scheme, g, out);
    if (*opt) return cmd_optimize(moments, problem, g, out);
    if (*path) return cmd_path(moments, problem, grid, param, penalties, g, out);
    if (*cal) return cmd_calibrate(data, y, method, grid, folds, gamma2, g, out);
    if (*vw) return cmd_views(moments, views, g, out);
    if (*st) return cmd_stevens(moments, gamma, g, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const Error& e) {
    std::string msg = e.what();
    if (e.code() == ErrorCode::Infeasible) msg = "infeasible: " + msg;
    err << "error: " << msg << '\n';
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}

}  // namespace robomvo::cli

#endif
