#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "cli.hpp"
#include "fixtures.hpp"

using namespace robomvo;
namespace fs = std::filesystem;

namespace {

const std::string kData = ROBOMVO_DATA_DIR;

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "robomvo");
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("robomvo_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream(file(name)) << content;
    return file(name);
  }
  size_t count() const { return size_t(std::distance(fs::directory_iterator(path_), fs::directory_iterator())); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json load(const std::string& path) { return nlohmann::json::parse(slurp(path)); }

/// Parses a numeric CSV produced by the CLI: first column labels, remaining columns numbers.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;
};

Csv parse_csv(const std::string& text, bool labelled, size_t text_tail = 0) {
  Csv c;
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  c.header = cli::split(line, ',');
  while (std::getline(is, line)) {
    auto cells = cli::split(line, ',');
    std::vector<double> r;
    size_t start = labelled ? 1 : 0;
    if (labelled) c.labels.push_back(cells[0]);
    for (size_t k = start; k + text_tail < cells.size(); ++k)
      r.push_back(cells[k] == "nan" ? std::nan("") : std::stod(cells[k]));
    c.rows.push_back(r);
  }
  return c;
}

}  // namespace

TEST(Cli, EstimateUniformMatchesWeightedMeans) {
  TempDir d;
  auto r = run_cli({"estimate", "--returns", kData + "/returns_sample.csv", "--out", d.file("m.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = load(d.file("m.json"));
  auto t = cli::read_csv(kData + "/returns_sample.csv");
  const Mat& R = t.values;
  Vec mean = R.colwise().mean().transpose();
  Mat centered = R.rowwise() - mean.transpose();
  Mat cov = centered.transpose() * centered / double(R.rows());
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(j["mu"][i].get<double>(), mean(i), 1e-15);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(j["sigma"][i][k].get<double>(), cov(i, k), 1e-15);
  }
  EXPECT_EQ(j["assets"][0], "eq_us");
  EXPECT_EQ(j["periods"], 60);
}

TEST(Cli, EstimateEwmaWeights) {
  TempDir d;
  auto r = run_cli({"estimate", "--returns", kData + "/returns_sample.csv", "--scheme", "ewma:0.97",
                    "--out", d.file("m.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = load(d.file("m.json"));
  auto t = cli::read_csv(kData + "/returns_sample.csv");
  const Eigen::Index T = t.values.rows();
  double wsum = 0, m0 = 0;
  for (Eigen::Index s = 0; s < T; ++s) {
    double w = std::pow(0.97, double(T - 1 - s));
    wsum += w;
    m0 += w * t.values(s, 0);
  }
  EXPECT_NEAR(j["mu"][0].get<double>(), m0 / wsum, 1e-15);
}

TEST(Cli, MalformedCsvLeavesNoOutput) {
  TempDir d;
  auto bad = d.write("bad.csv", "date,a,b\n2020-01-01,0.1,0.2\n2020-01-02,0.3\n");
  auto r = run_cli({"estimate", "--returns", bad, "--out", d.file("m.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(d.file("m.json")));
  EXPECT_NE(r.err.find("expected 3 fields"), std::string::npos) << r.err;
  auto bad2 = d.write("bad2.csv", "a,b\n0.1,x\n0.2,0.3\n");
  EXPECT_EQ(run_cli({"estimate", "--returns", bad2}).code, 1);
}

TEST(Cli, OptimizeExampleOneTableOne) {
  TempDir d;
  auto r = run_cli({"optimize", "--moments", kData + "/example1_moments.json", "--problem",
                    kData + "/example1_sigma15.json", "--out", d.file("rep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = load(d.file("rep.json"));
  const double want[] = {26.30, 25.52, 32.28, 15.90};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(j["weights"][i].get<double>() * 100, want[i], 0.02);
  EXPECT_NEAR(j["volatility"].get<double>(), 0.15, 1e-6);
  EXPECT_EQ(j["status"], "converged");
  EXPECT_EQ(d.count(), 1u);  // no temporary left behind
}

TEST(Cli, OptimizeRoboMatchesLibraryBitForBit) {
  TempDir d;
  auto r = run_cli({"optimize", "--moments", kData + "/robo10_moments.json", "--problem",
                    kData + "/robo10_rebalance.json", "--out", d.file("rep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = load(d.file("rep.json"));

  auto mj = load(kData + "/robo10_moments.json");
  Vec vol = cli::to_vec(mj["vol"], "vol");
  Mat sigma = covariance_from(vol, cli::to_mat(mj["corr"], "corr", true));
  Vec mu = cli::to_vec(mj["mu"], "mu");
  auto pj = load(kData + "/robo10_rebalance.json");
  RoboConfig c;
  c.strategic = cli::to_vec(pj["strategic"], "s");
  c.current = cli::to_vec(pj["current"], "c");
  c.gamma = pj["gamma"].get<double>();
  const PenaltyAnchor anchors[] = {PenaltyAnchor::Strategic, PenaltyAnchor::Current,
                                   PenaltyAnchor::Strategic, PenaltyAnchor::Current};
  for (int k = 0; k < 4; ++k) {
    double rho = pj["penalties"][k]["rho"].get<double>();
    c.penalties.push_back({k < 2 ? PenaltySpec::l1(rho) : PenaltySpec::l2(rho), anchors[k]});
  }
  auto rep = rebalance(c, mu, sigma);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(j["weights"][i].get<double>(), rep.weights(i));
  EXPECT_EQ(j["objective"].get<double>(), rep.objective);
}

TEST(Cli, OptimizeTrackingErrorTarget) {
  auto r = run_cli({"optimize", "--moments", kData + "/robo10_moments.json", "--problem",
                    kData + "/robo10_te2pct.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  Vec x = cli::to_vec(j["weights"], "w");
  auto mj = load(kData + "/robo10_moments.json");
  Mat sigma = covariance_from(cli::to_vec(mj["vol"], "v"), cli::to_mat(mj["corr"], "c", true));
  EXPECT_NEAR(tracking_error(x, Vec::Constant(10, 0.1), sigma), 0.02, 1e-6);
}

TEST(Cli, InfeasibleConstraintsExitOne) {
  TempDir d;
  auto p = d.write("p.json", R"({"kind":"mvo","gamma":0.5,"constraints":{"budget":1,"upper":0.2}})");
  auto r = run_cli({"optimize", "--moments", kData + "/example1_moments.json", "--problem", p, "--out",
                    d.file("rep.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("infeasible"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(d.file("rep.json")));
}

TEST(Cli, SolverFailureExitTwoWithReport) {
  TempDir d;
  auto p = d.write("p.json", R"({"kind":"robo","strategic":[0.4,0.3,0.2,0.1],"gamma":0.25,
    "penalties":[{"kind":"l1","rho":0.01,"anchor":"none"}],"admm":{"max_iter":3}})");
  auto r = run_cli({"optimize", "--moments", kData + "/example2_moments.json", "--problem", p, "--out",
                    d.file("rep.json")});
  EXPECT_EQ(r.code, 2) << r.err;
  auto j = load(d.file("rep.json"));
  EXPECT_EQ(j["status"], "max_iter");
}

TEST(Cli, UnknownKeysRejected) {
  TempDir d;
  auto p = d.write("p.json", R"({"kind":"mvo","gamma":0.5,"gama":1})");
  auto r = run_cli({"optimize", "--moments", kData + "/example1_moments.json", "--problem", p});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown key 'gama'"), std::string::npos) << r.err;
  auto p2 = d.write("p2.json", R"({"kind":"robo","strategic":[0.25,0.25,0.25,0.25],
    "penalties":[{"kind":"l1","rho":0.1,"anchr":"current"}]})");
  EXPECT_EQ(run_cli({"optimize", "--moments", kData + "/example1_moments.json", "--problem", p2}).code, 1);
  auto m = d.write("m.json", R"({"mu":[0.1],"sigma":[[0.04]],"extra":1})");
  EXPECT_EQ(run_cli({"stevens", "--moments", m}).code, 1);
}

TEST(Cli, BadFlagsExitOne) {
  EXPECT_EQ(run_cli({"optimize"}).code, 1);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
  EXPECT_EQ(run_cli({"path", "--moments", kData + "/example2_moments.json", "--problem",
                     kData + "/example2_ridge_target.json", "--grid", "cubic:1:2:3"})
                .code,
            1);
  EXPECT_EQ(run_cli({"estimate", "--returns", kData + "/returns_sample.csv", "--scheme", "ewma:1.5"}).code, 1);
  EXPECT_EQ(run_cli({"estimate", "--returns", "/nonexistent.csv"}).code, 1);
}

TEST(Cli, HedgingDecompositionExampleOne) {
  auto r = run_cli({"stevens", "--moments", kData + "/example1_moments.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto c = parse_csv(r.out, true);
  ASSERT_EQ(c.rows.size(), 4u);
  EXPECT_EQ(c.header[1], "alpha");
  // alpha, r2, mu_hat, sigma_hat, s, omega, y, z, x in percent
  const double want[4][9] = {{1.70, 45.83, 5.30, 10.16, 11.04, 84.62, 80.22, 132.48, 36.00},
                             {2.06, 37.77, 5.94, 11.06, 14.20, 60.68, 63.67, 125.09, 26.39},
                             {2.85, 33.52, 6.15, 11.58, 16.31, 50.43, 58.02, 118.19, 27.67},
                             {1.41, 41.50, 8.59, 16.11, 19.12, 70.94, 41.26, 85.40, 9.94}};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 9; ++k) EXPECT_NEAR(c.rows[size_t(i)][size_t(k)] * 100, want[i][k], 0.01) << i << k;
  EXPECT_NEAR(c.rows[0][10], 0.139, 0.002);  // beta of asset 1 on asset 2
  EXPECT_TRUE(std::isnan(c.rows[0][9]));
}

TEST(Cli, ViewsScenarioOne) {
  TempDir d;
  auto r = run_cli({"views", "--moments", kData + "/robo10_moments.json", "--views",
                    kData + "/robo10_views_s1.json", "--out", d.file("v.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto c = parse_csv(slurp(d.file("v.csv")), true);
  ASSERT_EQ(c.rows.size(), 10u);
  const double mt[] = {2.57, 0.96, 3.02, 1.02, 4.09, 2.88, 5.76, 6.35, 6.76, 7.18};
  const double mb[] = {5.64, 3.29, 3.02, 1.02, 4.09, 2.88, 0.40, -0.48, -1.34, 1.24};
  const double mu[] = {4.10, 2.12, 3.02, 1.02, 4.09, 2.88, 3.08, 2.94, 2.71, 4.21};
  for (size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(c.rows[i][0] * 100, mt[i], 0.01);
    EXPECT_NEAR(c.rows[i][1] * 100, mb[i], 0.01);
    EXPECT_NEAR(c.rows[i][2] * 100, mu[i], 0.01);
  }
  EXPECT_EQ(c.labels[7], "Europe_Equities");
}

TEST(Cli, ViewsGeneralPosterior) {
  TempDir d;
  auto v = d.write("v.json", R"({"P":[[1,-1,0,0]],"Q":[0.02],"sigma_eps":[[0.0004]]})");
  auto r = run_cli({"views", "--moments", kData + "/example1_moments.json", "--views", v});
  ASSERT_EQ(r.code, 0) << r.err;
  auto c = parse_csv(r.out, true);
  auto in = fx::example1();
  Mat P(1, 4);
  P << 1, -1, 0, 0;
  auto post = bl_conditional(in.mu, in.sigma, ViewSet{P, fx::vec({0.02}), fx::vec({0.0004}).asDiagonal()});
  for (size_t i = 0; i < 4; ++i) EXPECT_NEAR(c.rows[i][1], post.mu_bar(Eigen::Index(i)), 1e-15);
}

TEST(Cli, CalibrateMatchesLibraryScan) {
  auto r = run_cli({"calibrate", "--data", kData + "/ridge_sample.csv", "--method", "gcv", "--grid",
                    "log:1e-4:1e2:25"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto c = parse_csv(r.out, false);
  ASSERT_EQ(c.rows.size(), 25u);
  auto t = cli::read_csv(kData + "/ridge_sample.csv");
  RidgeRegressionData d{t.values.rightCols(4), t.values.col(0), Mat()};
  auto grid = GridSpec{"rho2", "log", 1e-4, 1e2, 25}.values();
  auto curve = grid_search(grid, [&](double rho) { return gcv(d, rho); });
  int best_rows = 0;
  for (size_t i = 0; i < 25; ++i) {
    EXPECT_EQ(c.rows[i][0], grid[i]);
    EXPECT_EQ(c.rows[i][1], curve.error[i]);
    if (c.rows[i][2] == 1.0) {
      ++best_rows;
      EXPECT_EQ(i, curve.best_index);
    }
  }
  EXPECT_EQ(best_rows, 1);
}

TEST(Cli, DeterministicOutputs) {
  TempDir d;
  for (int k = 0; k < 2; ++k) {
    ASSERT_EQ(run_cli({"--seed", "11", "calibrate", "--data", kData + "/ridge_sample.csv", "--method", "kfold",
                       "--grid", "log:1e-3:1e1:9", "--folds", "4", "--out", d.file("cv" + std::to_string(k))})
                  .code,
              0);
    ASSERT_EQ(run_cli({"optimize", "--moments", kData + "/example1_moments.json", "--problem",
                       kData + "/example1_cardinality.json", "--out", d.file("card" + std::to_string(k))})
                  .code,
              0);
    ASSERT_EQ(run_cli({"path", "--moments", kData + "/example2_moments.json", "--problem",
                       kData + "/example2_lasso_notarget.json", "--grid", "log:1e-4:1e2:7", "--out",
                       d.file("path" + std::to_string(k))})
                  .code,
              0);
  }
  for (const char* f : {"cv", "card", "path"})
    EXPECT_EQ(slurp(d.file(std::string(f) + "0")), slurp(d.file(std::string(f) + "1"))) << f;
  auto other = run_cli({"--seed", "12", "calibrate", "--data", kData + "/ridge_sample.csv", "--method",
                        "kfold", "--grid", "log:1e-3:1e1:9", "--folds", "4"});
  EXPECT_NE(other.out, slurp(d.file("cv0")));
}

TEST(Cli, PathCsvAndLimits) {
  auto r = run_cli({"path", "--moments", kData + "/example2_moments.json", "--problem",
                    kData + "/example2_ridge_target.json", "--grid", "log:1e-4:1e3:8"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto c = parse_csv(r.out, false, 1);
  EXPECT_EQ(c.header.front(), "param");
  EXPECT_EQ(c.header.back(), "status");
  ASSERT_EQ(c.rows.size(), 8u);
  const double x0[] = {0.4, 0.3, 0.2, 0.1};
  for (size_t i = 0; i < 4; ++i) EXPECT_NEAR(c.rows[7][1 + i], x0[i], 1e-3);
}

TEST(Cli, PrettyRendersPercent) {
  auto r = run_cli({"--pretty", "optimize", "--moments", kData + "/example1_moments.json", "--problem",
                    kData + "/example1_sigma15.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("26.30"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("weight (%)"), std::string::npos);
  auto after = run_cli({"optimize", "--moments", kData + "/example1_moments.json", "--problem",
                        kData + "/example1_sigma15.json", "--pretty"});
  EXPECT_EQ(after.out, r.out);
}

TEST(Cli, InputsUnchanged) {
  std::string before = slurp(kData + "/robo10_rebalance.json");
  run_cli({"optimize", "--moments", kData + "/robo10_moments.json", "--problem", kData + "/robo10_rebalance.json"});
  EXPECT_EQ(slurp(kData + "/robo10_rebalance.json"), before);
}
