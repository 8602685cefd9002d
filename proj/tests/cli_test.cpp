#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "crd_cli.hpp"
#include "test_util.hpp"

using namespace crd;
using crd::testing::slurp;
using crd::testing::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome crd_run(std::vector<std::string> args) {
  args.insert(args.begin(), "crd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Writes consecutive chunks of one simulated trace as CSV window files.
std::vector<std::string> write_windows(const TempDir& dir, const ScenarioSpec& spec, std::size_t count,
                                       std::size_t rows) {
  Simulator sim(spec);
  std::vector<std::string> paths;
  for (std::size_t w = 0; w < count; ++w) {
    const auto trace = sim.advance(rows);
    paths.push_back(dir.file("w" + std::to_string(w) + ".csv"));
    std::ofstream out(paths.back(), std::ios::binary);
    write_csv(trace.window, out);
  }
  return paths;
}

std::vector<nlohmann::json> read_log(const std::string& path) {
  std::vector<nlohmann::json> records;
  std::istringstream in(slurp(path));
  for (std::string line; std::getline(in, line);) records.push_back(nlohmann::json::parse(line));
  return records;
}

}  // namespace

TEST(CliSimulateTest, WritesTraceFromScenarioFile) {
  TempDir dir;
  ASSERT_EQ(crd_run({"scenario", "--name", "chain", "--out", dir.file("chain.json")}).code, 0);
  const auto r = crd_run({"simulate", "--spec", dir.file("chain.json"), "--t", "300", "--out", dir.file("t.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto w = ingest(dir.file("t.csv"));
  EXPECT_EQ(w.rows(), 300u);
  EXPECT_EQ(w.samples(), generate(scenarios::chain(), 300).window.samples());
}

TEST(CliSimulateTest, UnstableSpecIsRejected) {
  TempDir dir;
  auto spec = scenarios::chain();
  spec.regimes[0].edges.push_back({2, 1, 2, 0.5});
  dir.write("bad.json", to_json(spec).dump());
  const auto r = crd_run({"simulate", "--spec", dir.file("bad.json"), "--t", "100", "--out", dir.file("t.csv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("UnstableSpec"), std::string::npos) << r.err;
}

TEST(CliSimulateTest, PlanWithUnknownVariableIsRejected) {
  TempDir dir;
  dir.write("spec.json", to_json(scenarios::chain()).dump());
  dir.write("plan.json",
            R"({"duration": 10, "signal": {"kind": "constant", "level": 1}, "targets": [{"variable": "w"}]})");
  const auto r = crd_run({"simulate", "--spec", dir.file("spec.json"), "--t", "100", "--out", dir.file("t.csv"),
                          "--plan", dir.file("plan.json")});
  EXPECT_EQ(r.code, 2);
}

TEST(CliSimulateTest, PlanIsExecuted) {
  TempDir dir;
  dir.write("spec.json", to_json(scenarios::chain()).dump());
  dir.write("plan.json",
            R"({"duration": 10, "signal": {"kind": "constant", "level": 4}, "targets": [{"variable": "y"}]})");
  const auto r = crd_run({"simulate", "--spec", dir.file("spec.json"), "--t", "100", "--out", dir.file("t.jsonl"),
                          "--plan", dir.file("plan.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("intervened y over [0, 10)"), std::string::npos) << r.out;
  const auto w = ingest(dir.file("t.jsonl"));
  EXPECT_TRUE((w.samples().col(1).head(10).array() == 4.0).all());
}

TEST(CliDiscoverTest, ChainTraceYieldsChainLinksDeterministically) {
  TempDir dir;
  std::ofstream(dir.file("t.csv"), std::ios::binary) << [] {
    std::ostringstream s;
    write_csv(generate(scenarios::chain(0), 2000).window, s);
    return s.str();
  }();
  dir.write("config.json", R"({"window_capacity": 2000})");
  const auto a = crd_run({"discover", "--data", dir.file("t.csv"), "--config", dir.file("config.json"), "--out",
                          dir.file("a.json")});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto model = load(dir.file("a.json"));
  EXPECT_TRUE(model.has_link({0, 1, 1}));
  EXPECT_TRUE(model.has_link({1, 2, 1}));
  EXPECT_NE(a.out.find("samples=2000 variables=3"), std::string::npos);

  const auto b = crd_run({"discover", "--data", dir.file("t.csv"), "--config", dir.file("config.json"), "--out",
                          dir.file("b.json")});
  EXPECT_EQ(slurp(dir.file("a.json")), slurp(dir.file("b.json")));
  EXPECT_EQ(a.out, b.out);
}

TEST(CliDiscoverTest, TooShortFileIsRejected) {
  TempDir dir;
  dir.write("short.csv", "x,y\n1,2\n2,3\n3,1\n4,4\n5,0\n");
  const auto r = crd_run({"discover", "--data", dir.file("short.csv"), "--out", dir.file("m.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("TooFewSamples"), std::string::npos) << r.err;
}

TEST(CliConfigTest, UnknownKeyAndBadValues) {
  TempDir dir;
  dir.write("t.csv", "x,y\n1,2\n");
  dir.write("typo.json", R"({"alpha_pcc": 0.05})");
  auto r = crd_run({"discover", "--data", dir.file("t.csv"), "--config", dir.file("typo.json"), "--out",
                    dir.file("m.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("alpha_pcc"), std::string::npos);

  dir.write("small.json", R"({"window_capacity": 8})");
  r = crd_run({"discover", "--data", dir.file("t.csv"), "--config", dir.file("small.json"), "--out",
               dir.file("m.json")});
  EXPECT_EQ(r.code, 2);

  EXPECT_EQ(crd_run({"discover", "--data", dir.file("t.csv")}).code, 2);
  EXPECT_EQ(crd_run({"frobnicate"}).code, 2);
  EXPECT_EQ(crd_run({}).code, 2);
}

TEST(CliContinualTest, StationaryWindowsRefineMonotonically) {
  TempDir dir;
  dir.write("config.json", R"({"window_capacity": 1000, "tau_max": 2})");
  const auto windows = write_windows(dir, scenarios::chain(0), 5, 1000);
  std::optional<CausalModel> prev;
  for (std::size_t k = 2; k <= 5; ++k) {
    std::vector<std::string> args{"continual", "--config", dir.file("config.json"), "--out", dir.file("store"),
                                  "--windows"};
    args.insert(args.end(), windows.begin(), windows.begin() + static_cast<long>(k));
    const auto r = crd_run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto model = load(dir.file("store/model.json"));
    if (prev) {
      for (const auto& [key, s] : prev->links()) {
        ASSERT_TRUE(model.has_link(key));
        EXPECT_LE(model.links().at(key).p_value, s.p_value);
      }
    }
    prev = model;
  }
  const auto log = read_log(dir.file("store/session.log"));
  ASSERT_EQ(log.size(), 5u);
  EXPECT_EQ(log[0]["branch"], "cold");
  for (std::size_t i = 1; i < 5; ++i) {
    EXPECT_EQ(log[i]["run_id"], i + 1);
    EXPECT_EQ(log[i]["branch"], "stationary") << log[i].dump();
  }
}

TEST(CliContinualTest, RegimeSwitchYieldsOneNonStationaryRecord) {
  TempDir dir;
  dir.write("config.json", R"({"window_capacity": 1000, "tau_max": 2})");
  const auto windows = write_windows(dir, scenarios::regime_switching3(1), 4, 1000);
  std::vector<std::string> args{"continual", "--config", dir.file("config.json"), "--out", dir.file("store"),
                                "--windows"};
  args.insert(args.end(), windows.begin(), windows.end());
  const auto r = crd_run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto log = read_log(dir.file("store/session.log"));
  ASSERT_EQ(log.size(), 4u);
  int non_stationary = 0;
  for (const auto& rec : log) non_stationary += rec["branch"] == "non_stationary" ? 1 : 0;
  EXPECT_EQ(non_stationary, 1) << r.out;
  EXPECT_EQ(log[2]["branch"], "non_stationary");
}

TEST(CliContinualTest, ClosedLoopLogsPlansAndIsDeterministic) {
  TempDir dir;
  dir.write("spec.json", to_json(scenarios::chain()).dump());
  dir.write("config.json", R"({"tau_max": 2, "seed": 5})");
  auto run_into = [&](const std::string& store) {
    return crd_run({"continual", "--live", dir.file("spec.json"), "--n-windows", "4", "--k", "1", "--config",
                    dir.file("config.json"), "--out", dir.file(store)});
  };
  const auto a = run_into("a");
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run_into("b");
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(dir.file("a/model.json")), slurp(dir.file("b/model.json")));
  EXPECT_EQ(slurp(dir.file("a/session.log")), slurp(dir.file("b/session.log")));

  const auto log = read_log(dir.file("a/session.log"));
  ASSERT_EQ(log.size(), 4u);
  int plans = 0;
  for (const auto& rec : log) {
    if (!rec.contains("plan")) continue;
    ++plans;
    EXPECT_EQ(rec["branch"], "stationary");
    EXPECT_EQ(rec["plan"]["targets"].size(), 1u);
    EXPECT_EQ(rec["plan"]["duration"], 500);
  }
  EXPECT_GE(plans, 1);
  EXPECT_NE(a.out.find("peak_retained_samples=500"), std::string::npos) << a.out;
}

TEST(CliContinualTest, SourceMustBeExactlyOne) {
  TempDir dir;
  EXPECT_EQ(crd_run({"continual", "--out", dir.file("s")}).code, 2);
  dir.write("spec.json", to_json(scenarios::chain()).dump());
  dir.write("w.csv", "x,y,z\n1,2,3\n");
  EXPECT_EQ(crd_run({"continual", "--out", dir.file("s"), "--live", dir.file("spec.json"), "--windows",
                     dir.file("w.csv")})
                .code,
            2);
}

TEST(CliEvalTest, ScoresAndExportsModel) {
  TempDir dir;
  InferenceMatrix m(VariableSet({"x", "y", "z"}), 2, 100, 100);
  m.set({0, 1, 1}, 0.7, 1e-20);
  m.set({2, 0, 2}, 0.2, 1e-5);
  save(build_model(m, 0.001, 1), dir.file("m.json"));
  dir.write("spec.json", to_json(scenarios::chain()).dump());

  const auto r = crd_run({"eval", "--model", dir.file("m.json"), "--spec", dir.file("spec.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto metrics = nlohmann::json::parse(r.out);
  EXPECT_DOUBLE_EQ(metrics["precision"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(metrics["recall"].get<double>(), 0.5);
  EXPECT_EQ(crd_run({"eval", "--model", dir.file("m.json"), "--spec", dir.file("spec.json"), "--regime", "1"}).code,
            2);

  const auto dot = crd_run({"export-dot", "--model", dir.file("m.json")});
  ASSERT_EQ(dot.code, 0);
  EXPECT_EQ(dot.out, export_dot(load(dir.file("m.json"))));
  ASSERT_EQ(crd_run({"export-dot", "--model", dir.file("m.json"), "--out", dir.file("g.dot")}).code, 0);
  EXPECT_EQ(slurp(dir.file("g.dot")), dot.out);

  dir.write("broken.json", "{\"schema_version\": 1, ");
  EXPECT_EQ(crd_run({"export-dot", "--model", dir.file("broken.json")}).code, 2);
}

TEST(CliProcessTest, ExitCodesPropagate) {
  TempDir dir;
  const std::string bin = CRD_CLI_PATH;
  const auto status = [](const std::string& cmd) { return WEXITSTATUS(std::system((cmd + " >/dev/null 2>&1").c_str())); };
  EXPECT_EQ(status(bin + " scenario --name fork --out " + dir.file("f.json")), 0);
  EXPECT_EQ(status(bin + " scenario --name nope"), 2);
  EXPECT_EQ(status(bin + " discover --data " + dir.file("missing.csv") + " --out " + dir.file("m.json")), 2);
  EXPECT_FALSE(is_validation_error(ErrorCode::NumericalFailure));
}
