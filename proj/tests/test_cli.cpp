#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include "json.hpp"
#include "pmv/app/plot.hpp"
#include "pmv/core/csv.hpp"
#include "pmv/core/cube.hpp"
#include "pmv/core/hash.hpp"
#include "pmv/core/io.hpp"

using namespace pmv;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("pmv_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args, const std::string& env = "") {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" PMV_CLI_PATH "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text_file(out);
    r.err = read_text_file(err);
    return r;
  }

  fs::path path(const std::string& name) const { return dir_ / name; }
  CsvTable table(const std::string& name) const { return CsvTable::parse(read_text_file(path(name))); }
  void write(const std::string& name, const std::string& text) const { write_file_atomic(path(name), text); }

  fs::path dir_;
};

const char* kTwoSubjects = R"([scene]
snr_db = 20

[target.0]
angle_deg = 30
range_m = 1.6
breathing_amplitude_m = 0.004
breathing_rate_hz = 0.2
heartbeat_amplitude_m = 0.0001
heartbeat_rate_hz = 1.1

[target.1]
angle_deg = -30
range_m = 1.6
breathing_amplitude_m = 0.004
breathing_rate_hz = 0.3
heartbeat_amplitude_m = 0.0001
heartbeat_rate_hz = 1.5
)";

std::string truth_rows(const std::vector<double>& br) {
  CsvTable t("truth", {"window_start_s", "target_id", "br_bpm", "hr_bpm"});
  for (std::size_t i = 0; i < br.size(); ++i)
    t.add_row({fmt_num(static_cast<double>(i)), "0", fmt_num(br[i]), "78"});
  return t.to_string();
}

}  // namespace

TEST_F(Cli, SimulateDefaultsGiveTableOneDims) {
  const auto r = run("simulate --out sim --jobs 4");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cube = read_cube_file(path("sim/cube.rdc").string());
  const auto& d = cube.dims();
  EXPECT_EQ(d.frames, 2400u);
  EXPECT_EQ(d.subframes, 4u);
  EXPECT_EQ(d.chirps, 1u);
  EXPECT_EQ(d.rx, 4u);
  EXPECT_EQ(d.samples, 256u);
  const auto m = nlohmann::json::parse(read_text_file(path("sim/manifest.json")));
  EXPECT_EQ(m["seed"], 1);
  EXPECT_EQ(m["files"]["cube.rdc"], sha256_file(path("sim/cube.rdc").string()));
  EXPECT_EQ(m["config_hash"].get<std::string>().size(), 64u);
  EXPECT_EQ(table("sim/truth.csv").schema(), "truth");
  EXPECT_NE(r.out.find("2400 x 4 x 1 x 4 x 256"), std::string::npos);
}

TEST_F(Cli, DurationShorterThanFrameIsValidationError) {
  const auto r = run("simulate --duration 0.01 --out sim");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("duration"), std::string::npos) << r.err;
}

TEST_F(Cli, SameSeedSameHash) {
  ASSERT_EQ(run("simulate --duration 5 --seed 9 --out a").code, 0);
  ASSERT_EQ(run("simulate --duration 5 --seed 9 --out b --jobs 3").code, 0);
  ASSERT_EQ(run("simulate --duration 5 --seed 10 --out c").code, 0);
  EXPECT_EQ(sha256_file(path("a/cube.rdc").string()), sha256_file(path("b/cube.rdc").string()));
  EXPECT_EQ(read_text_file(path("a/manifest.json")), read_text_file(path("b/manifest.json")));
  EXPECT_NE(sha256_file(path("a/cube.rdc").string()), sha256_file(path("c/cube.rdc").string()));
}

TEST_F(Cli, EnvironmentOverridesConfigKeys) {
  const auto r = run("simulate --duration 12 --out sim", "PMV_CHIRP_FRAME_PERIOD_S=0.1");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_cube_file(path("sim/cube.rdc").string()).dims().frames, 120u);
}

TEST_F(Cli, BadSceneKeyIsNamed) {
  write("scene.ini", "[target.0]\nrange = 1\n");
  const auto r = run("simulate --scene scene.ini --duration 1 --out sim");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("target.0.range"), std::string::npos) << r.err;
}

TEST_F(Cli, ProcessSingleTargetScene) {
  ASSERT_EQ(run("simulate --out sim --jobs 4").code, 0);
  const auto r = run("process --cube sim/cube.rdc --truth sim/truth.csv --out run --jobs 2");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = table("run/report.csv");
  ASSERT_EQ(rep.row_count(), 1u);
  EXPECT_DOUBLE_EQ(rep.number(0, "angle_deg"), 30.0);
  EXPECT_DOUBLE_EQ(rep.number(0, "br_accuracy"), 1.0);
  EXPECT_DOUBLE_EQ(rep.number(0, "hr_accuracy"), 1.0);
  // Breathing at the tighter 1 bpm tolerance.
  const auto ev = run("evaluate --estimates run/vitals.csv --truth sim/truth.csv --tolerance 1 --out ev");
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto m = table("ev/metrics.csv");
  ASSERT_EQ(m.row_count(), 2u);
  EXPECT_EQ(m.cell(0, "vital"), "br");
  EXPECT_DOUBLE_EQ(m.number(0, "accuracy"), 1.0);
  EXPECT_NE(r.out.find("BR_acc"), std::string::npos);
  for (const char* f : {"config.ini", "log.csv", "vitals.csv", "phase_phased_mimo_0.csv",
                        "range_profile_phased_mimo_0.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(path("run") / f)) << f;
}

TEST_F(Cli, ExplicitAnglesGiveOneRowEach) {
  write("scene.ini", kTwoSubjects);
  ASSERT_EQ(run("simulate --scene scene.ini --duration 61 --out sim --jobs 4").code, 0);
  const auto r = run("process --cube sim/cube.rdc --angles 30,-30 --truth sim/truth.csv --out run");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = table("run/report.csv");
  ASSERT_EQ(rep.row_count(), 2u);
  EXPECT_EQ(rep.cell(0, "target_id"), "0");
  EXPECT_EQ(rep.cell(1, "target_id"), "1");
  EXPECT_NEAR(rep.number(0, "br_bpm"), 12.0, 1.0);
  EXPECT_NEAR(rep.number(1, "br_bpm"), 18.0, 1.0);
}

TEST_F(Cli, AutoAnglesUseDetectionRecording) {
  write("scene.ini", kTwoSubjects);
  ASSERT_EQ(run("simulate --scene scene.ini --duration 61 --out sim --jobs 4").code, 0);
  const auto r = run("process --cube sim/cube.rdc --out run");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = table("run/report.csv");
  ASSERT_EQ(rep.row_count(), 2u);
  EXPECT_DOUBLE_EQ(rep.number(0, "angle_deg"), -30.0);
  EXPECT_DOUBLE_EQ(rep.number(1, "angle_deg"), 30.0);
}

TEST_F(Cli, ModeBothPairsEachDirection) {
  write("scene.ini", kTwoSubjects);
  ASSERT_EQ(run("simulate --scene scene.ini --duration 61 --out sim --jobs 4").code, 0);
  const auto r = run("process --cube sim/cube.rdc --angles 30,-30 --mode both --truth sim/truth.csv --out run");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = table("run/report.csv");
  ASSERT_EQ(rep.row_count(), 4u);
  EXPECT_EQ(rep.cell(0, "mode"), "phased_array");
  EXPECT_EQ(rep.cell(2, "mode"), "phased_mimo");
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(rep.cell(i, "direction"), rep.cell(i + 2, "direction"));
}

TEST_F(Cli, StageFailureExitsThreeNamingStage) {
  ASSERT_EQ(run("simulate --duration 61 --out sim").code, 0);
  const auto r = run("process --cube sim/cube.rdc --angles 10 --out run");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("stage extract"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(path("run/log.csv")));
}

TEST_F(Cli, ProcessIsDeterministic) {
  ASSERT_EQ(run("simulate --duration 61 --seed 4 --out sim").code, 0);
  ASSERT_EQ(run("process --cube sim/cube.rdc --truth sim/truth.csv --out a").code, 0);
  ASSERT_EQ(run("process --cube sim/cube.rdc --truth sim/truth.csv --out b --jobs 3").code, 0);
  EXPECT_EQ(read_text_file(path("a/manifest.json")), read_text_file(path("b/manifest.json")));
}

TEST_F(Cli, MissingCubeIsInputError) {
  EXPECT_EQ(run("process --cube nope.rdc --angles 30 --out run").code, 2);
  write("bad.rdc", "RDC2xxxxxxxxxxxxxxxxxxxxxxxxxx");
  EXPECT_EQ(run("process --cube bad.rdc --angles 30 --out run").code, 2);
}

TEST_F(Cli, EvaluateIdenticalFilesIsPerfect) {
  write("truth.csv", truth_rows({15, 15, 15}));
  const auto r = run("evaluate --estimates truth.csv --truth truth.csv --out ev");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = table("ev/metrics.csv");
  EXPECT_DOUBLE_EQ(m.number(0, "accuracy"), 1.0);
  EXPECT_DOUBLE_EQ(m.number(1, "accuracy"), 1.0);
}

TEST_F(Cli, EvaluateErrorFixture) {
  write("truth.csv", truth_rows({15, 15, 15}));
  write("est.csv", truth_rows({15, 17, 20}));
  ASSERT_EQ(run("evaluate --estimates est.csv --truth truth.csv --out ev").code, 0);
  const auto m = table("ev/metrics.csv");
  EXPECT_EQ(m.cell(0, "vital"), "br");
  EXPECT_NEAR(m.number(0, "rmse_bpm"), 3.1091, 1e-4);
  EXPECT_NEAR(m.number(0, "accuracy"), 0.6667, 1e-4);
}

TEST_F(Cli, EvaluateMissingColumnNamesIt) {
  write("truth.csv", truth_rows({15, 15}));
  write("est.csv", "# schema=est v1\nwindow_start_s,target_id,br_bpm\n0,0,15\n1,0,15\n");
  const auto r = run("evaluate --estimates est.csv --truth truth.csv");
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("hr_bpm"), std::string::npos) << r.err;
}

TEST_F(Cli, EvaluateGridMismatch) {
  write("truth.csv", truth_rows({15, 15, 15}));
  write("est.csv", truth_rows({15, 15}));
  EXPECT_EQ(run("evaluate --estimates est.csv --truth truth.csv").code, 4);
}

TEST_F(Cli, DistanceSweepRowCount) {
  const auto r = run("sweep --axis distance_m --values 1,2,4 --trials 10 --duration 61 --jobs 8 --out sw");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto trials = table("sw/trials.csv");
  EXPECT_EQ(trials.row_count(), 120u);
  const auto agg = table("sw/aggregate.csv");
  EXPECT_EQ(agg.row_count(), 12u);
  for (std::size_t i = 0; i < agg.row_count(); ++i) {
    EXPECT_EQ(agg.cell(i, "samples"), "10");
    EXPECT_EQ(agg.cell(i, "failed"), "0");
  }
  EXPECT_TRUE(fs::exists(path("sw/accuracy.svg")));
  EXPECT_TRUE(fs::exists(path("sw/rmse.svg")));
}

TEST_F(Cli, SingleValueSingleTrial) {
  const auto r = run("sweep --values 2 --trials 1 --mode phased_mimo --duration 61 --out sw");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(table("sw/trials.csv").row_count(), 2u);
}

TEST_F(Cli, AngleSeparationGrid) {
  const auto r = run("sweep --axis angle_separation_deg --values 40,45,60 --trials 1 --duration 61 --jobs 6 --out sw");
  ASSERT_EQ(r.code, 0) << r.err;
  // 3 separations x 2 modes x 2 subjects x 2 vitals.
  EXPECT_EQ(table("sw/trials.csv").row_count(), 24u);
  const auto agg = table("sw/aggregate.csv");
  EXPECT_EQ(agg.row_count(), 12u);
  EXPECT_EQ(agg.cell(0, "axis"), "angle_separation_deg");
}

TEST_F(Cli, SweepRejectsEmptySpec) {
  EXPECT_EQ(run("sweep --values 1 --trials 0 --out sw").code, 2);
  EXPECT_EQ(run("sweep --axis height --values 1 --out sw").code, 2);
}

TEST_F(Cli, PlotRegenerationIsBitIdentical) {
  ASSERT_EQ(run("sweep --axis snr_db --values 0,10 --trials 2 --duration 61 --jobs 4 --out sw").code, 0);
  ASSERT_EQ(run("plot --aggregate sw/aggregate.csv --out plots").code, 0);
  for (const char* f : {"accuracy.svg", "rmse.svg"})
    EXPECT_EQ(read_text_file(path("sw") / f), read_text_file(path("plots") / f)) << f;
  const auto m = nlohmann::json::parse(read_text_file(path("sw/manifest.json")));
  EXPECT_EQ(m["files"]["accuracy.svg"], sha256_file(path("plots/accuracy.svg").string()));
}

TEST_F(Cli, PatternExport) {
  const auto r = run("pattern --steer 30 --step 0.5 --out pat");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = table("pat/pattern.csv");
  ASSERT_EQ(t.row_count(), 361u);
  std::size_t best = 0;
  for (std::size_t i = 0; i < t.row_count(); ++i)
    if (t.number(i, "combined_db") > t.number(best, "combined_db")) best = i;
  EXPECT_NEAR(t.number(best, "theta_deg"), 30.0, 0.5);
  EXPECT_NEAR(t.number(best, "combined_db"), 0.0, 1e-3);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("simulate --duration abc").code, 2);
  EXPECT_EQ(run("process --cube x.rdc --mode sideways --angles 30").code, 2);
}

TEST(Plot, SvgIsDeterministicAndEscaped) {
  app::PlotSpec spec{"a < b", "x", "y", {{"s&t", {{0, 1}, {1, 2}, {2, std::nan("")}}}}};
  const auto a = app::render_svg(spec), b = app::render_svg(spec);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("a &lt; b"), std::string::npos);
  EXPECT_NE(a.find("s&amp;t"), std::string::npos);
  EXPECT_EQ(a.rfind("<svg", 0), 0u);
}
