#include <cstdlib>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "opcm/error.hpp"
#include "opcm/io.hpp"
#include "opcm_cli/commands.hpp"
#include "opcm_cli/config.hpp"
#include "test_support.hpp"

using namespace opcm;
using nlohmann::json;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), {"opcm", "-q"});
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

json read_json(const std::filesystem::path& p) { return json::parse(test::read_bytes(p)); }

// A small textured scene plus a fast two-level estimate setup.
struct Workspace {
  test::TempDir dir;
  std::string synth;
  Workspace() : synth((dir / "synth").string()) {
    EXPECT_EQ(run_cli({"synth", "--kind", "textured_plane", "--seed", "3", "--out", synth}), 0);
  }
  std::vector<std::string> estimate(const std::string& out) const {
    return {"estimate", "--events", synth + "/events.csv", "--calib", synth + "/calib.json",
            "--out", out, "--pyramid", "1x1,2x2", "--max-iters", "20"};
  }
};

}  // namespace

TEST(Config, LayeringPresetFileFlags) {
  const json file = {{"preset", "dsec"}, {"opcm.alpha", 7}, {"opcm.lambda", 0.5}};
  const json flags = {{"opcm.alpha", "9"}};
  const cli::RunConfig cfg = cli::resolve_run_config(file, flags);
  EXPECT_EQ(cfg.preset, "dsec");
  EXPECT_EQ(cfg.opcm.alpha, 9.0);     // flag beats file
  EXPECT_EQ(cfg.opcm.lambda, 0.5);    // file beats preset
  EXPECT_EQ(cfg.opcm.beta_lin, 500.0);  // preset fills the rest
  const cli::RunConfig flagged = cli::resolve_run_config(file, {{"preset", "ecd"}});
  EXPECT_EQ(flagged.opcm.beta_lin, 1.0);
  EXPECT_EQ(flagged.opcm.alpha, 7.0);
  const cli::RunConfig plain = cli::resolve_run_config(json::object(), json::object());
  EXPECT_EQ(plain.preset, "mvsec");
  EXPECT_EQ(plain.opcm.alpha, 20.0);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(cli::resolve_run_config({{"opcm.alhpa", 1}}, {}), ValidationError);
  EXPECT_THROW(cli::resolve_run_config({}, {{"opcm.alpha", "abc"}}), ValidationError);
  EXPECT_THROW(cli::resolve_run_config({}, {{"window.dur", "0.1"}, {"window.count", "100"}}),
               ValidationError);
  EXPECT_THROW(cli::resolve_run_config({}, {{"window.num", "0"}}), ValidationError);
  EXPECT_THROW(cli::resolve_run_config({}, {{"preset", "kitti"}}), ValidationError);
  EXPECT_THROW(cli::resolve_run_config({}, {{"opcm.pyramid", "2x2,1x1"}}), ValidationError);
}

TEST(Config, JsonRoundTrip) {
  const cli::RunConfig cfg = cli::resolve_run_config(
      {{"preset", "mvsec-outdoor"}, {"opcm.pyramid", "1x1,3x2"}, {"priors.fill", "border_reflect"},
       {"priors.flip_linear_sign", true}, {"window.count", 500}, {"input.vel", "v.csv"}},
      {});
  json flat = cli::to_json(cfg);
  for (auto it = flat.begin(); it != flat.end();) {
    it = it->is_null() ? flat.erase(it) : std::next(it);
  }
  const cli::RunConfig again = cli::resolve_run_config(flat, {});
  EXPECT_EQ(cli::to_json(again), cli::to_json(cfg));
  for (const auto& [key, help] : cli::config_keys()) {
    EXPECT_TRUE(cli::to_json(cfg).contains(key)) << key;
  }
}

TEST(Config, ReadsFiles) {
  test::TempDir dir;
  test::write_text(dir / "c.json", R"({"opcm.beta_lin": 3, "window.num": 2})");
  const cli::RunConfig cfg = cli::resolve_run_config(cli::read_config_file(dir / "c.json"), {});
  EXPECT_EQ(cfg.opcm.beta_lin, 3.0);
  EXPECT_EQ(cfg.windows, 2);
  test::write_text(dir / "bad.json", "[1, 2]");
  EXPECT_THROW(cli::read_config_file(dir / "bad.json"), ValidationError);
  test::write_text(dir / "broken.json", "{");
  EXPECT_THROW(cli::read_config_file(dir / "broken.json"), ValidationError);
  EXPECT_THROW(cli::read_config_file(dir / "missing.json"), ValidationError);
}

TEST(Cli, SynthEstimateEval) {
  Workspace ws;
  const std::string out = (ws.dir / "est").string();
  auto args = ws.estimate(out);
  args.insert(args.end(), {"--vel", ws.synth + "/velocity.csv"});
  ASSERT_EQ(run_cli(args), 0);
  const json summary = read_json(ws.dir / "est/summary_000.json");
  EXPECT_EQ(summary["priors"], "present");
  EXPECT_EQ(summary["levels"].size(), 2u);
  EXPECT_EQ(summary["field"]["grid"], "2x2");
  EXPECT_EQ(summary["config"]["opcm.pyramid"], "1x1,2x2");
  EXPECT_GT(summary["terms"]["f_rel"].get<double>(), 1.0);

  const std::string report = (ws.dir / "report.json").string();
  ASSERT_EQ(run_cli({"eval", "--pred", out + "/flow_000.flo", "--gt", ws.synth + "/flow.flo",
                     "--events", ws.synth + "/events.csv", "--out", report}),
            0);
  const json r = read_json(report);
  EXPECT_GE(r["aee"].get<double>(), 0.0);
  EXPECT_FALSE(r["fwl"].is_null());
  EXPECT_EQ(r["mask"], "event_presence");
}

TEST(Cli, EstimateWithoutVelocityHasNoPriors) {
  Workspace ws;
  const std::string out = (ws.dir / "est").string();
  ASSERT_EQ(run_cli(ws.estimate(out)), 0);
  const json summary = read_json(ws.dir / "est/summary_000.json");
  EXPECT_EQ(summary["priors"], "absent");
  EXPECT_TRUE(summary["velocity"].is_null());
  EXPECT_TRUE(summary["terms"]["g_lin"].is_null());
}

TEST(Cli, CountWindowEndsAtTheNthEvent) {
  Workspace ws;
  const std::string out = (ws.dir / "est").string();
  auto args = ws.estimate(out);
  args.insert(args.end(), {"--count", "2000", "--windows", "2", "--jobs", "2"});
  ASSERT_EQ(run_cli(args), 0);
  const EventSet events = read_events(ws.synth + "/events.csv", {128, 96});
  const json first = read_json(ws.dir / "est/summary_000.json");
  EXPECT_EQ(first["window"]["n_events"], 2000);
  EXPECT_EQ(first["window"]["t1"].get<double>(), events.events()[1999].t);
  const json second = read_json(ws.dir / "est/summary_001.json");
  EXPECT_GT(second["window"]["t0"].get<double>(), first["window"]["t1"].get<double>());
}

TEST(Cli, OutputsAreDeterministic) {
  Workspace ws;
  const std::string again = (ws.dir / "synth2").string();
  ASSERT_EQ(run_cli({"synth", "--kind", "textured_plane", "--seed", "3", "--out", again}), 0);
  for (const char* f : {"events.csv", "flow.flo", "velocity.csv", "calib.json"}) {
    EXPECT_EQ(test::read_bytes(ws.dir / "synth" / f), test::read_bytes(ws.dir / "synth2" / f)) << f;
  }
  ASSERT_EQ(run_cli(ws.estimate((ws.dir / "a").string())), 0);
  ASSERT_EQ(run_cli(ws.estimate((ws.dir / "b").string())), 0);
  EXPECT_EQ(test::read_bytes(ws.dir / "a/flow_000.flo"), test::read_bytes(ws.dir / "b/flow_000.flo"));
}

TEST(Cli, EvalOfIdenticalFilesIsPerfect) {
  Workspace ws;
  const std::string report = (ws.dir / "r.json").string();
  ASSERT_EQ(run_cli({"eval", "--pred", ws.synth + "/flow.flo", "--gt", ws.synth + "/flow.flo",
                     "--mask", "valid", "--out", report}),
            0);
  const json r = read_json(report);
  EXPECT_EQ(r["aee"], 0.0);
  EXPECT_EQ(r["outlier_pct"], 0.0);
  EXPECT_EQ(r["n_valid"], 128 * 96);
  EXPECT_TRUE(r["fwl"].is_null());
}

TEST(Cli, OmapHueIsPointSymmetricAboutThePrincipalPoint) {
  Workspace ws;
  const std::string out = (ws.dir / "omap").string();
  ASSERT_EQ(run_cli({"omap", "--calib", ws.synth + "/calib.json", "--vel", "0,0,1", "--ang",
                     "0,0,1", "--out", out, "--distort"}),
            0);
  for (const char* name : {"linear.png", "angular.png"}) {
    const cv::Mat img = cv::imread((ws.dir / "omap" / name).string(), cv::IMREAD_COLOR);
    ASSERT_EQ(img.cols, 128);
    ASSERT_EQ(img.rows, 96);
    // Principal point (63.5, 47.5): pixel p mirrors to (127, 95) - p, where
    // the direction flips and the hue turns by half a circle.
    for (int y = 0; y < 96; y += 5) {
      for (int x = 0; x < 128; x += 5) {
        const cv::Vec3b a = img.at<cv::Vec3b>(y, x);
        const cv::Vec3b b = img.at<cv::Vec3b>(95 - y, 127 - x);
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(int(a[c]) + int(b[c]), 255, 2) << name;
      }
    }
  }
  EXPECT_TRUE(std::filesystem::exists(ws.dir / "omap/linear_filled.png"));
  EXPECT_TRUE(std::filesystem::exists(ws.dir / "omap/angular_distorted.png"));
}

TEST(Cli, ExitCodes) {
  test::TempDir dir;
  EXPECT_EQ(run_cli({"estimate", "--events", (dir / "none.csv").string(), "--calib",
                     (dir / "none.json").string()}),
            1);
  EXPECT_EQ(run_cli({"estimate", "--alpha", "abc"}), 1);
  EXPECT_EQ(run_cli({"bogus"}), 1);
  EXPECT_EQ(run_cli({"eval", "--pred", "x.flo"}), 1);
  // Collinear clouds give a rank-deficient registration: a runtime failure.
  test::write_text(dir / "a.csv", "0,0,0\n1,0,0\n2,0,0\n3,0,0\n");
  test::write_text(dir / "b.csv", "0,0,0\n1,0,0\n2,0,0\n3,0,0\n");
  EXPECT_EQ(run_cli({"velocity", "--clouds", dir.path().string(), "--rate", "10", "--out",
                     (dir / "v.csv").string()}),
            2);
  EXPECT_EQ(run_cli({"velocity", "--clouds", dir.path().string()}), 1);
}

TEST(Cli, BinaryRunsEndToEnd) {
  test::TempDir dir;
  const std::string cmd = std::string(OPCM_BINARY) + " -q synth --kind edge_bar --out " +
                          (dir / "s").string() + " > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "s/events.csv"));
  const std::string bad = std::string(OPCM_BINARY) + " eval > /dev/null 2>&1";
  const int status = std::system(bad.c_str());
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 1);
}
