#include "opcm_cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "opcm/error.hpp"
#include "opcm/io.hpp"
#include "opcm/metrics.hpp"
#include "opcm/optimizer.hpp"
#include "opcm/priors.hpp"
#include "opcm/render.hpp"
#include "opcm/synth.hpp"
#include "opcm/velocity.hpp"
#include "opcm_cli/log.hpp"

namespace opcm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Vec3 parse_vec3(const std::string& text, const char* what) {
  std::stringstream ss(text);
  std::string item;
  std::vector<double> vals;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError(std::string(what) + ": bad number '" + item + "'");
    }
  }
  if (vals.size() != 3) throw ValidationError(std::string(what) + " expects three values x,y,z");
  return {vals[0], vals[1], vals[2]};
}

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, i, ext);
  return buf;
}

json terms_json(const TermValues& t) {
  return {{"f_rel", t.f_rel},
          {"g_lin", t.g_lin ? json(*t.g_lin) : json(nullptr)},
          {"g_ang", t.g_ang ? json(*t.g_ang) : json(nullptr)},
          {"tv", t.tv},
          {"total", t.total}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text << '\n';
}

struct WindowJob {
  EventSet events;
  Window window;
};

std::vector<WindowJob> select_windows(const EventSet& all, const RunConfig& cfg) {
  std::vector<WindowJob> jobs;
  double start = cfg.t0.value_or(all.t_start());
  const auto events = all.events();
  for (int w = 0; w < cfg.windows; ++w) {
    if (cfg.duration) {
      const Window win{start, start + *cfg.duration};
      EventSet slice = all.slice_time(win.t0, win.t1);
      if (slice.empty()) {
        throw ValidationError("window [" + std::to_string(win.t0) + ", " + std::to_string(win.t1) +
                              "] contains no events");
      }
      jobs.push_back({std::move(slice), win});
      start = win.t1;
    } else {
      const std::size_t count = cfg.count.value_or(cfg.opcm.events_per_window);
      EventSet slice = all.slice_count(start, count);
      if (slice.empty()) {
        throw ValidationError("no events at or after t=" + std::to_string(start));
      }
      const Window win{start, slice.t_end()};
      if (!(win.t1 > win.t0)) throw ValidationError("selected window has zero duration");
      const auto next = std::upper_bound(events.begin(), events.end(), win.t1,
                                         [](double t, const Event& e) { return t < e.t; });
      jobs.push_back({std::move(slice), win});
      if (next == events.end()) {
        if (w + 1 < cfg.windows) throw ValidationError("ran out of events after window " + std::to_string(w));
        break;
      }
      start = next->t;
    }
  }
  return jobs;
}

WindowOutput estimate_one(const WindowJob& job, std::size_t index, const CameraModel& cam,
                          const std::vector<VelocitySample>* trace, const RunConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  Priors priors;
  json velocity_json = nullptr;
  if (trace != nullptr) {
    const VelocitySample vs = interpolate_velocity(*trace, job.window.at(0.5));
    priors = make_priors(cam, vs, cfg.convention, cfg.fill, cfg.distort);
    velocity_json = {{"t", vs.t},
                     {"v", {vs.v.x(), vs.v.y(), vs.v.z()}},
                     {"w", {vs.w.x(), vs.w.y(), vs.w.z()}}};
  }
  const OpcmResult result = optimize_pyramid(job.events, job.window, priors, cfg.opcm);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  WindowOutput out{job.window, job.events.size(), cfg.out_dir / numbered("flow", index, ".flo"),
                   cfg.out_dir / numbered("summary", index, ".json")};
  write_flow(out.flow, result.flow);

  json levels = json::array();
  for (const LevelResult& l : result.levels) {
    levels.push_back({{"grid", format_pyramid({l.shape})},
                      {"iterations", l.iterations},
                      {"evaluations", l.evaluations},
                      {"stop", std::string(to_string(l.stop))},
                      {"degenerate_contrast", l.degenerate_contrast},
                      {"objective_trace", l.trace}});
  }
  json tiles = json::array();
  for (const Vec2& t : result.field.tiles()) tiles.push_back({t.x(), t.y()});
  const json summary = {
      {"window", {{"index", index}, {"t0", job.window.t0}, {"t1", job.window.t1},
                  {"n_events", job.events.size()}}},
      {"priors", priors.empty() ? "absent" : "present"},
      {"velocity", velocity_json},
      {"terms", terms_json(result.terms)},
      {"levels", levels},
      {"field", {{"grid", format_pyramid({result.field.shape()})}, {"tiles_px_per_s", tiles}}},
      {"flow_file", out.flow.filename().string()},
      {"timings", {{"total_s", seconds}}},
      {"config", to_json(cfg)}};
  write_text(out.summary, summary.dump(2));
  log("info", "window done",
      {{"index", index}, {"t0", job.window.t0}, {"t1", job.window.t1},
       {"n_events", job.events.size()}, {"f_rel", result.terms.f_rel},
       {"total", result.terms.total}, {"seconds", seconds}});
  return out;
}

}  // namespace

std::vector<WindowOutput> run_estimate(const RunConfig& cfg) {
  if (cfg.events.empty()) throw ValidationError("--events is required");
  if (cfg.calib.empty()) throw ValidationError("--calib is required");
  const CameraModel cam = read_calibration(cfg.calib);
  const EventSet all = read_events(cfg.events, cam.sensor());
  std::optional<std::vector<VelocitySample>> trace;
  if (cfg.velocity) {
    trace = read_velocity_csv(*cfg.velocity);
  } else {
    log("info", "no velocity trace; priors absent, running events-only contrast maximization");
  }
  const std::vector<WindowJob> jobs = select_windows(all, cfg);
  fs::create_directories(cfg.out_dir);

  std::vector<WindowOutput> outputs(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        outputs[i] = estimate_one(jobs[i], i, cam, trace ? &*trace : nullptr, cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), jobs.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return outputs;
}

namespace {

// Options whose explicit use on the command line becomes a config key.
struct FlagBinding {
  std::string key;
  CLI::Option* option;
  std::string value;
  bool is_flag = false;
  bool flag_value = true;
};

class FlagTable {
 public:
  void text(CLI::App* app, const std::string& name, const std::string& key,
            const std::string& help) {
    auto& b = *bindings_.emplace_back(std::make_unique<FlagBinding>());
    b.key = key;
    b.option = app->add_option(name, b.value, help);
  }
  void flag(CLI::App* app, const std::string& name, const std::string& key, bool value,
            const std::string& help) {
    auto& b = *bindings_.emplace_back(std::make_unique<FlagBinding>());
    b.key = key;
    b.is_flag = true;
    b.flag_value = value;
    b.option = app->add_flag(name, help);
  }
  json explicit_keys() const {
    json j = json::object();
    for (const auto& b : bindings_) {
      if (b->option->count() == 0) continue;
      if (b->is_flag) j[b->key] = b->flag_value;
      else j[b->key] = b->value;
    }
    return j;
  }

 private:
  std::vector<std::unique_ptr<FlagBinding>> bindings_;
};

int exit_for(const std::exception& e, int code) {
  log("error", e.what(), {{"exit_code", code}});
  return code;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Event-based optical flow by contrast maximization with orientation priors"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress info log lines");

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate optical flow for one or more windows");
  std::string config_path;
  est->add_option("--config", config_path, "JSON file of flat dotted keys");
  FlagTable flags;
  flags.text(est, "--preset", "preset", "ecd | mvsec | mvsec-outdoor | dsec");
  flags.text(est, "--events", "input.events", "Event CSV or EVT1 file");
  flags.text(est, "--calib", "input.calib", "Calibration JSON");
  flags.text(est, "--vel", "input.vel", "Velocity CSV t,vx,vy,vz,wx,wy,wz");
  flags.text(est, "--out", "output.dir", "Output directory");
  flags.text(est, "--t0", "window.t0", "First window start (s)");
  flags.text(est, "--dur", "window.dur", "Window length (s)");
  flags.text(est, "--count", "window.count", "Window length in events");
  flags.text(est, "--windows", "window.num", "Number of consecutive windows");
  flags.text(est, "--jobs", "jobs", "Windows processed concurrently");
  flags.text(est, "--alpha", "opcm.alpha", "Contrast weight");
  flags.text(est, "--beta-lin", "opcm.beta_lin", "Linear prior weight");
  flags.text(est, "--beta-ang", "opcm.beta_ang", "Angular prior weight");
  flags.text(est, "--lambda", "opcm.lambda", "Total-variation weight");
  flags.text(est, "--pyramid", "opcm.pyramid", "Grid shapes, e.g. 1x1,2x2,4x4,8x8");
  flags.text(est, "--sigma", "opcm.sigma", "IWE kernel sigma (px)");
  flags.text(est, "--t-refs", "opcm.t_refs", "Reference times as window fractions");
  flags.text(est, "--max-iters", "opcm.max_iters", "BFGS iterations per level");
  flags.text(est, "--grad-tol", "opcm.grad_tol", "Gradient tolerance");
  flags.text(est, "--gradient", "opcm.gradient", "analytic | central_difference");
  flags.text(est, "--fill", "priors.fill", "none | navier_stokes | border_reflect | border_replicate");
  flags.flag(est, "--flip-linear-sign", "priors.flip_linear_sign", true, "Negate the v_Z = 0 branch");
  flags.flag(est, "--flip-angular-sign", "priors.flip_angular_sign", true, "Negate the w_Z = 0 branch");
  flags.flag(est, "--no-distort", "priors.distort", false, "Skip lens distortion of the maps");

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a synthetic event/flow/velocity triplet");
  std::string kind = "textured_plane", syn_out = "synth", syn_vel, syn_ang, syn_calib, low_side = "right";
  std::uint64_t seed = 1;
  double speed = 20.0, depth = 1.0, syn_t0 = 0.0, syn_dur = 0.1, tex_density = 6.0,
         low_ratio = 0.1, jitter = 0.0;
  int density = 1;
  syn->add_option("--kind", kind, "fronto_planar | textured_plane | edge_bar");
  syn->add_option("--seed", seed, "Texture seed");
  syn->add_option("--out", syn_out, "Output directory");
  syn->add_option("--vel", syn_vel, "Camera linear velocity vx,vy,vz (m/s)");
  syn->add_option("--ang", syn_ang, "Camera angular velocity wx,wy,wz (rad/s)");
  syn->add_option("--speed", speed, "edge_bar speed (px/s)");
  syn->add_option("--depth", depth, "Plane depth (m)");
  syn->add_option("--t0", syn_t0, "Window start (s)");
  syn->add_option("--dur", syn_dur, "Window length (s)");
  syn->add_option("--density", density, "Events per edge crossing");
  syn->add_option("--texture-density", tex_density, "Discs per 1000 px^2");
  syn->add_option("--low-side", low_side, "fronto_planar low-texture half: left | right | none");
  syn->add_option("--low-ratio", low_ratio, "Disc density ratio of the low-texture half");
  syn->add_option("--jitter", jitter, "Mean exponential timing jitter (s)");
  syn->add_option("--calib", syn_calib, "Calibration JSON (default 128x96, f=100)");

  // eval
  auto* ev = app.add_subcommand("eval", "Compare a predicted flow file against ground truth");
  std::string pred_path, gt_path, mask_name = "events", ev_events, ev_out;
  double n_px = 3.0;
  std::optional<double> ev_t0, ev_dur;
  ev->add_option("--pred", pred_path, "Predicted flow file")->required();
  ev->add_option("--gt", gt_path, "Ground-truth flow file")->required();
  ev->add_option("--mask", mask_name, "events | valid");
  ev->add_option("--events", ev_events, "Event file (event mask and FWL)");
  ev->add_option("--n", n_px, "Outlier threshold (px)");
  ev->add_option("--t0", ev_t0, "FWL window start (s)");
  ev->add_option("--dur", ev_dur, "FWL window length (s)");
  ev->add_option("--out", ev_out, "Write the report here instead of stdout");

  // omap
  auto* om = app.add_subcommand("omap", "Render orientation maps to PNG");
  std::string om_calib, om_vel, om_ang, om_out = "omap", om_fill = "border_replicate";
  bool om_distort = false, om_flip_lin = false, om_flip_ang = false;
  om->add_option("--calib", om_calib, "Calibration JSON")->required();
  om->add_option("--vel", om_vel, "Linear velocity vx,vy,vz");
  om->add_option("--ang", om_ang, "Angular velocity wx,wy,wz");
  om->add_option("--out", om_out, "Output directory");
  om->add_flag("--distort", om_distort, "Also render distorted and filled maps");
  om->add_option("--fill", om_fill, "Fill mode for the filled variant");
  om->add_flag("--flip-linear-sign", om_flip_lin, "Negate the v_Z = 0 branch");
  om->add_flag("--flip-angular-sign", om_flip_ang, "Negate the w_Z = 0 branch");

  // velocity
  auto* vel = app.add_subcommand("velocity", "Camera velocities from consecutive point clouds");
  std::string clouds_dir, stamps_path, extrinsic_path, vel_out = "velocity.csv";
  std::optional<double> rate;
  bool no_filter = false;
  KalmanConfig kcfg;
  IcpOptions icp;
  vel->add_option("--clouds", clouds_dir, "Directory of .ply or .csv point clouds")->required();
  vel->add_option("--timestamps", stamps_path, "One timestamp per cloud, in file-name order");
  vel->add_option("--rate", rate, "Scan rate (Hz) when no timestamps are given");
  vel->add_option("--extrinsic", extrinsic_path, "JSON {\"R\": [9 row-major], \"t\": [3]}");
  vel->add_option("--out", vel_out, "Output CSV");
  vel->add_flag("--no-filter", no_filter, "Skip Kalman filtering");
  vel->add_option("--q", kcfg.q, "Process noise (per second)");
  vel->add_option("--r", kcfg.r, "Measurement noise");
  vel->add_option("--icp-iters", icp.max_iters, "ICP iteration cap");
  vel->add_option("--icp-tol", icp.tol, "ICP convergence tolerance (m)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  set_quiet(quiet);

  try {
    if (est->parsed()) {
      const json file = config_path.empty() ? json::object() : read_config_file(config_path);
      const RunConfig cfg = resolve_run_config(file, flags.explicit_keys());
      const auto outputs = run_estimate(cfg);
      for (const auto& o : outputs) std::cout << o.flow.string() << '\n';
      return kOk;
    }
    if (syn->parsed()) {
      SceneSpec spec;
      spec.kind = parse_scene_kind(kind);
      if (spec.kind == SceneKind::edge_bar) spec = edge_bar_scene(speed, syn_dur);
      spec.texture_seed = seed;
      spec.depth = depth;
      spec.window = {syn_t0, syn_t0 + syn_dur};
      spec.contrast_density = density;
      spec.texture_density = tex_density;
      spec.low_texture_ratio = low_ratio;
      spec.timing_jitter = jitter;
      if (low_side == "left") spec.low_texture_side = TextureSide::left;
      else if (low_side == "right") spec.low_texture_side = TextureSide::right;
      else if (low_side == "none") spec.low_texture_side = TextureSide::none;
      else throw ValidationError("--low-side must be left, right or none");
      if (!syn_calib.empty()) spec.camera = read_calibration(syn_calib);
      if (spec.kind == SceneKind::edge_bar) {
        spec.motion.v = Vec3(-speed * spec.depth / spec.camera.fx(), 0.0, 0.0);
      } else if (spec.kind == SceneKind::fronto_planar) {
        spec.motion.v = Vec3(0.0, 0.0, 1.0);
      } else {
        spec.motion.v = Vec3(-0.2, 0.1, 0.0);
      }
      if (!syn_vel.empty()) spec.motion.v = parse_vec3(syn_vel, "--vel");
      if (!syn_ang.empty()) spec.motion.w = parse_vec3(syn_ang, "--ang");
      const SyntheticData data = generate_events(spec);
      const fs::path dir = syn_out;
      fs::create_directories(dir);
      write_events_csv(dir / "events.csv", data.events);
      write_flow(dir / "flow.flo", data.flow);
      write_velocity_csv(dir / "velocity.csv",
                         {{spec.window.t0, data.velocity.v, data.velocity.w},
                          {spec.window.t1, data.velocity.v, data.velocity.w}});
      write_calibration(dir / "calib.json", spec.camera);
      log("info", "synth done",
          {{"kind", kind}, {"seed", seed}, {"n_events", data.events.size()}, {"out", dir.string()}});
      return kOk;
    }
    if (ev->parsed()) {
      const FlowField pred = read_flow(pred_path);
      const FlowField gt = read_flow(gt_path);
      const MaskPolicy policy = parse_mask_policy(mask_name);
      std::optional<EventSet> events;
      if (!ev_events.empty()) events = read_events(ev_events, gt.sensor());
      if (policy == MaskPolicy::event_presence && !events) {
        throw ValidationError("--mask events needs --events");
      }
      std::optional<Window> window;
      if (events) {
        const double t0 = ev_t0.value_or(events->t_start());
        const double dur = ev_dur.value_or(events->t_end() - t0);
        window = Window{t0, t0 + dur};
      }
      const EvalReport report =
          evaluate(pred, gt, policy, events ? &*events : nullptr, n_px, window);
      if (ev_out.empty()) std::cout << report.to_json() << '\n';
      else write_text(ev_out, report.to_json());
      return kOk;
    }
    if (om->parsed()) {
      const CameraModel cam = read_calibration(om_calib);
      if (om_vel.empty() && om_ang.empty()) throw ValidationError("omap needs --vel and/or --ang");
      const PriorConvention conv{om_flip_lin, om_flip_ang};
      const FillMode fill = parse_fill_mode(om_fill);
      const fs::path dir = om_out;
      fs::create_directories(dir);
      const auto render = [&](const OrientationMap& map, const std::string& stem) {
        write_orientation_png(dir / (stem + ".png"), map);
        if (om_distort) {
          write_orientation_png(dir / (stem + "_distorted.png"),
                                distort_orientation_map(map, cam, FillMode::none));
          write_orientation_png(dir / (stem + "_filled.png"), distort_orientation_map(map, cam, fill));
        }
      };
      if (!om_vel.empty()) render(linear_orientation_map(cam, parse_vec3(om_vel, "--vel"), conv), "linear");
      if (!om_ang.empty()) render(angular_orientation_map(cam, parse_vec3(om_ang, "--ang"), conv), "angular");
      log("info", "omap done", {{"out", dir.string()}});
      return kOk;
    }
    if (vel->parsed()) {
      std::vector<fs::path> files;
      if (!fs::is_directory(clouds_dir)) throw ValidationError("not a directory: " + clouds_dir);
      for (const auto& entry : fs::directory_iterator(clouds_dir)) {
        const auto ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".ply" || ext == ".csv")) files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.size() < 2) throw ValidationError("need at least two point clouds in " + clouds_dir);
      std::vector<double> stamps;
      if (!stamps_path.empty()) {
        std::ifstream in(stamps_path);
        if (!in) throw ValidationError("cannot open " + stamps_path);
        double t;
        while (in >> t) stamps.push_back(t);
        if (stamps.size() != files.size()) {
          throw ValidationError("timestamp count does not match the number of clouds");
        }
      } else if (rate) {
        if (!(*rate > 0.0)) throw ValidationError("--rate must be positive");
        for (std::size_t i = 0; i < files.size(); ++i) stamps.push_back(static_cast<double>(i) / *rate);
      } else {
        throw ValidationError("velocity needs --timestamps or --rate");
      }
      std::vector<PointCloud> clouds;
      for (std::size_t i = 0; i < files.size(); ++i) {
        clouds.push_back(read_point_cloud(files[i]));
        clouds.back().t = stamps[i];
      }
      VelocityPipelineOptions options;
      options.icp = icp;
      options.kalman = kcfg;
      options.filter = !no_filter;
      if (!extrinsic_path.empty()) {
        const json j = read_config_file(extrinsic_path);
        if (!j.contains("R") || !j.contains("t") || j["R"].size() != 9 || j["t"].size() != 3) {
          throw ValidationError("extrinsic JSON needs R (9 values) and t (3 values)");
        }
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) options.extrinsic.R(r, c) = j["R"][r * 3 + c].get<double>();
          options.extrinsic.t[r] = j["t"][r].get<double>();
        }
        if (!options.extrinsic.is_valid(1e-6)) throw ValidationError("extrinsic R is not a rotation");
      }
      const auto samples = estimate_velocities(clouds, options);
      write_velocity_csv(vel_out, samples);
      log("info", "velocity done", {{"n_samples", samples.size()}, {"out", vel_out}});
      return kOk;
    }
  } catch (const ValidationError& e) {
    return exit_for(e, kValidation);
  } catch (const nlohmann::json::exception& e) {
    return exit_for(e, kValidation);
  } catch (const std::exception& e) {
    return exit_for(e, kRuntime);
  }
  return kValidation;
}

}  // namespace opcm::cli
