#include "opcm_cli/config.hpp"

#include <fstream>
#include <sstream>

#include "opcm/error.hpp"

namespace opcm::cli {

namespace {

using nlohmann::json;

double number(const std::string& key, const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v.get<std::string>(), &used);
      if (used == v.get<std::string>().size()) return d;
    } catch (const std::exception&) {
    }
  }
  throw ValidationError("config key '" + key + "' expects a number");
}

bool boolean(const std::string& key, const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
  }
  throw ValidationError("config key '" + key + "' expects true or false");
}

std::string text(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  throw ValidationError("config key '" + key + "' expects a string");
}

int integer(const std::string& key, const json& v) {
  const double d = number(key, v);
  if (d != static_cast<double>(static_cast<long long>(d))) {
    throw ValidationError("config key '" + key + "' expects an integer");
  }
  return static_cast<int>(d);
}

std::vector<double> number_list(const std::string& key, const json& v) {
  std::vector<double> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(number(key, e));
    return out;
  }
  std::stringstream ss(text(key, v));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(number(key, item));
  return out;
}

void apply(RunConfig& cfg, const std::string& key, const json& v) {
  OpcmConfig& o = cfg.opcm;
  if (key == "preset") return;  // resolved first
  if (key == "opcm.alpha") o.alpha = number(key, v);
  else if (key == "opcm.beta_lin") o.beta_lin = number(key, v);
  else if (key == "opcm.beta_ang") o.beta_ang = number(key, v);
  else if (key == "opcm.lambda") o.lambda = number(key, v);
  else if (key == "opcm.pyramid") {
    if (v.is_array()) {
      std::string joined;
      for (const auto& e : v) joined += (joined.empty() ? "" : ",") + text(key, e);
      o.pyramid = parse_pyramid(joined);
    } else {
      o.pyramid = parse_pyramid(text(key, v));
    }
  } else if (key == "opcm.sigma") o.contrast.sigma = number(key, v);
  else if (key == "opcm.t_refs") o.contrast.t_refs = number_list(key, v);
  else if (key == "opcm.max_iters") o.max_iters = integer(key, v);
  else if (key == "opcm.grad_tol") o.grad_tol = number(key, v);
  else if (key == "opcm.fd_step") o.fd_step = number(key, v);
  else if (key == "opcm.gradient") {
    const auto s = text(key, v);
    if (s == "analytic") o.gradient = GradientMode::analytic;
    else if (s == "central_difference") o.gradient = GradientMode::central_difference;
    else throw ValidationError("opcm.gradient must be analytic or central_difference");
  } else if (key == "priors.fill") cfg.fill = parse_fill_mode(text(key, v));
  else if (key == "priors.flip_linear_sign") cfg.convention.flip_linear_sign = boolean(key, v);
  else if (key == "priors.flip_angular_sign") cfg.convention.flip_angular_sign = boolean(key, v);
  else if (key == "priors.distort") cfg.distort = boolean(key, v);
  else if (key == "input.events") cfg.events = text(key, v);
  else if (key == "input.calib") cfg.calib = text(key, v);
  else if (key == "input.vel") cfg.velocity = text(key, v);
  else if (key == "output.dir") cfg.out_dir = text(key, v);
  else if (key == "window.t0") cfg.t0 = number(key, v);
  else if (key == "window.dur") cfg.duration = number(key, v);
  else if (key == "window.count") {
    const int n = integer(key, v);
    if (n < 1) throw ValidationError("window.count must be >= 1");
    cfg.count = static_cast<std::size_t>(n);
  } else if (key == "window.num") cfg.windows = integer(key, v);
  else if (key == "jobs") cfg.jobs = integer(key, v);
  else throw ValidationError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"preset", "ecd | mvsec | mvsec-outdoor | dsec"},
      {"opcm.alpha", "contrast weight"},
      {"opcm.beta_lin", "linear prior weight"},
      {"opcm.beta_ang", "angular prior weight"},
      {"opcm.lambda", "total-variation weight"},
      {"opcm.pyramid", "grid shapes, e.g. \"1x1,2x2,4x4,8x8\""},
      {"opcm.sigma", "IWE kernel sigma in pixels"},
      {"opcm.t_refs", "reference times as window fractions"},
      {"opcm.max_iters", "BFGS iterations per level"},
      {"opcm.grad_tol", "gradient infinity-norm tolerance"},
      {"opcm.gradient", "analytic | central_difference"},
      {"opcm.fd_step", "central-difference step in px/s"},
      {"priors.fill", "none | navier_stokes | border_reflect | border_replicate"},
      {"priors.flip_linear_sign", "negate the v_Z = 0 linear branch"},
      {"priors.flip_angular_sign", "negate the w_Z = 0 angular branch"},
      {"priors.distort", "apply lens distortion to the maps"},
      {"input.events", "event CSV or EVT1 file"},
      {"input.calib", "calibration JSON"},
      {"input.vel", "velocity CSV (optional)"},
      {"output.dir", "output directory"},
      {"window.t0", "first window start in seconds"},
      {"window.dur", "window length in seconds"},
      {"window.count", "window length in events"},
      {"window.num", "number of consecutive windows"},
      {"jobs", "windows processed concurrently"},
  };
  return keys;
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object of dotted keys");
  return j;
}

RunConfig resolve_run_config(const json& file, const json& flags) {
  RunConfig cfg;
  if (flags.contains("preset")) cfg.preset = text("preset", flags.at("preset"));
  else if (file.contains("preset")) cfg.preset = text("preset", file.at("preset"));
  cfg.opcm = preset(cfg.preset);
  for (const json* layer : {&file, &flags}) {
    if (layer->is_null()) continue;
    for (const auto& [key, value] : layer->items()) apply(cfg, key, value);
  }
  cfg.opcm.validate();
  if (cfg.duration && cfg.count) {
    throw ValidationError("window.dur and window.count are mutually exclusive");
  }
  if (cfg.duration && !(*cfg.duration > 0.0)) throw ValidationError("window.dur must be positive");
  if (cfg.windows < 1) throw ValidationError("window.num must be >= 1");
  if (cfg.jobs < 1) throw ValidationError("jobs must be >= 1");
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const OpcmConfig& o = cfg.opcm;
  json j = {{"preset", cfg.preset},
            {"opcm.alpha", o.alpha},
            {"opcm.beta_lin", o.beta_lin},
            {"opcm.beta_ang", o.beta_ang},
            {"opcm.lambda", o.lambda},
            {"opcm.pyramid", format_pyramid(o.pyramid)},
            {"opcm.sigma", o.contrast.sigma},
            {"opcm.t_refs", o.contrast.t_refs},
            {"opcm.max_iters", o.max_iters},
            {"opcm.grad_tol", o.grad_tol},
            {"opcm.gradient", o.gradient == GradientMode::analytic ? "analytic" : "central_difference"},
            {"opcm.fd_step", o.fd_step},
            {"priors.fill", std::string(to_string(cfg.fill))},
            {"priors.flip_linear_sign", cfg.convention.flip_linear_sign},
            {"priors.flip_angular_sign", cfg.convention.flip_angular_sign},
            {"priors.distort", cfg.distort},
            {"input.events", cfg.events.string()},
            {"input.calib", cfg.calib.string()},
            {"output.dir", cfg.out_dir.string()},
            {"window.num", cfg.windows},
            {"jobs", cfg.jobs}};
  j["input.vel"] = cfg.velocity ? json(cfg.velocity->string()) : json(nullptr);
  j["window.t0"] = cfg.t0 ? json(*cfg.t0) : json(nullptr);
  j["window.dur"] = cfg.duration ? json(*cfg.duration) : json(nullptr);
  j["window.count"] = cfg.count ? json(*cfg.count) : json(nullptr);
  return j;
}

}  // namespace opcm::cli
