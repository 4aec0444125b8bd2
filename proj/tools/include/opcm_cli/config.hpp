#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "opcm/optimizer.hpp"
#include "opcm/priors.hpp"

namespace opcm::cli {

/// Everything `estimate` needs, resolved from preset, config file and flags.
struct RunConfig {
  std::string preset = "mvsec";
  OpcmConfig opcm = opcm::preset("mvsec");
  PriorConvention convention{};
  FillMode fill = FillMode::border_replicate;
  bool distort = true;

  std::filesystem::path events;
  std::filesystem::path calib;
  std::optional<std::filesystem::path> velocity;
  std::filesystem::path out_dir = "out";

  std::optional<double> t0;
  std::optional<double> duration;
  std::optional<std::size_t> count;
  int windows = 1;
  int jobs = 1;
};

/// Keys accepted in a config file and their meaning, for --help output.
const std::vector<std::pair<std::string, std::string>>& config_keys();

/// Reads a JSON object of flat dotted keys.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Layering: the preset named by `flags` or else `file` (default mvsec)
/// supplies every optimizer field; `file` keys override it and `flags`
/// keys override both. Throws ValidationError on unknown keys or bad
/// values.
RunConfig resolve_run_config(const nlohmann::json& file, const nlohmann::json& flags);

/// The resolved configuration as flat dotted keys.
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace opcm::cli
