#pragma once

#include <string_view>

#include <json.hpp>

namespace opcm::cli {

/// One JSON object per line on stderr: {"level", "msg", ...fields}.
void log(std::string_view level, std::string_view msg, const nlohmann::json& fields = {});

/// Silences info-level lines (errors are always written).
void set_quiet(bool quiet);

}  // namespace opcm::cli
