#include "opcm_cli/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace opcm::cli {

namespace {
std::atomic<bool> g_quiet{false};
std::mutex g_mutex;
}  // namespace

void set_quiet(bool quiet) { g_quiet = quiet; }

void log(std::string_view level, std::string_view msg, const nlohmann::json& fields) {
  if (g_quiet && level == "info") return;
  nlohmann::json line = {{"level", level}, {"msg", msg}};
  if (fields.is_object()) {
    for (const auto& [k, v] : fields.items()) line[k] = v;
  }
  const std::lock_guard lock(g_mutex);
  std::cerr << line.dump() << '\n';
}

}  // namespace opcm::cli
