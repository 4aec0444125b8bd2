#pragma once

#include <filesystem>
#include <vector>

#include "opcm/types.hpp"
#include "opcm_cli/config.hpp"

namespace opcm::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

struct WindowOutput {
  Window window;
  std::size_t n_events = 0;
  std::filesystem::path flow;
  std::filesystem::path summary;
};

/// The `estimate` pipeline: window selection, priors, pyramid optimization,
/// and flow_NNN.flo / summary_NNN.json per window.
std::vector<WindowOutput> run_estimate(const RunConfig& cfg);

/// Full command line. Returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace opcm::cli
