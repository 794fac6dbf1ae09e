#pragma once

#include <filesystem>
#include <iosfwd>

#include "herln/config.hpp"
#include "herln/graph_store.hpp"

namespace herln {

/// Entry point of the `herln` executable. Returns the process exit code:
/// 0 success, 1 runtime failure (dataset, checkpoint, numeric), 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Creates `<out>/run-<YYYYmmdd-HHMMSS>[-n]` and returns it.
std::filesystem::path make_run_dir(const std::filesystem::path& out);

/// Loads the configured dataset and applies `dataset.fraction`.
DatasetBundle load_configured_dataset(const RunConfig& cfg);

void print_stats(std::ostream& out, const DatasetBundle& bundle);

}  // namespace herln
