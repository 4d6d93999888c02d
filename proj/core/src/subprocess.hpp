#ifndef GENCACHE_SRC_SUBPROCESS_HPP
#define GENCACHE_SRC_SUBPROCESS_HPP

#include <chrono>
#include <cstddef>
#include <string>
#include <vector>

namespace gencache::detail {

struct ProcessResult {
  enum class Status { kExited, kSignaled, kTimeout, kOverflow, kSpawnFailed };
  Status status = Status::kSpawnFailed;
  int exit_code = -1;
  std::string output;  // captured stdout
  std::string error;   // spawn failure detail
};

/// Runs argv[0] (PATH lookup) in its own process group with stdin/stderr on
/// /dev/null. The whole group is killed when the call returns, and the child
/// is always reaped. Blocks while the concurrent-process cap is reached.
ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout,
                          std::size_t max_output_bytes);

void set_process_cap(std::size_t n);

}  // namespace gencache::detail

#endif  // GENCACHE_SRC_SUBPROCESS_HPP
