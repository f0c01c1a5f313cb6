#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mp {

/// Operator-facing error taxonomy. The CLI maps these to exit statuses:
/// usage/config -> 1, data -> 2, numerical -> 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

/// FNV-1a over a string, used to derive per-tensor RNG streams from names.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Writes `content` to `path` via a temp file + rename so a crash never
/// leaves a partially written artifact at the final path.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

/// Runs `fn(i)` for i in [0, n) across up to MP_THREADS workers (default:
/// hardware concurrency). Results must be written to i-indexed slots by the
/// caller; the iteration order across workers is unspecified.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Thread cap from the MP_THREADS environment variable (>=1).
unsigned thread_limit();

}  // namespace mp
