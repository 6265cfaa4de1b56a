#pragma once
// Shared small utilities: integer types, invariant checks, number formatting.

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace perclab {

using i32 = std::int32_t;
using i64 = std::int64_t;
using u64 = std::uint64_t;
using u32 = std::uint32_t;

// Library version string (major.minor.patch), kept in sync with the CMake
// project version.
const char* version() noexcept;

// Invariant check that stays on in release builds. These guard mathematical
// invariants of the algorithms (not user input); a failure is a bug.
#define PERCLAB_CHECK(cond, msg)                                      \
  do {                                                                \
    if (!(cond)) throw std::logic_error(std::string("invariant: ") + (msg)); \
  } while (0)

// Argument validation helper: throws std::invalid_argument naming the
// violated condition.
#define PERCLAB_REQUIRE(cond, msg)                                    \
  do {                                                                \
    if (!(cond)) throw std::invalid_argument(msg);                    \
  } while (0)

// Shortest round-trip decimal formatting (deterministic across platforms for
// IEEE doubles, unlike printf %g at fixed precision).
inline std::string fmt_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string fmt_int(i64 x) {
  char buf[24];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string fmt_uint(u64 x) {
  char buf[24];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace perclab
