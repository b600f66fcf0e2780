// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace gsopt {

// All numerical work runs in double precision; gradient checks against
// central finite differences need the extra mantissa bits.
using Scalar = double;

using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
using Vec6 = Eigen::Matrix<Scalar, 6, 1>;
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
using Mat4 = Eigen::Matrix<Scalar, 4, 4>;
using Mat23 = Eigen::Matrix<Scalar, 2, 3>;
using Mat36 = Eigen::Matrix<Scalar, 3, 6>;
using Mat66 = Eigen::Matrix<Scalar, 6, 6>;
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class ErrorCode {
  angle_near_pi,
  degenerate_cloud,
  no_valid_depth,
  dimension_mismatch,
  empty_mask,
  state_mismatch,
  missing_intrinsics,
  image_size_mismatch,
  corrupt_file,
  diverged,
  invalid_config,
};

struct Error : std::runtime_error {
  Error(ErrorCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
  ErrorCode code;
};

[[noreturn]] inline void raise(ErrorCode c, const std::string& msg) { throw Error(c, msg); }

// Deterministic random source. One instance per run; every stochastic step
// draws from it so a seed fully reproduces a run.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next() {
    // xorshift64* — small, fast, and stable across platforms.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  // Uniform in [0, 1).
  Scalar uniform() { return static_cast<Scalar>(next() >> 11) * 0x1.0p-53; }

  Scalar uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Standard normal via Box-Muller; no cached spare so the draw sequence is
  // a pure function of the call sequence.
  Scalar normal() {
    Scalar u1 = uniform();
    Scalar u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vec3 normal3() { return Vec3(normal(), normal(), normal()); }

  // Fisher random rotation as a unit quaternion (w, x, y, z).
  Vec4 unit_quaternion() {
    Vec4 q(normal(), normal(), normal(), normal());
    while (q.norm() < 1e-12) q = Vec4(normal(), normal(), normal(), normal());
    return q / q.norm();
  }

private:
  std::uint64_t state_;
};

// Number of worker threads the process-wide pool runs with.
int thread_count();

// Runs body(begin, end) over chunked subranges of [0, n) on the shared pool.
// Chunks are disjoint, so writes to per-index outputs are race-free and the
// result is schedule-independent.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

inline Scalar sigmoid(Scalar x) { return 1.0 / (1.0 + std::exp(-x)); }
inline Scalar logit(Scalar p) { return std::log(p / (1.0 - p)); }

}  // namespace gsopt
