// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace bevfield {

inline constexpr const char *kEngineVersion = "0.1.0";

enum class ErrorKind { invalid_argument, out_of_range, not_found, io, internal };

/// Single exception type for the engine. The kind lets front ends (CLI exit
/// codes, HTTP status) classify failures without parsing messages.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), mKind(kind) {}
    ErrorKind kind() const noexcept { return mKind; }

  private:
    ErrorKind mKind;
};

[[noreturn]] inline void
fail(ErrorKind kind, const std::string &what) {
    throw Error(kind, what);
}

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3 operator+(const Vec3 &o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3 &o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr bool operator==(const Vec3 &) const = default;
};

constexpr double
dot(const Vec3 &a, const Vec3 &b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

constexpr Vec3
cross(const Vec3 &a, const Vec3 &b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double
norm(const Vec3 &v) {
    return std::sqrt(dot(v, v));
}

inline Vec3
normalized(const Vec3 &v) {
    const double n = norm(v);
    return {v.x / n, v.y / n, v.z / n};
}

/// Affine map from world units to continuous grid coordinates:
///   grid_x = scale * world_x + offset_x   (columns)
///   grid_y = scale * world_y + offset_y   (rows)
/// Pixel (row i, col j) has its center at grid coordinate (j + 0.5, i + 0.5).
struct WorldToGrid {
    double scale    = 1.0; // pixels per world unit
    double offset_x = 0.0;
    double offset_y = 0.0;

    double grid_x(double wx) const { return scale * wx + offset_x; }
    double grid_y(double wy) const { return scale * wy + offset_y; }
    double world_x(double gx) const { return (gx - offset_x) / scale; }
    double world_y(double gy) const { return (gy - offset_y) / scale; }

    /// World coordinate of the center of column `col` / row `row`.
    double col_center(double col) const { return world_x(col + 0.5); }
    double row_center(double row) const { return world_y(row + 0.5); }

    bool operator==(const WorldToGrid &) const = default;
};

/// Rectangular pixel window. The origin is signed so that windows can also
/// address the unbounded global coordinate frame (Fourier grids); crops
/// validate bounds themselves.
struct WindowSpec {
    int row  = 0;
    int col  = 0;
    int h    = 0;
    int w    = 0;

    WindowSpec shifted(int drow, int dcol) const { return {row + drow, col + dcol, h, w}; }
    bool operator==(const WindowSpec &) const = default;
};

/// Worker count used by parallel_for. 0 means hardware concurrency.
void set_thread_count(int n);
int thread_count();

/// Runs fn(i) for i in [begin, end) across the configured worker count.
/// Each index is processed exactly once by one worker, so results written
/// per index are independent of scheduling.
void parallel_for(int begin, int end, const std::function<void(int)> &fn);

} // namespace bevfield
