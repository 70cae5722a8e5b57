#pragma once

// Small shared vocabulary: 2D vectors, error types, numeric helpers.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace eulerfem {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
};

inline Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }

// 2D scalar cross product: cross(a, b) = a1 b2 - a2 b1.
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

// Clockwise quarter rotation; maps a CCW-traversed edge tangent to its
// outward normal.
inline Vec2 perp_cw(const Vec2& v) { return {v.y, -v.x}; }

inline double norm(const Vec2& v) { return std::sqrt(dot(v, v)); }

// Invalid input to a library operation (bad order, mismatched spaces, ...).
struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Linear or nonlinear solve failure (singular pivot, Newton divergence).
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-facing configuration (CLI / config file).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace eulerfem
