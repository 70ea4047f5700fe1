#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace codelab {

/// A point in the 2D data space.
struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point2 p) { return std::hypot(p.x, p.y); }

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad argument or violated precondition (dims, step range, batch shapes).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Operation not defined for the given reward variant (e.g. gradients of a
/// quantized reward).
class UnsupportedVariant : public Error {
public:
    using Error::Error;
};

}  // namespace codelab
