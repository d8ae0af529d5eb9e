#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace dexforge {

// Planar workspace. Types are written against these aliases so a spatial
// build only changes the constants below.
constexpr int kWorkspaceDim = 2;
constexpr int kMomentDim = 1;

using Vec2 = Eigen::Matrix<double, kWorkspaceDim, 1>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

constexpr double kPi = 3.14159265358979323846;

/// Raised when a caller breaks an operation's preconditions.
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

struct Pose2 {
  Vec2 position{Vec2::Zero()};
  double angle{0.0};
};

inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// Counter-clockwise quarter turn.
inline Vec2 perp(const Vec2& v) { return {-v.y(), v.x()}; }

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

inline Vec2 transform(const Pose2& pose, const Vec2& local) {
  return pose.position + rotate(local, pose.angle);
}

inline bool all_finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

}  // namespace dexforge
