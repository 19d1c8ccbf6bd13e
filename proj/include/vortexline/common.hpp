#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vortexline {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using CVec3 = Eigen::Vector3cd;
using CMat3 = Eigen::Matrix3cd;
using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

enum class ErrorCode {
  InvalidInput,
  NodeSingularity,
  NodeImpact,
  StepLimitExceeded,
  NoConvergence,
  DegenerateNode,
  SingularSystem,
  BranchTooLong,
  ZeroRotation,
  Blowup,
  DegenerateApproximant,
  ConvergedToNode,
  OutsideTube,
  LineLost,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::NodeSingularity: return "NodeSingularity";
    case ErrorCode::NodeImpact: return "NodeImpact";
    case ErrorCode::StepLimitExceeded: return "StepLimitExceeded";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DegenerateNode: return "DegenerateNode";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::BranchTooLong: return "BranchTooLong";
    case ErrorCode::ZeroRotation: return "ZeroRotation";
    case ErrorCode::Blowup: return "Blowup";
    case ErrorCode::DegenerateApproximant: return "DegenerateApproximant";
    case ErrorCode::ConvergedToNode: return "ConvergedToNode";
    case ErrorCode::OutsideTube: return "OutsideTube";
    case ErrorCode::LineLost: return "LineLost";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Library-wide exception. `code()` identifies the failure class so callers
/// can recover selectively (e.g. record a gap instead of aborting a sweep).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Axis-aligned box used for scans and trace termination.
struct Box {
  Vec3 lo{-4.0, -4.0, -4.0};
  Vec3 hi{4.0, 4.0, 4.0};

  bool contains(const Vec3& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
};

/// Unit vector orthogonal to `t` built from the coordinate axis least aligned with it.
inline Vec3 any_orthogonal(const Vec3& t) {
  Eigen::Index k = 0;
  t.cwiseAbs().minCoeff(&k);
  const Vec3 axis = Vec3::Unit(k);
  Vec3 n = axis - axis.dot(t) * t;
  return n.normalized();
}

}  // namespace vortexline
