#pragma once

#include <Eigen/Dense>

namespace quadmpc {

// State ordering everywhere: [p_x, v_x, p_y, v_y, p_z, v_z].
inline constexpr int kStates = 6;
inline constexpr int kInputs = 3;
inline constexpr int kOutputs = 3;

using State = Eigen::Matrix<double, kStates, 1>;
using Input = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat6 = Eigen::Matrix<double, kStates, kStates>;
using Mat63 = Eigen::Matrix<double, kStates, kInputs>;
using Mat36 = Eigen::Matrix<double, kInputs, kStates>;
using Mat3 = Eigen::Matrix3d;

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Axis { X = 0, Y = 1, Z = 2 };

inline constexpr int index(Axis a) { return static_cast<int>(a); }
inline constexpr int position_index(Axis a) { return 2 * index(a); }
inline constexpr int velocity_index(Axis a) { return 2 * index(a) + 1; }

inline constexpr char axis_name(Axis a) {
  return a == Axis::X ? 'x' : (a == Axis::Y ? 'y' : 'z');
}

inline constexpr Axis kAxes[] = {Axis::X, Axis::Y, Axis::Z};

/// Symmetric input box |u_i| <= u_max_i, plus the yaw-rate clamp used by the
/// pass-through yaw channel.
struct InputBounds {
  Vec3 u_max{0.06, 0.06, 0.6};
  double yaw_max = 1.0;

  bool operator==(const InputBounds&) const = default;
};

inline bool valid(const InputBounds& b) {
  return (b.u_max.array() > 0).all() && b.u_max.allFinite() && b.yaw_max > 0;
}

}  // namespace quadmpc
