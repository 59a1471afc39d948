#pragma once

// Homogeneous transforms and pixel -> robot base conversion:
//   base_P = base_T_tool * tool_T_cam * cam_P,
// with cam_P obtained by back-projecting a pixel onto the known table plane.

#include <cmath>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "flatbench/cloth_sim.hpp"
#include "flatbench/error.hpp"
#include "flatbench/image.hpp"

namespace flatbench {

/// Rigid 4x4 transform; rotation block orthonormal with det +1.
class HomTransform {
 public:
  HomTransform() : m_(Eigen::Matrix4d::Identity()) {}

  static HomTransform from_matrix(const Eigen::Matrix4d& m) {
    HomTransform t;
    t.m_ = m;
    t.validate();
    return t;
  }
  static HomTransform identity() { return {}; }
  static HomTransform translation(double x, double y, double z) {
    HomTransform t;
    t.m_.block<3, 1>(0, 3) = Eigen::Vector3d(x, y, z);
    return t;
  }
  static HomTransform rotation_z(double angle) {
    HomTransform t;
    t.m_.block<3, 3>(0, 0) = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    return t;
  }
  static HomTransform from_rt(const Eigen::Matrix3d& r, const Eigen::Vector3d& p) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.block<3, 3>(0, 0) = r;
    m.block<3, 1>(0, 3) = p;
    return from_matrix(m);
  }

  const Eigen::Matrix4d& matrix() const noexcept { return m_; }
  Eigen::Matrix3d rotation() const { return m_.block<3, 3>(0, 0); }
  Eigen::Vector3d translation() const { return m_.block<3, 1>(0, 3); }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation() * p + translation(); }

  HomTransform inverse() const {
    HomTransform t;
    const Eigen::Matrix3d rt = rotation().transpose();
    t.m_.block<3, 3>(0, 0) = rt;
    t.m_.block<3, 1>(0, 3) = -rt * translation();
    return t;
  }

  /// Largest entry of |R^T R - I|.
  double orthonormality_error() const {
    return (rotation().transpose() * rotation() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  }

  void validate() const {
    if (!m_.allFinite()) throw Error(ErrorCode::BadParams, "transform has non-finite entries");
    const Eigen::RowVector4d bottom = m_.row(3);
    if (bottom != Eigen::RowVector4d(0, 0, 0, 1)) throw Error(ErrorCode::BadParams, "bottom row must be (0, 0, 0, 1)");
    if (orthonormality_error() > 1e-9 || std::abs(rotation().determinant() - 1.0) > 1e-9)
      throw Error(ErrorCode::BadParams, "rotation block is not a proper rotation");
  }

  /// Projects the rotation block back onto SO(3).
  void reorthonormalize() {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(rotation(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
      Eigen::Matrix3d u = svd.matrixU();
      u.col(2) *= -1.0;
      r = u * svd.matrixV().transpose();
    }
    m_.block<3, 3>(0, 0) = r;
  }

 private:
  friend HomTransform compose(const HomTransform& a, const HomTransform& b);

  Eigen::Matrix4d m_;
};

/// Matrix product a * b; the rotation block is re-projected onto SO(3)
/// when floating-point drift exceeds 1e-9.
inline HomTransform compose(const HomTransform& a, const HomTransform& b) {
  HomTransform out;
  out.m_ = a.matrix() * b.matrix();
  out.m_.row(3) << 0, 0, 0, 1;
  if (out.orthonormality_error() > 1e-9) out.reorthonormalize();
  return out;
}

struct CameraIntrinsics {
  double fx = 600.0, fy = 600.0;
  double cx = 360.0, cy = 360.0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy))
      throw Error(ErrorCode::BadParams, "focal lengths must be positive");
  }
};

/// Plane {X : normal . X = offset} in the camera frame.
struct TablePlane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.5;

  void validate() const {
    if (std::abs(normal.norm() - 1.0) > 1e-9) throw Error(ErrorCode::BadParams, "table plane normal must be unit");
  }
};

inline Eigen::Vector3d pixel_to_camera(const CameraIntrinsics& intr, const Point2& px, const TablePlane& plane) {
  intr.validate();
  plane.validate();
  const Eigen::Vector3d ray((px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy, 1.0);
  const double denom = plane.normal.dot(ray);
  if (std::abs(denom) < 1e-12) throw Error(ErrorCode::NoIntersection, "pixel ray is parallel to the table plane");
  const double t = plane.offset / denom;
  if (!(t > 0.0)) throw Error(ErrorCode::NoIntersection, "table plane lies behind the camera along this ray");
  return t * ray;
}

inline Point2 camera_to_pixel(const CameraIntrinsics& intr, const Eigen::Vector3d& p) {
  if (!(p.z() > 0.0)) throw Error(ErrorCode::NoIntersection, "point is not in front of the camera");
  return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy};
}

inline Eigen::Vector3d pixel_to_base(const HomTransform& base_T_tool, const HomTransform& tool_T_cam,
                                     const CameraIntrinsics& intr, const TablePlane& plane, const Point2& px) {
  return compose(base_T_tool, tool_T_cam).apply(pixel_to_camera(intr, px, plane));
}

/// Real-robot pathway: camera on the tool, table plane known in camera frame.
struct RobotChain {
  HomTransform base_T_tool;
  HomTransform tool_T_cam;
  CameraIntrinsics intrinsics;
  TablePlane plane;

  Eigen::Vector3d to_base(const Point2& px) const {
    return pixel_to_base(base_T_tool, tool_T_cam, intrinsics, plane, px);
  }
};

/// Maps policy actions (pixels) to world/base coordinates for either the
/// simulator's orthographic camera or a calibrated robot chain.
class ActionFrames {
 public:
  explicit ActionFrames(TopDownCamera sim) : chain_(std::move(sim)) {}
  explicit ActionFrames(RobotChain robot) : chain_(std::move(robot)) {}

  Eigen::Vector3d point(const Point2& px) const {
    if (const auto* cam = std::get_if<TopDownCamera>(&chain_)) {
      const Eigen::Vector2d w = cam->pixel_to_world(px);
      return {w.x(), w.y(), 0.0};
    }
    return std::get<RobotChain>(chain_).to_base(px);
  }

  /// Planar world direction of an image direction applied at `px`.
  Eigen::Vector2d direction(const Point2& px, const Eigen::Vector2d& dir) const {
    if (const auto* cam = std::get_if<TopDownCamera>(&chain_)) return cam->direction_to_world(dir);
    const Eigen::Vector3d a = point(px);
    const Eigen::Vector3d b = point(px + dir.normalized());
    const Eigen::Vector2d d = (b - a).head<2>();
    if (d.norm() < 1e-15) throw Error(ErrorCode::Degenerate, "image direction collapses in the base frame");
    return d.normalized();
  }

 private:
  std::variant<TopDownCamera, RobotChain> chain_;
};

}  // namespace flatbench
