#include "foldflow/so3.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace foldflow {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;

// Below this sine the axis sign cannot be read from the antisymmetric part.
constexpr double kAxisSignFloor = 1e-12;
// Within this distance of pi the axis is recovered from the symmetric part.
constexpr double kNearPi = 1e-3;

// (r - r^T)/2 in vector form: sin(angle) * axis.
Vec3 antisymmetric_vector(const Mat3& m) {
  return 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

}  // namespace

const Tolerances& default_tolerances() {
  static const Tolerances tol{};
  return tol;
}

Rotation Rotation::from_matrix(const Mat3& m, const Tolerances& tol) {
  if (!m.allFinite()) throw DomainError("rotation matrix has non-finite entries");
  Rotation r(m);
  if (r.orthonormality_error() > tol.orthonormality)
    throw DomainError("matrix is not orthonormal");
  if (std::abs(m.determinant() - 1.0) > tol.determinant)
    throw DomainError("matrix determinant is not +1");
  return r;
}

Rotation Rotation::project(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return Rotation(u * v.transpose());
}

Rotation Rotation::about_x(double a) {
  Mat3 m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return Rotation(m);
}

Rotation Rotation::about_y(double a) {
  Mat3 m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return Rotation(m);
}

Rotation Rotation::about_z(double a) {
  Mat3 m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return Rotation(m);
}

double Rotation::orthonormality_error() const {
  return (m_.transpose() * m_ - Mat3::Identity()).norm();
}

bool Rotation::is_valid(const Tolerances& tol) const {
  return m_.allFinite() && orthonormality_error() <= tol.orthonormality &&
         std::abs(m_.determinant() - 1.0) <= tol.determinant;
}

Mat3 hat(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

Vec3 vee(const Mat3& s, const Tolerances& tol) {
  if ((s + s.transpose()).norm() > tol.skew) throw DomainError("matrix is not skew-symmetric");
  return Vec3(s(2, 1), s(0, 2), s(1, 0));
}

Mat3 skew_part(const Mat3& m) { return 0.5 * (m - m.transpose()); }

Rotation exp_rotvec(const Vec3& w, const Tolerances& tol) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  double a;  // sin(theta)/theta
  double b;  // (1 - cos(theta))/theta^2
  if (theta < tol.small_angle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Mat3 k = hat(w);
  return Rotation::unchecked(Mat3::Identity() + a * k + b * (k * k));
}

Rotation exp_so3(const Mat3& skew, const Tolerances& tol) { return exp_rotvec(vee(skew, tol), tol); }

Vec3 log_rotvec(const Rotation& r, const Tolerances& tol) {
  const Mat3& m = r.matrix();
  const Vec3 v = antisymmetric_vector(m);
  const double s = v.norm();
  const double c = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  const double angle = std::atan2(s, c);

  if (angle < tol.small_angle) return v * (1.0 + angle * angle / 6.0);
  if (angle < kPi - kNearPi) return v * (angle / s);

  // Near pi: (r + r^T)/2 = c I + (1 - c) a a^T.
  const Mat3 outer = (0.5 * (m + m.transpose()) - c * Mat3::Identity()) / (1.0 - c);
  Eigen::Index k = 0;
  outer.diagonal().maxCoeff(&k);
  Vec3 axis = outer.col(k) / std::sqrt(std::max(outer(k, k), 0.0));
  axis.normalize();
  if (s > kAxisSignFloor) {
    if (axis.dot(v) < 0.0) axis = -axis;
  } else {
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis[i]) > kAxisSignFloor) {
        if (axis[i] < 0.0) axis = -axis;
        break;
      }
    }
  }
  return angle * axis;
}

Mat3 log_so3(const Rotation& r, const Tolerances& tol) { return hat(log_rotvec(r, tol)); }

double rotation_angle(const Rotation& r) {
  const Mat3& m = r.matrix();
  const double s = antisymmetric_vector(m).norm();
  const double c = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  return std::atan2(s, c);
}

double geodesic_distance(const Rotation& r1, const Rotation& r2) {
  return kSqrt2 * rotation_angle(Rotation::unchecked(r1.matrix().transpose() * r2.matrix()));
}

double tangent_norm(const Vec3& algebra) { return kSqrt2 * algebra.norm(); }

double tangent_norm_squared(const Vec3& algebra) { return 2.0 * algebra.squaredNorm(); }

TangentRotation log_map(const Rotation& base, const Rotation& target) {
  return {base, log_rotvec(base.inverse() * target)};
}

Rotation exp_map(const Rotation& base, const Vec3& algebra) { return base * exp_rotvec(algebra); }

Rotation exp_map(const TangentRotation& v) { return exp_map(v.base, v.algebra); }

Rotation geodesic_interpolant(const Rotation& r0, const Rotation& r1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("interpolation time must lie in [0, 1]");
  if (t == 0.0) return r0;
  if (t == 1.0) return r1;
  return exp_map(r0, t * log_map(r0, r1).algebra);
}

Rotation sample_uniform(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector4d q;
  do {
    for (int i = 0; i < 4; ++i) q[i] = normal(rng);
  } while (q.squaredNorm() < 1e-12);
  q.normalize();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
       2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
       2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return Rotation::unchecked(m);
}

EulerZXZ to_euler_xconv(const Rotation& r) {
  const Mat3& m = r.matrix();
  constexpr double kGimbal = 1e-9;
  EulerZXZ e;
  const double sin_theta = std::hypot(m(2, 0), m(2, 1));
  e.theta = std::atan2(sin_theta, m(2, 2));
  if (sin_theta < kGimbal) {
    // Only phi +/- psi is determined; put all of it in phi.
    e.phi = std::atan2(m(1, 0), m(0, 0));
    e.psi = 0.0;
    return e;
  }
  e.phi = std::atan2(m(0, 2), -m(1, 2));
  e.psi = std::atan2(m(2, 0), m(2, 1));
  return e;
}

Rotation from_euler_xconv(const EulerZXZ& e) {
  return Rotation::about_z(e.phi) * Rotation::about_x(e.theta) * Rotation::about_z(e.psi);
}

}  // namespace foldflow
