#pragma once

// Lie-group primitives for the rotation group SO(3).
//
// Distances follow the Frobenius-norm convention d(r1, r2) = ||log(r1^T r2)||_F,
// which is sqrt(2) times the rotation angle. The bi-invariant inner product
// <a, b> = tr(a^T b) / 2 measures the same skew matrix sqrt(2) times smaller;
// everything in this library (losses, OT costs, Wasserstein ground metric)
// uses the Frobenius convention.

#include <Eigen/Core>
#include <random>
#include <stdexcept>

namespace foldflow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Thrown when an input violates a documented domain invariant.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical tolerances shared by the SO(3) routines. The defaults target
/// double precision; reduced-precision builds pass their own.
struct Tolerances {
  double orthonormality = 1e-9;  // ||m^T m - I||_F
  double determinant = 1e-9;     // |det(m) - 1|
  double skew = 1e-12;           // ||m + m^T||_F
  double small_angle = 1e-6;     // Taylor branch below this angle
};

const Tolerances& default_tolerances();

class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Validates the invariants of SO(3); throws DomainError otherwise.
  static Rotation from_matrix(const Mat3& m, const Tolerances& tol = default_tolerances());

  /// Skips validation. For matrices that are rotations by construction.
  static Rotation unchecked(const Mat3& m) { return Rotation(m); }

  /// Nearest rotation in Frobenius norm (polar projection).
  static Rotation project(const Mat3& m);

  static Rotation identity() { return Rotation(); }
  static Rotation about_x(double angle);
  static Rotation about_y(double angle);
  static Rotation about_z(double angle);

  const Mat3& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  /// ||m^T m - I||_F.
  double orthonormality_error() const;
  bool is_valid(const Tolerances& tol = default_tolerances()) const;

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

/// A tangent vector at `base`, stored in Lie-algebra coordinates: the ambient
/// tangent matrix is base * hat(algebra).
struct TangentRotation {
  Rotation base;
  Vec3 algebra = Vec3::Zero();
};

// hat / vee --------------------------------------------------------------

Mat3 hat(const Vec3& w);

/// Inverse of hat. Throws DomainError when ||s + s^T||_F exceeds tol.skew.
Vec3 vee(const Mat3& s, const Tolerances& tol = default_tolerances());

/// Skew-symmetric part (m - m^T) / 2.
Mat3 skew_part(const Mat3& m);

// exp / log --------------------------------------------------------------

/// Rodrigues formula on a skew matrix.
Rotation exp_so3(const Mat3& skew, const Tolerances& tol = default_tolerances());

/// Rodrigues formula on a rotation vector.
Rotation exp_rotvec(const Vec3& w, const Tolerances& tol = default_tolerances());

/// Rotation vector of r with angle in [0, pi]. At angle pi the axis comes
/// from the dominant diagonal of (r + r^T)/2 with its first nonzero
/// component made positive.
Vec3 log_rotvec(const Rotation& r, const Tolerances& tol = default_tolerances());

/// Matrix logarithm as a skew matrix, hat(log_rotvec(r)).
Mat3 log_so3(const Rotation& r, const Tolerances& tol = default_tolerances());

/// Rotation angle in [0, pi].
double rotation_angle(const Rotation& r);

// Riemannian structure --------------------------------------------------

/// ||log(r1^T r2)||_F = sqrt(2) * relative angle.
double geodesic_distance(const Rotation& r1, const Rotation& r2);

/// Norm of an algebra-coordinate tangent vector, consistent with
/// geodesic_distance: ||hat(w)||_F = sqrt(2) ||w||.
double tangent_norm(const Vec3& algebra);
double tangent_norm_squared(const Vec3& algebra);

/// log_base(target) in algebra coordinates: log_rotvec(base^T target).
TangentRotation log_map(const Rotation& base, const Rotation& target);

/// base * exp(hat(algebra)).
Rotation exp_map(const Rotation& base, const Vec3& algebra);
Rotation exp_map(const TangentRotation& v);

/// exp_{r0}(t log_{r0}(r1)).
Rotation geodesic_interpolant(const Rotation& r0, const Rotation& r1, double t);

// Sampling ---------------------------------------------------------------

/// Haar-uniform rotation (normalized Gaussian quaternion).
Rotation sample_uniform(std::mt19937_64& rng);

// Euler angles ----------------------------------------------------------

struct EulerZXZ {
  double phi = 0.0;
  double theta = 0.0;
  double psi = 0.0;
};

/// x-convention: r = Rz(phi) Rx(theta) Rz(psi), theta in [0, pi].
/// In gimbal lock (sin theta ~ 0) psi is set to 0.
EulerZXZ to_euler_xconv(const Rotation& r);
Rotation from_euler_xconv(const EulerZXZ& e);

}  // namespace foldflow
