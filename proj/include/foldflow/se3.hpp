#pragma once

// Rigid frames and the centered product group SE(3)^N_0.

#include <cstddef>
#include <vector>

#include "foldflow/so3.hpp"

namespace foldflow {

struct RigidTransform {
  Rotation rot;
  Vec3 trans = Vec3::Zero();
};

/// N rigid frames. Elements of SE(3)^N_0 have translations summing to zero;
/// center() establishes that.
struct FrameSet {
  std::vector<RigidTransform> frames;

  FrameSet() = default;
  explicit FrameSet(std::vector<RigidTransform> f) : frames(std::move(f)) {}

  std::size_t size() const { return frames.size(); }
  RigidTransform& operator[](std::size_t i) { return frames[i]; }
  const RigidTransform& operator[](std::size_t i) const { return frames[i]; }

  Vec3 translation_sum() const;
  bool is_centered(double tol = 1e-9) const;

  /// Single rotation with zero translation (the SO(3)-only workload).
  static FrameSet single(const Rotation& r);
};

/// Algebra coordinates of a tangent vector at one frame.
struct TangentSE3 {
  TangentRotation rot;
  Vec3 vel = Vec3::Zero();
};

/// Subtracts the mean translation. Rotations are untouched.
FrameSet center(const FrameSet& frames);

/// sqrt(d_SO3^2 + ||s1 - s2||^2).
double se3_distance(const RigidTransform& x1, const RigidTransform& x2);

/// Root-sum-square of per-frame se3 distances. Throws on size mismatch.
double product_distance(const FrameSet& a, const FrameSet& b);
double product_distance_squared(const FrameSet& a, const FrameSet& b);

/// Geodesic interpolation on every rotation and linear interpolation
/// (1 - t) s_a + t s_b on every translation.
FrameSet frameset_interpolant(const FrameSet& a, const FrameSet& b, double t);

}  // namespace foldflow
