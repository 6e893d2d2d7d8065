#include "foldflow/se3.hpp"

#include <cmath>
#include <string>

namespace foldflow {

namespace {

void require_same_size(const FrameSet& a, const FrameSet& b) {
  if (a.size() != b.size())
    throw DomainError("frame sets differ in size: " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
}

}  // namespace

Vec3 FrameSet::translation_sum() const {
  Vec3 sum = Vec3::Zero();
  for (const auto& f : frames) sum += f.trans;
  return sum;
}

bool FrameSet::is_centered(double tol) const { return translation_sum().norm() <= tol; }

FrameSet FrameSet::single(const Rotation& r) { return FrameSet({RigidTransform{r, Vec3::Zero()}}); }

FrameSet center(const FrameSet& frames) {
  if (frames.size() == 0) throw DomainError("cannot center an empty frame set");
  const Vec3 mean = frames.translation_sum() / static_cast<double>(frames.size());
  FrameSet out = frames;
  for (auto& f : out.frames) f.trans -= mean;
  return out;
}

double se3_distance(const RigidTransform& x1, const RigidTransform& x2) {
  const double dr = geodesic_distance(x1.rot, x2.rot);
  return std::sqrt(dr * dr + (x1.trans - x2.trans).squaredNorm());
}

double product_distance_squared(const FrameSet& a, const FrameSet& b) {
  require_same_size(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double dr = geodesic_distance(a[i].rot, b[i].rot);
    sum += dr * dr + (a[i].trans - b[i].trans).squaredNorm();
  }
  return sum;
}

double product_distance(const FrameSet& a, const FrameSet& b) {
  return std::sqrt(product_distance_squared(a, b));
}

FrameSet frameset_interpolant(const FrameSet& a, const FrameSet& b, double t) {
  require_same_size(a, b);
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("interpolation time must lie in [0, 1]");
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  FrameSet out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i].rot = geodesic_interpolant(a[i].rot, b[i].rot, t);
    out[i].trans = (1.0 - t) * a[i].trans + t * b[i].trans;
  }
  return out;
}

}  // namespace foldflow
