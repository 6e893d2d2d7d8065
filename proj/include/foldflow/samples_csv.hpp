#pragma once

// Sample table shared by the sampler output and the evaluator input.
//
//   sample_id,frame_id,r00,r01,r02,r10,r11,r12,r20,r21,r22,
//   rv0,rv1,rv2,euler_phi,euler_theta,euler_psi,tx,ty,tz
//
// One row per frame. rv is the rotation vector, the Euler angles are the
// z-x-z (x-convention) triple, and translations are zero for SO(3)-only runs.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "foldflow/se3.hpp"

namespace foldflow {

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& what, std::size_t row) : std::runtime_error(what), row_(row) {}
  /// 1-based line number in the file (the header is line 1).
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

extern const char* const kSamplesHeader;

void write_samples_csv(std::span<const FrameSet> samples, std::ostream& out);
void write_samples_csv(std::span<const Rotation> samples, std::ostream& out);
void export_samples_csv(std::span<const FrameSet> samples, const std::filesystem::path& path);
void export_samples_csv(std::span<const Rotation> samples, const std::filesystem::path& path);

/// Parses the table back. Sample ids must be contiguous from 0 and frame ids
/// contiguous within a sample; rotation entries must be orthonormal within
/// 1e-6 and are re-projected onto SO(3). Throws CsvError with the line number.
std::vector<FrameSet> read_samples_csv(std::istream& in);
std::vector<FrameSet> import_samples_csv(const std::filesystem::path& path);

/// First frame rotation of every sample.
std::vector<Rotation> first_rotations(std::span<const FrameSet> samples);

}  // namespace foldflow
