#include "foldflow/samples_csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace foldflow {

const char* const kSamplesHeader =
    "sample_id,frame_id,r00,r01,r02,r10,r11,r12,r20,r21,r22,rv0,rv1,rv2,euler_phi,euler_theta,euler_psi,tx,ty,tz";

namespace {

constexpr std::size_t kColumns = 20;

void write_row(std::ostream& out, std::size_t sample, std::size_t frame, const RigidTransform& x) {
  const Mat3& m = x.rot.matrix();
  const Vec3 rv = log_rotvec(x.rot);
  const EulerZXZ e = to_euler_xconv(x.rot);
  out << sample << ',' << frame;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out << ',' << m(i, j);
  out << ',' << rv.x() << ',' << rv.y() << ',' << rv.z() << ',' << e.phi << ',' << e.theta << ',' << e.psi << ','
      << x.trans.x() << ',' << x.trans.y() << ',' << x.trans.z() << '\n';
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_field(std::string_view s, std::size_t line, std::size_t column) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw CsvError("line " + std::to_string(line) + ", column " + std::to_string(column + 1) + ": cannot parse '" +
                       std::string(s) + "'",
                   line);
  return value;
}

}  // namespace

void write_samples_csv(std::span<const FrameSet> samples, std::ostream& out) {
  out << kSamplesHeader << '\n';
  out.precision(17);
  for (std::size_t s = 0; s < samples.size(); ++s)
    for (std::size_t f = 0; f < samples[s].size(); ++f) write_row(out, s, f, samples[s][f]);
}

void write_samples_csv(std::span<const Rotation> samples, std::ostream& out) {
  out << kSamplesHeader << '\n';
  out.precision(17);
  for (std::size_t s = 0; s < samples.size(); ++s) write_row(out, s, 0, {samples[s], Vec3::Zero()});
}

void export_samples_csv(std::span<const FrameSet> samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_samples_csv(samples, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void export_samples_csv(std::span<const Rotation> samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_samples_csv(samples, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<FrameSet> read_samples_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw CsvError("empty samples file (missing header)", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSamplesHeader) throw CsvError("line 1: unexpected header", 1);

  Tolerances loose;
  loose.orthonormality = 1e-6;
  loose.determinant = 1e-6;
  std::vector<FrameSet> samples;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line);
    if (fields.size() != kColumns)
      throw CsvError("line " + std::to_string(line_no) + ": expected " + std::to_string(kColumns) + " columns, got " +
                         std::to_string(fields.size()),
                     line_no);
    const auto sample = parse_field<std::size_t>(fields[0], line_no, 0);
    const auto frame = parse_field<std::size_t>(fields[1], line_no, 1);
    if (sample == samples.size()) samples.emplace_back();
    if (sample + 1 != samples.size())
      throw CsvError("line " + std::to_string(line_no) + ": sample_id " + std::to_string(sample) + " out of order",
                     line_no);
    if (frame != samples.back().size())
      throw CsvError("line " + std::to_string(line_no) + ": frame_id " + std::to_string(frame) + " out of order",
                     line_no);
    Mat3 m;
    for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = parse_field<double>(fields[2 + k], line_no, 2 + k);
    Vec3 trans;
    for (int k = 0; k < 3; ++k) trans[k] = parse_field<double>(fields[17 + k], line_no, 17 + k);
    for (std::size_t k = 11; k < 17; ++k) (void)parse_field<double>(fields[k], line_no, k);
    if (!Rotation::unchecked(m).is_valid(loose))
      throw CsvError("line " + std::to_string(line_no) + ": rotation entries are not a rotation matrix", line_no);
    samples.back().frames.push_back({Rotation::project(m), trans});
  }
  return samples;
}

std::vector<FrameSet> import_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open samples file " + path.string());
  return read_samples_csv(in);
}

std::vector<Rotation> first_rotations(std::span<const FrameSet> samples) {
  std::vector<Rotation> out;
  out.reserve(samples.size());
  for (const FrameSet& s : samples) {
    if (s.size() == 0) throw DomainError("sample has no frames");
    out.push_back(s[0].rot);
  }
  return out;
}

}  // namespace foldflow
