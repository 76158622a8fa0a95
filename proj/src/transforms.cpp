#include "triage/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "triage/error.hpp"

namespace triage {

namespace {

constexpr double kMinDeterminant = 1e-9;

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

Eigen::Matrix3d to_eigen(const Matrix3& m) {
  Eigen::Matrix3d e;
  e << m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8];
  return e;
}

Matrix3 from_eigen(const Eigen::Matrix3d& e) {
  return {e(0, 0), e(0, 1), e(0, 2), e(1, 0), e(1, 1), e(1, 2), e(2, 0), e(2, 1), e(2, 2)};
}

Matrix3 from_affine(const std::array<double, 6>& a) {
  return {a[0], a[1], a[2], a[3], a[4], a[5], 0.0, 0.0, 1.0};
}

std::array<double, 6> invert_affine(const std::array<double, 6>& a) {
  const double det = a[0] * a[4] - a[1] * a[3];
  const double i00 = a[4] / det, i01 = -a[1] / det;
  const double i10 = -a[3] / det, i11 = a[0] / det;
  return {i00, i01, -(i00 * a[2] + i01 * a[5]), i10, i11, -(i10 * a[2] + i11 * a[5])};
}

// Exact values at multiples of 90 degrees so quarter turns do not interpolate.
std::pair<double, double> cos_sin_degrees(double degrees) {
  const double quarters = degrees / 90.0;
  if (quarters == std::round(quarters) && std::abs(quarters) < 1e15) {
    static constexpr std::array<std::pair<double, double>, 4> kQuarter{
        {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}}};
    const auto k = static_cast<long long>(std::round(quarters));
    return kQuarter[static_cast<std::size_t>(((k % 4) + 4) % 4)];
  }
  const double radians = degrees * std::numbers::pi / 180.0;
  return {std::cos(radians), std::sin(radians)};
}

// T(center) * R(theta) * T(-center), with R(theta) = [[c, -s], [s, c]].
Matrix3 rotation_about_center(double degrees, const ImageShape& shape) {
  const auto [c, s] = cos_sin_degrees(degrees);
  const double cx = static_cast<double>(shape.width) / 2.0;
  const double cy = static_cast<double>(shape.height) / 2.0;
  return {c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy, 0.0, 0.0, 1.0};
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based stream: value k of draw (seed, index) is a hash of all three.
class DrawStream {
 public:
  DrawStream(std::uint64_t seed, std::uint64_t index) : base_(mix64(seed ^ mix64(index))) {}

  double unit(std::uint64_t k) const noexcept {
    return static_cast<double>(mix64(base_ + k * 0x9e3779b97f4a7c15ULL) >> 11) * 0x1.0p-53;
  }
  double uniform(std::uint64_t k, const Range& range) const noexcept {
    return range.lo + (range.hi - range.lo) * unit(k);
  }

 private:
  std::uint64_t base_;
};

void check_range(const Range& r, const char* name) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw ValidationError(fmt::format("transform range {} [{}, {}] is empty or not finite", name,
                                      r.lo, r.hi));
  }
}

}  // namespace

const char* to_string(TransformKind kind) noexcept {
  switch (kind) {
    case TransformKind::pan: return "pan";
    case TransformKind::rotate2d: return "rotate2d";
    case TransformKind::affine: return "affine";
    case TransformKind::perspective: return "perspective";
  }
  return "unknown";
}

std::optional<TransformKind> parse_transform_kind(std::string_view name) noexcept {
  for (TransformKind kind : kAllTransformKinds) {
    if (name == to_string(kind)) return kind;
  }
  return std::nullopt;
}

TransformSpec::TransformSpec(Params params) : params_(std::move(params)) {
  std::visit(Overloaded{
                 [](const Pan& p) {
                   if (!std::isfinite(p.dx) || !std::isfinite(p.dy)) {
                     throw ValidationError("pan offsets must be finite");
                   }
                 },
                 [](const Rotate2d& r) {
                   if (!std::isfinite(r.degrees)) {
                     throw ValidationError("rotation angle must be finite");
                   }
                 },
                 [](const Affine& a) {
                   if (!all_finite(a.matrix)) throw ValidationError("affine matrix must be finite");
                   const auto& m = a.matrix;
                   if (std::abs(m[0] * m[4] - m[1] * m[3]) <= kMinDeterminant) {
                     throw ValidationError("affine matrix is not invertible");
                   }
                 },
                 [](Perspective& p) {
                   if (!all_finite(p.matrix)) {
                     throw ValidationError("perspective matrix must be finite");
                   }
                   if (p.matrix[8] != 1.0) {
                     throw ValidationError(
                         fmt::format("perspective matrix needs h33 = 1, got {}", p.matrix[8]));
                   }
                   if (std::abs(to_eigen(p.matrix).determinant()) <= kMinDeterminant) {
                     throw ValidationError("perspective matrix is not invertible (|det| <= 1e-9)");
                   }
                 },
             },
             params_);
}

TransformSpec TransformSpec::identity(TransformKind kind) {
  switch (kind) {
    case TransformKind::pan: return TransformSpec(Pan{});
    case TransformKind::rotate2d: return TransformSpec(Rotate2d{});
    case TransformKind::affine: return TransformSpec(Affine{});
    case TransformKind::perspective: return TransformSpec(Perspective{});
  }
  throw ValidationError("unknown transform kind");
}

TransformKind TransformSpec::kind() const noexcept {
  return static_cast<TransformKind>(params_.index());
}

Matrix3 TransformSpec::forward_matrix(const ImageShape& shape) const {
  return std::visit(
      Overloaded{
          [](const Pan& p) -> Matrix3 { return {1, 0, p.dx, 0, 1, p.dy, 0, 0, 1}; },
          [&](const Rotate2d& r) { return rotation_about_center(-r.degrees, shape); },
          [](const Affine& a) { return from_affine(a.matrix); },
          [](const Perspective& p) { return p.matrix; },
      },
      params_);
}

Matrix3 TransformSpec::sampling_matrix(const ImageShape& shape) const {
  return std::visit(
      Overloaded{
          [](const Pan& p) -> Matrix3 { return {1, 0, -p.dx, 0, 1, -p.dy, 0, 0, 1}; },
          [&](const Rotate2d& r) { return rotation_about_center(r.degrees, shape); },
          [](const Affine& a) { return from_affine(invert_affine(a.matrix)); },
          [](const Perspective& p) { return from_eigen(to_eigen(p.matrix).inverse()); },
      },
      params_);
}

TransformSpec TransformSpec::inverse() const {
  return std::visit(
      Overloaded{
          [](const Pan& p) { return TransformSpec(Pan{-p.dx, -p.dy}); },
          [](const Rotate2d& r) { return TransformSpec(Rotate2d{-r.degrees}); },
          [](const Affine& a) { return TransformSpec(Affine{invert_affine(a.matrix)}); },
          [](const Perspective& p) {
            Matrix3 inv = from_eigen(to_eigen(p.matrix).inverse());
            if (std::abs(inv[8]) < 1e-12) {
              throw ValidationError("perspective inverse cannot be normalized to h33 = 1");
            }
            const double scale = inv[8];
            for (double& v : inv) v /= scale;
            inv[8] = 1.0;
            return TransformSpec(Perspective{inv});
          },
      },
      params_);
}

void TransformPolicy::validate() const {
  if (enabled.empty()) throw ValidationError("transform policy enables no transform kinds");
  check_range(pan_fraction, "pan_fraction");
  check_range(rotate_degrees, "rotate_degrees");
  check_range(affine_linear, "affine_linear");
  check_range(affine_translation_fraction, "affine_translation_fraction");
  check_range(perspective_fraction, "perspective_fraction");
}

TransformSpec draw_parameters(const TransformPolicy& policy, TransformKind kind,
                              std::uint64_t draw_index, const ImageShape& shape) {
  policy.validate();
  const DrawStream draw(policy.seed, draw_index);
  const double w = static_cast<double>(shape.width);
  const double h = static_cast<double>(shape.height);
  // Stream slot 0 is reserved for the kind drawn by choice().
  switch (kind) {
    case TransformKind::pan:
      return TransformSpec(
          Pan{draw.uniform(1, policy.pan_fraction) * w, draw.uniform(2, policy.pan_fraction) * h});
    case TransformKind::rotate2d:
      return TransformSpec(Rotate2d{draw.uniform(1, policy.rotate_degrees)});
    case TransformKind::affine: {
      const double m00 = 1.0 + draw.uniform(1, policy.affine_linear);
      const double m01 = draw.uniform(2, policy.affine_linear);
      const double m10 = draw.uniform(3, policy.affine_linear);
      const double m11 = 1.0 + draw.uniform(4, policy.affine_linear);
      const double tx = draw.uniform(5, policy.affine_translation_fraction) * w;
      const double ty = draw.uniform(6, policy.affine_translation_fraction) * h;
      // Linear part acts about the image center.
      const double cx = w / 2.0, cy = h / 2.0;
      return TransformSpec(Affine{{m00, m01, cx - m00 * cx - m01 * cy + tx, m10, m11,
                                   cy - m10 * cx - m11 * cy + ty}});
    }
    case TransformKind::perspective: {
      std::array<double, 8> corners{0, 0, w, 0, w, h, 0, h};
      for (std::size_t i = 0; i < 8; ++i) {
        corners[i] += draw.uniform(1 + i, policy.perspective_fraction) * (i % 2 == 0 ? w : h);
      }
      return TransformSpec(perspective_from_corners(shape, corners));
    }
  }
  throw ValidationError("unknown transform kind");
}

TransformSpec choice(const TransformPolicy& policy, std::uint64_t draw_index,
                     const ImageShape& shape) {
  policy.validate();
  const DrawStream draw(policy.seed, draw_index);
  const auto n = policy.enabled.size();
  const auto pick = std::min(n - 1, static_cast<std::size_t>(draw.unit(0) * static_cast<double>(n)));
  return draw_parameters(policy, policy.enabled[pick], draw_index, shape);
}

std::uint64_t draw_index_for(std::string_view sample_id) noexcept {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char ch : sample_id) {
    hash ^= static_cast<unsigned char>(ch);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

Perspective perspective_from_corners(const ImageShape& shape,
                                     const std::array<double, 8>& corners) {
  const double w = static_cast<double>(shape.width);
  const double h = static_cast<double>(shape.height);
  const std::array<double, 8> source{0, 0, w, 0, w, h, 0, h};
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = source[2 * i], y = source[2 * i + 1];
    const double u = corners[2 * i], v = corners[2 * i + 1];
    a.row(2 * i) << x, y, 1, 0, 0, 0, -x * u, -y * u;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -x * v, -y * v;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> hvec = a.fullPivLu().solve(b);
  Perspective p;
  for (int i = 0; i < 8; ++i) p.matrix[static_cast<std::size_t>(i)] = hvec(i);
  p.matrix[8] = 1.0;
  return p;
}

ImageTensor apply_transform(const ImageTensor& image, const TransformSpec& spec) {
  const ImageShape& shape = image.shape();
  const Matrix3 m = spec.sampling_matrix(shape);
  const auto w = static_cast<long long>(shape.width);
  const auto h = static_cast<long long>(shape.height);
  const std::size_t channels = shape.channels;
  const auto src = image.pixels();

  ImageTensor out(shape);
  auto dst = out.mutable_pixels();
  auto tap = [&](long long row, long long col, std::size_t ch) -> double {
    if (row < 0 || col < 0 || row >= h || col >= w) return 0.0;
    return src[(static_cast<std::size_t>(row) * shape.width + static_cast<std::size_t>(col)) *
                   channels +
               ch];
  };

  for (long long r = 0; r < h; ++r) {
    for (long long c = 0; c < w; ++c) {
      const double x = static_cast<double>(c) + 0.5;
      const double y = static_cast<double>(r) + 0.5;
      const double sw = m[6] * x + m[7] * y + m[8];
      if (!(sw > 1e-12)) continue;
      const double sx = (m[0] * x + m[1] * y + m[2]) / sw - 0.5;
      const double sy = (m[3] * x + m[4] * y + m[5]) / sw - 0.5;
      if (!(sx > -1.0 && sy > -1.0 && sx < static_cast<double>(w) &&
            sy < static_cast<double>(h))) {
        continue;
      }
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double ax = sx - fx;
      const double ay = sy - fy;
      const auto x0 = static_cast<long long>(fx);
      const auto y0 = static_cast<long long>(fy);
      double* px = &dst[(static_cast<std::size_t>(r) * shape.width + static_cast<std::size_t>(c)) *
                        channels];
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const double v = tap(y0, x0, ch) * (1.0 - ax) * (1.0 - ay) +
                         tap(y0, x0 + 1, ch) * ax * (1.0 - ay) +
                         tap(y0 + 1, x0, ch) * (1.0 - ax) * ay + tap(y0 + 1, x0 + 1, ch) * ax * ay;
        px[ch] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

double compose_check(const ImageTensor& image, const TransformSpec& spec) {
  const TransformSpec back = spec.inverse();
  const ImageTensor round_trip = apply_transform(apply_transform(image, spec), back);

  std::vector<double> ones(image.pixels().size(), 1.0);
  const ImageTensor coverage =
      apply_transform(apply_transform(ImageTensor(image.shape(), std::move(ones)), spec), back);

  double worst = 0.0;
  for (std::size_t i = 0; i < image.pixels().size(); ++i) {
    if (coverage.pixels()[i] < 1.0 - 1e-9) continue;
    worst = std::max(worst, std::abs(round_trip.pixels()[i] - image.pixels()[i]));
  }
  return worst;
}

}  // namespace triage
