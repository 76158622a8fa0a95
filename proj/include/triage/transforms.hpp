#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "triage/image.hpp"

namespace triage {

enum class TransformKind { pan, rotate2d, affine, perspective };

inline constexpr std::array<TransformKind, 4> kAllTransformKinds{
    TransformKind::pan, TransformKind::rotate2d, TransformKind::affine,
    TransformKind::perspective};

const char* to_string(TransformKind kind) noexcept;
std::optional<TransformKind> parse_transform_kind(std::string_view name) noexcept;

/// Row-major 3x3 matrix.
using Matrix3 = std::array<double, 9>;

/// Shift by (dx, dy) pixels; positive dx moves content right, dy down.
struct Pan {
  double dx = 0.0;
  double dy = 0.0;
  friend bool operator==(const Pan&, const Pan&) = default;
};

/// Rotation about the image center. Positive angles turn content
/// counter-clockwise as displayed (y axis pointing down).
struct Rotate2d {
  double degrees = 0.0;
  friend bool operator==(const Rotate2d&, const Rotate2d&) = default;
};

/// Forward map [x' y']^T = M [x y 1]^T, with M row-major 2x3.
struct Affine {
  std::array<double, 6> matrix{1, 0, 0, 0, 1, 0};
  friend bool operator==(const Affine&, const Affine&) = default;
};

/// Forward homography with h33 = 1.
struct Perspective {
  Matrix3 matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};
  friend bool operator==(const Perspective&, const Perspective&) = default;
};

/// One parametrized metamorphic transformation.
///
/// Coordinates are continuous with the origin at the top-left image corner;
/// pixel (row r, col c) covers [c, c+1) x [r, r+1) and has its center at
/// (c + 0.5, r + 0.5).
class TransformSpec {
 public:
  using Params = std::variant<Pan, Rotate2d, Affine, Perspective>;

  /// Throws ValidationError for non-finite parameters, a non-invertible
  /// matrix, or a perspective matrix whose h33 is not 1.
  explicit TransformSpec(Params params);

  static TransformSpec identity(TransformKind kind);

  TransformKind kind() const noexcept;
  const Params& params() const noexcept { return params_; }

  /// Forward map from source to output coordinates.
  Matrix3 forward_matrix(const ImageShape& shape) const;
  /// Map from output to source coordinates, as used for sampling.
  Matrix3 sampling_matrix(const ImageShape& shape) const;

  /// The spec that undoes this one.
  TransformSpec inverse() const;

  friend bool operator==(const TransformSpec&, const TransformSpec&) = default;

 private:
  Params params_;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

/// Which transforms `choice` may return and the parameter ranges it draws from.
/// Fractions are relative to the image width (x) and height (y).
struct TransformPolicy {
  std::vector<TransformKind> enabled{kAllTransformKinds.begin(), kAllTransformKinds.end()};
  Range pan_fraction{-0.1, 0.1};
  Range rotate_degrees{-15.0, 15.0};
  Range affine_linear{-0.1, 0.1};
  Range affine_translation_fraction{-0.1, 0.1};
  Range perspective_fraction{-0.1, 0.1};
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TransformPolicy&, const TransformPolicy&) = default;
};

/// Picks a kind uniformly among the enabled ones, then draws its parameters.
/// A pure function of (seed, draw_index); no generator state is shared.
TransformSpec choice(const TransformPolicy& policy, std::uint64_t draw_index,
                     const ImageShape& shape);

/// The parameters `choice` would draw for `kind` at this draw index.
TransformSpec draw_parameters(const TransformPolicy& policy, TransformKind kind,
                              std::uint64_t draw_index, const ImageShape& shape);

/// Stable draw index for a sample, so a sample keeps its transform no matter
/// which subset it is drawn in. FNV-1a over the id bytes.
std::uint64_t draw_index_for(std::string_view sample_id) noexcept;

/// Inverse-mapping warp with bilinear interpolation. Taps that fall outside
/// the source read as 0.0. Output has the input's shape.
ImageTensor apply_transform(const ImageTensor& image, const TransformSpec& spec);

/// Largest per-pixel deviation of apply(apply(image, spec), spec.inverse())
/// from `image`, over pixels whose round trip never touched the border fill.
double compose_check(const ImageTensor& image, const TransformSpec& spec);

/// Homography mapping the image corners (0,0), (w,0), (w,h), (0,h) onto
/// `corners` (x, y pairs in the same order).
Perspective perspective_from_corners(const ImageShape& shape,
                                     const std::array<double, 8>& corners);

}  // namespace triage
