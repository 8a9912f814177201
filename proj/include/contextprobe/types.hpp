#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>

namespace contextprobe {

using Index = Eigen::Index;

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Planef = Plane<float>;
using Planed = Plane<double>;
using MaskPlane = Plane<bool>;
using LabelPlane = Plane<std::uint16_t>;

using Color = Eigen::Array3f;

/// Label value excluding a pixel from losses and metrics.
inline constexpr std::uint16_t kIgnoreLabel = 0xFFFF;

/// Three-channel raster, one plane per channel, values in [0,1].
struct Image {
  std::array<Planef, 3> ch{};

  Image() = default;
  Image(Index rows, Index cols) {
    for (auto& p : ch) p = Planef::Zero(rows, cols);
  }

  Index rows() const { return ch[0].rows(); }
  Index cols() const { return ch[0].cols(); }

  void fill(const Color& c) {
    for (int k = 0; k < 3; ++k) ch[k].setConstant(c[k]);
  }
};

inline bool bit_equal(const Image& a, const Image& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (int k = 0; k < 3; ++k)
    if (!(a.ch[k] == b.ch[k]).all()) return false;
  return true;
}

/// Inclusive pixel bounds of a mask.
struct Box {
  Index top = 0, left = 0, bottom = -1, right = -1;
  bool empty() const { return bottom < top || right < left; }
};

inline Box bounding_box(const MaskPlane& mask) {
  Box b{mask.rows(), mask.cols(), -1, -1};
  for (Index r = 0; r < mask.rows(); ++r)
    for (Index c = 0; c < mask.cols(); ++c)
      if (mask(r, c)) {
        b.top = std::min(b.top, r);
        b.left = std::min(b.left, c);
        b.bottom = std::max(b.bottom, r);
        b.right = std::max(b.right, c);
      }
  if (b.bottom < 0) return Box{0, 0, -1, -1};
  return b;
}

}  // namespace contextprobe
