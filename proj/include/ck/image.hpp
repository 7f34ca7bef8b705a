#ifndef CK_IMAGE_HPP
#define CK_IMAGE_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ck {

// Boundary convention for out-of-range spatial indices.
enum class PaddingScheme { Circular, Zero };

inline const char* padding_name(PaddingScheme s) {
  return s == PaddingScheme::Circular ? "circular" : "zero";
}

// Resolves a 1-based index against an axis of the given extent.
// Circular wraps with a non-negative modulo; Zero reports out-of-range
// indices instead (the caller treats them as contributing 0).
struct ResolvedIndex {
  bool in_range;
  int index;  // 1-based; meaningful only when in_range
};

inline ResolvedIndex resolve_index(int i, int extent, PaddingScheme scheme) {
  if (scheme == PaddingScheme::Circular) {
    int m = (i - 1) % extent;
    if (m < 0) m += extent;
    return {true, m + 1};
  }
  if (i >= 1 && i <= extent) return {true, i};
  return {false, 0};
}

// 0-based wrap used by the internal hot paths.
inline int wrap0(int i, int extent) {
  int m = i % extent;
  return m < 0 ? m + extent : m;
}

// Dense order-3 real tensor: rows x cols x channels, channel fastest.
// The first index is the axis reversed by the horizontal flip operator.
struct Image {
  int rows = 0;      // P
  int cols = 0;      // Q
  int channels = 0;  // C
  std::vector<double> values;

  Image() = default;
  Image(int p, int q, int c) : rows(p), cols(q), channels(c) {
    if (p < 1 || q < 1 || c < 1) throw std::invalid_argument("Image: dimensions must be >= 1");
    values.assign(static_cast<size_t>(p) * q * c, 0.0);
  }

  size_t idx(int i, int j, int c) const {
    return (static_cast<size_t>(i) * cols + j) * channels + c;
  }
  double at(int i, int j, int c) const { return values[idx(i, j, c)]; }
  double& at(int i, int j, int c) { return values[idx(i, j, c)]; }

  size_t pixel_count() const { return static_cast<size_t>(rows) * cols; }
  size_t size() const { return values.size(); }

  bool same_shape(const Image& o) const {
    return rows == o.rows && cols == o.cols && channels == o.channels;
  }

  void check_finite(const std::string& what = "Image") const {
    for (double v : values) {
      if (!std::isfinite(v)) throw std::runtime_error(what + ": non-finite value");
    }
  }
};

}  // namespace ck

#endif  // CK_IMAGE_HPP
