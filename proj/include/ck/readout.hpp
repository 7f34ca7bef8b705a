#ifndef CK_READOUT_HPP
#define CK_READOUT_HPP

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "ck/tensor4.hpp"

namespace ck {

enum class ReadoutKind { FC, GAP, LAP };

struct ReadoutSpec {
  ReadoutKind kind = ReadoutKind::FC;
  int lap_radius = 0;  // c >= 0, LAP only
  PaddingScheme lap_padding = PaddingScheme::Zero;

  void validate() const {
    if (kind == ReadoutKind::LAP && lap_radius < 0)
      throw std::invalid_argument("ReadoutSpec: LAP radius must be >= 0");
  }
  std::string name() const {
    switch (kind) {
      case ReadoutKind::FC: return "fc";
      case ReadoutKind::GAP: return "gap";
      default: return "lap(c=" + std::to_string(lap_radius) + "," + padding_name(lap_padding) + ")";
    }
  }
};

// tr(T): no pooling, fully-connected readout.
template <typename S>
S readout_fc(const Tensor4T<S>& t) {
  return trace4(t);
}

// Mean of all P^2 Q^2 entries: global average pooling readout.
template <typename S>
S readout_gap(const Tensor4T<S>& t) {
  S acc = S(0);
  for (S x : t.v) acc += x;
  const S n = static_cast<S>(t.positions()) * static_cast<S>(t.positions());
  return acc / n;
}

// Separable closed-form weights for the local-average-pooling readout
//   (2c+1)^-4 * sum_{offsets in [-c,c]^4} sum_{i,j} T[i+di, j+dj, i+di', j+dj'].
// The (base position, offset pair) multiplicity factorizes per axis:
//   weight(i,j,i',j') = scale * u_row(i,i') * u_col(j,j').
// Only the two axis tables are stored; the full P^2 Q^2 weight tensor is
// never materialized.
struct LapWeights {
  int rows = 0, cols = 0, radius = 0;
  PaddingScheme padding = PaddingScheme::Zero;
  double scale = 1.0;          // (2c+1)^-4
  std::vector<double> u_row;   // rows x rows multiplicity table
  std::vector<double> u_col;   // cols x cols

  double row_u(int i, int ip) const { return u_row[static_cast<size_t>(i) * rows + ip]; }
  double col_u(int j, int jp) const { return u_col[static_cast<size_t>(j) * cols + jp]; }
};

namespace readout_detail {

// Per-axis multiplicity: number of (base t, offset pair) combinations that
// land on (i, i'). Zero padding clips to the axis; circular counts offset
// pairs by residue of i - i'.
inline std::vector<double> axis_multiplicity(int extent, int c, PaddingScheme scheme) {
  std::vector<double> u(static_cast<size_t>(extent) * extent, 0.0);
  if (scheme == PaddingScheme::Zero) {
    for (int i = 0; i < extent; ++i) {
      for (int ip = 0; ip < extent; ++ip) {
        const int lo = std::max({0, i - c, ip - c});
        const int hi = std::min({extent - 1, i + c, ip + c});
        u[static_cast<size_t>(i) * extent + ip] = hi >= lo ? hi - lo + 1 : 0;
      }
    }
    return u;
  }
  std::vector<double> by_residue(extent, 0.0);
  for (int d1 = -c; d1 <= c; ++d1)
    for (int d2 = -c; d2 <= c; ++d2) by_residue[wrap0(d1 - d2, extent)] += 1.0;
  for (int i = 0; i < extent; ++i)
    for (int ip = 0; ip < extent; ++ip)
      u[static_cast<size_t>(i) * extent + ip] = by_residue[wrap0(i - ip, extent)];
  return u;
}

}  // namespace readout_detail

inline LapWeights lap_weights(int rows, int cols, int c, PaddingScheme scheme) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("lap_weights: bad extent");
  if (c < 0) throw std::invalid_argument("lap_weights: radius must be >= 0");
  LapWeights w;
  w.rows = rows;
  w.cols = cols;
  w.radius = c;
  w.padding = scheme;
  const double m = 2.0 * c + 1.0;
  w.scale = 1.0 / (m * m * m * m);
  w.u_row = readout_detail::axis_multiplicity(rows, c, scheme);
  w.u_col = readout_detail::axis_multiplicity(cols, c, scheme);
  return w;
}

// scale * sum u_row(i,i') u_col(j,j') T[i,j,i',j'].
template <typename S>
S readout_lap(const Tensor4T<S>& t, const LapWeights& w) {
  if (t.rows != w.rows || t.cols != w.cols)
    throw std::invalid_argument("readout_lap: tensor/weight shape mismatch");
  const int P = t.rows, Q = t.cols;
  S acc = S(0);
  for (int i = 0; i < P; ++i) {
    for (int j = 0; j < Q; ++j) {
      const S* blk = &t.v[static_cast<size_t>(i * Q + j) * P * Q];
      const double* ur = &w.u_row[static_cast<size_t>(i) * P];
      S entry = S(0);
      for (int ip = 0; ip < P; ++ip) {
        const double* uc = &w.u_col[static_cast<size_t>(j) * Q];
        S inner = S(0);
        for (int jp = 0; jp < Q; ++jp) inner += static_cast<S>(uc[jp]) * blk[ip * Q + jp];
        entry += static_cast<S>(ur[ip]) * inner;
      }
      acc += entry;
    }
  }
  return acc * static_cast<S>(w.scale);
}

template <typename S>
S apply_readout(const Tensor4T<S>& t, const ReadoutSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case ReadoutKind::FC: return readout_fc(t);
    case ReadoutKind::GAP: return readout_gap(t);
    default: return readout_lap(t, lap_weights(t.rows, t.cols, spec.lap_radius, spec.lap_padding));
  }
}

// Box blur applied to both index pairs of an order-4 tensor: each side is a
// (2c+1)-window average under the given padding. Used to check that the
// blurred tensor's trace reproduces the LAP readout.
template <typename S>
Tensor4T<S> box_blur_tensor4(const Tensor4T<S>& t, int c, PaddingScheme scheme) {
  if (c < 0) throw std::invalid_argument("box_blur_tensor4: radius must be >= 0");
  const int P = t.rows, Q = t.cols;
  const S inv = S(1) / static_cast<S>((2 * c + 1) * (2 * c + 1));
  // blur over (i, j)
  Tensor4T<S> half(P, Q);
  for (int i = 0; i < P; ++i)
    for (int j = 0; j < Q; ++j) {
      S* dst = &half.v[static_cast<size_t>(i * Q + j) * P * Q];
      for (int di = -c; di <= c; ++di) {
        ResolvedIndex ri = resolve_index(i + di + 1, P, scheme);
        if (!ri.in_range) continue;
        for (int dj = -c; dj <= c; ++dj) {
          ResolvedIndex rj = resolve_index(j + dj + 1, Q, scheme);
          if (!rj.in_range) continue;
          const S* src = &t.v[static_cast<size_t>((ri.index - 1) * Q + (rj.index - 1)) * P * Q];
          for (int n = 0; n < P * Q; ++n) dst[n] += src[n];
        }
      }
      for (int n = 0; n < P * Q; ++n) dst[n] *= inv;
    }
  // blur over (i', j')
  Tensor4T<S> out(P, Q);
  for (int p = 0; p < P * Q; ++p) {
    const S* src = &half.v[static_cast<size_t>(p) * P * Q];
    S* dst = &out.v[static_cast<size_t>(p) * P * Q];
    for (int ip = 0; ip < P; ++ip)
      for (int jp = 0; jp < Q; ++jp) {
        S acc = S(0);
        for (int di = -c; di <= c; ++di) {
          ResolvedIndex ri = resolve_index(ip + di + 1, P, scheme);
          if (!ri.in_range) continue;
          for (int dj = -c; dj <= c; ++dj) {
            ResolvedIndex rj = resolve_index(jp + dj + 1, Q, scheme);
            if (!rj.in_range) continue;
            acc += src[(ri.index - 1) * Q + (rj.index - 1)];
          }
        }
        dst[ip * Q + jp] = acc * inv;
      }
  }
  return out;
}

}  // namespace ck

#endif  // CK_READOUT_HPP
