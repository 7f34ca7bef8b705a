#ifndef CK_TENSOR4_HPP
#define CK_TENSOR4_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ck/image.hpp"

namespace ck {

// Dense order-4 kernel tensor indexed (i, j, i', j') over [P]x[Q]x[P]x[Q].
// Storage is row-major with j' fastest, i.e. a (PQ) x (PQ) matrix over
// flattened positions p = i*Q + j. The layer recursions stream over the
// contiguous (i', j') block for each fixed (i, j).
template <typename S>
struct Tensor4T {
  int rows = 0;  // P
  int cols = 0;  // Q
  std::vector<S> v;

  Tensor4T() = default;
  Tensor4T(int p, int q) : rows(p), cols(q) {
    if (p < 1 || q < 1) throw std::invalid_argument("Tensor4: dimensions must be >= 1");
    v.assign(static_cast<size_t>(p) * q * p * q, S(0));
  }

  int positions() const { return rows * cols; }

  size_t idx(int i, int j, int ip, int jp) const {
    return (static_cast<size_t>(i * cols + j) * rows + ip) * cols + jp;
  }
  S at(int i, int j, int ip, int jp) const { return v[idx(i, j, ip, jp)]; }
  S& at(int i, int j, int ip, int jp) { return v[idx(i, j, ip, jp)]; }

  bool same_shape(const Tensor4T& o) const { return rows == o.rows && cols == o.cols; }
};

using Tensor4 = Tensor4T<double>;

// tr(T) = sum_{i,j} T[i,j,i,j].
template <typename S>
S trace4(const Tensor4T<S>& t) {
  S acc = S(0);
  const int pq = t.positions();
  for (int p = 0; p < pq; ++p) acc += t.v[static_cast<size_t>(p) * pq + p];
  return acc;
}

inline void require_odd_filter(int q) {
  if (q < 1 || q % 2 == 0) throw std::invalid_argument("filter size must be odd and positive");
}

// Sum of T over the convolution-window offset diagonal:
//   sum_{a,b in [-(q-1)/2,(q-1)/2]} T[i+a, j+b, i'+a, j'+b]
// with out-of-range indices wrapped (Circular) or dropped (Zero).
// Indices here are 0-based; resolve_index does the boundary work.
template <typename S>
S patch_trace(const Tensor4T<S>& t, int i, int j, int ip, int jp, int q, PaddingScheme scheme) {
  require_odd_filter(q);
  const int r = (q - 1) / 2;
  S acc = S(0);
  for (int a = -r; a <= r; ++a) {
    ResolvedIndex ri = resolve_index(i + a + 1, t.rows, scheme);
    ResolvedIndex rip = resolve_index(ip + a + 1, t.rows, scheme);
    if (!ri.in_range || !rip.in_range) continue;
    for (int b = -r; b <= r; ++b) {
      ResolvedIndex rj = resolve_index(j + b + 1, t.cols, scheme);
      ResolvedIndex rjp = resolve_index(jp + b + 1, t.cols, scheme);
      if (!rj.in_range || !rjp.in_range) continue;
      acc += t.at(ri.index - 1, rj.index - 1, rip.index - 1, rjp.index - 1);
    }
  }
  return acc;
}

// Applies patch_trace at every (i, j, i', j') in one pass. This is the
// reduction that dominates DP runtime, so it is organized as q^2 shifted
// accumulations with per-offset index maps instead of per-entry branching.
template <typename S>
Tensor4T<S> patch_trace_all(const Tensor4T<S>& t, int q, PaddingScheme scheme) {
  require_odd_filter(q);
  const int P = t.rows, Q = t.cols, pq = P * Q;
  const int r = (q - 1) / 2;
  Tensor4T<S> out(P, Q);

  if (scheme == PaddingScheme::Zero) {
    for (int a = -r; a <= r; ++a) {
      const int ilo = a < 0 ? -a : 0;
      const int ihi = a > 0 ? P - 1 - a : P - 1;
      for (int b = -r; b <= r; ++b) {
        const int jlo = b < 0 ? -b : 0;
        const int jhi = b > 0 ? Q - 1 - b : Q - 1;
        for (int i = ilo; i <= ihi; ++i) {
          for (int j = jlo; j <= jhi; ++j) {
            S* dst = &out.v[static_cast<size_t>(i * Q + j) * pq];
            const S* src = &t.v[static_cast<size_t>((i + a) * Q + (j + b)) * pq];
            for (int ipp = ilo; ipp <= ihi; ++ipp) {
              const size_t drow = static_cast<size_t>(ipp) * Q;
              const size_t srow = static_cast<size_t>(ipp + a) * Q;
              for (int jpp = jlo; jpp <= jhi; ++jpp) {
                dst[drow + jpp] += src[srow + (jpp + b)];
              }
            }
          }
        }
      }
    }
    return out;
  }

  // Circular: precompute wrapped row/col maps per offset.
  std::vector<int> rmap(P), cmap(Q);
  for (int a = -r; a <= r; ++a) {
    for (int i = 0; i < P; ++i) rmap[i] = wrap0(i + a, P);
    for (int b = -r; b <= r; ++b) {
      for (int j = 0; j < Q; ++j) cmap[j] = wrap0(j + b, Q);
      for (int i = 0; i < P; ++i) {
        for (int j = 0; j < Q; ++j) {
          S* dst = &out.v[static_cast<size_t>(i * Q + j) * pq];
          const S* src = &t.v[static_cast<size_t>(rmap[i] * Q + cmap[j]) * pq];
          for (int ipp = 0; ipp < P; ++ipp) {
            const size_t drow = static_cast<size_t>(ipp) * Q;
            const size_t srow = static_cast<size_t>(rmap[ipp]) * Q;
            for (int jpp = 0; jpp < Q; ++jpp) {
              dst[drow + jpp] += src[srow + cmap[jpp]];
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace ck

#endif  // CK_TENSOR4_HPP
