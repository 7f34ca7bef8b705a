#ifndef CK_KERNEL_DP_HPP
#define CK_KERNEL_DP_HPP

#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "ck/arccos.hpp"
#include "ck/image.hpp"
#include "ck/tensor4.hpp"

namespace ck {

enum class KernelFamily { CNNGP, CNTK };

inline const char* family_name(KernelFamily f) {
  return f == KernelFamily::CNNGP ? "cnn-gp" : "cntk";
}

struct KernelConfig {
  int depth = 1;           // number of layer updates, >= 1
  int filter_size = 3;     // q, odd
  double bias_scale = 0.0; // gamma
  PaddingScheme padding = PaddingScheme::Zero;
  KernelFamily family = KernelFamily::CNNGP;

  void validate() const {
    if (depth < 1) throw std::invalid_argument("KernelConfig: depth must be >= 1");
    require_odd_filter(filter_size);
    if (bias_scale < 0.0) throw std::invalid_argument("KernelConfig: bias_scale must be >= 0");
  }
};

// Layerwise state for one image pair. The self tensors must be carried in
// full: the diagonal of layer h depends on off-diagonal entries of layer
// h-1 through the patch trace. theta_xy is present only for CNTK.
template <typename S>
struct PairStateT {
  Tensor4T<S> sigma_xy, sigma_xx, sigma_yy;
  Tensor4T<S> theta_xy;
  bool has_theta = false;
};

using PairState = PairStateT<double>;

// Per-image cache for the pairwise driver: the layer-h Gaussian variances
// [Sigma^(h)(x,x)]_{p,p} for h = 0 .. depth-1. Building it costs one self
// DP per image; every pair involving the image then reuses it.
template <typename S>
struct SelfStateT {
  std::vector<std::vector<S>> layer_diag;
};

using SelfState = SelfStateT<double>;

namespace dp_detail {

template <typename S>
std::vector<S> diag_of(const Tensor4T<S>& t) {
  const int pq = t.positions();
  std::vector<S> d(pq);
  for (int p = 0; p < pq; ++p) d[p] = t.v[static_cast<size_t>(p) * pq + p];
  return d;
}

// K and Kdot entries from the layer's bivariate Gaussians:
//   K    = (c_sigma/q^2) E[relu(u) relu(v)]
//   Kdot = (c_sigma/q^2) E[relu'(u) relu'(v)]
// with Var u / Var v taken from the two self diagonals and Cov(u,v) from
// the cross tensor. kdot may be null (CNN-GP needs only K).
template <typename S>
void layer_expectations(const std::vector<S>& var_row, const std::vector<S>& var_col,
                        const Tensor4T<S>& cross, S prefactor,
                        Tensor4T<S>* k, Tensor4T<S>* kdot) {
  const int pq = cross.positions();
  for (int p = 0; p < pq; ++p) {
    const S a = var_row[p];
    const S* src = &cross.v[static_cast<size_t>(p) * pq];
    S* kk = &k->v[static_cast<size_t>(p) * pq];
    S* kd = kdot ? &kdot->v[static_cast<size_t>(p) * pq] : nullptr;
    for (int pp = 0; pp < pq; ++pp) {
      const S d = var_col[pp];
      const S b = src[pp];
      kk[pp] = prefactor * detail::relu_prod_raw(a, d, b);
      if (kd) kd[pp] = prefactor * detail::relu_deriv_prod_raw(a, d, b);
    }
  }
}

template <typename S>
void add_scalar(Tensor4T<S>& t, S c) {
  if (c == S(0)) return;
  for (S& x : t.v) x += c;
}

// kdot .* theta + k, elementwise.
template <typename S>
Tensor4T<S> fma_tensors(const Tensor4T<S>& kdot, const Tensor4T<S>& theta, const Tensor4T<S>& k) {
  Tensor4T<S> out(k.rows, k.cols);
  for (size_t n = 0; n < out.v.size(); ++n) out.v[n] = kdot.v[n] * theta.v[n] + k.v[n];
  return out;
}

// Flattened (PQ x C) position-by-channel view of an image in scalar S.
template <typename S>
std::vector<S> flatten_positions(const Image& x) {
  std::vector<S> m(x.values.size());
  for (size_t n = 0; n < m.size(); ++n) m[n] = static_cast<S>(x.values[n]);
  return m;
}

}  // namespace dp_detail

// Layer-0 tensor: patch trace of the channel-summed cross product
// sum_c x_c (x) y_c, plus gamma^2. The channel contraction is done once
// into a PQ x PQ matrix before the patch trace.
template <typename S>
Tensor4T<S> sigma0T(const Image& x, const Image& y, const KernelConfig& cfg) {
  cfg.validate();
  if (!x.same_shape(y)) throw std::invalid_argument("sigma0: image shapes differ");
  const int pq = static_cast<int>(x.pixel_count());
  const int c = x.channels;

  Tensor4T<S> m(x.rows, x.cols);
  const auto xf = dp_detail::flatten_positions<S>(x);
  const auto yf = dp_detail::flatten_positions<S>(y);
  if (c > 16) {
    // Wide-channel inputs (patch-featurized images): one GEMM instead of
    // PQ^2 short dot products. Eigen runs unthreaded here, so the result
    // does not depend on the worker-pool size.
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> xm(xf.data(), pq, c);
    Eigen::Map<const Mat> ym(yf.data(), pq, c);
    Eigen::Map<Mat>(m.v.data(), pq, pq).noalias() = xm * ym.transpose();
  } else {
    for (int p = 0; p < pq; ++p) {
      const S* xa = &xf[static_cast<size_t>(p) * c];
      S* dst = &m.v[static_cast<size_t>(p) * pq];
      for (int pp = 0; pp < pq; ++pp) {
        const S* yb = &yf[static_cast<size_t>(pp) * c];
        S acc = S(0);
        for (int ch = 0; ch < c; ++ch) acc += xa[ch] * yb[ch];
        dst[pp] = acc;
      }
    }
  }

  Tensor4T<S> out = patch_trace_all(m, cfg.filter_size, cfg.padding);
  const S g2 = static_cast<S>(cfg.bias_scale * cfg.bias_scale);
  dp_detail::add_scalar(out, g2);
  return out;
}

inline Tensor4 sigma0(const Image& x, const Image& y, const KernelConfig& cfg) {
  return sigma0T<double>(x, y, cfg);
}

template <typename S>
PairStateT<S> make_initial_state(const Image& x, const Image& y, const KernelConfig& cfg) {
  PairStateT<S> st;
  st.sigma_xy = sigma0T<S>(x, y, cfg);
  st.sigma_xx = sigma0T<S>(x, x, cfg);
  st.sigma_yy = sigma0T<S>(y, y, cfg);
  if (cfg.family == KernelFamily::CNTK) {
    st.theta_xy = st.sigma_xy;
    st.has_theta = true;
  }
  return st;
}

// One layer of the recursion. Non-last layers patch-trace and add gamma^2;
// the last layer emits the expectation tensors as-is (the readout consumes
// the activations of the final convolution directly, so there is no
// further window aggregation and no bias term).
template <typename S>
void dp_layer(PairStateT<S>& st, const KernelConfig& cfg, bool is_last) {
  using namespace dp_detail;
  cfg.validate();
  const int q = cfg.filter_size;
  const S pref = static_cast<S>(kCSigma) / static_cast<S>(q * q);
  const S g2 = static_cast<S>(cfg.bias_scale * cfg.bias_scale);
  const bool cntk = cfg.family == KernelFamily::CNTK;

  const auto dx = diag_of(st.sigma_xx);
  const auto dy = diag_of(st.sigma_yy);

  Tensor4T<S> k_xy(st.sigma_xy.rows, st.sigma_xy.cols), kd_xy;
  if (cntk) kd_xy = Tensor4T<S>(st.sigma_xy.rows, st.sigma_xy.cols);
  layer_expectations(dx, dy, st.sigma_xy, pref, &k_xy, cntk ? &kd_xy : nullptr);

  Tensor4T<S> k_xx(st.sigma_xx.rows, st.sigma_xx.cols);
  layer_expectations(dx, dx, st.sigma_xx, pref, &k_xx, static_cast<Tensor4T<S>*>(nullptr));
  Tensor4T<S> k_yy(st.sigma_yy.rows, st.sigma_yy.cols);
  layer_expectations(dy, dy, st.sigma_yy, pref, &k_yy, static_cast<Tensor4T<S>*>(nullptr));

  Tensor4T<S> theta_in;
  if (cntk) theta_in = fma_tensors(kd_xy, st.theta_xy, k_xy);

  if (is_last) {
    st.sigma_xy = std::move(k_xy);
    st.sigma_xx = std::move(k_xx);
    st.sigma_yy = std::move(k_yy);
    if (cntk) st.theta_xy = std::move(theta_in);
    return;
  }
  st.sigma_xy = patch_trace_all(k_xy, q, cfg.padding);
  add_scalar(st.sigma_xy, g2);
  st.sigma_xx = patch_trace_all(k_xx, q, cfg.padding);
  add_scalar(st.sigma_xx, g2);
  st.sigma_yy = patch_trace_all(k_yy, q, cfg.padding);
  add_scalar(st.sigma_yy, g2);
  if (cntk) {
    st.theta_xy = patch_trace_all(theta_in, q, cfg.padding);
    add_scalar(st.theta_xy, g2);
  }
}

// Full DP for one pair: Sigma^(L) surrogate (CNN-GP) or Theta^(L) (CNTK),
// ready for a readout. Deterministic: fixed summation order throughout.
template <typename S>
Tensor4T<S> compute_pairT(const Image& x, const Image& y, const KernelConfig& cfg) {
  cfg.validate();
  PairStateT<S> st = make_initial_state<S>(x, y, cfg);
  for (int h = 1; h <= cfg.depth; ++h) dp_layer(st, cfg, h == cfg.depth);
  return cfg.family == KernelFamily::CNTK ? st.theta_xy : st.sigma_xy;
}

inline Tensor4 compute_pair(const Image& x, const Image& y, const KernelConfig& cfg) {
  return compute_pairT<double>(x, y, cfg);
}

// ---------------------------------------------------------------------------
// Cached driver. build_self_state runs the full self DP once per image and
// keeps the per-layer diagonals; run_pair_dp_cached then evolves only the
// cross tensor for each pair. `depths` must be ascending; the emitted tensor
// at depth d equals compute_pairT with cfg.depth = d. Arithmetic order is
// identical to the PairState path, so values match bit for bit.
// ---------------------------------------------------------------------------

template <typename S>
using DepthSink = std::function<void(int depth, const Tensor4T<S>& out)>;

template <typename S>
SelfStateT<S> build_self_state(const Image& x, const KernelConfig& cfg, int max_depth,
                               const std::vector<int>& emit_depths = {},
                               const DepthSink<S>& emit = nullptr) {
  using namespace dp_detail;
  cfg.validate();
  if (max_depth < 1) throw std::invalid_argument("build_self_state: max_depth must be >= 1");
  const int q = cfg.filter_size;
  const S pref = static_cast<S>(kCSigma) / static_cast<S>(q * q);
  const S g2 = static_cast<S>(cfg.bias_scale * cfg.bias_scale);
  const bool cntk = cfg.family == KernelFamily::CNTK;

  SelfStateT<S> self;
  self.layer_diag.reserve(max_depth);

  Tensor4T<S> sigma = sigma0T<S>(x, x, cfg);
  Tensor4T<S> theta;
  if (cntk) theta = sigma;
  self.layer_diag.push_back(diag_of(sigma));

  size_t next_emit = 0;
  for (int h = 1; h <= max_depth; ++h) {
    const auto& d = self.layer_diag.back();
    Tensor4T<S> k(sigma.rows, sigma.cols), kd;
    if (cntk) kd = Tensor4T<S>(sigma.rows, sigma.cols);
    layer_expectations(d, d, sigma, pref, &k, cntk ? &kd : nullptr);
    Tensor4T<S> theta_in;
    if (cntk) theta_in = fma_tensors(kd, theta, k);

    if (emit && next_emit < emit_depths.size() && emit_depths[next_emit] == h) {
      emit(h, cntk ? theta_in : k);
      ++next_emit;
    }
    if (h == max_depth) break;
    sigma = patch_trace_all(k, q, cfg.padding);
    add_scalar(sigma, g2);
    if (cntk) {
      theta = patch_trace_all(theta_in, q, cfg.padding);
      add_scalar(theta, g2);
    }
    self.layer_diag.push_back(diag_of(sigma));
  }
  return self;
}

template <typename S>
void run_pair_dp_cached(const Image& x, const Image& y,
                        const SelfStateT<S>& sx, const SelfStateT<S>& sy,
                        const KernelConfig& cfg, const std::vector<int>& emit_depths,
                        const DepthSink<S>& emit) {
  using namespace dp_detail;
  cfg.validate();
  if (emit_depths.empty()) return;
  const int max_depth = emit_depths.back();
  if (static_cast<int>(sx.layer_diag.size()) < max_depth ||
      static_cast<int>(sy.layer_diag.size()) < max_depth)
    throw std::invalid_argument("run_pair_dp_cached: self states too shallow");
  const int q = cfg.filter_size;
  const S pref = static_cast<S>(kCSigma) / static_cast<S>(q * q);
  const S g2 = static_cast<S>(cfg.bias_scale * cfg.bias_scale);
  const bool cntk = cfg.family == KernelFamily::CNTK;

  Tensor4T<S> cross = sigma0T<S>(x, y, cfg);
  Tensor4T<S> theta;
  if (cntk) theta = cross;

  size_t next_emit = 0;
  for (int h = 1; h <= max_depth; ++h) {
    const auto& dx = sx.layer_diag[h - 1];
    const auto& dy = sy.layer_diag[h - 1];
    Tensor4T<S> k(cross.rows, cross.cols), kd;
    if (cntk) kd = Tensor4T<S>(cross.rows, cross.cols);
    layer_expectations(dx, dy, cross, pref, &k, cntk ? &kd : nullptr);
    Tensor4T<S> theta_in;
    if (cntk) theta_in = fma_tensors(kd, theta, k);

    if (next_emit < emit_depths.size() && emit_depths[next_emit] == h) {
      emit(h, cntk ? theta_in : k);
      ++next_emit;
      if (next_emit == emit_depths.size()) return;
    }
    cross = patch_trace_all(k, q, cfg.padding);
    add_scalar(cross, g2);
    if (cntk) {
      theta = patch_trace_all(theta_in, q, cfg.padding);
      add_scalar(theta, g2);
    }
  }
}

}  // namespace ck

#endif  // CK_KERNEL_DP_HPP
