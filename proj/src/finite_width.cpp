#include "ck/finite_width.hpp"

#include <omp.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <mutex>
#include <stdexcept>

#include "ck/readout.hpp"

namespace ck {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// The convolution is organized as q^2 GEMMs on position-major activation
// matrices A (PQ x C): for each window offset, gather the shifted rows of A
// and multiply by that offset's (C_in x C_out) weight slice. conv_w[h] is
// laid out offset-major: ((u*q + v)*C_in + alpha)*C_out + beta.
struct Geometry {
  int P, Q, q, r, pq;
  std::vector<std::vector<int>> shift;  // [q*q][pq]: source position or -1
};

Geometry geom(const CnnConfig& cfg, int rows, int cols) {
  Geometry g;
  g.P = rows;
  g.Q = cols;
  g.q = cfg.filter_size;
  g.r = (cfg.filter_size - 1) / 2;
  g.pq = rows * cols;
  g.shift.assign(static_cast<size_t>(g.q) * g.q, std::vector<int>(g.pq, -1));
  for (int u = 0; u < g.q; ++u)
    for (int v = 0; v < g.q; ++v) {
      auto& m = g.shift[u * g.q + v];
      for (int i = 0; i < g.P; ++i)
        for (int j = 0; j < g.Q; ++j) {
          const int si = i + u - g.r;
          const int sj = j + v - g.r;
          if (cfg.padding == PaddingScheme::Circular) {
            m[i * g.Q + j] = wrap0(si, g.P) * g.Q + wrap0(sj, g.Q);
          } else if (si >= 0 && si < g.P && sj >= 0 && sj < g.Q) {
            m[i * g.Q + j] = si * g.Q + sj;
          }
        }
    }
  return g;
}

void gather_rows(const Mat& a, const std::vector<int>& map, Mat& out) {
  out.resize(a.rows(), a.cols());
  for (int p = 0; p < a.rows(); ++p) {
    if (map[p] >= 0) out.row(p) = a.row(map[p]);
    else out.row(p).setZero();
  }
}

// (PQ x PQ) window-average operator; symmetric under both schemes.
Mat blur_operator(int rows, int cols, int c, PaddingScheme scheme) {
  const int pq = rows * cols;
  Mat b = Mat::Zero(pq, pq);
  const double inv = 1.0 / ((2.0 * c + 1.0) * (2.0 * c + 1.0));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      for (int di = -c; di <= c; ++di) {
        ResolvedIndex ri = resolve_index(i + di + 1, rows, scheme);
        if (!ri.in_range) continue;
        for (int dj = -c; dj <= c; ++dj) {
          ResolvedIndex rj = resolve_index(j + dj + 1, cols, scheme);
          if (!rj.in_range) continue;
          b(i * cols + j, (ri.index - 1) * cols + (rj.index - 1)) += inv;
        }
      }
  return b;
}

size_t head_size(const CnnConfig& cfg, const FwReadout& readout, int rows, int cols) {
  if (readout.kind == FwReadoutKind::GAP) return cfg.width;
  return static_cast<size_t>(cfg.width) * rows * cols;
}

struct ForwardTrace {
  std::vector<Mat> z, a;  // per layer, PQ x C
  Mat input;
};

double forward_impl(const CnnConfig& cfg, const FwReadout& readout, const CnnParams& params,
                    const Image& x, ForwardTrace* trace) {
  cfg.validate();
  const Geometry g = geom(cfg, x.rows, x.cols);
  const double scale = std::sqrt(kCSigma / (cfg.width * static_cast<double>(g.q * g.q)));

  // Image storage is already position-major with channel fastest.
  Mat cur = Eigen::Map<const Mat>(x.values.data(), g.pq, x.channels);
  if (trace) {
    trace->input = cur;
    trace->z.resize(cfg.depth);
    trace->a.resize(cfg.depth);
  }

  Mat shifted;
  for (int h = 0; h < cfg.depth; ++h) {
    const int cin = static_cast<int>(cur.cols());
    const int cout = cfg.width;
    Mat z(g.pq, cout);
    for (int p = 0; p < g.pq; ++p)
      for (int beta = 0; beta < cout; ++beta)
        z(p, beta) = cfg.bias_scale * params.conv_b[h][beta];
    for (int o = 0; o < g.q * g.q; ++o) {
      gather_rows(cur, g.shift[o], shifted);
      Eigen::Map<const Mat> w(params.conv_w[h].data() + static_cast<size_t>(o) * cin * cout,
                              cin, cout);
      z.noalias() += shifted * w;
    }
    Mat a = (z.array() > 0.0).select(scale * z.array(), 0.0);
    if (trace) {
      trace->z[h] = z;
      trace->a[h] = a;
    }
    cur = std::move(a);
  }

  if (readout.kind == FwReadoutKind::FC) {
    Eigen::Map<const Mat> w(params.head.data(), g.pq, cfg.width);
    return (w.array() * cur.array()).sum();
  }
  if (readout.kind == FwReadoutKind::GAP) {
    double f = 0.0;
    for (int beta = 0; beta < cfg.width; ++beta) f += params.head[beta] * cur.col(beta).sum();
    return f / static_cast<double>(g.pq);
  }
  Mat blurred = blur_operator(g.P, g.Q, readout.blur_radius, readout.blur_padding) * cur;
  Eigen::Map<const Mat> w(params.head.data(), g.pq, cfg.width);
  return (w.array() * blurred.array()).sum();
}

}  // namespace

CnnParams sample_cnn_params(const CnnConfig& cfg, int in_channels, int rows, int cols,
                            const FwReadout& readout, std::mt19937_64& rng) {
  cfg.validate();
  std::normal_distribution<double> gauss(0.0, 1.0);
  CnnParams p;
  p.conv_w.resize(cfg.depth);
  p.conv_b.resize(cfg.depth);
  int cin = in_channels;
  for (int h = 0; h < cfg.depth; ++h) {
    p.conv_w[h].resize(static_cast<size_t>(cfg.width) * cin * cfg.filter_size * cfg.filter_size);
    p.conv_b[h].resize(cfg.width);
    for (double& v : p.conv_w[h]) v = gauss(rng);
    for (double& v : p.conv_b[h]) v = gauss(rng);
    cin = cfg.width;
  }
  p.head.resize(head_size(cfg, readout, rows, cols));
  for (double& v : p.head) v = gauss(rng);
  return p;
}

double cnn_forward(const CnnConfig& cfg, const FwReadout& readout, const CnnParams& params,
                   const Image& x) {
  return forward_impl(cfg, readout, params, x, nullptr);
}

double cnn_forward_backward(const CnnConfig& cfg, const FwReadout& readout,
                            const CnnParams& params, const Image& x, CnnGrads& grads) {
  const Geometry g = geom(cfg, x.rows, x.cols);
  ForwardTrace trace;
  const double f = forward_impl(cfg, readout, params, x, &trace);
  const double scale = std::sqrt(kCSigma / (cfg.width * static_cast<double>(g.q * g.q)));

  grads.conv_w.assign(cfg.depth, {});
  grads.conv_b.assign(cfg.depth, {});
  for (int h = 0; h < cfg.depth; ++h) {
    grads.conv_w[h].assign(params.conv_w[h].size(), 0.0);
    grads.conv_b[h].assign(params.conv_b[h].size(), 0.0);
  }
  grads.head.assign(params.head.size(), 0.0);

  const Mat& act_last = trace.a[cfg.depth - 1];
  Mat dact(g.pq, cfg.width);
  if (readout.kind == FwReadoutKind::FC) {
    Eigen::Map<Mat>(grads.head.data(), g.pq, cfg.width) = act_last;
    dact = Eigen::Map<const Mat>(params.head.data(), g.pq, cfg.width);
  } else if (readout.kind == FwReadoutKind::GAP) {
    const double inv = 1.0 / static_cast<double>(g.pq);
    for (int beta = 0; beta < cfg.width; ++beta) {
      grads.head[beta] = act_last.col(beta).sum() * inv;
      dact.col(beta).setConstant(params.head[beta] * inv);
    }
  } else {
    Mat b = blur_operator(g.P, g.Q, readout.blur_radius, readout.blur_padding);
    Eigen::Map<Mat>(grads.head.data(), g.pq, cfg.width).noalias() = b * act_last;
    // blur is self-adjoint, so the pullback is another blur
    dact.noalias() = b * Eigen::Map<const Mat>(params.head.data(), g.pq, cfg.width);
  }

  Mat shifted, dshift;
  for (int h = cfg.depth - 1; h >= 0; --h) {
    const Mat& prev = h == 0 ? trace.input : trace.a[h - 1];
    const int cin = static_cast<int>(prev.cols());
    const Mat& z = trace.z[h];

    Mat dz = (z.array() > 0.0).select(scale * dact.array(), 0.0);

    for (int beta = 0; beta < cfg.width; ++beta)
      grads.conv_b[h][beta] = cfg.bias_scale * dz.col(beta).sum();

    Mat dprev;
    if (h > 0) dprev = Mat::Zero(g.pq, cin);
    for (int o = 0; o < g.q * g.q; ++o) {
      gather_rows(prev, g.shift[o], shifted);
      Eigen::Map<Mat> dw(grads.conv_w[h].data() + static_cast<size_t>(o) * cin * cfg.width,
                         cin, cfg.width);
      dw.noalias() += shifted.transpose() * dz;
      if (h > 0) {
        Eigen::Map<const Mat> w(params.conv_w[h].data() + static_cast<size_t>(o) * cin *
                                                              cfg.width,
                                cin, cfg.width);
        dshift.noalias() = dz * w.transpose();
        const auto& m = g.shift[o];
        for (int p = 0; p < g.pq; ++p)
          if (m[p] >= 0) dprev.row(m[p]) += dshift.row(p);
      }
    }
    if (h > 0) dact = std::move(dprev);
  }
  return f;
}

double grads_inner(const CnnGrads& a, const CnnGrads& b) {
  double acc = 0.0;
  for (size_t h = 0; h < a.conv_w.size(); ++h) {
    for (size_t n = 0; n < a.conv_w[h].size(); ++n) acc += a.conv_w[h][n] * b.conv_w[h][n];
    for (size_t n = 0; n < a.conv_b[h].size(); ++n) acc += a.conv_b[h][n] * b.conv_b[h][n];
  }
  for (size_t n = 0; n < a.head.size(); ++n) acc += a.head[n] * b.head[n];
  return acc;
}

double gradient_check(const CnnConfig& cfg, const FwReadout& readout, int in_channels,
                      int rows, int cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  CnnParams params = sample_cnn_params(cfg, in_channels, rows, cols, readout, rng);
  Image x(rows, cols, in_channels);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : x.values) v = gauss(rng);

  CnnGrads grads;
  cnn_forward_backward(cfg, readout, params, x, grads);

  double gmax = 0.0;
  auto track_max = [&](const std::vector<double>& v) {
    for (double g : v) gmax = std::max(gmax, std::abs(g));
  };
  for (int h = 0; h < cfg.depth; ++h) {
    track_max(grads.conv_w[h]);
    track_max(grads.conv_b[h]);
  }
  track_max(grads.head);

  double worst = 0.0;
  auto check_block = [&](std::vector<double>& theta, const std::vector<double>& analytic) {
    for (size_t n = 0; n < theta.size(); ++n) {
      const double orig = theta[n];
      const double h = 1e-5 * (1.0 + std::abs(orig));
      theta[n] = orig + h;
      const double fp = cnn_forward(cfg, readout, params, x);
      theta[n] = orig - h;
      const double fm = cnn_forward(cfg, readout, params, x);
      theta[n] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[n]), std::abs(fd), 1e-6 * gmax, 1e-12});
      worst = std::max(worst, std::abs(analytic[n] - fd) / denom);
    }
  };
  for (int h = 0; h < cfg.depth; ++h) {
    check_block(params.conv_w[h], grads.conv_w[h]);
    check_block(params.conv_b[h], grads.conv_b[h]);
  }
  check_block(params.head, grads.head);
  return worst;
}

namespace {

uint64_t splitmix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

McEstimate reduce_draws(const std::vector<double>& r) {
  McEstimate e;
  e.samples = static_cast<int>(r.size());
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= r.size();
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  e.value = mean;
  // delete-one jackknife of the mean reduces to the usual SEM
  e.stderr_ = r.size() > 1 ? std::sqrt(ss / (static_cast<double>(r.size()) *
                                             (static_cast<double>(r.size()) - 1.0)))
                           : 0.0;
  return e;
}

int resolve_threads(int threads) {
  if (threads > 0) return threads;
  if (const char* env = std::getenv("CONVKERN_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return omp_get_max_threads();
}

}  // namespace

McEstimate mc_cnngp(const Image& x, const Image& y, const CnnConfig& cfg,
                    const FwReadout& readout, int samples, uint64_t seed, int threads) {
  cfg.validate();
  if (samples < 1) throw std::invalid_argument("mc_cnngp: samples must be >= 1");
  if (!x.same_shape(y)) throw std::invalid_argument("mc_cnngp: image shapes differ");
  std::vector<double> draws(samples);
  const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
  for (int s = 0; s < samples; ++s) {
    std::mt19937_64 rng(splitmix64(seed ^ (0x5851F42D4C957F2DULL + s)));
    CnnParams params = sample_cnn_params(cfg, x.channels, x.rows, x.cols, readout, rng);
    const double fx = cnn_forward(cfg, readout, params, x);
    const double fy = cnn_forward(cfg, readout, params, y);
    draws[s] = fx * fy;
  }
  return reduce_draws(draws);
}

McEstimate mc_cntk(const Image& x, const Image& y, const CnnConfig& cfg,
                   const FwReadout& readout, int samples, uint64_t seed, int threads) {
  cfg.validate();
  if (samples < 1) throw std::invalid_argument("mc_cntk: samples must be >= 1");
  if (!x.same_shape(y)) throw std::invalid_argument("mc_cntk: image shapes differ");

  // one-time gradient self-check; a broken backward pass aborts every run
  static std::once_flag check_flag;
  static double check_err = 0.0;
  std::call_once(check_flag, [] {
    CnnConfig small;
    small.depth = 2;
    small.width = 4;
    small.filter_size = 3;
    small.bias_scale = 0.3;
    small.padding = PaddingScheme::Circular;
    check_err = gradient_check(small, FwReadout{FwReadoutKind::FC}, 2, 4, 4, 99);
  });
  if (check_err > 1e-5)
    throw std::runtime_error("mc_cntk: gradient self-check failed, max rel error " +
                             std::to_string(check_err));

  std::vector<double> draws(samples);
  const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
  for (int s = 0; s < samples; ++s) {
    std::mt19937_64 rng(splitmix64(seed ^ (0xDA3E39CB94B95BDBULL + s)));
    CnnParams params = sample_cnn_params(cfg, x.channels, x.rows, x.cols, readout, rng);
    CnnGrads gx, gy;
    cnn_forward_backward(cfg, readout, params, x, gx);
    cnn_forward_backward(cfg, readout, params, y, gy);
    draws[s] = grads_inner(gx, gy);
  }
  return reduce_draws(draws);
}

BBlurLapReport verify_bblur_lap(const Image& x, const Image& y, const KernelConfig& cfg, int c,
                                PaddingScheme pool_scheme, double tol) {
  KernelConfig kcfg = cfg;
  kcfg.family = KernelFamily::CNTK;
  Tensor4 theta = compute_pair(x, y, kcfg);
  Tensor4 blurred = box_blur_tensor4(theta, c, pool_scheme);
  BBlurLapReport rep;
  rep.blur_trace = trace4(blurred);
  rep.lap_value = readout_lap(theta, lap_weights(theta.rows, theta.cols, c, pool_scheme));
  rep.abs_diff = std::abs(rep.blur_trace - rep.lap_value);
  rep.tol = tol;
  rep.pass = rep.abs_diff <= tol;
  return rep;
}

}  // namespace ck
