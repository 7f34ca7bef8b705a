#include "ck/regression.hpp"

#include <omp.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ck {

PreparedReadouts::PreparedReadouts(const std::vector<ReadoutSpec>& rs, int rows, int cols) {
  specs = rs;
  weights.resize(rs.size());
  for (size_t i = 0; i < rs.size(); ++i) {
    rs[i].validate();
    if (rs[i].kind == ReadoutKind::LAP)
      weights[i] = lap_weights(rows, cols, rs[i].lap_radius, rs[i].lap_padding);
  }
}

double PreparedReadouts::apply(const Tensor4& t, size_t idx) const {
  const ReadoutSpec& s = specs[idx];
  switch (s.kind) {
    case ReadoutKind::FC: return readout_fc(t);
    case ReadoutKind::GAP: return readout_gap(t);
    default: return readout_lap(t, *weights[idx]);
  }
}

namespace {

int resolve_threads(int threads) {
  if (threads > 0) return threads;
  if (const char* env = std::getenv("CONVKERN_THREADS")) {
    int t = std::atoi(env);
    if (t > 0) return t;
  }
  return omp_get_max_threads();
}

std::vector<int> default_depths(const KernelConfig& cfg) { return {cfg.depth}; }

}  // namespace

std::vector<SelfState> build_self_states(const std::vector<Image>& images,
                                         const KernelConfig& cfg, int max_depth, int threads) {
  cfg.validate();
  if (max_depth <= 0) max_depth = cfg.depth;
  const int nthreads = resolve_threads(threads);
  std::vector<SelfState> out(images.size());
  std::atomic<bool> failed{false};
  std::string error_msg;

#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
  for (size_t i = 0; i < images.size(); ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      out[i] = build_self_state<double>(images[i], cfg, max_depth);
    } catch (const std::exception& e) {
#pragma omp critical
      {
        failed = true;
        error_msg = "self DP failed for image " + std::to_string(i) + ": " + e.what();
      }
    }
  }
  if (failed) throw std::runtime_error(error_msg);
  return out;
}

std::vector<std::vector<double>> pair_value_grid(const Image& x, const Image& y,
                                                 const SelfState& sx, const SelfState& sy,
                                                 const KernelConfig& cfg,
                                                 const std::vector<int>& depths,
                                                 const PreparedReadouts& readouts) {
  std::vector<std::vector<double>> out(depths.size(), std::vector<double>(readouts.size(), 0.0));
  size_t depth_pos = 0;
  run_pair_dp_cached<double>(x, y, sx, sy, cfg, depths,
                             [&](int /*depth*/, const Tensor4& t) {
                               for (size_t r = 0; r < readouts.size(); ++r)
                                 out[depth_pos][r] = readouts.apply(t, r);
                               ++depth_pos;
                             });
  return out;
}

namespace {

// Shared implementation for the symmetric and rectangular drivers. Work
// items are (row, col) index pairs; each writes only its own output cells.
std::vector<std::vector<Eigen::MatrixXd>> kernel_grid_impl(
    const std::vector<Image>& rows_images, const std::vector<Image>& cols_images, bool symmetric,
    const KernelConfig& cfg, std::vector<int> depths, const std::vector<ReadoutSpec>& readouts,
    int threads, const ProgressFn& progress) {
  cfg.validate();
  if (depths.empty()) depths = default_depths(cfg);
  for (size_t i = 1; i < depths.size(); ++i)
    if (depths[i] <= depths[i - 1]) throw std::invalid_argument("depths must be ascending");
  if (rows_images.empty() || cols_images.empty())
    throw std::invalid_argument("kernel grid: empty image list");
  const int max_depth = depths.back();
  const int nthreads = resolve_threads(threads);

  const Image& probe = rows_images[0];
  PreparedReadouts prepared(readouts, probe.rows, probe.cols);

  std::vector<SelfState> row_selfs = build_self_states(rows_images, cfg, max_depth, nthreads);
  std::vector<SelfState> col_selfs;
  const std::vector<SelfState>* col_selfs_ptr = &row_selfs;
  if (!symmetric) {
    col_selfs = build_self_states(cols_images, cfg, max_depth, nthreads);
    col_selfs_ptr = &col_selfs;
  }

  const size_t nr = rows_images.size();
  const size_t nc = symmetric ? nr : cols_images.size();
  std::vector<std::vector<Eigen::MatrixXd>> out(
      depths.size(), std::vector<Eigen::MatrixXd>(readouts.size()));
  for (auto& per_depth : out)
    for (auto& m : per_depth) m = Eigen::MatrixXd::Zero(nr, nc);

  std::vector<std::pair<size_t, size_t>> pairs;
  if (symmetric) {
    for (size_t i = 0; i < nr; ++i)
      for (size_t j = i; j < nr; ++j) pairs.emplace_back(i, j);
  } else {
    for (size_t i = 0; i < nr; ++i)
      for (size_t j = 0; j < nc; ++j) pairs.emplace_back(i, j);
  }

  std::atomic<size_t> done{0};
  std::atomic<bool> failed{false};
  std::string error_msg;

#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
  for (size_t t = 0; t < pairs.size(); ++t) {
    if (failed.load(std::memory_order_relaxed)) continue;
    const auto [i, j] = pairs[t];
    try {
      auto vals = pair_value_grid(rows_images[i], symmetric ? rows_images[j] : cols_images[j],
                                  row_selfs[i], (*col_selfs_ptr)[j], cfg, depths, prepared);
      for (size_t d = 0; d < depths.size(); ++d)
        for (size_t r = 0; r < readouts.size(); ++r) {
          out[d][r](i, j) = vals[d][r];
          if (symmetric) out[d][r](j, i) = vals[d][r];
        }
    } catch (const std::exception& e) {
#pragma omp critical
      {
        failed = true;
        error_msg = "pair DP failed for pair (" + std::to_string(i) + ", " + std::to_string(j) +
                    "): " + e.what();
      }
    }
    const size_t k = ++done;
    if (progress && (k % 256 == 0 || k == pairs.size())) {
#pragma omp critical
      progress(k, pairs.size());
    }
  }
  if (failed) throw std::runtime_error(error_msg);
  return out;
}

}  // namespace

std::vector<std::vector<Eigen::MatrixXd>> symmetric_kernel_grid(
    const std::vector<Image>& images, const KernelConfig& cfg, const std::vector<int>& depths,
    const std::vector<ReadoutSpec>& readouts, int threads, const ProgressFn& progress) {
  return kernel_grid_impl(images, images, true, cfg, depths, readouts, threads, progress);
}

std::vector<std::vector<Eigen::MatrixXd>> rect_kernel_grid(
    const std::vector<Image>& rows_images, const std::vector<Image>& cols_images,
    const KernelConfig& cfg, const std::vector<int>& depths,
    const std::vector<ReadoutSpec>& readouts, int threads, const ProgressFn& progress) {
  return kernel_grid_impl(rows_images, cols_images, false, cfg, depths, readouts, threads,
                          progress);
}

KernelMatrix assemble_kernel_matrix(const LabeledDataset& d, const KernelConfig& cfg,
                                    const ReadoutSpec& readout, int threads,
                                    const ProgressFn& progress) {
  d.validate();
  if (d.size() == 0) throw std::invalid_argument("assemble_kernel_matrix: empty dataset");
  auto grid = symmetric_kernel_grid(d.images, cfg, {cfg.depth}, {readout}, threads, progress);
  Eigen::MatrixXd raw = std::move(grid[0][0]);

  const int n = static_cast<int>(d.size());
  KernelMatrix k;
  k.n = n;
  k.labels = d.labels;
  k.class_count = d.class_count;
  k.self_values.resize(n);
  for (int i = 0; i < n; ++i) {
    k.self_values[i] = raw(i, i);
    if (!(raw(i, i) > 0.0))
      throw std::runtime_error("assemble_kernel_matrix: non-positive self kernel at index " +
                               std::to_string(i));
  }
  k.values = Eigen::MatrixXd(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      k.values(i, j) = raw(i, j) / std::sqrt(k.self_values[i] * k.self_values[j]);
    k.values(i, i) = 1.0;
  }
  return k;
}

namespace {

Eigen::MatrixXd one_hot(const std::vector<int>& labels, int class_count) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(labels.size(), class_count);
  for (size_t i = 0; i < labels.size(); ++i) y(static_cast<int>(i), labels[i]) = 1.0;
  return y;
}

}  // namespace

RegressionModel krr_fit(const KernelMatrix& k, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("krr_fit: lambda must be >= 0");
  if (k.n <= 0 || k.values.rows() != k.n) throw std::invalid_argument("krr_fit: bad matrix");
  Eigen::MatrixXd y = one_hot(k.labels, k.class_count);
  Eigen::MatrixXd a = k.values + lambda * Eigen::MatrixXd::Identity(k.n, k.n);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  RegressionModel model;
  model.lambda = lambda;
  model.normalization = k.self_values;
  model.alpha = ldlt.solve(y);

  const double resid = (a * model.alpha - y).norm();
  const double ynorm = y.norm();
  if (!(resid <= 1e-8 * std::max(ynorm, 1e-300)) || !model.alpha.allFinite()) {
    const auto dvec = ldlt.vectorD();
    const double dmax = dvec.cwiseAbs().maxCoeff();
    const double dmin = dvec.cwiseAbs().minCoeff();
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "krr_fit: factorization failed (residual %.3e, |D| condition estimate %.3e)",
                  resid, dmin > 0 ? dmax / dmin : std::numeric_limits<double>::infinity());
    throw std::runtime_error(buf);
  }
  return model;
}

Prediction krr_predict(const RegressionModel& model, const Eigen::MatrixXd& k_cross) {
  if (k_cross.cols() != model.alpha.rows())
    throw std::invalid_argument("krr_predict: cross-kernel width != training size");
  Prediction p;
  p.scores = k_cross * model.alpha;
  p.labels.resize(p.scores.rows());
  for (int i = 0; i < p.scores.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < p.scores.cols(); ++c)
      if (p.scores(i, c) > p.scores(i, best)) best = c;  // ties keep the lowest index
    p.labels[i] = best;
  }
  return p;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw std::invalid_argument("accuracy: size mismatch");
  size_t hit = 0;
  for (size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

TheoremReport verify_theorem1(const LabeledDataset& train, const std::vector<Image>& test_points,
                              const PairKernelFn& kernel, const TransformGroup& g, double lambda,
                              double tol, double equiv_tol, uint64_t seed) {
  train.validate();
  if (train.size() == 0 || test_points.empty())
    throw std::invalid_argument("verify_theorem1: empty inputs");
  const Image& probe = train.images[0];

  auto equiv = check_equivariance(kernel, g.elements, PaddingScheme::Circular, probe.rows,
                                  probe.cols, probe.channels, 8, equiv_tol, seed);
  TheoremReport rep;
  rep.equivariance_violation = equiv.max_violation;
  rep.tolerance = tol;
  if (!equiv.pass)
    throw std::runtime_error("verify_theorem1: kernel is not equivariant under the group "
                             "(max violation " +
                             std::to_string(equiv.max_violation) + ")");

  const int n = static_cast<int>(train.size());
  const int classes = train.class_count;
  const double gsize = static_cast<double>(g.size());

  // Path A: augmented kernel on the original dataset.
  Eigen::MatrixXd ka(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = augmented_kernel(kernel, g, train.images[i], train.images[j]);
      ka(i, j) = v;
      ka(j, i) = v;
    }
  Eigen::MatrixXd ya = one_hot(train.labels, classes);
  Eigen::MatrixXd alpha =
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(
          ka + lambda * Eigen::MatrixXd::Identity(n, n))
          .solve(ya);

  // Path B: plain kernel on the materialized augmented dataset, with the
  // ridge scaled by |G|.
  LabeledDataset aug = build_augmented_dataset(train, g);
  const int na = static_cast<int>(aug.size());
  Eigen::MatrixXd kb(na, na);
  for (int i = 0; i < na; ++i)
    for (int j = i; j < na; ++j) {
      const double v = kernel(aug.images[i], aug.images[j]);
      kb(i, j) = v;
      kb(j, i) = v;
    }
  Eigen::MatrixXd yb = one_hot(aug.labels, classes);
  Eigen::MatrixXd alpha_b =
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(
          kb + lambda * gsize * Eigen::MatrixXd::Identity(na, na))
          .solve(yb);

  for (const Image& x : test_points) {
    Eigen::RowVectorXd ka_row(n);
    for (int i = 0; i < n; ++i) ka_row(i) = augmented_kernel(kernel, g, x, train.images[i]);
    Eigen::RowVectorXd score_a = ka_row * alpha;

    Eigen::RowVectorXd kb_row(na);
    for (int i = 0; i < na; ++i) kb_row(i) = kernel(x, aug.images[i]);
    Eigen::RowVectorXd score_b = kb_row * alpha_b;

    rep.max_score_diff = std::max(rep.max_score_diff, (score_a - score_b).cwiseAbs().maxCoeff());
  }
  rep.pass = rep.max_score_diff <= tol;
  return rep;
}

// --- binary container ------------------------------------------------------

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void write_kernel_matrix(const std::string& path, const KernelMatrix& k) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("CK4M", 4);
  put_u32(os, 1);
  put_u64(os, static_cast<uint64_t>(k.n));
  for (int i = 0; i < k.n; ++i)
    for (int j = 0; j < k.n; ++j) put_f64(os, k.values(i, j));
  for (int i = 0; i < k.n; ++i) {
    const uint16_t l = static_cast<uint16_t>(k.labels[i]);
    unsigned char b[2] = {static_cast<unsigned char>(l), static_cast<unsigned char>(l >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

KernelMatrix read_kernel_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CK4M", 4) != 0)
    throw std::runtime_error("bad magic in " + path);
  const uint32_t version = get_u32(is);
  if (version != 1) throw std::runtime_error("unsupported CK4M version in " + path);
  const uint64_t n = get_u64(is);
  if (n == 0 || n > (1u << 20)) throw std::runtime_error("implausible matrix size in " + path);

  KernelMatrix k;
  k.n = static_cast<int>(n);
  k.values = Eigen::MatrixXd(k.n, k.n);
  for (int i = 0; i < k.n; ++i)
    for (int j = 0; j < k.n; ++j) k.values(i, j) = get_f64(is);
  k.labels.resize(k.n);
  int max_label = 0;
  for (int i = 0; i < k.n; ++i) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    k.labels[i] = static_cast<int>(b[0]) | (static_cast<int>(b[1]) << 8);
    max_label = std::max(max_label, k.labels[i]);
  }
  if (!is) throw std::runtime_error("truncated kernel matrix file: " + path);
  k.class_count = max_label + 1;
  k.self_values.assign(k.n, 1.0);
  return k;
}

}  // namespace ck
