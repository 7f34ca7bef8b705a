#ifndef CK_REGRESSION_HPP
#define CK_REGRESSION_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ck/augment.hpp"
#include "ck/dataset.hpp"
#include "ck/kernel_dp.hpp"
#include "ck/readout.hpp"

namespace ck {

// Readout specs with LAP weight tables prebuilt for one tensor geometry.
struct PreparedReadouts {
  std::vector<ReadoutSpec> specs;
  std::vector<std::optional<LapWeights>> weights;

  PreparedReadouts() = default;
  PreparedReadouts(const std::vector<ReadoutSpec>& rs, int rows, int cols);
  size_t size() const { return specs.size(); }
  double apply(const Tensor4& t, size_t idx) const;
};

using ProgressFn = std::function<void(size_t done, size_t total)>;

// One self DP per image, parallel over images. max_depth defaults to
// cfg.depth when 0.
std::vector<SelfState> build_self_states(const std::vector<Image>& images,
                                         const KernelConfig& cfg, int max_depth = 0,
                                         int threads = 0);

// Raw readout values for one pair at a grid of depths: out[d][r] indexed by
// (depth position, readout position).
std::vector<std::vector<double>> pair_value_grid(const Image& x, const Image& y,
                                                 const SelfState& sx, const SelfState& sy,
                                                 const KernelConfig& cfg,
                                                 const std::vector<int>& depths,
                                                 const PreparedReadouts& readouts);

// Symmetric raw kernel matrices over one image list, for every (depth,
// readout) combination. Pairs run in parallel with disjoint output slots,
// so the values do not depend on the thread count.
std::vector<std::vector<Eigen::MatrixXd>> symmetric_kernel_grid(
    const std::vector<Image>& images, const KernelConfig& cfg, const std::vector<int>& depths,
    const std::vector<ReadoutSpec>& readouts, int threads = 0, const ProgressFn& progress = nullptr);

// Rectangular block: rows_images x cols_images.
std::vector<std::vector<Eigen::MatrixXd>> rect_kernel_grid(
    const std::vector<Image>& rows_images, const std::vector<Image>& cols_images,
    const KernelConfig& cfg, const std::vector<int>& depths,
    const std::vector<ReadoutSpec>& readouts, int threads = 0, const ProgressFn& progress = nullptr);

// N x N symmetric matrix of kernel values with labels, normalized so the
// diagonal is exactly one. self_values keeps the raw diagonal for
// normalizing test columns consistently.
struct KernelMatrix {
  int n = 0;
  Eigen::MatrixXd values;
  std::vector<int> labels;
  int class_count = 0;
  std::vector<double> self_values;
};

KernelMatrix assemble_kernel_matrix(const LabeledDataset& d, const KernelConfig& cfg,
                                    const ReadoutSpec& readout, int threads = 0,
                                    const ProgressFn& progress = nullptr);

struct RegressionModel {
  Eigen::MatrixXd alpha;  // n x class_count
  double lambda = 0.0;
  std::vector<double> normalization;  // per-training-point raw self values
};

// Solves (K + lambda I) alpha = Y_onehot with a dense symmetric
// factorization; the residual must come out below 1e-8 * ||Y||_F.
RegressionModel krr_fit(const KernelMatrix& k, double lambda);

struct Prediction {
  Eigen::MatrixXd scores;  // m x class_count
  std::vector<int> labels; // argmax, ties toward the lowest class index
};

// k_cross must already be normalized consistently with training
// (divide by sqrt(K(x', x') K(x_i, x_i))).
Prediction krr_predict(const RegressionModel& model, const Eigen::MatrixXd& k_cross);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

// Two-path check of the augmented-kernel / augmented-dataset equivalence:
//   path A: kernel K^G on D, ridge lambda
//   path B: kernel K on D_G, ridge lambda * |G|
// (alpha~ = alpha/|G| solves the augmented system exactly under that ridge
// pairing; lambda = 0 recovers the plain-inversion statement). The
// equivariance precondition is checked first and failure aborts.
struct TheoremReport {
  double equivariance_violation = 0.0;
  double max_score_diff = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

TheoremReport verify_theorem1(const LabeledDataset& train, const std::vector<Image>& test_points,
                              const PairKernelFn& kernel, const TransformGroup& g, double lambda,
                              double tol = 1e-6, double equiv_tol = 1e-8, uint64_t seed = 7);

// Binary kernel-matrix container (normative layout for cross-run caching):
// magic "CK4M", version u32, n u64, n^2 little-endian f64 row-major values,
// then n u16 labels.
void write_kernel_matrix(const std::string& path, const KernelMatrix& k);
KernelMatrix read_kernel_matrix(const std::string& path);

}  // namespace ck

#endif  // CK_REGRESSION_HPP
