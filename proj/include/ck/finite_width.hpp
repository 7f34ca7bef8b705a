#ifndef CK_FINITE_WIDTH_HPP
#define CK_FINITE_WIDTH_HPP

#include <cstdint>
#include <random>
#include <vector>

#include "ck/image.hpp"
#include "ck/kernel_dp.hpp"

namespace ck {

enum class FwReadoutKind { FC, GAP, BBlur };

struct FwReadout {
  FwReadoutKind kind = FwReadoutKind::FC;
  int blur_radius = 0;                              // BBlur only
  PaddingScheme blur_padding = PaddingScheme::Circular;
};

// Finite random CNN in the scaled parameterization: all weights and biases
// standard Gaussian, the sqrt(c_sigma / (width q^2)) factor applied to the
// activations inside the forward pass.
struct CnnConfig {
  int depth = 2;           // conv layers
  int filter_size = 3;     // q, odd
  double bias_scale = 0.0; // gamma
  PaddingScheme padding = PaddingScheme::Circular;
  int width = 64;          // channels of every hidden layer

  void validate() const {
    if (depth < 1 || width < 1) throw std::invalid_argument("CnnConfig: bad depth/width");
    require_odd_filter(filter_size);
    if (bias_scale < 0.0) throw std::invalid_argument("CnnConfig: bias_scale must be >= 0");
  }
};

struct CnnParams {
  // conv_w[h] is offset-major: ((u*q + v)*C_in + alpha)*C_out + beta, so
  // each window offset is a contiguous (C_in x C_out) slice.
  std::vector<std::vector<double>> conv_w;
  std::vector<std::vector<double>> conv_b;  // [h]: (C_out)
  // FC/BBlur: (P*Q x width) position-major; GAP: (width)
  std::vector<double> head;
};

struct CnnGrads {
  std::vector<std::vector<double>> conv_w;
  std::vector<std::vector<double>> conv_b;
  std::vector<double> head;
};

CnnParams sample_cnn_params(const CnnConfig& cfg, int in_channels, int rows, int cols,
                            const FwReadout& readout, std::mt19937_64& rng);

double cnn_forward(const CnnConfig& cfg, const FwReadout& readout, const CnnParams& params,
                   const Image& x);

// Forward pass plus reverse-mode gradients of the scalar output with
// respect to every parameter. Returns the output value.
double cnn_forward_backward(const CnnConfig& cfg, const FwReadout& readout,
                            const CnnParams& params, const Image& x, CnnGrads& grads);

double grads_inner(const CnnGrads& a, const CnnGrads& b);

// Max relative error of the hand-written gradients against central finite
// differences, over every parameter of a small net.
double gradient_check(const CnnConfig& cfg, const FwReadout& readout, int in_channels,
                      int rows, int cols, uint64_t seed);

struct McEstimate {
  double value = 0.0;
  double stderr_ = 0.0;  // jackknife standard error of the mean
  int samples = 0;
};

// Empirical E[f(x) f(y)] over independent parameter draws; the last-layer
// weights are standard Gaussian so this converges to the GP kernel of the
// chosen readout.
McEstimate mc_cnngp(const Image& x, const Image& y, const CnnConfig& cfg,
                    const FwReadout& readout, int samples, uint64_t seed, int threads = 0);

// Empirical E[<grad f(x), grad f(y)>] over parameter draws: the finite-width
// tangent kernel. Runs a one-time finite-difference self-check of the
// gradients and refuses to proceed if it fails.
McEstimate mc_cntk(const Image& x, const Image& y, const CnnConfig& cfg,
                   const FwReadout& readout, int samples, uint64_t seed, int threads = 0);

struct BBlurLapReport {
  double blur_trace = 0.0;
  double lap_value = 0.0;
  double abs_diff = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// tr of the box-blurred Theta tensor against the LAP readout of the raw
// tensor: the two must agree to floating-point accuracy.
BBlurLapReport verify_bblur_lap(const Image& x, const Image& y, const KernelConfig& cfg, int c,
                                PaddingScheme pool_scheme, double tol = 1e-12);

}  // namespace ck

#endif  // CK_FINITE_WIDTH_HPP
