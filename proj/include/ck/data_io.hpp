#ifndef CK_DATA_IO_HPP
#define CK_DATA_IO_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ck/dataset.hpp"
#include "ck/image.hpp"

namespace ck {

// CIFAR-10 binary batches: 3073-byte records (label byte + 3072 pixel bytes
// in planar R,G,B order, 32x32 row-major), scaled to [0,1].
LabeledDataset load_cifar10(const std::string& dir, bool train);

// Fashion-MNIST / MNIST IDX files (optionally gzip-compressed), 28x28x1,
// scaled to [0,1].
LabeledDataset load_fashion_mnist(const std::string& dir, bool train);

// Per-channel mean/std over the training set, applied to both splits.
// Standard deviations are floored at 1e-8.
std::pair<LabeledDataset, LabeledDataset> standardize(const LabeledDataset& train,
                                                      const LabeledDataset& test);

// Block-average spatial downsample; extents must be divisible by factor.
Image downsample_image(const Image& x, int factor);
LabeledDataset downsample(const LabeledDataset& d, int factor);

// Random-patch convolutional pre-processor: k x k patches sampled from the
// training images, centered per patch, unit-normalized, ZCA-whitened
// against the regularized patch covariance, renormalized, and (optionally)
// closed under horizontal flip by appending each filter's flipped copy.
struct PatchBank {
  int patch_size = 0;  // k
  int channels = 0;    // C of the source images
  double gamma_feature = 1.0;
  bool flip_closed = false;
  std::vector<std::vector<double>> filters;  // each k*k*C, image-layout (i,j,c)
  Eigen::MatrixXd zca;                       // d x d whitening map, d = k^2 C
  Eigen::VectorXd feature_mean;              // mean subtracted before whitening

  // index of the flip partner of filter f (f itself when symmetric)
  std::vector<int> flip_partner;
};

PatchBank build_patch_bank(const LabeledDataset& train, int count, int patch_size,
                           uint64_t seed, double zca_eps = 1e-5, bool flip_close = true);

// ReLU(conv(x) - gamma_feature) and ReLU(-conv(x) - gamma_feature) stacked
// channel-wise (positive block first, filter order preserved). Valid
// convolution: output is (P-k+1) x (Q-k+1) x 2F.
Image patch_featurize(const Image& x, const PatchBank& bank);

// Image-dataset container: magic "CKIM", version u32, count u64, rows u32,
// cols u32, channels u32, class_count u32, count*rows*cols*channels f32
// little-endian values in image order, then count u16 labels.
void write_image_dataset(const std::string& path, const LabeledDataset& d);
LabeledDataset read_image_dataset(const std::string& path);

}  // namespace ck

#endif  // CK_DATA_IO_HPP
