#ifndef CK_AUGMENT_HPP
#define CK_AUGMENT_HPP

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ck/dataset.hpp"
#include "ck/image.hpp"

namespace ck {

// [T_{di,dj}(x)]_{i,j,c} = x[i+di, j+dj, c], boundary per scheme.
Image translate(const Image& x, int di, int dj, PaddingScheme scheme);

// [F(x)]_{i,j,c} = x[P+1-i, j, c]: reverses the first axis.
Image hflip(const Image& x);

// Canonical form of any composition of circular translations and the
// horizontal flip, acting as x -> translate(flip^flipped(x), di, dj).
// The reduction uses F o T_{a,b} = T_{-a,b} o F.
struct GroupElement {
  int di = 0;
  int dj = 0;
  bool flipped = false;

  bool operator==(const GroupElement&) const = default;
};

// A finite group of image operators together with the geometry its shifts
// are reduced against. Shifts are only a group under circular padding
// (zero-padded translation drops pixels and has no inverse), so every
// factory and consumer of shifted elements pins the action to Circular.
struct TransformGroup {
  int rows = 0;
  int cols = 0;
  std::vector<GroupElement> elements;

  size_t size() const { return elements.size(); }
  bool has_shifts() const;
};

GroupElement canonical(GroupElement g, int rows, int cols);
GroupElement compose(const GroupElement& a, const GroupElement& b, int rows, int cols);
GroupElement inverse(const GroupElement& g, int rows, int cols);
Image apply(const GroupElement& g, const Image& x);

TransformGroup identity_group(int rows, int cols);
TransformGroup flip_group(int rows, int cols);
TransformGroup translation_group(int rows, int cols);
TransformGroup flip_translation_group(int rows, int cols);

using PairKernelFn = std::function<double(const Image&, const Image&)>;

// K^G(x, y) = (1/|G|) sum_g K(g(x), y).
double augmented_kernel(const PairKernelFn& kernel, const TransformGroup& g,
                        const Image& x, const Image& y);

struct EquivarianceReport {
  double max_violation = 0.0;
  int trials = 0;
  double tolerance = 0.0;
  bool pass = false;
};

// Samples random image pairs and transforms, comparing K(g(x), g(y))
// against K(x, y). `transforms` need not form a group and the action
// scheme is explicit, so the zero-padding boundary-violation case can be
// demonstrated with the same machinery.
EquivarianceReport check_equivariance(const PairKernelFn& kernel,
                                      const std::vector<GroupElement>& transforms,
                                      PaddingScheme action_scheme, int rows, int cols,
                                      int channels, int trials, double tol, uint64_t seed);

// Materializes {(g(x_i), y_i)}: identity block first, then the remaining
// elements, each block in dataset order, so the original examples lead.
LabeledDataset build_augmented_dataset(const LabeledDataset& d, const TransformGroup& g);

}  // namespace ck

#endif  // CK_AUGMENT_HPP
