#include "ck/synth.hpp"

#include "ck/augment.hpp"

namespace ck {

Image random_image(int rows, int cols, int channels, std::mt19937_64& rng) {
  Image im(rows, cols, channels);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : im.values) v = gauss(rng);
  return im;
}

LabeledDataset synth_dataset(int n, int rows, int cols, int channels, int classes,
                             uint64_t seed, int jitter, double noise) {
  if (n < 1 || classes < 1) throw std::invalid_argument("synth_dataset: bad sizes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> shift(-jitter, jitter);

  std::vector<Image> templates;
  templates.reserve(classes);
  for (int k = 0; k < classes; ++k) templates.push_back(random_image(rows, cols, channels, rng));

  LabeledDataset d;
  d.class_count = classes;
  d.provenance = "synthetic(seed=" + std::to_string(seed) + ")";
  d.images.reserve(n);
  d.labels.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int k = i % classes;
    Image im = translate(templates[k], shift(rng), shift(rng), PaddingScheme::Circular);
    for (double& v : im.values) v += noise * gauss(rng);
    d.images.push_back(std::move(im));
    d.labels.push_back(k);
  }
  return d;
}

}  // namespace ck
