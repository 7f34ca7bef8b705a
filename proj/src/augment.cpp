#include "ck/augment.hpp"

#include <random>

namespace ck {

Image translate(const Image& x, int di, int dj, PaddingScheme scheme) {
  Image out(x.rows, x.cols, x.channels);
  for (int i = 0; i < x.rows; ++i) {
    ResolvedIndex ri = resolve_index(i + di + 1, x.rows, scheme);
    for (int j = 0; j < x.cols; ++j) {
      ResolvedIndex rj = resolve_index(j + dj + 1, x.cols, scheme);
      if (!ri.in_range || !rj.in_range) continue;  // zero padding: stays 0
      for (int c = 0; c < x.channels; ++c)
        out.at(i, j, c) = x.at(ri.index - 1, rj.index - 1, c);
    }
  }
  return out;
}

Image hflip(const Image& x) {
  Image out(x.rows, x.cols, x.channels);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j)
      for (int c = 0; c < x.channels; ++c) out.at(i, j, c) = x.at(x.rows - 1 - i, j, c);
  return out;
}

GroupElement canonical(GroupElement g, int rows, int cols) {
  g.di = wrap0(g.di, rows);
  g.dj = wrap0(g.dj, cols);
  return g;
}

GroupElement compose(const GroupElement& a, const GroupElement& b, int rows, int cols) {
  // a o b, both in the form T_shift o F^flip. Moving b's shift across a's
  // flip negates its row component: F o T_{s,t} = T_{-s,t} o F.
  GroupElement out;
  const int bdi = a.flipped ? -b.di : b.di;
  out.di = a.di + bdi;
  out.dj = a.dj + b.dj;
  out.flipped = a.flipped != b.flipped;
  return canonical(out, rows, cols);
}

GroupElement inverse(const GroupElement& g, int rows, int cols) {
  GroupElement out;
  out.flipped = g.flipped;
  out.di = g.flipped ? g.di : -g.di;
  out.dj = -g.dj;
  return canonical(out, rows, cols);
}

Image apply(const GroupElement& g, const Image& x) {
  Image base = g.flipped ? hflip(x) : x;
  if (g.di == 0 && g.dj == 0) return base;
  return translate(base, g.di, g.dj, PaddingScheme::Circular);
}

bool TransformGroup::has_shifts() const {
  for (const auto& g : elements)
    if (g.di != 0 || g.dj != 0) return true;
  return false;
}

TransformGroup identity_group(int rows, int cols) {
  return {rows, cols, {GroupElement{}}};
}

TransformGroup flip_group(int rows, int cols) {
  return {rows, cols, {GroupElement{}, GroupElement{0, 0, true}}};
}

TransformGroup translation_group(int rows, int cols) {
  TransformGroup g{rows, cols, {}};
  g.elements.reserve(static_cast<size_t>(rows) * cols);
  for (int di = 0; di < rows; ++di)
    for (int dj = 0; dj < cols; ++dj) g.elements.push_back({di, dj, false});
  return g;
}

TransformGroup flip_translation_group(int rows, int cols) {
  TransformGroup g = translation_group(rows, cols);
  const size_t n = g.elements.size();
  g.elements.reserve(2 * n);
  for (size_t k = 0; k < n; ++k) {
    GroupElement e = g.elements[k];
    e.flipped = true;
    g.elements.push_back(e);
  }
  return g;
}

double augmented_kernel(const PairKernelFn& kernel, const TransformGroup& g,
                        const Image& x, const Image& y) {
  if (g.elements.empty()) throw std::invalid_argument("augmented_kernel: empty group");
  double acc = 0.0;
  for (const auto& e : g.elements) acc += kernel(apply(e, x), y);
  return acc / static_cast<double>(g.elements.size());
}

EquivarianceReport check_equivariance(const PairKernelFn& kernel,
                                      const std::vector<GroupElement>& transforms,
                                      PaddingScheme action_scheme, int rows, int cols,
                                      int channels, int trials, double tol, uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("check_equivariance: trials must be >= 1");
  if (transforms.empty()) throw std::invalid_argument("check_equivariance: no transforms");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto random_image = [&] {
    Image im(rows, cols, channels);
    for (double& v : im.values) v = gauss(rng);
    return im;
  };
  auto act = [&](const GroupElement& g, const Image& im) {
    Image base = g.flipped ? hflip(im) : im;
    if (g.di == 0 && g.dj == 0) return base;
    return translate(base, g.di, g.dj, action_scheme);
  };

  EquivarianceReport rep;
  rep.trials = trials;
  rep.tolerance = tol;
  std::uniform_int_distribution<size_t> pick(0, transforms.size() - 1);
  for (int t = 0; t < trials; ++t) {
    Image x = random_image();
    Image y = random_image();
    const GroupElement& g = transforms[pick(rng)];
    const double base = kernel(x, y);
    const double moved = kernel(act(g, x), act(g, y));
    rep.max_violation = std::max(rep.max_violation, std::abs(moved - base));
  }
  rep.pass = rep.max_violation <= tol;
  return rep;
}

LabeledDataset build_augmented_dataset(const LabeledDataset& d, const TransformGroup& g) {
  d.validate();
  if (g.elements.empty()) throw std::invalid_argument("build_augmented_dataset: empty group");
  LabeledDataset out;
  out.class_count = d.class_count;
  out.provenance = d.provenance + "+aug";
  out.images.reserve(d.size() * g.size());
  out.labels.reserve(d.size() * g.size());
  for (const auto& e : g.elements) {
    for (size_t i = 0; i < d.size(); ++i) {
      out.images.push_back(apply(e, d.images[i]));
      out.labels.push_back(d.labels[i]);
    }
  }
  return out;
}

}  // namespace ck
