#include "ck/data_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "ck/augment.hpp"

namespace fs = std::filesystem;

namespace ck {

namespace {

constexpr int kCifarDim = 32;
constexpr int kCifarRecord = 1 + 3 * kCifarDim * kCifarDim;

std::vector<unsigned char> read_all_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void parse_cifar_batch(const std::string& path, LabeledDataset& out) {
  auto bytes = read_all_bytes(path);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0)
    throw std::runtime_error(path + ": size " + std::to_string(bytes.size()) +
                             " is not a whole number of " + std::to_string(kCifarRecord) +
                             "-byte records");
  const size_t n = bytes.size() / kCifarRecord;
  for (size_t rec = 0; rec < n; ++rec) {
    const unsigned char* p = bytes.data() + rec * kCifarRecord;
    if (p[0] > 9)
      throw std::runtime_error(path + ": record " + std::to_string(rec) + " has label byte " +
                               std::to_string(int(p[0])) + " > 9");
    out.labels.push_back(p[0]);
    Image im(kCifarDim, kCifarDim, 3);
    for (int c = 0; c < 3; ++c) {
      const unsigned char* plane = p + 1 + c * kCifarDim * kCifarDim;
      for (int i = 0; i < kCifarDim; ++i)
        for (int j = 0; j < kCifarDim; ++j)
          im.at(i, j, c) = plane[i * kCifarDim + j] / 255.0;
    }
    out.images.push_back(std::move(im));
  }
}

}  // namespace

LabeledDataset load_cifar10(const std::string& dir, bool train) {
  LabeledDataset d;
  d.class_count = 10;
  d.provenance = std::string("cifar10-") + (train ? "train" : "test");
  if (train) {
    for (int b = 1; b <= 5; ++b)
      parse_cifar_batch(dir + "/data_batch_" + std::to_string(b) + ".bin", d);
  } else {
    parse_cifar_batch(dir + "/test_batch.bin", d);
  }
  d.validate();
  return d;
}

namespace {

// gz* reads uncompressed files transparently, so one path serves both.
std::vector<unsigned char> read_maybe_gzip(const std::string& path) {
  std::string actual = path;
  if (!fs::exists(actual) && fs::exists(actual + ".gz")) actual += ".gz";
  gzFile f = gzopen(actual.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open: " + actual);
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int got;
  while ((got = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + got);
  const bool err = got < 0;
  gzclose(f);
  if (err) throw std::runtime_error("decompression failed: " + actual);
  return out;
}

uint32_t be32(const unsigned char* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

}  // namespace

LabeledDataset load_fashion_mnist(const std::string& dir, bool train) {
  const std::string stem = train ? "train" : "t10k";
  auto img = read_maybe_gzip(dir + "/" + stem + "-images-idx3-ubyte");
  auto lab = read_maybe_gzip(dir + "/" + stem + "-labels-idx1-ubyte");

  if (img.size() < 16 || be32(img.data()) != 0x00000803)
    throw std::runtime_error(dir + ": bad image-file magic (want 0x00000803)");
  if (lab.size() < 8 || be32(lab.data()) != 0x00000801)
    throw std::runtime_error(dir + ": bad label-file magic (want 0x00000801)");

  const uint32_t n = be32(img.data() + 4);
  const uint32_t rows = be32(img.data() + 8);
  const uint32_t cols = be32(img.data() + 12);
  const uint32_t nl = be32(lab.data() + 4);
  if (n != nl) throw std::runtime_error(dir + ": image/label counts differ");
  if (img.size() != 16 + size_t(n) * rows * cols)
    throw std::runtime_error(dir + ": image payload size mismatch");
  if (lab.size() != 8 + size_t(n)) throw std::runtime_error(dir + ": label payload size mismatch");

  LabeledDataset d;
  d.class_count = 10;
  d.provenance = std::string("fashion-mnist-") + (train ? "train" : "test");
  d.images.reserve(n);
  d.labels.reserve(n);
  for (uint32_t k = 0; k < n; ++k) {
    Image im(int(rows), int(cols), 1);
    const unsigned char* p = img.data() + 16 + size_t(k) * rows * cols;
    for (uint32_t i = 0; i < rows; ++i)
      for (uint32_t j = 0; j < cols; ++j) im.at(int(i), int(j), 0) = p[i * cols + j] / 255.0;
    d.images.push_back(std::move(im));
    const int l = lab[8 + k];
    if (l > 9) throw std::runtime_error(dir + ": label > 9");
    d.labels.push_back(l);
  }
  d.validate();
  return d;
}

std::pair<LabeledDataset, LabeledDataset> standardize(const LabeledDataset& train,
                                                      const LabeledDataset& test) {
  train.validate();
  if (train.size() == 0) throw std::invalid_argument("standardize: empty training set");
  const int channels = train.images[0].channels;

  std::vector<double> mean(channels, 0.0), var(channels, 0.0);
  std::vector<size_t> count(channels, 0);
  for (const Image& im : train.images)
    for (int i = 0; i < im.rows; ++i)
      for (int j = 0; j < im.cols; ++j)
        for (int c = 0; c < channels; ++c) {
          mean[c] += im.at(i, j, c);
          ++count[c];
        }
  for (int c = 0; c < channels; ++c) mean[c] /= count[c];
  for (const Image& im : train.images)
    for (int i = 0; i < im.rows; ++i)
      for (int j = 0; j < im.cols; ++j)
        for (int c = 0; c < channels; ++c) {
          const double d = im.at(i, j, c) - mean[c];
          var[c] += d * d;
        }
  std::vector<double> inv_std(channels);
  for (int c = 0; c < channels; ++c)
    inv_std[c] = 1.0 / std::max(std::sqrt(var[c] / count[c]), 1e-8);

  auto apply_stats = [&](const LabeledDataset& d, const char* tag) {
    LabeledDataset out = d;
    out.provenance = d.provenance + tag;
    for (Image& im : out.images)
      for (int i = 0; i < im.rows; ++i)
        for (int j = 0; j < im.cols; ++j)
          for (int c = 0; c < channels; ++c)
            im.at(i, j, c) = (im.at(i, j, c) - mean[c]) * inv_std[c];
    return out;
  };
  return {apply_stats(train, "+std"), apply_stats(test, "+std")};
}

Image downsample_image(const Image& x, int factor) {
  if (factor < 1 || x.rows % factor != 0 || x.cols % factor != 0)
    throw std::invalid_argument("downsample: extents must be divisible by factor");
  Image out(x.rows / factor, x.cols / factor, x.channels);
  const double inv = 1.0 / (factor * factor);
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j)
      for (int c = 0; c < x.channels; ++c) {
        double acc = 0.0;
        for (int a = 0; a < factor; ++a)
          for (int b = 0; b < factor; ++b) acc += x.at(i * factor + a, j * factor + b, c);
        out.at(i, j, c) = acc * inv;
      }
  return out;
}

LabeledDataset downsample(const LabeledDataset& d, int factor) {
  LabeledDataset out;
  out.class_count = d.class_count;
  out.labels = d.labels;
  out.provenance = d.provenance + "+ds" + std::to_string(factor);
  out.images.reserve(d.size());
  for (const Image& im : d.images) out.images.push_back(downsample_image(im, factor));
  return out;
}

PatchBank build_patch_bank(const LabeledDataset& train, int count, int patch_size,
                           uint64_t seed, double zca_eps, bool flip_close) {
  train.validate();
  if (count < 1) throw std::invalid_argument("build_patch_bank: count must be >= 1");
  if (train.size() == 0) throw std::invalid_argument("build_patch_bank: empty training set");
  const Image& probe = train.images[0];
  const int k = patch_size;
  if (k < 1 || k > probe.rows || k > probe.cols)
    throw std::invalid_argument("build_patch_bank: patch size larger than images");
  const int channels = probe.channels;
  const int d = k * k * channels;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick_img(0, train.size() - 1);
  std::uniform_int_distribution<int> pick_i(0, probe.rows - k);
  std::uniform_int_distribution<int> pick_j(0, probe.cols - k);

  // sample, center per patch, unit-normalize
  Eigen::MatrixXd patches(count, d);
  for (int m = 0; m < count; ++m) {
    const Image& im = train.images[pick_img(rng)];
    const int i0 = pick_i(rng);
    const int j0 = pick_j(rng);
    int col = 0;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        for (int c = 0; c < channels; ++c) patches(m, col++) = im.at(i0 + i, j0 + j, c);
    const double mean = patches.row(m).mean();
    patches.row(m).array() -= mean;
    const double norm = patches.row(m).norm();
    if (norm > 1e-12) patches.row(m) /= norm;
  }

  // ZCA against the eps-regularized covariance of the sampled patches
  PatchBank bank;
  bank.patch_size = k;
  bank.channels = channels;
  bank.flip_closed = flip_close;
  bank.feature_mean = patches.colwise().mean();
  Eigen::MatrixXd centered = patches.rowwise() - bank.feature_mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / double(count);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::VectorXd lam = es.eigenvalues();
  Eigen::MatrixXd u = es.eigenvectors();
  Eigen::VectorXd scale = (lam.array() + zca_eps).rsqrt();
  bank.zca = u * scale.asDiagonal() * u.transpose();

  Eigen::MatrixXd whitened = centered * bank.zca;

  auto flip_filter = [&](const std::vector<double>& f) {
    std::vector<double> out(f.size());
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        for (int c = 0; c < channels; ++c)
          out[(size_t(i) * k + j) * channels + c] = f[(size_t(k - 1 - i) * k + j) * channels + c];
    return out;
  };

  bank.filters.reserve(flip_close ? 2 * count : count);
  for (int m = 0; m < count; ++m) {
    std::vector<double> f(d);
    for (int col = 0; col < d; ++col) f[col] = whitened(m, col);
    double norm = 0.0;
    for (double v : f) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 1e-12)
      for (double& v : f) v /= norm;
    bank.filters.push_back(std::move(f));
  }
  if (flip_close) {
    for (int m = 0; m < count; ++m) bank.filters.push_back(flip_filter(bank.filters[m]));
    bank.flip_partner.resize(2 * count);
    for (int m = 0; m < count; ++m) {
      bank.flip_partner[m] = m + count;
      bank.flip_partner[m + count] = m;
    }
  } else {
    bank.flip_partner.resize(count);
    for (int m = 0; m < count; ++m) bank.flip_partner[m] = -1;
  }
  return bank;
}

Image patch_featurize(const Image& x, const PatchBank& bank) {
  const int k = bank.patch_size;
  if (x.rows < k || x.cols < k)
    throw std::invalid_argument("patch_featurize: image smaller than the patch size");
  if (x.channels != bank.channels)
    throw std::invalid_argument("patch_featurize: channel mismatch with the bank");
  const int op = x.rows - k + 1;
  const int oq = x.cols - k + 1;
  const int d = k * k * bank.channels;
  const int nf = static_cast<int>(bank.filters.size());

  // im2col + one GEMM against the filter matrix
  Eigen::MatrixXd cols(op * oq, d);
  for (int i = 0; i < op; ++i)
    for (int j = 0; j < oq; ++j) {
      int col = 0;
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
          for (int c = 0; c < bank.channels; ++c)
            cols(Eigen::Index(i) * oq + j, col++) = x.at(i + a, j + b, c);
    }
  Eigen::MatrixXd filt(d, nf);
  for (int f = 0; f < nf; ++f)
    for (int col = 0; col < d; ++col) filt(col, f) = bank.filters[f][col];
  Eigen::MatrixXd conv = cols * filt;  // (op*oq) x nf

  Image out(op, oq, 2 * nf);
  for (int p = 0; p < op * oq; ++p)
    for (int f = 0; f < nf; ++f) {
      const double v = conv(p, f);
      out.values[size_t(p) * 2 * nf + f] = std::max(0.0, v - bank.gamma_feature);
      out.values[size_t(p) * 2 * nf + nf + f] = std::max(0.0, -v - bank.gamma_feature);
    }
  return out;
}

// --- CKIM container ---------------------------------------------------------

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

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_image_dataset(const std::string& path, const LabeledDataset& d) {
  d.validate();
  if (d.size() == 0) throw std::invalid_argument("write_image_dataset: empty dataset");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  const Image& probe = d.images[0];
  os.write("CKIM", 4);
  put_u32(os, 1);
  put_u64(os, d.size());
  put_u32(os, uint32_t(probe.rows));
  put_u32(os, uint32_t(probe.cols));
  put_u32(os, uint32_t(probe.channels));
  put_u32(os, uint32_t(d.class_count));
  for (const Image& im : d.images) {
    if (!im.same_shape(probe))
      throw std::runtime_error("write_image_dataset: mixed image shapes");
    for (double v : im.values) {
      const float f = static_cast<float>(v);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(os, bits);
    }
  }
  for (int l : d.labels) {
    unsigned char b[2] = {static_cast<unsigned char>(l), static_cast<unsigned char>(l >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

LabeledDataset read_image_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CKIM", 4) != 0) throw std::runtime_error("bad magic in " + path);
  if (get_u32(is) != 1) throw std::runtime_error("unsupported CKIM version in " + path);
  const uint64_t n = get_u64(is);
  const uint32_t rows = get_u32(is), cols = get_u32(is), channels = get_u32(is);
  const uint32_t classes = get_u32(is);
  if (n == 0 || rows == 0 || cols == 0 || channels == 0)
    throw std::runtime_error("implausible CKIM header in " + path);

  LabeledDataset d;
  d.class_count = int(classes);
  d.provenance = "ckim:" + path;
  d.images.reserve(n);
  for (uint64_t k = 0; k < n; ++k) {
    Image im(int(rows), int(cols), int(channels));
    for (double& v : im.values) {
      const uint32_t bits = get_u32(is);
      float f;
      std::memcpy(&f, &bits, 4);
      v = f;
    }
    d.images.push_back(std::move(im));
  }
  d.labels.resize(n);
  for (uint64_t k = 0; k < n; ++k) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    d.labels[k] = int(b[0]) | (int(b[1]) << 8);
  }
  if (!is) throw std::runtime_error("truncated CKIM file: " + path);
  d.validate();
  return d;
}

}  // namespace ck
