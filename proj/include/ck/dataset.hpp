#ifndef CK_DATASET_HPP
#define CK_DATASET_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "ck/image.hpp"

namespace ck {

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int class_count = 0;
  std::string provenance;

  size_t size() const { return images.size(); }

  void validate() const {
    if (images.size() != labels.size())
      throw std::runtime_error("LabeledDataset: image/label count mismatch");
    for (int l : labels) {
      if (l < 0 || l >= class_count)
        throw std::runtime_error("LabeledDataset: label out of range");
    }
  }
};

}  // namespace ck

#endif  // CK_DATASET_HPP
