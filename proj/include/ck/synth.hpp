#ifndef CK_SYNTH_HPP
#define CK_SYNTH_HPP

#include <cstdint>
#include <random>

#include "ck/dataset.hpp"
#include "ck/image.hpp"

namespace ck {

// Standard-normal image, deterministic for a given generator state.
Image random_image(int rows, int cols, int channels, std::mt19937_64& rng);

// Classification dataset with local-translation structure: each class owns
// a fixed random template; examples are circular shifts of it by at most
// `jitter` pixels plus pixel noise. Labels cycle through the classes.
LabeledDataset synth_dataset(int n, int rows, int cols, int channels, int classes,
                             uint64_t seed, int jitter = 1, double noise = 0.25);

}  // namespace ck

#endif  // CK_SYNTH_HPP
