#pragma once

#include <cstddef>
#include <string>

#include "abacus/random.hpp"
#include "abacus/tensor.hpp"

namespace abacus::cli {

struct BlrData {
  Tensor x;       // [n, dim]
  Tensor y;       // [n], values in {0, 1}
  Tensor true_w;  // [dim]; zeros when the data came from a file
};

// Draws true_w ~ N(0, I), feature rows ~ N(0, I), and labels from the
// model's own Bernoulli(sigmoid(x . true_w)).
BlrData synth_blr_data(std::size_t n, std::size_t dim, RngState& rng);

// Binary images from a fixed random two-layer generator: latent dim 4,
// tanh hidden layer, Bernoulli pixels. Weights are a pure function of rng,
// so one seed pins both the generator and the draws.
Tensor synth_binary_images(std::size_t n, std::size_t n_x, RngState& rng);

// Header-free CSV, one example per row. BLR rows hold the features followed
// by a {0,1} label; image rows hold {0,1} pixels. Unreadable files throw
// IoError, malformed cells DomainError.
BlrData load_blr_csv(const std::string& path);
Tensor load_image_csv(const std::string& path);

}  // namespace abacus::cli
