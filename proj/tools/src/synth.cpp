#include "synth.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "abacus/errors.hpp"
#include "metrics.hpp"

namespace abacus::cli {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<std::vector<double>> load_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DomainError("bad CSV cell '" + cell + "' in '" + path + "'");
      }
    }
    if (!rows.empty() && row.size() != rows[0].size()) {
      throw DomainError("ragged CSV row in '" + path + "'");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DomainError("dataset '" + path + "' is empty");
  return rows;
}

}  // namespace

BlrData synth_blr_data(std::size_t n, std::size_t dim, RngState& rng) {
  if (n < 1 || dim < 1) throw ContractError("synth_blr_data needs n >= 1 and dim >= 1");
  Tensor w = Tensor::zeros({dim});
  for (auto& v : w.mutable_data()) v = rng.normal();
  Tensor x = Tensor::zeros({n, dim});
  for (auto& v : x.mutable_data()) v = rng.normal();
  Tensor y = Tensor::zeros({n});
  auto wd = w.data();
  auto xd = x.data();
  auto yd = y.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    double logit = 0.0;
    for (std::size_t d = 0; d < dim; ++d) logit += xd[i * dim + d] * wd[d];
    yd[i] = rng.uniform() < sigmoid(logit) ? 1.0 : 0.0;
  }
  return {std::move(x), std::move(y), std::move(w)};
}

Tensor synth_binary_images(std::size_t n, std::size_t n_x, RngState& rng) {
  if (n < 1 || n_x < 1) throw ContractError("synth_binary_images needs n >= 1 and n_x >= 1");
  constexpr std::size_t kLatent = 4;
  constexpr std::size_t kHidden = 16;
  std::vector<double> w1(kLatent * kHidden), b1(kHidden), w2(kHidden * n_x), b2(n_x);
  for (auto& v : w1) v = rng.normal();
  for (auto& v : b1) v = 0.5 * rng.normal();
  double scale = 2.0 / std::sqrt(static_cast<double>(kHidden));
  for (auto& v : w2) v = scale * rng.normal();
  for (auto& v : b2) v = rng.normal();

  Tensor images = Tensor::zeros({n, n_x});
  auto out = images.mutable_data();
  std::vector<double> e(kLatent), h(kHidden);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : e) v = rng.normal();
    for (std::size_t j = 0; j < kHidden; ++j) {
      double a = b1[j];
      for (std::size_t k = 0; k < kLatent; ++k) a += w1[k * kHidden + j] * e[k];
      h[j] = std::tanh(a);
    }
    for (std::size_t p = 0; p < n_x; ++p) {
      double logit = b2[p];
      for (std::size_t j = 0; j < kHidden; ++j) logit += w2[j * n_x + p] * h[j];
      out[i * n_x + p] = rng.uniform() < sigmoid(logit) ? 1.0 : 0.0;
    }
  }
  return images;
}

BlrData load_blr_csv(const std::string& path) {
  auto rows = load_csv_rows(path);
  if (rows[0].size() < 2) throw DomainError("BLR rows need at least one feature and a label");
  std::size_t n = rows.size();
  std::size_t dim = rows[0].size() - 1;
  Tensor x = Tensor::zeros({n, dim});
  Tensor y = Tensor::zeros({n});
  auto xd = x.mutable_data();
  auto yd = y.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) xd[i * dim + d] = rows[i][d];
    double label = rows[i][dim];
    if (label != 0.0 && label != 1.0) {
      throw DomainError("BLR label outside {0,1} in '" + path + "'");
    }
    yd[i] = label;
  }
  return {std::move(x), std::move(y), Tensor::zeros({dim})};
}

Tensor load_image_csv(const std::string& path) {
  auto rows = load_csv_rows(path);
  std::size_t n = rows.size();
  std::size_t n_x = rows[0].size();
  Tensor images = Tensor::zeros({n, n_x});
  auto out = images.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < n_x; ++p) {
      double v = rows[i][p];
      if (v != 0.0 && v != 1.0) throw DomainError("pixel outside {0,1} in '" + path + "'");
      out[i * n_x + p] = v;
    }
  }
  return images;
}

}  // namespace abacus::cli
