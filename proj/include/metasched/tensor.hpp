#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "metasched/rng.hpp"

namespace metasched {

// Dense row-major tensor of 32-bit floats, rank 1 or 2. Rank-1 tensors act
// as a single row wherever a row structure is needed.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, float value);
  static Tensor row(std::initializer_list<float> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);
  static Tensor from_vector(std::vector<int> shape, std::vector<float> values);
  // Uniform in +/- sqrt(6 / (fan_in + fan_out)).
  static Tensor glorot(int fan_in, int fan_out, Rng& rng);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return rank() == 1 ? 1 : shape[0]; }
  int cols() const { return rank() == 1 ? shape[0] : shape[1]; }

  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;
};

// Throws if any element is NaN or infinite.
void ensure_finite(const Tensor& t, const char* what);

bool all_finite(const Tensor& t);

}  // namespace metasched
