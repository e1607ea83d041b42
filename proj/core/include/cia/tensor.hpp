#pragma once

#include <functional>
#include <vector>

namespace cia {

/// Dense row-major float32 tensor, rank 1..4. Rank-3 data is HWC (height,
/// width, channel); rank-4 convolution kernels are (ky, kx, c_in, c_out).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f);
  static Tensor from(std::vector<int> shape, std::vector<float> values);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int size() const { return static_cast<int>(data_.size()); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](int i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int i) const { return data_[static_cast<size_t>(i)]; }

  // rank-3 HWC accessors
  float& at(int y, int x, int c);
  float at(int y, int x, int c) const;

  Tensor reshaped(std::vector<int> shape) const;  // same element count

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

enum class ScalarFn {
  Tanh, Sigmoid, Sin, Relu, Exp, Identity,
  // derivatives of the above, as functions of the *input*
  DTanh, DSigmoid, DSin, DRelu, DExp, DIdentity,
};

enum class BinaryOp { Add, Sub, Mul, Div, Min, Max };

enum class Padding { Zero, Replicate };

Tensor elementwise_map(const Tensor& t, ScalarFn fn);
Tensor elementwise_binary(const Tensor& a, const Tensor& b, BinaryOp op);

/// Same-spatial-size 2D convolution of an HWC input with a (k,k,c_in,c_out)
/// kernel. k must be odd here; stride 1. Accumulation runs in double so
/// results are well rounded (a uniform kernel applied to a constant image
/// reproduces it exactly).
Tensor conv2d(const Tensor& input, const Tensor& kernel, Padding padding);

/// W (m,n) · x (n) + b (m).
Tensor matvec(const Tensor& w, const Tensor& x, const Tensor& b);

/// Index of the largest value; ties resolve to the lowest index.
int argmax(const Tensor& t);

/// Central-difference gradient of a scalar function, the test oracle every
/// analytic gradient in this project is checked against:
///   g_i = (f(x + h e_i) - f(x - h e_i)) / (x_i^+ - x_i^-)
/// The denominator uses the realized float32 step, not 2h.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, float h = 1e-3f);

namespace detail {
/// conv2d without the odd-k restriction. Even kernels anchor so the window
/// spans offsets [-k/2, k-1-k/2] (for k=6: -3..+2); odd kernels center.
Tensor conv2d_any(const Tensor& input, const Tensor& kernel, Padding padding);
}  // namespace detail

}  // namespace cia
