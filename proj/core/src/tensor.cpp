#include "cia/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace cia {

namespace {

size_t checked_count(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw std::invalid_argument("tensor rank must be 1..4, got " +
                                std::to_string(shape.size()));
  }
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extents must be positive");
    n *= static_cast<size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, float fill) : shape_(std::move(shape)) {
  data_.assign(checked_count(shape_), fill);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> values) {
  Tensor t;
  size_t n = checked_count(shape);
  if (values.size() != n) {
    throw std::invalid_argument("tensor data length does not match shape");
  }
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

float& Tensor::at(int y, int x, int c) {
  return data_[(static_cast<size_t>(y) * shape_[1] + x) * shape_[2] + c];
}

float Tensor::at(int y, int x, int c) const {
  return data_[(static_cast<size_t>(y) * shape_[1] + x) * shape_[2] + c];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  size_t n = checked_count(shape);
  if (n != data_.size()) {
    throw std::invalid_argument("reshape must preserve element count");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

Tensor elementwise_map(const Tensor& t, ScalarFn fn) {
  Tensor out = t;
  float* p = out.data();
  int n = out.size();
  auto apply = [&](auto&& f) {
    for (int i = 0; i < n; ++i) p[i] = static_cast<float>(f(static_cast<double>(p[i])));
  };
  switch (fn) {
    case ScalarFn::Tanh: apply([](double v) { return std::tanh(v); }); break;
    case ScalarFn::Sigmoid: apply([](double v) { return 1.0 / (1.0 + std::exp(-v)); }); break;
    case ScalarFn::Sin: apply([](double v) { return std::sin(v); }); break;
    case ScalarFn::Relu: apply([](double v) { return v > 0.0 ? v : 0.0; }); break;
    case ScalarFn::Exp: apply([](double v) { return std::exp(v); }); break;
    case ScalarFn::Identity: break;
    case ScalarFn::DTanh: apply([](double v) { double t = std::tanh(v); return 1.0 - t * t; }); break;
    case ScalarFn::DSigmoid: apply([](double v) { double s = 1.0 / (1.0 + std::exp(-v)); return s * (1.0 - s); }); break;
    case ScalarFn::DSin: apply([](double v) { return std::cos(v); }); break;
    case ScalarFn::DRelu: apply([](double v) { return v > 0.0 ? 1.0 : 0.0; }); break;
    case ScalarFn::DExp: apply([](double v) { return std::exp(v); }); break;
    case ScalarFn::DIdentity: apply([](double) { return 1.0; }); break;
    default: throw std::invalid_argument("unknown scalar function id");
  }
  return out;
}

Tensor elementwise_binary(const Tensor& a, const Tensor& b, BinaryOp op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("elementwise_binary: shape mismatch");
  }
  Tensor out = a;
  float* p = out.data();
  const float* q = b.data();
  int n = out.size();
  switch (op) {
    case BinaryOp::Add: for (int i = 0; i < n; ++i) p[i] += q[i]; break;
    case BinaryOp::Sub: for (int i = 0; i < n; ++i) p[i] -= q[i]; break;
    case BinaryOp::Mul: for (int i = 0; i < n; ++i) p[i] *= q[i]; break;
    case BinaryOp::Div: for (int i = 0; i < n; ++i) p[i] /= q[i]; break;
    case BinaryOp::Min: for (int i = 0; i < n; ++i) p[i] = std::min(p[i], q[i]); break;
    case BinaryOp::Max: for (int i = 0; i < n; ++i) p[i] = std::max(p[i], q[i]); break;
    default: throw std::invalid_argument("unknown binary op");
  }
  return out;
}

namespace detail {

Tensor conv2d_any(const Tensor& input, const Tensor& kernel, Padding padding) {
  if (input.rank() != 3) throw std::invalid_argument("conv2d: input must be rank-3 HWC");
  if (kernel.rank() != 4) throw std::invalid_argument("conv2d: kernel must be rank-4 (k,k,c_in,c_out)");
  const auto& is = input.shape();
  const auto& ks = kernel.shape();
  const int h = is[0], w = is[1], cin = is[2];
  const int k = ks[0], cout = ks[3];
  if (ks[1] != k) throw std::invalid_argument("conv2d: kernel must be square");
  if (ks[2] != cin) throw std::invalid_argument("conv2d: kernel c_in does not match input channels");

  // window offsets [-k/2, k-1-k/2]; for odd k this is the centered window
  const int lo = -(k / 2);
  const int hi = k - 1 - (k / 2);

  Tensor out(std::vector<int>{h, w, cout});
  std::vector<double> acc(static_cast<size_t>(cout));
  const float* in = input.data();
  const float* kw = kernel.data();
  float* op = out.data();

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int dy = lo; dy <= hi; ++dy) {
        int sy = y + dy;
        if (padding == Padding::Replicate) {
          sy = std::clamp(sy, 0, h - 1);
        } else if (sy < 0 || sy >= h) {
          continue;
        }
        for (int dx = lo; dx <= hi; ++dx) {
          int sx = x + dx;
          if (padding == Padding::Replicate) {
            sx = std::clamp(sx, 0, w - 1);
          } else if (sx < 0 || sx >= w) {
            continue;
          }
          const float* src = in + (static_cast<size_t>(sy) * w + sx) * cin;
          const float* kk = kw + ((static_cast<size_t>(dy - lo) * k + (dx - lo)) * cin) * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const double v = src[ci];
            const float* kr = kk + static_cast<size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) acc[co] += v * static_cast<double>(kr[co]);
          }
        }
      }
      float* dst = op + (static_cast<size_t>(y) * w + x) * cout;
      for (int co = 0; co < cout; ++co) dst[co] = static_cast<float>(acc[co]);
    }
  }
  return out;
}

}  // namespace detail

Tensor conv2d(const Tensor& input, const Tensor& kernel, Padding padding) {
  if (kernel.rank() == 4 && kernel.shape()[0] % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel size must be odd");
  }
  return detail::conv2d_any(input, kernel, padding);
}

Tensor matvec(const Tensor& w, const Tensor& x, const Tensor& b) {
  if (w.rank() != 2 || x.rank() != 1 || b.rank() != 1) {
    throw std::invalid_argument("matvec: expects W rank-2, x rank-1, b rank-1");
  }
  const int m = w.shape()[0], n = w.shape()[1];
  if (x.size() != n || b.size() != m) {
    throw std::invalid_argument("matvec: dimension mismatch");
  }
  Tensor out(std::vector<int>{m});
  const float* wp = w.data();
  const float* xp = x.data();
  for (int i = 0; i < m; ++i) {
    double acc = static_cast<double>(b[i]);
    const float* row = wp + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += static_cast<double>(row[j]) * static_cast<double>(xp[j]);
    out[i] = static_cast<float>(acc);
  }
  return out;
}

int argmax(const Tensor& t) {
  if (t.rank() != 1) throw std::invalid_argument("argmax: expects a rank-1 tensor");
  int best = 0;
  for (int i = 1; i < t.size(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, float h) {
  if (!(h > 0.0f)) throw std::invalid_argument("finite_difference_gradient: h must be positive");
  Tensor g(x.shape());
  Tensor probe = x;
  for (int i = 0; i < x.size(); ++i) {
    const float xi = x[i];
    const float xp = xi + h;
    const float xm = xi - h;
    probe[i] = xp;
    const double fp = f(probe);
    probe[i] = xm;
    const double fm = f(probe);
    probe[i] = xi;
    g[i] = static_cast<float>((fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm)));
  }
  return g;
}

}  // namespace cia
