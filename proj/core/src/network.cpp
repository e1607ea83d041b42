#include "cia/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "cia/defenses.hpp"
#include "cia/errors.hpp"
#include "cia/prng.hpp"

namespace cia {

namespace {

void check_rank3_rgb(const std::vector<int>& s, const char* what) {
  if (s.size() != 3 || s[2] != 3) {
    throw std::invalid_argument(std::string(what) + ": expects an HWC image with 3 channels");
  }
}

Tensor color_backward(const Tensor& grad_out, const double (*m)[3]) {
  // both color transforms are affine, so the input gradient is M^T * g
  Tensor out(grad_out.shape());
  const float* in = grad_out.data();
  float* op = out.data();
  const int pixels = grad_out.size() / 3;
  for (int p = 0; p < pixels; ++p) {
    double g0 = in[p * 3 + 0], g1 = in[p * 3 + 1], g2 = in[p * 3 + 2];
    for (int j = 0; j < 3; ++j) {
      op[p * 3 + j] = static_cast<float>(m[0][j] * g0 + m[1][j] * g1 + m[2][j] * g2);
    }
  }
  return out;
}

std::vector<int> infer_shape(const LayerSpec& l, const std::vector<int>& in) {
  switch (l.kind) {
    case LayerKind::Conv: {
      if (in.size() != 3) throw std::invalid_argument("conv layer expects rank-3 input");
      if (in[2] != l.c_in) throw std::invalid_argument("conv layer input channels mismatch");
      if (l.k <= 0) throw std::invalid_argument("conv kernel size must be positive");
      const auto& ws = l.weights.shape();
      if (ws != std::vector<int>{l.k, l.k, l.c_in, l.c_out}) {
        throw std::invalid_argument("conv layer weights shape mismatch");
      }
      if (l.bias.shape() != std::vector<int>{l.c_out}) {
        throw std::invalid_argument("conv layer bias shape mismatch");
      }
      return {in[0], in[1], l.c_out};
    }
    case LayerKind::Relu:
      return in;
    case LayerKind::Dense: {
      if (in.size() != 1 || in[0] != l.n_in) {
        throw std::invalid_argument("dense layer expects a rank-1 input of size n_in");
      }
      if (l.weights.shape() != std::vector<int>{l.n_out, l.n_in}) {
        throw std::invalid_argument("dense layer weights shape mismatch");
      }
      if (l.bias.shape() != std::vector<int>{l.n_out}) {
        throw std::invalid_argument("dense layer bias shape mismatch");
      }
      return {l.n_out};
    }
    case LayerKind::Flatten: {
      int n = 1;
      for (int d : in) n *= d;
      return {n};
    }
    case LayerKind::AvgPool: {
      if (in.size() != 3) throw std::invalid_argument("avgpool expects rank-3 input");
      if (l.pool <= 0 || in[0] % l.pool != 0 || in[1] % l.pool != 0) {
        throw std::invalid_argument("avgpool size must divide the spatial extents");
      }
      return {in[0] / l.pool, in[1] / l.pool, in[2]};
    }
    case LayerKind::FixedTransform: {
      if (l.transform == TransformId::RgbToYcbcr || l.transform == TransformId::YcbcrToRgb) {
        check_rank3_rgb(in, "color transform layer");
      }
      if (l.transform == TransformId::HighPass3 && in.size() != 3) {
        throw std::invalid_argument("high-pass layer expects rank-3 input");
      }
      return in;
    }
  }
  throw std::invalid_argument("unknown layer kind");
}

// 3x3 replicate-edge box blur and its adjoint. HighPass3 is identity minus
// the blur; replicate clamping makes the blur non-symmetric at the borders,
// so the backward pass must scatter rather than re-apply the blur.
Tensor box3_replicate(const Tensor& x) {
  const auto& s = x.shape();
  const int h = s[0], w = s[1], c = s[2];
  Tensor y(x.shape());
  for (int py = 0; py < h; ++py)
    for (int px = 0; px < w; ++px)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            acc += x.at(std::clamp(py + dy, 0, h - 1), std::clamp(px + dx, 0, w - 1), ch);
          }
        y.at(py, px, ch) = static_cast<float>(acc / 9.0);
      }
  return y;
}

Tensor box3_replicate_adjoint(const Tensor& g) {
  const auto& s = g.shape();
  const int h = s[0], w = s[1], c = s[2];
  Tensor y(g.shape());
  for (int py = 0; py < h; ++py)
    for (int px = 0; px < w; ++px)
      for (int ch = 0; ch < c; ++ch) {
        const float v = g.at(py, px, ch) / 9.0f;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            y.at(std::clamp(py + dy, 0, h - 1), std::clamp(px + dx, 0, w - 1), ch) += v;
          }
      }
  return y;
}

Tensor layer_forward(const LayerSpec& l, const Tensor& x) {
  switch (l.kind) {
    case LayerKind::Conv: {
      Tensor y = detail::conv2d_any(x, l.weights, l.padding);
      float* p = y.data();
      const int c = l.c_out;
      for (int i = 0; i < y.size(); ++i) p[i] += l.bias[i % c];
      return y;
    }
    case LayerKind::Relu:
      return elementwise_map(x, ScalarFn::Relu);
    case LayerKind::Dense:
      return matvec(l.weights, x, l.bias);
    case LayerKind::Flatten:
      return x.reshaped({x.size()});
    case LayerKind::AvgPool: {
      const auto& s = x.shape();
      const int k = l.pool, oh = s[0] / k, ow = s[1] / k, c = s[2];
      Tensor y(std::vector<int>{oh, ow, c});
      const double inv = 1.0 / (k * k);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx) acc += x.at(oy * k + dy, ox * k + dx, ch);
            y.at(oy, ox, ch) = static_cast<float>(acc * inv);
          }
      return y;
    }
    case LayerKind::FixedTransform:
      switch (l.transform) {
        case TransformId::Identity: return x;
        case TransformId::RgbToYcbcr: return rgb_to_ycbcr(x);
        case TransformId::YcbcrToRgb: return ycbcr_to_rgb(x);
        case TransformId::Clamp01: {
          Tensor y = x;
          float* p = y.data();
          for (int i = 0; i < y.size(); ++i) p[i] = std::clamp(p[i], 0.0f, 1.0f);
          return y;
        }
        case TransformId::HighPass3: {
          Tensor y = box3_replicate(x);
          for (int i = 0; i < y.size(); ++i) y[i] = x[i] - y[i];
          return y;
        }
      }
      throw std::invalid_argument("unknown transform id");
  }
  throw std::invalid_argument("unknown layer kind");
}

struct LayerGrads {
  Tensor input;
  Tensor w, b;  // empty unless requested and trainable
};

LayerGrads layer_backward(const LayerSpec& l, const Tensor& x, const Tensor& grad_out,
                          bool want_params) {
  LayerGrads g;
  switch (l.kind) {
    case LayerKind::Conv: {
      const auto& is = x.shape();
      const int h = is[0], w = is[1], cin = is[2];
      const int k = l.k, cout = l.c_out;
      const int lo = -(k / 2), hi = k - 1 - (k / 2);
      std::vector<double> gin(static_cast<size_t>(x.size()), 0.0);
      std::vector<double> gw;
      std::vector<double> gb;
      if (want_params) {
        gw.assign(static_cast<size_t>(l.weights.size()), 0.0);
        gb.assign(static_cast<size_t>(cout), 0.0);
      }
      const float* in = x.data();
      const float* kw = l.weights.data();
      const float* go = grad_out.data();
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          const float* gvec = go + (static_cast<size_t>(y) * w + xx) * cout;
          if (want_params) {
            for (int co = 0; co < cout; ++co) gb[co] += gvec[co];
          }
          for (int dy = lo; dy <= hi; ++dy) {
            int sy = y + dy;
            if (l.padding == Padding::Replicate) sy = std::clamp(sy, 0, h - 1);
            else if (sy < 0 || sy >= h) continue;
            for (int dx = lo; dx <= hi; ++dx) {
              int sx = xx + dx;
              if (l.padding == Padding::Replicate) sx = std::clamp(sx, 0, w - 1);
              else if (sx < 0 || sx >= w) continue;
              const size_t src = (static_cast<size_t>(sy) * w + sx) * cin;
              const size_t kbase = (static_cast<size_t>(dy - lo) * k + (dx - lo)) * cin;
              for (int ci = 0; ci < cin; ++ci) {
                const float* kr = kw + (kbase + ci) * cout;
                double acc = 0.0;
                for (int co = 0; co < cout; ++co) acc += static_cast<double>(kr[co]) * gvec[co];
                gin[src + ci] += acc;
                if (want_params) {
                  const double v = in[src + ci];
                  double* gwr = gw.data() + (kbase + ci) * cout;
                  for (int co = 0; co < cout; ++co) gwr[co] += v * gvec[co];
                }
              }
            }
          }
        }
      }
      g.input = Tensor(x.shape());
      for (int i = 0; i < g.input.size(); ++i) g.input[i] = static_cast<float>(gin[i]);
      if (want_params) {
        g.w = Tensor(l.weights.shape());
        for (int i = 0; i < g.w.size(); ++i) g.w[i] = static_cast<float>(gw[i]);
        g.b = Tensor(l.bias.shape());
        for (int i = 0; i < g.b.size(); ++i) g.b[i] = static_cast<float>(gb[i]);
      }
      return g;
    }
    case LayerKind::Relu: {
      g.input = grad_out;
      for (int i = 0; i < g.input.size(); ++i) {
        if (!(x[i] > 0.0f)) g.input[i] = 0.0f;
      }
      return g;
    }
    case LayerKind::Dense: {
      const int m = l.n_out, n = l.n_in;
      g.input = Tensor(std::vector<int>{n});
      const float* wp = l.weights.data();
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += static_cast<double>(wp[static_cast<size_t>(i) * n + j]) * grad_out[i];
        g.input[j] = static_cast<float>(acc);
      }
      if (want_params) {
        g.w = Tensor(l.weights.shape());
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            g.w[i * n + j] = static_cast<float>(static_cast<double>(grad_out[i]) * x[j]);
        g.b = grad_out;
      }
      return g;
    }
    case LayerKind::Flatten: {
      g.input = grad_out.reshaped(x.shape());
      return g;
    }
    case LayerKind::AvgPool: {
      const auto& s = x.shape();
      const int k = l.pool, oh = s[0] / k, ow = s[1] / k, c = s[2];
      g.input = Tensor(x.shape());
      const float inv = 1.0f / static_cast<float>(k * k);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int ch = 0; ch < c; ++ch) {
            const float v = grad_out.at(oy, ox, ch) * inv;
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx) g.input.at(oy * k + dy, ox * k + dx, ch) = v;
          }
      return g;
    }
    case LayerKind::FixedTransform:
      switch (l.transform) {
        case TransformId::Identity:
          g.input = grad_out;
          return g;
        case TransformId::RgbToYcbcr:
          g.input = color_backward(grad_out, detail::ycbcr_forward_matrix());
          return g;
        case TransformId::YcbcrToRgb:
          g.input = color_backward(grad_out, detail::ycbcr_inverse_matrix());
          return g;
        case TransformId::Clamp01: {
          g.input = grad_out;
          for (int i = 0; i < g.input.size(); ++i) {
            if (!(x[i] > 0.0f && x[i] < 1.0f)) g.input[i] = 0.0f;
          }
          return g;
        }
      }
      throw std::invalid_argument("unknown transform id");
  }
  throw std::invalid_argument("unknown layer kind");
}

}  // namespace

LayerSpec LayerSpec::conv(int k, int c_in, int c_out, Padding padding) {
  LayerSpec l;
  l.kind = LayerKind::Conv;
  l.k = k;
  l.c_in = c_in;
  l.c_out = c_out;
  l.padding = padding;
  l.weights = Tensor(std::vector<int>{k, k, c_in, c_out});
  l.bias = Tensor(std::vector<int>{c_out});
  return l;
}

LayerSpec LayerSpec::relu() {
  LayerSpec l;
  l.kind = LayerKind::Relu;
  return l;
}

LayerSpec LayerSpec::dense(int n_in, int n_out) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.n_in = n_in;
  l.n_out = n_out;
  l.weights = Tensor(std::vector<int>{n_out, n_in});
  l.bias = Tensor(std::vector<int>{n_out});
  return l;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::Flatten;
  return l;
}

LayerSpec LayerSpec::avgpool(int k) {
  LayerSpec l;
  l.kind = LayerKind::AvgPool;
  l.pool = k;
  return l;
}

LayerSpec LayerSpec::fixed_transform(TransformId id) {
  LayerSpec l;
  l.kind = LayerKind::FixedTransform;
  l.transform = id;
  return l;
}

Network::Network(std::vector<int> input_shape, int num_classes, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), num_classes_(num_classes), layers_(std::move(layers)) {
  if (num_classes_ < 2) throw std::invalid_argument("network needs at least two classes");
  if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");
  shapes_.push_back(input_shape_);
  std::vector<int> cur = input_shape_;
  for (const auto& l : layers_) {
    cur = infer_shape(l, cur);
    shapes_.push_back(cur);
  }
  if (cur != std::vector<int>{num_classes_}) {
    throw std::invalid_argument("network must end in a rank-1 logit vector of num_classes");
  }
}

ClassifierOutput Network::forward(const Tensor& x) const {
  if (x.shape() != input_shape_) throw std::invalid_argument("forward: input shape mismatch");
  Tensor cur = x;
  for (const auto& l : layers_) cur = layer_forward(l, cur);
  ClassifierOutput out;
  out.logits = std::move(cur);
  out.probs = softmax(out.logits);
  out.predicted_class = argmax(out.probs);
  return out;
}

Tensor Network::backward_input(const Tensor& x, const Tensor& grad_logits) const {
  if (x.shape() != input_shape_) throw std::invalid_argument("backward_input: input shape mismatch");
  if (grad_logits.shape() != std::vector<int>{num_classes_}) {
    throw std::invalid_argument("backward_input: grad_logits must match num_classes");
  }
  std::vector<Tensor> acts;
  acts.reserve(layers_.size() + 1);
  acts.push_back(x);
  for (const auto& l : layers_) acts.push_back(layer_forward(l, acts.back()));
  Tensor g = grad_logits;
  for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
    g = layer_backward(layers_[i], acts[static_cast<size_t>(i)], g, false).input;
  }
  return g;
}

Network Network::prepend(const std::vector<LayerSpec>& front) const {
  std::vector<LayerSpec> combined = front;
  combined.insert(combined.end(), layers_.begin(), layers_.end());
  // the constructor re-validates the whole chain, so a front stack whose
  // output does not match this network's input is rejected there
  return Network(input_shape_, num_classes_, std::move(combined));
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1) throw std::invalid_argument("softmax: expects rank-1 logits");
  Tensor out(logits.shape());
  double mx = logits[0];
  for (int i = 1; i < logits.size(); ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double z = 0.0;
  for (int i = 0; i < logits.size(); ++i) z += std::exp(static_cast<double>(logits[i]) - mx);
  for (int i = 0; i < logits.size(); ++i) {
    out[i] = static_cast<float>(std::exp(static_cast<double>(logits[i]) - mx) / z);
  }
  return out;
}

std::pair<double, Tensor> cross_entropy(const Tensor& logits, int target_class) {
  if (logits.rank() != 1) throw std::invalid_argument("cross_entropy: expects rank-1 logits");
  if (target_class < 0 || target_class >= logits.size()) {
    throw std::invalid_argument("cross_entropy: class index out of range");
  }
  double mx = logits[0];
  for (int i = 1; i < logits.size(); ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double z = 0.0;
  for (int i = 0; i < logits.size(); ++i) z += std::exp(static_cast<double>(logits[i]) - mx);
  const double logz = std::log(z) + mx;
  const double loss = logz - static_cast<double>(logits[target_class]);
  Tensor grad(logits.shape());
  for (int i = 0; i < logits.size(); ++i) {
    double p = std::exp(static_cast<double>(logits[i]) - mx) / z;
    grad[i] = static_cast<float>(p - (i == target_class ? 1.0 : 0.0));
  }
  return {loss, grad};
}

Network train(const Network& init, const std::vector<Tensor>& images,
              const std::vector<uint8_t>& labels, const TrainOptions& opts, uint64_t seed) {
  if (images.size() != labels.size()) throw std::invalid_argument("train: images/labels length mismatch");
  if (opts.epochs < 0 || opts.batch <= 0) throw std::invalid_argument("train: bad options");
  std::vector<LayerSpec> layers = init.layers();

  // Adam moments per trainable layer
  struct Moments { std::vector<double> mw, vw, mb, vb; };
  std::vector<Moments> mom(layers.size());
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].trainable()) {
      mom[i].mw.assign(static_cast<size_t>(layers[i].weights.size()), 0.0);
      mom[i].vw.assign(static_cast<size_t>(layers[i].weights.size()), 0.0);
      mom[i].mb.assign(static_cast<size_t>(layers[i].bias.size()), 0.0);
      mom[i].vb.assign(static_cast<size_t>(layers[i].bias.size()), 0.0);
    }
  }

  const size_t n = images.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  long step = 0;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    SplitMix64 rng(substream_seed(seed, static_cast<uint64_t>(epoch)));
    for (size_t i = n; i > 1; --i) {
      size_t j = rng.below(i);
      std::swap(order[i - 1], order[j]);
    }
    for (size_t start = 0; start < n; start += static_cast<size_t>(opts.batch)) {
      const size_t end = std::min(n, start + static_cast<size_t>(opts.batch));
      const double scale = 1.0 / static_cast<double>(end - start);

      // summed parameter gradients for this batch
      std::vector<std::vector<double>> gw(layers.size()), gb(layers.size());
      for (size_t li = 0; li < layers.size(); ++li) {
        if (layers[li].trainable()) {
          gw[li].assign(static_cast<size_t>(layers[li].weights.size()), 0.0);
          gb[li].assign(static_cast<size_t>(layers[li].bias.size()), 0.0);
        }
      }

      for (size_t s = start; s < end; ++s) {
        const Tensor& x = images[order[s]];
        std::vector<Tensor> acts;
        acts.reserve(layers.size() + 1);
        acts.push_back(x);
        for (const auto& l : layers) acts.push_back(layer_forward(l, acts.back()));
        auto [loss, g] = cross_entropy(acts.back(), labels[order[s]]);
        (void)loss;
        for (int li = static_cast<int>(layers.size()) - 1; li >= 0; --li) {
          LayerGrads lg = layer_backward(layers[static_cast<size_t>(li)],
                                         acts[static_cast<size_t>(li)], g,
                                         layers[static_cast<size_t>(li)].trainable());
          if (layers[static_cast<size_t>(li)].trainable()) {
            for (int e = 0; e < lg.w.size(); ++e) gw[static_cast<size_t>(li)][static_cast<size_t>(e)] += lg.w[e];
            for (int e = 0; e < lg.b.size(); ++e) gb[static_cast<size_t>(li)][static_cast<size_t>(e)] += lg.b[e];
          }
          g = std::move(lg.input);
        }
      }

      ++step;
      const double c1 = 1.0 - std::pow(static_cast<double>(opts.beta1), static_cast<double>(step));
      const double c2 = 1.0 - std::pow(static_cast<double>(opts.beta2), static_cast<double>(step));
      for (size_t li = 0; li < layers.size(); ++li) {
        if (!layers[li].trainable()) continue;
        auto update = [&](Tensor& param, std::vector<double>& m, std::vector<double>& v,
                          const std::vector<double>& grad_sum) {
          for (size_t e = 0; e < m.size(); ++e) {
            const double gval = grad_sum[e] * scale;
            m[e] = opts.beta1 * m[e] + (1.0 - opts.beta1) * gval;
            v[e] = opts.beta2 * v[e] + (1.0 - opts.beta2) * gval * gval;
            const double mh = m[e] / c1;
            const double vh = v[e] / c2;
            param[static_cast<int>(e)] = static_cast<float>(
                static_cast<double>(param[static_cast<int>(e)]) -
                static_cast<double>(opts.lr) * mh / (std::sqrt(vh) + static_cast<double>(opts.eps)));
          }
        };
        update(layers[li].weights, mom[li].mw, mom[li].vw, gw[li]);
        update(layers[li].bias, mom[li].mb, mom[li].vb, gb[li]);
      }
    }
  }
  return Network(init.input_shape(), init.num_classes(), std::move(layers));
}

double accuracy(const Network& net, const std::vector<Tensor>& images,
                const std::vector<uint8_t>& labels) {
  if (images.empty()) throw std::invalid_argument("accuracy: empty set");
  if (images.size() != labels.size()) throw std::invalid_argument("accuracy: images/labels length mismatch");
  size_t hit = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    if (net.forward(images[i]).predicted_class == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(images.size());
}

Network make_reference_network(int variant, uint64_t seed) {
  // The five variants deliberately differ in how they sample the image:
  // kernel support, pooling placement, working resolution, and color space.
  // That keeps their fine-scale feature banks (and hence their soft spots)
  // decorrelated even when trained on the same task.
  std::vector<LayerSpec> ls;
  auto head = [&](int flat, int width) {
    ls.push_back(LayerSpec::flatten());
    ls.push_back(LayerSpec::dense(flat, width));
    ls.push_back(LayerSpec::relu());
    ls.push_back(LayerSpec::dense(width, 10));
  };
  switch (variant) {
    case 0:  // reference: 3x3 stem at full resolution, two pool stages
      ls.push_back(LayerSpec::conv(3, 3, 8, Padding::Zero));
      ls.push_back(LayerSpec::relu());
      ls.push_back(LayerSpec::avgpool(2));
      ls.push_back(LayerSpec::conv(3, 8, 16, Padding::Zero));
      ls.push_back(LayerSpec::relu());
      ls.push_back(LayerSpec::avgpool(2));
      head(8 * 8 * 16, 64);
      break;
    case 1:  // pool-first: works at half resolution throughout
      ls.push_back(LayerSpec::avgpool(2));
      ls.push_back(LayerSpec::conv(3, 3, 12, Padding::Zero));
      ls.push_back(LayerSpec::relu());
      ls.push_back(LayerSpec::conv(3, 12, 16, Padding::Zero));
      ls.push_back(LayerSpec::relu());
      ls.push_back(LayerSpec::avgpool(2));
      head(8 * 8 * 16, 64);
      break;
    case 2:  // YCbCr front, half resolution, 5x5 support
      ls.push_back(LayerSpec::fixed_transform(TransformId::RgbToYcbcr));
      ls.push_back(LayerSpec::avgpool(2));
      ls.push_back(LayerSpec::conv(5, 3, 12, Padding::Replicate));
      ls.push_back(LayerSpec::relu());
      ls.push_back(LayerSpec::conv(3, 12, 16, Padding::Replicate));
      ls.push_back(LayerSpec::relu());
      ls.push_back(LayerSpec::avgpool(2));
      head(8 * 8 * 16, 72);
      break;
    case 3:  // 5x5 stem at full resolution, single late pool
      ls.push_back(LayerSpec::conv(5, 3, 8, Padding::Zero));
      ls.push_back(LayerSpec::relu());
      ls.push_back(LayerSpec::conv(3, 8, 12, Padding::Zero));
      ls.push_back(LayerSpec::relu());
      ls.push_back(LayerSpec::avgpool(4));
      head(8 * 8 * 12, 80);
      break;
    case 4:  // wide 7x7 stem over a smoothed view
      ls.push_back(LayerSpec::conv(7, 3, 8, Padding::Replicate));
      ls.push_back(LayerSpec::relu());
      ls.push_back(LayerSpec::avgpool(2));
      ls.push_back(LayerSpec::conv(5, 8, 16, Padding::Replicate));
      ls.push_back(LayerSpec::relu());
      ls.push_back(LayerSpec::avgpool(2));
      head(8 * 8 * 16, 64);
      break;
    default: throw std::invalid_argument("arch variant must be 0..4");
  }

  SplitMix64 rng(seed);
  for (auto& l : ls) {
    if (!l.trainable()) continue;
    double fan_in, fan_out;
    if (l.kind == LayerKind::Conv) {
      fan_in = static_cast<double>(l.k) * l.k * l.c_in;
      fan_out = static_cast<double>(l.k) * l.k * l.c_out;
    } else {
      fan_in = l.n_in;
      fan_out = l.n_out;
    }
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < l.weights.size(); ++i) {
      l.weights[i] = static_cast<float>((2.0 * rng.next_unit() - 1.0) * s);
    }
    // small positive conv biases keep every filter's ReLU initially active on
    // near-constant inputs; zero biases can strand half the stem dead at the
    // DC level and collapse training to the uniform-output minimum
    if (l.kind == LayerKind::Conv) {
      for (int i = 0; i < l.bias.size(); ++i) l.bias[i] = 0.05f;
    }
  }
  return Network({32, 32, 3}, 10, std::move(ls));
}

// ---------------------------------------------------------------------------
// model file format "CIAN" version 1 (little-endian):
//   magic[4] version:u32 num_classes:u32 H:u32 W:u32 C:u32 layer_count:u32
//   then per layer: kind:u8, kind-specific u32 fields, float32 payloads
//     conv: k c_in c_out padding, then weights then bias
//     dense: n_in n_out, then weights then bias
//     avgpool: k        fixed_transform: id       relu/flatten: nothing
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::FILE* f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  if (std::fwrite(b, 1, 4, f) != 4) throw FormatError(FormatError::Kind::Io, "write failed");
}

void put_f32s(std::FILE* f, const Tensor& t) {
  for (int i = 0; i < t.size(); ++i) put_u32(f, std::bit_cast<uint32_t>(t[i]));
}

uint32_t get_u32(std::FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw FormatError(FormatError::Kind::Truncated, "unexpected end of file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void get_f32s(std::FILE* f, Tensor& t) {
  for (int i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(get_u32(f));
}

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};

}  // namespace

void save_network(const Network& net, const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw FormatError(FormatError::Kind::Io, "cannot open " + path + " for writing");
  if (std::fwrite("CIAN", 1, 4, f.get()) != 4) throw FormatError(FormatError::Kind::Io, "write failed");
  put_u32(f.get(), 1);
  put_u32(f.get(), static_cast<uint32_t>(net.num_classes()));
  const auto& in = net.input_shape();
  put_u32(f.get(), static_cast<uint32_t>(in[0]));
  put_u32(f.get(), static_cast<uint32_t>(in[1]));
  put_u32(f.get(), static_cast<uint32_t>(in[2]));
  put_u32(f.get(), static_cast<uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    unsigned char kind = static_cast<unsigned char>(l.kind);
    if (std::fwrite(&kind, 1, 1, f.get()) != 1) throw FormatError(FormatError::Kind::Io, "write failed");
    switch (l.kind) {
      case LayerKind::Conv:
        put_u32(f.get(), static_cast<uint32_t>(l.k));
        put_u32(f.get(), static_cast<uint32_t>(l.c_in));
        put_u32(f.get(), static_cast<uint32_t>(l.c_out));
        put_u32(f.get(), l.padding == Padding::Replicate ? 1u : 0u);
        put_f32s(f.get(), l.weights);
        put_f32s(f.get(), l.bias);
        break;
      case LayerKind::Dense:
        put_u32(f.get(), static_cast<uint32_t>(l.n_in));
        put_u32(f.get(), static_cast<uint32_t>(l.n_out));
        put_f32s(f.get(), l.weights);
        put_f32s(f.get(), l.bias);
        break;
      case LayerKind::AvgPool:
        put_u32(f.get(), static_cast<uint32_t>(l.pool));
        break;
      case LayerKind::FixedTransform:
        put_u32(f.get(), static_cast<uint32_t>(l.transform));
        break;
      case LayerKind::Relu:
      case LayerKind::Flatten:
        break;
    }
  }
  if (std::fflush(f.get()) != 0) throw FormatError(FormatError::Kind::Io, "flush failed");
}

Network load_network(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw FormatError(FormatError::Kind::Io, "cannot open " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4) throw FormatError(FormatError::Kind::Truncated, "file too short");
  if (std::memcmp(magic, "CIAN", 4) != 0) throw FormatError(FormatError::Kind::BadMagic, "not a model file");
  const uint32_t version = get_u32(f.get());
  if (version != 1) throw FormatError(FormatError::Kind::BadVersion, "unsupported model version");
  const uint32_t m = get_u32(f.get());
  const uint32_t h = get_u32(f.get());
  const uint32_t w = get_u32(f.get());
  const uint32_t c = get_u32(f.get());
  const uint32_t count = get_u32(f.get());
  if (m < 2 || m > 1u << 16 || h == 0 || w == 0 || c == 0 || count == 0 || count > 1u << 12 ||
      h > 1u << 14 || w > 1u << 14 || c > 1u << 10) {
    throw FormatError(FormatError::Kind::BadValue, "implausible model header");
  }
  std::vector<LayerSpec> layers;
  layers.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    unsigned char kind;
    if (std::fread(&kind, 1, 1, f.get()) != 1) throw FormatError(FormatError::Kind::Truncated, "unexpected end of file");
    switch (static_cast<LayerKind>(kind)) {
      case LayerKind::Conv: {
        const int k = static_cast<int>(get_u32(f.get()));
        const int cin = static_cast<int>(get_u32(f.get()));
        const int cout = static_cast<int>(get_u32(f.get()));
        const uint32_t pad = get_u32(f.get());
        if (k <= 0 || k > 64 || cin <= 0 || cin > 4096 || cout <= 0 || cout > 4096 || pad > 1) {
          throw FormatError(FormatError::Kind::BadValue, "implausible conv layer");
        }
        LayerSpec l = LayerSpec::conv(k, cin, cout, pad ? Padding::Replicate : Padding::Zero);
        get_f32s(f.get(), l.weights);
        get_f32s(f.get(), l.bias);
        layers.push_back(std::move(l));
        break;
      }
      case LayerKind::Dense: {
        const int nin = static_cast<int>(get_u32(f.get()));
        const int nout = static_cast<int>(get_u32(f.get()));
        if (nin <= 0 || nin > 1 << 22 || nout <= 0 || nout > 1 << 22) {
          throw FormatError(FormatError::Kind::BadValue, "implausible dense layer");
        }
        LayerSpec l = LayerSpec::dense(nin, nout);
        get_f32s(f.get(), l.weights);
        get_f32s(f.get(), l.bias);
        layers.push_back(std::move(l));
        break;
      }
      case LayerKind::AvgPool: {
        const int k = static_cast<int>(get_u32(f.get()));
        if (k <= 0 || k > 1 << 14) throw FormatError(FormatError::Kind::BadValue, "implausible pool size");
        layers.push_back(LayerSpec::avgpool(k));
        break;
      }
      case LayerKind::FixedTransform: {
        const uint32_t id = get_u32(f.get());
        if (id > static_cast<uint32_t>(TransformId::Clamp01)) {
          throw FormatError(FormatError::Kind::BadValue, "unknown transform id");
        }
        layers.push_back(LayerSpec::fixed_transform(static_cast<TransformId>(id)));
        break;
      }
      case LayerKind::Relu:
        layers.push_back(LayerSpec::relu());
        break;
      case LayerKind::Flatten:
        layers.push_back(LayerSpec::flatten());
        break;
      default:
        throw FormatError(FormatError::Kind::BadValue, "unknown layer kind tag");
    }
  }
  try {
    return Network({static_cast<int>(h), static_cast<int>(w), static_cast<int>(c)},
                   static_cast<int>(m), std::move(layers));
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatError::Kind::ShapeMismatch, e.what());
  }
}

}  // namespace cia
