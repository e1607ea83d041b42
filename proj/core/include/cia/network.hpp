#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cia/tensor.hpp"

namespace cia {

enum class LayerKind : uint8_t {
  Conv = 0,
  Relu = 1,
  Dense = 2,
  Flatten = 3,
  AvgPool = 4,
  FixedTransform = 5,
};

/// Built-in parameter-free transforms usable as layers. The color-space pair
/// and the clamp exist so defenses can be prepended to a classifier as plain
/// layers and stay differentiable. HighPass3 subtracts a 3x3 replicate-edge
/// box blur from the input, so a stack behind it only ever sees structure
/// finer than the blur window.
enum class TransformId : uint32_t {
  Identity = 0,
  RgbToYcbcr = 1,
  YcbcrToRgb = 2,
  Clamp01 = 3,
  HighPass3 = 4,
};

/// Tagged union of layer configurations; only the fields for `kind` are
/// meaningful. Kept flat (no std::variant) so serialization is a switch.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;

  // Conv
  int k = 0, c_in = 0, c_out = 0;
  Padding padding = Padding::Zero;
  Tensor weights;  // conv: (k,k,c_in,c_out); dense: (n_out,n_in)
  Tensor bias;     // conv: (c_out); dense: (n_out)

  // Dense
  int n_in = 0, n_out = 0;

  // AvgPool
  int pool = 0;

  // FixedTransform
  TransformId transform = TransformId::Identity;

  bool trainable() const { return kind == LayerKind::Conv || kind == LayerKind::Dense; }

  static LayerSpec conv(int k, int c_in, int c_out, Padding padding);
  static LayerSpec relu();
  static LayerSpec dense(int n_in, int n_out);
  static LayerSpec flatten();
  static LayerSpec avgpool(int k);
  static LayerSpec fixed_transform(TransformId id);
};

struct ClassifierOutput {
  Tensor logits;
  Tensor probs;  // softmax of logits
  int predicted_class = 0;
};

/// Feed-forward image classifier: a validated stack of layers mapping an HWC
/// input to m logits. Weights are fixed once the network is built; training
/// and prepending return new networks.
class Network {
 public:
  Network(std::vector<int> input_shape, int num_classes, std::vector<LayerSpec> layers);

  const std::vector<int>& input_shape() const { return input_shape_; }
  int num_classes() const { return num_classes_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  /// Output shape of each layer; entry 0 is the input shape.
  const std::vector<std::vector<int>>& stage_shapes() const { return shapes_; }

  ClassifierOutput forward(const Tensor& x) const;

  /// Gradient of (whatever grad_logits is the gradient of) with respect to
  /// the input, holding weights fixed.
  Tensor backward_input(const Tensor& x, const Tensor& grad_logits) const;

  /// New network computing this(front(x)). The front stack must map the
  /// original input shape to itself or to whatever this network accepts.
  Network prepend(const std::vector<LayerSpec>& front) const;

 private:
  friend class NetworkAccess;
  std::vector<int> input_shape_;
  int num_classes_;
  std::vector<LayerSpec> layers_;
  std::vector<std::vector<int>> shapes_;
};

/// Numerically stable softmax (shift by max, normalize in double).
Tensor softmax(const Tensor& logits);

/// Cross-entropy of softmax(logits) against a one-hot class via log-sum-exp;
/// returns the loss and its gradient w.r.t. the logits (softmax - onehot).
std::pair<double, Tensor> cross_entropy(const Tensor& logits, int target_class);

struct TrainOptions {
  int epochs = 4;
  int batch = 32;
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Minibatch Adam on cross-entropy. Deterministic for a given seed: the
/// shuffle order and every arithmetic step are fixed. epochs = 0 returns the
/// initial weights unchanged.
Network train(const Network& init, const std::vector<Tensor>& images,
              const std::vector<uint8_t>& labels, const TrainOptions& opts,
              uint64_t seed);

/// Mean top-1 accuracy of the classifier on a labeled set.
double accuracy(const Network& net, const std::vector<Tensor>& images,
                const std::vector<uint8_t>& labels);

/// The small reference classifier family used throughout: five variants
/// (0..4) of a conv-pool-conv-pool-dense-dense stack over 32x32x3 inputs,
/// differing in width, head depth, or first-layer kernel. Weights come
/// uniformly from +-sqrt(6/(fan_in+fan_out)) seeded by `seed`.
Network make_reference_network(int variant, uint64_t seed);

/// Binary model file ("CIAN" v1, little-endian). Round-trips bit-exactly.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace cia
