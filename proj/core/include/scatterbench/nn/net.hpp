#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "scatterbench/nn/tensor.hpp"

namespace scatterbench::nn {

struct Conv2d {
  int kh = 3;
  int kw = 3;
  int c_in = 1;
  int c_out = 1;
  int stride = 1;
  int pad = 1;
  bool bias = false;
};

struct BatchNorm {
  int channels = 1;
  float momentum = 0.1f;
  float eps = 1e-5f;
};

struct LeakyReLU {
  float slope = 0.01f;
};

/// 2x2 window, stride 2, floor on odd sizes.
struct MaxPool2 {};

/// Half-pixel bilinear upsampling. With one input the output is twice the input
/// size; with a second input the output takes that tensor's spatial size.
struct BilinearUp2 {};

/// Channel concatenation of two inputs.
struct Concat {};

using Layer = std::variant<Conv2d, BatchNorm, LeakyReLU, MaxPool2, BilinearUp2, Concat>;

std::string layer_name(const Layer& layer);

/// A node consumes the outputs of earlier nodes; index kNetInput is the network input.
inline constexpr int kNetInput = -1;

struct Node {
  Layer layer;
  std::vector<int> inputs;
};

/// Learned state of one node. Conv: weight (c_out, c_in, kh, kw) and optional bias.
/// BatchNorm: weight = scale, bias = shift, plus running statistics.
struct NodeState {
  std::vector<float> weight;
  std::vector<float> bias;
  std::vector<float> grad_weight;
  std::vector<float> grad_bias;
  std::vector<float> running_mean;
  std::vector<float> running_var;
};

/// A trainable tensor and its gradient accumulator.
struct ParamRef {
  std::span<float> value;
  std::span<float> grad;
};

enum class Mode { Train, Eval };

/// Directed acyclic graph of layers evaluated in insertion order; the last node is the output.
class Net {
 public:
  explicit Net(int input_channels = 1) : input_channels_(input_channels) {}

  int input_channels() const noexcept { return input_channels_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  const NodeState& state(std::size_t i) const { return states_.at(i); }
  NodeState& state(std::size_t i) { return states_.at(i); }

  /// Appends a node reading from `inputs` (defaults to the previous node) and returns its index.
  int add(Layer layer, std::vector<int> inputs = {});

  /// Kaiming-uniform conv weights (fan-in, leaky-ReLU gain), zero biases, BN scale 1 shift 0.
  void init_weights(std::uint64_t seed, float leaky_slope = 0.01f);

  /// Output shape for a given input; throws InvalidArgument naming the offending node.
  Shape4 output_shape(const Shape4& input) const;
  /// Shapes of every node's output.
  std::vector<Shape4> node_shapes(const Shape4& input) const;

  /// Train mode uses batch statistics, updates running statistics and caches
  /// activations for backward. Eval mode frees activations as soon as they are consumed.
  Tensor4 forward(const Tensor4& x, Mode mode);

  /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
  /// Requires a preceding train-mode forward.
  Tensor4 backward(const Tensor4& grad_out);

  void zero_grad();
  void clear_cache();
  bool has_cache() const noexcept { return !cache_.outputs.empty(); }

  std::vector<ParamRef> parameters();
  std::size_t parameter_count() const;

  // Checks every layer output for NaN/Inf. On by default in debug builds.
  void set_check_finite(bool on) noexcept { check_finite_ = on; }

 private:
  struct Cache {
    std::vector<Tensor4> outputs;
    std::vector<std::vector<double>> bn_mean;
    std::vector<std::vector<double>> bn_inv_std;
    std::vector<std::vector<std::uint32_t>> pool_argmax;
  };

  const Tensor4& input_of(const Tensor4& x, const std::vector<Tensor4>& outs, int id) const;

  int input_channels_;
  std::vector<Node> nodes_;
  std::vector<NodeState> states_;
  Cache cache_;
  Tensor4 cached_input_;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

/// Mean squared error and its gradient 2 (pred - target) / N.
struct Loss {
  double value = 0.0;
  Tensor4 grad;
};
Loss mse_loss(const Tensor4& pred, const Tensor4& target);

// Declared per-element costs for layers other than convolutions.
inline constexpr std::uint64_t kBatchNormFlopsPerElement = 2;
inline constexpr std::uint64_t kLeakyReluFlopsPerElement = 1;
inline constexpr std::uint64_t kMaxPoolFlopsPerOutput = 3;
inline constexpr std::uint64_t kBilinearFlopsPerOutput = 7;

struct LayerCost {
  int node = 0;
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;  // one multiply-add = 2 FLOPs
  std::vector<LayerCost> per_layer;
  std::uint64_t peak_alloc_bytes = 0;
  double wall_clock_ms = 0.0;
};

/// Static FLOPs/parameter count for one forward pass at the given input shape.
CostReport count_cost(const Net& net, const Shape4& input);

/// count_cost plus the measured wall clock and peak tensor allocation of one eval forward.
CostReport profile(Net& net, const Tensor4& input);

}  // namespace scatterbench::nn
