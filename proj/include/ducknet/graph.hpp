#pragma once

#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ducknet/batchnorm.hpp"
#include "ducknet/conv2d.hpp"
#include "ducknet/init.hpp"
#include "ducknet/ops.hpp"
#include "ducknet/rng.hpp"
#include "ducknet/tensor.hpp"

namespace ducknet {

// A named parameter reference. The tensor itself is owned by the conv/bn
// node it belongs to; gradients live in the tensor's grad storage.
template <typename T>
struct Param {
  std::string name;
  Tensor4<T>* tensor = nullptr;
  bool trainable = true;
};

enum class OpKind { Conv, BatchNorm, Relu, Sigmoid, Upsample2x, Add };

// Static operator list over value slots. Slot 0 is the graph input. Forward
// retains every intermediate value; backward walks the steps in reverse and
// accumulates gradients, so a value feeding several consumers sums their
// contributions in a fixed (reverse-step) order.
template <typename T>
class Graph {
 public:
  struct Step {
    OpKind kind;
    int in0 = -1, in1 = -1, out = -1;
    int node = -1;  // conv or bn index
  };

  Graph() { vals_.emplace_back(); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  static constexpr int kInputSlot = 0;

  int conv(int in, const std::string& name, int in_ch, int out_ch, int kh,
           int kw, int dh, int dw, int sh, int sw, Padding pad, Rng& rng) {
    ConvParams<T> p;
    p.kernel = Tensor4<T>(out_ch, in_ch, kh, kw);
    p.bias = Tensor4<T>(1, out_ch, 1, 1);
    p.stride_h = sh;
    p.stride_w = sw;
    p.dilation_h = dh;
    p.dilation_w = dw;
    p.padding = pad;
    init_weights(p.kernel, rng);
    convs_.push_back(std::move(p));
    ConvParams<T>& node = convs_.back();
    node.kernel.ensure_grad();
    node.bias.ensure_grad();
    params_.push_back({name + ".kernel", &node.kernel, true});
    params_.push_back({name + ".bias", &node.bias, true});
    const int out = new_value();
    steps_.push_back({OpKind::Conv, in, -1, out, int(convs_.size()) - 1});
    return out;
  }

  int batchnorm(int in, const std::string& name, int channels) {
    bns_.emplace_back(channels);
    BatchNormState<T>& s = bns_.back();
    s.gamma.ensure_grad();
    s.beta.ensure_grad();
    params_.push_back({name + ".gamma", &s.gamma, true});
    params_.push_back({name + ".beta", &s.beta, true});
    params_.push_back({name + ".running_mean", &s.running_mean, false});
    params_.push_back({name + ".running_var", &s.running_var, false});
    const int out = new_value();
    steps_.push_back({OpKind::BatchNorm, in, -1, out, int(bns_.size()) - 1});
    return out;
  }

  int relu(int in) { return simple(OpKind::Relu, in); }
  int sigmoid(int in) { return simple(OpKind::Sigmoid, in); }
  int upsample2x(int in) { return simple(OpKind::Upsample2x, in); }

  int add(int a, int b) {
    const int out = new_value();
    steps_.push_back({OpKind::Add, a, b, out, -1});
    return out;
  }

  void set_output(int slot) { output_ = slot; }
  int output_slot() const { return output_; }

  void label(const std::string& name, int slot) { labels_[name] = slot; }
  int labeled_slot(const std::string& name) const { return labels_.at(name); }

  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += p.tensor->data.size();
    return n;
  }

  const Tensor4<T>& forward(const Tensor4<T>& input, Mode mode) {
    require(output_ >= 0, "graph: output slot not set");
    vals_[0] = input;
    for (const Step& s : steps_) {
      switch (s.kind) {
        case OpKind::Conv:
          vals_[s.out] = conv2d_forward(vals_[s.in0], convs_[s.node]);
          break;
        case OpKind::BatchNorm:
          vals_[s.out] = batchnorm_forward(vals_[s.in0], bns_[s.node], mode);
          break;
        case OpKind::Relu:
          vals_[s.out] = activation_forward(vals_[s.in0], Activation::Relu);
          break;
        case OpKind::Sigmoid:
          vals_[s.out] = activation_forward(vals_[s.in0], Activation::Sigmoid);
          break;
        case OpKind::Upsample2x:
          vals_[s.out] = upsample_nearest_2x(vals_[s.in0]);
          break;
        case OpKind::Add:
          vals_[s.out] = ducknet::add(vals_[s.in0], vals_[s.in1]);
          break;
      }
    }
    return vals_[output_];
  }

  void zero_param_grads() {
    for (auto& p : params_)
      if (p.trainable) p.tensor->zero_grad();
  }

  // Backpropagates loss_grad (gradient of the scalar loss w.r.t. the output
  // value) through the recorded steps. Parameter gradients accumulate into
  // each parameter tensor's grad storage.
  void backward(const Tensor4<T>& loss_grad) {
    require_same_shape(loss_grad, vals_[output_], "graph backward seed");
    gvals_.resize(vals_.size());
    for (std::size_t i = 0; i < vals_.size(); ++i) {
      gvals_[i] = Tensor4<T>(vals_[i].shape);  // zero-filled
    }
    gvals_[output_] = loss_grad;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
      const Step& s = *it;
      const Tensor4<T>& gout = gvals_[s.out];
      switch (s.kind) {
        case OpKind::Conv: {
          ConvParams<T>& p = convs_[s.node];
          conv2d_backward_acc(vals_[s.in0], p, gout, &gvals_[s.in0],
                              p.kernel.grad.data(), p.bias.grad.data());
          break;
        }
        case OpKind::BatchNorm: {
          BatchNormState<T>& bn = bns_[s.node];
          batchnorm_backward_acc(vals_[s.in0], bn, gout, gvals_[s.in0],
                                 bn.gamma.grad.data(), bn.beta.grad.data());
          break;
        }
        case OpKind::Relu:
          activation_backward_acc(vals_[s.in0], Activation::Relu, gout,
                                  gvals_[s.in0]);
          break;
        case OpKind::Sigmoid:
          activation_backward_acc(vals_[s.out], Activation::Sigmoid, gout,
                                  gvals_[s.in0]);
          break;
        case OpKind::Upsample2x:
          upsample_nearest_2x_backward_acc(vals_[s.in0].shape, gout,
                                           gvals_[s.in0]);
          break;
        case OpKind::Add:
          for (std::size_t i = 0; i < gout.data.size(); ++i)
            gvals_[s.in0].data[i] += gout.data[i];
          for (std::size_t i = 0; i < gout.data.size(); ++i)
            gvals_[s.in1].data[i] += gout.data[i];
          break;
      }
    }
  }

  const Tensor4<T>& value(int slot) const { return vals_[slot]; }
  const Tensor4<T>& input_grad() const { return gvals_[0]; }

  // Walks the step list symbolically, returning the shape of every value
  // slot for the given input shape. Throws on any inconsistency, so fusion
  // shape equality is checked at build time.
  std::vector<Shape4> infer_shapes(const Shape4& input) const {
    std::vector<Shape4> shapes(vals_.size());
    shapes[0] = input;
    for (const Step& s : steps_) {
      switch (s.kind) {
        case OpKind::Conv: {
          const ConvParams<T>& p = convs_[s.node];
          const ConvGeom geo = conv_geometry(shapes[s.in0], p);
          shapes[s.out] =
              Shape4{shapes[s.in0].n, p.kernel.shape.n, geo.out_h, geo.out_w};
          break;
        }
        case OpKind::BatchNorm:
          if (shapes[s.in0].c != bns_[s.node].channels())
            throw std::invalid_argument("graph: batchnorm channel mismatch");
          shapes[s.out] = shapes[s.in0];
          break;
        case OpKind::Relu:
        case OpKind::Sigmoid:
          shapes[s.out] = shapes[s.in0];
          break;
        case OpKind::Upsample2x:
          shapes[s.out] = Shape4{shapes[s.in0].n, shapes[s.in0].c,
                                 2 * shapes[s.in0].h, 2 * shapes[s.in0].w};
          break;
        case OpKind::Add:
          if (!(shapes[s.in0] == shapes[s.in1]))
            throw std::invalid_argument(
                "graph: addition fusion shape mismatch " +
                shapes[s.in0].str() + " vs " + shapes[s.in1].str());
          shapes[s.out] = shapes[s.in0];
          break;
      }
    }
    return shapes;
  }

  std::size_t step_count(OpKind kind) const {
    std::size_t n = 0;
    for (const Step& s : steps_)
      if (s.kind == kind) ++n;
    return n;
  }

  std::deque<ConvParams<T>>& conv_nodes() { return convs_; }
  std::deque<BatchNormState<T>>& bn_nodes() { return bns_; }

 private:
  int new_value() {
    vals_.emplace_back();
    return int(vals_.size()) - 1;
  }

  int simple(OpKind kind, int in) {
    const int out = new_value();
    steps_.push_back({kind, in, -1, out, -1});
    return out;
  }

  std::deque<ConvParams<T>> convs_;
  std::deque<BatchNormState<T>> bns_;
  std::vector<Param<T>> params_;
  std::vector<Step> steps_;
  std::vector<Tensor4<T>> vals_, gvals_;
  std::map<std::string, int> labels_;
  int output_ = -1;
};

}  // namespace ducknet
