#pragma once

// Minimal dense feedforward network: batched forward/backward over row-major
// matrices, softmax cross-entropy, Adam and plain SGD. Everything is float64.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aircomp/rng.hpp"

namespace aircomp::nn {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                  " != rows*cols " + std::to_string(rows_ * cols_));
    }
  }

  static Matrix from_row(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Activation { relu, identity, softmax };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  if (s == "softmax") return Activation::softmax;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::identity;

  std::size_t parameter_count() const noexcept { return in * out + out; }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Parameters of all layers live in one contiguous vector: for each layer the
/// out x in weight block (row-major, one row per output unit) followed by the
/// out-length bias. Gradients use the same layout.
class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<LayerShape> shapes) : shapes_(std::move(shapes)) {
    if (shapes_.empty()) throw std::invalid_argument("DenseNet: no layers");
    std::size_t offset = 0;
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
      const auto& s = shapes_[l];
      if (s.in == 0 || s.out == 0) throw std::invalid_argument("DenseNet: zero-width layer");
      if (l > 0 && shapes_[l - 1].out != s.in) {
        throw std::invalid_argument("DenseNet: layer " + std::to_string(l) + " input " +
                                    std::to_string(s.in) + " does not match previous output " +
                                    std::to_string(shapes_[l - 1].out));
      }
      if (s.act == Activation::softmax && l + 1 != shapes_.size()) {
        throw std::invalid_argument("DenseNet: softmax only allowed on the final layer");
      }
      offsets_.push_back(offset);
      offset += s.parameter_count();
    }
    params_.assign(offset, 0.0);
  }

  /// Builds a net with widths dims[0] -> dims[1] -> ... and the given
  /// activations. ReLU layers get He-uniform fan-in initialization, the rest
  /// Glorot-uniform; biases start at zero.
  static DenseNet make(std::span<const std::size_t> dims, Activation hidden, Activation output,
                       CounterRng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("DenseNet::make: need at least two widths");
    std::vector<LayerShape> shapes;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      shapes.push_back({dims[l], dims[l + 1], l + 2 == dims.size() ? output : hidden});
    }
    DenseNet net(std::move(shapes));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      const auto& s = net.layer(l);
      const double limit = s.act == Activation::relu
                               ? std::sqrt(6.0 / static_cast<double>(s.in))
                               : std::sqrt(6.0 / static_cast<double>(s.in + s.out));
      for (double& w : net.weights(l)) w = (2.0 * rng.uniform() - 1.0) * limit;
    }
    return net;
  }

  std::size_t layer_count() const noexcept { return shapes_.size(); }
  const LayerShape& layer(std::size_t l) const { return shapes_.at(l); }
  const std::vector<LayerShape>& shapes() const noexcept { return shapes_; }
  std::size_t input_dim() const { return shapes_.front().in; }
  std::size_t output_dim() const { return shapes_.back().out; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  std::span<double> weights(std::size_t l) {
    return {params_.data() + offsets_.at(l), shapes_[l].in * shapes_[l].out};
  }
  std::span<const double> weights(std::size_t l) const {
    return {params_.data() + offsets_.at(l), shapes_[l].in * shapes_[l].out};
  }
  std::span<double> bias(std::size_t l) {
    return {params_.data() + offsets_.at(l) + shapes_[l].in * shapes_[l].out, shapes_[l].out};
  }
  std::span<const double> bias(std::size_t l) const {
    return {params_.data() + offsets_.at(l) + shapes_[l].in * shapes_[l].out, shapes_[l].out};
  }
  std::size_t offset(std::size_t l) const { return offsets_.at(l); }

  friend bool operator==(const DenseNet&, const DenseNet&) = default;

 private:
  std::vector<LayerShape> shapes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

using Gradients = std::vector<double>;

/// Cached activations of one forward pass. values[0] is the input batch,
/// values[l + 1] the post-activation output of layer l.
struct Tape {
  std::vector<LayerShape> shapes;
  std::vector<Matrix> values;

  const Matrix& output() const { return values.back(); }
  std::size_t batch() const { return values.empty() ? 0 : values.front().rows(); }
};

inline void softmax_inplace(std::span<double> z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : z) v /= total;
}

inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out(z.begin(), z.end());
  softmax_inplace(out);
  return out;
}

/// Batched forward pass; each row of `input` is one sample.
inline Tape forward(const DenseNet& net, Matrix input) {
  if (net.layer_count() == 0) throw std::invalid_argument("forward: empty network");
  if (input.cols() != net.input_dim()) {
    throw std::invalid_argument("forward: input width " + std::to_string(input.cols()) +
                                " != network input " + std::to_string(net.input_dim()));
  }
  if (!input.all_finite()) throw std::invalid_argument("forward: non-finite input");
  Tape tape;
  tape.shapes = net.shapes();
  tape.values.reserve(net.layer_count() + 1);
  tape.values.push_back(std::move(input));
  const std::size_t batch = tape.values.front().rows();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto& s = net.layer(l);
    const auto w = net.weights(l);
    const auto b = net.bias(l);
    const Matrix& x = tape.values.back();
    Matrix y(batch, s.out);
    for (std::size_t r = 0; r < batch; ++r) {
      const auto xr = x.row(r);
      auto yr = y.row(r);
      for (std::size_t o = 0; o < s.out; ++o) {
        const double* wo = w.data() + o * s.in;
        double acc = b[o];
        for (std::size_t i = 0; i < s.in; ++i) acc += wo[i] * xr[i];
        yr[o] = acc;
      }
      if (s.act == Activation::relu) {
        for (double& v : yr) v = v > 0.0 ? v : 0.0;
      } else if (s.act == Activation::softmax) {
        softmax_inplace(yr);
      }
    }
    tape.values.push_back(std::move(y));
  }
  return tape;
}

/// Single-sample convenience wrapper.
inline std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
  Tape tape = forward(net, Matrix::from_row(input));
  const auto out = tape.output().row(0);
  return {out.begin(), out.end()};
}

inline double cross_entropy_loss(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw std::invalid_argument("cross_entropy_loss: label " + std::to_string(label) +
                                " out of range for " + std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[label], 1e-12));
}

/// Gradient of the mean softmax cross-entropy over the batch with respect to
/// the logits: (probs - one_hot(label)) / batch.
inline Matrix softmax_cross_entropy_grad(const Matrix& probs, std::span<const std::size_t> labels) {
  if (labels.size() != probs.rows()) {
    throw std::invalid_argument("softmax_cross_entropy_grad: label count mismatch");
  }
  Matrix g = probs;
  const double scale = 1.0 / static_cast<double>(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    if (labels[r] >= probs.cols()) throw std::invalid_argument("softmax_cross_entropy_grad: label out of range");
    auto gr = g.row(r);
    gr[labels[r]] -= 1.0;
    for (double& v : gr) v *= scale;
  }
  return g;
}

struct BackwardResult {
  Gradients params;
  Matrix input;  // gradient with respect to the input batch
};

/// Reverse pass. `output_grad` is the loss gradient at the network output,
/// except when the final activation is softmax: cross-entropy is fused with
/// softmax, so the gradient is taken at the final pre-activation (logits).
inline BackwardResult backward(const DenseNet& net, const Tape& tape, Matrix output_grad) {
  if (tape.shapes != net.shapes() || tape.values.size() != net.layer_count() + 1) {
    throw std::invalid_argument("backward: tape does not belong to this network");
  }
  const std::size_t batch = tape.batch();
  if (output_grad.rows() != batch || output_grad.cols() != net.output_dim()) {
    throw std::invalid_argument("backward: output gradient shape mismatch");
  }
  BackwardResult result;
  result.params.assign(net.parameter_count(), 0.0);
  Matrix delta = std::move(output_grad);
  for (std::size_t l = net.layer_count(); l-- > 0;) {
    const auto& s = net.layer(l);
    const Matrix& x = tape.values[l];
    const Matrix& y = tape.values[l + 1];
    if (s.act == Activation::relu) {
      for (std::size_t r = 0; r < batch; ++r) {
        auto dr = delta.row(r);
        const auto yr = y.row(r);
        for (std::size_t o = 0; o < s.out; ++o) {
          if (yr[o] <= 0.0) dr[o] = 0.0;
        }
      }
    }
    double* gw = result.params.data() + net.offset(l);
    double* gb = gw + s.in * s.out;
    const auto w = net.weights(l);
    Matrix dx(batch, s.in);
    for (std::size_t r = 0; r < batch; ++r) {
      const auto dr = delta.row(r);
      const auto xr = x.row(r);
      auto dxr = dx.row(r);
      for (std::size_t o = 0; o < s.out; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* gwo = gw + o * s.in;
        const double* wo = w.data() + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) {
          gwo[i] += d * xr[i];
          dxr[i] += d * wo[i];
        }
      }
    }
    delta = std::move(dx);
  }
  result.input = std::move(delta);
  return result;
}

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;

  AdamState() = default;
  explicit AdamState(std::size_t parameter_count, double lr = 1e-3)
      : first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0), learning_rate(lr) {}
};

inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: shape mismatch (params " + std::to_string(params.size()) +
                                ", grads " + std::to_string(grads.size()) + ", state " +
                                std::to_string(state.first_moment.size()) + ")");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw std::invalid_argument("adam_step: non-finite gradient at index " + std::to_string(i) +
                                  " (step " + std::to_string(state.step + 1) + ")");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    params[i] -= state.learning_rate * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
  }
}

inline void sgd_step(std::span<double> params, std::span<const double> grads, double learning_rate) {
  if (grads.size() != params.size()) throw std::invalid_argument("sgd_step: shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grads[i];
}

// Checkpoint text format (one net):
//   densenet <layer_count>
//   layer <in> <out> <activation>     (per layer, followed by)
//   <out lines of `in` weights>
//   <one line of `out` biases>
// Values are written in shortest round-trip form, so save/load is exact.

inline std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument("cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

inline void write_net(std::ostream& os, const DenseNet& net) {
  os << "densenet " << net.layer_count() << '\n';
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto& s = net.layer(l);
    os << "layer " << s.in << ' ' << s.out << ' ' << to_string(s.act) << '\n';
    const auto w = net.weights(l);
    for (std::size_t o = 0; o < s.out; ++o) {
      for (std::size_t i = 0; i < s.in; ++i) {
        if (i) os << ' ';
        os << format_double(w[o * s.in + i]);
      }
      os << '\n';
    }
    const auto b = net.bias(l);
    for (std::size_t o = 0; o < s.out; ++o) {
      if (o) os << ' ';
      os << format_double(b[o]);
    }
    os << '\n';
  }
}

inline DenseNet read_net(std::istream& is) {
  std::string tag;
  std::size_t count = 0;
  if (!(is >> tag >> count) || tag != "densenet") {
    throw std::runtime_error("checkpoint: expected 'densenet <layers>'");
  }
  std::vector<LayerShape> shapes(count);
  std::vector<std::vector<double>> blocks(count);
  for (std::size_t l = 0; l < count; ++l) {
    std::string act;
    if (!(is >> tag >> shapes[l].in >> shapes[l].out >> act) || tag != "layer") {
      throw std::runtime_error("checkpoint: malformed header for layer " + std::to_string(l));
    }
    shapes[l].act = parse_activation(act);
    auto& block = blocks[l];
    block.resize(shapes[l].parameter_count());
    for (double& v : block) {
      std::string tok;
      if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated values in layer " + std::to_string(l));
      v = parse_double(tok);
      if (!std::isfinite(v)) throw std::runtime_error("checkpoint: non-finite value in layer " + std::to_string(l));
    }
  }
  DenseNet net(std::move(shapes));
  for (std::size_t l = 0; l < count; ++l) {
    std::copy(blocks[l].begin(), blocks[l].end(), net.parameters().begin() + static_cast<std::ptrdiff_t>(net.offset(l)));
  }
  return net;
}

}  // namespace aircomp::nn
