#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mobileposer::nn {

using Mat = Eigen::MatrixXd;

/// A batch of equal-length sequences laid out time-major: `data` is
/// features x (steps * batch) and step t occupies columns [t*batch, (t+1)*batch).
struct Seq {
  Mat data;
  int steps = 0;
  int batch = 1;

  Seq() = default;
  Seq(int features, int steps_, int batch_) : data(Mat::Zero(features, steps_ * batch_)), steps(steps_), batch(batch_) {}

  int features() const { return static_cast<int>(data.rows()); }
  auto at(int t) { return data.middleCols(t * batch, batch); }
  auto at(int t) const { return data.middleCols(t * batch, batch); }

  /// One sequence from an N x features matrix (one row per frame).
  static Seq from_rows(const Mat& rows);
  /// Back to N x features for sequence `b`.
  Mat rows(int b = 0) const;
};

enum class Direction { kUni, kBi };

struct SeqModelSpec {
  int input_dim = 1;
  int hidden_dim = 1;
  int output_dim = 1;
  int layers = 1;  // 0 = a single linear map
  Direction direction = Direction::kUni;

  int directions() const { return direction == Direction::kBi ? 2 : 1; }
  /// Width of the features feeding the output layer.
  int feature_width() const { return layers == 0 ? input_dim : hidden_dim * directions(); }
  int layer_input(int layer) const { return layer == 0 ? input_dim : hidden_dim * directions(); }
  void validate() const;
};

/// Parameters of one LSTM direction. Gate order along rows: input, forget,
/// cell, output.
struct LstmCell {
  Mat w_ih;  // 4H x in
  Mat w_hh;  // 4H x H
  Mat b;     // 4H x 1
};

/// Every trainable tensor of a model; also used to hold gradients.
struct Params {
  std::vector<LstmCell> cells;  // index = layer * directions + direction
  int directions = 1;
  Mat out_w;                    // out x width
  Mat out_b;                    // out x 1

  static Params zeros(const SeqModelSpec& spec);
  /// Calls fn(name, tensor) for every tensor in a stable order.
  void for_each(const std::function<void(const std::string&, Mat&)>& fn);
  void for_each(const std::function<void(const std::string&, const Mat&)>& fn) const;
  std::size_t count() const;
  void set_zero();
};

class SeqModel {
 public:
  SeqModel() = default;
  /// All parameters zero.
  explicit SeqModel(const SeqModelSpec& spec);

  /// Weights uniform in +-1/sqrt(fan_in), forget-gate bias 1, other biases 0.
  static SeqModel initialized(const SeqModelSpec& spec, std::uint64_t seed);

  const SeqModelSpec& spec() const { return spec_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  struct Cache {
    struct CellCache {
      Mat gates;   // 4H x TB, activated
      Mat cell;    // H x TB
      Mat tanh_c;  // H x TB
    };
    std::vector<Seq> layer_inputs;  // input to each layer, then the final features
    std::vector<CellCache> cells;
  };

  /// Throws ShapeMismatch when the input width does not match the spec.
  Seq forward(const Seq& input) const;
  Seq forward(const Seq& input, Cache& cache) const;

  /// Backpropagation through time. Accumulates into `grads` (shaped like
  /// params()) and returns dL/dinput.
  Seq backward(const Cache& cache, const Seq& grad_output, Params& grads) const;

  // Causal step-wise evaluation; unidirectional models only.
  struct State {
    std::vector<Eigen::VectorXd> h;
    std::vector<Eigen::VectorXd> c;
  };
  State initial_state() const;
  Eigen::VectorXd step(State& state, const Eigen::VectorXd& input) const;

 private:
  SeqModelSpec spec_;
  Params params_;
};

}  // namespace mobileposer::nn
