#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "selep/rng.hpp"

// Dense layers, LSTM cells, losses and Adam with hand-written backward passes.
// Batches are row-major in meaning: one sample per matrix row.
namespace selep::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Activation { linear, tanh, sigmoid, relu };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view text);

Matrix apply_activation(Activation a, const Matrix& pre);
/// Derivative of the activation, expressed through its input and output.
Matrix activation_derivative(Activation a, const Matrix& pre, const Matrix& out);

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::linear;

  Index in() const { return weights.cols(); }
  Index out() const { return weights.rows(); }
};

/// Glorot-uniform weights in +-sqrt(6 / (in + out)), zero bias.
DenseLayer make_dense(Index in, Index out, Activation activation, Rng& rng);

struct DenseCache {
  Matrix input;
  Matrix pre;
  Matrix output;
};

struct DenseGrad {
  Matrix weights;
  Vector bias;

  explicit DenseGrad(const DenseLayer& layer)
      : weights(Matrix::Zero(layer.out(), layer.in())), bias(Vector::Zero(layer.out())) {}
  void zero() {
    weights.setZero();
    bias.setZero();
  }
};

/// y = act(x W^T + b) for a batch `x` (samples x in).
Matrix dense_forward(const DenseLayer& layer, const Matrix& x, DenseCache* cache = nullptr);
Vector dense_forward(const DenseLayer& layer, const Vector& x);
/// Accumulates parameter gradients into `grad`; returns dL/dx.
Matrix dense_backward(const DenseLayer& layer, const DenseCache& cache, const Matrix& grad_output, DenseGrad& grad);

/// Gate blocks of the stacked weights are ordered input, forget, candidate, output.
struct LstmCell {
  Matrix input_weights;      // 4h x in
  Matrix recurrent_weights;  // 4h x h
  Vector bias;               // 4h

  Index input_size() const { return input_weights.cols(); }
  Index hidden_size() const { return recurrent_weights.cols(); }
};

/// Per-gate Glorot bounds; forget-gate bias starts at 1.
LstmCell make_lstm(Index input_size, Index hidden_size, Rng& rng);

struct LstmState {
  Matrix h;  // samples x hidden
  Matrix c;
};

LstmState zero_state(const LstmCell& cell, Index batch);

struct LstmStepCache {
  Matrix x, h_prev, c_prev;
  Matrix i, f, g, o;
  Matrix c, tanh_c;
};

LstmState lstm_step(const LstmCell& cell, const Matrix& x, const Matrix& h_prev, const Matrix& c_prev,
                    LstmStepCache* cache = nullptr);
std::pair<Vector, Vector> lstm_step(const LstmCell& cell, const Vector& x, const Vector& h_prev,
                                    const Vector& c_prev);

struct LstmGrad {
  Matrix input_weights;
  Matrix recurrent_weights;
  Vector bias;

  explicit LstmGrad(const LstmCell& cell)
      : input_weights(Matrix::Zero(cell.input_weights.rows(), cell.input_weights.cols())),
        recurrent_weights(Matrix::Zero(cell.recurrent_weights.rows(), cell.recurrent_weights.cols())),
        bias(Vector::Zero(cell.bias.size())) {}
  void zero() {
    input_weights.setZero();
    recurrent_weights.setZero();
    bias.setZero();
  }
};

struct LstmStepGrads {
  Matrix x;
  Matrix h_prev;
  Matrix c_prev;
};

/// Backward through one step given dL/dh and dL/dc of its outputs.
LstmStepGrads lstm_step_backward(const LstmCell& cell, const LstmStepCache& cache, const Matrix& grad_h,
                                 const Matrix& grad_c, LstmGrad& grad);

inline constexpr double kProbabilityClamp = 1e-7;

struct Loss {
  double value = 0.0;
  Matrix gradient;
};

/// Summed over every entry; yhat is clamped to [eps, 1 - eps] first.
Loss binary_cross_entropy(const Matrix& y, const Matrix& yhat);
/// Mean over every entry.
Loss mean_squared_error(const Matrix& x, const Matrix& xhat);

// ---------------------------------------------------------------------------
// Parameter views shared by the optimizer, gradient checks and checkpoints.

struct Param {
  std::string name;
  double* data = nullptr;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
};

struct ConstParam {
  std::string name;
  const double* data = nullptr;
  Index rows = 0;
  Index cols = 0;

  ConstParam() = default;
  ConstParam(std::string n, const double* d, Index r, Index c) : name(std::move(n)), data(d), rows(r), cols(c) {}
  ConstParam(const Param& p) : name(p.name), data(p.data), rows(p.rows), cols(p.cols) {}  // NOLINT
  Index size() const { return rows * cols; }
};

inline Param param(std::string name, Matrix& m) { return {std::move(name), m.data(), m.rows(), m.cols()}; }
inline Param param(std::string name, Vector& v) { return {std::move(name), v.data(), v.size(), 1}; }
inline ConstParam param(std::string name, const Matrix& m) { return {std::move(name), m.data(), m.rows(), m.cols()}; }
inline ConstParam param(std::string name, const Vector& v) { return {std::move(name), v.data(), v.size(), 1}; }

void append_params(std::vector<Param>& out, const std::string& prefix, DenseLayer& layer);
void append_params(std::vector<ConstParam>& out, const std::string& prefix, const DenseLayer& layer);
void append_params(std::vector<Param>& out, const std::string& prefix, DenseGrad& grad);
void append_params(std::vector<Param>& out, const std::string& prefix, LstmCell& cell);
void append_params(std::vector<ConstParam>& out, const std::string& prefix, const LstmCell& cell);
void append_params(std::vector<Param>& out, const std::string& prefix, LstmGrad& grad);

/// FNV-1a over the raw bytes of the parameters, for freeze checks.
std::uint64_t checksum(std::span<const ConstParam> params);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

AdamState make_adam(const AdamConfig& config, std::span<const Param> params);

/// One bias-corrected Adam update. Throws NumericError naming the first
/// parameter with a non-finite gradient; nothing is updated in that case.
void adam_step(AdamState& state, std::span<const Param> params, std::span<const Param> grads);

/// Max over parameter entries of |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|)
/// with central differences of `loss`. `analytic` must mirror `params`.
double gradient_check(std::span<const Param> params, std::span<const ConstParam> analytic,
                      const std::function<double()>& loss, double step = 1e-5);

/// Binary container: magic, count, then (name, rows, cols, float64 data) per
/// tensor. Reading checks names and shapes against `params`.
void write_parameters(std::ostream& out, std::span<const ConstParam> params);
void read_parameters(std::istream& in, std::span<const Param> params);

}  // namespace selep::nn
