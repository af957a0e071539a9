#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "selep/error.hpp"
#include "selep/nn.hpp"

namespace selep::nn {

namespace {

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

void fill_uniform(Matrix& m, double limit, Rng& rng) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
  }
  return "linear";
}

Activation parse_activation(std::string_view text) {
  for (auto a : {Activation::linear, Activation::tanh, Activation::sigmoid, Activation::relu})
    if (to_string(a) == text) return a;
  throw ConfigError("unknown activation '" + std::string(text) + "'");
}

Matrix apply_activation(Activation a, const Matrix& pre) {
  switch (a) {
    case Activation::linear: return pre;
    case Activation::tanh: return pre.array().tanh().matrix();
    case Activation::sigmoid: return sigmoid(pre);
    case Activation::relu: return pre.cwiseMax(0.0);
  }
  return pre;
}

Matrix activation_derivative(Activation a, const Matrix& pre, const Matrix& out) {
  switch (a) {
    case Activation::linear: return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::tanh: return (1.0 - out.array().square()).matrix();
    case Activation::sigmoid: return (out.array() * (1.0 - out.array())).matrix();
    case Activation::relu: return (pre.array() > 0.0).cast<double>().matrix();
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

DenseLayer make_dense(Index in, Index out, Activation activation, Rng& rng) {
  DenseLayer layer;
  layer.weights.resize(out, in);
  fill_uniform(layer.weights, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
  layer.bias = Vector::Zero(out);
  layer.activation = activation;
  return layer;
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& x, DenseCache* cache) {
  require_shape(x.cols() == layer.in(),
                "dense input has " + std::to_string(x.cols()) + " features, layer expects " + std::to_string(layer.in()));
  Matrix pre = x * layer.weights.transpose();
  pre.rowwise() += layer.bias.transpose();
  Matrix out = apply_activation(layer.activation, pre);
  if (cache) {
    cache->input = x;
    cache->pre = std::move(pre);
    cache->output = out;
  }
  return out;
}

Vector dense_forward(const DenseLayer& layer, const Vector& x) {
  require_shape(x.size() == layer.in(),
                "dense input has " + std::to_string(x.size()) + " features, layer expects " + std::to_string(layer.in()));
  Matrix pre = layer.weights * x + layer.bias;
  return apply_activation(layer.activation, pre);
}

Matrix dense_backward(const DenseLayer& layer, const DenseCache& cache, const Matrix& grad_output, DenseGrad& grad) {
  require_shape(grad_output.rows() == cache.output.rows() && grad_output.cols() == cache.output.cols(),
                "dense gradient " + shape(grad_output) + " does not match output " + shape(cache.output));
  const Matrix grad_pre =
      (grad_output.array() * activation_derivative(layer.activation, cache.pre, cache.output).array()).matrix();
  grad.weights.noalias() += grad_pre.transpose() * cache.input;
  grad.bias += grad_pre.colwise().sum().transpose();
  return grad_pre * layer.weights;
}

LstmCell make_lstm(Index input_size, Index hidden_size, Rng& rng) {
  LstmCell cell;
  cell.input_weights.resize(4 * hidden_size, input_size);
  cell.recurrent_weights.resize(4 * hidden_size, hidden_size);
  fill_uniform(cell.input_weights, std::sqrt(6.0 / static_cast<double>(input_size + hidden_size)), rng);
  fill_uniform(cell.recurrent_weights, std::sqrt(6.0 / static_cast<double>(2 * hidden_size)), rng);
  cell.bias = Vector::Zero(4 * hidden_size);
  cell.bias.segment(hidden_size, hidden_size).setOnes();
  return cell;
}

LstmState zero_state(const LstmCell& cell, Index batch) {
  return {Matrix::Zero(batch, cell.hidden_size()), Matrix::Zero(batch, cell.hidden_size())};
}

LstmState lstm_step(const LstmCell& cell, const Matrix& x, const Matrix& h_prev, const Matrix& c_prev,
                    LstmStepCache* cache) {
  const Index h = cell.hidden_size();
  require_shape(x.cols() == cell.input_size(), "lstm input has " + std::to_string(x.cols()) +
                                                   " features, cell expects " + std::to_string(cell.input_size()));
  require_shape(h_prev.cols() == h && c_prev.cols() == h && h_prev.rows() == x.rows() && c_prev.rows() == x.rows(),
                "lstm state " + shape(h_prev) + "/" + shape(c_prev) + " does not match batch " +
                    std::to_string(x.rows()) + " x hidden " + std::to_string(h));
  Matrix gates = x * cell.input_weights.transpose();
  gates.noalias() += h_prev * cell.recurrent_weights.transpose();
  gates.rowwise() += cell.bias.transpose();

  Matrix i = sigmoid(gates.middleCols(0, h));
  Matrix f = sigmoid(gates.middleCols(h, h));
  Matrix g = gates.middleCols(2 * h, h).array().tanh().matrix();
  Matrix o = sigmoid(gates.middleCols(3 * h, h));
  Matrix c = (f.array() * c_prev.array() + i.array() * g.array()).matrix();
  Matrix tanh_c = c.array().tanh().matrix();
  Matrix hidden = (o.array() * tanh_c.array()).matrix();
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->g = std::move(g);
    cache->o = std::move(o);
    cache->c = c;
    cache->tanh_c = std::move(tanh_c);
  }
  return {std::move(hidden), std::move(c)};
}

std::pair<Vector, Vector> lstm_step(const LstmCell& cell, const Vector& x, const Vector& h_prev, const Vector& c_prev) {
  auto state = lstm_step(cell, Matrix(x.transpose()), Matrix(h_prev.transpose()), Matrix(c_prev.transpose()));
  return {state.h.row(0).transpose(), state.c.row(0).transpose()};
}

LstmStepGrads lstm_step_backward(const LstmCell& cell, const LstmStepCache& cache, const Matrix& grad_h,
                                 const Matrix& grad_c, LstmGrad& grad) {
  const Index h = cell.hidden_size();
  const Index batch = cache.x.rows();
  require_shape(grad_h.rows() == batch && grad_h.cols() == h && grad_c.rows() == batch && grad_c.cols() == h,
                "lstm gradient shape mismatch");
  const auto o = cache.o.array();
  const auto tc = cache.tanh_c.array();
  const Eigen::ArrayXXd dc = grad_c.array() + grad_h.array() * o * (1.0 - tc.square());

  Matrix dgates(batch, 4 * h);
  const auto i = cache.i.array();
  const auto f = cache.f.array();
  const auto g = cache.g.array();
  dgates.middleCols(0, h) = (dc * g * i * (1.0 - i)).matrix();
  dgates.middleCols(h, h) = (dc * cache.c_prev.array() * f * (1.0 - f)).matrix();
  dgates.middleCols(2 * h, h) = (dc * i * (1.0 - g.square())).matrix();
  dgates.middleCols(3 * h, h) = (grad_h.array() * tc * o * (1.0 - o)).matrix();

  grad.input_weights.noalias() += dgates.transpose() * cache.x;
  grad.recurrent_weights.noalias() += dgates.transpose() * cache.h_prev;
  grad.bias += dgates.colwise().sum().transpose();

  LstmStepGrads out;
  out.x = dgates * cell.input_weights;
  out.h_prev = dgates * cell.recurrent_weights;
  out.c_prev = (dc * f).matrix();
  return out;
}

Loss binary_cross_entropy(const Matrix& y, const Matrix& yhat) {
  require_shape(y.rows() == yhat.rows() && y.cols() == yhat.cols(),
                "binary_cross_entropy: target " + shape(y) + " vs prediction " + shape(yhat));
  const Eigen::ArrayXXd p = yhat.array().max(kProbabilityClamp).min(1.0 - kProbabilityClamp);
  const Eigen::ArrayXXd t = y.array();
  Loss loss;
  loss.value = -(t * p.log() + (1.0 - t) * (1.0 - p).log()).sum();
  loss.gradient = (-t / p + (1.0 - t) / (1.0 - p)).matrix();
  return loss;
}

Loss mean_squared_error(const Matrix& x, const Matrix& xhat) {
  require_shape(x.rows() == xhat.rows() && x.cols() == xhat.cols(),
                "mean_squared_error: " + shape(x) + " vs " + shape(xhat));
  Loss loss;
  const double n = static_cast<double>(x.size());
  if (n == 0) {
    loss.gradient = Matrix::Zero(x.rows(), x.cols());
    return loss;
  }
  const Matrix diff = xhat - x;
  loss.value = diff.squaredNorm() / n;
  loss.gradient = (2.0 / n) * diff;
  return loss;
}

void append_params(std::vector<Param>& out, const std::string& prefix, DenseLayer& layer) {
  out.push_back(param(prefix + ".weights", layer.weights));
  out.push_back(param(prefix + ".bias", layer.bias));
}

void append_params(std::vector<ConstParam>& out, const std::string& prefix, const DenseLayer& layer) {
  out.push_back(param(prefix + ".weights", layer.weights));
  out.push_back(param(prefix + ".bias", layer.bias));
}

void append_params(std::vector<Param>& out, const std::string& prefix, DenseGrad& grad) {
  out.push_back(param(prefix + ".weights", grad.weights));
  out.push_back(param(prefix + ".bias", grad.bias));
}

void append_params(std::vector<Param>& out, const std::string& prefix, LstmCell& cell) {
  out.push_back(param(prefix + ".input_weights", cell.input_weights));
  out.push_back(param(prefix + ".recurrent_weights", cell.recurrent_weights));
  out.push_back(param(prefix + ".bias", cell.bias));
}

void append_params(std::vector<ConstParam>& out, const std::string& prefix, const LstmCell& cell) {
  out.push_back(param(prefix + ".input_weights", cell.input_weights));
  out.push_back(param(prefix + ".recurrent_weights", cell.recurrent_weights));
  out.push_back(param(prefix + ".bias", cell.bias));
}

void append_params(std::vector<Param>& out, const std::string& prefix, LstmGrad& grad) {
  out.push_back(param(prefix + ".input_weights", grad.input_weights));
  out.push_back(param(prefix + ".recurrent_weights", grad.recurrent_weights));
  out.push_back(param(prefix + ".bias", grad.bias));
}

std::uint64_t checksum(std::span<const ConstParam> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.data);
    for (std::size_t k = 0; k < static_cast<std::size_t>(p.size()) * sizeof(double); ++k) {
      h ^= bytes[k];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

AdamState make_adam(const AdamConfig& config, std::span<const Param> params) {
  AdamState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    state.second_moment.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
  }
  return state;
}

void adam_step(AdamState& state, std::span<const Param> params, std::span<const Param> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size() ||
        static_cast<std::size_t>(params[k].size()) != state.first_moment[k].size())
      throw DimensionError("adam_step: shape mismatch for " + params[k].name);
    for (Index j = 0; j < grads[k].size(); ++j)
      if (!std::isfinite(grads[k].data[j])) throw NumericError("non-finite gradient in " + params[k].name);
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    double* w = params[k].data;
    const double* g = grads[k].data;
    for (std::size_t j = 0; j < m.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      w[j] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

double gradient_check(std::span<const Param> params, std::span<const ConstParam> analytic,
                      const std::function<double()>& loss, double step) {
  if (params.size() != analytic.size()) throw DimensionError("gradient_check: parameter/gradient count mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != analytic[k].size())
      throw DimensionError("gradient_check: shape mismatch for " + params[k].name);
    for (Index j = 0; j < params[k].size(); ++j) {
      double& w = params[k].data[j];
      const double saved = w;
      w = saved + step;
      const double up = loss();
      w = saved - step;
      const double down = loss();
      w = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("non-finite loss while perturbing " + params[k].name);
      const double fd = (up - down) / (2.0 * step);
      const double ga = analytic[k].data[j];
      const double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace {

constexpr char kMagic[4] = {'S', 'L', 'P', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated parameter container");
  return v;
}

}  // namespace

void write_parameters(std::ostream& out, std::span<const ConstParam> params) {
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(params.size()));
  for (const auto& p : params) {
    put(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put(out, static_cast<std::int64_t>(p.rows));
    put(out, static_cast<std::int64_t>(p.cols));
    out.write(reinterpret_cast<const char*>(p.data), static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing parameter container");
}

void read_parameters(std::istream& in, std::span<const Param> params) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a parameter container");
  if (get<std::uint32_t>(in) != kVersion) throw IoError("unsupported parameter container version");
  const auto count = get<std::uint64_t>(in);
  if (count != params.size())
    throw DimensionError("container holds " + std::to_string(count) + " tensors, model has " +
                         std::to_string(params.size()));
  for (const auto& p : params) {
    std::string name(get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = get<std::int64_t>(in);
    const auto cols = get<std::int64_t>(in);
    if (!in || name != p.name) throw DimensionError("expected tensor " + p.name + ", found " + name);
    if (rows != p.rows || cols != p.cols)
      throw DimensionError("tensor " + p.name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols));
    in.read(reinterpret_cast<char*>(p.data), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!in) throw IoError("truncated tensor " + p.name);
  }
}

}  // namespace selep::nn
