#include "afd/diffnet.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace afd {

using nlohmann::json;

// ---------------------------------------------------------------------------------------------
// Mlp

Mlp::Mlp(MlpArchitecture arch) : arch_(std::move(arch)) {
  require(arch_.inputs > 0 && arch_.outputs > 0, "mlp: input and output widths must be positive");
  Eigen::Index offset = 0;
  Eigen::Index previous = arch_.inputs;
  std::vector<Eigen::Index> widths = arch_.hidden;
  widths.push_back(arch_.outputs);
  for (const auto width : widths) {
    require(width > 0, "mlp: layer widths must be positive");
    LayerOffsets layer{offset, offset + width * previous, width, previous};
    offset = layer.bias + width;
    layers_.push_back(layer);
    previous = width;
  }
  theta_ = Vector::Zero(offset);
}

void Mlp::set_parameters(const Vector& theta) {
  require(theta.size() == theta_.size(), "mlp: parameter vector length mismatch");
  theta_ = theta;
}

Eigen::Map<const Matrix> Mlp::weights(std::size_t layer) const {
  const auto& l = layers_[layer];
  return {theta_.data() + l.weights, l.rows, l.cols};
}

Eigen::Map<const Vector> Mlp::bias(std::size_t layer) const {
  const auto& l = layers_[layer];
  return {theta_.data() + l.bias, l.rows};
}

void Mlp::initialize(Rng& rng, double output_gain) {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    Matrix gaussian(std::max(l.rows, l.cols), std::min(l.rows, l.cols));
    for (Eigen::Index i = 0; i < gaussian.size(); ++i) gaussian.data()[i] = standard_normal(rng);
    Eigen::HouseholderQR<Matrix> qr(gaussian);
    Matrix q = qr.householderQ() * Matrix::Identity(gaussian.rows(), gaussian.cols());
    // Sign fix so the distribution is uniform over orthogonal matrices.
    const Matrix r = qr.matrixQR().topRows(gaussian.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j)
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    Matrix w = l.rows >= l.cols ? q : Matrix(q.transpose());
    const double gain = k + 1 == layers_.size() ? output_gain : 1.0;
    Eigen::Map<Matrix>(theta_.data() + l.weights, l.rows, l.cols) = gain * w;
    Eigen::Map<Vector>(theta_.data() + l.bias, l.rows).setZero();
  }
}

Matrix Mlp::forward(const Matrix& inputs) const {
  Trace trace;
  return forward(inputs, trace);
}

Matrix Mlp::forward(const Matrix& inputs, Trace& trace) const {
  require(inputs.rows() == arch_.inputs, "mlp: input width mismatch");
  trace.activations.clear();
  trace.activations.reserve(layers_.size() + 1);
  trace.activations.push_back(inputs);
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    Matrix z = weights(k) * trace.activations.back();
    z.colwise() += bias(k);
    const bool hidden = k + 1 < layers_.size();
    if (hidden && arch_.activation == Activation::tanh) z = z.array().tanh().matrix();
    trace.activations.push_back(std::move(z));
  }
  return trace.activations.back();
}

Vector Mlp::backward(const Trace& trace, const Matrix& output_grad) const {
  require(trace.activations.size() == layers_.size() + 1, "mlp: trace does not match network");
  require(output_grad.rows() == arch_.outputs &&
              output_grad.cols() == trace.activations.back().cols(),
          "mlp: output gradient shape mismatch");
  Vector grad = Vector::Zero(theta_.size());
  Matrix delta = output_grad;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const Matrix& in = trace.activations[k];
    Eigen::Map<Matrix>(grad.data() + l.weights, l.rows, l.cols) = delta * in.transpose();
    Eigen::Map<Vector>(grad.data() + l.bias, l.rows) = delta.rowwise().sum();
    if (k == 0) break;
    delta = weights(k).transpose() * delta;
    if (arch_.activation == Activation::tanh)
      delta.array() *= 1.0 - in.array().square();
  }
  return grad;
}

Matrix Mlp::jvp(const Trace& trace, const Vector& tangent) const {
  require(tangent.size() == theta_.size(), "mlp: tangent length mismatch");
  require(trace.activations.size() == layers_.size() + 1, "mlp: trace does not match network");
  const Eigen::Index batch = trace.activations.front().cols();
  Matrix dot = Matrix::Zero(arch_.inputs, batch);
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    Eigen::Map<const Matrix> dw(tangent.data() + l.weights, l.rows, l.cols);
    Eigen::Map<const Vector> db(tangent.data() + l.bias, l.rows);
    Matrix z_dot = dw * trace.activations[k];
    if (k > 0) z_dot.noalias() += weights(k) * dot;
    z_dot.colwise() += db;
    const bool hidden = k + 1 < layers_.size();
    if (hidden && arch_.activation == Activation::tanh)
      z_dot.array() *= 1.0 - trace.activations[k + 1].array().square();
    dot = std::move(z_dot);
  }
  return dot;
}

// ---------------------------------------------------------------------------------------------
// GaussianPolicy

GaussianPolicy::GaussianPolicy(MlpArchitecture net, Vector action_scale, Vector log_std)
    : net_(std::move(net)), action_scale_(std::move(action_scale)), log_std_(std::move(log_std)) {
  require(net_.architecture().outputs == log_std_.size(), "policy: log-std length != action dim");
  require(action_scale_.size() == log_std_.size(), "policy: action scale length != action dim");
}

Vector GaussianPolicy::parameters() const {
  Vector theta(parameter_count());
  theta << net_.parameters(), log_std_;
  return theta;
}

void GaussianPolicy::set_parameters(const Vector& theta) {
  require(theta.size() == parameter_count(), "policy: parameter vector length mismatch");
  net_.set_parameters(theta.head(net_.parameter_count()));
  log_std_ = theta.tail(log_std_.size());
}

Vector GaussianPolicy::log_std() const { return log_std_.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax); }

Vector GaussianPolicy::std() const { return log_std().array().exp(); }

Matrix GaussianPolicy::mean(const Matrix& observations) const {
  require(observations.rows() == observation_dim(), "policy: observation length mismatch");
  return action_scale_.asDiagonal() * net_.forward(observations);
}

Vector GaussianPolicy::mean(const Vector& observation) const {
  return mean(Matrix(observation)).col(0);
}

Vector GaussianPolicy::sample(const Vector& observation, Rng& rng) const {
  return mean(observation) + std().cwiseProduct(standard_normal_vector(rng, action_dim()));
}

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2π)

Vector gaussian_log_density(const Matrix& mean, const Vector& log_std, const Matrix& actions) {
  const Vector inv_std = (-log_std.array()).exp();
  const Matrix scaled = inv_std.asDiagonal() * (actions - mean);
  const double norm = -log_std.sum() - 0.5 * kLogTwoPi * static_cast<double>(log_std.size());
  return (-0.5 * scaled.colwise().squaredNorm().array() + norm).matrix().transpose();
}

}  // namespace

double GaussianPolicy::log_prob(const Vector& observation, const Vector& action) const {
  return log_prob(Matrix(observation), Matrix(action))[0];
}

Vector GaussianPolicy::log_prob(const Matrix& observations, const Matrix& actions) const {
  require(actions.rows() == action_dim() && actions.cols() == observations.cols(),
          "policy: action batch shape mismatch");
  return gaussian_log_density(mean(observations), log_std(), actions);
}

Vector GaussianPolicy::grad(const Matrix& observations, const HeadObjective& objective, double l2,
                            double* value) const {
  Mlp::Trace trace;
  const Matrix out = net_.forward(observations, trace);
  const Matrix mu = action_scale_.asDiagonal() * out;
  const Vector ls = log_std();
  const HeadGradient head = objective(mu, ls);
  require(head.d_mean.rows() == mu.rows() && head.d_mean.cols() == mu.cols(),
          "policy grad: objective returned a mis-shaped mean gradient");
  require(head.d_log_std.size() == ls.size(), "policy grad: mis-shaped log-std gradient");
  if (!head.d_mean.allFinite() || !head.d_log_std.allFinite() || !std::isfinite(head.value))
    throw NumericalError("policy grad: non-finite objective or gradient");

  Vector g(parameter_count());
  g.head(net_.parameter_count()) = net_.backward(trace, action_scale_.asDiagonal() * head.d_mean);
  for (Eigen::Index i = 0; i < ls.size(); ++i) {
    const bool clamped = log_std_[i] < kLogStdMin || log_std_[i] > kLogStdMax;
    g[net_.parameter_count() + i] = clamped ? 0.0 : head.d_log_std[i];
  }
  double total = head.value;
  if (l2 != 0.0) {
    const Vector theta = parameters();
    g += l2 * theta;
    total += 0.5 * l2 * theta.squaredNorm();
  }
  if (value) *value = total;
  return g;
}

double kl(const GaussianPolicy& new_policy, const GaussianPolicy& old_policy,
          const Matrix& observations) {
  require(new_policy.parameter_count() == old_policy.parameter_count(),
          "kl: policies have different architectures");
  if (observations.cols() == 0) return 0.0;
  const Matrix mu_new = new_policy.mean(observations);
  const Matrix mu_old = old_policy.mean(observations);
  const Vector ls_new = new_policy.log_std(), ls_old = old_policy.log_std();
  const Vector var_new = (2.0 * ls_new.array()).exp(), var_old = (2.0 * ls_old.array()).exp();
  const Vector inv_var_old = var_old.cwiseInverse();
  // Σ_i [log σ_o/σ_n + (σ_n² + Δμ²)/(2σ_o²) - ½]
  const double constant =
      (ls_old - ls_new).sum() + 0.5 * (var_new.cwiseProduct(inv_var_old).sum() - ls_new.size());
  const double quad = 0.5 * (inv_var_old.asDiagonal() * (mu_new - mu_old).cwiseAbs2()).sum();
  return constant + quad / static_cast<double>(observations.cols());
}

Vector kl_gradient(const GaussianPolicy& new_policy, const GaussianPolicy& old_policy,
                   const Matrix& observations) {
  const Matrix mu_old = old_policy.mean(observations);
  const Vector inv_var_old = (-2.0 * old_policy.log_std().array()).exp();
  const double n = static_cast<double>(observations.cols());
  HeadObjective objective = [&](const Matrix& mu, const Vector& ls) {
    HeadGradient h;
    h.d_mean = inv_var_old.asDiagonal() * (mu - mu_old) / n;
    h.d_log_std = ((2.0 * ls.array()).exp() * inv_var_old.array() - 1.0).matrix();
    h.value = 0.0;
    return h;
  };
  return new_policy.grad(observations, objective);
}

FisherOperator::FisherOperator(const GaussianPolicy& policy, const Matrix& observations,
                               double damping)
    : policy_(policy), damping_(damping), size_(policy.parameter_count()),
      batch_(static_cast<double>(observations.cols())) {
  require(observations.cols() > 0, "fisher: empty observation batch");
  policy_.network().forward(observations, trace_);
  inv_var_ = (-2.0 * policy_.log_std().array()).exp();
  active_log_std_ = Vector::Ones(policy_.action_dim());
  for (Eigen::Index i = 0; i < policy_.action_dim(); ++i) {
    const double ls = policy_.raw_log_std()[i];
    if (ls < kLogStdMin || ls > kLogStdMax) active_log_std_[i] = 0.0;
  }
}

Vector FisherOperator::operator()(const Vector& v) const {
  require(v.size() == size_, "fisher: vector length mismatch");
  const Mlp& net = policy_.network();
  const Eigen::Index n_net = net.parameter_count();
  const Vector& scale = policy_.action_scale();
  // Mean block: (1/N) Σ Jᵀ diag(1/σ²) J v, with J the Jacobian of action_scale ⊙ mlp.
  const Matrix out_dot = net.jvp(trace_, v.head(n_net));
  const Vector weight = scale.cwiseAbs2().cwiseProduct(inv_var_) / batch_;
  Vector hv(size_);
  hv.head(n_net) = net.backward(trace_, weight.asDiagonal() * out_dot);
  // Log-std block: ∂²KL/∂(log σ)² = 2 at θ' = θ; no mean/log-std coupling.
  hv.tail(policy_.action_dim()) = 2.0 * active_log_std_.cwiseProduct(v.tail(policy_.action_dim()));
  return hv + damping_ * v;
}

Vector fisher_vector_product(const GaussianPolicy& policy, const Matrix& observations,
                             const Vector& v, double damping) {
  return FisherOperator(policy, observations, damping)(v);
}

// ---------------------------------------------------------------------------------------------
// ValueFunction

ValueFunction::ValueFunction(MlpArchitecture arch) : net_(std::move(arch)) {
  require(net_.architecture().outputs == 1, "value function: output width must be 1");
}

Vector ValueFunction::predict(const Matrix& observations) const {
  return net_.forward(observations).row(0).transpose();
}

double ValueFunction::mse(const Matrix& observations, const Vector& targets, Vector* gradient) const {
  require(targets.size() == observations.cols(), "value function: target count mismatch");
  if (observations.cols() == 0) {
    if (gradient) *gradient = Vector::Zero(net_.parameter_count());
    return 0.0;
  }
  Mlp::Trace trace;
  const Vector pred = net_.forward(observations, trace).row(0).transpose();
  const Vector residual = pred - targets;
  const double n = static_cast<double>(targets.size());
  if (gradient) *gradient = net_.backward(trace, residual.transpose() / n);
  return 0.5 * residual.squaredNorm() / n;
}

// ---------------------------------------------------------------------------------------------
// RunningNormalizer

RunningNormalizer::RunningNormalizer(Eigen::Index dim)
    : mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {}

void RunningNormalizer::update(const Matrix& batch) {
  require(batch.rows() == dim(), "normalizer: dimension mismatch");
  const double n = static_cast<double>(batch.cols());
  if (n == 0.0) return;
  const Vector batch_mean = batch.rowwise().mean();
  const Vector batch_m2 = (batch.colwise() - batch_mean).rowwise().squaredNorm();
  const double total = count_ + n;
  const Vector delta = batch_mean - mean_;
  mean_ += delta * (n / total);
  m2_ += batch_m2 + delta.cwiseAbs2() * (count_ * n / total);
  count_ = total;
}

Vector RunningNormalizer::variance() const {
  if (count_ < 2.0) return Vector::Ones(dim());
  return m2_ / count_;
}

Vector RunningNormalizer::normalize(const Vector& observation) const {
  return normalize(Matrix(observation)).col(0);
}

Matrix RunningNormalizer::normalize(const Matrix& observations) const {
  require(observations.rows() == dim(), "normalizer: dimension mismatch");
  if (count_ < 2.0) return observations;
  const Vector inv_std = (variance().array() + kEpsilon).rsqrt();
  Matrix out = inv_std.asDiagonal() * (observations.colwise() - mean_);
  return out.cwiseMax(-kClip).cwiseMin(kClip);
}

void RunningNormalizer::set_state(double count, Vector mean, Vector m2) {
  require(mean.size() == m2.size(), "normalizer: state shape mismatch");
  count_ = count;
  mean_ = std::move(mean);
  m2_ = std::move(m2);
}

void AdamState::apply(Vector& params, const Vector& g, double learning_rate) {
  require(g.size() == params.size() && m.size() == params.size(), "adam: shape mismatch");
  ++step;
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  params.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
}

// ---------------------------------------------------------------------------------------------
// Checkpoints

json architecture_json(const MlpArchitecture& arch) {
  json hidden = json::array();
  for (auto h : arch.hidden) hidden.push_back(h);
  return {{"inputs", arch.inputs},
          {"hidden", hidden},
          {"outputs", arch.outputs},
          {"activation", arch.activation == Activation::tanh ? "tanh" : "identity"}};
}

MlpArchitecture architecture_from_json(const json& j) {
  MlpArchitecture arch;
  try {
    arch.inputs = j.at("inputs").get<Eigen::Index>();
    arch.outputs = j.at("outputs").get<Eigen::Index>();
    for (const auto& h : j.at("hidden")) arch.hidden.push_back(h.get<Eigen::Index>());
    const auto act = j.value("activation", std::string("tanh"));
    if (act == "tanh") arch.activation = Activation::tanh;
    else if (act == "identity") arch.activation = Activation::identity;
    else throw ConfigError("architecture.activation: expected tanh or identity");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("architecture: ") + e.what());
  }
  return arch;
}

namespace {

Vector vector_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array())
    throw ConfigError(std::string("checkpoint.") + key + ": missing array");
  Vector v(static_cast<Eigen::Index>(j[key].size()));
  for (std::size_t i = 0; i < j[key].size(); ++i) v[static_cast<Eigen::Index>(i)] = j[key][i].get<double>();
  return v;
}

json to_array(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json value_json(const ValueFunction& value) {
  return {{"architecture", architecture_json(value.network().architecture())},
          {"parameters", to_array(value.network().parameters())}};
}

ValueFunction value_from_json(const json& j) {
  ValueFunction value(architecture_from_json(j.at("architecture")));
  const Vector theta = vector_field(j, "parameters");
  if (theta.size() != value.network().parameter_count())
    throw ConfigError("checkpoint: value parameter count does not match architecture");
  value.network().set_parameters(theta);
  return value;
}

}  // namespace

json checkpoint_json(const Checkpoint& c) {
  return {
      {"format", "afd-checkpoint"},
      {"version", kCheckpointVersion},
      {"update_index", c.update_index},
      {"policy",
       {{"architecture", architecture_json(c.policy.network().architecture())},
        {"action_scale", to_array(c.policy.action_scale())},
        {"log_std", to_array(c.policy.raw_log_std())},
        {"parameters", to_array(c.policy.network().parameters())}}},
      {"reward_value", value_json(c.reward_value)},
      {"cost_value", value_json(c.cost_value)},
      {"normalizer",
       {{"count", c.normalizer.count()},
        {"mean", to_array(c.normalizer.mean())},
        {"m2", to_array(c.normalizer.m2())}}},
  };
}

Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", std::string{}) != "afd-checkpoint")
    throw ConfigError("checkpoint.format: not an afd checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw ConfigError("checkpoint.version: unsupported version");
  try {
    Checkpoint c;
    c.update_index = j.at("update_index").get<int>();
    const json& p = j.at("policy");
    c.policy = GaussianPolicy(architecture_from_json(p.at("architecture")),
                              vector_field(p, "action_scale"), vector_field(p, "log_std"));
    const Vector theta = vector_field(p, "parameters");
    if (theta.size() != c.policy.network().parameter_count())
      throw ConfigError("checkpoint: policy parameter count does not match architecture");
    c.policy.network().set_parameters(theta);
    c.reward_value = value_from_json(j.at("reward_value"));
    c.cost_value = value_from_json(j.at("cost_value"));
    const json& n = j.at("normalizer");
    c.normalizer.set_state(n.at("count").get<double>(), vector_field(n, "mean"), vector_field(n, "m2"));
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot write " + path);
  out << checkpoint_json(checkpoint).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint: parse error in " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace afd
