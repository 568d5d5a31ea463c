#include "suav/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace suav {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2 pi) / 2
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix orthogonal(int rows, int cols, double gain, Rng& rng) {
  const int n = std::max(rows, cols);
  const int m = std::min(rows, cols);
  Matrix a(n, m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, m);
  const Vector diag = qr.matrixQR().diagonal();
  for (int j = 0; j < m; ++j) {
    if (diag(j) < 0.0) q.col(j) *= -1.0;
  }
  Matrix w = rows >= cols ? q : Matrix(q.transpose());
  return gain * w;
}

Dense make_dense(int out, int in, double gain, Rng& rng) {
  return Dense{orthogonal(out, in, gain, rng), Vector::Zero(out)};
}

std::size_t dense_size(const Dense& d) {
  return static_cast<std::size_t>(d.weight.size() + d.bias.size());
}

std::size_t write_dense(const Dense& d, double* out) {
  std::copy(d.weight.data(), d.weight.data() + d.weight.size(), out);
  std::copy(d.bias.data(), d.bias.data() + d.bias.size(), out + d.weight.size());
  return dense_size(d);
}

std::size_t read_dense(const double* in, Dense& d) {
  std::copy(in, in + d.weight.size(), d.weight.data());
  std::copy(in + d.weight.size(), in + d.weight.size() + d.bias.size(), d.bias.data());
  return dense_size(d);
}

void check_arch(const ActorArchitecture& a) {
  if (a.input_dim < 1 || a.hidden_width < 1 || a.hidden_layers < 1 || a.discrete_dim < 1 ||
      a.continuous_dim < 1) {
    throw std::invalid_argument("actor architecture dimensions must be positive");
  }
}

void check_arch(const CriticArchitecture& a) {
  if (a.input_dim < 1 || a.hidden_width < 1 || a.hidden_layers < 1) {
    throw std::invalid_argument("critic architecture dimensions must be positive");
  }
}

bool log_std_free(double raw) { return raw >= kLogStdMin && raw <= kLogStdMax; }

Vector clamped_log_std(const Vector& raw) {
  return raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

Matrix relu_mask(const Matrix& activation) {
  return (activation.array() > 0.0).cast<double>().matrix();
}

// Backward through hidden layers, accumulating into `grad` at the given
// per-layer offsets. `dh` is the cotangent of the last activation.
void backward_hidden(const std::vector<Dense>& layers, const std::vector<Matrix>& acts,
                     Matrix dh, double* grad, const std::vector<std::size_t>& offsets) {
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    const Matrix dz = dh.cwiseProduct(relu_mask(acts[l + 1]));
    const Dense& layer = layers[l];
    Eigen::Map<Matrix> gw(grad + offsets[l], layer.weight.rows(), layer.weight.cols());
    Eigen::Map<Vector> gb(grad + offsets[l] + layer.weight.size(), layer.bias.size());
    gw.noalias() = dz * acts[l].transpose();
    gb = dz.rowwise().sum();
    if (l > 0) dh.noalias() = layer.weight.transpose() * dz;
  }
}

// Forward-mode derivative through hidden layers; returns d(last activation).
Matrix jvp_hidden(const std::vector<Dense>& layers, const std::vector<Matrix>& acts,
                  const double* dir, const std::vector<std::size_t>& offsets) {
  Matrix dh;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Dense& layer = layers[l];
    Eigen::Map<const Matrix> dw(dir + offsets[l], layer.weight.rows(), layer.weight.cols());
    Eigen::Map<const Vector> db(dir + offsets[l] + layer.weight.size(), layer.bias.size());
    Matrix dz = dw * acts[l];
    if (l > 0) dz.noalias() += layer.weight * dh;
    dz.colwise() += db;
    dh = dz.cwiseProduct(relu_mask(acts[l + 1]));
  }
  return dh;
}

std::vector<std::size_t> layer_offsets(const std::vector<Dense>& layers) {
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Dense& d : layers) {
    offsets.push_back(off);
    off += dense_size(d);
  }
  return offsets;
}

Matrix one_column(std::span<const double> state) {
  Matrix m(static_cast<Eigen::Index>(state.size()), 1);
  std::copy(state.begin(), state.end(), m.data());
  return m;
}

Matrix mask_column(std::span<const std::uint8_t> mask) {
  if (mask.empty()) return {};
  Matrix m(static_cast<Eigen::Index>(mask.size()), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = mask[i];
  return m;
}

Matrix probabilities(const Matrix& logp) {
  return logp.unaryExpr([](double x) { return std::isinf(x) ? 0.0 : std::exp(x); });
}

struct ActorLossResult {
  double value = 0.0;
  Matrix d_logits;
  Matrix d_mean;
  Vector d_log_std;
};

void require(bool condition, const char* what) {
  if (!condition) throw std::invalid_argument(what);
}

ActorLossResult actor_loss_terms(LossKind kind, const ActorOutput& out,
                                 const LossBatch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double w = batch.sample_weight();
  ActorLossResult r;
  switch (kind) {
    case LossKind::surrogate_discrete:
    case LossKind::reinforce_discrete:
    case LossKind::kl_discrete: {
      const Matrix logp = masked_log_softmax(out.logits, batch.mask);
      const Matrix probs = probabilities(logp);
      r.d_logits = Matrix::Zero(out.logits.rows(), n);
      if (kind == LossKind::kl_discrete) {
        require(batch.old_logits.cols() == n, "kl_discrete: missing old logits");
        const Matrix old_logp = masked_log_softmax(batch.old_logits, batch.mask);
        const Matrix old_probs = probabilities(old_logp);
        for (Eigen::Index b = 0; b < n; ++b) {
          for (Eigen::Index j = 0; j < logp.rows(); ++j) {
            if (old_probs(j, b) > 0.0) {
              r.value += w * old_probs(j, b) * (old_logp(j, b) - logp(j, b));
            }
          }
          r.d_logits.col(b) = w * (probs.col(b) - old_probs.col(b));
        }
        return r;
      }
      require(static_cast<Eigen::Index>(batch.discrete.size()) == n &&
                  batch.advantages.size() == n,
              "discrete loss: actions/advantages size mismatch");
      const bool surrogate = kind == LossKind::surrogate_discrete;
      if (surrogate) {
        require(batch.old_logp_discrete.size() == n, "surrogate_discrete: missing old log-probs");
      }
      for (Eigen::Index b = 0; b < n; ++b) {
        const auto a = static_cast<Eigen::Index>(batch.discrete[static_cast<std::size_t>(b)]);
        require(a < logp.rows(), "discrete loss: action index out of range");
        const double adv = batch.advantages(b);
        double coeff;
        if (surrogate) {
          const double ratio = std::exp(logp(a, b) - batch.old_logp_discrete(b));
          r.value -= w * ratio * adv;
          coeff = -w * ratio * adv;
        } else {
          r.value -= w * logp(a, b) * adv;
          coeff = -w * adv;
        }
        r.d_logits.col(b) = -coeff * probs.col(b);
        r.d_logits(a, b) += coeff;
      }
      return r;
    }
    case LossKind::surrogate_continuous:
    case LossKind::reinforce_continuous:
    case LossKind::kl_continuous: {
      const Vector std_inv = (-out.log_std.array()).exp();
      const Vector var_inv = std_inv.array().square();
      r.d_mean = Matrix::Zero(out.mean.rows(), n);
      r.d_log_std = Vector::Zero(out.log_std.size());
      if (kind == LossKind::kl_continuous) {
        require(batch.old_mean.cols() == n && batch.old_log_std.size() == out.log_std.size(),
                "kl_continuous: missing old snapshot");
        const Vector old_var = (2.0 * batch.old_log_std.array()).exp();
        for (Eigen::Index b = 0; b < n; ++b) {
          for (Eigen::Index k = 0; k < out.mean.rows(); ++k) {
            const double diff = out.mean(k, b) - batch.old_mean(k, b);
            const double num = old_var(k) + diff * diff;
            r.value += w * (out.log_std(k) - batch.old_log_std(k) + 0.5 * num * var_inv(k) - 0.5);
            r.d_mean(k, b) = w * diff * var_inv(k);
            r.d_log_std(k) += w * (1.0 - num * var_inv(k));
          }
        }
        return r;
      }
      require(batch.continuous.cols() == n && batch.advantages.size() == n,
              "continuous loss: actions/advantages size mismatch");
      const bool surrogate = kind == LossKind::surrogate_continuous;
      if (surrogate) {
        require(batch.old_logp_continuous.size() == n,
                "surrogate_continuous: missing old log-probs");
      }
      const Vector logp = gaussian_log_prob(batch.continuous, out.mean, out.log_std);
      for (Eigen::Index b = 0; b < n; ++b) {
        const double adv = batch.advantages(b);
        double coeff;
        if (surrogate) {
          const double ratio = std::exp(logp(b) - batch.old_logp_continuous(b));
          r.value -= w * ratio * adv;
          coeff = -w * ratio * adv;
        } else {
          r.value -= w * logp(b) * adv;
          coeff = -w * adv;
        }
        for (Eigen::Index k = 0; k < out.mean.rows(); ++k) {
          const double z = (batch.continuous(k, b) - out.mean(k, b)) * std_inv(k);
          r.d_mean(k, b) = coeff * z * std_inv(k);
          r.d_log_std(k) += coeff * (z * z - 1.0);
        }
      }
      return r;
    }
    default:
      throw std::invalid_argument(std::string("not an actor output loss: ") + loss_name(kind));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Layout and parameters

PolicyLayout policy_layout(const ActorArchitecture& a) {
  check_arch(a);
  const auto in = static_cast<std::size_t>(a.input_dim);
  const auto h = static_cast<std::size_t>(a.hidden_width);
  const auto d = static_cast<std::size_t>(a.discrete_dim);
  const auto c = static_cast<std::size_t>(a.continuous_dim);
  PolicyLayout l;
  l.trunk_end = (h * in + h) + static_cast<std::size_t>(a.hidden_layers - 1) * (h * h + h);
  l.discrete_end = l.trunk_end + d * h + d;
  l.mean_end = l.discrete_end + c * h + c;
  l.total = l.mean_end + c;
  return l;
}

std::size_t parameter_count(const ActorArchitecture& a) { return policy_layout(a).total; }

std::size_t parameter_count(const CriticArchitecture& a) {
  check_arch(a);
  const auto in = static_cast<std::size_t>(a.input_dim);
  const auto h = static_cast<std::size_t>(a.hidden_width);
  return (h * in + h) + static_cast<std::size_t>(a.hidden_layers - 1) * (h * h + h) + h + 1;
}

Vector head_mask(const ActorArchitecture& arch, Head head) {
  const PolicyLayout l = policy_layout(arch);
  Vector m = Vector::Zero(static_cast<Eigen::Index>(l.total));
  m.head(static_cast<Eigen::Index>(l.trunk_end)).setOnes();
  if (head == Head::discrete) {
    m.segment(static_cast<Eigen::Index>(l.trunk_end),
              static_cast<Eigen::Index>(l.discrete_end - l.trunk_end))
        .setOnes();
  } else {
    m.segment(static_cast<Eigen::Index>(l.discrete_end),
              static_cast<Eigen::Index>(l.total - l.discrete_end))
        .setOnes();
  }
  return m;
}

PolicyParams init_policy(const ActorArchitecture& arch, Rng& rng) {
  check_arch(arch);
  PolicyParams p;
  p.arch = arch;
  int in = arch.input_dim;
  for (int l = 0; l < arch.hidden_layers; ++l) {
    p.trunk.push_back(make_dense(arch.hidden_width, in, std::numbers::sqrt2, rng));
    in = arch.hidden_width;
  }
  p.discrete_head = make_dense(arch.discrete_dim, in, 0.01, rng);
  p.mean_head = make_dense(arch.continuous_dim, in, 0.01, rng);
  p.log_std = Vector::Zero(arch.continuous_dim);
  return p;
}

CriticParams init_critic(const CriticArchitecture& arch, Rng& rng) {
  check_arch(arch);
  CriticParams c;
  c.arch = arch;
  int in = arch.input_dim;
  for (int l = 0; l < arch.hidden_layers; ++l) {
    c.hidden.push_back(make_dense(arch.hidden_width, in, std::numbers::sqrt2, rng));
    in = arch.hidden_width;
  }
  c.out = make_dense(1, in, 1.0, rng);
  return c;
}

Vector flatten(const PolicyParams& p) {
  Vector flat(static_cast<Eigen::Index>(parameter_count(p.arch)));
  double* out = flat.data();
  for (const Dense& d : p.trunk) out += write_dense(d, out);
  out += write_dense(p.discrete_head, out);
  out += write_dense(p.mean_head, out);
  std::copy(p.log_std.data(), p.log_std.data() + p.log_std.size(), out);
  return flat;
}

Vector flatten(const CriticParams& c) {
  Vector flat(static_cast<Eigen::Index>(parameter_count(c.arch)));
  double* out = flat.data();
  for (const Dense& d : c.hidden) out += write_dense(d, out);
  write_dense(c.out, out);
  return flat;
}

void unflatten(const Vector& flat, PolicyParams& p) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count(p.arch)) {
    throw std::invalid_argument("unflatten: parameter count mismatch");
  }
  const double* in = flat.data();
  for (Dense& d : p.trunk) in += read_dense(in, d);
  in += read_dense(in, p.discrete_head);
  in += read_dense(in, p.mean_head);
  std::copy(in, in + p.log_std.size(), p.log_std.data());
}

void unflatten(const Vector& flat, CriticParams& c) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count(c.arch)) {
    throw std::invalid_argument("unflatten: parameter count mismatch");
  }
  const double* in = flat.data();
  for (Dense& d : c.hidden) in += read_dense(in, d);
  read_dense(in, c.out);
}

// ---------------------------------------------------------------------------
// Forward / backward

ActorOutput actor_forward(const PolicyParams& p, const Matrix& states, ActorTape* tape) {
  if (states.rows() != p.arch.input_dim) {
    throw std::invalid_argument("actor_forward: state dimension " +
                                std::to_string(states.rows()) + " != " +
                                std::to_string(p.arch.input_dim));
  }
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(states);
  }
  Matrix h = states;
  for (const Dense& layer : p.trunk) {
    Matrix z = layer.weight * h;
    z.colwise() += layer.bias;
    h = z.cwiseMax(0.0);
    if (tape) tape->activations.push_back(h);
  }
  ActorOutput out;
  out.logits = p.discrete_head.weight * h;
  out.logits.colwise() += p.discrete_head.bias;
  out.mean = p.mean_head.weight * h;
  out.mean.colwise() += p.mean_head.bias;
  out.log_std = clamped_log_std(p.log_std);
  return out;
}

FlatGradient actor_backward(const PolicyParams& p, const ActorTape& tape,
                            const Matrix& d_logits, const Matrix& d_mean,
                            const Vector& d_log_std) {
  const PolicyLayout l = policy_layout(p.arch);
  FlatGradient g = FlatGradient::Zero(static_cast<Eigen::Index>(l.total));
  const Matrix& last = tape.activations.back();
  Matrix dh = Matrix::Zero(last.rows(), last.cols());

  if (d_logits.size() > 0) {
    const Dense& head = p.discrete_head;
    Eigen::Map<Matrix> gw(g.data() + l.trunk_end, head.weight.rows(), head.weight.cols());
    Eigen::Map<Vector> gb(g.data() + l.trunk_end + head.weight.size(), head.bias.size());
    gw.noalias() = d_logits * last.transpose();
    gb = d_logits.rowwise().sum();
    dh.noalias() += head.weight.transpose() * d_logits;
  }
  if (d_mean.size() > 0) {
    const Dense& head = p.mean_head;
    Eigen::Map<Matrix> gw(g.data() + l.discrete_end, head.weight.rows(), head.weight.cols());
    Eigen::Map<Vector> gb(g.data() + l.discrete_end + head.weight.size(), head.bias.size());
    gw.noalias() = d_mean * last.transpose();
    gb = d_mean.rowwise().sum();
    dh.noalias() += head.weight.transpose() * d_mean;
  }
  if (d_log_std.size() > 0) {
    for (Eigen::Index k = 0; k < p.log_std.size(); ++k) {
      g(static_cast<Eigen::Index>(l.mean_end) + k) = log_std_free(p.log_std(k)) ? d_log_std(k) : 0.0;
    }
  }
  if (d_logits.size() > 0 || d_mean.size() > 0) {
    backward_hidden(p.trunk, tape.activations, std::move(dh), g.data(), layer_offsets(p.trunk));
  }
  return g;
}

ActorOutput actor_jvp(const PolicyParams& p, const ActorTape& tape, const Vector& direction) {
  const PolicyLayout l = policy_layout(p.arch);
  if (static_cast<std::size_t>(direction.size()) != l.total) {
    throw std::invalid_argument("actor_jvp: direction size mismatch");
  }
  const Matrix dh = jvp_hidden(p.trunk, tape.activations, direction.data(), layer_offsets(p.trunk));
  const Matrix& last = tape.activations.back();

  const auto head_jvp = [&](const Dense& head, std::size_t offset) {
    Eigen::Map<const Matrix> dw(direction.data() + offset, head.weight.rows(), head.weight.cols());
    Eigen::Map<const Vector> db(direction.data() + offset + head.weight.size(), head.bias.size());
    Matrix out = dw * last;
    out.noalias() += head.weight * dh;
    out.colwise() += db;
    return out;
  };

  ActorOutput out;
  out.logits = head_jvp(p.discrete_head, l.trunk_end);
  out.mean = head_jvp(p.mean_head, l.discrete_end);
  out.log_std = Vector::Zero(p.log_std.size());
  for (Eigen::Index k = 0; k < p.log_std.size(); ++k) {
    if (log_std_free(p.log_std(k))) {
      out.log_std(k) = direction(static_cast<Eigen::Index>(l.mean_end) + k);
    }
  }
  return out;
}

Vector critic_forward(const CriticParams& c, const Matrix& states, CriticTape* tape) {
  if (states.rows() != c.arch.input_dim) {
    throw std::invalid_argument("critic_forward: state dimension mismatch");
  }
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(states);
  }
  Matrix h = states;
  for (const Dense& layer : c.hidden) {
    Matrix z = layer.weight * h;
    z.colwise() += layer.bias;
    h = z.cwiseMax(0.0);
    if (tape) tape->activations.push_back(h);
  }
  Vector v = (c.out.weight * h).transpose();
  v.array() += c.out.bias(0);
  return v;
}

double critic_forward(const CriticParams& c, std::span<const double> state) {
  return critic_forward(c, one_column(state))(0);
}

FlatGradient critic_backward(const CriticParams& c, const CriticTape& tape,
                             const Vector& d_value) {
  FlatGradient g = FlatGradient::Zero(static_cast<Eigen::Index>(parameter_count(c.arch)));
  const std::vector<std::size_t> offsets = layer_offsets(c.hidden);
  const std::size_t out_off = offsets.back() + dense_size(c.hidden.back());
  const Matrix& last = tape.activations.back();
  const Matrix dv = d_value.transpose();
  Eigen::Map<Matrix> gw(g.data() + out_off, 1, c.out.weight.cols());
  gw.noalias() = dv * last.transpose();
  g(static_cast<Eigen::Index>(out_off) + c.out.weight.size()) = d_value.sum();
  Matrix dh = c.out.weight.transpose() * dv;
  backward_hidden(c.hidden, tape.activations, std::move(dh), g.data(), offsets);
  return g;
}

// ---------------------------------------------------------------------------
// Distributions

Matrix masked_log_softmax(const Matrix& logits, const Matrix& mask) {
  const bool masked = mask.size() > 0;
  if (masked && (mask.rows() != logits.rows() || mask.cols() != logits.cols())) {
    throw std::invalid_argument("masked_log_softmax: mask shape mismatch");
  }
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    double max_logit = kNegInf;
    for (Eigen::Index j = 0; j < logits.rows(); ++j) {
      if (!masked || mask(j, b) != 0.0) max_logit = std::max(max_logit, logits(j, b));
    }
    if (!std::isfinite(max_logit)) {
      throw std::invalid_argument("masked_log_softmax: no valid action");
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.rows(); ++j) {
      if (!masked || mask(j, b) != 0.0) sum += std::exp(logits(j, b) - max_logit);
    }
    const double log_z = max_logit + std::log(sum);
    for (Eigen::Index j = 0; j < logits.rows(); ++j) {
      out(j, b) = (!masked || mask(j, b) != 0.0) ? logits(j, b) - log_z : kNegInf;
    }
  }
  return out;
}

Vector gaussian_log_prob(const Matrix& actions, const Matrix& mean, const Vector& log_std) {
  Vector out(actions.cols());
  const Vector std_inv = (-log_std.array()).exp();
  const double norm = log_std.sum() + kHalfLog2Pi * static_cast<double>(log_std.size());
  for (Eigen::Index b = 0; b < actions.cols(); ++b) {
    double quad = 0.0;
    for (Eigen::Index k = 0; k < actions.rows(); ++k) {
      const double z = (actions(k, b) - mean(k, b)) * std_inv(k);
      quad += z * z;
    }
    out(b) = -0.5 * quad - norm;
  }
  return out;
}

LogProbs log_prob(const PolicyParams& p, std::span<const double> state,
                  const PolicyAction& action, std::span<const std::uint8_t> mask) {
  const ActorOutput out = actor_forward(p, one_column(state));
  const Matrix logp = masked_log_softmax(out.logits, mask_column(mask));
  if (action.discrete >= static_cast<std::size_t>(logp.rows())) {
    throw std::invalid_argument("log_prob: discrete index out of range");
  }
  Matrix a(2, 1);
  a << action.raw_speed, action.raw_turn;
  return LogProbs{logp(static_cast<Eigen::Index>(action.discrete), 0),
                  gaussian_log_prob(a, out.mean, out.log_std)(0)};
}

SampledAction sample_action(const PolicyParams& p, std::span<const double> state,
                            std::span<const std::uint8_t> mask, Rng& rng) {
  const ActorOutput out = actor_forward(p, one_column(state));
  const Matrix logp = masked_log_softmax(out.logits, mask_column(mask));
  const Matrix probs = probabilities(logp);
  SampledAction s;
  s.action.discrete = rng.categorical(std::span<const double>(probs.data(), probs.size()));
  const Vector sd = out.log_std.array().exp();
  s.action.raw_speed = out.mean(0, 0) + sd(0) * rng.normal();
  s.action.raw_turn = out.mean(1, 0) + sd(1) * rng.normal();
  Matrix a(2, 1);
  a << s.action.raw_speed, s.action.raw_turn;
  s.logp.discrete = logp(static_cast<Eigen::Index>(s.action.discrete), 0);
  s.logp.continuous = gaussian_log_prob(a, out.mean, out.log_std)(0);
  return s;
}

PolicyAction greedy_action(const PolicyParams& p, std::span<const double> state,
                           std::span<const std::uint8_t> mask) {
  const ActorOutput out = actor_forward(p, one_column(state));
  const Matrix logp = masked_log_softmax(out.logits, mask_column(mask));
  Eigen::Index best = 0;
  logp.col(0).maxCoeff(&best);
  return PolicyAction{static_cast<std::size_t>(best), out.mean(0, 0), out.mean(1, 0)};
}

// ---------------------------------------------------------------------------
// Losses

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::constant: return "constant";
    case LossKind::quadratic_probe: return "quadratic_probe";
    case LossKind::surrogate_discrete: return "surrogate_discrete";
    case LossKind::surrogate_continuous: return "surrogate_continuous";
    case LossKind::reinforce_discrete: return "reinforce_discrete";
    case LossKind::reinforce_continuous: return "reinforce_continuous";
    case LossKind::kl_discrete: return "kl_discrete";
    case LossKind::kl_continuous: return "kl_continuous";
    case LossKind::critic_mse: return "critic_mse";
  }
  return "unregistered";
}

bool is_actor_loss(LossKind kind) {
  switch (kind) {
    case LossKind::surrogate_discrete:
    case LossKind::surrogate_continuous:
    case LossKind::reinforce_discrete:
    case LossKind::reinforce_continuous:
    case LossKind::kl_discrete:
    case LossKind::kl_continuous:
      return true;
    default:
      return false;
  }
}

double LossBatch::sample_weight() const {
  if (weight > 0.0) return weight;
  return size() == 0 ? 0.0 : 1.0 / static_cast<double>(size());
}

LossValue evaluate_loss(LossKind kind, const PolicyParams& p, const LossBatch& batch) {
  switch (kind) {
    case LossKind::constant:
      return LossValue{1.0, FlatGradient::Zero(static_cast<Eigen::Index>(parameter_count(p.arch)))};
    case LossKind::quadratic_probe: {
      const Vector theta = flatten(p);
      return LossValue{0.5 * theta.squaredNorm(), theta};
    }
    case LossKind::critic_mse:
      throw std::invalid_argument("critic_mse is a critic loss");
    default:
      break;
  }
  if (!is_actor_loss(kind)) throw std::invalid_argument("unregistered loss kind");
  ActorTape tape;
  const ActorOutput out = actor_forward(p, batch.states, &tape);
  const ActorLossResult r = actor_loss_terms(kind, out, batch);
  return LossValue{r.value, actor_backward(p, tape, r.d_logits, r.d_mean, r.d_log_std)};
}

LossValue evaluate_loss(LossKind kind, const CriticParams& c, const LossBatch& batch) {
  switch (kind) {
    case LossKind::constant:
      return LossValue{1.0, FlatGradient::Zero(static_cast<Eigen::Index>(parameter_count(c.arch)))};
    case LossKind::quadratic_probe: {
      const Vector theta = flatten(c);
      return LossValue{0.5 * theta.squaredNorm(), theta};
    }
    case LossKind::critic_mse: {
      if (batch.targets.size() != static_cast<Eigen::Index>(batch.size())) {
        throw std::invalid_argument("critic_mse: targets size mismatch");
      }
      CriticTape tape;
      const Vector v = critic_forward(c, batch.states, &tape);
      const double w = batch.sample_weight();
      const Vector resid = batch.targets - v;
      return LossValue{w * resid.squaredNorm(), critic_backward(c, tape, -2.0 * w * resid)};
    }
    default:
      throw std::invalid_argument(std::string("not a critic loss: ") + loss_name(kind));
  }
}

FlatGradient gradient(LossKind kind, const PolicyParams& p, const LossBatch& batch) {
  return evaluate_loss(kind, p, batch).gradient;
}

FlatGradient gradient(LossKind kind, const CriticParams& c, const LossBatch& batch) {
  return evaluate_loss(kind, c, batch).gradient;
}

double mean_kl(const PolicyParams& p, const LossBatch& batch, Head head) {
  const ActorOutput out = actor_forward(p, batch.states);
  const LossKind kind = head == Head::discrete ? LossKind::kl_discrete : LossKind::kl_continuous;
  LossBatch unit = batch;
  unit.weight = 0.0;
  return actor_loss_terms(kind, out, unit).value;
}

FisherOperator::FisherOperator(const PolicyParams& p, const LossBatch& batch, Head head)
    : params_(p), head_(head), weight_(batch.sample_weight()) {
  const ActorOutput out = actor_forward(p, batch.states, &tape_);
  if (head == Head::discrete) {
    probs_ = probabilities(masked_log_softmax(out.logits, batch.mask));
  } else {
    inv_var_ = (-2.0 * out.log_std.array()).exp();
  }
  head_mask_ = head_mask(p.arch, head);
}

Vector FisherOperator::apply(const Vector& v, double damping) const {
  const Vector dir = v.cwiseProduct(head_mask_);
  const ActorOutput jv = actor_jvp(params_, tape_, dir);
  FlatGradient g;
  if (head_ == Head::discrete) {
    Matrix m = probs_.cwiseProduct(jv.logits);
    const Eigen::RowVectorXd pu = m.colwise().sum();
    m -= probs_ * pu.asDiagonal();
    g = actor_backward(params_, tape_, weight_ * m, Matrix(), Vector());
  } else {
    const Matrix dm = weight_ * (inv_var_.asDiagonal() * jv.mean);
    const double total = weight_ * static_cast<double>(tape_.activations.front().cols());
    const Vector dls = 2.0 * total * jv.log_std;
    g = actor_backward(params_, tape_, Matrix(), dm, dls);
  }
  return g.cwiseProduct(head_mask_) + damping * dir;
}

Vector fisher_vector_product(const PolicyParams& p, const LossBatch& batch, Head head,
                             const Vector& v, double damping) {
  return FisherOperator(p, batch, head).apply(v, damping);
}

}  // namespace suav
