#include "hwscen/cvqvae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <json.hpp>

#include "hwscen/dataset_io.hpp"
#include "hwscen/errors.hpp"

namespace hwscen {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void ModelConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("model: latent_dim must be >= 1");
  if (codebook_size < 1) throw ConfigError("model: codebook_size must be >= 1");
  for (int h : hidden)
    if (h < 1) throw ConfigError("model: hidden widths must be >= 1");
}

void TrainConfig::validate() const {
  if (lambda_cl < 0.0 || lambda_int < 0.0) throw ConfigError("train: lambda weights must be >= 0");
  if (learning_rate < 0.0) throw ConfigError("train: learning_rate must be >= 0");
  if (batch_size < 1 || epochs < 0) throw ConfigError("train: batch_size >= 1 and epochs >= 0 required");
  if (commitment_weight < 0.0) throw ConfigError("train: commitment_weight must be >= 0");
  if (!(usage_decay >= 0.0 && usage_decay < 1.0)) throw ConfigError("train: usage_decay must lie in [0, 1)");
}

std::vector<Eigen::Map<VectorXd>> Weights::blocks() {
  std::vector<Eigen::Map<VectorXd>> out;
  auto add = [&](auto& m) { out.emplace_back(m.data(), m.size()); };
  for (auto& l : encoder) {
    add(l.weight);
    add(l.bias);
  }
  for (auto& l : decoder) {
    add(l.weight);
    add(l.bias);
  }
  add(codebook);
  add(cl_head.weight);
  add(cl_head.bias);
  add(int_head.weight);
  add(int_head.bias);
  return out;
}

std::size_t Weights::size() const {
  std::size_t n = 0;
  for (const auto& l : encoder) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  for (const auto& l : decoder) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  n += static_cast<std::size_t>(codebook.size());
  n += static_cast<std::size_t>(cl_head.weight.size() + cl_head.bias.size());
  n += static_cast<std::size_t>(int_head.weight.size() + int_head.bias.size());
  return n;
}

Weights Weights::zeros_like() const {
  Weights z = *this;
  for (auto b : z.blocks()) b.setZero();
  return z;
}

std::size_t flat_index(Weights& w, std::size_t block, std::size_t offset) {
  auto blocks = w.blocks();
  std::size_t base = 0;
  for (std::size_t i = 0; i < block; ++i) base += static_cast<std::size_t>(blocks[i].size());
  return base + offset;
}

namespace {

Dense xavier(int out, int in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Dense d;
  d.weight.resize(out, in);
  for (Eigen::Index j = 0; j < d.weight.cols(); ++j)
    for (Eigen::Index i = 0; i < d.weight.rows(); ++i) d.weight(i, j) = u(rng);
  d.bias = VectorXd::Zero(out);
  return d;
}

MatrixXd affine(const Dense& l, const MatrixXd& x) {
  MatrixXd y = l.weight * x;
  y.colwise() += l.bias;
  return y;
}

/// Inputs to every layer plus the final (linear) output.
struct MlpTrace {
  std::vector<MatrixXd> inputs;
  MatrixXd output;
};

MlpTrace mlp_forward(const std::vector<Dense>& layers, const MatrixXd& x) {
  MlpTrace tr;
  tr.inputs.reserve(layers.size());
  MatrixXd h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    MatrixXd y = affine(layers[i], h);
    tr.inputs.push_back(std::move(h));
    if (i + 1 < layers.size()) y = y.array().tanh().matrix();
    h = std::move(y);
  }
  tr.output = std::move(h);
  return tr;
}

/// Accumulates parameter gradients; returns d(loss)/d(input) when requested.
MatrixXd mlp_backward(const std::vector<Dense>& layers, const MlpTrace& tr, MatrixXd d,
                      std::vector<Dense>& grads, bool want_input_grad) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    grads[i].weight.noalias() += d * tr.inputs[i].transpose();
    grads[i].bias += d.rowwise().sum();
    if (i > 0) {
      MatrixXd back = layers[i].weight.transpose() * d;
      d = (back.array() * (1.0 - tr.inputs[i].array().square())).matrix();
    } else if (want_input_grad) {
      return layers[0].weight.transpose() * d;
    }
  }
  return {};
}

VectorXd sigmoid(const VectorXd& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

int nearest_code(const MatrixXd& codebook, const double* z, Eigen::Index dim) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index q = 0; q < codebook.rows(); ++q) {
    double dist = 0.0;
    for (Eigen::Index k = 0; k < dim; ++k) {
      const double diff = z[k] - codebook(q, k);
      dist += diff * diff;
    }
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<int>(q);
    }
  }
  return best;
}

struct Frozen {
  std::vector<int> index;
  MatrixXd z_e;
  MatrixXd z_q;
};

struct Normalizers {
  VectorXd recon, interaction;
  double latent = 1.0;
};

Normalizers normalizers(std::span<const Sample> batch, int latent_dim, LossReduction reduction) {
  Normalizers n;
  const auto B = static_cast<Eigen::Index>(batch.size());
  n.recon = VectorXd::Ones(B);
  n.interaction = VectorXd::Ones(B);
  if (reduction == LossReduction::Mean) {
    n.latent = latent_dim;
    for (Eigen::Index b = 0; b < B; ++b) {
      n.recon(b) = std::max(1.0, batch[static_cast<std::size_t>(b)].input_weight.sum());
      n.interaction(b) = std::max(1.0, batch[static_cast<std::size_t>(b)].interaction_weight.sum());
    }
  }
  return n;
}

/// Shared forward pass. With `frozen`, the decoder and heads see
/// z_e + (z_q0 - z_e0) and the VQ terms use the frozen halves, which makes
/// the straight-through gradient the exact gradient of the returned loss.
LossBreakdown forward_backward(std::span<const Sample> batch, const ModelParams& params,
                               const TrainConfig& cfg, Weights* grad, const Frozen* frozen,
                               std::vector<int>* assignments, MatrixXd* latents) {
  const auto& w = params.weights;
  const auto B = static_cast<Eigen::Index>(batch.size());
  if (B == 0) throw ContractError("loss: empty batch");
  const int D = params.shape.input_dim();
  const int I = params.shape.interaction_dim();
  const int d = params.arch.latent_dim;

  MatrixXd X(D, B), Wx(D, B), T(I, B), Wt(I, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& s = batch[static_cast<std::size_t>(b)];
    if (s.input.size() != D || s.interaction.size() != I)
      throw ContractError("loss: sample shape does not match the model");
    X.col(b) = s.input;
    Wx.col(b) = s.input_weight;
    T.col(b) = s.interaction;
    Wt.col(b) = s.interaction_weight;
  }
  const Normalizers norm = normalizers(batch, d, cfg.reduction);

  MlpTrace enc = mlp_forward(w.encoder, X);
  const MatrixXd& z_e = enc.output;
  std::vector<int> idx(static_cast<std::size_t>(B));
  MatrixXd z_q(d, B), u(d, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    if (frozen) {
      idx[static_cast<std::size_t>(b)] = frozen->index[static_cast<std::size_t>(b)];
      z_q.col(b) = w.codebook.row(idx[static_cast<std::size_t>(b)]).transpose();
      u.col(b) = z_e.col(b) + (frozen->z_q.col(b) - frozen->z_e.col(b));
    } else {
      idx[static_cast<std::size_t>(b)] = nearest_code(w.codebook, z_e.col(b).data(), d);
      z_q.col(b) = w.codebook.row(idx[static_cast<std::size_t>(b)]).transpose();
      u.col(b) = z_q.col(b);
    }
  }

  MlpTrace dec = mlp_forward(w.decoder, u);
  const MatrixXd& x_hat = dec.output;
  MatrixXd logits = affine(w.cl_head, u);
  MatrixXd int_logits = affine(w.int_head, u);

  LossBreakdown L;
  MatrixXd probs(logits.rows(), B), t_hat(I, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& s = batch[static_cast<std::size_t>(b)];
    const VectorXd r = X.col(b) - x_hat.col(b);
    L.recon += (Wx.col(b).array() * r.array().square()).sum() / norm.recon(b);

    const VectorXd cb_diff = frozen ? VectorXd(frozen->z_e.col(b) - z_q.col(b)) : VectorXd(z_e.col(b) - z_q.col(b));
    const VectorXd cm_diff = frozen ? VectorXd(z_e.col(b) - frozen->z_q.col(b)) : VectorXd(z_e.col(b) - z_q.col(b));
    L.codebook_term += cb_diff.squaredNorm() / norm.latent;
    L.commit_term += cfg.commitment_weight * cm_diff.squaredNorm() / norm.latent;

    const double mx = logits.col(b).maxCoeff();
    const VectorXd e = (logits.col(b).array() - mx).exp().matrix();
    const double z = e.sum();
    probs.col(b) = e / z;
    L.cl += -(logits(s.class_index, b) - mx - std::log(z));

    t_hat.col(b) = sigmoid(int_logits.col(b));
    L.interaction += (Wt.col(b).array() * (T.col(b) - t_hat.col(b)).array().square()).sum() / norm.interaction(b);
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  L.recon *= inv_b;
  L.codebook_term *= inv_b;
  L.commit_term *= inv_b;
  L.cl *= inv_b;
  L.interaction *= inv_b;
  L.total = L.recon + L.codebook_term + L.commit_term + cfg.lambda_cl * L.cl + cfg.lambda_int * L.interaction;

  if (assignments) *assignments = idx;
  if (latents) *latents = z_e;
  if (!grad) return L;

  // Reconstruction.
  MatrixXd d_xhat(D, B);
  for (Eigen::Index b = 0; b < B; ++b)
    d_xhat.col(b) = (-2.0 * inv_b / norm.recon(b)) * (Wx.col(b).array() * (X.col(b) - x_hat.col(b)).array()).matrix();
  MatrixXd d_u = mlp_backward(w.decoder, dec, std::move(d_xhat), grad->decoder, true);

  // Heads.
  MatrixXd d_logits = probs;
  for (Eigen::Index b = 0; b < B; ++b) d_logits(batch[static_cast<std::size_t>(b)].class_index, b) -= 1.0;
  d_logits *= cfg.lambda_cl * inv_b;
  grad->cl_head.weight.noalias() += d_logits * u.transpose();
  grad->cl_head.bias += d_logits.rowwise().sum();
  d_u.noalias() += w.cl_head.weight.transpose() * d_logits;

  MatrixXd d_int(I, B);
  for (Eigen::Index b = 0; b < B; ++b)
    d_int.col(b) = (-2.0 * cfg.lambda_int * inv_b / norm.interaction(b)) *
                   (Wt.col(b).array() * (T.col(b) - t_hat.col(b)).array() * t_hat.col(b).array() *
                    (1.0 - t_hat.col(b).array()))
                       .matrix();
  grad->int_head.weight.noalias() += d_int * u.transpose();
  grad->int_head.bias += d_int.rowwise().sum();
  d_u.noalias() += w.int_head.weight.transpose() * d_int;

  // Straight-through: the decoder-input gradient passes to the encoder output.
  MatrixXd d_ze = d_u;
  for (Eigen::Index b = 0; b < B; ++b) {
    const VectorXd cb_diff = frozen ? VectorXd(frozen->z_e.col(b) - z_q.col(b)) : VectorXd(z_e.col(b) - z_q.col(b));
    const VectorXd cm_diff = frozen ? VectorXd(z_e.col(b) - frozen->z_q.col(b)) : VectorXd(z_e.col(b) - z_q.col(b));
    grad->codebook.row(idx[static_cast<std::size_t>(b)]) += (-2.0 * inv_b / norm.latent) * cb_diff.transpose();
    d_ze.col(b) += (2.0 * cfg.commitment_weight * inv_b / norm.latent) * cm_diff;
  }
  mlp_backward(w.encoder, enc, std::move(d_ze), grad->encoder, false);
  return L;
}

} // namespace

ModelParams init_params(const ModelShape& shape, const ModelConfig& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.shape = shape;
  p.arch = arch;
  std::vector<int> widths;
  widths.push_back(shape.input_dim());
  widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
  widths.push_back(arch.latent_dim);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    p.weights.encoder.push_back(xavier(widths[i + 1], widths[i], rng));
  for (std::size_t i = widths.size() - 1; i > 0; --i)
    p.weights.decoder.push_back(xavier(widths[i - 1], widths[i], rng));
  const int Q = arch.codebook_size;
  std::uniform_real_distribution<double> u(-1.0 / Q, 1.0 / Q);
  p.weights.codebook.resize(Q, arch.latent_dim);
  for (Eigen::Index j = 0; j < p.weights.codebook.cols(); ++j)
    for (Eigen::Index i = 0; i < p.weights.codebook.rows(); ++i) p.weights.codebook(i, j) = u(rng);
  p.weights.cl_head = xavier(shape.classes, arch.latent_dim, rng);
  p.weights.int_head = xavier(shape.interaction_dim(), arch.latent_dim, rng);
  p.usage = VectorXd::Constant(Q, 1.0 / Q);
  p.feature_offset = VectorXd::Zero(shape.features);
  p.feature_scale = VectorXd::Ones(shape.features);
  return p;
}

Eigen::VectorXd flatten_input(const ScenarioTensor& tensor, const ModelParams& params) {
  const auto& s = params.shape;
  if (tensor.slots != s.slots || tensor.features != s.features || tensor.frames != s.frames)
    throw ContractError("encode: tensor shape does not match the model");
  VectorXd x(s.input_dim());
  for (int n = 0; n < tensor.slots; ++n)
    for (int f = 0; f < tensor.features; ++f)
      for (int t = 0; t < tensor.frames; ++t) {
        const auto i = static_cast<Eigen::Index>(tensor.index(n, f, t));
        x(i) = (tensor.at(n, f, t) - params.feature_offset(f)) / params.feature_scale(f);
      }
  return x;
}

Sample make_sample(const ScenarioRecord& record, const ModelParams& params) {
  Sample s;
  s.input = flatten_input(record.tensor, params);
  const auto& t = record.tensor;
  s.input_weight.resize(params.shape.input_dim());
  for (int n = 0; n < t.slots; ++n)
    for (int f = 0; f < t.features; ++f)
      for (int k = 0; k < t.frames; ++k)
        s.input_weight(static_cast<Eigen::Index>(t.index(n, f, k))) = t.present(n, k) ? 1.0 : 0.0;
  s.class_index = record.pseudo_class.index();
  if (s.class_index < 0 || s.class_index >= params.shape.classes)
    throw ContractError("record " + record.id + " has an invalid pseudo-class");
  const auto& m = record.interaction;
  if (m.slots != params.shape.slots || m.frames != params.shape.frames)
    throw ContractError("record " + record.id + ": interaction shape mismatch");
  s.interaction = Eigen::Map<const VectorXd>(m.values.data(), static_cast<Eigen::Index>(m.values.size()));
  s.interaction_weight.resize(params.shape.interaction_dim());
  for (int n = 0; n < m.slots; ++n)
    for (int k = 0; k < m.frames; ++k)
      s.interaction_weight(n * m.frames + k) = t.present(n, k) ? 1.0 : 0.0;
  return s;
}

Eigen::VectorXd encode_input(const Eigen::VectorXd& input, const ModelParams& params) {
  if (input.size() != params.shape.input_dim()) throw ContractError("encode: input size mismatch");
  return mlp_forward(params.weights.encoder, input).output.col(0);
}

Eigen::VectorXd encode(const ScenarioTensor& tensor, const ModelParams& params) {
  return encode_input(flatten_input(tensor, params), params);
}

Quantized quantize(const Eigen::VectorXd& z, const Eigen::MatrixXd& codebook) {
  if (codebook.rows() == 0) throw ContractError("quantize: empty codebook");
  if (codebook.cols() != z.size()) throw ContractError("quantize: dimension mismatch");
  Quantized q;
  q.index = nearest_code(codebook, z.data(), z.size());
  q.z_q = codebook.row(q.index).transpose();
  return q;
}

Eigen::VectorXd decode_raw(const Eigen::VectorXd& z_q, const ModelParams& params) {
  if (z_q.size() != params.arch.latent_dim) throw ContractError("decode: latent size mismatch");
  return mlp_forward(params.weights.decoder, z_q).output.col(0);
}

ScenarioTensor decode(const Eigen::VectorXd& z_q, const ModelParams& params) {
  const VectorXd raw = decode_raw(z_q, params);
  const auto& s = params.shape;
  ScenarioTensor out(s.slots, s.features, s.frames);
  for (int n = 0; n < s.slots; ++n)
    for (int f = 0; f < s.features; ++f)
      for (int t = 0; t < s.frames; ++t) {
        const auto i = out.index(n, f, t);
        out.values[i] = raw(static_cast<Eigen::Index>(i)) * params.feature_scale(f) + params.feature_offset(f);
      }
  return out;
}

Eigen::VectorXd classify(const Eigen::VectorXd& z_q, const ModelParams& params) {
  VectorXd logits = params.weights.cl_head.weight * z_q + params.weights.cl_head.bias;
  const double mx = logits.maxCoeff();
  VectorXd e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

InteractionMatrix predict_interaction(const Eigen::VectorXd& z_q, const ModelParams& params) {
  const VectorXd t = sigmoid(params.weights.int_head.weight * z_q + params.weights.int_head.bias);
  InteractionMatrix m(params.shape.slots, params.shape.frames);
  std::copy(t.data(), t.data() + t.size(), m.values.begin());
  return m;
}

LossBreakdown sample_loss(const Sample& sample, const ModelParams& params, const TrainConfig& cfg) {
  return forward_backward(std::span<const Sample>(&sample, 1), params, cfg, nullptr, nullptr, nullptr, nullptr);
}

LossBreakdown loss(const ScenarioRecord& record, const ModelParams& params, const TrainConfig& cfg) {
  return sample_loss(make_sample(record, params), params, cfg);
}

LossBreakdown loss_and_gradient(std::span<const Sample> batch, const ModelParams& params,
                                const TrainConfig& cfg, Weights& grad, std::vector<int>* assignments,
                                Eigen::MatrixXd* latents) {
  return forward_backward(batch, params, cfg, &grad, nullptr, assignments, latents);
}

void fit_standardization(std::span<const ScenarioTensor> tensors, ModelParams& params) {
  const int F = params.shape.features;
  VectorXd sum = VectorXd::Zero(F), sq = VectorXd::Zero(F);
  double count = 0.0;
  for (const auto& x : tensors)
    for (int n = 0; n < x.slots; ++n)
      for (int t = 0; t < x.frames; ++t) {
        if (!x.present(n, t)) continue;
        count += 1.0;
        for (int f = 0; f < F; ++f) {
          const double v = x.at(n, f, t);
          sum(f) += v;
          sq(f) += v * v;
        }
      }
  if (count == 0.0) return;
  params.feature_offset = sum / count;
  for (int f = 0; f < F; ++f) {
    const double var = sq(f) / count - params.feature_offset(f) * params.feature_offset(f);
    params.feature_scale(f) = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
}

namespace {

void initialize_codebook(std::span<const Sample> samples, ModelParams& params, const TrainConfig& cfg,
                         std::mt19937_64& rng) {
  const int Q = params.codebook_size();
  const auto n = samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = cfg.revival_noise > 0.0 ? cfg.revival_noise : 1e-3;
  for (int q = 0; q < Q; ++q) {
    const auto& s = samples[order[static_cast<std::size_t>(q) % n]];
    VectorXd z = encode_input(s.input, params);
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) += sigma * noise(rng);
    params.weights.codebook.row(q) = z.transpose();
  }
  params.usage = VectorXd::Constant(Q, 1.0 / Q);
}

} // namespace

TrainResult train_samples(std::span<const Sample> samples, ModelParams initial, const TrainConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw InputError("train: dataset is empty");
  TrainResult result;
  result.params = std::move(initial);
  auto& params = result.params;
  const int Q = params.codebook_size();
  const int d = params.arch.latent_dim;
  if (params.usage.size() != Q) params.usage = VectorXd::Constant(Q, 1.0 / Q);

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  MatrixXd recent(d, static_cast<Eigen::Index>(samples.size()));

  Weights grad = params.weights.zeros_like();
  std::vector<Sample> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    std::vector<int> used(static_cast<std::size_t>(Q), 0);
    std::size_t seen = 0;
    int batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);
      for (auto blk : grad.blocks()) blk.setZero();
      std::vector<int> assign;
      MatrixXd latents;
      const LossBreakdown L = loss_and_gradient(batch, params, cfg, grad, &assign, &latents);
      if (!std::isfinite(L.total))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_no));
      auto pb = params.weights.blocks();
      auto gb = grad.blocks();
      for (std::size_t k = 0; k < pb.size(); ++k) pb[k] -= cfg.learning_rate * gb[k];

      const double bsz = static_cast<double>(batch.size());
      VectorXd counts = VectorXd::Zero(Q);
      for (std::size_t b = 0; b < assign.size(); ++b) {
        counts(assign[b]) += 1.0;
        used[static_cast<std::size_t>(assign[b])] = 1;
        recent.col(static_cast<Eigen::Index>(start + b)) = latents.col(static_cast<Eigen::Index>(b));
      }
      params.usage = cfg.usage_decay * params.usage + (1.0 - cfg.usage_decay) * (counts / bsz);

      stats.loss.recon += L.recon * bsz;
      stats.loss.codebook_term += L.codebook_term * bsz;
      stats.loss.commit_term += L.commit_term * bsz;
      stats.loss.cl += L.cl * bsz;
      stats.loss.interaction += L.interaction * bsz;
      stats.loss.total += L.total * bsz;
      seen += batch.size();
    }
    const double inv = 1.0 / static_cast<double>(seen);
    stats.loss.recon *= inv;
    stats.loss.codebook_term *= inv;
    stats.loss.commit_term *= inv;
    stats.loss.cl *= inv;
    stats.loss.interaction *= inv;
    stats.loss.total *= inv;
    stats.codes_used = static_cast<int>(std::count(used.begin(), used.end(), 1));

    // Dead-code revival from this epoch's encoder outputs.
    for (int q = 0; q < Q; ++q) {
      if (params.usage(q) >= cfg.dead_code_threshold) continue;
      std::uniform_int_distribution<Eigen::Index> pick(0, recent.cols() - 1);
      VectorXd z = recent.col(pick(rng));
      for (Eigen::Index k = 0; k < z.size(); ++k) z(k) += cfg.revival_noise * noise(rng);
      params.weights.codebook.row(q) = z.transpose();
      ++stats.revived;
    }
    result.history.push_back(stats);
  }
  return result;
}

TrainResult train(std::span<const ScenarioRecord> dataset, const ModelConfig& arch, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw InputError("train: dataset is empty");
  ModelShape shape;
  shape.slots = dataset[0].tensor.slots;
  shape.features = dataset[0].tensor.features;
  shape.frames = dataset[0].tensor.frames;
  ModelParams params = init_params(shape, arch, cfg.seed);
  if (cfg.standardize) {
    std::vector<ScenarioTensor> tensors;
    tensors.reserve(dataset.size());
    for (const auto& r : dataset) tensors.push_back(r.tensor);
    fit_standardization(tensors, params);
  }
  std::vector<Sample> samples;
  samples.reserve(dataset.size());
  for (const auto& r : dataset) samples.push_back(make_sample(r, params));
  std::mt19937_64 rng(cfg.seed + 17);
  initialize_codebook(samples, params, cfg, rng);
  return train_samples(samples, std::move(params), cfg);
}

// -----------------------------------------------------------------------------

GradCheckResult grad_check(std::span<const Sample> batch, const ModelParams& params, const TrainConfig& cfg,
                           const GradCheckOptions& opts) {
  if (!(opts.epsilon > 0.0)) throw ContractError("grad_check: epsilon must be positive");
  Weights grad = params.weights.zeros_like();
  Frozen frozen;
  forward_backward(batch, params, cfg, &grad, nullptr, &frozen.index, &frozen.z_e);
  frozen.z_q.resize(frozen.z_e.rows(), frozen.z_e.cols());
  for (std::size_t b = 0; b < frozen.index.size(); ++b)
    frozen.z_q.col(static_cast<Eigen::Index>(b)) = params.weights.codebook.row(frozen.index[b]).transpose();

  ModelParams probe = params;
  auto pblocks = probe.weights.blocks();
  auto gblocks = grad.blocks();
  const std::size_t n_blocks = pblocks.size();
  const std::size_t codebook_block = 2 * (params.weights.encoder.size() + params.weights.decoder.size());

  // Pick parameters per block so that every component is exercised.
  std::mt19937_64 rng(opts.seed);
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  const std::size_t per_block = std::max<std::size_t>(8, (opts.min_params + n_blocks - 1) / n_blocks);
  std::vector<std::pair<std::size_t, std::size_t>> leftover;
  for (std::size_t k = 0; k < n_blocks; ++k) {
    const auto size = static_cast<std::size_t>(pblocks[k].size());
    std::vector<std::size_t> pool;
    if (k == codebook_block) {
      const auto Q = static_cast<std::size_t>(params.weights.codebook.rows());
      const auto d = static_cast<std::size_t>(params.weights.codebook.cols());
      for (int q : frozen.index)
        for (std::size_t j = 0; j < d; ++j) pool.push_back(static_cast<std::size_t>(q) + j * Q);
      std::sort(pool.begin(), pool.end());
      pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    } else {
      pool.resize(size);
      std::iota(pool.begin(), pool.end(), 0);
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t i = 0; i < pool.size(); ++i) (i < per_block ? picks : leftover).emplace_back(k, pool[i]);
  }
  // Small blocks are exhausted early; top up from the large ones.
  std::shuffle(leftover.begin(), leftover.end(), rng);
  for (std::size_t i = 0; picks.size() < opts.min_params && i < leftover.size(); ++i) picks.push_back(leftover[i]);
  if (opts.corrupt_param) {
    std::size_t rem = *opts.corrupt_param, k = 0;
    while (k < n_blocks && rem >= static_cast<std::size_t>(pblocks[k].size())) rem -= static_cast<std::size_t>(pblocks[k++].size());
    if (k == n_blocks) throw ContractError("grad_check: corrupt_param out of range");
    picks.emplace_back(k, rem);
  }

  GradCheckResult res;
  for (const auto& [k, off] : picks) {
    const auto i = static_cast<Eigen::Index>(off);
    const double saved = pblocks[k](i);
    pblocks[k](i) = saved + opts.epsilon;
    const double up = forward_backward(batch, probe, cfg, nullptr, &frozen, nullptr, nullptr).total;
    pblocks[k](i) = saved - opts.epsilon;
    const double down = forward_backward(batch, probe, cfg, nullptr, &frozen, nullptr, nullptr).total;
    pblocks[k](i) = saved;
    const double numeric = (up - down) / (2.0 * opts.epsilon);
    double analytic = gblocks[k](i);
    std::size_t flat = 0;
    for (std::size_t j = 0; j < k; ++j) flat += static_cast<std::size_t>(pblocks[j].size());
    flat += off;
    if (opts.corrupt_param && *opts.corrupt_param == flat) analytic *= opts.corrupt_factor;
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(numeric), opts.abs_floor);
    res.max_abs_gradient = std::max(res.max_abs_gradient, std::abs(analytic));
    if (rel > res.max_rel_error || res.checked == 0) {
      res.max_rel_error = std::max(res.max_rel_error, rel);
      if (rel >= res.max_rel_error) res.worst_param = flat;
    }
    ++res.checked;
  }
  return res;
}

// -----------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "hwscen-checkpoint v1";

void write_block(std::ostream& os, const double* data, std::size_t n) {
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_block(std::istream& is, double* data, std::size_t n) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw FormatError("checkpoint: truncated weight data");
}

} // namespace

void save_checkpoint(std::ostream& os, const ModelParams& params) {
  nlohmann::json h;
  h["format"] = "hwscen-checkpoint";
  h["version"] = 1;
  h["d"] = params.arch.latent_dim;
  h["Q"] = params.codebook_size();
  h["S"] = params.shape.classes;
  h["N"] = params.shape.slots;
  h["F"] = params.shape.features;
  h["T_obs"] = params.shape.frames;
  h["hidden"] = params.arch.hidden;
  h["codebook_update"] = params.codebook_update;
  h["activation"] = "tanh";
  ModelParams copy = params;
  std::vector<std::size_t> sizes;
  for (auto b : copy.weights.blocks()) sizes.push_back(static_cast<std::size_t>(b.size()));
  h["blocks"] = sizes;
  os << kCheckpointMagic << '\n' << h.dump() << '\n';
  for (auto b : copy.weights.blocks()) write_block(os, b.data(), static_cast<std::size_t>(b.size()));
  write_block(os, params.usage.data(), static_cast<std::size_t>(params.usage.size()));
  write_block(os, params.feature_offset.data(), static_cast<std::size_t>(params.feature_offset.size()));
  write_block(os, params.feature_scale.data(), static_cast<std::size_t>(params.feature_scale.size()));
}

ModelParams load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic)
    throw FormatError("checkpoint: unknown format or version");
  if (!std::getline(is, line)) throw FormatError("checkpoint: missing header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (h.value("version", 0) != 1) throw FormatError("checkpoint: unsupported version");
  ModelShape shape;
  shape.slots = h.at("N");
  shape.features = h.at("F");
  shape.frames = h.at("T_obs");
  shape.classes = h.at("S");
  ModelConfig arch;
  arch.latent_dim = h.at("d");
  arch.codebook_size = h.at("Q");
  arch.hidden = h.at("hidden").get<std::vector<int>>();
  ModelParams p = init_params(shape, arch, 0);
  p.codebook_update = h.value("codebook_update", "gradient");
  auto blocks = p.weights.blocks();
  const auto sizes = h.at("blocks").get<std::vector<std::size_t>>();
  if (sizes.size() != blocks.size()) throw FormatError("checkpoint: block count mismatch");
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (sizes[k] != static_cast<std::size_t>(blocks[k].size())) throw FormatError("checkpoint: block size mismatch");
    read_block(is, blocks[k].data(), sizes[k]);
  }
  read_block(is, p.usage.data(), static_cast<std::size_t>(p.usage.size()));
  read_block(is, p.feature_offset.data(), static_cast<std::size_t>(p.feature_offset.size()));
  read_block(is, p.feature_scale.data(), static_cast<std::size_t>(p.feature_scale.size()));
  return p;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw StageError("cannot write " + path);
  save_checkpoint(os, params);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StageError("missing input artifact: " + path);
  return load_checkpoint(is);
}

void write_loss_history(std::ostream& os, std::span<const EpochStats> history) {
  os << "epoch,recon,codebook,commit,cl,int,total\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& l = history[e].loss;
    os << e << ',' << format_real(l.recon) << ',' << format_real(l.codebook_term) << ','
       << format_real(l.commit_term) << ',' << format_real(l.cl) << ',' << format_real(l.interaction) << ','
       << format_real(l.total) << '\n';
  }
}

} // namespace hwscen
