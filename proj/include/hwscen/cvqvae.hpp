#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hwscen/core_types.hpp"

namespace hwscen {

/// Input geometry of a model: slots x features x frames tensors, `classes`
/// pseudo-classes and a slots x frames interaction target.
struct ModelShape {
  int slots = kSlots;
  int features = kFeatures;
  int frames = kObsFrames;
  int classes = kClasses;

  int input_dim() const { return slots * features * frames; }
  int interaction_dim() const { return slots * frames; }
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct ModelConfig {
  int latent_dim = 64;
  std::vector<int> hidden{256, 256}; // tanh layers; empty = linear maps
  int codebook_size = 64;

  void validate() const;
};

struct Dense {
  Eigen::MatrixXd weight; // out x in
  Eigen::VectorXd bias;
};

/// Every trainable array. The flattening order (used by gradients, SGD and
/// checkpoints) is: encoder layers (weight, bias)..., decoder layers
/// (weight, bias)..., codebook (Q x d), classifier head, interaction head;
/// matrices column-major.
struct Weights {
  std::vector<Dense> encoder;
  std::vector<Dense> decoder;
  Eigen::MatrixXd codebook;
  Dense cl_head;
  Dense int_head;

  std::vector<Eigen::Map<Eigen::VectorXd>> blocks();
  std::size_t size() const;
  Weights zeros_like() const;
};

struct ModelParams {
  ModelShape shape;
  ModelConfig arch;
  Weights weights;
  Eigen::VectorXd usage; // per-code exponential moving usage
  // Per-feature standardisation applied to present cells before encoding.
  Eigen::VectorXd feature_offset;
  Eigen::VectorXd feature_scale;
  std::string codebook_update = "gradient";

  int latent_dim() const { return arch.latent_dim; }
  int codebook_size() const { return static_cast<int>(weights.codebook.rows()); }
};

/// Xavier-initialised parameters; the codebook is drawn uniformly from
/// [-1/Q, 1/Q] (train() replaces it with a data-dependent initialisation).
ModelParams init_params(const ModelShape& shape, const ModelConfig& arch, std::uint64_t seed);

enum class LossReduction { Mean, Sum };

struct TrainConfig {
  double lambda_cl = 1.0;
  double lambda_int = 1.0;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 300;
  std::uint64_t seed = 0;
  double commitment_weight = 0.25;
  double dead_code_threshold = 1e-3;
  double revival_noise = 0.01;
  double usage_decay = 0.99;
  // Mean divides each squared-error term by its number of (unmasked) cells.
  LossReduction reduction = LossReduction::Mean;
  bool standardize = true;

  void validate() const;
};

struct LossBreakdown {
  double recon = 0.0;
  double codebook_term = 0.0;
  double commit_term = 0.0;
  double cl = 0.0;
  double interaction = 0.0;
  double total = 0.0;
};

/// Model-ready view of a record: standardised input with per-cell weights
/// (0 for pseudo-vehicle cells), class index and masked interaction target.
struct Sample {
  Eigen::VectorXd input;
  Eigen::VectorXd input_weight;
  int class_index = 0;
  Eigen::VectorXd interaction;
  Eigen::VectorXd interaction_weight;
};

Sample make_sample(const ScenarioRecord& record, const ModelParams& params);
Eigen::VectorXd flatten_input(const ScenarioTensor& tensor, const ModelParams& params);

struct Quantized {
  int index = 0;
  Eigen::VectorXd z_q;
};

Eigen::VectorXd encode(const ScenarioTensor& tensor, const ModelParams& params);
Eigen::VectorXd encode_input(const Eigen::VectorXd& input, const ModelParams& params);
/// Nearest codebook row by squared Euclidean distance; ties go to the lowest index.
Quantized quantize(const Eigen::VectorXd& z, const Eigen::MatrixXd& codebook);
/// Reconstruction mapped back to tensor units (presence copied from nothing: all false).
ScenarioTensor decode(const Eigen::VectorXd& z_q, const ModelParams& params);
Eigen::VectorXd decode_raw(const Eigen::VectorXd& z_q, const ModelParams& params);
Eigen::VectorXd classify(const Eigen::VectorXd& z_q, const ModelParams& params);
InteractionMatrix predict_interaction(const Eigen::VectorXd& z_q, const ModelParams& params);

LossBreakdown loss(const ScenarioRecord& record, const ModelParams& params, const TrainConfig& cfg);
LossBreakdown sample_loss(const Sample& sample, const ModelParams& params, const TrainConfig& cfg);

/// Mean batch loss and its gradient under straight-through quantisation.
LossBreakdown loss_and_gradient(std::span<const Sample> batch, const ModelParams& params,
                                const TrainConfig& cfg, Weights& grad,
                                std::vector<int>* assignments = nullptr,
                                Eigen::MatrixXd* latents = nullptr);

struct EpochStats {
  LossBreakdown loss;
  int revived = 0;
  int codes_used = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
};

/// Mini-batch SGD with dead-code revival after every epoch. Throws
/// TrainingError on a non-finite loss.
TrainResult train(std::span<const ScenarioRecord> dataset, const ModelConfig& arch, const TrainConfig& cfg);
TrainResult train_samples(std::span<const Sample> samples, ModelParams initial, const TrainConfig& cfg);

/// Fits feature_offset/feature_scale over the present cells of the records.
void fit_standardization(std::span<const ScenarioTensor> tensors, ModelParams& params);

struct GradCheckOptions {
  double epsilon = 1e-5;
  std::size_t min_params = 100;
  std::uint64_t seed = 0;
  double abs_floor = 1e-7;
  // Test hook: scale the analytic gradient of this flat parameter index.
  std::optional<std::size_t> corrupt_param;
  double corrupt_factor = 2.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_param = 0;
  double max_abs_gradient = 0.0;
};

/// Compares analytic gradients against central differences of the loss with
/// the quantisation index and the straight-through offset held fixed.
GradCheckResult grad_check(std::span<const Sample> batch, const ModelParams& params,
                           const TrainConfig& cfg, const GradCheckOptions& opts = {});

/// Flat parameter index of (block, offset) in the Weights flattening order.
std::size_t flat_index(Weights& w, std::size_t block, std::size_t offset);

// Checkpoint: "hwscen-checkpoint v1\n", one JSON header line, then every
// weight block, usage and standardisation as little-endian float64.
void save_checkpoint(std::ostream& os, const ModelParams& params);
ModelParams load_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

void write_loss_history(std::ostream& os, std::span<const EpochStats> history);

} // namespace hwscen
