#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hwscen/behavior_change.hpp"
#include "hwscen/clustering.hpp"
#include "hwscen/cvqvae.hpp"
#include "hwscen/dgsfm.hpp"
#include "hwscen/extraction.hpp"

namespace hwscen {

struct SynthSection {
  std::string kind = "archetype"; // archetype | random
  int scenes = 300;               // archetype: one recording per scene
  int trajectories = 100;         // random: single-vehicle scripts in one recording
  int frames = 400;
  double noise_sigma = 0.05;
  double dt = kDefaultDt;
  bool mirror_odd = true; // odd recordings are written on the -x carriageway
};

struct SnippetSection {
  bool enabled = false;
  int snippet_len = 50;
  int codebook_size = 64;
  int latent_dim = 16;
  std::vector<int> hidden{64};
  int epochs = 30;
  double learning_rate = 0.05;
};

struct DetectSection {
  DetectorConfig rules;
  int window = 50;
  EmaConfig ema;
  SnippetSection snippet;
};

struct ExtractSection {
  ExtractionConfig window;
  std::vector<std::string> class_filter; // e.g. "KL->LC"
  double train_fraction = 0.85;
  int augment_count = 50;
  double augment_min_gap = 80.0;
};

struct ClusterSection {
  std::vector<Backend> backends{Backend::Codebook, Backend::KMeans, Backend::Hierarchical};
  int k = 0; // 0: use the codebook size
  Linkage linkage = Linkage::Ward;
  int max_iter = 300;
  std::string records = "train"; // train | all
};

struct Config {
  std::uint64_t seed = 42;
  int jobs = 1;
  SynthSection synth;
  DetectSection detector;
  DgsfmConfig dgsfm;
  ExtractSection extraction;
  ModelConfig model;
  TrainConfig train;
  bool compare_no_dk = true; // pipeline also trains with both lambdas at 0
  ClusterSection clustering;

  void validate() const;
};

// Per-stage seeds derive from the top-level seed by fixed offsets.
enum class SeedStage { Synth = 1, Snippet = 2, Split = 3, Augment = 4, Train = 5, KMeans = 6, GradCheck = 7 };
std::uint64_t stage_seed(const Config& cfg, SeedStage stage);

/// Reads a config; unknown sections or keys raise ConfigError.
Config config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const Config& cfg);
Config load_config(const std::string& path);

/// Applies "section.key=value" (or "key=value" for top-level keys). The value
/// is parsed as JSON, falling back to a plain string.
void apply_override(Config& cfg, const std::string& assignment);

std::pair<Lateral, Lateral> parse_class_filter(const std::string& text);

} // namespace hwscen
