#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hwscen/config.hpp"
#include "hwscen/core_types.hpp"
#include "hwscen/extraction.hpp"
#include "hwscen/ingest.hpp"
#include "hwscen/metrics.hpp"

namespace hwscen {

namespace fs = std::filesystem;

/// One deterministic log line per stage: "[stage] key=value ...".
struct StageSummary {
  std::string stage;
  std::vector<std::pair<std::string, std::string>> fields;

  void add(const std::string& key, const std::string& value) { fields.emplace_back(key, value); }
  void add(const std::string& key, long long value) { fields.emplace_back(key, std::to_string(value)); }
  void add_file(const std::string& key, const fs::path& path);
  std::string line() const;
  /// Value of the first field named `key`, or "" when absent.
  std::string get(const std::string& key) const;
};

/// FNV-1a 64-bit digest of a file, as 16 hex digits.
std::string file_digest(const fs::path& path);

// --- artifact formats -------------------------------------------------------

struct TruthRow {
  int recording_id = 0;
  std::int64_t vehicle_id = 0;
  std::int64_t center = 0;
  CompositeLabel label;
};

void write_truth(std::ostream& os, const std::vector<TruthRow>& rows);
std::vector<TruthRow> read_truth(std::istream& is);

/// Normalised trajectories of every recording, one point per line.
void write_trajectories(std::ostream& os, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> read_trajectories(std::istream& is);

struct ChangePointRow {
  int recording_id = 0;
  std::int64_t vehicle_id = 0;
  ChangePoint cp;
};

void write_change_points(std::ostream& os, const std::vector<ChangePointRow>& rows);
std::vector<ChangePointRow> read_change_points(std::istream& is);

/// record id -> "train" | "validation"
using SplitMap = std::map<std::string, std::string>;
void write_split(std::ostream& os, const std::vector<ScenarioRecord>& records, const SplitMap& split);
SplitMap read_split(std::istream& is);

struct AssignmentRow {
  std::string record_id;
  Backend backend;
  int label;
};
std::vector<AssignmentRow> read_assignments(std::istream& is);

// --- stages -------------------------------------------------------------------
// Each stage reads and writes only the paths it is given. Missing inputs raise
// StageError naming the expected path.

StageSummary run_synth(const Config& cfg, const fs::path& raw_dir, const fs::path& truth_csv);
StageSummary run_ingest(const Config& cfg, const fs::path& raw_dir, const fs::path& trajectories_csv);
StageSummary run_detect(const Config& cfg, const fs::path& trajectories_csv, const std::optional<fs::path>& truth_csv,
                        const fs::path& change_points_csv, const fs::path& detection_json);
StageSummary run_extract(const Config& cfg, const fs::path& trajectories_csv, const fs::path& change_points_csv,
                         const fs::path& dataset_out);
StageSummary run_augment(const Config& cfg, const fs::path& trajectories_csv, const fs::path& dataset_in,
                         const fs::path& dataset_out, const fs::path& split_csv);
StageSummary run_train(const Config& cfg, const fs::path& dataset, const fs::path& split_csv,
                       const fs::path& checkpoint, const fs::path& loss_csv);
StageSummary run_cluster(const Config& cfg, const fs::path& dataset, const fs::path& split_csv,
                         const fs::path& checkpoint, const fs::path& assignments_csv);
StageSummary run_evaluate(const Config& cfg, const fs::path& dataset, const fs::path& assignments_csv,
                          const fs::path& checkpoint, const fs::path& clustering_json);
StageSummary run_report(const std::optional<fs::path>& detection_json, const std::vector<fs::path>& clustering_jsons,
                        const fs::path& report_json, const fs::path& report_txt);
StageSummary run_gradcheck(const Config& cfg, const fs::path& out_json);

/// Every stage in order under `out_dir`; with compare_no_dk the training,
/// clustering and evaluation stages run once with both lambdas at 0 (nodk/)
/// and once as configured (dk/).
std::vector<StageSummary> run_pipeline(const Config& cfg, const fs::path& out_dir);

} // namespace hwscen
