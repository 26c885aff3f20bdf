#include "hwscen/stages.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "hwscen/behavior_change.hpp"
#include "hwscen/clustering.hpp"
#include "hwscen/cvqvae.hpp"
#include "hwscen/dataset_io.hpp"
#include "hwscen/errors.hpp"
#include "hwscen/snippet_detector.hpp"

namespace hwscen {

using nlohmann::json;

// --- helpers ------------------------------------------------------------------

std::string file_digest(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StageError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void StageSummary::add_file(const std::string& key, const fs::path& path) {
  add(key, path.filename().string() + "@" + file_digest(path));
}

std::string StageSummary::get(const std::string& key) const {
  for (const auto& [k, v] : fields)
    if (k == key) return v;
  return {};
}

std::string StageSummary::line() const {
  std::string s = "[" + stage + "]";
  for (const auto& [k, v] : fields) s += " " + k + "=" + v;
  return s;
}

namespace {

std::ifstream open_input(const fs::path& path, const char* what) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StageError(std::string("missing input artifact (") + what + "): expected " + path.string());
  return is;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw StageError("cannot write " + path.string());
  return os;
}

std::vector<std::string> split_fields(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::int64_t to_i64(const std::string& s, const char* what, std::size_t line) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoll(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError(std::string(what) + ": line " + std::to_string(line) + ": bad integer '" + s + "'");
}

double to_real(const std::string& s, const char* what, std::size_t line) {
  try {
    return parse_real(s);
  } catch (const Error&) {
    throw ParseError(std::string(what) + ": line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index writes only
/// its own output slot, so results do not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string recording_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d", id);
  return buf;
}

std::vector<ScenarioRecord> select(const std::vector<ScenarioRecord>& records, const SplitMap& split,
                                   bool train_only, bool originals_only) {
  std::vector<ScenarioRecord> out;
  for (const auto& r : records) {
    if (originals_only && r.augmentation_parent) continue;
    if (train_only) {
      auto it = split.find(r.id);
      if (it == split.end()) throw InputError("split file has no entry for record " + r.id);
      if (it->second != "train") continue;
    }
    out.push_back(r);
  }
  return out;
}

} // namespace

// --- artifact formats -----------------------------------------------------------

void write_truth(std::ostream& os, const std::vector<TruthRow>& rows) {
  os << "recording_id,vehicle_id,window_center_frame,composite_label\n";
  for (const auto& r : rows)
    os << r.recording_id << ',' << r.vehicle_id << ',' << r.center << ',' << to_string(r.label) << '\n';
}

std::vector<TruthRow> read_truth(std::istream& is) {
  std::string line;
  std::getline(is, line);
  std::vector<TruthRow> rows;
  for (std::size_t n = 2; std::getline(is, line); ++n) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 4) throw ParseError("truth: line " + std::to_string(n) + ": expected 4 fields");
    TruthRow r;
    r.recording_id = static_cast<int>(to_i64(f[0], "truth", n));
    r.vehicle_id = to_i64(f[1], "truth", n);
    r.center = to_i64(f[2], "truth", n);
    try {
      r.label = parse_composite_label(f[3]);
    } catch (const Error& e) {
      throw ParseError("truth: line " + std::to_string(n) + ": " + e.what());
    }
    rows.push_back(r);
  }
  return rows;
}

void write_trajectories(std::ostream& os, const std::vector<Trajectory>& trajs) {
  os << "recording_id,id,mirrored,dt,frame,x,y,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId\n";
  for (const auto& t : trajs)
    for (const auto& p : t.points)
      os << t.recording_id << ',' << t.vehicle_id << ',' << (t.mirrored ? 1 : 0) << ',' << format_real(t.dt) << ','
         << p.frame << ',' << format_real(p.x) << ',' << format_real(p.y) << ',' << format_real(p.vx) << ','
         << format_real(p.vy) << ',' << format_real(p.ax) << ',' << format_real(p.ay) << ',' << p.lane << '\n';
}

std::vector<Trajectory> read_trajectories(std::istream& is) {
  std::string line;
  std::getline(is, line);
  std::vector<Trajectory> out;
  for (std::size_t n = 2; std::getline(is, line); ++n) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 12) throw ParseError("trajectories: line " + std::to_string(n) + ": expected 12 fields");
    const int rec = static_cast<int>(to_i64(f[0], "trajectories", n));
    const auto id = to_i64(f[1], "trajectories", n);
    if (out.empty() || out.back().recording_id != rec || out.back().vehicle_id != id) {
      Trajectory t;
      t.recording_id = rec;
      t.vehicle_id = id;
      t.mirrored = f[2] == "1";
      t.dt = to_real(f[3], "trajectories", n);
      out.push_back(std::move(t));
    }
    TrackPoint p;
    p.frame = to_i64(f[4], "trajectories", n);
    p.x = to_real(f[5], "trajectories", n);
    p.y = to_real(f[6], "trajectories", n);
    p.vx = to_real(f[7], "trajectories", n);
    p.vy = to_real(f[8], "trajectories", n);
    p.ax = to_real(f[9], "trajectories", n);
    p.ay = to_real(f[10], "trajectories", n);
    p.lane = static_cast<int>(to_i64(f[11], "trajectories", n));
    auto& t = out.back();
    if (!t.points.empty() && p.frame != t.points.back().frame + 1)
      throw IntegrityError("trajectories: vehicle " + std::to_string(id) + " has a frame gap");
    t.points.push_back(p);
  }
  return out;
}

void write_change_points(std::ostream& os, const std::vector<ChangePointRow>& rows) {
  os << "recording_id,vehicle_id,frame,label_before,label_after\n";
  for (const auto& r : rows)
    os << r.recording_id << ',' << r.vehicle_id << ',' << r.cp.frame << ',' << to_string(r.cp.before) << ','
       << to_string(r.cp.after) << '\n';
}

std::vector<ChangePointRow> read_change_points(std::istream& is) {
  std::string line;
  std::getline(is, line);
  std::vector<ChangePointRow> rows;
  for (std::size_t n = 2; std::getline(is, line); ++n) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 5) throw ParseError("change points: line " + std::to_string(n) + ": expected 5 fields");
    ChangePointRow r;
    r.recording_id = static_cast<int>(to_i64(f[0], "change points", n));
    r.vehicle_id = to_i64(f[1], "change points", n);
    r.cp.frame = to_i64(f[2], "change points", n);
    try {
      r.cp.before = parse_composite_label(f[3]);
      r.cp.after = parse_composite_label(f[4]);
    } catch (const Error& e) {
      throw ParseError("change points: line " + std::to_string(n) + ": " + e.what());
    }
    rows.push_back(r);
  }
  return rows;
}

void write_split(std::ostream& os, const std::vector<ScenarioRecord>& records, const SplitMap& split) {
  os << "record_id,split\n";
  for (const auto& r : records) os << r.id << ',' << split.at(r.id) << '\n';
}

SplitMap read_split(std::istream& is) {
  std::string line;
  std::getline(is, line);
  SplitMap m;
  for (std::size_t n = 2; std::getline(is, line); ++n) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 2 || (f[1] != "train" && f[1] != "validation"))
      throw ParseError("split: line " + std::to_string(n) + ": expected record_id,train|validation");
    m[f[0]] = f[1];
  }
  return m;
}

std::vector<AssignmentRow> read_assignments(std::istream& is) {
  std::string line;
  std::getline(is, line);
  std::vector<AssignmentRow> rows;
  for (std::size_t n = 2; std::getline(is, line); ++n) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 3) throw ParseError("assignments: line " + std::to_string(n) + ": expected 3 fields");
    rows.push_back({f[0], parse_backend(f[1]), static_cast<int>(to_i64(f[2], "assignments", n))});
  }
  return rows;
}

// --- stages ----------------------------------------------------------------------

StageSummary run_synth(const Config& cfg, const fs::path& raw_dir, const fs::path& truth_csv) {
  const auto seed = stage_seed(cfg, SeedStage::Synth);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<SyntheticScript>> recordings;
  if (cfg.synth.kind == "archetype") {
    for (int i = 0; i < cfg.synth.scenes; ++i)
      recordings.push_back(archetype_scene(static_cast<Archetype>(i % kArchetypeCount), rng, i + 1, cfg.synth.frames,
                                           cfg.synth.noise_sigma));
  } else {
    std::vector<SyntheticScript> scripts;
    for (int i = 0; i < cfg.synth.trajectories; ++i)
      scripts.push_back(random_maneuver_script(rng, i + 1, 1, cfg.synth.frames, cfg.synth.noise_sigma));
    recordings.push_back(std::move(scripts));
  }

  fs::create_directories(raw_dir);
  std::vector<TruthRow> truth;
  long n_traj = 0;
  for (std::size_t r = 0; r < recordings.size(); ++r) {
    const int rec_id = recordings[r].front().recording_id;
    const auto corpus = generate_synthetic(recordings[r], cfg.synth.dt, seed * 1000003ULL + r);
    const bool upper = cfg.synth.mirror_odd && rec_id % 2 == 1;
    std::vector<Trajectory> raw;
    for (std::size_t i = 0; i < corpus.trajectories.size(); ++i) {
      raw.push_back(upper ? mirror_to_upper(corpus.trajectories[i]) : corpus.trajectories[i]);
      for (const auto& cp : corpus.truth[i])
        truth.push_back({rec_id, corpus.trajectories[i].vehicle_id, cp.frame, cp.after});
    }
    n_traj += static_cast<long>(raw.size());
    const auto meta = highd_layout(rec_id, 3, 1.0 / cfg.synth.dt);
    auto tracks = open_output(raw_dir / (recording_stem(rec_id) + "_tracks.csv"));
    write_tracks(tracks, raw);
    auto m = open_output(raw_dir / (recording_stem(rec_id) + "_recordingMeta.csv"));
    write_recording_meta(m, meta);
  }
  {
    auto os = open_output(truth_csv);
    write_truth(os, truth);
  }
  StageSummary s{"synth", {}};
  s.add("kind", cfg.synth.kind);
  s.add("seed", std::to_string(seed));
  s.add("recordings", static_cast<long long>(recordings.size()));
  s.add("trajectories", n_traj);
  s.add("truth_events", static_cast<long long>(truth.size()));
  s.add_file("truth", truth_csv);
  return s;
}

StageSummary run_ingest(const Config& cfg, const fs::path& raw_dir, const fs::path& trajectories_csv) {
  (void)cfg;
  if (!fs::is_directory(raw_dir)) throw StageError("missing input artifact: expected recordings directory " + raw_dir.string());
  std::vector<fs::path> metas;
  for (const auto& e : fs::directory_iterator(raw_dir)) {
    const auto name = e.path().filename().string();
    if (name.size() > 18 && name.ends_with("_recordingMeta.csv")) metas.push_back(e.path());
  }
  std::sort(metas.begin(), metas.end());
  if (metas.empty()) throw StageError("missing input artifact: no *_recordingMeta.csv in " + raw_dir.string());

  std::vector<Recording> recordings;
  for (const auto& mp : metas) {
    const std::string stem = mp.filename().string().substr(0, mp.filename().string().size() - 18);
    auto mis = open_input(mp, "recording meta");
    Recording rec;
    rec.meta = parse_recording_meta(mis);
    const auto tp = raw_dir / (stem + "_tracks.csv");
    auto tis = open_input(tp, "tracks");
    rec.trajectories = parse_tracks(tis, rec.meta);
    recordings.push_back(std::move(rec));
  }
  const std::size_t total = recordings.size();
  recordings = filter_three_lane(std::move(recordings));

  std::vector<Trajectory> out;
  long mirrored = 0;
  for (const auto& rec : recordings)
    for (const auto& t : rec.trajectories) {
      out.push_back(normalize_direction(t, rec.meta));
      mirrored += out.back().mirrored;
    }
  {
    auto os = open_output(trajectories_csv);
    write_trajectories(os, out);
  }
  StageSummary s{"ingest", {}};
  s.add("recordings", static_cast<long long>(total));
  s.add("three_lane", static_cast<long long>(recordings.size()));
  s.add("trajectories", static_cast<long long>(out.size()));
  s.add("mirrored", mirrored);
  s.add_file("trajectories", trajectories_csv);
  return s;
}

StageSummary run_detect(const Config& cfg, const fs::path& trajectories_csv, const std::optional<fs::path>& truth_csv,
                        const fs::path& change_points_csv, const fs::path& detection_json) {
  auto tis = open_input(trajectories_csv, "trajectories");
  const auto trajs = read_trajectories(tis);

  std::vector<PostprocessResult> rule(trajs.size());
  std::vector<std::vector<std::int64_t>> ema(trajs.size());
  parallel_for(trajs.size(), cfg.jobs, [&](std::size_t i) {
    rule[i] = detect_behavior(trajs[i], cfg.detector.rules);
    ema[i] = detect_ema(trajs[i], cfg.detector.ema);
  });

  std::vector<std::vector<std::int64_t>> snippet;
  if (cfg.detector.snippet.enabled) {
    SnippetConfig sc;
    sc.snippet_len = cfg.detector.snippet.snippet_len;
    sc.arch = {cfg.detector.snippet.latent_dim, cfg.detector.snippet.hidden, cfg.detector.snippet.codebook_size};
    sc.train.epochs = cfg.detector.snippet.epochs;
    sc.train.learning_rate = cfg.detector.snippet.learning_rate;
    sc.train.seed = stage_seed(cfg, SeedStage::Snippet);
    SnippetDetector det;
    det.fit(trajs, sc);
    snippet = detect_snippet_cluster(trajs, det);
  }

  std::vector<ChangePointRow> rows;
  for (std::size_t i = 0; i < trajs.size(); ++i)
    for (const auto& cp : rule[i].change_points) rows.push_back({trajs[i].recording_id, trajs[i].vehicle_id, cp});
  {
    auto os = open_output(change_points_csv);
    write_change_points(os, rows);
  }

  Report report;
  if (truth_csv) {
    auto is = open_input(*truth_csv, "ground truth");
    const auto truth_rows = read_truth(is);
    std::map<std::pair<int, std::int64_t>, std::vector<TruthEvent>> truth;
    for (const auto& t : truth_rows) truth[{t.recording_id, t.vehicle_id}].push_back({t.center, t.label});
    DetectionMatch m_rule, m_ema, m_snip;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      const auto it = truth.find({trajs[i].recording_id, trajs[i].vehicle_id});
      const std::vector<TruthEvent> none;
      const auto& t = it == truth.end() ? none : it->second;
      std::vector<PredictedEvent> p;
      for (const auto& cp : rule[i].change_points) p.push_back({cp.frame, cp.after});
      m_rule += evaluate_detection(p, t, cfg.detector.window);
      p.clear();
      for (auto f : ema[i]) p.push_back({f, std::nullopt});
      m_ema += evaluate_detection(p, t, cfg.detector.window);
      if (!snippet.empty()) {
        p.clear();
        for (auto f : snippet[i]) p.push_back({f, std::nullopt});
        m_snip += evaluate_detection(p, t, cfg.detector.window);
      }
    }
    report.detection.push_back({"Rule-based", m_rule});
    report.detection.push_back({"EMA", m_ema});
    if (!snippet.empty()) report.detection.push_back({"CVQ-VAE", m_snip});
  }
  {
    auto os = open_output(detection_json);
    os << report_json(report).dump(2) << '\n';
  }
  StageSummary s{"detect", {}};
  s.add("trajectories", static_cast<long long>(trajs.size()));
  s.add("change_points", static_cast<long long>(rows.size()));
  for (const auto& r : report.detection)
    s.add(r.method == "Rule-based" ? "rule" : r.method == "EMA" ? "ema" : "snippet",
          "P" + fixed(r.match.precision, 3) + "/R" + fixed(r.match.recall, 3));
  s.add_file("change_points", change_points_csv);
  s.add_file("detection", detection_json);
  return s;
}

StageSummary run_extract(const Config& cfg, const fs::path& trajectories_csv, const fs::path& change_points_csv,
                         const fs::path& dataset_out) {
  auto tis = open_input(trajectories_csv, "trajectories");
  const auto trajs = read_trajectories(tis);
  auto cis = open_input(change_points_csv, "change points");
  const auto cps = read_change_points(cis);

  std::map<int, std::vector<Trajectory>> by_rec;
  for (const auto& t : trajs) by_rec[t.recording_id].push_back(t);
  std::map<int, ChangePointMap> cp_by_rec;
  for (const auto& r : cps) cp_by_rec[r.recording_id][r.vehicle_id].push_back(r.cp);

  std::vector<int> rec_ids;
  for (const auto& [id, _] : by_rec) rec_ids.push_back(id);
  std::vector<ExtractionResult> results(rec_ids.size());
  DgsfmConfig dg = cfg.dgsfm;
  parallel_for(rec_ids.size(), cfg.jobs, [&](std::size_t i) {
    const auto it = cp_by_rec.find(rec_ids[i]);
    if (it == cp_by_rec.end()) return;
    results[i] = extract(by_rec[rec_ids[i]], it->second, cfg.extraction.window, dg);
  });

  Dataset ds;
  ds.header.dt = cfg.synth.dt;
  long skipped = 0, filtered = 0;
  for (auto& r : results) {
    skipped += r.skipped_window;
    filtered += r.filtered;
    for (auto& rec : r.records) ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty())
    std::cerr << "extract: no scenarios extracted (" << filtered << " change points rejected by class_filter, "
              << skipped << " too close to a track boundary); writing an empty dataset\n";
  save_dataset(dataset_out.string(), ds);
  StageSummary s{"extract", {}};
  s.add("change_points", static_cast<long long>(cps.size()));
  s.add("records", static_cast<long long>(ds.records.size()));
  s.add("filtered", filtered);
  s.add("skipped_window", skipped);
  s.add_file("dataset", dataset_out);
  return s;
}

StageSummary run_augment(const Config& cfg, const fs::path& trajectories_csv, const fs::path& dataset_in,
                         const fs::path& dataset_out, const fs::path& split_csv) {
  auto tis = open_input(trajectories_csv, "trajectories");
  const auto trajs = read_trajectories(tis);
  if (!fs::exists(dataset_in)) throw StageError("missing input artifact (dataset): expected " + dataset_in.string());
  Dataset ds = load_dataset(dataset_in.string());
  std::vector<ScenarioRecord> originals;
  for (auto& r : ds.records)
    if (!r.augmentation_parent) originals.push_back(r);

  SplitMap split;
  const auto sr = hwscen::split(originals, cfg.extraction.train_fraction, stage_seed(cfg, SeedStage::Split));
  for (auto i : sr.train) split[originals[i].id] = "train";
  for (auto i : sr.validation) split[originals[i].id] = "validation";

  const auto aseed = stage_seed(cfg, SeedStage::Augment);
  std::mt19937_64 rng(aseed);
  std::vector<std::size_t> parents = sr.train;
  std::shuffle(parents.begin(), parents.end(), rng);
  std::vector<ScenarioRecord> children;
  long failures = 0;
  for (std::size_t k = 0; k < parents.size() && static_cast<int>(children.size()) < cfg.extraction.augment_count; ++k) {
    const auto& parent = originals[parents[k]];
    // Donors come from another recording so they never duplicate a participant.
    std::vector<std::size_t> donors;
    for (std::size_t i = 0; i < trajs.size(); ++i)
      if (trajs[i].recording_id != parent.provenance.recording_id) donors.push_back(i);
    bool done = false;
    for (int attempt = 0; attempt < 5 && !donors.empty() && !done; ++attempt) {
      const auto& donor = trajs[donors[std::uniform_int_distribution<std::size_t>(0, donors.size() - 1)(rng)]];
      try {
        children.push_back(augment_irrelevant(parent, donor, cfg.extraction.augment_min_gap, rng()));
        split[children.back().id] = split.at(parent.id);
        done = true;
      } catch (const AugmentationError&) {
      }
    }
    if (!done) ++failures;
  }
  if (static_cast<int>(children.size()) < cfg.extraction.augment_count)
    std::cerr << "augment: produced " << children.size() << " of " << cfg.extraction.augment_count
              << " requested variants\n";

  Dataset out;
  out.header = ds.header;
  out.records = originals;
  out.records.insert(out.records.end(), children.begin(), children.end());
  save_dataset(dataset_out.string(), out);
  {
    auto os = open_output(split_csv);
    write_split(os, out.records, split);
  }
  StageSummary s{"augment", {}};
  s.add("seed", std::to_string(aseed));
  s.add("originals", static_cast<long long>(originals.size()));
  s.add("train", static_cast<long long>(sr.train.size()));
  s.add("validation", static_cast<long long>(sr.validation.size()));
  s.add("augmented", static_cast<long long>(children.size()));
  s.add("rejected_parents", failures);
  s.add_file("dataset", dataset_out);
  s.add_file("split", split_csv);
  return s;
}

StageSummary run_train(const Config& cfg, const fs::path& dataset, const fs::path& split_csv,
                       const fs::path& checkpoint, const fs::path& loss_csv) {
  if (!fs::exists(dataset)) throw StageError("missing input artifact (dataset): expected " + dataset.string());
  const Dataset ds = load_dataset(dataset.string());
  auto sis = open_input(split_csv, "split");
  const auto split = read_split(sis);
  const auto records = select(ds.records, split, true, true);
  if (records.empty()) throw InputError("train: no training records in " + dataset.string());

  TrainConfig tc = cfg.train;
  tc.seed = stage_seed(cfg, SeedStage::Train);
  const auto result = train(records, cfg.model, tc);
  if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
  save_checkpoint(checkpoint.string(), result.params);
  {
    auto os = open_output(loss_csv);
    write_loss_history(os, result.history);
  }
  StageSummary s{"train", {}};
  s.add("seed", std::to_string(tc.seed));
  s.add("records", static_cast<long long>(records.size()));
  s.add("lambda_cl", fixed(tc.lambda_cl, 3));
  s.add("lambda_int", fixed(tc.lambda_int, 3));
  s.add("epochs", tc.epochs);
  if (!result.history.empty()) {
    s.add("final_loss", fixed(result.history.back().loss.total, 6));
    s.add("codes_used", result.history.back().codes_used);
  }
  s.add_file("checkpoint", checkpoint);
  s.add_file("loss", loss_csv);
  return s;
}

StageSummary run_cluster(const Config& cfg, const fs::path& dataset, const fs::path& split_csv,
                         const fs::path& checkpoint, const fs::path& assignments_csv) {
  if (!fs::exists(dataset)) throw StageError("missing input artifact (dataset): expected " + dataset.string());
  if (!fs::exists(checkpoint)) throw StageError("missing input artifact (checkpoint): expected " + checkpoint.string());
  const Dataset ds = load_dataset(dataset.string());
  auto sis = open_input(split_csv, "split");
  const auto split = read_split(sis);
  const auto records = select(ds.records, split, cfg.clustering.records == "train", false);
  if (records.empty()) throw InputError("cluster: no records to cluster");
  const ModelParams model = load_checkpoint(checkpoint.string());

  Eigen::MatrixXd z(model.arch.latent_dim, static_cast<Eigen::Index>(records.size()));
  parallel_for(records.size(), cfg.jobs, [&](std::size_t i) {
    z.col(static_cast<Eigen::Index>(i)) = encode(records[i].tensor, model);
  });
  const int k = cfg.clustering.k > 0 ? cfg.clustering.k : model.codebook_size();
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);

  auto os = open_output(assignments_csv);
  os << "record_id,backend,label\n";
  StageSummary s{"cluster", {}};
  s.add("records", static_cast<long long>(records.size()));
  s.add("k", k);
  for (auto b : cfg.clustering.backends) {
    ClusterAssignment a;
    switch (b) {
      case Backend::Codebook: {
        a.backend = Backend::Codebook;
        a.Q = model.codebook_size();
        for (Eigen::Index i = 0; i < z.cols(); ++i) a.labels.push_back(quantize(z.col(i), model.weights.codebook).index);
        break;
      }
      case Backend::KMeans: {
        const auto km = kmeans(z, k, stage_seed(cfg, SeedStage::KMeans), cfg.clustering.max_iter);
        if (!km.converged) std::cerr << "cluster: k-means stopped at max_iter before a fixed point\n";
        a = km.assignment;
        s.add("kmeans_iterations", km.iterations);
        break;
      }
      case Backend::Hierarchical:
        a = hierarchical(z, k, cfg.clustering.linkage).assignment;
        break;
    }
    std::set<int> used(a.labels.begin(), a.labels.end());
    s.add(to_string(b) + "_clusters", static_cast<long long>(used.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) os << ids[i] << ',' << to_string(b) << ',' << a.labels[i] << '\n';
  }
  os.close();
  s.add_file("assignments", assignments_csv);
  return s;
}

StageSummary run_evaluate(const Config& cfg, const fs::path& dataset, const fs::path& assignments_csv,
                          const fs::path& checkpoint, const fs::path& clustering_json) {
  if (!fs::exists(dataset)) throw StageError("missing input artifact (dataset): expected " + dataset.string());
  const Dataset ds = load_dataset(dataset.string());
  auto ais = open_input(assignments_csv, "assignments");
  const auto rows = read_assignments(ais);
  std::optional<ModelParams> model;
  if (fs::exists(checkpoint)) model = load_checkpoint(checkpoint.string());

  std::map<std::string, const ScenarioRecord*> by_id;
  for (const auto& r : ds.records) by_id[r.id] = &r;

  const bool dk = cfg.train.lambda_cl > 0.0 || cfg.train.lambda_int > 0.0;
  json out{{"dk", dk}, {"lambda_cl", cfg.train.lambda_cl}, {"lambda_int", cfg.train.lambda_int}, {"rows", json::array()}};
  StageSummary s{"evaluate", {}};
  s.add("dk", dk ? "1" : "0");
  for (auto b : {Backend::Codebook, Backend::KMeans, Backend::Hierarchical}) {
    ClusterAssignment a;
    a.backend = b;
    std::vector<std::string> ids;
    std::vector<int> classes;
    for (const auto& r : rows) {
      if (r.backend != b) continue;
      const auto it = by_id.find(r.record_id);
      if (it == by_id.end()) throw InputError("evaluate: record " + r.record_id + " is not in the dataset");
      ids.push_back(r.record_id);
      classes.push_back(it->second->pseudo_class.index());
      a.labels.push_back(r.label);
      a.Q = std::max(a.Q, r.label + 1);
    }
    if (ids.empty()) continue;
    if (b == Backend::Codebook && model) a.Q = model->codebook_size();
    const auto ent = cluster_entropy(a, classes);
    std::set<std::string> present(ids.begin(), ids.end());
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& id : ids) {
      const auto* r = by_id.at(id);
      if (r->augmentation_parent && present.count(*r->augmentation_parent)) pairs.emplace_back(*r->augmentation_parent, id);
    }
    json row{{"backend", to_string(b)}, {"purity", ent.h_avg}, {"clusters", ent.non_empty}};
    row["accuracy"] = pairs.empty() ? json(nullptr) : json(augmentation_accuracy(a, ids, pairs));
    row["pairs"] = pairs.size();
    if (b == Backend::Codebook && model) row["purity_classifier"] = classifier_entropy(a, *model);
    out["rows"].push_back(row);
    s.add(to_string(b), "H" + fixed(ent.h_avg, 3) + "/acc" + (pairs.empty() ? std::string("-") : fixed(row["accuracy"].get<double>(), 3)));
  }
  {
    auto os = open_output(clustering_json);
    os << out.dump(2) << '\n';
  }
  s.add_file("clustering", clustering_json);
  return s;
}

StageSummary run_report(const std::optional<fs::path>& detection_json, const std::vector<fs::path>& clustering_jsons,
                        const fs::path& report_json_path, const fs::path& report_txt) {
  Report report;
  auto parse = [](const fs::path& p, const char* what) {
    auto is = open_input(p, what);
    try {
      return json::parse(is);
    } catch (const json::exception& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  };
  if (detection_json) report.detection = report_from_json(parse(*detection_json, "detection report")).detection;
  for (const auto& p : clustering_jsons) {
    const auto j = parse(p, "clustering evaluation");
    try {
      for (const auto& r : j.at("rows")) {
        ClusteringRow row;
        row.backend = parse_backend(r.at("backend"));
        row.dk = j.at("dk");
        row.h_avg = r.at("purity");
        row.accuracy = r.at("accuracy").is_null() ? std::nan("") : r.at("accuracy").get<double>();
        if (r.contains("purity_classifier")) row.h_classifier = r.at("purity_classifier").get<double>();
        report.clustering.push_back(row);
      }
    } catch (const json::exception& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  }
  {
    auto os = open_output(report_json_path);
    os << report_json(report).dump(2) << '\n';
  }
  {
    auto os = open_output(report_txt);
    os << report_text(report);
  }
  StageSummary s{"report", {}};
  s.add("detection_rows", static_cast<long long>(report.detection.size()));
  s.add("clustering_rows", static_cast<long long>(report.clustering.size()));
  s.add_file("report", report_json_path);
  s.add_file("table", report_txt);
  return s;
}

StageSummary run_gradcheck(const Config& cfg, const fs::path& out_json) {
  const auto seed = stage_seed(cfg, SeedStage::GradCheck);
  const ModelShape shape{3, 2, 5, kClasses};
  const ModelConfig arch{8, {12}, 4};
  ModelParams params = init_params(shape, arch, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int q = 0; q < arch.codebook_size; ++q)
    for (int k = 0; k < arch.latent_dim; ++k) params.weights.codebook(q, k) = 0.5 * n01(rng);
  std::vector<Sample> batch(6);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto& s = batch[b];
    s.input = Eigen::VectorXd::NullaryExpr(shape.input_dim(), [&] { return n01(rng); });
    s.input_weight = Eigen::VectorXd::Ones(shape.input_dim());
    s.class_index = static_cast<int>(b) % kClasses;
    s.interaction = Eigen::VectorXd::NullaryExpr(shape.interaction_dim(), [&] { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); });
    s.interaction_weight = Eigen::VectorXd::Ones(shape.interaction_dim());
    // One absent slot per sample to exercise the masks.
    const int slot = 1 + static_cast<int>(b % 2);
    for (int f = 0; f < shape.features; ++f)
      for (int t = 0; t < shape.frames; ++t) s.input_weight((slot * shape.features + f) * shape.frames + t) = 0.0;
    for (int t = 0; t < shape.frames; ++t) s.interaction_weight(slot * shape.frames + t) = 0.0;
  }
  TrainConfig tc = cfg.train;
  tc.lambda_cl = tc.lambda_int = 1.0;
  GradCheckOptions opts;
  opts.seed = seed;
  opts.min_params = 200;
  const auto res = grad_check(batch, params, tc, opts);
  const bool pass = res.max_rel_error < 1e-4;
  {
    auto os = open_output(out_json);
    os << json{{"max_rel_error", res.max_rel_error},
               {"checked", res.checked},
               {"worst_param", res.worst_param},
               {"tolerance", 1e-4},
               {"pass", pass}}
              .dump(2)
       << '\n';
  }
  StageSummary s{"gradcheck", {}};
  s.add("seed", std::to_string(seed));
  s.add("checked", static_cast<long long>(res.checked));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", res.max_rel_error);
  s.add("max_rel_error", buf);
  s.add("pass", pass ? "1" : "0");
  s.add_file("result", out_json);
  return s;
}

std::vector<StageSummary> run_pipeline(const Config& cfg, const fs::path& out_dir) {
  std::vector<StageSummary> log;
  auto step = [&](StageSummary s) {
    std::cout << s.line() << std::endl;
    log.push_back(std::move(s));
  };
  fs::create_directories(out_dir);
  {
    auto os = open_output(out_dir / "config.json");
    os << config_to_json(cfg).dump(2) << '\n';
  }
  step(run_synth(cfg, out_dir / "raw", out_dir / "truth.csv"));
  step(run_ingest(cfg, out_dir / "raw", out_dir / "trajectories.csv"));
  step(run_detect(cfg, out_dir / "trajectories.csv", out_dir / "truth.csv", out_dir / "change_points.csv",
                  out_dir / "detection.json"));
  step(run_extract(cfg, out_dir / "trajectories.csv", out_dir / "change_points.csv", out_dir / "dataset.hwd"));
  step(run_augment(cfg, out_dir / "trajectories.csv", out_dir / "dataset.hwd", out_dir / "dataset_aug.hwd",
                   out_dir / "split.csv"));

  std::vector<std::pair<std::string, Config>> variants;
  if (cfg.compare_no_dk) {
    Config nodk = cfg;
    nodk.train.lambda_cl = nodk.train.lambda_int = 0.0;
    variants.emplace_back("nodk", nodk);
  }
  variants.emplace_back("dk", cfg);
  std::vector<fs::path> evals;
  for (const auto& [name, vc] : variants) {
    const auto dir = out_dir / name;
    step(run_train(vc, out_dir / "dataset_aug.hwd", out_dir / "split.csv", dir / "model.ckpt", dir / "loss.csv"));
    step(run_cluster(vc, out_dir / "dataset_aug.hwd", out_dir / "split.csv", dir / "model.ckpt",
                     dir / "assignments.csv"));
    step(run_evaluate(vc, out_dir / "dataset_aug.hwd", dir / "assignments.csv", dir / "model.ckpt",
                      dir / "clustering.json"));
    evals.push_back(dir / "clustering.json");
  }
  step(run_report(out_dir / "detection.json", evals, out_dir / "report.json", out_dir / "report.txt"));
  return log;
}

} // namespace hwscen
