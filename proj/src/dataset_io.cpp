#include "hwscen/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "hwscen/errors.hpp"

namespace hwscen {
namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename Int>
Int parse_int(std::string_view text, const std::string& what) {
  Int v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw FormatError("bad integer for " + what + ": '" + std::string(text) + "'");
  return v;
}

void append_reals(std::string& out, const std::vector<double>& values) {
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out.push_back(',');
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, values[i]);
    out.append(buf, ptr);
  }
}

void parse_reals(std::string_view text, std::vector<double>& out, std::size_t expected,
                 const std::string& what) {
  out.clear();
  out.reserve(expected);
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) throw FormatError("bad real in " + what);
    out.push_back(v);
    p = ptr;
    if (p < end) {
      if (*p != ',') throw FormatError("bad separator in " + what);
      ++p;
    }
  }
  if (out.size() != expected)
    throw FormatError(what + ": expected " + std::to_string(expected) + " values, got " +
                      std::to_string(out.size()));
}

} // namespace

std::string format_real(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_real(std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw FormatError("bad real '" + std::string(text) + "'");
  return v;
}

void write_dataset(std::ostream& os, const Dataset& dataset) {
  const auto& h = dataset.header;
  os << kDatasetMagic << "\tversion=" << h.version << "\tN=" << h.slots << "\tF=" << h.features
     << "\tT_obs=" << h.frames << "\tS=" << h.classes << "\tdt=" << format_real(h.dt) << '\n';
  std::string line;
  for (const auto& r : dataset.records) {
    int cls = r.pseudo_class.index();
    if (cls < 0) throw ContractError("record " + r.id + " has an invalid pseudo-class");
    if (r.tensor.slots != h.slots || r.tensor.features != h.features || r.tensor.frames != h.frames)
      throw ContractError("record " + r.id + " does not match the dataset shape");
    line.clear();
    line += r.id;
    line += '\t' + std::to_string(r.provenance.recording_id);
    line += '\t' + std::to_string(r.provenance.ego_id);
    line += '\t' + std::to_string(r.provenance.anchor_frame);
    line += '\t' + to_string(r.anchor.before);
    line += '\t' + to_string(r.anchor.after);
    line += '\t' + std::to_string(cls);
    line += '\t';
    line += r.augmentation_parent ? *r.augmentation_parent : std::string("-");
    line += '\t';
    append_reals(line, r.tensor.values);
    line += '\t';
    append_reals(line, r.interaction.values);
    line += '\t';
    for (auto m : r.tensor.presence) line.push_back(m ? '1' : '0');
    line += '\n';
    os << line;
  }
}

Dataset read_dataset(std::istream& is) {
  Dataset ds;
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty dataset file");
  auto head = split(line, '\t');
  if (head.empty() || head[0] != kDatasetMagic) throw FormatError("not an hwscen dataset file");
  bool have_version = false;
  for (std::size_t i = 1; i < head.size(); ++i) {
    auto kv = head[i];
    auto eq = kv.find('=');
    if (eq == std::string_view::npos) throw FormatError("malformed header field");
    auto key = kv.substr(0, eq);
    auto val = kv.substr(eq + 1);
    if (key == "version") {
      if (val != kDatasetVersion)
        throw FormatError("unsupported dataset version '" + std::string(val) + "'");
      have_version = true;
    } else if (key == "N") {
      ds.header.slots = parse_int<int>(val, "N");
    } else if (key == "F") {
      ds.header.features = parse_int<int>(val, "F");
    } else if (key == "T_obs") {
      ds.header.frames = parse_int<int>(val, "T_obs");
    } else if (key == "S") {
      ds.header.classes = parse_int<int>(val, "S");
    } else if (key == "dt") {
      ds.header.dt = parse_real(val);
    } else {
      throw FormatError("unknown header field '" + std::string(key) + "'");
    }
  }
  if (!have_version) throw FormatError("dataset header lacks a version");
  if (ds.header.classes != kClasses) throw FormatError("unsupported class count");

  const auto& h = ds.header;
  const std::size_t n_tensor = static_cast<std::size_t>(h.slots) * h.features * h.frames;
  const std::size_t n_inter = static_cast<std::size_t>(h.slots) * h.frames;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    const std::string where = "line " + std::to_string(line_no);
    if (f.size() != 11) throw FormatError(where + ": expected 11 fields");
    ScenarioRecord r;
    r.id = std::string(f[0]);
    r.provenance.recording_id = parse_int<int>(f[1], where);
    r.provenance.ego_id = parse_int<std::int64_t>(f[2], where);
    r.provenance.anchor_frame = parse_int<std::int64_t>(f[3], where);
    r.anchor.frame = r.provenance.anchor_frame;
    r.anchor.before = parse_composite_label(f[4]);
    r.anchor.after = parse_composite_label(f[5]);
    r.pseudo_class = PseudoClassLabel::from_index(parse_int<int>(f[6], where));
    if (f[7] != "-") r.augmentation_parent = std::string(f[7]);
    r.tensor = ScenarioTensor(h.slots, h.features, h.frames);
    r.interaction = InteractionMatrix(h.slots, h.frames);
    parse_reals(f[8], r.tensor.values, n_tensor, where + " tensor");
    parse_reals(f[9], r.interaction.values, n_inter, where + " interaction");
    if (f[10].size() != n_inter) throw FormatError(where + ": mask length mismatch");
    for (std::size_t i = 0; i < n_inter; ++i) {
      char c = f[10][i];
      if (c != '0' && c != '1') throw FormatError(where + ": mask must be 0/1");
      r.tensor.presence[i] = c == '1' ? 1 : 0;
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw StageError("cannot write " + path);
  write_dataset(os, dataset);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StageError("missing input artifact: " + path);
  return read_dataset(is);
}

} // namespace hwscen
