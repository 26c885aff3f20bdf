#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hwscen/core_types.hpp"

namespace hwscen {

inline constexpr const char* kDatasetMagic = "hwscen-dataset";
inline constexpr const char* kDatasetVersion = "1";

struct DatasetHeader {
  int slots = kSlots;
  int features = kFeatures;
  int frames = kObsFrames;
  int classes = kClasses;
  double dt = kDefaultDt;
  std::string version = kDatasetVersion;
};

struct Dataset {
  DatasetHeader header;
  std::vector<ScenarioRecord> records;
};

// Layout (tab separated, one record per line):
//   header: hwscen-dataset version=1 N=9 F=6 T_obs=100 S=10 dt=0.04
//   record: id recording ego anchor_frame label_before label_after class
//           parent|- tensor(csv, N,F,T row-major) interaction(csv, N,T) mask(0/1 string)
// Reals use the shortest round-trip representation, so write/read is exact.
void write_dataset(std::ostream& os, const Dataset& dataset);
Dataset read_dataset(std::istream& is);

void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

/// Shortest decimal form that parses back to the identical double.
std::string format_real(double v);
double parse_real(std::string_view text);

} // namespace hwscen
