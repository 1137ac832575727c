#pragma once

#include <string>
#include <vector>

#include "derplan/load_model.hpp"
#include "derplan/placement.hpp"

namespace derplan {

inline constexpr const char* kToolVersion = "0.1.0";

// which of the four dispatch studies to run
enum class StudyMode { case1, case2, case3, case4, all };

const char* to_string(StudyMode mode);
StudyMode parse_study_mode(const std::string& text);

// everything a reproducible study needs, read from one sectioned key/value
// file; see docs/config.md for the full key reference
struct StudyConfig {
  std::string case_path;
  std::string profile_path;  // empty: bundled reference profile
  Index clusters = 50;
  StudyMode mode = StudyMode::all;
  std::string output_dir = ".";
  std::string label;             // report file prefix, defaults to case name
  Real level_lo = 0.0;           // optional profile rescale band;
  Real level_hi = 0.0;           // both zero = profile used as-is
  std::vector<DerUnit> units;    // sizes only; each study sets the mode
  std::vector<int> candidate_buses;
  bool exclude_generator_buses = false;
  McsConfig mcs;

  void validate() const;  // throws ConfigError
};

StudyConfig parse_study_config(const std::string& text);
StudyConfig read_study_config(const std::string& path);

// the DER spec of one study: case1 is the non-dispatchable baseline, case2
// the full non-dispatchable loop, case3/case4 the dispatchable modes
DerSpec case_spec(const StudyConfig& config, StudyMode mode);

// loads a case by extension (.m or .json) and validates it
NetworkCase load_case_file(const std::string& path);

// the profile named by the config (or the bundled one), band-rescaled
LoadProfile load_study_profile(const StudyConfig& config);

// temp-file-plus-rename so readers never observe a partial report
void write_file_atomic(const std::string& path, const std::string& content);

struct StudyOutputs {
  std::vector<PlacementPlan> plans;   // one per executed mode
  std::vector<std::string> files;     // paths written, in write order
};

// runs the selected mode (or all four), writing per-mode plan JSON + table,
// trace JSONL and stats CSV, plus a run manifest and, when several modes
// ran, the side-by-side comparison report
StudyOutputs run_configured_study(const StudyConfig& config);

}  // namespace derplan
