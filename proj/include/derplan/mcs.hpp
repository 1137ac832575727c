#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "derplan/der.hpp"
#include "derplan/load_model.hpp"
#include "derplan/network.hpp"
#include "derplan/opf.hpp"

namespace derplan {

// streaming per-bus moments of the stored multiplier samples plus penalty
// tallies; updated with Welford's recurrence so a constant stream keeps an
// exactly zero m2
struct MultiplierStats {
  std::vector<long> count;
  Vector mean;
  Vector m2;  // sum of squared deviations from the running mean
  std::vector<long> penalties;

  MultiplierStats() = default;
  explicit MultiplierStats(Index n_bus);

  Index bus_count() const { return mean.size(); }
  void add(const Vector& values);
  void note_penalty(Index bus);
  Real variance(Index bus) const;  // m2/(count-1), 0 below two samples

  // pairwise moment combination; mathematically exact but not bit-equal to
  // sample-order folding, which is why the engine folds per sample
  void merge(const MultiplierStats& other);

  bool operator==(const MultiplierStats&) const = default;
};

enum class PenaltyMode { zero, post_value };

const char* to_string(PenaltyMode mode);
PenaltyMode parse_penalty_mode(const std::string& text);

struct McsConfig {
  Real sigma_threshold = 0.01;
  int min_samples = 100;
  int max_samples = 20000;
  std::uint64_t rng_seed = 0;
  PenaltyMode penalty_mode = PenaltyMode::zero;
  Real lambda_floor = 0.01;  // $/MWh, guards the stopping-rule division
  bool sigma_literal = false;  // sqrt(Var)/E instead of sqrt(Var/n)/E
  bool penalize = true;        // apply the inactive-bus penalty
  bool store_pre = false;      // accumulate pre-placement multipliers
  bool resolve = true;         // solve again after the trial placement
  int workers = 1;             // sample evaluation threads
  OpfOptions opf;

  void validate() const;
};

struct PlacedUnit {
  int bus_id = 0;
  Real p_mw = 0.0;
  Real q_mvar = 0.0;

  bool operator==(const PlacedUnit&) const = default;
};

struct SampleRecord {
  int index = 0;
  Real load_factor = 0.0;
  bool failed = false;
  std::string failure;
  Vector lambda_pre;   // $/MWh per bus
  Vector lambda_post;  // equals lambda_pre when the re-solve is skipped
  std::vector<PlacedUnit> placement;
  std::vector<int> penalized;  // bus ids, always a subset of the placement
  std::vector<ConstraintId> binding_pre;
  std::vector<ConstraintId> binding_post;
};

struct McsResult {
  MultiplierStats stats;
  std::vector<SampleRecord> trace;
  bool converged = false;  // stopping rule fired before max_samples
  Real sigma_stop = 0.0;   // last stopping-rule value (0 until computable)
  int samples = 0;         // trace length
  int failures = 0;
};

// coefficient of variation of the mean estimator, maxed over buses:
// sqrt(variance/count) / max(mean, floor); the literal form drops the
// /count. Throws SemanticError below two samples at any bus.
Real sigma(const MultiplierStats& stats, Real lambda_floor,
           bool literal = false);

// a placed bus is penalized when some pre-solve binding constraint left the
// post-solve binding set AND the bus's post-placement price collapsed to
// within price_tol (relative) of the system-wide minimum
std::vector<int> detect_inactive(const NetworkCase& net,
                                 const OpfSolution& pre,
                                 const OpfSolution& post,
                                 const std::vector<int>& placed_buses,
                                 Real price_tol = 0.01);

// the sampling loop: draw a load level, solve, rank prices, place the trial
// units (largest on the highest price, ties to the lower bus id), re-solve,
// penalize, accumulate, and stop once sigma falls below the threshold after
// min_samples. Samples are evaluated in seed-determined order and folded by
// index, so results are bit-identical for any worker count. Failed samples
// stay in the trace without touching the stats; more than one failure
// beyond 1% of the folded total aborts with SolveError.
McsResult run_mcs(const NetworkCase& net, const LoadModel& model,
                  const DerSpec& spec, const McsConfig& config);

// one SampleRecord per line, stable field order and full float precision
std::string trace_jsonl(const std::vector<SampleRecord>& trace);

// bus,mean,variance,count,penalties rows in bus order
std::string stats_csv(const MultiplierStats& stats,
                      const std::vector<int>& bus_ids);

}  // namespace derplan
