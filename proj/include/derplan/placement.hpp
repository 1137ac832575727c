#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "derplan/der.hpp"
#include "derplan/mcs.hpp"

namespace derplan {

struct Site {
  int bus_id = 0;
  DerUnit unit;
  Real avg_lambda = 0.0;  // weighted-average multiplier, $/MWh
  long penalties = 0;     // times this bus was penalized in the run
  ValidityRange range;    // probed at peak load; skipped for baseline plans
  bool range_probed = false;
};

struct PlacementPlan {
  std::string case_name;
  std::string label;  // study name for reports, defaults to the DER mode
  std::uint64_t seed = 0;
  Real sigma_stop = 0.0;
  int samples = 0;
  bool mcs_converged = false;
  std::vector<Site> sites;  // descending avg_lambda, largest unit first
  MultiplierStats stats;
};

// the end-to-end study: cluster the profile, run the sampling loop (the
// baseline flag downgrades it to pre-placement storage with no re-solve or
// penalty), rank candidates by their weighted-average multiplier, pair the
// largest unit with the highest average (ties to the lower bus id), and
// probe each chosen site's validity range at peak load (baseline plans skip
// the probe). `mcs_out`, when given, receives the full sampling result so
// callers can export the trace.
PlacementPlan run_study(const NetworkCase& net, const LoadProfile& profile,
                        const DerSpec& spec, const McsConfig& config,
                        Index cluster_count = 50, McsResult* mcs_out = nullptr);

std::vector<int> site_buses(const PlacementPlan& plan);

// side-by-side site sets of several studies of the same case, with
// equal/differ verdicts per pair
std::string compare_studies(const std::vector<PlacementPlan>& plans);

// deterministic exports: no timestamps, full float precision
std::string plan_json(const PlacementPlan& plan);
std::string plan_table(const PlacementPlan& plan);

}  // namespace derplan
