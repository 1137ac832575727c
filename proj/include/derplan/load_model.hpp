#pragma once

#include <string>

#include "derplan/types.hpp"

namespace derplan {

// hourly system load as fractions of peak, plus the peak itself in MW
struct LoadProfile {
  std::vector<Real> hourly;
  Real peak_mw = 0.0;

  // every entry must be positive and no more than 1 + small slack
  void validate() const;
};

// load duration model: ascending levels with their probability mass and the
// running cumulative distribution; cdf is built from integer cluster counts
// so the last entry is exactly 1
struct LoadModel {
  Vector levels;
  Vector probabilities;
  Vector cdf;
};

// one `load_fraction` column, header required; peak_mw is left for the
// caller to fill in from the case being scaled
LoadProfile read_profile_csv(const std::string& text);

// the bundled reference profile: 52 weeks of 7 days of 24 hourly fractions
// (8736 values, peaking at exactly 1), identical to fixtures/rts_profile.csv
LoadProfile rts_profile();

// linear map of the profile's [min, max] span onto [lo, hi], so a study can
// be confined to the demand band the system is actually planned for; a
// constant profile maps onto hi
LoadProfile rescale_profile(const LoadProfile& profile, Real lo, Real hi);

// 1-D k-means over the hourly values with quantile seeding on the distinct
// values, so the result is deterministic; empty cells are dropped
LoadModel cluster_profile(const LoadProfile& profile, Index k);

// inverse-CDF lookup: the level of the smallest i with u < cdf[i]
Real sample_level(const LoadModel& model, Real u);

// level,probability,cdf rows with full round-trip precision
std::string load_model_csv(const LoadModel& model);

}  // namespace derplan
