#include "derplan/load_model.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <vector>

#include "derplan/errors.hpp"

namespace derplan {

namespace {

constexpr Real kPeakSlack = 1e-6;
constexpr int kMaxLloydPasses = 500;

std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void LoadProfile::validate() const {
  if (hourly.empty()) throw SemanticError("load profile has no hours");
  for (std::size_t i = 0; i < hourly.size(); ++i) {
    if (!(hourly[i] > 0.0)) {
      std::ostringstream ss;
      ss << "profile hour " << i + 1 << " is " << hourly[i]
         << "; load fractions must be positive";
      throw SemanticError(ss.str());
    }
    if (hourly[i] > 1.0 + kPeakSlack) {
      std::ostringstream ss;
      ss << "profile hour " << i + 1 << " is " << hourly[i]
         << "; fractions above peak (1.0) are not allowed";
      throw SemanticError(ss.str());
    }
  }
}

LoadProfile read_profile_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool saw_header = false;
  LoadProfile profile;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string tok = trimmed(line);
    if (tok.empty()) continue;
    if (!saw_header) {
      if (tok != "load_fraction")
        throw SyntaxError("expected header 'load_fraction', got '" + tok + "'",
                          line_no, 1);
      saw_header = true;
      continue;
    }
    std::size_t used = 0;
    Real value = 0.0;
    try {
      value = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size())
      throw SyntaxError("'" + tok + "' is not a number", line_no, 1);
    profile.hourly.push_back(value);
  }
  if (!saw_header) throw SyntaxError("missing 'load_fraction' header", 1, 1);
  profile.validate();
  return profile;
}

LoadProfile rts_profile() {
  // weekly peaks in percent of annual peak, weeks 1..52
  static constexpr Real kWeekly[52] = {
      86.2, 90.0, 87.8, 83.4, 88.0, 84.1, 83.2,  80.6, 74.0, 73.7, 71.5,
      72.7, 70.4, 75.0, 72.1, 80.0, 75.4, 83.7,  87.0, 88.0, 85.6, 81.1,
      90.0, 88.7, 89.6, 86.1, 75.5, 81.6, 80.1,  88.0, 72.2, 77.6, 80.0,
      72.9, 72.6, 70.5, 78.0, 69.5, 72.4, 72.4,  74.3, 74.4, 80.0, 88.1,
      88.5, 90.9, 94.0, 89.0, 94.2, 97.0, 100.0, 95.2};
  // daily peaks in percent of weekly, Monday..Sunday
  static constexpr Real kDaily[7] = {93.0, 100.0, 98.0, 96.0, 94.0, 77.0,
                                     75.0};
  // hourly peaks in percent of daily: [season][weekday? 0:1][hour 1..24]
  static constexpr Real kHourly[3][2][24] = {
      // winter (weeks 1-8 and 44-52)
      {{67, 63, 60, 59, 59, 60, 74, 86, 95, 96, 96, 95,
        95, 95, 93, 94, 99, 100, 100, 96, 91, 83, 73, 63},
       {78, 72, 68, 66, 64, 65, 66, 70, 80, 88, 90, 91,
        90, 88, 87, 87, 91, 100, 99, 97, 94, 92, 87, 81}},
      // summer (weeks 18-30)
      {{64, 60, 58, 56, 56, 58, 64, 76, 87, 95, 99, 100,
        99, 100, 100, 97, 96, 96, 93, 92, 92, 93, 87, 72},
       {74, 70, 66, 65, 64, 62, 62, 66, 81, 86, 91, 93,
        93, 92, 91, 91, 92, 94, 95, 95, 100, 93, 88, 80}},
      // spring and fall
      {{63, 62, 60, 58, 59, 65, 72, 85, 95, 99, 100, 99,
        93, 92, 90, 88, 90, 92, 96, 98, 96, 90, 80, 70},
       {75, 73, 69, 66, 65, 65, 68, 74, 83, 89, 92, 94,
        91, 90, 90, 86, 85, 88, 92, 100, 97, 95, 90, 85}}};

  LoadProfile profile;
  profile.hourly.reserve(52 * 7 * 24);
  for (int week = 1; week <= 52; ++week) {
    const int season = (week <= 8 || week >= 44) ? 0
                       : (week >= 18 && week <= 30) ? 1
                                                    : 2;
    for (int day = 1; day <= 7; ++day) {
      const Real* hours = kHourly[season][day <= 5 ? 0 : 1];
      for (int hour = 0; hour < 24; ++hour)
        profile.hourly.push_back(kWeekly[week - 1] * kDaily[day - 1] *
                                 hours[hour] / 1e6);
    }
  }
  return profile;
}

LoadProfile rescale_profile(const LoadProfile& profile, Real lo, Real hi) {
  profile.validate();
  if (!(lo > 0.0 && lo <= hi && hi <= 1.0 + kPeakSlack))
    throw SemanticError("profile level range must satisfy 0 < lo <= hi <= 1");
  const auto [mn, mx] =
      std::minmax_element(profile.hourly.begin(), profile.hourly.end());
  LoadProfile out = profile;
  for (Real& v : out.hourly)
    v = (*mx == *mn) ? hi : lo + (hi - lo) * (v - *mn) / (*mx - *mn);
  return out;
}

LoadModel cluster_profile(const LoadProfile& profile, Index k) {
  profile.validate();
  if (k < 1) throw SemanticError("cluster count must be at least 1");

  std::vector<Real> sorted = profile.hourly;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Real> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()),
                 distinct.end());
  if (static_cast<Index>(distinct.size()) < k) {
    std::ostringstream ss;
    ss << "cluster count " << k << " exceeds the " << distinct.size()
       << " distinct profile values";
    throw SemanticError(ss.str());
  }

  // seed at quantiles of the distinct values: k strictly increasing starts
  const std::size_t m = distinct.size();
  const std::size_t kk = static_cast<std::size_t>(k);
  std::vector<Real> centers(kk);
  for (std::size_t j = 0; j < kk; ++j)
    centers[j] = distinct[(2 * j + 1) * m / (2 * kk)];

  // Lloyd iterations; in one dimension each cell is a contiguous run of the
  // sorted values, so only the k+1 cell boundaries move
  std::vector<std::size_t> start(kk + 1), prev(kk + 1, sorted.size() + 1);
  for (int pass = 0; pass < kMaxLloydPasses; ++pass) {
    start[0] = 0;
    start[kk] = sorted.size();
    for (std::size_t j = 1; j < kk; ++j) {
      const Real mid = 0.5 * (centers[j - 1] + centers[j]);
      start[j] = static_cast<std::size_t>(
          std::lower_bound(sorted.begin() +
                               static_cast<std::ptrdiff_t>(start[j - 1]),
                           sorted.end(), mid) -
          sorted.begin());
    }
    if (start == prev) break;
    prev = start;
    for (std::size_t j = 0; j < kk; ++j) {
      if (start[j + 1] == start[j]) continue;  // keep an empty cell's seed
      const Real sum = std::accumulate(
          sorted.begin() + static_cast<std::ptrdiff_t>(start[j]),
          sorted.begin() + static_cast<std::ptrdiff_t>(start[j + 1]), 0.0);
      centers[j] = sum / static_cast<Real>(start[j + 1] - start[j]);
    }
  }

  std::vector<Real> levels;
  std::vector<std::size_t> counts;
  for (std::size_t j = 0; j < kk; ++j) {
    if (start[j + 1] == start[j]) continue;
    levels.push_back(centers[j]);
    counts.push_back(start[j + 1] - start[j]);
  }

  LoadModel model;
  const Index nk = static_cast<Index>(levels.size());
  model.levels.resize(nk);
  model.probabilities.resize(nk);
  model.cdf.resize(nk);
  const Real total = static_cast<Real>(sorted.size());
  std::size_t running = 0;
  for (Index j = 0; j < nk; ++j) {
    running += counts[static_cast<std::size_t>(j)];
    model.levels[j] = levels[static_cast<std::size_t>(j)];
    model.probabilities[j] =
        static_cast<Real>(counts[static_cast<std::size_t>(j)]) / total;
    model.cdf[j] = static_cast<Real>(running) / total;
  }
  return model;
}

Real sample_level(const LoadModel& model, Real u) {
  const Real* begin = model.cdf.data();
  const Real* end = begin + model.cdf.size();
  const Real* it = std::upper_bound(begin, end, u);
  if (it == end) --it;  // only reachable for u >= 1
  return model.levels[it - begin];
}

std::string load_model_csv(const LoadModel& model) {
  std::string out = "level,probability,cdf\n";
  char buf[128];
  for (Index j = 0; j < model.levels.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", model.levels[j],
                  model.probabilities[j], model.cdf[j]);
    out += buf;
  }
  return out;
}

}  // namespace derplan
