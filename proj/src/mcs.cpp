#include "derplan/mcs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "derplan/errors.hpp"
#include "derplan/placement.hpp"

namespace derplan {

namespace {

// samples are evaluated a block at a time so workers stay busy while the
// fold (and the stopping decision) still walks strictly in index order
constexpr int kChunk = 64;

Real draw_uniform(std::mt19937_64& rng) {
  return static_cast<Real>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

MultiplierStats::MultiplierStats(Index n_bus)
    : count(static_cast<std::size_t>(n_bus), 0),
      mean(Vector::Zero(n_bus)),
      m2(Vector::Zero(n_bus)),
      penalties(static_cast<std::size_t>(n_bus), 0) {}

void MultiplierStats::add(const Vector& values) {
  if (values.size() != mean.size())
    throw SemanticError("stats update with mismatched bus count");
  for (Index i = 0; i < values.size(); ++i) {
    long& n = count[static_cast<std::size_t>(i)];
    ++n;
    const Real delta = values[i] - mean[i];
    mean[i] += delta / static_cast<Real>(n);
    m2[i] += delta * (values[i] - mean[i]);
  }
}

void MultiplierStats::note_penalty(Index bus) {
  ++penalties.at(static_cast<std::size_t>(bus));
}

Real MultiplierStats::variance(Index bus) const {
  const long n = count.at(static_cast<std::size_t>(bus));
  if (n < 2) return 0.0;
  return m2[bus] / static_cast<Real>(n - 1);
}

void MultiplierStats::merge(const MultiplierStats& other) {
  if (other.mean.size() != mean.size())
    throw SemanticError("stats merge with mismatched bus count");
  for (Index i = 0; i < mean.size(); ++i) {
    const std::size_t s = static_cast<std::size_t>(i);
    const long na = count[s];
    const long nb = other.count[s];
    if (nb == 0) continue;
    const long n = na + nb;
    const Real delta = other.mean[i] - mean[i];
    mean[i] += delta * static_cast<Real>(nb) / static_cast<Real>(n);
    m2[i] += other.m2[i] + delta * delta * static_cast<Real>(na) *
                               static_cast<Real>(nb) / static_cast<Real>(n);
    count[s] = n;
    penalties[s] += other.penalties[s];
  }
}

const char* to_string(PenaltyMode mode) {
  return mode == PenaltyMode::zero ? "zero" : "post_value";
}

PenaltyMode parse_penalty_mode(const std::string& text) {
  if (text == "zero") return PenaltyMode::zero;
  if (text == "post_value") return PenaltyMode::post_value;
  throw SemanticError("unknown penalty mode '" + text + "'");
}

void McsConfig::validate() const {
  if (!(sigma_threshold > 0.0 && sigma_threshold < 1.0))
    throw SemanticError("sigma threshold must lie in (0, 1)");
  if (min_samples < 2) throw SemanticError("min_samples must be at least 2");
  if (max_samples < min_samples)
    throw SemanticError("max_samples below min_samples");
  if (!(lambda_floor > 0.0))
    throw SemanticError("lambda floor must be positive");
  if (workers < 1) throw SemanticError("worker count must be at least 1");
}

Real sigma(const MultiplierStats& stats, Real lambda_floor, bool literal) {
  Real worst = 0.0;
  for (Index i = 0; i < stats.bus_count(); ++i) {
    const long n = stats.count.at(static_cast<std::size_t>(i));
    if (n < 2)
      throw SemanticError("sigma needs at least two samples at every bus");
    Real var = stats.variance(i);
    if (!literal) var /= static_cast<Real>(n);
    const Real cv = std::sqrt(var) / std::max(stats.mean[i], lambda_floor);
    worst = std::max(worst, cv);
  }
  return worst;
}

std::vector<int> detect_inactive(const NetworkCase& net,
                                 const OpfSolution& pre,
                                 const OpfSolution& post,
                                 const std::vector<int>& placed_buses,
                                 Real price_tol) {
  if (pre.lambda_p.size() != net.bus_count() ||
      post.lambda_p.size() != net.bus_count())
    throw SemanticError("solutions do not match the case");

  bool constraint_left = false;
  for (const ConstraintId& id : pre.binding_set)
    if (!std::binary_search(post.binding_set.begin(), post.binding_set.end(),
                            id)) {
      constraint_left = true;
      break;
    }
  if (!constraint_left) return {};

  const Real lam_min = post.lambda_p.minCoeff();
  const Real slack_band = price_tol * std::max(std::abs(lam_min), 0.01);
  std::vector<int> out;
  for (int id : placed_buses)
    if (post.lambda_p[net.bus_index(id)] <= lam_min + slack_band)
      out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

SampleRecord evaluate_sample(const NetworkCase& net, const LoadModel& model,
                             const DerSpec& spec,
                             const std::vector<int>& candidates,
                             const McsConfig& cfg, int index, Real u) {
  SampleRecord rec;
  rec.index = index;
  rec.load_factor = sample_level(model, u);
  const NetworkCase scaled = scale_loads(net, rec.load_factor);
  const OpfSolution pre = solve_opf(scaled, cfg.opf);
  if (!pre.converged()) {
    rec.failed = true;
    rec.failure = pre.message;
    return rec;
  }
  rec.lambda_pre = pre.lambda_p;
  rec.binding_pre = pre.binding_set;

  // highest multiplier first; the unit list is largest first, so the
  // placement pairing is positional
  const std::vector<int> ranked =
      rank_descending(net, pre.lambda_p, candidates);
  NetworkCase placed = scaled;
  std::vector<int> placed_ids;
  for (std::size_t j = 0; j < spec.units.size(); ++j) {
    placed = apply_der(placed, ranked[j], spec.units[j]);
    placed_ids.push_back(ranked[j]);
    rec.placement.push_back(
        PlacedUnit{ranked[j], spec.units[j].p_size, spec.units[j].q_size});
  }

  if (!cfg.resolve) {
    rec.lambda_post = rec.lambda_pre;
    rec.binding_post = rec.binding_pre;
    return rec;
  }
  const OpfSolution post = solve_opf(placed, cfg.opf);
  if (!post.converged()) {
    rec.failed = true;
    rec.failure = "after placement: " + post.message;
    return rec;
  }
  rec.lambda_post = post.lambda_p;
  rec.binding_post = post.binding_set;
  if (cfg.penalize)
    rec.penalized = detect_inactive(net, pre, post, placed_ids);
  return rec;
}

// the stored vector: pre or post multipliers with the penalty applied
Vector stored_values(const SampleRecord& rec, const McsConfig& cfg,
                     const NetworkCase& net) {
  Vector v = cfg.store_pre ? rec.lambda_pre : rec.lambda_post;
  if (cfg.penalty_mode == PenaltyMode::zero)
    for (int id : rec.penalized) v[net.bus_index(id)] = 0.0;
  return v;
}

}  // namespace

McsResult run_mcs(const NetworkCase& net, const LoadModel& model,
                  const DerSpec& spec, const McsConfig& config) {
  config.validate();
  spec.validate(net);
  const std::vector<int> candidates = candidate_buses(net, spec);

  for (const Real level : {model.levels[0], model.levels[model.levels.size() - 1]}) {
    const OpfSolution probe = solve_opf(scale_loads(net, level), config.opf);
    if (!probe.converged()) {
      std::ostringstream ss;
      ss << "case '" << net.name << "' unsolvable at clustered load level "
         << level << ": " << probe.message;
      throw SolveError(ss.str());
    }
  }

  McsResult res;
  res.stats = MultiplierStats(net.bus_count());
  std::mt19937_64 rng(config.rng_seed);
  bool stopped = false;

  for (int base = 0; base < config.max_samples && !stopped; base += kChunk) {
    const int n = std::min(kChunk, config.max_samples - base);
    std::vector<Real> u(static_cast<std::size_t>(n));
    for (Real& v : u) v = draw_uniform(rng);

    std::vector<SampleRecord> recs(static_cast<std::size_t>(n));
    const int threads = std::min(config.workers, n);
    if (threads <= 1) {
      for (int i = 0; i < n; ++i)
        recs[static_cast<std::size_t>(i)] =
            evaluate_sample(net, model, spec, candidates, config, base + i,
                            u[static_cast<std::size_t>(i)]);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(threads));
      for (int w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
          for (int i = w; i < n; i += threads)
            recs[static_cast<std::size_t>(i)] =
                evaluate_sample(net, model, spec, candidates, config,
                                base + i, u[static_cast<std::size_t>(i)]);
        });
      for (std::thread& t : pool) t.join();
    }

    for (int i = 0; i < n && !stopped; ++i) {
      SampleRecord& rec = recs[static_cast<std::size_t>(i)];
      if (rec.failed) {
        ++res.failures;
      } else {
        for (int id : rec.penalized)
          res.stats.note_penalty(net.bus_index(id));
        res.stats.add(stored_values(rec, config, net));
      }
      res.trace.push_back(std::move(rec));
      ++res.samples;
      if (res.failures > std::max(1.0, 0.01 * res.samples)) {
        std::ostringstream ss;
        ss << res.failures << " of " << res.samples
           << " samples failed to solve; last failure: "
           << res.trace.back().failure;
        throw SolveError(ss.str());
      }
      const long stored = res.stats.count.front();
      if (res.samples >= config.min_samples && stored >= 2) {
        res.sigma_stop =
            sigma(res.stats, config.lambda_floor, config.sigma_literal);
        if (res.sigma_stop < config.sigma_threshold) stopped = true;
      }
    }
  }
  res.converged = stopped;
  return res;
}

namespace {

nlohmann::json vector_json(const Vector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

nlohmann::json binding_json(const std::vector<ConstraintId>& ids) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ConstraintId& id : ids) arr.push_back(to_string(id));
  return arr;
}

}  // namespace

std::string trace_jsonl(const std::vector<SampleRecord>& trace) {
  std::string out;
  for (const SampleRecord& rec : trace) {
    nlohmann::json row;
    row["sample"] = rec.index;
    row["load_factor"] = rec.load_factor;
    row["failed"] = rec.failed;
    if (rec.failed) {
      row["failure"] = rec.failure;
    } else {
      row["lambda_pre"] = vector_json(rec.lambda_pre);
      row["lambda_post"] = vector_json(rec.lambda_post);
      nlohmann::json placement = nlohmann::json::array();
      for (const PlacedUnit& p : rec.placement)
        placement.push_back({{"bus", p.bus_id},
                             {"p_mw", p.p_mw},
                             {"q_mvar", p.q_mvar}});
      row["placement"] = placement;
      row["penalized"] = rec.penalized;
      row["binding_pre"] = binding_json(rec.binding_pre);
      row["binding_post"] = binding_json(rec.binding_post);
    }
    out += row.dump();
    out += '\n';
  }
  return out;
}

std::string stats_csv(const MultiplierStats& stats,
                      const std::vector<int>& bus_ids) {
  if (static_cast<Index>(bus_ids.size()) != stats.bus_count())
    throw SemanticError("stats CSV with mismatched bus ids");
  std::string out = "bus,mean,variance,count,penalties\n";
  char buf[160];
  for (Index i = 0; i < stats.bus_count(); ++i) {
    const std::size_t s = static_cast<std::size_t>(i);
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%ld,%ld\n", bus_ids[s],
                  stats.mean[i], stats.variance(i), stats.count[s],
                  stats.penalties[s]);
    out += buf;
  }
  return out;
}

}  // namespace derplan
