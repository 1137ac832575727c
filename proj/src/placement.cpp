#include "derplan/placement.hpp"

#include <cstdio>

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

#include "derplan/errors.hpp"

namespace derplan {

const char* to_string(DerMode mode) {
  switch (mode) {
    case DerMode::non_dispatchable_pq: return "non_dispatchable_pq";
    case DerMode::dispatchable_q: return "dispatchable_q";
    case DerMode::dispatchable_pq: return "dispatchable_pq";
  }
  return "?";
}

DerMode parse_der_mode(const std::string& text) {
  if (text == "non_dispatchable_pq") return DerMode::non_dispatchable_pq;
  if (text == "dispatchable_q") return DerMode::dispatchable_q;
  if (text == "dispatchable_pq") return DerMode::dispatchable_pq;
  throw SemanticError("unknown DER mode '" + text + "'");
}

void DerSpec::validate(const NetworkCase& net) const {
  if (units.empty()) throw SemanticError("DER spec lists no units");
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!(units[i].p_size > 0.0))
      throw SemanticError("DER unit sizes must be positive");
    if (units[i].q_size < 0.0)
      throw SemanticError("DER reactive sizes must be non-negative");
    if (i > 0 && units[i].p_size > units[i - 1].p_size)
      throw SemanticError("DER units must be listed largest first");
  }
  const std::vector<int> loads = net.load_bus_ids();
  for (int id : candidate_buses) {
    if (!std::binary_search(loads.begin(), loads.end(), id)) {
      std::ostringstream ss;
      ss << "candidate bus " << id << " is not a load bus of case '"
         << net.name << "'";
      throw SemanticError(ss.str());
    }
  }
  if (derplan::candidate_buses(net, *this).size() < units.size())
    throw SemanticError("fewer candidate buses than DER units");
}

std::vector<int> candidate_buses(const NetworkCase& net, const DerSpec& spec) {
  std::vector<int> out =
      spec.candidate_buses.empty() ? net.load_bus_ids() : spec.candidate_buses;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (spec.exclude_generator_buses)
    std::erase_if(out, [&](int id) { return net.bus_has_generator(id); });
  return out;
}

std::vector<int> rank_descending(const NetworkCase& net, const Vector& value,
                                 std::vector<int> buses) {
  std::stable_sort(buses.begin(), buses.end(), [&](int a, int b) {
    const Real va = value[net.bus_index(a)];
    const Real vb = value[net.bus_index(b)];
    if (va != vb) return va > vb;
    return a < b;
  });
  return buses;
}

NetworkCase apply_der(const NetworkCase& net, int bus_id,
                      const DerUnit& unit) {
  NetworkCase out = net;
  const Index bi = out.bus_index(bus_id);
  switch (unit.mode) {
    case DerMode::non_dispatchable_pq:
      out.buses[bi].p_demand -= unit.p_size;
      out.buses[bi].q_demand -= unit.q_size;
      break;
    case DerMode::dispatchable_q:
      out.generators.push_back(Generator{bus_id, unit.p_size, unit.p_size,
                                         -unit.q_size, unit.q_size,
                                         CostPoly{}});
      break;
    case DerMode::dispatchable_pq:
      out.generators.push_back(Generator{bus_id, 0.0, unit.p_size,
                                         -unit.q_size, unit.q_size,
                                         CostPoly{}});
      break;
  }
  return out;
}

NetworkCase remove_der(const NetworkCase& net, int bus_id,
                       const DerUnit& unit) {
  NetworkCase out = net;
  const Index bi = out.bus_index(bus_id);
  if (unit.mode == DerMode::non_dispatchable_pq) {
    out.buses[bi].p_demand += unit.p_size;
    out.buses[bi].q_demand += unit.q_size;
    return out;
  }
  for (auto it = out.generators.rbegin(); it != out.generators.rend(); ++it) {
    const bool fixed = unit.mode == DerMode::dispatchable_q;
    if (it->bus == bus_id && it->p_max == unit.p_size &&
        it->p_min == (fixed ? unit.p_size : 0.0) &&
        it->q_max == unit.q_size && it->cost.eval(1.0) == 0.0) {
      out.generators.erase(std::next(it).base());
      return out;
    }
  }
  std::ostringstream ss;
  ss << "no matching DER generator at bus " << bus_id << " to remove";
  throw SemanticError(ss.str());
}

PlacementPlan run_study(const NetworkCase& net, const LoadProfile& profile,
                        const DerSpec& spec, const McsConfig& config,
                        Index cluster_count, McsResult* mcs_out) {
  spec.validate(net);
  LoadModel model = cluster_profile(profile, cluster_count);
  McsConfig effective = config;
  if (spec.baseline) {
    effective.resolve = false;
    effective.penalize = false;
    effective.store_pre = true;
  }
  McsResult result = run_mcs(net, model, spec, effective);

  // rank the candidates by their stored weighted-average multiplier
  const std::vector<int> candidates = rank_descending(
      net, result.stats.mean, candidate_buses(net, spec));

  PlacementPlan plan;
  plan.case_name = net.name;
  plan.label =
      spec.baseline ? "baseline" : to_string(spec.units.front().mode);
  plan.seed = config.rng_seed;
  plan.sigma_stop = result.sigma_stop;
  plan.samples = result.samples;
  plan.mcs_converged = result.converged;
  plan.stats = result.stats;
  for (std::size_t j = 0; j < spec.units.size(); ++j) {
    Site site;
    site.bus_id = candidates[j];
    site.unit = spec.units[j];
    site.avg_lambda = result.stats.mean[net.bus_index(site.bus_id)];
    site.penalties = result.stats.penalties[static_cast<std::size_t>(
        net.bus_index(site.bus_id))];
    if (!spec.baseline) {
      site.range = validity_range(net, site.bus_id, 2.0 * site.unit.p_size,
                                  config.opf);
      site.range_probed = true;
    }
    plan.sites.push_back(std::move(site));
  }
  if (mcs_out) *mcs_out = std::move(result);
  return plan;
}

std::vector<int> site_buses(const PlacementPlan& plan) {
  std::vector<int> out;
  for (const Site& site : plan.sites) out.push_back(site.bus_id);
  return out;
}

namespace {

nlohmann::json range_json(const ValidityRange& range) {
  nlohmann::json left = nlohmann::json::array();
  for (const ConstraintId& id : range.left) left.push_back(to_string(id));
  nlohmann::json entered = nlohmann::json::array();
  for (const ConstraintId& id : range.entered)
    entered.push_back(to_string(id));
  return {{"range_mw", range.range_mw},
          {"capped", range.capped},
          {"beyond_feasible", range.beyond_feasible},
          {"left", left},
          {"entered", entered}};
}

}  // namespace

std::string plan_json(const PlacementPlan& plan) {
  nlohmann::json sites = nlohmann::json::array();
  for (const Site& s : plan.sites)
    sites.push_back({{"bus", s.bus_id},
                     {"p_mw", s.unit.p_size},
                     {"q_mvar", s.unit.q_size},
                     {"mode", to_string(s.unit.mode)},
                     {"avg_lambda", s.avg_lambda},
                     {"penalties", s.penalties},
                     {"validity", s.range_probed ? range_json(s.range)
                                                 : nlohmann::json()}});
  nlohmann::json doc = {{"case", plan.case_name},
                        {"study", plan.label},
                        {"seed", plan.seed},
                        {"sigma", plan.sigma_stop},
                        {"samples", plan.samples},
                        {"converged", plan.mcs_converged},
                        {"sites", sites}};
  return doc.dump(1) + "\n";
}

std::string plan_table(const PlacementPlan& plan) {
  std::ostringstream out;
  out << "study " << plan.label << " on " << plan.case_name << " (seed "
      << plan.seed << ", " << plan.samples << " samples, sigma "
      << plan.sigma_stop << ", "
      << (plan.mcs_converged ? "converged" : "sample limit") << ")\n";
  out << "bus     P (MW)  Q (MVAr)  mode                 avg lambda  "
         "validity (MW)  penalties\n";
  for (const Site& s : plan.sites) {
    char range[24] = "-";
    if (s.range_probed)
      std::snprintf(range, sizeof(range), "%s%-.4g",
                    s.range.capped ? ">=" : "", s.range.range_mw);
    char line[160];
    std::snprintf(line, sizeof(line), "%-7d %-7g %-9g %-20s %-11.4f %-14s %ld\n",
                  s.bus_id, s.unit.p_size, s.unit.q_size,
                  to_string(s.unit.mode), s.avg_lambda, range, s.penalties);
    out << line;
  }
  return out.str();
}

std::string compare_studies(const std::vector<PlacementPlan>& plans) {
  if (plans.empty()) throw SemanticError("nothing to compare");
  for (const PlacementPlan& p : plans)
    if (p.case_name != plans.front().case_name ||
        p.sites.size() != plans.front().sites.size())
      throw SemanticError("plans compare different cases or unit counts");

  std::ostringstream out;
  out << "case " << plans.front().case_name << ", " << plans.front().sites.size()
      << " units\n\n";
  out << "study        sites (bus: P MW / Q MVAr, avg lambda $/MWh, range MW)\n";
  for (const PlacementPlan& p : plans) {
    out << "  " << p.label;
    for (std::size_t pad = p.label.size(); pad < 11; ++pad) out << ' ';
    for (const Site& s : p.sites) {
      out << "  " << s.bus_id << ": " << s.unit.p_size << "/" << s.unit.q_size
          << ", " << s.avg_lambda << ", ";
      if (s.range_probed)
        out << (s.range.capped ? ">=" : "") << s.range.range_mw;
      else
        out << "-";
    }
    out << "\n";
  }
  out << "\n";
  for (std::size_t i = 0; i + 1 < plans.size(); ++i) {
    for (std::size_t j = i + 1; j < plans.size(); ++j) {
      std::set<int> a, b;
      for (const Site& s : plans[i].sites) a.insert(s.bus_id);
      for (const Site& s : plans[j].sites) b.insert(s.bus_id);
      out << plans[i].label << " vs " << plans[j].label << ": site sets "
          << (a == b ? "equal" : "differ") << "\n";
    }
  }
  return out.str();
}

}  // namespace derplan
