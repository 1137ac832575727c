#pragma once

#include <string>
#include <utility>
#include <vector>

#include "derplan/errors.hpp"
#include "derplan/types.hpp"

namespace derplan {

enum class BusKind { slack, pv, pq };

struct Bus {
  int id = 0;             // external bus number, positive
  BusKind kind = BusKind::pq;
  Real p_demand = 0.0;    // MW
  Real q_demand = 0.0;    // MVAr
  Real g_shunt = 0.0;     // MW consumed at |V| = 1 pu
  Real b_shunt = 0.0;     // MVAr injected at |V| = 1 pu
  Real v_min = 0.94;      // pu
  Real v_max = 1.06;      // pu
  Real base_kv = 0.0;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  Real r = 0.0;           // pu
  Real x = 0.0;           // pu
  Real b_charging = 0.0;  // pu, total line charging
  Real tap_ratio = 1.0;   // 1.0 = none
  Real phase_shift = 0.0; // radians
  Real s_max = 0.0;       // MVA, 0 = unlimited
};

struct CostPoly {
  Real c2 = 0.0;  // $/MW^2 h
  Real c1 = 0.0;  // $/MWh
  Real c0 = 0.0;  // $/h

  Real eval(Real p_mw) const { return (c2 * p_mw + c1) * p_mw + c0; }
  Real marginal(Real p_mw) const { return 2.0 * c2 * p_mw + c1; }
};

struct Generator {
  int bus = 0;
  Real p_min = 0.0;  // MW
  Real p_max = 0.0;
  Real q_min = 0.0;  // MVAr
  Real q_max = 0.0;
  CostPoly cost;
};

/// Immutable after construction (validate() freezes the index maps);
/// safe to share across concurrent readers.
struct NetworkCase {
  std::string name;
  Real base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;

  Index bus_count() const { return static_cast<Index>(buses.size()); }
  Index branch_count() const { return static_cast<Index>(branches.size()); }
  Index generator_count() const { return static_cast<Index>(generators.size()); }
  Index load_bus_count() const;

  /// Internal 0-based index of an external bus id; throws SemanticError if unknown.
  Index bus_index(int bus_id) const;
  bool has_bus(int bus_id) const;

  Index slack_index() const;

  Real total_p_demand() const;   // MW
  Real total_q_demand() const;   // MVAr
  Real total_p_capacity() const; // MW, sum of generator p_max

  /// External ids of buses with positive active demand, ascending.
  std::vector<int> load_bus_ids() const;
  bool bus_has_generator(int bus_id) const;

  /// Checks every invariant (field ranges, reference resolution, exactly one
  /// slack, connectivity) and builds the id lookup. Throws SemanticError.
  void validate();

  bool operator==(const NetworkCase& other) const;

 private:
  std::vector<std::pair<int, Index>> id_index_;  // sorted by external id
};

/// Proportional load scaling at constant power factor: every bus demand
/// (P and Q) multiplied by `factor`; generation and limits untouched.
NetworkCase scale_loads(const NetworkCase& base, Real factor);

/// Bus admittance and branch end admittance matrices in per-unit,
/// including line charging, taps, phase shifters and bus shunts.
struct Admittance {
  ComplexMatrix ybus;  // N_b x N_b
  ComplexMatrix yf;    // N_t x N_b, from-end branch currents I_f = Yf V
  ComplexMatrix yt;    // N_t x N_b
};

Admittance build_admittance(const NetworkCase& net);

}  // namespace derplan
