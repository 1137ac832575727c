#pragma once

#include <string>
#include <vector>

#include "derplan/network.hpp"

namespace derplan {

// how the OPF sees a placed unit: a must-take demand offset, a fixed-output
// generator with controllable reactive power, or a fully dispatchable
// zero-cost generator
enum class DerMode { non_dispatchable_pq, dispatchable_q, dispatchable_pq };

const char* to_string(DerMode mode);
DerMode parse_der_mode(const std::string& text);

struct DerUnit {
  Real p_size = 0.0;  // MW
  Real q_size = 0.0;  // MVAr
  DerMode mode = DerMode::non_dispatchable_pq;

  bool operator==(const DerUnit&) const = default;
};

struct DerSpec {
  std::vector<DerUnit> units;       // sorted by p_size descending
  std::vector<int> candidate_buses; // empty = all load buses
  bool baseline = false;            // skip re-solve and penalization
  bool exclude_generator_buses = false;

  // unit sizes positive and non-increasing; explicit candidates must be
  // load buses of `net`; enough candidates for the unit list
  void validate(const NetworkCase& net) const;
};

// candidate sites after applying the spec's restrictions, ascending ids
std::vector<int> candidate_buses(const NetworkCase& net, const DerSpec& spec);

// buses ordered by their per-bus value, largest first, exact ties broken by
// the lower bus id
std::vector<int> rank_descending(const NetworkCase& net, const Vector& value,
                                 std::vector<int> buses);

// returns a copy of the case with the unit attached at `bus_id`:
// non_dispatchable_pq subtracts the sizes from the bus demand, the
// dispatchable modes append a zero-cost generator (fixed p for
// dispatchable_q, p in [0, p_size] for dispatchable_pq)
NetworkCase apply_der(const NetworkCase& net, int bus_id, const DerUnit& unit);

// exact inverse of apply_der for the same bus and unit
NetworkCase remove_der(const NetworkCase& net, int bus_id, const DerUnit& unit);

}  // namespace derplan
