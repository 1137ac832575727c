#include "derplan/network.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "derplan/errors.hpp"

namespace derplan {

namespace {

bool finite(Real v) { return std::isfinite(v); }

}  // namespace

Index NetworkCase::load_bus_count() const {
  Index n = 0;
  for (const auto& b : buses)
    if (b.p_demand > 0.0) ++n;
  return n;
}

bool NetworkCase::has_bus(int bus_id) const {
  auto it = std::lower_bound(id_index_.begin(), id_index_.end(), bus_id,
                             [](const auto& p, int id) { return p.first < id; });
  return it != id_index_.end() && it->first == bus_id;
}

Index NetworkCase::bus_index(int bus_id) const {
  auto it = std::lower_bound(id_index_.begin(), id_index_.end(), bus_id,
                             [](const auto& p, int id) { return p.first < id; });
  if (it == id_index_.end() || it->first != bus_id)
    throw SemanticError("unknown bus id " + std::to_string(bus_id) + " in case '" +
                        name + "'");
  return it->second;
}

Index NetworkCase::slack_index() const {
  for (Index i = 0; i < bus_count(); ++i)
    if (buses[i].kind == BusKind::slack) return i;
  throw SemanticError("case '" + name + "' has no slack bus");
}

Real NetworkCase::total_p_demand() const {
  Real s = 0.0;
  for (const auto& b : buses) s += b.p_demand;
  return s;
}

Real NetworkCase::total_q_demand() const {
  Real s = 0.0;
  for (const auto& b : buses) s += b.q_demand;
  return s;
}

Real NetworkCase::total_p_capacity() const {
  Real s = 0.0;
  for (const auto& g : generators) s += g.p_max;
  return s;
}

std::vector<int> NetworkCase::load_bus_ids() const {
  std::vector<int> ids;
  for (const auto& b : buses)
    if (b.p_demand > 0.0) ids.push_back(b.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool NetworkCase::bus_has_generator(int bus_id) const {
  return std::any_of(generators.begin(), generators.end(),
                     [&](const Generator& g) { return g.bus == bus_id; });
}

void NetworkCase::validate() {
  if (buses.empty()) throw SemanticError("case '" + name + "' has no buses");
  if (!(base_mva > 0.0) || !finite(base_mva))
    throw SemanticError("base_mva must be positive and finite");

  id_index_.clear();
  id_index_.reserve(buses.size());
  for (Index i = 0; i < bus_count(); ++i) {
    const Bus& b = buses[i];
    if (b.id <= 0)
      throw SemanticError("bus number must be positive (got " +
                          std::to_string(b.id) + ")");
    if (!finite(b.p_demand) || !finite(b.q_demand))
      throw SemanticError("bus " + std::to_string(b.id) + ": demand not finite");
    if (!finite(b.g_shunt) || !finite(b.b_shunt))
      throw SemanticError("bus " + std::to_string(b.id) + ": shunt not finite");
    if (!(b.v_min <= b.v_max))
      throw SemanticError("bus " + std::to_string(b.id) + ": v_min > v_max");
    if (!(b.v_min > 0.0))
      throw SemanticError("bus " + std::to_string(b.id) + ": v_min must be positive");
    id_index_.emplace_back(b.id, i);
  }
  std::sort(id_index_.begin(), id_index_.end());
  for (size_t i = 1; i < id_index_.size(); ++i)
    if (id_index_[i].first == id_index_[i - 1].first)
      throw SemanticError("duplicate bus number " +
                          std::to_string(id_index_[i].first));

  int slack_count = 0;
  for (const auto& b : buses)
    if (b.kind == BusKind::slack) ++slack_count;
  if (slack_count != 1)
    throw SemanticError("case '" + name + "' must have exactly one slack bus, found " +
                        std::to_string(slack_count));

  for (size_t t = 0; t < branches.size(); ++t) {
    const Branch& br = branches[t];
    if (!has_bus(br.from_bus) || !has_bus(br.to_bus))
      throw SemanticError("branch " + std::to_string(t + 1) +
                          ": dangling bus reference (" + std::to_string(br.from_bus) +
                          " -> " + std::to_string(br.to_bus) + ")");
    if (br.from_bus == br.to_bus)
      throw SemanticError("branch " + std::to_string(t + 1) + ": self-loop at bus " +
                          std::to_string(br.from_bus));
    if (br.r == 0.0 && br.x == 0.0)
      throw SemanticError("branch " + std::to_string(t + 1) + ": zero impedance");
    if (!(br.s_max >= 0.0) || !finite(br.s_max))
      throw SemanticError("branch " + std::to_string(t + 1) + ": invalid s_max");
    if (!(br.tap_ratio > 0.0))
      throw SemanticError("branch " + std::to_string(t + 1) + ": tap ratio must be positive");
  }

  if (generators.empty())
    throw SemanticError("case '" + name + "' has no generators");
  for (size_t j = 0; j < generators.size(); ++j) {
    const Generator& g = generators[j];
    if (!has_bus(g.bus))
      throw SemanticError("generator " + std::to_string(j + 1) +
                          ": dangling bus reference " + std::to_string(g.bus));
    if (!(g.p_min <= g.p_max))
      throw SemanticError("generator " + std::to_string(j + 1) + ": p_min > p_max");
    if (!(g.q_min <= g.q_max))
      throw SemanticError("generator " + std::to_string(j + 1) + ": q_min > q_max");
    if (!finite(g.cost.c2) || !finite(g.cost.c1) || !finite(g.cost.c0))
      throw SemanticError("generator " + std::to_string(j + 1) +
                          ": cost coefficients not finite");
    if (g.cost.c2 < 0.0)
      throw SemanticError("generator " + std::to_string(j + 1) +
                          ": negative quadratic cost coefficient");
  }

  // connectivity over branches (BFS from bus 0)
  const Index nb = bus_count();
  std::vector<std::vector<Index>> adj(nb);
  for (const auto& br : branches) {
    Index f = bus_index(br.from_bus);
    Index t = bus_index(br.to_bus);
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  std::vector<char> seen(nb, 0);
  std::queue<Index> q;
  q.push(0);
  seen[0] = 1;
  Index reached = 1;
  while (!q.empty()) {
    Index u = q.front();
    q.pop();
    for (Index v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
  }
  if (reached != nb) {
    std::string orphans;
    for (Index i = 0; i < nb; ++i)
      if (!seen[i]) orphans += (orphans.empty() ? "" : ", ") + std::to_string(buses[i].id);
    throw SemanticError("case '" + name + "' is disconnected; unreachable buses: " + orphans);
  }
}

bool NetworkCase::operator==(const NetworkCase& other) const {
  auto bus_eq = [](const Bus& a, const Bus& b) {
    return a.id == b.id && a.kind == b.kind && a.p_demand == b.p_demand &&
           a.q_demand == b.q_demand && a.g_shunt == b.g_shunt &&
           a.b_shunt == b.b_shunt && a.v_min == b.v_min && a.v_max == b.v_max &&
           a.base_kv == b.base_kv;
  };
  auto branch_eq = [](const Branch& a, const Branch& b) {
    return a.from_bus == b.from_bus && a.to_bus == b.to_bus && a.r == b.r &&
           a.x == b.x && a.b_charging == b.b_charging && a.tap_ratio == b.tap_ratio &&
           a.phase_shift == b.phase_shift && a.s_max == b.s_max;
  };
  auto gen_eq = [](const Generator& a, const Generator& b) {
    return a.bus == b.bus && a.p_min == b.p_min && a.p_max == b.p_max &&
           a.q_min == b.q_min && a.q_max == b.q_max && a.cost.c2 == b.cost.c2 &&
           a.cost.c1 == b.cost.c1 && a.cost.c0 == b.cost.c0;
  };
  return name == other.name && base_mva == other.base_mva &&
         std::equal(buses.begin(), buses.end(), other.buses.begin(),
                    other.buses.end(), bus_eq) &&
         std::equal(branches.begin(), branches.end(), other.branches.begin(),
                    other.branches.end(), branch_eq) &&
         std::equal(generators.begin(), generators.end(), other.generators.begin(),
                    other.generators.end(), gen_eq);
}

NetworkCase scale_loads(const NetworkCase& base, Real factor) {
  if (!(factor > 0.0) || !std::isfinite(factor))
    throw SemanticError("load scale factor must be positive and finite, got " +
                        std::to_string(factor));
  NetworkCase scaled = base;
  for (auto& b : scaled.buses) {
    b.p_demand *= factor;
    b.q_demand *= factor;
  }
  return scaled;
}

Admittance build_admittance(const NetworkCase& net) {
  const Index nb = net.bus_count();
  const Index nt = net.branch_count();
  Admittance adm;
  adm.ybus = ComplexMatrix::Zero(nb, nb);
  adm.yf = ComplexMatrix::Zero(nt, nb);
  adm.yt = ComplexMatrix::Zero(nt, nb);

  for (Index t = 0; t < nt; ++t) {
    const Branch& br = net.branches[t];
    const Index f = net.bus_index(br.from_bus);
    const Index k = net.bus_index(br.to_bus);
    const Complex ys = Complex(1.0, 0.0) / Complex(br.r, br.x);
    const Complex bc(0.0, br.b_charging / 2.0);
    const Complex tap = br.tap_ratio * std::exp(Complex(0.0, br.phase_shift));

    const Complex yff = (ys + bc) / (tap * std::conj(tap));
    const Complex yft = -ys / std::conj(tap);
    const Complex ytf = -ys / tap;
    const Complex ytt = ys + bc;

    adm.yf(t, f) = yff;
    adm.yf(t, k) = yft;
    adm.yt(t, f) = ytf;
    adm.yt(t, k) = ytt;

    adm.ybus(f, f) += yff;
    adm.ybus(f, k) += yft;
    adm.ybus(k, f) += ytf;
    adm.ybus(k, k) += ytt;
  }

  for (Index i = 0; i < nb; ++i) {
    const Bus& b = net.buses[i];
    adm.ybus(i, i) += Complex(b.g_shunt, b.b_shunt) / net.base_mva;
  }
  return adm;
}

}  // namespace derplan
