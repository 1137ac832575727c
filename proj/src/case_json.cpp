#include "derplan/case_json.hpp"

#include <json.hpp>

#include "derplan/errors.hpp"

namespace derplan {

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object())
    throw SchemaError("expected object", path.empty() ? "/" : path);
  auto it = obj.find(key);
  if (it == obj.end())
    throw SchemaError("missing required field", path + "/" + key);
  return *it;
}

Real number_at(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number())
    throw SchemaError("expected number", path + "/" + key);
  return v.get<Real>();
}

int int_at(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number_integer())
    throw SchemaError("expected integer", path + "/" + key);
  return v.get<int>();
}

std::string string_at(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string())
    throw SchemaError("expected string", path + "/" + key);
  return v.get<std::string>();
}

const json& array_at(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_array())
    throw SchemaError("expected array", path + "/" + key);
  return v;
}

BusKind kind_from_string(const std::string& s, const std::string& path) {
  if (s == "slack") return BusKind::slack;
  if (s == "pv") return BusKind::pv;
  if (s == "pq") return BusKind::pq;
  throw SchemaError("bus kind must be one of \"slack\", \"pv\", \"pq\"", path);
}

const char* kind_to_string(BusKind k) {
  switch (k) {
    case BusKind::slack: return "slack";
    case BusKind::pv: return "pv";
    default: return "pq";
  }
}

}  // namespace

NetworkCase load_case_json(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded())
    throw SchemaError("document is not valid JSON", "/");

  NetworkCase net;
  net.name = string_at(doc, "name", "");
  net.base_mva = number_at(doc, "base_mva", "");

  const json& buses = array_at(doc, "buses", "");
  for (size_t i = 0; i < buses.size(); ++i) {
    const std::string path = "/buses/" + std::to_string(i);
    const json& b = buses[i];
    Bus bus;
    bus.id = int_at(b, "id", path);
    bus.kind = kind_from_string(string_at(b, "kind", path), path + "/kind");
    bus.p_demand = number_at(b, "p_demand", path);
    bus.q_demand = number_at(b, "q_demand", path);
    bus.g_shunt = b.value("g_shunt", 0.0);
    bus.b_shunt = b.value("b_shunt", 0.0);
    bus.v_min = number_at(b, "v_min", path);
    bus.v_max = number_at(b, "v_max", path);
    bus.base_kv = b.value("base_kv", 0.0);
    net.buses.push_back(bus);
  }

  const json& branches = array_at(doc, "branches", "");
  for (size_t i = 0; i < branches.size(); ++i) {
    const std::string path = "/branches/" + std::to_string(i);
    const json& b = branches[i];
    Branch br;
    br.from_bus = int_at(b, "from_bus", path);
    br.to_bus = int_at(b, "to_bus", path);
    br.r = number_at(b, "r", path);
    br.x = number_at(b, "x", path);
    br.b_charging = b.value("b_charging", 0.0);
    br.tap_ratio = b.value("tap_ratio", 1.0);
    br.phase_shift = b.value("phase_shift", 0.0);
    br.s_max = b.value("s_max", 0.0);
    net.branches.push_back(br);
  }

  const json& gens = array_at(doc, "generators", "");
  for (size_t i = 0; i < gens.size(); ++i) {
    const std::string path = "/generators/" + std::to_string(i);
    const json& g = gens[i];
    Generator gen;
    gen.bus = int_at(g, "bus", path);
    gen.p_min = number_at(g, "p_min", path);
    gen.p_max = number_at(g, "p_max", path);
    gen.q_min = number_at(g, "q_min", path);
    gen.q_max = number_at(g, "q_max", path);
    const json& cost = array_at(g, "cost", path);
    if (cost.size() != 3)
      throw SchemaError("cost must be [c2, c1, c0]", path + "/cost");
    for (size_t k = 0; k < 3; ++k)
      if (!cost[k].is_number())
        throw SchemaError("expected number", path + "/cost/" + std::to_string(k));
    gen.cost.c2 = cost[0].get<Real>();
    gen.cost.c1 = cost[1].get<Real>();
    gen.cost.c0 = cost[2].get<Real>();
    net.generators.push_back(gen);
  }

  try {
    net.validate();
  } catch (const SemanticError& e) {
    throw SchemaError(e.what(), "/");
  }
  return net;
}

std::string save_case_json(const NetworkCase& net) {
  json doc;
  doc["name"] = net.name;
  doc["base_mva"] = net.base_mva;

  json buses = json::array();
  for (const auto& b : net.buses) {
    buses.push_back({{"id", b.id},
                     {"kind", kind_to_string(b.kind)},
                     {"p_demand", b.p_demand},
                     {"q_demand", b.q_demand},
                     {"g_shunt", b.g_shunt},
                     {"b_shunt", b.b_shunt},
                     {"v_min", b.v_min},
                     {"v_max", b.v_max},
                     {"base_kv", b.base_kv}});
  }
  doc["buses"] = std::move(buses);

  json branches = json::array();
  for (const auto& br : net.branches) {
    branches.push_back({{"from_bus", br.from_bus},
                        {"to_bus", br.to_bus},
                        {"r", br.r},
                        {"x", br.x},
                        {"b_charging", br.b_charging},
                        {"tap_ratio", br.tap_ratio},
                        {"phase_shift", br.phase_shift},
                        {"s_max", br.s_max}});
  }
  doc["branches"] = std::move(branches);

  json gens = json::array();
  for (const auto& g : net.generators) {
    gens.push_back({{"bus", g.bus},
                    {"p_min", g.p_min},
                    {"p_max", g.p_max},
                    {"q_min", g.q_min},
                    {"q_max", g.q_max},
                    {"cost", {g.cost.c2, g.cost.c1, g.cost.c0}}});
  }
  doc["generators"] = std::move(gens);

  return doc.dump(2) + "\n";
}

}  // namespace derplan
