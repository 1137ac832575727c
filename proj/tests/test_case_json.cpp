#include <doctest.h>

#include <json.hpp>

#include "derplan/case_json.hpp"
#include "test_support.hpp"

using namespace derplan;

TEST_CASE("JSON round trip reproduces every fixture exactly") {
  for (const char* name : {"case14.m", "case30.m", "case24_ieee_rts.m",
                           "case2_uncongested.m", "case2_congested.m"}) {
    CAPTURE(name);
    NetworkCase net = test::load_fixture(name);
    NetworkCase again = load_case_json(save_case_json(net));
    CHECK(net == again);
  }
}

TEST_CASE("schema errors name the offending location") {
  NetworkCase net = test::load_fixture("case14.m");
  auto doc = nlohmann::json::parse(save_case_json(net));

  SUBCASE("missing base_mva") {
    doc.erase("base_mva");
    try {
      load_case_json(doc.dump());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.pointer() == "/base_mva");
    }
  }
  SUBCASE("bad bus kind string") {
    doc["buses"][3]["kind"] = "swing";
    try {
      load_case_json(doc.dump());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.pointer() == "/buses/3/kind");
    }
  }
  SUBCASE("non-numeric branch reactance") {
    doc["branches"][0]["x"] = "oops";
    try {
      load_case_json(doc.dump());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.pointer() == "/branches/0/x");
    }
  }
  SUBCASE("cost array of the wrong arity") {
    doc["generators"][0]["cost"] = {1.0, 2.0};
    CHECK_THROWS_AS(load_case_json(doc.dump()), SchemaError);
  }
  SUBCASE("semantic violations surface as schema errors") {
    doc["generators"][0]["p_min"] = 1e9;
    CHECK_THROWS_AS(load_case_json(doc.dump()), SchemaError);
  }
}

TEST_CASE("optional fields default sensibly") {
  std::string text = R"({
    "name": "mini",
    "base_mva": 100,
    "buses": [
      {"id": 1, "kind": "slack", "p_demand": 0, "q_demand": 0,
       "v_min": 0.9, "v_max": 1.1},
      {"id": 2, "kind": "pq", "p_demand": 10, "q_demand": 2,
       "v_min": 0.9, "v_max": 1.1}
    ],
    "branches": [
      {"from_bus": 1, "to_bus": 2, "r": 0.01, "x": 0.1}
    ],
    "generators": [
      {"bus": 1, "p_min": 0, "p_max": 100, "q_min": -50, "q_max": 50,
       "cost": [0, 25, 0]}
    ]
  })";
  NetworkCase net = load_case_json(text);
  CHECK(net.branches[0].tap_ratio == doctest::Approx(1.0));
  CHECK(net.branches[0].s_max == doctest::Approx(0.0));
  CHECK(net.buses[0].g_shunt == doctest::Approx(0.0));
  CHECK(net.buses[0].b_shunt == doctest::Approx(0.0));
}

TEST_CASE("malformed JSON reports a schema error, not a crash") {
  CHECK_THROWS_AS(load_case_json("{not json"), SchemaError);
  CHECK_THROWS_AS(load_case_json("[1,2,3]"), SchemaError);
}
