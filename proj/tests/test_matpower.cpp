#include <doctest.h>

#include "derplan/matpower.hpp"
#include "test_support.hpp"

using namespace derplan;

TEST_CASE("IEEE 14-bus case text parses with the known totals") {
  NetworkCase net = test::load_fixture("case14.m");
  CHECK(net.name == "case14");
  CHECK(net.base_mva == doctest::Approx(100.0));
  CHECK(net.bus_count() == 14);
  CHECK(net.branch_count() == 20);
  CHECK(net.generator_count() == 5);
  CHECK(net.load_bus_count() == 11);
  CHECK(net.total_p_demand() == doctest::Approx(259.0));
  CHECK(net.total_p_capacity() == doctest::Approx(772.4));
  CHECK(net.buses[net.bus_index(9)].b_shunt == doctest::Approx(19.0));
  CHECK(net.branches[7].tap_ratio == doctest::Approx(0.978));
  CHECK(net.slack_index() == 0);
}

TEST_CASE("IEEE 30-bus case text parses with the known totals") {
  NetworkCase net = test::load_fixture("case30.m");
  CHECK(net.bus_count() == 30);
  CHECK(net.branch_count() == 41);
  CHECK(net.generator_count() == 6);
  CHECK(net.total_p_demand() == doctest::Approx(189.2));
  CHECK(net.total_p_capacity() == doctest::Approx(335.0));
  CHECK(net.branches[0].s_max == doctest::Approx(130.0));
  CHECK(net.buses[net.bus_index(5)].b_shunt == doctest::Approx(0.19));
}

TEST_CASE("RTS case text parses with the known totals") {
  NetworkCase net = test::load_fixture("case24_ieee_rts.m");
  CHECK(net.bus_count() == 24);
  CHECK(net.branch_count() == 38);
  CHECK(net.generator_count() == 33);
  CHECK(net.total_p_demand() == doctest::Approx(2850.0));
  CHECK(net.total_p_capacity() == doctest::Approx(3405.0));
  CHECK(net.buses[net.bus_index(6)].b_shunt == doctest::Approx(-100.0));
  double pmin_sum = 0.0;
  for (const auto& g : net.generators) pmin_sum += g.p_min;
  CHECK(pmin_sum == doctest::Approx(1036.0));
}

TEST_CASE("parser skips comments and handles continuations") {
  std::string text =
      "% leading comment\n"
      "function mpc = demo % trailing\n"
      "mpc.version = '2';\n"
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [\n"
      "  1 3 0 0 0 0 1 1 0 0 1 1.1 0.9; % slack\n"
      "  2 1 10 2 0 0 1 1 0 0 1 1.1 0.9\n"
      "];\n"
      "mpc.gen = [ 1 0 0 50 -50 1 100 1 ...\n"
      "  100 0 ];\n"
      "mpc.branch = [ 1 2 0.01 0.1 0 0 0 0 0 0 1 ];\n"
      "mpc.gencost = [ 2 0 0 2 25 0 ];\n";
  NetworkCase net = parse_matpower_case(text);
  CHECK(net.name == "demo");
  CHECK(net.bus_count() == 2);
  CHECK(net.generators[0].p_max == doctest::Approx(100.0));
  CHECK(net.generators[0].cost.c1 == doctest::Approx(25.0));
  CHECK(net.generators[0].cost.c2 == doctest::Approx(0.0));
}

TEST_CASE("syntax errors carry line and column") {
  std::string text =
      "function mpc = broken\n"
      "mpc.baseMVA = ;\n";
  try {
    parse_matpower_case(text);
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() > 10);
  }
}

TEST_CASE("out-of-service elements are rejected as unsupported") {
  std::string text =
      "function mpc = demo\n"
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [\n"
      "  1 3 0 0 0 0 1 1 0 0 1 1.1 0.9;\n"
      "  2 1 10 2 0 0 1 1 0 0 1 1.1 0.9\n"
      "];\n"
      "mpc.gen = [ 1 0 0 50 -50 1 100 1 100 0 ];\n"
      "mpc.branch = [ 1 2 0.01 0.1 0 0 0 0 0 0 0 ];\n"
      "mpc.gencost = [ 2 0 0 2 25 0 ];\n";
  CHECK_THROWS_AS(parse_matpower_case(text), UnsupportedError);
}

TEST_CASE("piecewise-linear cost model is rejected as unsupported") {
  std::string text =
      "function mpc = demo\n"
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [\n"
      "  1 3 0 0 0 0 1 1 0 0 1 1.1 0.9;\n"
      "  2 1 10 2 0 0 1 1 0 0 1 1.1 0.9\n"
      "];\n"
      "mpc.gen = [ 1 0 0 50 -50 1 100 1 100 0 ];\n"
      "mpc.branch = [ 1 2 0.01 0.1 0 0 0 0 0 0 1 ];\n"
      "mpc.gencost = [ 1 0 0 2 0 0 100 2500 ];\n";
  CHECK_THROWS_AS(parse_matpower_case(text), UnsupportedError);
}

TEST_CASE("emit then parse reproduces every fixture exactly") {
  for (const char* name : {"case14.m", "case30.m", "case24_ieee_rts.m",
                           "case2_uncongested.m", "case2_congested.m"}) {
    CAPTURE(name);
    NetworkCase net = test::load_fixture(name);
    NetworkCase again = parse_matpower_case(emit_matpower_case(net));
    CHECK(net == again);
  }
}
