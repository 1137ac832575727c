#include "derplan/matpower.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <vector>

#include "derplan/errors.hpp"

namespace derplan {

namespace {

constexpr Real kPi = 3.14159265358979323846;

struct Cursor {
  const std::string& text;
  size_t pos = 0;
  int line = 1;
  int col = 1;

  explicit Cursor(const std::string& t) : text(t) {}

  bool eof() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }

  void advance() {
    if (text[pos] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    ++pos;
  }

  void skip_ws_and_comments() {
    while (!eof()) {
      char c = peek();
      if (c == '%') {
        while (!eof() && peek() != '\n') advance();
      } else if (c == '.' && pos + 2 < text.size() && text[pos + 1] == '.' &&
                 text[pos + 2] == '.') {
        // MATLAB line continuation
        while (!eof() && peek() != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw SyntaxError(msg, line, col);
  }
};

bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string read_identifier(Cursor& cur) {
  cur.skip_ws_and_comments();
  if (cur.eof() || !(std::isalpha(static_cast<unsigned char>(cur.peek())) || cur.peek() == '_'))
    cur.fail("expected identifier");
  std::string s;
  while (!cur.eof() && ident_char(cur.peek())) {
    s += cur.peek();
    cur.advance();
  }
  return s;
}

void expect(Cursor& cur, char c) {
  cur.skip_ws_and_comments();
  if (cur.eof() || cur.peek() != c)
    cur.fail(std::string("expected '") + c + "'");
  cur.advance();
}

bool try_consume(Cursor& cur, char c) {
  cur.skip_ws_and_comments();
  if (!cur.eof() && cur.peek() == c) {
    cur.advance();
    return true;
  }
  return false;
}

Real read_number(Cursor& cur) {
  cur.skip_ws_and_comments();
  const char* start = cur.text.c_str() + cur.pos;
  char* end = nullptr;
  Real v = std::strtod(start, &end);
  if (end == start) cur.fail("expected number");
  for (const char* p = start; p != end; ++p) cur.advance();
  return v;
}

std::string read_quoted_string(Cursor& cur) {
  cur.skip_ws_and_comments();
  if (cur.eof() || cur.peek() != '\'') cur.fail("expected quoted string");
  cur.advance();
  std::string s;
  while (!cur.eof() && cur.peek() != '\'') {
    s += cur.peek();
    cur.advance();
  }
  if (cur.eof()) cur.fail("unterminated string");
  cur.advance();
  return s;
}

using MatrixRows = std::vector<std::vector<Real>>;

MatrixRows read_matrix(Cursor& cur) {
  expect(cur, '[');
  MatrixRows rows;
  std::vector<Real> row;
  for (;;) {
    cur.skip_ws_and_comments();
    if (cur.eof()) cur.fail("unterminated matrix");
    char c = cur.peek();
    if (c == ']') {
      cur.advance();
      if (!row.empty()) rows.push_back(std::move(row));
      break;
    }
    if (c == ';') {
      cur.advance();
      if (!row.empty()) rows.push_back(std::move(row));
      row.clear();
      continue;
    }
    if (c == ',') {
      cur.advance();
      continue;
    }
    row.push_back(read_number(cur));
  }
  return rows;
}

const std::vector<Real>& require_cols(const MatrixRows& m, size_t row, size_t min_cols,
                                       const std::string& table) {
  if (m[row].size() < min_cols)
    throw SemanticError(table + " row " + std::to_string(row + 1) + " has " +
                        std::to_string(m[row].size()) + " columns, need at least " +
                        std::to_string(min_cols));
  return m[row];
}

void fmt(std::ostringstream& os, Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

}  // namespace

NetworkCase parse_matpower_case(const std::string& text) {
  Cursor cur(text);
  NetworkCase net;
  std::string struct_var = "mpc";

  std::map<std::string, MatrixRows> tables;
  bool have_base = false;

  while (true) {
    cur.skip_ws_and_comments();
    if (cur.eof()) break;

    int line = cur.line, col = cur.col;
    std::string word = read_identifier(cur);

    if (word == "function") {
      // `function mpc = casename`
      struct_var = read_identifier(cur);
      expect(cur, '=');
      net.name = read_identifier(cur);
      continue;
    }

    std::string field = word;
    if (try_consume(cur, '.')) {
      if (word != struct_var)
        throw SyntaxError("unexpected struct variable '" + word + "'", line, col);
      field = read_identifier(cur);
    }
    expect(cur, '=');

    if (field == "version") {
      std::string v = read_quoted_string(cur);
      if (v != "2")
        throw UnsupportedError("unsupported case format version '" + v + "'");
    } else if (field == "baseMVA") {
      net.base_mva = read_number(cur);
      have_base = true;
    } else if (field == "bus" || field == "gen" || field == "branch" ||
               field == "gencost") {
      tables[field] = read_matrix(cur);
    } else {
      throw UnsupportedError("unsupported case field '" + field + "' at line " +
                             std::to_string(line));
    }
    try_consume(cur, ';');
  }

  if (!have_base) throw SemanticError("case has no baseMVA");
  for (const char* required : {"bus", "gen", "branch", "gencost"})
    if (!tables.count(required))
      throw SemanticError(std::string("case has no ") + required + " table");

  const MatrixRows& bus = tables["bus"];
  for (size_t i = 0; i < bus.size(); ++i) {
    const auto& row = require_cols(bus, i, 13, "bus");
    Bus b;
    b.id = static_cast<int>(row[0]);
    int type = static_cast<int>(row[1]);
    switch (type) {
      case 1: b.kind = BusKind::pq; break;
      case 2: b.kind = BusKind::pv; break;
      case 3: b.kind = BusKind::slack; break;
      default:
        throw UnsupportedError("bus " + std::to_string(b.id) + ": unsupported bus type " +
                               std::to_string(type));
    }
    b.p_demand = row[2];
    b.q_demand = row[3];
    b.g_shunt = row[4];
    b.b_shunt = row[5];
    b.base_kv = row[9];
    b.v_max = row[11];
    b.v_min = row[12];
    net.buses.push_back(b);
  }

  const MatrixRows& gen = tables["gen"];
  for (size_t i = 0; i < gen.size(); ++i) {
    const auto& row = require_cols(gen, i, 10, "gen");
    if (static_cast<int>(row[7]) != 1)
      throw UnsupportedError("gen row " + std::to_string(i + 1) +
                             ": out-of-service generators are not supported");
    Generator g;
    g.bus = static_cast<int>(row[0]);
    g.q_max = row[3];
    g.q_min = row[4];
    g.p_max = row[8];
    g.p_min = row[9];
    net.generators.push_back(g);
  }

  const MatrixRows& branch = tables["branch"];
  for (size_t i = 0; i < branch.size(); ++i) {
    const auto& row = require_cols(branch, i, 11, "branch");
    if (static_cast<int>(row[10]) != 1)
      throw UnsupportedError("branch row " + std::to_string(i + 1) +
                             ": out-of-service branches are not supported");
    Branch br;
    br.from_bus = static_cast<int>(row[0]);
    br.to_bus = static_cast<int>(row[1]);
    br.r = row[2];
    br.x = row[3];
    br.b_charging = row[4];
    br.s_max = row[5];
    br.tap_ratio = row[8] == 0.0 ? 1.0 : row[8];
    br.phase_shift = row[9] * kPi / 180.0;
    net.branches.push_back(br);
  }

  const MatrixRows& gencost = tables["gencost"];
  if (gencost.size() != net.generators.size())
    throw UnsupportedError("gencost must have exactly one row per generator (got " +
                           std::to_string(gencost.size()) + " rows for " +
                           std::to_string(net.generators.size()) + " generators)");
  for (size_t i = 0; i < gencost.size(); ++i) {
    const auto& row = require_cols(gencost, i, 4, "gencost");
    int model = static_cast<int>(row[0]);
    if (model != 2)
      throw UnsupportedError("gencost row " + std::to_string(i + 1) +
                             ": only polynomial cost model 2 is supported (got model " +
                             std::to_string(model) + ")");
    int ncost = static_cast<int>(row[3]);
    if (ncost < 1 || ncost > 3)
      throw UnsupportedError("gencost row " + std::to_string(i + 1) +
                             ": polynomial degree above quadratic is not supported");
    require_cols(gencost, i, 4 + static_cast<size_t>(ncost), "gencost");
    CostPoly& c = net.generators[i].cost;
    // coefficients listed highest order first
    if (ncost == 3) {
      c.c2 = row[4];
      c.c1 = row[5];
      c.c0 = row[6];
    } else if (ncost == 2) {
      c.c1 = row[4];
      c.c0 = row[5];
    } else {
      c.c0 = row[4];
    }
  }

  net.validate();
  return net;
}

std::string emit_matpower_case(const NetworkCase& net) {
  std::ostringstream os;
  os << "function mpc = " << (net.name.empty() ? "case_unnamed" : net.name) << "\n";
  os << "mpc.version = '2';\n";
  os << "mpc.baseMVA = ";
  fmt(os, net.base_mva);
  os << ";\n\nmpc.bus = [\n";
  for (const auto& b : net.buses) {
    int type = b.kind == BusKind::slack ? 3 : (b.kind == BusKind::pv ? 2 : 1);
    os << "\t" << b.id << "\t" << type << "\t";
    fmt(os, b.p_demand); os << "\t";
    fmt(os, b.q_demand); os << "\t";
    fmt(os, b.g_shunt); os << "\t";
    fmt(os, b.b_shunt); os << "\t1\t1\t0\t";
    fmt(os, b.base_kv); os << "\t1\t";
    fmt(os, b.v_max); os << "\t";
    fmt(os, b.v_min);
    os << ";\n";
  }
  os << "];\n\nmpc.gen = [\n";
  for (const auto& g : net.generators) {
    os << "\t" << g.bus << "\t0\t0\t";
    fmt(os, g.q_max); os << "\t";
    fmt(os, g.q_min); os << "\t1\t";
    fmt(os, net.base_mva); os << "\t1\t";
    fmt(os, g.p_max); os << "\t";
    fmt(os, g.p_min);
    os << ";\n";
  }
  os << "];\n\nmpc.branch = [\n";
  for (const auto& br : net.branches) {
    os << "\t" << br.from_bus << "\t" << br.to_bus << "\t";
    fmt(os, br.r); os << "\t";
    fmt(os, br.x); os << "\t";
    fmt(os, br.b_charging); os << "\t";
    fmt(os, br.s_max); os << "\t0\t0\t";
    fmt(os, br.tap_ratio == 1.0 ? 0.0 : br.tap_ratio); os << "\t";
    fmt(os, br.phase_shift * 180.0 / kPi); os << "\t1";
    os << ";\n";
  }
  os << "];\n\nmpc.gencost = [\n";
  for (const auto& g : net.generators) {
    os << "\t2\t0\t0\t3\t";
    fmt(os, g.cost.c2); os << "\t";
    fmt(os, g.cost.c1); os << "\t";
    fmt(os, g.cost.c0);
    os << ";\n";
  }
  os << "];\n";
  return os.str();
}

}  // namespace derplan
