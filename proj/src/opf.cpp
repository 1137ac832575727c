#include "derplan/opf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "derplan/opf_derivs.hpp"

namespace derplan {
namespace {

constexpr Real kFixSpanMw = 1e-7;  // bounds closer than this become equalities
constexpr Real kCentering = 0.1;
constexpr Real kSharpCentering = 0.01;
constexpr Real kSharpComp = 1e-10;  // complementarity target for sharpening
constexpr int kSharpMaxIter = 8;
constexpr Real kBoundaryFrac = 0.99995;
// the barrier parameter is kept above a fraction of the convergence tolerance
// until the point qualifies: letting it run to machine scale while the
// equality residual is still settling turns the KKT system singular and the
// fraction-to-boundary rule then truncates every step
constexpr Real kMuFloorFrac = 0.1;

struct Problem {
  const NetworkCase* net = nullptr;
  OpfOptions opts;
  Real base = 100.0;
  Real cs = 1.0;  // objective normalization, $/MWh
  Index nb = 0, ng = 0, nlim = 0, nx = 0, neq = 0, ni = 0;
  Index ova = 0, ovm = 0, opg = 0, oqg = 0;
  Index slack = 0;

  Admittance adm;
  IndexVector gen_bus;
  Vector pd, qd;      // pu
  Vector vmin, vmax;  // pu
  Vector pmin, pmax;  // pu
  Vector qmin, qmax;  // pu
  std::vector<char> fixp, fixq;
  std::vector<Index> fixp_gens, fixq_gens;
  Vector pfix, qfix;  // pu, per generator row (meaningful where fixed)
  Vector c2n, c1n;    // normalized cost on per-unit output
  Real c0n = 0.0;

  std::vector<Index> free_p, free_q;  // generator rows with real bounds
  std::vector<Index> lim;             // branch rows with a flow limit
  ComplexMatrix yf_lim, yt_lim;
  IndexVector from_lim, to_lim;
  Vector smax2;  // pu^2

  std::vector<ConstraintId> hid;  // inequality catalog in row order
  Index o_pl = 0, o_ph = 0, o_ql = 0, o_qh = 0, o_vl = 0, o_vh = 0, o_ff = 0,
        o_ft = 0;
};

Problem build_problem(const NetworkCase& net, const OpfOptions& opts) {
  Problem pr;
  pr.net = &net;
  pr.opts = opts;
  pr.base = net.base_mva;
  pr.nb = net.bus_count();
  pr.ng = net.generator_count();
  pr.slack = net.slack_index();
  pr.adm = build_admittance(net);

  pr.ova = 0;
  pr.ovm = pr.nb;
  pr.opg = 2 * pr.nb;
  pr.oqg = 2 * pr.nb + pr.ng;
  pr.nx = 2 * pr.nb + 2 * pr.ng;

  pr.pd.resize(pr.nb);
  pr.qd.resize(pr.nb);
  pr.vmin.resize(pr.nb);
  pr.vmax.resize(pr.nb);
  for (Index i = 0; i < pr.nb; ++i) {
    const Bus& b = net.buses[i];
    pr.pd[i] = b.p_demand / pr.base;
    pr.qd[i] = b.q_demand / pr.base;
    pr.vmin[i] = b.v_min;
    pr.vmax[i] = b.v_max;
  }

  pr.gen_bus.resize(pr.ng);
  pr.pmin.resize(pr.ng);
  pr.pmax.resize(pr.ng);
  pr.qmin.resize(pr.ng);
  pr.qmax.resize(pr.ng);
  pr.fixp.assign(pr.ng, 0);
  pr.fixq.assign(pr.ng, 0);
  pr.pfix = Vector::Zero(pr.ng);
  pr.qfix = Vector::Zero(pr.ng);
  pr.c2n.resize(pr.ng);
  pr.c1n.resize(pr.ng);

  pr.cs = 1.0;
  for (const Generator& g : net.generators) {
    pr.cs = std::max({pr.cs, std::abs(g.cost.marginal(g.p_min)),
                      std::abs(g.cost.marginal(g.p_max))});
  }

  pr.c0n = 0.0;
  for (Index j = 0; j < pr.ng; ++j) {
    const Generator& g = net.generators[j];
    pr.gen_bus[j] = net.bus_index(g.bus);
    Real lo = g.p_min, hi = g.p_max;
    const bool fp = (hi - lo) < kFixSpanMw;
    if (!fp && opts.relax_pmin) lo = std::min(lo, 0.0);
    pr.pmin[j] = lo / pr.base;
    pr.pmax[j] = hi / pr.base;
    pr.fixp[j] = fp;
    if (fp) {
      pr.pfix[j] = 0.5 * (lo + hi) / pr.base;
      pr.fixp_gens.push_back(j);
    } else {
      pr.free_p.push_back(j);
    }
    const bool fq = (g.q_max - g.q_min) < kFixSpanMw;
    pr.qmin[j] = g.q_min / pr.base;
    pr.qmax[j] = g.q_max / pr.base;
    pr.fixq[j] = fq;
    if (fq) {
      pr.qfix[j] = 0.5 * (g.q_min + g.q_max) / pr.base;
      pr.fixq_gens.push_back(j);
    } else {
      pr.free_q.push_back(j);
    }
    pr.c2n[j] = g.cost.c2 * pr.base * pr.base / pr.cs;
    pr.c1n[j] = g.cost.c1 * pr.base / pr.cs;
    pr.c0n += g.cost.c0 / pr.cs;
  }

  for (Index k = 0; k < net.branch_count(); ++k) {
    if (net.branches[k].s_max > 0.0) pr.lim.push_back(k);
  }
  pr.nlim = static_cast<Index>(pr.lim.size());
  pr.yf_lim.resize(pr.nlim, pr.nb);
  pr.yt_lim.resize(pr.nlim, pr.nb);
  pr.from_lim.resize(pr.nlim);
  pr.to_lim.resize(pr.nlim);
  pr.smax2.resize(pr.nlim);
  for (Index r = 0; r < pr.nlim; ++r) {
    const Index k = pr.lim[r];
    pr.yf_lim.row(r) = pr.adm.yf.row(k);
    pr.yt_lim.row(r) = pr.adm.yt.row(k);
    pr.from_lim[r] = net.bus_index(net.branches[k].from_bus);
    pr.to_lim[r] = net.bus_index(net.branches[k].to_bus);
    const Real s = net.branches[k].s_max / pr.base;
    pr.smax2[r] = s * s;
  }

  pr.neq = 2 * pr.nb + 1 + static_cast<Index>(pr.fixp_gens.size()) +
           static_cast<Index>(pr.fixq_gens.size());

  pr.o_pl = 0;
  for (Index j : pr.free_p) pr.hid.push_back({ConstraintKind::pgen_lo, j});
  pr.o_ph = static_cast<Index>(pr.hid.size());
  for (Index j : pr.free_p) pr.hid.push_back({ConstraintKind::pgen_hi, j});
  pr.o_ql = static_cast<Index>(pr.hid.size());
  for (Index j : pr.free_q) pr.hid.push_back({ConstraintKind::qgen_lo, j});
  pr.o_qh = static_cast<Index>(pr.hid.size());
  for (Index j : pr.free_q) pr.hid.push_back({ConstraintKind::qgen_hi, j});
  pr.o_vl = static_cast<Index>(pr.hid.size());
  for (Index i = 0; i < pr.nb; ++i)
    pr.hid.push_back({ConstraintKind::vmag_lo, i});
  pr.o_vh = static_cast<Index>(pr.hid.size());
  for (Index i = 0; i < pr.nb; ++i)
    pr.hid.push_back({ConstraintKind::vmag_hi, i});
  pr.o_ff = static_cast<Index>(pr.hid.size());
  for (Index k : pr.lim) pr.hid.push_back({ConstraintKind::flow_from, k});
  pr.o_ft = static_cast<Index>(pr.hid.size());
  for (Index k : pr.lim) pr.hid.push_back({ConstraintKind::flow_to, k});
  pr.ni = static_cast<Index>(pr.hid.size());
  return pr;
}

struct Eval {
  ComplexVector V, S;
  InjectionJacobian dS;
  FlowJacobian ff, ft;
  Real f = 0.0;
  Vector grad, g, h;
  Matrix Jg, Jh;
};

Eval evaluate(const Problem& pr, const Vector& x) {
  Eval ev;
  const auto va = x.segment(pr.ova, pr.nb);
  const auto vm = x.segment(pr.ovm, pr.nb);
  const auto pg = x.segment(pr.opg, pr.ng);
  const auto qg = x.segment(pr.oqg, pr.ng);

  ev.V.resize(pr.nb);
  for (Index i = 0; i < pr.nb; ++i) ev.V[i] = std::polar(vm[i], va[i]);
  ev.S = bus_injections(pr.adm.ybus, ev.V);
  ev.dS = d_injections(pr.adm.ybus, ev.V);

  ev.f = pr.c0n;
  ev.grad = Vector::Zero(pr.nx);
  for (Index j = 0; j < pr.ng; ++j) {
    ev.f += (pr.c2n[j] * pg[j] + pr.c1n[j]) * pg[j];
    ev.grad[pr.opg + j] = 2.0 * pr.c2n[j] * pg[j] + pr.c1n[j];
  }

  ev.g = Vector::Zero(pr.neq);
  ev.g.head(pr.nb) = ev.S.real() + pr.pd;
  ev.g.segment(pr.nb, pr.nb) = ev.S.imag() + pr.qd;
  for (Index j = 0; j < pr.ng; ++j) {
    ev.g[pr.gen_bus[j]] -= pg[j];
    ev.g[pr.nb + pr.gen_bus[j]] -= qg[j];
  }
  ev.g[2 * pr.nb] = va[pr.slack];
  Index row = 2 * pr.nb + 1;
  for (Index j : pr.fixp_gens) ev.g[row++] = pg[j] - pr.pfix[j];
  for (Index j : pr.fixq_gens) ev.g[row++] = qg[j] - pr.qfix[j];

  ev.Jg = Matrix::Zero(pr.neq, pr.nx);
  ev.Jg.block(0, pr.ova, pr.nb, pr.nb) = ev.dS.dva.real();
  ev.Jg.block(0, pr.ovm, pr.nb, pr.nb) = ev.dS.dvm.real();
  ev.Jg.block(pr.nb, pr.ova, pr.nb, pr.nb) = ev.dS.dva.imag();
  ev.Jg.block(pr.nb, pr.ovm, pr.nb, pr.nb) = ev.dS.dvm.imag();
  for (Index j = 0; j < pr.ng; ++j) {
    ev.Jg(pr.gen_bus[j], pr.opg + j) = -1.0;
    ev.Jg(pr.nb + pr.gen_bus[j], pr.oqg + j) = -1.0;
  }
  ev.Jg(2 * pr.nb, pr.ova + pr.slack) = 1.0;
  row = 2 * pr.nb + 1;
  for (Index j : pr.fixp_gens) ev.Jg(row++, pr.opg + j) = 1.0;
  for (Index j : pr.fixq_gens) ev.Jg(row++, pr.oqg + j) = 1.0;

  ev.h = Vector::Zero(pr.ni);
  ev.Jh = Matrix::Zero(pr.ni, pr.nx);
  for (Index r = 0; r < static_cast<Index>(pr.free_p.size()); ++r) {
    const Index j = pr.free_p[r];
    ev.h[pr.o_pl + r] = pr.pmin[j] - pg[j];
    ev.Jh(pr.o_pl + r, pr.opg + j) = -1.0;
    ev.h[pr.o_ph + r] = pg[j] - pr.pmax[j];
    ev.Jh(pr.o_ph + r, pr.opg + j) = 1.0;
  }
  for (Index r = 0; r < static_cast<Index>(pr.free_q.size()); ++r) {
    const Index j = pr.free_q[r];
    ev.h[pr.o_ql + r] = pr.qmin[j] - qg[j];
    ev.Jh(pr.o_ql + r, pr.oqg + j) = -1.0;
    ev.h[pr.o_qh + r] = qg[j] - pr.qmax[j];
    ev.Jh(pr.o_qh + r, pr.oqg + j) = 1.0;
  }
  for (Index i = 0; i < pr.nb; ++i) {
    ev.h[pr.o_vl + i] = pr.vmin[i] - vm[i];
    ev.Jh(pr.o_vl + i, pr.ovm + i) = -1.0;
    ev.h[pr.o_vh + i] = vm[i] - pr.vmax[i];
    ev.Jh(pr.o_vh + i, pr.ovm + i) = 1.0;
  }
  if (pr.nlim > 0) {
    ev.ff = d_end_flows(pr.yf_lim, pr.from_lim, ev.V);
    ev.ft = d_end_flows(pr.yt_lim, pr.to_lim, ev.V);
    ev.h.segment(pr.o_ff, pr.nlim) =
        ev.ff.s.array().abs2().matrix() - pr.smax2;
    ev.h.segment(pr.o_ft, pr.nlim) =
        ev.ft.s.array().abs2().matrix() - pr.smax2;
    ev.Jh.block(pr.o_ff, pr.ova, pr.nlim, pr.nb) = d_abs2(ev.ff.s, ev.ff.dva);
    ev.Jh.block(pr.o_ff, pr.ovm, pr.nlim, pr.nb) = d_abs2(ev.ff.s, ev.ff.dvm);
    ev.Jh.block(pr.o_ft, pr.ova, pr.nlim, pr.nb) = d_abs2(ev.ft.s, ev.ft.dva);
    ev.Jh.block(pr.o_ft, pr.ovm, pr.nlim, pr.nb) = d_abs2(ev.ft.s, ev.ft.dvm);
  }
  return ev;
}

Matrix lagrangian_hessian(const Problem& pr, const Eval& ev, const Vector& nu,
                          const Vector& mu) {
  Matrix H = Matrix::Zero(pr.nx, pr.nx);
  for (Index j = 0; j < pr.ng; ++j)
    H(pr.opg + j, pr.opg + j) = 2.0 * pr.c2n[j];

  const Vector nu_p = nu.head(pr.nb);
  const Vector nu_q = nu.segment(pr.nb, pr.nb);
  const InjectionHessian hp = d2_injections(pr.adm.ybus, ev.V, nu_p);
  const InjectionHessian hq = d2_injections(pr.adm.ybus, ev.V, nu_q);
  H.block(pr.ova, pr.ova, pr.nb, pr.nb) = hp.aa.real() + hq.aa.imag();
  H.block(pr.ova, pr.ovm, pr.nb, pr.nb) = hp.av.real() + hq.av.imag();
  H.block(pr.ovm, pr.ova, pr.nb, pr.nb) = hp.va.real() + hq.va.imag();
  H.block(pr.ovm, pr.ovm, pr.nb, pr.nb) = hp.vv.real() + hq.vv.imag();

  if (pr.nlim > 0) {
    const Vector mu_f = mu.segment(pr.o_ff, pr.nlim);
    const Vector mu_t = mu.segment(pr.o_ft, pr.nlim);
    const FlowHessian hf =
        d2_abs2_flows(pr.yf_lim, pr.from_lim, ev.V, ev.ff, mu_f);
    const FlowHessian ht =
        d2_abs2_flows(pr.yt_lim, pr.to_lim, ev.V, ev.ft, mu_t);
    H.block(pr.ova, pr.ova, pr.nb, pr.nb) += hf.aa + ht.aa;
    H.block(pr.ova, pr.ovm, pr.nb, pr.nb) += hf.av + ht.av;
    H.block(pr.ovm, pr.ova, pr.nb, pr.nb) += hf.va + ht.va;
    H.block(pr.ovm, pr.ovm, pr.nb, pr.nb) += hf.vv + ht.vv;
  }
  return H;
}

KktResidual scaled_residuals(const Problem& pr, const Eval& ev,
                             const Vector& x, const Vector& nu,
                             const Vector& mu) {
  KktResidual out;
  const Vector r = ev.grad + ev.Jg.transpose() * nu + ev.Jh.transpose() * mu;
  const Real mult_norm =
      std::max(nu.size() ? nu.cwiseAbs().maxCoeff() : 0.0,
               mu.size() ? mu.cwiseAbs().maxCoeff() : 0.0);
  out.stationarity = r.cwiseAbs().maxCoeff() / (1.0 + mult_norm);

  const Real xnorm = x.cwiseAbs().maxCoeff();
  const Real gviol = ev.g.size() ? ev.g.cwiseAbs().maxCoeff() : 0.0;
  const Real hviol = ev.h.size() ? std::max(0.0, ev.h.maxCoeff()) : 0.0;
  out.feasibility = std::max(gviol, hviol) / (1.0 + xnorm);

  Real comp = 0.0;
  for (Index i = 0; i < mu.size(); ++i)
    comp = std::max(comp, mu[i] * std::max(-ev.h[i], 0.0));
  out.complementarity = comp / (1.0 + xnorm);
  return out;
}

Real constraint_mu_scale(const Problem& pr, Index h_row) {
  switch (pr.hid[h_row].kind) {
    case ConstraintKind::pgen_lo:
    case ConstraintKind::pgen_hi:
    case ConstraintKind::qgen_lo:
    case ConstraintKind::qgen_hi:
      return pr.cs / pr.base;
    case ConstraintKind::vmag_lo:
    case ConstraintKind::vmag_hi:
      return pr.cs;
    case ConstraintKind::flow_from:
    case ConstraintKind::flow_to: {
      const Real smax_pu = std::sqrt(
          pr.smax2[h_row >= pr.o_ft ? h_row - pr.o_ft : h_row - pr.o_ff]);
      return 2.0 * smax_pu * pr.cs / pr.base;
    }
  }
  return 1.0;
}

void fill_solution(const Problem& pr, const Eval& ev, const Vector& x,
                   const Vector& nu, const Vector& mu, OpfSolution& sol) {
  sol.v_ang = x.segment(pr.ova, pr.nb);
  sol.v_mag = x.segment(pr.ovm, pr.nb);
  sol.p_gen = x.segment(pr.opg, pr.ng) * pr.base;
  sol.q_gen = x.segment(pr.oqg, pr.ng) * pr.base;
  sol.objective = ev.f * pr.cs;
  sol.lambda_p = nu.head(pr.nb) * (pr.cs / pr.base);
  sol.lambda_q = nu.segment(pr.nb, pr.nb) * (pr.cs / pr.base);
  sol.constraints.clear();
  sol.constraints.reserve(pr.ni);
  sol.binding_set.clear();
  for (Index i = 0; i < pr.ni; ++i) {
    ConstraintValue cv;
    cv.id = pr.hid[i];
    cv.mu = mu[i] * constraint_mu_scale(pr, i);
    cv.slack = -ev.h[i];
    cv.binding = ev.h[i] >= -pr.opts.act_tol;
    if (cv.binding) sol.binding_set.push_back(cv.id);
    sol.constraints.push_back(cv);
  }
}

std::string worst_violation(const Problem& pr, const Eval& ev) {
  const NetworkCase& net = *pr.net;
  Real worst = 0.0;
  std::string what = "none";
  for (Index i = 0; i < pr.nb; ++i) {
    if (std::abs(ev.g[i]) > worst) {
      worst = std::abs(ev.g[i]);
      what = "active power balance at bus " + std::to_string(net.buses[i].id);
    }
    if (std::abs(ev.g[pr.nb + i]) > worst) {
      worst = std::abs(ev.g[pr.nb + i]);
      what =
          "reactive power balance at bus " + std::to_string(net.buses[i].id);
    }
  }
  for (Index i = 0; i < pr.ni; ++i) {
    if (ev.h[i] > worst) {
      worst = ev.h[i];
      what = describe_constraint(net, pr.hid[i]);
    }
  }
  std::ostringstream ss;
  ss << what << " (violation " << worst << " pu)";
  return ss.str();
}

}  // namespace

const char* to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::pgen_lo: return "pgen_lo";
    case ConstraintKind::pgen_hi: return "pgen_hi";
    case ConstraintKind::qgen_lo: return "qgen_lo";
    case ConstraintKind::qgen_hi: return "qgen_hi";
    case ConstraintKind::vmag_lo: return "vmag_lo";
    case ConstraintKind::vmag_hi: return "vmag_hi";
    case ConstraintKind::flow_from: return "flow_from";
    case ConstraintKind::flow_to: return "flow_to";
  }
  return "?";
}

const char* to_string(OpfStatus status) {
  switch (status) {
    case OpfStatus::converged: return "converged";
    case OpfStatus::infeasible: return "infeasible";
    case OpfStatus::iteration_limit: return "iteration_limit";
  }
  return "?";
}

Real KktResidual::worst() const {
  return std::max({stationarity, feasibility, complementarity});
}

std::string to_string(const ConstraintId& id) {
  return std::string(to_string(id.kind)) + "[" + std::to_string(id.index) +
         "]";
}

std::string describe_constraint(const NetworkCase& net,
                                const ConstraintId& id) {
  std::ostringstream ss;
  switch (id.kind) {
    case ConstraintKind::pgen_lo:
    case ConstraintKind::pgen_hi:
    case ConstraintKind::qgen_lo:
    case ConstraintKind::qgen_hi: {
      const Generator& g = net.generators.at(id.index);
      const char* what = (id.kind == ConstraintKind::pgen_lo)   ? "P lower"
                         : (id.kind == ConstraintKind::pgen_hi) ? "P upper"
                         : (id.kind == ConstraintKind::qgen_lo) ? "Q lower"
                                                                : "Q upper";
      ss << what << " bound of generator " << id.index << " (bus " << g.bus
         << ")";
      break;
    }
    case ConstraintKind::vmag_lo:
    case ConstraintKind::vmag_hi:
      ss << "V " << (id.kind == ConstraintKind::vmag_lo ? "lower" : "upper")
         << " bound at bus " << net.buses.at(id.index).id;
      break;
    case ConstraintKind::flow_from:
    case ConstraintKind::flow_to: {
      const Branch& br = net.branches.at(id.index);
      ss << "flow limit on branch " << id.index << " (" << br.from_bus << "-"
         << br.to_bus << ", "
         << (id.kind == ConstraintKind::flow_from ? "from" : "to") << " end)";
      break;
    }
  }
  return ss.str();
}

OpfSolution solve_opf(const NetworkCase& net, const OpfOptions& opts) {
  Problem pr = build_problem(net, opts);
  OpfSolution sol;

  // quick necessary condition: shunts and series losses only consume active
  // power, so capacity below total demand cannot balance
  bool shunts_consume = true;
  for (const Bus& b : net.buses)
    if (b.g_shunt < 0.0) shunts_consume = false;
  if (shunts_consume && pr.pmax.sum() < pr.pd.sum() - 1e-9) {
    sol.status = OpfStatus::infeasible;
    std::ostringstream ss;
    ss << "total capacity " << pr.pmax.sum() * pr.base
       << " MW below total demand " << pr.pd.sum() * pr.base << " MW";
    sol.message = ss.str();
    return sol;
  }

  Vector x = Vector::Zero(pr.nx);
  for (Index i = 0; i < pr.nb; ++i)
    x[pr.ovm + i] = 0.5 * (pr.vmin[i] + pr.vmax[i]);
  for (Index j = 0; j < pr.ng; ++j) {
    x[pr.opg + j] = pr.fixp[j] ? pr.pfix[j] : 0.5 * (pr.pmin[j] + pr.pmax[j]);
    x[pr.oqg + j] = pr.fixq[j] ? pr.qfix[j] : 0.5 * (pr.qmin[j] + pr.qmax[j]);
  }

  Eval ev = evaluate(pr, x);
  Vector z(pr.ni), mu(pr.ni);
  for (Index i = 0; i < pr.ni; ++i) {
    z[i] = std::max(1.0, -ev.h[i]);
    mu[i] = 1.0 / z[i];
  }
  Vector nu = Vector::Zero(pr.neq);
  const Vector ones = Vector::Ones(pr.ni);

  std::vector<Real> feas_hist;
  KktResidual kk;
  int iter = 0;
  bool singular = false;
  // once the tolerances are met the point is kept, then a few extra steps
  // with a small centering parameter push complementarity far below the
  // activity threshold so weakly bound rows classify the same way on every
  // solve instead of landing wherever the barrier last left their slack
  bool have_best = false;
  Vector best_x, best_z, best_nu, best_mu;
  KktResidual best_kk;
  int best_iter = 0;
  int sharpen_left = kSharpMaxIter;
  for (;; ++iter) {
    kk = scaled_residuals(pr, ev, x, nu, mu);
    feas_hist.push_back(kk.feasibility);
    const bool within = kk.stationarity <= opts.kkt_tol &&
                        kk.feasibility <= opts.feas_tol &&
                        kk.complementarity <= opts.kkt_tol;
    if (within) {
      have_best = true;
      best_x = x;
      best_z = z;
      best_nu = nu;
      best_mu = mu;
      best_kk = kk;
      best_iter = iter;
      if (kk.complementarity <= kSharpComp || sharpen_left == 0) break;
      --sharpen_left;
    } else if (have_best) {
      break;  // the extra step left the tolerance region; keep the saved point
    }
    if (iter >= opts.max_iter) break;

    Real gamma = (have_best ? kSharpCentering : kCentering) * z.dot(mu) /
                 static_cast<Real>(pr.ni);
    if (!have_best)
      gamma = std::max(
          gamma, kMuFloorFrac * std::min(opts.feas_tol, opts.kkt_tol));
    const Vector hz = ev.h + z;
    const Vector zinv = z.cwiseInverse();

    const Vector n_vec =
        ev.grad + ev.Jg.transpose() * nu +
        ev.Jh.transpose() *
            (zinv.cwiseProduct(gamma * ones + mu.cwiseProduct(hz)));
    Matrix m_mat = lagrangian_hessian(pr, ev, nu, mu);
    m_mat.noalias() +=
        ev.Jh.transpose() * mu.cwiseQuotient(z).asDiagonal() * ev.Jh;

    const Index dim = pr.nx + pr.neq;
    Matrix kkt = Matrix::Zero(dim, dim);
    kkt.topLeftCorner(pr.nx, pr.nx) = m_mat;
    kkt.topRightCorner(pr.nx, pr.neq) = ev.Jg.transpose();
    kkt.bottomLeftCorner(pr.neq, pr.nx) = ev.Jg;
    Vector rhs(dim);
    rhs << -n_vec, -ev.g;

    Vector d = kkt.partialPivLu().solve(rhs);
    if (!d.allFinite()) d = kkt.fullPivLu().solve(rhs);
    if (!d.allFinite()) {
      singular = true;
      break;
    }

    const Vector dx = d.head(pr.nx);
    const Vector dnu = d.tail(pr.neq);
    const Vector dz = -hz - ev.Jh * dx;
    const Vector dmu =
        zinv.cwiseProduct(gamma * ones - mu.cwiseProduct(dz)) - mu;

    Real alpha_p = 1.0, alpha_d = 1.0;
    for (Index i = 0; i < pr.ni; ++i) {
      if (dz[i] < 0.0)
        alpha_p = std::min(alpha_p, kBoundaryFrac * z[i] / -dz[i]);
      if (dmu[i] < 0.0)
        alpha_d = std::min(alpha_d, kBoundaryFrac * mu[i] / -dmu[i]);
    }

    x += alpha_p * dx;
    z += alpha_p * dz;
    nu += alpha_d * dnu;
    mu += alpha_d * dmu;
    ev = evaluate(pr, x);
  }

  if (have_best) {
    x = best_x;
    z = best_z;
    nu = best_nu;
    mu = best_mu;
    kk = best_kk;
    iter = best_iter;
    ev = evaluate(pr, x);
    sol.status = OpfStatus::converged;
  }

  sol.iterations = iter;
  sol.residual = kk;
  fill_solution(pr, ev, x, nu, mu, sol);

  if (sol.status == OpfStatus::converged) {
    sol.message = "converged";
    return sol;
  }

  if (singular) {
    sol.status = OpfStatus::iteration_limit;
    sol.message = "singular KKT system at iteration " + std::to_string(iter);
    return sol;
  }

  // infeasibility heuristic: feasibility residual large and no longer moving
  const std::size_t lookback = 20;
  bool stagnant = false;
  if (feas_hist.size() > lookback) {
    const Real then = feas_hist[feas_hist.size() - 1 - lookback];
    stagnant = kk.feasibility > 0.99 * then;
  }
  if (kk.feasibility > 1e-4 && stagnant) {
    sol.status = OpfStatus::infeasible;
    sol.message = "no feasible point found; worst violation: " +
                  worst_violation(pr, ev);
  } else {
    sol.status = OpfStatus::iteration_limit;
    std::ostringstream ss;
    ss << "iteration limit (" << opts.max_iter
       << ") reached; residuals: stat " << kk.stationarity << ", feas "
       << kk.feasibility << ", comp " << kk.complementarity;
    sol.message = ss.str();
  }
  return sol;
}

KktResidual kkt_residual(const NetworkCase& net, const OpfSolution& sol,
                         const OpfOptions& opts) {
  Problem pr = build_problem(net, opts);
  if (sol.v_mag.size() != pr.nb || sol.p_gen.size() != pr.ng ||
      static_cast<Index>(sol.constraints.size()) != pr.ni) {
    throw SemanticError("solution does not match the case dimensions");
  }
  Vector x(pr.nx);
  x.segment(pr.ova, pr.nb) = sol.v_ang;
  x.segment(pr.ovm, pr.nb) = sol.v_mag;
  x.segment(pr.opg, pr.ng) = sol.p_gen / pr.base;
  x.segment(pr.oqg, pr.ng) = sol.q_gen / pr.base;

  Vector nu = Vector::Zero(pr.neq);
  nu.head(pr.nb) = sol.lambda_p * (pr.base / pr.cs);
  nu.segment(pr.nb, pr.nb) = sol.lambda_q * (pr.base / pr.cs);
  // duals of the angle reference and fixed-output rows do not enter the
  // stationarity rows of any other variable, so recover them exactly from
  // the stationarity conditions they alone close
  Vector mu(pr.ni);
  for (Index i = 0; i < pr.ni; ++i) {
    if (sol.constraints[i].id != pr.hid[i])
      throw SemanticError("constraint catalog mismatch");
    mu[i] = sol.constraints[i].mu / constraint_mu_scale(pr, i);
  }

  Eval ev = evaluate(pr, x);
  const Vector partial =
      ev.grad + ev.Jg.transpose() * nu + ev.Jh.transpose() * mu;
  Index row = 2 * pr.nb;
  nu[row] = -partial[pr.ova + pr.slack];
  ++row;
  for (Index j : pr.fixp_gens) nu[row++] = -partial[pr.opg + j];
  for (Index j : pr.fixq_gens) nu[row++] = -partial[pr.oqg + j];

  return scaled_residuals(pr, ev, x, nu, mu);
}

ComplexVector injections(const NetworkCase& net, const Vector& v_mag,
                         const Vector& v_ang) {
  if (v_mag.size() != net.bus_count() || v_ang.size() != net.bus_count())
    throw SemanticError("voltage vectors do not match the bus count");
  const Admittance adm = build_admittance(net);
  ComplexVector v(net.bus_count());
  for (Index i = 0; i < net.bus_count(); ++i)
    v[i] = std::polar(v_mag[i], v_ang[i]);
  return bus_injections(adm.ybus, v) * net.base_mva;
}

Real finite_difference_lambda(const NetworkCase& net, int bus_id,
                              const OpfOptions& opts) {
  const Index bi = net.bus_index(bus_id);
  const Real eps = opts.fd_eps_mw;
  auto perturbed = [&](Real delta) {
    NetworkCase c = net;
    c.buses[bi].p_demand += delta;
    return solve_opf(c, opts);
  };
  const OpfSolution plus = perturbed(eps);
  const OpfSolution minus = perturbed(-eps);
  if (!plus.converged() || !minus.converged()) {
    throw SolveError("perturbed solve at bus " + std::to_string(bus_id) +
                     " failed: " +
                     (plus.converged() ? minus.message : plus.message));
  }
  if (plus.binding_set != minus.binding_set) {
    throw BindingSetChangeError(
        "binding set changes across the perturbation at bus " +
        std::to_string(bus_id));
  }
  return (plus.objective - minus.objective) / (2.0 * eps);
}

ValidityRange validity_range(const NetworkCase& net, int bus_id, Real cap_mw,
                             const OpfOptions& opts) {
  if (!(cap_mw > 0.0) || !std::isfinite(cap_mw))
    throw SemanticError("validity-range probe cap must be positive");
  const Index bi = net.bus_index(bus_id);

  const OpfSolution base = solve_opf(net, opts);
  if (!base.converged())
    throw SolveError("base solve failed: " + base.message);

  ValidityRange out;
  out.binding = base.binding_set;

  auto probe = [&](Real t) {
    NetworkCase c = net;
    c.buses[bi].p_demand -= t;
    return solve_opf(c, opts);
  };

  OpfSolution at_cap = probe(cap_mw);
  if (at_cap.converged() && at_cap.binding_set == base.binding_set) {
    out.range_mw = cap_mw;
    out.capped = true;
    return out;
  }

  Real lo = 0.0, hi = cap_mw;
  OpfSolution hi_sol = std::move(at_cap);
  while (hi - lo > opts.range_tol_mw) {
    const Real mid = 0.5 * (lo + hi);
    OpfSolution s = probe(mid);
    if (s.converged() && s.binding_set == base.binding_set) {
      lo = mid;
    } else {
      hi = mid;
      hi_sol = std::move(s);
    }
  }
  out.range_mw = lo;
  out.beyond_feasible = hi_sol.converged();
  if (hi_sol.converged()) {
    for (const ConstraintId& id : base.binding_set) {
      if (!std::binary_search(hi_sol.binding_set.begin(),
                              hi_sol.binding_set.end(), id))
        out.left.push_back(id);
    }
    for (const ConstraintId& id : hi_sol.binding_set) {
      if (!std::binary_search(base.binding_set.begin(),
                              base.binding_set.end(), id))
        out.entered.push_back(id);
    }
  }
  return out;
}

}  // namespace derplan
