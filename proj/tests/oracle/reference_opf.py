#!/usr/bin/env python3
"""Independent AC-OPF reference used to freeze golden solutions.

Solves the polar power-flow OPF with scipy's trust-constr on a textbook
formulation (variables theta, V, Pg, Qg; bus-wise balance equalities;
squared apparent-flow limits). Derivatives are finite-differenced by
scipy, so nothing here shares code or formulas with the C++ solver
beyond the physics itself.

Usage: reference_opf.py CASE.m OUT.json [load_scale]
"""

import json
import math
import re
import sys

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, NonlinearConstraint, minimize


def parse_matrix(text, name):
    m = re.search(r"mpc\." + name + r"\s*=\s*\[(.*?)\];", text, re.S)
    if not m:
        raise ValueError(f"no mpc.{name} block")
    rows = []
    for line in m.group(1).splitlines():
        line = line.split("%")[0].strip().rstrip(";")
        if not line:
            continue
        rows.append([float(tok) for tok in line.split()])
    return rows


def load_case(path, scale=1.0):
    text = open(path).read()
    text = re.sub(r"%.*", "", text) + "\n%"  # keep parse_matrix regex simple
    base = float(re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", text).group(1))
    bus = parse_matrix(text, "bus")
    gen = parse_matrix(text, "gen")
    branch = parse_matrix(text, "branch")
    gencost = parse_matrix(text, "gencost")
    for row in bus:
        row[2] *= scale
        row[3] *= scale
    return base, bus, gen, branch, gencost


def build_admittance(base, bus, branch, bus_pos):
    n = len(bus)
    Y = np.zeros((n, n), dtype=complex)
    ends = []
    for row in branch:
        f, t = bus_pos[int(row[0])], bus_pos[int(row[1])]
        ys = 1.0 / complex(row[2], row[3])
        bc = complex(0.0, row[4] / 2.0)
        tap = row[8] if row[8] != 0.0 else 1.0
        shift = math.radians(row[9])
        tc = tap * complex(math.cos(shift), math.sin(shift))
        yff = (ys + bc) / (tc * tc.conjugate())
        yft = -ys / tc.conjugate()
        ytf = -ys / tc
        ytt = ys + bc
        Y[f, f] += yff
        Y[f, t] += yft
        Y[t, f] += ytf
        Y[t, t] += ytt
        ends.append((f, t, yff, yft, ytf, ytt, row[5] / base))
    for i, row in enumerate(bus):
        Y[i, i] += complex(row[4], row[5]) / base
    return Y, ends


def main():
    case_path, out_path = sys.argv[1], sys.argv[2]
    scale = float(sys.argv[3]) if len(sys.argv) > 3 else 1.0
    base, bus, gen, branch, gencost = load_case(case_path, scale)
    n, ng = len(bus), len(gen)
    bus_pos = {int(row[0]): i for i, row in enumerate(bus)}
    slack = next(i for i, row in enumerate(bus) if int(row[1]) == 3)
    Y, ends = build_admittance(base, bus, branch, bus_pos)
    G, B = Y.real, Y.imag

    pd = np.array([row[2] for row in bus]) / base
    qd = np.array([row[3] for row in bus]) / base
    vmin = np.array([row[12] for row in bus])
    vmax = np.array([row[11] for row in bus])
    gbus = np.array([bus_pos[int(row[0])] for row in gen])
    pmin = np.array([row[9] for row in gen]) / base
    pmax = np.array([row[8] for row in gen]) / base
    qmin = np.array([row[4] for row in gen]) / base
    qmax = np.array([row[3] for row in gen]) / base
    c2 = np.array([row[4] if int(row[3]) == 3 else 0.0 for row in gencost])
    c1 = np.array([row[5] if int(row[3]) == 3 else row[4] for row in gencost])
    c0 = np.array([row[6] if int(row[3]) == 3 else row[5] for row in gencost])

    # x = [theta, v, pg, qg]
    oth, ov, opg, oqg = 0, n, 2 * n, 2 * n + ng
    nx = 2 * n + 2 * ng

    def split(x):
        return x[oth : oth + n], x[ov : ov + n], x[opg : opg + ng], x[oqg:]

    def objective(x):
        pg = x[opg : opg + ng] * base
        return float(np.sum(c2 * pg * pg + c1 * pg + c0))

    def objective_grad(x):
        g = np.zeros(nx)
        pg = x[opg : opg + ng] * base
        g[opg : opg + ng] = (2.0 * c2 * pg + c1) * base
        return g

    def balance(x):
        th, v, pg, qg = split(x)
        vc = v * np.exp(1j * th)
        s = vc * np.conj(Y @ vc)
        out = np.empty(2 * n)
        out[:n] = s.real + pd
        out[n:] = s.imag + qd
        np.subtract.at(out[:n], gbus, pg)
        np.subtract.at(out[n:], gbus, qg)
        return out

    def balance_jac(x):
        # classic scalar partials: dP_i/dth_k = V_i V_k (G_ik sin th_ik -
        # B_ik cos th_ik) for k != i, and so on; th_ik = th_i - th_k
        th, v, pg, qg = split(x)
        vc = v * np.exp(1j * th)
        s = vc * np.conj(Y @ vc)
        p, q = s.real, s.imag
        dth = th[:, None] - th[None, :]
        ct, st = np.cos(dth), np.sin(dth)
        vv = v[:, None] * v[None, :]
        dp_dth = vv * (G * st - B * ct)
        np.fill_diagonal(dp_dth, -q - B.diagonal() * v * v)
        dq_dth = -vv * (G * ct + B * st)
        np.fill_diagonal(dq_dth, p - G.diagonal() * v * v)
        dp_dv = v[:, None] * (G * ct + B * st)
        np.fill_diagonal(dp_dv, p / v + G.diagonal() * v)
        dq_dv = v[:, None] * (G * st - B * ct)
        np.fill_diagonal(dq_dv, q / v - B.diagonal() * v)
        jac = np.zeros((2 * n, nx))
        jac[:n, oth : oth + n] = dp_dth
        jac[:n, ov : ov + n] = dp_dv
        jac[n:, oth : oth + n] = dq_dth
        jac[n:, ov : ov + n] = dq_dv
        for g, b in enumerate(gbus):
            jac[b, opg + g] -= 1.0
            jac[n + b, oqg + g] -= 1.0
        return jac

    e_f = np.array([e[0] for e in ends])
    e_t = np.array([e[1] for e in ends])
    a_ff = np.array([e[2] for e in ends])
    a_ft = np.array([e[3] for e in ends])
    a_tf = np.array([e[4] for e in ends])
    a_tt = np.array([e[5] for e in ends])

    def flow_sq(x):
        th, v, _, _ = split(x)
        vc = v * np.exp(1j * th)
        sf = vc[e_f] * np.conj(a_ff * vc[e_f] + a_ft * vc[e_t])
        st = vc[e_t] * np.conj(a_tf * vc[e_f] + a_tt * vc[e_t])
        vals = np.empty(2 * len(ends))
        vals[0::2] = np.abs(sf) ** 2
        vals[1::2] = np.abs(st) ** 2
        return vals

    lo = np.concatenate([np.full(n, -np.pi), vmin, pmin, qmin])
    hi = np.concatenate([np.full(n, np.pi), vmax, pmax, qmax])
    lo[slack] = hi[slack] = 0.0
    x0 = np.concatenate(
        [np.zeros(n), 0.5 * (vmin + vmax), 0.5 * (pmin + pmax), 0.5 * (qmin + qmax)]
    )

    limits = np.array([e[6] for e in ends])
    cons = [NonlinearConstraint(balance, 0.0, 0.0, jac=balance_jac)]
    limited = limits > 0.0
    if limited.any():
        caps = np.repeat(limits, 2) ** 2
        mask = np.repeat(limited, 2)

        def flows(x, mask=mask):
            return flow_sq(x)[mask]

        cons.append(NonlinearConstraint(flows, -np.inf, caps[mask], jac="3-point"))

    res = minimize(
        objective,
        x0,
        jac=objective_grad,
        bounds=Bounds(lo, hi),
        constraints=cons,
        method="trust-constr",
        options={"gtol": 1e-10, "xtol": 1e-13, "maxiter": 20000, "verbose": 1},
    )
    if not res.success and res.constr_violation > 1e-8:
        raise SystemExit(f"reference solve failed: {res.message}")

    th, v, pg, qg = split(res.x)
    # trust-constr stationarity is grad f - sum J^T v = 0, so the balance
    # multipliers ARE d(cost)/d(demand); checked against the analytic
    # two-bus case (uniform 20 $/MWh)
    lam = res.v[0]
    lam_p = lam[:n] / base
    lam_q = lam[n:] / base

    out = {
        "case": case_path.split("/")[-1],
        "load_scale": scale,
        "base_mva": base,
        "objective": res.fun,
        "constr_violation": float(res.constr_violation),
        "optimality": float(res.optimality),
        "bus_ids": [int(row[0]) for row in bus],
        "v_mag": [round(val, 10) for val in v],
        "v_ang_deg": [round(math.degrees(val), 10) for val in th],
        "p_gen_mw": [round(val * base, 10) for val in pg],
        "q_gen_mvar": [round(val * base, 10) for val in qg],
        "lambda_p": [round(val, 10) for val in lam_p],
        "lambda_q": [round(val, 10) for val in lam_q],
    }
    with open(out_path, "w") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")
    print(f"{out['case']}: objective {res.fun:.6f} viol {res.constr_violation:.3e}")


if __name__ == "__main__":
    main()
