#!/usr/bin/env python3
"""Reference external solver backend.

Usage: lp_solve.py MODEL.lp SOLUTION.json

Reads the LP dialect written by the solver interface (see
docs/lp-format.md), solves it with scipy's HiGHS bindings and writes the
solution document described in docs/solver-protocol.md. Continuous models
report row duals (marginals); mixed-integer models report the incumbent
and the solver's dual bound.

Environment: HPT_SOLVER_TIME_LIMIT (seconds), HPT_SOLVER_GAP (relative
MIP gap).
"""

import json
import os
import sys

import numpy as np
from scipy.optimize import milp, LinearConstraint, Bounds

INF = float("inf")


def parse_lp(text):
    sense = 1  # minimize
    objective = {}
    obj_offset = 0.0
    rows = []  # (name, coeffs {var: c}, op, rhs)
    bounds = {}
    integers = set()
    variables = []
    var_set = set()

    def note_var(name):
        if name not in var_set:
            var_set.add(name)
            variables.append(name)

    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        low = line.lower()
        if low in ("minimize", "maximize", "subject to", "bounds", "generals", "end"):
            section = low
            if low == "maximize":
                sense = -1
            continue
        if section in ("minimize", "maximize"):
            # " obj: + 2 x0 - 3 x1 + 5"
            _, _, rest = line.partition(":")
            coeffs, offset = parse_terms(rest)
            for v, c in coeffs.items():
                note_var(v)
                objective[v] = objective.get(v, 0.0) + c
            obj_offset += offset
        elif section == "subject to":
            name, _, rest = line.partition(":")
            for op in ("<=", ">=", "="):
                lhs, sep, rhs = rest.partition(f" {op} ")
                if sep:
                    coeffs, offset = parse_terms(lhs)
                    for v in coeffs:
                        note_var(v)
                    rows.append((name.strip(), coeffs, op, float(rhs) - offset))
                    break
        elif section == "bounds":
            toks = line.split()
            if len(toks) == 2 and toks[1] == "free":
                note_var(toks[0])
                bounds[toks[0]] = (-INF, INF)
            elif len(toks) == 5 and toks[1] == "<=" and toks[3] == "<=":
                note_var(toks[2])
                bounds[toks[2]] = (float(toks[0]), float(toks[4]))
            elif len(toks) == 3 and toks[1] == ">=":
                note_var(toks[0])
                bounds[toks[0]] = (float(toks[2]), INF)
            elif len(toks) == 3 and toks[1] == "<=":
                note_var(toks[0])
                bounds[toks[0]] = (-INF, float(toks[2]))
        elif section == "generals":
            note_var(line)
            integers.add(line)
    return sense, objective, obj_offset, rows, bounds, integers, variables


def parse_terms(text):
    """Parses '+ 2 x0 - 3.5 x1 + 7' into ({x0: 2, x1: -3.5}, 7.0)."""
    toks = text.split()
    coeffs = {}
    offset = 0.0
    i = 0
    while i < len(toks):
        sign = 1.0
        if toks[i] == "+":
            i += 1
        elif toks[i] == "-":
            sign = -1.0
            i += 1
        mag = float(toks[i].replace("inf", "1e308"))
        i += 1
        if i < len(toks) and toks[i] not in ("+", "-"):
            coeffs[toks[i]] = coeffs.get(toks[i], 0.0) + sign * mag
            i += 1
        else:
            offset += sign * mag
    return coeffs, offset


def main():
    lp_path, out_path = sys.argv[1], sys.argv[2]
    with open(lp_path) as f:
        sense, objective, obj_offset, rows, bounds, integers, variables = parse_lp(f.read())
    index = {v: i for i, v in enumerate(variables)}
    n = len(variables)
    c = np.zeros(n)
    for v, coef in objective.items():
        c[index[v]] = sense * coef

    lo = np.zeros(n)
    hi = np.full(n, INF)
    for v, (l, h) in bounds.items():
        lo[index[v]], hi[index[v]] = l, h

    a_rows, row_lo, row_hi, row_names = [], [], [], []
    for name, coeffs, op, rhs in rows:
        row = np.zeros(n)
        for v, coef in coeffs.items():
            row[index[v]] = coef
        a_rows.append(row)
        row_names.append(name)
        if op == "<=":
            row_lo.append(-INF)
            row_hi.append(rhs)
        elif op == ">=":
            row_lo.append(rhs)
            row_hi.append(INF)
        else:
            row_lo.append(rhs)
            row_hi.append(rhs)
    a = np.array(a_rows) if a_rows else np.zeros((0, n))

    time_limit = float(os.environ.get("HPT_SOLVER_TIME_LIMIT", "0") or 0) or None
    gap = float(os.environ.get("HPT_SOLVER_GAP", "0") or 0)

    doc = {"status": "optimal", "values": {}, "duals": None, "best_bound": None, "objective": 0.0}
    if integers:
        integrality = np.array([1 if v in integers else 0 for v in variables])
        opts = {}
        if time_limit:
            opts["time_limit"] = time_limit
        if gap:
            opts["mip_rel_gap"] = gap
        res = milp(
            c,
            constraints=LinearConstraint(a, row_lo, row_hi) if len(a_rows) else (),
            bounds=Bounds(lo, hi),
            integrality=integrality,
            options=opts,
        )
        if res.status == 2:
            doc["status"] = "infeasible"
        elif res.x is None:
            doc["status"] = "limit"
        else:
            doc["status"] = "optimal" if res.status == 0 else "feasible"
            doc["values"] = {v: float(res.x[index[v]]) for v in variables}
            doc["objective"] = sense * (float(res.fun) + 0.0) + obj_offset
            bound = getattr(res, "mip_dual_bound", None)
            doc["best_bound"] = sense * float(bound) + obj_offset if bound is not None else None
    else:
        res = solve_lp(c, a, row_lo, row_hi, lo, hi, time_limit)
        if res.status == 2:
            doc["status"] = "infeasible"
        elif res.status == 3:
            doc["status"] = "unbounded"
        elif res.x is None:
            doc["status"] = "limit"
        else:
            doc["status"] = "optimal"
            doc["values"] = {v: float(res.x[index[v]]) for v in variables}
            doc["objective"] = sense * float(res.fun) + obj_offset
            doc["best_bound"] = doc["objective"]
            marginals = res.marginals
            doc["duals"] = {
                row_names[i]: sense * float(marginals[i]) for i in range(len(row_names))
            }

    with open(out_path, "w") as f:
        json.dump(doc, f)


def solve_lp(c, a, row_lo, row_hi, lo, hi, time_limit):
    """LP via linprog/highs with general two-sided rows, reporting row
    marginals in original row order."""
    import scipy.optimize as opt

    n = c.shape[0]
    a_ub, b_ub, ub_map = [], [], []  # (row, sign)
    a_eq, b_eq, eq_map = [], [], []
    for i in range(a.shape[0]):
        if row_lo[i] == row_hi[i]:
            a_eq.append(a[i])
            b_eq.append(row_lo[i])
            eq_map.append(i)
        else:
            if row_hi[i] != INF:
                a_ub.append(a[i])
                b_ub.append(row_hi[i])
                ub_map.append((i, 1.0))
            if row_lo[i] != -INF:
                a_ub.append(-a[i])
                b_ub.append(-row_lo[i])
                ub_map.append((i, -1.0))
    options = {"presolve": True}
    if time_limit:
        options["time_limit"] = time_limit
    res = opt.linprog(
        c,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=list(zip(lo, hi)),
        method="highs",
        options=options,
    )
    marginals = np.zeros(a.shape[0])
    if res.x is not None and res.status == 0:
        if a_ub:
            for (orig, sign), m in zip(ub_map, res.ineqlin.marginals):
                marginals[orig] += sign * m
        if a_eq:
            for orig, m in zip(eq_map, res.eqlin.marginals):
                marginals[orig] += m
    res.marginals = marginals
    return res


if __name__ == "__main__":
    main()
