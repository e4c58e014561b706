#!/usr/bin/env python3
"""Solve an SDPA sparse (.dat-s) feasibility problem with cvxpy.

The file encodes  sum_i y_i F_i - F_0 >= 0  blockwise. The script maximizes a
common margin t with  sum_i y_i F_i - F_0 >= t I  and |y_i| <= bound, then
writes the solution as an SDPA-style ``xVec`` line so that it can be fed
back to ``delaylmi check-certificate`` or the acceptance suite.

Usage: solve_sdpa.py problem.dat-s solution.sol [--solver CLARABEL]
"""

import argparse
import sys

import cvxpy as cp
import numpy as np


def read_sdpa(path):
    with open(path) as fh:
        lines = [l.strip() for l in fh if l.strip() and l.strip()[0] not in '"*']
    tokens = lambda s: s.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ").split()
    n_vars = int(tokens(lines[0])[0])
    n_blocks = int(tokens(lines[1])[0])
    sizes = [abs(int(t)) for t in tokens(lines[2])[:n_blocks]]
    mats = [[np.zeros((s, s)) for s in sizes] for _ in range(n_vars + 1)]
    for line in lines[4:]:
        m, b, i, j, v = tokens(line)[:5]
        m, b, i, j, v = int(m), int(b) - 1, int(i) - 1, int(j) - 1, float(v)
        mats[m][b][i, j] = v
        mats[m][b][j, i] = v
    return n_vars, sizes, mats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("problem")
    ap.add_argument("solution")
    ap.add_argument("--solver", default="CLARABEL")
    ap.add_argument("--bound", type=float, default=1e3)
    args = ap.parse_args()

    n_vars, sizes, mats = read_sdpa(args.problem)
    y = cp.Variable(n_vars)
    t = cp.Variable()
    cons = [cp.abs(y) <= args.bound, t <= 1.0]
    for b, s in enumerate(sizes):
        expr = -mats[0][b] + sum(y[k] * mats[k + 1][b] for k in range(n_vars) if np.any(mats[k + 1][b]))
        expr = (expr + expr.T) / 2
        cons.append(expr - t * np.eye(s) >> 0)
    prob = cp.Problem(cp.Maximize(t), cons)
    prob.solve(solver=args.solver)
    if prob.status not in ("optimal", "optimal_inaccurate") or t.value is None or t.value <= 0:
        print(f"no strictly feasible point: status={prob.status} t={t.value}", file=sys.stderr)
        return 2
    with open(args.solution, "w") as fh:
        fh.write(f'"solved with cvxpy {cp.__version__} / {args.solver}, margin t = {t.value:.6e}\n')
        fh.write("xVec = \n")
        fh.write("{" + ",".join(f"{v:.17e}" for v in y.value) + "}\n")
    print(f"status={prob.status} margin={t.value:.6e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
