"""Dense dual active-set solver for tiny strictly convex QPs.

Solves   min_x  0.5 x^T G x + a^T x   s.t.  C x >= b

with G symmetric positive definite.  Starts from the unconstrained minimum
and adds violated constraints one at a time (Goldfarb-Idnani); at each
iteration the reduced operators are rebuilt by dense factorization, which
is the right trade for n <= 5 variables and m <= 14 rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QPInfeasibleError(Exception):
    pass


@dataclass
class QPResult:
    x: np.ndarray
    active: list
    multipliers: np.ndarray  # full-length, zero on inactive rows
    iterations: int


def solve_qp(G, a, C, b, tol: float = 1e-11, max_iter: int = 200) -> QPResult:
    G = np.asarray(G, dtype=float)
    a = np.asarray(a, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    b = np.asarray(b, dtype=float)
    n = a.size
    m = b.size

    Ginv = np.linalg.inv(G)
    x = -Ginv @ a
    active: list[int] = []
    u = np.zeros(0)

    it = 0
    while it < max_iter:
        it += 1
        s = C @ x - b
        p = int(np.argmin(s))
        if s[p] >= -tol * max(1.0, np.abs(b).max() if m else 1.0):
            lam = np.zeros(m)
            lam[active] = u
            return QPResult(x, active, lam, it)

        n_p = C[p]
        u_p = 0.0
        while True:
            if active:
                N = C[active].T
                M = N.T @ Ginv @ N
                Nstar = np.linalg.solve(M, N.T @ Ginv)
                H = Ginv @ (np.eye(n) - N @ Nstar)
                r = Nstar @ n_p
            else:
                H = Ginv
                r = np.zeros(0)
            z = H @ n_p

            t1 = np.inf
            k_drop = -1
            for idx in range(len(active)):
                if r[idx] > tol:
                    cand = u[idx] / r[idx]
                    if cand < t1:
                        t1 = cand
                        k_drop = idx

            znp = z @ n_p
            s_p = n_p @ x - b[p]
            t2 = -s_p / znp if znp > tol else np.inf

            t = min(t1, t2)
            if not np.isfinite(t):
                raise QPInfeasibleError(f"constraint {p} incompatible with the active set")

            if np.isinf(t2):
                # Dual-only step: shrink multipliers and drop a constraint.
                u = u - t * r
                u_p += t
                active.pop(k_drop)
                u = np.delete(u, k_drop)
                continue

            x = x + t * z
            u = u - t * r
            u_p += t
            if t == t2:
                active.append(p)
                u = np.append(u, u_p)
                break
            active.pop(k_drop)
            u = np.delete(u, k_drop)

    raise QPInfeasibleError("active-set iteration limit exceeded")
