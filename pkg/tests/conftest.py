import itertools
import numpy as np
import pytest

from physmotion.character import reference_human


@pytest.fixture(scope="session")
def human():
    return reference_human()


def pendulum_doc(mass=2.0, length=0.5, axis=(0.0, 1.0, 0.0)):
    """Floating base plus one hinge; the child link is a point-like mass at its joint."""
    I = 0.01 * np.eye(3)
    return {
        "schema_version": 1, "name": "pendulum",
        "joints": [{"name": "base", "parent": None, "offset": [0, 0, 0], "axes": []},
                   {"name": "arm", "parent": "base", "offset": [0, 0, 0], "axes": [list(axis)]},
                   {"name": "tip", "parent": "arm", "offset": [length, 0, 0], "axes": []}],
        "links": [{"name": "base", "mass": 1.0, "com": [0, 0, 0], "inertia": I.tolist()},
                  {"name": "arm", "mass": mass, "com": [length / 2, 0, 0], "inertia": I.tolist()},
                  {"name": "tip", "mass": 0.1, "com": [0, 0, 0], "inertia": I.tolist()}],
    }


def brute_force_qp(H, g, A, lo, hi):
    """Exhaustive active-set enumeration.

    Every face minimiser that is feasible is an upper bound on the optimum
    and the optimum itself is one of them, so the smallest is exact.
    """
    rows, rhs = [], []
    for i in range(len(A)):
        if np.isfinite(lo[i]):
            rows.append(A[i]), rhs.append(lo[i])
        if np.isfinite(hi[i]):
            rows.append(A[i]), rhs.append(hi[i])
    n = len(g)
    rows, rhs = np.array(rows).reshape(-1, n), np.array(rhs)
    best, bx = np.inf, None
    for k in range(len(rows) + 1):
        for S in itertools.combinations(range(len(rows)), k):
            S = list(S)
            N = rows[S]
            K = np.block([[H, N.T], [N, np.zeros((k, k))]])
            x = np.linalg.lstsq(K, np.concatenate([-g, rhs[S]]), rcond=None)[0][:n]
            ax = A @ x
            if np.all(ax >= lo - 1e-9) and np.all(ax <= hi + 1e-9):
                f = 0.5 * x @ H @ x + g @ x
                if f < best:
                    best, bx = f, x
    return best, bx


def random_qp(rng):
    """Small convex QP (possibly singular H) with a feasible point and a bounded optimum."""
    n = int(rng.integers(1, 7))
    k = int(rng.integers(0, 7))
    r = n if rng.random() < 0.6 else int(rng.integers(1, n + 1))
    B = rng.standard_normal((r, n))
    H = B.T @ B
    # keep g in range(H) when H is singular so the objective is bounded below
    g = H @ rng.standard_normal(n) if r < n else rng.standard_normal(n) * 3
    A = rng.standard_normal((k, n))
    ax = A @ rng.standard_normal(n)
    lo = ax - np.where(rng.random(k) < 0.3, 0, rng.random(k))
    hi = ax + rng.random(k) * 2
    hi[rng.random(k) < 0.5] = np.inf
    lo[rng.random(k) < 0.2] = -np.inf
    return H, g, A, lo, hi


def exact_objective(H, g, x):
    """0.5 x'Hx + g'x as an exact Fraction, free of cancellation error."""
    from fractions import Fraction as F
    xf = [F(float(v)) for v in x]
    n = len(xf)
    quad = sum(F(float(H[i][j])) * xf[i] * xf[j] for i in range(n) for j in range(n))
    return quad / 2 + sum(F(float(g[i])) * xf[i] for i in range(n))
