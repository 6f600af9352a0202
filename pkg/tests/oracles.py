"""Independent reference computations used only by the test-suite."""

from __future__ import annotations

import itertools
import math

import numpy as np

from tariffsim.lp_engine import LinearProgram


def random_lp(
    rng: np.random.Generator, max_n: int = 6, max_rows: int = 6, degenerate: bool = False
) -> LinearProgram:
    """Small LP with finite variable bounds (hence never unbounded).

    Rows are drawn around a common interior point so most instances are
    feasible; about one in eight gets an independently shifted row.  With
    ``degenerate`` all data are small integers, which makes ties and
    degenerate vertices common.
    """
    n = int(rng.integers(1, max_n + 1))
    m = int(rng.integers(1, max_rows + 1))
    if degenerate:
        lower = rng.integers(-2, 1, n).astype(float)
        upper = lower + rng.integers(0, 4, n)
        c = rng.integers(-3, 4, n).astype(float)
    else:
        lower = rng.uniform(-5, 1, n).round(2)
        upper = lower + rng.uniform(0, 6, n).round(2)
        c = rng.uniform(-5, 5, n).round(2)
    lp = LinearProgram(c, lower, upper)
    x0 = rng.uniform(lower, upper)
    if degenerate:
        x0 = np.round(x0)
    for _ in range(m):
        k = int(rng.integers(1, n + 1))
        cols = np.sort(rng.choice(n, size=k, replace=False))
        if degenerate:
            vals = rng.integers(-3, 4, k).astype(float)
            slack = float(rng.integers(0, 3))
        else:
            vals = rng.uniform(-4, 4, k).round(2)
            slack = abs(rng.normal(0, 1.5))
        if rng.random() < 0.125:
            slack = -slack - 1.0
        sense = str(rng.choice(["<=", ">=", "="], p=[0.45, 0.4, 0.15]))
        base = float(vals @ x0[cols])
        rhs = {"<=": base + slack, ">=": base - slack, "=": base}[sense]
        if sense == "=" and slack < 0:
            rhs = base + slack
        lp.add_row(cols, vals, sense, round(rhs, 2))
    return lp


def vertex_enumeration(lp: LinearProgram, tol: float = 1e-7):
    """Minimum of ``lp`` over all basic feasible points, or None if infeasible.

    Every choice of ``n`` linearly independent active hyperplanes (rows or
    variable bounds) is solved; feasible intersection points are compared.
    """
    n = lp.n
    A = lp.matrix().toarray()
    row_lo, row_hi = lp.row_bounds()
    planes, offsets = [], []
    for i in range(lp.row_count):
        planes.append(A[i])
        offsets.append(lp.rhs[i])
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        for bound in (lp.lower[j], lp.upper[j]):
            if math.isfinite(bound):
                planes.append(e)
                offsets.append(bound)
    P = np.array(planes)
    o = np.array(offsets)
    combos = np.array(list(itertools.combinations(range(len(P)), n)))
    if combos.size == 0:
        return None
    M = P[combos]
    rhs = o[combos]
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-9
    if not ok.any():
        return None
    pts = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    act = pts @ A.T
    feas = (
        np.all(pts >= lp.lower - tol, axis=1)
        & np.all(pts <= lp.upper + tol, axis=1)
        & np.all(act >= row_lo - tol, axis=1)
        & np.all(act <= row_hi + tol, axis=1)
    )
    if not feas.any():
        return None
    values = pts[feas] @ lp.c
    return float(values.min())


def brute_force_min(f, grid):
    """Minimum of ``f`` over an iterable of candidate points."""
    best, arg = math.inf, None
    for point in grid:
        value = f(point)
        if value < best:
            best, arg = value, point
    return best, arg


def golden_section(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 500) -> float:
    """Minimizer of a unimodal scalar function on [lo, hi]."""
    ratio = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - ratio * (b - a)
    d = a + ratio * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - ratio * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + ratio * (b - a)
            fd = f(d)
    return (a + b) / 2


def bisection(f, lo: float, hi: float, tol: float = 1e-13) -> float:
    """Root of an increasing function on [lo, hi]."""
    flo = f(lo)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
        fm = f(mid)
        if (fm > 0) == (flo > 0) and fm != 0:
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
