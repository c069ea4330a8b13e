"""Simultaneous complex polynomial root finding (Aberth-Ehrlich iteration).

Univariate polynomials are given by ascending coefficient arrays.  All
iterations are deterministic: fixed initial configuration, fixed sweep order.
"""
from __future__ import annotations

import numpy as np

from .errors import RootSolveFailure

_TWO_PI = 2.0 * np.pi


def polyval(coeffs: np.ndarray, z):
    """Horner evaluation of an ascending-coefficient polynomial."""
    acc = np.zeros_like(np.asarray(z), dtype=complex) if np.ndim(z) else 0j
    for c in coeffs[::-1]:
        acc = acc * z + c
    return acc


def polyder(coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs, dtype=complex)
    if len(c) <= 1:
        return np.zeros(1, dtype=complex)
    return c[1:] * np.arange(1, len(c))


def _trim(coeffs: np.ndarray, tol: float = 0.0) -> np.ndarray:
    c = np.asarray(coeffs, dtype=complex).ravel()
    k = len(c)
    scale = np.max(np.abs(c)) if len(c) else 0.0
    while k > 1 and abs(c[k - 1]) <= tol * scale:
        k -= 1
    return c[:k]


def aberth_roots(coeffs, tol: float = 1e-13, max_iter: int = 300,
                 warm_start=None) -> np.ndarray:
    """All complex roots of a polynomial, via Aberth-Ehrlich iteration.

    ``warm_start`` (previous roots) makes this a continuation step: the
    iteration then refines the supplied configuration instead of the default
    scaled-circle initialization.  Roots are returned unordered; callers sort.
    """
    c = _trim(np.asarray(coeffs, dtype=complex))
    n = len(c) - 1
    if n <= 0:
        return np.zeros(0, dtype=complex)
    c = c / c[-1]
    if n == 1:
        return np.array([-c[0]], dtype=complex)
    dc = polyder(c)

    if warm_start is not None and len(warm_start) == n:
        z = np.asarray(warm_start, dtype=complex).copy()
    else:
        # Cauchy-type radius, centered at the root centroid, slightly
        # detuned from symmetry so symmetric polynomials do not stall.
        center = -c[-2] / n
        radius = 1.0 + max(abs(x) for x in c[:-1])
        angles = _TWO_PI * (np.arange(n) + 0.25) / n + 0.41
        z = center + radius * 0.8 * np.exp(1j * angles)

    ok = False
    for _ in range(max_iter):
        pz = polyval(c, z)
        dpz = polyval(dc, z)
        # Newton ratio with a guard against exact critical points.
        dpz = np.where(np.abs(dpz) < 1e-300, 1e-300, dpz)
        w = pz / dpz
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        inv = 1.0 / diff
        np.fill_diagonal(inv, 0.0)
        s = inv.sum(axis=1)
        denom = 1.0 - w * s
        denom = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
        step = w / denom
        z = z - step
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(z))):
            ok = True
            break
    if not ok:
        # Multiple-root clusters converge slowly; accept if residuals are
        # tiny relative to the coefficient scale, else fail loudly.
        resid = np.max(np.abs(polyval(c, z)))
        if resid > 1e-8 * (1.0 + np.max(np.abs(z)) ** n):
            raise RootSolveFailure(
                f"Aberth iteration did not converge (residual {resid:.2e})")
    return newton_polish(c, z)


def newton_polish(coeffs, roots, iters: int = 4) -> np.ndarray:
    """A few Newton steps per root; safe at simple roots, harmless at clusters."""
    c = np.asarray(coeffs, dtype=complex)
    dc = polyder(c)
    z = np.asarray(roots, dtype=complex).copy()
    for _ in range(iters):
        dpz = polyval(dc, z)
        mask = np.abs(dpz) > 1e-250
        step = np.zeros_like(z)
        step[mask] = polyval(c, z[mask]) / dpz[mask]
        z = z - step
    return z


def sort_key(z: complex):
    """Fixed total order on complex numbers: lexicographic (Re, Im)."""
    return (z.real, z.imag)


def sorted_roots(roots) -> np.ndarray:
    return np.array(sorted(np.asarray(roots, dtype=complex), key=sort_key))


def cluster_roots(roots, radius: float):
    """Group roots into clusters of pairwise distance <= radius.

    Returns (representatives, multiplicities, degenerate) where degenerate is
    True when any cluster holds more than one root.
    """
    pts = list(np.asarray(roots, dtype=complex))
    reps, mults = [], []
    used = [False] * len(pts)
    order = sorted(range(len(pts)), key=lambda k: sort_key(pts[k]))
    for k in order:
        if used[k]:
            continue
        group = [k]
        used[k] = True
        for m in order:
            if not used[m] and abs(pts[m] - pts[k]) <= radius:
                group.append(m)
                used[m] = True
        reps.append(sum(pts[g] for g in group) / len(group))
        mults.append(len(group))
    degenerate = any(m > 1 for m in mults)
    return np.array(reps, dtype=complex), mults, degenerate
