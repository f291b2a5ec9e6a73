"""Exact one-dimensional integrals of the kernel |x-y|^{-1-s} and its images.

Interval-pair interactions integrate in closed form through the double
antiderivative Psi2(d) = -|d|^{1-s}/(s(1-s)).  On the circle the lattice sum
sum_k |d+kL|^{-1-s} and its antiderivatives resum exactly with the Hurwitz
zeta function; scipy's zeta needs exponent > 1, so we carry a small
Euler-Maclaurin implementation valid for every real exponent != 1.
"""

from __future__ import annotations

import math

import numpy as np

# Bernoulli numbers B_2, B_4, ..., B_16
_BERN = (1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730, 7.0 / 6, -3617.0 / 510)


def hurwitz_zeta(sig: float, q, nterms: int = 24, ncorr: int = 8):
    """Hurwitz zeta(sig, q) for real sig != 1, q > 0 (Euler-Maclaurin)."""
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("hurwitz_zeta needs q > 0")
    n = np.arange(nterms)
    main = ((n.reshape((-1,) + (1,) * q.ndim) + q) ** (-sig)).sum(axis=0)
    Nq = nterms + q
    out = main + Nq ** (1.0 - sig) / (sig - 1.0) + 0.5 * Nq ** (-sig)
    rising = sig
    for j in range(1, ncorr + 1):
        out = out + _BERN[j - 1] / math.factorial(2 * j) * rising * Nq ** (-sig - 2 * j + 1)
        rising *= (sig + 2 * j - 1) * (sig + 2 * j)
    return out if out.ndim else float(out)


def psi2_line(d, s: float):
    """Double antiderivative of |d|^{-1-s} on the line: -|d|^{1-s}/(s(1-s))."""
    d = np.asarray(d, dtype=float)
    out = -np.abs(d) ** (1.0 - s) / (s * (1.0 - s))
    return out if out.ndim else float(out)


def psi2_circle(d, s: float, L: float):
    """Double antiderivative of sum_k |d+kL|^{-1-s}, valid for |d| <= L.

    Exact Hurwitz-zeta resummation of the image series; the boundary values
    d = +-L are finite (the zeta argument tends to 0 with negative exponent).
    """
    d = np.asarray(d, dtype=float)
    if np.any(np.abs(d) > L * (1 + 1e-12)):
        raise ValueError("psi2_circle needs |d| <= L")
    q1 = np.maximum(1.0 + d / L, 1e-300)
    q2 = np.maximum(1.0 - d / L, 1e-300)
    z = hurwitz_zeta(s - 1.0, q1) + hurwitz_zeta(s - 1.0, q2)
    out = psi2_line(d, s) + L ** (1.0 - s) * z / (s * (s - 1.0))
    return out if np.ndim(out) else float(out)


def psi1_circle(d, s: float, L: float):
    """First antiderivative of sum_k |d+kL|^{-1-s} (odd; valid 0 < |d| <= L)."""
    d = np.asarray(d, dtype=float)
    t = -np.sign(d) * np.abs(d) ** (-s) / s
    q1 = np.maximum(1.0 + d / L, 1e-300)
    q2 = np.maximum(1.0 - d / L, 1e-300)
    z = hurwitz_zeta(s, q1) - hurwitz_zeta(s, q2)
    out = t - L ** (-s) * z / s
    return out if np.ndim(out) else float(out)


def arc_nmc_htilde(arcs, p: float, s: float, L: float) -> float:
    """Exact PV curvature -pv int (chi_E - chi_{E^c}) K at an endpoint p.

    E is the arc union on the circle of length L; K the image-summed kernel
    with alpha_{1,s}.  The PV divergences of the E and E^c sides cancel in the
    antiderivative expression, leaving endpoint differences only.
    """
    from .constants import alpha

    total = 0.0
    for (a, b) in arcs:
        total += _signed_piece(a - p, b - p, L, s)
    for (c, dd) in arc_complement(arcs, L):
        total -= _signed_piece(c - p, dd - p, L, s)
    return -alpha(1, s) * total


def _signed_piece(a: float, b: float, L: float, s: float) -> float:
    """int_a^b image-kernel(d) dd with the PV convention when a or b hits 0."""
    length = b - a
    mid = 0.5 * (a + b)
    mid -= L * math.floor(mid / L + 0.5)
    a, b = mid - 0.5 * length, mid + 0.5 * length
    hi = psi1_circle(b, s, L) if abs(b) > 1e-13 * L else 0.0
    lo = psi1_circle(a, s, L) if abs(a) > 1e-13 * L else 0.0
    return float(hi - lo)


def lattice_power_sum(d, s: float, L: float):
    """sum_k |d+kL|^{-1-s} exactly, for 0 < |d| < L."""
    d = np.asarray(d, dtype=float)
    z = hurwitz_zeta(1.0 + s, 1.0 + d / L) + hurwitz_zeta(1.0 + s, 1.0 - d / L)
    return np.abs(d) ** (-1.0 - s) + L ** (-1.0 - s) * z


def interval_pair_integral(a: float, b: float, c: float, d: float, s: float,
                           L: float | None = None) -> float:
    """int_a^b int_c^d phi(x-y) dy dx for phi the (possibly image-summed) kernel.

    Intervals may share endpoints but must not overlap.  L = None gives the
    line kernel |x-y|^{-1-s}; otherwise the full circle image sum (all
    differences must stay within one period).
    """
    if min(b, d) > max(a, c):
        raise ValueError("intervals must not overlap")
    psi = (lambda t: psi2_line(t, s)) if L is None else (lambda t: psi2_circle(t, s, L))
    return float(psi(b - c) - psi(a - c) - psi(b - d) + psi(a - d))


def arc_complement(arcs, L: float):
    """Complement of a sorted disjoint arc union inside [0, L), as arcs."""
    gaps = []
    for (a1, b1), (a2, _) in zip(arcs, arcs[1:]):
        gaps.append((b1, a2))
    first_a = arcs[0][0]
    last_b = arcs[-1][1]
    wrap = (last_b, first_a + L)
    if wrap[1] > wrap[0]:
        gaps.append(wrap)
    return gaps


def arc_union_perimeter(arcs, s: float, L: float | None) -> float:
    """Per_s of a disjoint arc union: 2 sum over (arc, complement-gap) pairs.

    Exact.  On the circle every pair is evaluated with the image-summed
    antiderivative; arcs are shifted so all differences stay within a period.
    """
    from .constants import alpha

    arcs = [(float(a), float(b)) for a, b in arcs]
    if L is None:
        return 2.0 * alpha(1, s) * _line_union_perimeter(arcs, s)
    comp = arc_complement(arcs, L)
    total = 0.0
    for (a, b) in arcs:
        for (c, d) in comp:
            # shift the gap so that both orderings stay within one period
            if c < b:
                c2, d2 = c + L, d + L
            else:
                c2, d2 = c, d
            if not (b <= c2 and d2 <= a + L):
                raise AssertionError("gap not within one period of the arc")
            total += interval_pair_integral(a, b, c2, d2, s, L=L)
    return 2.0 * alpha(1, s) * total


def _line_union_perimeter(arcs, s: float) -> float:
    """sum over E x E^c pair integrals for intervals on the line (no alpha, no 2)."""
    total = 0.0
    gaps = []
    for (a1, b1), (a2, _) in zip(arcs, arcs[1:]):
        gaps.append((b1, a2))
    A0, B0 = arcs[0][0], arcs[-1][1]
    for (a, b) in arcs:
        for (c, d) in gaps:
            if c >= b:
                total += interval_pair_integral(a, b, c, d, s)
            elif d <= a:
                total += interval_pair_integral(c, d, a, b, s)
        # unbounded tails: int_a^b dx int_{-inf}^{A0} (x-y)^{-1-s} dy
        #   = [(b-A0)^{1-s} - (a-A0)^{1-s}] / (s(1-s)), and mirrored on the right
        total += ((b - A0) ** (1.0 - s) - (a - A0) ** (1.0 - s)) / (s * (1.0 - s))
        total += ((B0 - a) ** (1.0 - s) - (B0 - b) ** (1.0 - s)) / (s * (1.0 - s))
    return total


def box_cell_masses(N: int, h: float, s: float, alpha1: float) -> np.ndarray:
    """Exact cell-pair masses on a uniform 1D box grid.

    W[d] = alpha int_{cell_0} int_{cell_d} |x-y|^{-1-s}, d = -(N-1)..(N-1)
    (returned as an array of length 2N-1 with W[N-1] the d=0 entry, zero).
    """
    d = np.arange(-(N - 1), N)
    vals = alpha1 * (
        psi2_line((d + 1) * h, s) - 2.0 * psi2_line(d * h, s) + psi2_line((d - 1) * h, s)
    )
    vals[N - 1] = 0.0
    return vals


def circle_cell_masses(N: int, L: float, s: float, alpha1: float) -> np.ndarray:
    """Exact cell-pair masses on the circle grid (image-summed), d = 0..N-1."""
    h = L / N
    d = np.arange(N) * h
    up = np.minimum(d + h, L)
    dn = d - h
    vals = alpha1 * (psi2_circle(up, s, L) - 2.0 * psi2_circle(d, s, L) + psi2_circle(dn, s, L))
    vals[0] = 0.0
    return vals


def diagonal_slope_mass(h: float, s: float, alpha1: float) -> float:
    """alpha int_{cell^2} (x-y)^2 |x-y|^{-1-s} = 2 alpha h^{3-s}/((2-s)(3-s)).

    Multiplied by the squared local slope this is the locally-linear model of
    the excluded diagonal cell.
    """
    return 2.0 * alpha1 * h ** (3.0 - s) / ((2.0 - s) * (3.0 - s))
