"""Closed-form constants of the fractional-perimeter machinery.

Everything here is a pure function of the dimension n and the fractional
order s.  The Gamma function is our own Lanczos implementation (with the
reflection formula for negative arguments) so that the test suite can check
it against an independent one; the interaction-order continuation to s-2
needs Gamma at shifted arguments that stay positive for n >= 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# Lanczos approximation, g = 7, 9 coefficients.  Relative accuracy is around
# 1e-14 on the strip we use (real arguments away from the poles).
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x: float) -> float:
    """Gamma(x) for real x that is not a nonpositive integer."""
    if x == math.floor(x) and x <= 0.0:
        raise ValueError(f"Gamma pole at x={x}")
    if x < 0.5:
        # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    x = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


@dataclass(frozen=True)
class FractionalOrder:
    """The pair (s, sigma = 1 - s).

    Kernels accept s in (0,2); perimeter/NMC operations additionally require
    s in (0,1) and check that themselves.
    """

    s: float

    def __post_init__(self):
        if not (0.0 < self.s < 2.0):
            raise ValueError(f"s must lie in (0,2), got {self.s}")

    @property
    def sigma(self) -> float:
        return 1.0 - self.s

    def require_perimeter_range(self) -> None:
        if not (0.0 < self.s < 1.0):
            raise ValueError(f"s must lie in (0,1) for this operation, got {self.s}")


def _as_s(s) -> float:
    return s.s if isinstance(s, FractionalOrder) else float(s)


def alpha(n: int, s) -> float:
    """Normalising constant of the fractional kernel, alpha_{n,s}.

    Uses s 2^{s-1} Gamma((n+s)/2) / (pi^{n/2} Gamma(1-s/2)), which analytically
    continues to negative orders (needed at s-2).  Valid for s in (0,2) and,
    for n >= 2, on the continuation strip s-2 in (-2,0).
    """
    sv = _as_s(s)
    if sv == 0.0 or sv >= 2.0 or sv <= -2.0:
        raise ValueError(f"alpha undefined at s={sv}")
    return (
        sv
        * 2.0 ** (sv - 1.0)
        * gamma_fn((n + sv) / 2.0)
        / (math.pi ** (n / 2.0) * gamma_fn(1.0 - sv / 2.0))
    )


def alpha_abs_form(n: int, s) -> float:
    """The other printed form 2^s Gamma((n+s)/2) / (pi^{n/2} |Gamma(-s/2)|).

    Only valid for s in (0,2); kept as a consistency check of ``alpha``.
    """
    sv = _as_s(s)
    if not (0.0 < sv < 2.0):
        raise ValueError(f"absolute-value form needs s in (0,2), got {sv}")
    return 2.0**sv * gamma_fn((n + sv) / 2.0) / (math.pi ** (n / 2.0) * abs(gamma_fn(-sv / 2.0)))


def ball_volume(m: int) -> float:
    """Volume of the unit ball in R^m; ball_volume(0) = 1."""
    if m < 0:
        raise ValueError("dimension must be >= 0")
    return math.pi ** (m / 2.0) / gamma_fn(m / 2.0 + 1.0)


def sphere_area(m: int) -> float:
    """m-dimensional Hausdorff measure of the unit sphere S^m in R^{m+1}.

    sphere_area(0) = 2 (two points).
    """
    if m < 0:
        raise ValueError("dimension must be >= 0")
    return 2.0 * math.pi ** ((m + 1) / 2.0) / gamma_fn((m + 1) / 2.0)


def gamma_n(n: int) -> float:
    """Classical-limit constant: (1-s) Per_s -> gamma_n Per as s -> 1.

    The s-dependence is fixed at s = 1 (the constant only ever appears inside
    the s -> 1 limit).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return 2.0 * alpha(n, 1.0) * ball_volume(n - 1)


def beta(s) -> float:
    """Weighted-extension energy constant beta_s = 2^{s-1} Gamma(s/2)/Gamma(1-s/2)."""
    sv = _as_s(s)
    if not (0.0 < sv < 2.0):
        raise ValueError(f"beta needs s in (0,2), got {sv}")
    return 2.0 ** (sv - 1.0) * gamma_fn(sv / 2.0) / gamma_fn(1.0 - sv / 2.0)


def beta_fn(a: float, b: float) -> float:
    return gamma_fn(a) * gamma_fn(b) / gamma_fn(a + b)


def c_layer(n: int, s) -> float:
    """Parallel-layer interaction constant c_{n,s}.

    c_{n,s} = (H^{n-2}(S^{n-2})/2) B((n-1)/2, (1+s)/2); for two parallel flat
    layers at separation h the plain-kernel surface integral equals
    c_{n,s} / h^{1+s} exactly.
    """
    if n < 2:
        raise ValueError("c_layer needs n >= 2")
    sv = _as_s(s)
    return sphere_area(n - 2) / 2.0 * beta_fn((n - 1) / 2.0, (1.0 + sv) / 2.0)


def c_zero(n: int) -> float:
    """The constant c_circ = H^{n-2}(S^{n-2}) / (2(n-1)) (= ball_volume(n-1)/2)."""
    if n < 2:
        raise ValueError("c_zero needs n >= 2")
    return sphere_area(n - 2) / (2.0 * (n - 1))


def c_nmc(n: int, s) -> float:
    """Graph-form curvature constant c(n,s) = -2 (n+s-2) alpha_{n,s-2}.

    With this constant, sigma * c(n,s) * int_Gamma (nu.y)/|y|^{n+s} over a
    recentred boundary patch reproduces the divergence-form curvature; the
    sign makes spheres positively curved for the exterior normal and flat
    graphs exactly zero.
    """
    if n < 2:
        raise ValueError("c_nmc needs n >= 2")
    sv = _as_s(s)
    if not (0.0 < sv < 1.0):
        raise ValueError(f"c_nmc needs s in (0,1), got {sv}")
    return -2.0 * (n + sv - 2.0) * alpha(n, sv - 2.0)


def flat_limit_constant(n: int) -> float:
    """lim_{s->1} H_s / H on a smooth boundary: alpha_{n,1} ball_volume(n-1) = 1/pi."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return alpha(n, 1.0) * ball_volume(n - 1)


def constants_row(n: int, s: float) -> dict:
    """All named constants at (n, s), for the CLI CSV."""
    order = FractionalOrder(s)
    row = {
        "n": n,
        "s": s,
        "alpha": alpha(n, order),
        "beta": beta(order),
        "gamma": gamma_n(n),
    }
    if n >= 2:
        row["c_layer"] = c_layer(n, order)
        row["c_zero"] = c_zero(n)
        row["c_nmc"] = c_nmc(n, order) if s < 1.0 else float("nan")
    else:
        row["c_layer"] = float("nan")
        row["c_zero"] = float("nan")
        row["c_nmc"] = float("nan")
    return row
