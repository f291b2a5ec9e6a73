"""Interaction kernels on flat geometries.

On R^n the kernel is alpha_{n,s} |x-y|^{-(n+s)} exactly; on the flat torus the
heat kernel is the Gaussian image sum, so the kernel is the lattice sum
alpha_{n,s} sum_k |x-y+Lk|^{-(n+s)}.  Direct truncation of that sum has an
O(K^{-s}) relative tail, hopeless for small s, so the default evaluator
resums it with the classical incomplete-gamma (Ewald) split of the
subordination integral; a truncated-sum evaluator with its recorded tail
bound is kept for cross-checks, and `torus_kernel_time_integral` is the
independent quadrature oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import integrate
from scipy.special import gammaincc

from .constants import FractionalOrder, alpha, gamma_fn
from .geometry import Geometry


@dataclass(frozen=True)
class KernelSpec:
    """Fractional order + geometry + evaluation controls.

    truncation: image radius of the direct lattice sum (None = automatic);
    epsilon: regularisation length (0 = singular kernel).
    """

    order: FractionalOrder
    geom: Geometry
    truncation: int | None = None
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")

    @property
    def s(self) -> float:
        return self.order.s

    def with_epsilon(self, eps: float) -> "KernelSpec":
        return KernelSpec(self.order, self.geom, self.truncation, eps)


def _subordination_const(n: int, s: float) -> float:
    return (s / 2.0) / gamma_fn(1.0 - s / 2.0)


def _pair_delta(x, y, geom: Geometry):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[-1] != geom.dim or y.shape[-1] != geom.dim:
        raise ValueError("points must have the geometry dimension")
    return x - y


def _upper_gamma(a: float, x):
    """Unregularised upper incomplete Gamma(a, x) for a > 0 (vectorised)."""
    return gammaincc(a, x) * gamma_fn(a)


def _upper_gamma_neg(a: float, x):
    """Gamma(a, x) continued to a in (-1, 0) via Gamma(a,x) = (Gamma(a+1,x) - x^a e^-x)/a."""
    return (_upper_gamma(a + 1.0, x) - x**a * np.exp(-x)) / a


def _lattice(n: int, kmax: int):
    rng = range(-kmax, kmax + 1)
    return np.array(list(product(rng, repeat=n)), dtype=float)


# ---------------------------------------------------------------------------
# Euclidean kernels (exact closed forms)


def euclid_kernel(x, y, spec: KernelSpec):
    """alpha_{n,s} |x-y|^{-(n+s)}; raises on coincident points."""
    n = spec.geom.dim
    d = np.linalg.norm(_pair_delta(x, y, spec.geom), axis=-1)
    if np.any(d == 0):
        raise ZeroDivisionError("kernel singularity at coincident points")
    out = alpha(n, spec.s) * d ** -(n + spec.s)
    return out if out.size > 1 else float(out)


def euclid_regularized_kernel(x, y, spec: KernelSpec):
    """alpha_{n,s} (|x-y|^2 + eps^2)^{-(n+s)/2}, finite at coincidence."""
    if spec.epsilon <= 0:
        return euclid_kernel(x, y, spec)
    n = spec.geom.dim
    d2 = (np.asarray(_pair_delta(x, y, spec.geom)) ** 2).sum(axis=-1)
    out = alpha(n, spec.s) * (d2 + spec.epsilon**2) ** (-(n + spec.s) / 2.0)
    return out if out.size > 1 else float(out)


# ---------------------------------------------------------------------------
# torus kernels: Ewald resummation of the exact image sum


def _ewald_sums(delta, geom: Geometry, s: float, eps: float = 0.0,
                kmax: int = 3, mmax: int = 6):
    """K_eps on the torus by the incomplete-gamma split of the time integral.

    Exact resummation of alpha sum_k (|d+Lk|^2+eps^2)^{-(n+s)/2}; valid for
    s in (0,2).  delta: (..., n) coordinate differences.
    """
    n = geom.dim
    L = geom.L
    t0 = (L / (2.0 * math.pi)) ** 2 * 2.0
    a = (n + s) / 2.0
    C = _subordination_const(n, s)
    delta = np.asarray(delta, dtype=float)
    base = delta.reshape(-1, n)
    lat = _lattice(n, kmax) * L
    d2 = ((base[:, None, :] + lat[None, :, :]) ** 2).sum(-1) + eps * eps
    b = d2 / 4.0
    # real-space part: sum_k (4pi)^{-n/2} b^{-a} Gamma(a, b/t0)
    real = ((4.0 * math.pi) ** (-n / 2.0) * b ** (-a) * _upper_gamma(a, b / t0)).sum(1)
    # Fourier part with the e^{-eps^2/4t} tail expanded (eps^2/(4 t0) is tiny)
    ms = _lattice(n, mmax)
    lam = (2.0 * math.pi / L) ** 2 * (ms**2).sum(1)
    keep = lam <= (2.0 * math.pi * mmax / L) ** 2  # spherical cutoff
    ms, lam = ms[keep], lam[keep]
    phase = np.cos((2.0 * math.pi / L) * base @ ms.T)
    four = np.zeros(base.shape[0])
    e2 = eps * eps / 4.0
    if e2 >= 0.5 * t0:
        raise ValueError("epsilon too large relative to the torus side for this evaluator")
    jmax = 0
    while e2 > 0.0 and (e2 / t0) ** (jmax + 1) / math.factorial(jmax + 1) > 1e-16 and jmax < 24:
        jmax += 1
    for j in range(jmax + 1):
        cj = (-e2) ** j / math.factorial(j)
        aj = -s / 2.0 - j
        vals = np.empty_like(lam)
        zero = lam == 0
        vals[zero] = t0**aj / (-aj)  # int_t0^inf t^{aj-1} dt
        x = lam[~zero] * t0
        gup = _upper_gamma_neg(-s / 2.0, x)
        # Gamma(a-1, x) = (Gamma(a,x) - x^{a-1} e^{-x})/(a-1), descend j times
        aa = -s / 2.0
        for _ in range(j):
            gup = (gup - x ** (aa - 1.0) * np.exp(-x)) / (aa - 1.0)
            aa -= 1.0
        vals[~zero] = lam[~zero] ** (-aj) * gup
        four += cj * (phase @ vals)
    out = C * (real + four / L**n)
    return out.reshape(delta.shape[:-1])


def torus_kernel(x, y, spec: KernelSpec):
    """Canonical torus kernel K_{T,s}(x,y) (exact image-sum value)."""
    d = _pair_delta(x, y, spec.geom)
    dm = np.linalg.norm(spec.geom.wrap(d), axis=-1)
    if np.any(dm == 0):
        raise ZeroDivisionError("kernel singularity on the lattice diagonal")
    out = _ewald_sums(d, spec.geom, spec.s)
    return out if out.size > 1 else float(out)


def torus_regularized_kernel(x, y, spec: KernelSpec):
    if spec.epsilon <= 0:
        return torus_kernel(x, y, spec)
    d = _pair_delta(x, y, spec.geom)
    out = _ewald_sums(d, spec.geom, spec.s, eps=spec.epsilon)
    return out if out.size > 1 else float(out)


def torus_kernel_direct(x, y, spec: KernelSpec, kmax: int | None = None):
    """Truncated lattice sum with its analytic tail bound: (value, bound)."""
    n, s, L = spec.geom.dim, spec.s, spec.geom.L
    kmax = kmax if kmax is not None else (spec.truncation or 12)
    d = _pair_delta(x, y, spec.geom).reshape(-1, n)
    lat = _lattice(n, kmax) * L
    r = np.sqrt(((d[:, None, :] + lat[None, :, :]) ** 2).sum(-1))
    if np.any(r == 0):
        raise ZeroDivisionError("kernel singularity on the lattice diagonal")
    val = alpha(n, s) * (r ** -(n + s)).sum(1)
    # tail: integral comparison over |w| > (kmax - 1/2) L
    R = (kmax - 0.5) * L
    from .constants import sphere_area

    bound = alpha(n, s) * sphere_area(n - 1) * R ** (-s) / (s * L**n)
    return val if val.size > 1 else float(val[0]), float(bound)


def kernel(x, y, spec: KernelSpec):
    """Dispatch: regularised/singular kernel on the spec's geometry."""
    if spec.geom.periodic:
        return torus_regularized_kernel(x, y, spec) if spec.epsilon > 0 else torus_kernel(x, y, spec)
    return euclid_regularized_kernel(x, y, spec) if spec.epsilon > 0 else euclid_kernel(x, y, spec)


def distance_kernel(x, y, spec: KernelSpec):
    """alpha_{n,s} / dist_M(x,y)^{n+s} (geodesic distance)."""
    n = spec.geom.dim
    d = spec.geom.distance(np.atleast_2d(x), np.atleast_2d(y))
    if np.any(d == 0):
        raise ZeroDivisionError("kernel singularity at coincident points")
    out = alpha(n, spec.s) * d ** -(n + spec.s)
    return out if out.size > 1 else float(out)


# ---------------------------------------------------------------------------
# gradients


def grad_euclid_kernel(x, y, spec: KernelSpec, order_shift: float = 0.0):
    """grad_y of alpha_{n,st}|x-y|^{-(n+st)} with st = s + order_shift."""
    n = spec.geom.dim
    st = spec.s + order_shift
    d = _pair_delta(x, y, spec.geom)  # x - y
    r2 = (d**2).sum(-1)
    if np.any(r2 == 0):
        raise ZeroDivisionError("kernel singularity at coincident points")
    # grad_y |x-y|^{-m} = m (x-y) |x-y|^{-m-2}
    m = n + st
    return alpha(n, st) * m * d * (r2 ** (-(m + 2.0) / 2.0))[..., None]


def _grad_ewald(delta, geom: Geometry, st: float, kmax: int = 3, mmax: int = 6):
    """grad wrt y of the torus kernel of order st evaluated at delta = x - y.

    Works for st in (0,2) and for the continuation st = s-2 (n >= 2), where
    only the gradient converges (the constant heat mode is annihilated).
    """
    n, L = geom.dim, geom.L
    t0 = (L / (2.0 * math.pi)) ** 2 * 2.0
    a = (n + st) / 2.0
    if a <= 0:
        raise ValueError("order too negative for this dimension")
    C = _subordination_const(n, st)
    base = np.asarray(delta, dtype=float).reshape(-1, n)
    lat = _lattice(n, kmax) * L
    dv = base[:, None, :] + lat[None, :, :]  # x - y + Lk
    b = (dv**2).sum(-1) / 4.0
    # d/db [ b^{-a} Gamma(a, b/t0) ] = -a b^{-a-1} Gamma(a,b/t0) - b^{-1}(1/t0)^... :
    #   dGamma(a, b/t0)/db = -(b/t0)^{a-1} e^{-b/t0} / t0
    ga = _upper_gamma(a, b / t0)
    dfdb = -a * b ** (-a - 1.0) * ga - b ** (-a) * (b / t0) ** (a - 1.0) * np.exp(-b / t0) / t0
    # b = |x-y+Lk|^2/4, grad_y b = -(x-y+Lk)/2
    real = ((4.0 * math.pi) ** (-n / 2.0) * dfdb)[..., None] * (-dv / 2.0)
    real = real.sum(1)
    ms = _lattice(n, mmax)
    lam = (2.0 * math.pi / L) ** 2 * (ms**2).sum(1)
    keep = (lam > 0) & (lam <= (2.0 * math.pi * mmax / L) ** 2)
    ms, lam = ms[keep], lam[keep]
    x = lam * t0
    gup = _upper_gamma_neg(-st / 2.0, x) if st > 0 else _upper_gamma(-st / 2.0, x)
    vals = lam ** (st / 2.0) * gup
    th = (2.0 * math.pi / L) * base @ ms.T
    # grad_y cos((2pi/L) m.(x-y)) = + (2pi/L) m sin(...)
    four = (np.sin(th) * vals[None, :]) @ ms * (2.0 * math.pi / L)
    return C * (real + four / L**n)


def grad_kernel(x, y, spec: KernelSpec):
    """grad_y of the selected (singular) kernel."""
    d = _pair_delta(x, y, spec.geom)
    if spec.geom.periodic:
        dm = np.linalg.norm(spec.geom.wrap(d), axis=-1)
        if np.any(dm == 0):
            raise ZeroDivisionError("kernel singularity on the lattice diagonal")
        out = _grad_ewald(d, spec.geom, spec.s)
    else:
        out = grad_euclid_kernel(x, y, spec)
    return out.reshape(np.shape(d))


def grad_torus_minus_euclid(delta, geom: Geometry, st: float,
                            kmax: int = 3, mmax: int = 6):
    """grad_y [K^torus_st - K^euclid_st] at delta = x - y (smooth image field).

    Evaluates the difference without cancellation: the k = 0 Ewald real-space
    term minus the exact Euclidean gradient reduces to lower-incomplete-gamma
    factors that vanish smoothly as |delta| -> 0.
    """
    from scipy.special import gammainc

    n, L = geom.dim, geom.L
    t0 = (L / (2.0 * math.pi)) ** 2 * 2.0
    a = (n + st) / 2.0
    if a <= 0:
        raise ValueError("order too negative for this dimension")
    C = _subordination_const(n, st)
    base = np.asarray(delta, dtype=float).reshape(-1, n)
    # full Ewald gradient with the k = 0 real-space term REPLACED by its
    # difference from the exact all-time Gaussian integral (the Euclidean part)
    lat = _lattice(n, kmax) * L
    nz = np.any(lat != 0, axis=1)
    dv = base[:, None, :] + lat[None, nz, :]
    b = (dv**2).sum(-1) / 4.0
    ga = _upper_gamma(a, b / t0)
    dfdb = -a * b ** (-a - 1.0) * ga - b ** (-a) * (b / t0) ** (a - 1.0) * np.exp(-b / t0) / t0
    real = (((4.0 * math.pi) ** (-n / 2.0) * dfdb)[..., None] * (-dv / 2.0)).sum(1)
    # k=0 residual: d/db[b^{-a}(Gamma(a,b/t0) - Gamma(a))], which expands into
    # the stable series t0^{-a-1} sum_k (-x)^k / (k! (a+k+1)); the naive
    # incomplete-gamma formula cancels catastrophically as b -> 0
    b0 = (base**2).sum(-1) / 4.0
    x0 = b0 / t0
    dfdb0 = np.empty_like(x0)
    small = x0 < 0.5
    acc = np.zeros(np.count_nonzero(small))
    xs_ = x0[small]
    term = np.ones_like(xs_)
    for k in range(0, 24):
        acc += term / (a + k + 1.0)
        term *= -xs_ / (k + 1.0)
    dfdb0[small] = t0 ** (-a - 1.0) * acc
    big = ~small
    if np.any(big):
        low = gammainc(a, x0[big]) * gamma_fn(a)
        dfdb0[big] = (a * b0[big] ** (-a - 1.0) * low
                      - b0[big] ** (-a) * x0[big] ** (a - 1.0) * np.exp(-x0[big]) / t0)
    real += ((4.0 * math.pi) ** (-n / 2.0) * dfdb0)[..., None] * (-base / 2.0)
    ms = _lattice(n, mmax)
    lam = (2.0 * math.pi / L) ** 2 * (ms**2).sum(1)
    keep = (lam > 0) & (lam <= (2.0 * math.pi * mmax / L) ** 2)
    ms, lam = ms[keep], lam[keep]
    xx = lam * t0
    gup = _upper_gamma_neg(-st / 2.0, xx) if st > 0 else _upper_gamma(-st / 2.0, xx)
    vals = lam ** (st / 2.0) * gup
    th = (2.0 * math.pi / L) * base @ ms.T
    four = (np.sin(th) * vals[None, :]) @ ms * (2.0 * math.pi / L)
    return (C * (real + four / L**n)).reshape(np.shape(delta))


def grad_kernel_s_minus_2(x, y, spec: KernelSpec):
    """grad_y K_{s-2}(x, y); the scalar K_{s-2} itself diverges on the torus.

    Requires n >= 2 and s in (0,1); each image term has exponent n+s-1 > n.
    """
    spec.order.require_perimeter_range()
    if spec.geom.dim < 2:
        raise ValueError("order s-2 needs n >= 2")
    d = _pair_delta(x, y, spec.geom)
    if spec.geom.periodic:
        dm = np.linalg.norm(spec.geom.wrap(d), axis=-1)
        if np.any(dm == 0):
            raise ZeroDivisionError("kernel singularity on the lattice diagonal")
        out = _grad_ewald(d, spec.geom, spec.s - 2.0)
    else:
        out = grad_euclid_kernel(x, y, spec, order_shift=-2.0)
    return out.reshape(np.shape(d))


# ---------------------------------------------------------------------------
# time-integral oracles (independent quadrature path)


def _heat_kernel_torus(delta, t: float, geom: Geometry, kmax: int = 8, mmax: int = 12):
    """Heat kernel on T^n_L by theta duality (image sum for small t, spectral else)."""
    n, L = geom.dim, geom.L
    delta = np.asarray(delta, dtype=float)
    tstar = (L / (2.0 * math.pi)) ** 2 * 4.0
    if t <= tstar:
        lat = _lattice(n, kmax) * L
        d2 = ((delta[None, :] + lat) ** 2).sum(-1)
        return float(((4.0 * math.pi * t) ** (-n / 2.0) * np.exp(-d2 / (4.0 * t))).sum())
    ms = _lattice(n, mmax)
    lam = (2.0 * math.pi / L) ** 2 * (ms**2).sum(1)
    ph = np.cos((2.0 * math.pi / L) * ms @ delta)
    return float((np.exp(-lam * t) * ph).sum() / L**n)


def torus_kernel_time_integral(x, y, spec: KernelSpec, eps: float | None = None) -> float:
    """Direct numeric subordination integral; validation oracle for the kernel."""
    n, s = spec.geom.dim, spec.s
    eps = spec.epsilon if eps is None else eps
    delta = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    C = _subordination_const(n, s)
    damp = (lambda t: math.exp(-eps * eps / (4.0 * t))) if eps > 0 else (lambda t: 1.0)

    def f(t):
        return _heat_kernel_torus(delta, t, spec.geom) * damp(t) * t ** (-1.0 - s / 2.0)

    d0 = float(np.linalg.norm(spec.geom.wrap(delta)))
    tsplit = max(d0 * d0 / 4.0, 1e-8)
    v1, _ = integrate.quad(f, 0.0, tsplit, limit=400)
    v2, _ = integrate.quad(f, tsplit, np.inf, limit=400)
    return C * (v1 + v2)


def euclid_alpha_time_integral(n: int, s: float, d: float) -> float:
    """Numeric Gaussian subordination for alpha_{n,s} d^{-(n+s)}; valid for n+s > 0.

    Used to validate the analytic continuation of alpha to order s-2.
    """
    C = _subordination_const(n, s)

    def f(t):
        return (4.0 * math.pi * t) ** (-n / 2.0) * math.exp(-d * d / (4.0 * t)) * t ** (-1.0 - s / 2.0)

    v1, _ = integrate.quad(f, 0.0, d * d / 4.0, limit=400)
    v2, _ = integrate.quad(f, d * d / 4.0, np.inf, limit=400)
    return C * (v1 + v2)
