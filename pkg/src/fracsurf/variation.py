"""First and second variation of the fractional perimeter along flows.

Conventions carried over from the curvature module: Per_s = 2 iint K, so

    d/dt Per_s|_0   = 2 int_{dE} Htilde_s <X, nu>,
    d^2/dt^2 Per_s|_0
        = 2 [ iint_{dE x dE} (xi(p)-xi(q))^2 K
              - int_{dE} xi^2 pv int (chi_E-chi_{E^c})(div_q(nub K)+div_p(nub K))
              - int_{dE} Htilde_s (xi^2 div nub + <grad^tan xi, X> + xi^2 H
                                   - xi div^perp X) ],

with nub a chosen C^1 extension of the outward normal.  The bracket line
vanishes on s-minimal sets; for the (non-critical) ball it is assembled for
the caller's deformation field.  PV volume terms are evaluated with the
symmetric-exclusion principal value on exact kernels (the regularised-kernel
family is available as a cross-check route).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh
from scipy.special import roots_jacobi, roots_legendre

from .constants import FractionalOrder, alpha
from .geometry import ArcUnion, Ball, Geometry, GraphLayers, TrigGraph
from .kernels import KernelSpec
from .nmc import nmc_pointwise
from .onedim import arc_complement, arc_nmc_htilde, arc_union_perimeter, lattice_power_sum
from .perimeter import _ball_perimeter


@dataclass
class DeformationField:
    """Analytic ambient vector field with an exactly integrable flow.

    kinds: "translation" (constant vector), "radial" (speed * e_r about the
    ball center), "circle_trig" (w(y) d/dy on the circle), "layer_speeds"
    (per-layer constant normal-coordinate speeds).
    """

    kind: str
    vector: tuple | None = None
    speed: float = 0.0
    w: TrigGraph | None = None

    def velocity_1d(self, y):
        if self.kind == "translation":
            return np.full_like(np.asarray(y, dtype=float), self.vector[0])
        if self.kind == "circle_trig":
            return self.w(y)
        raise TypeError(f"no 1D velocity for kind {self.kind}")


@dataclass
class QuadraticForm:
    matrix: np.ndarray
    mass: np.ndarray
    basis: tuple

    def __post_init__(self):
        scale = np.max(np.abs(self.matrix)) + 1e-300
        if np.max(np.abs(self.matrix - self.matrix.T)) > 1e-9 * scale:
            raise ValueError("quadratic form must be symmetric")
        self.matrix = 0.5 * (self.matrix + self.matrix.T)
        vals = np.linalg.eigvalsh(self.mass)
        if vals.min() <= 0:
            raise ValueError("basis mass matrix must be positive definite")

    def __call__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        return float(c @ self.matrix @ c)


def morse_index_estimate(form: QuadraticForm, tol: float = 1e-8) -> int:
    """Number of eigenvalues below -tol of the pencil (Q, M)."""
    vals = eigh(form.matrix, form.mass, eigvals_only=True)
    return int(np.sum(vals < -tol))


# ---------------------------------------------------------------------------
# perimeter along flows (exact set transport)


def perimeter_along_flow(shape, field: DeformationField, spec: KernelSpec, tgrid):
    """Per_s(psi_X^t(E)) on the t grid.

    Arc endpoints follow the flow ODE (tight tolerance) into the closed-form
    perimeter; balls under radial fields remain balls; translations are
    exact no-ops; flat layers under per-layer speeds stay flat.
    """
    spec.order.require_perimeter_range()
    tgrid = np.asarray(tgrid, dtype=float)
    geom = spec.geom
    if isinstance(shape, ArcUnion):
        L = geom.L if geom.periodic else None
        ends = np.array([e for arc in shape.arcs for e in arc])
        flows = _flow_points(field, ends, tgrid)
        vals = []
        for row in flows:
            arcs = [(row[2 * i], row[2 * i + 1]) for i in range(len(shape.arcs))]
            if any(b <= a for a, b in arcs):
                raise ValueError("flow collapsed an arc")
            vals.append(arc_union_perimeter(arcs, spec.s, L))
        return np.array(vals)
    if isinstance(shape, Ball) and field.kind == "radial":
        vals = []
        for t in tgrid:
            r_t = shape.r + field.speed * t
            if r_t <= 0:
                raise ValueError("flow shrank the ball away")
            vals.append(_ball_perimeter(Ball(shape.center, r_t), spec))
        return np.array(vals)
    if isinstance(shape, Ball) and field.kind == "translation":
        return np.full(tgrid.shape, _ball_perimeter(shape, spec))
    if isinstance(shape, GraphLayers) and field.kind == "layer_speeds":
        vals = []
        for t in tgrid:
            heights = [g.c0 + t * v for g, v in zip(shape.layers, field.vector)]
            if any(b <= a for a, b in zip(heights, heights[1:])):
                raise ValueError("flow crossed layers")
            arcs = [(heights[i], heights[i + 1]) for i in range(0, len(heights) - 1, 2)]
            vals.append(geom.L ** (geom.dim - 1)
                        * arc_union_perimeter(arcs, spec.s, geom.L))
        return np.array(vals)
    raise TypeError(f"no flow transport for {type(shape)} with {field.kind}")


def _flow_points(field: DeformationField, pts, tgrid):
    if field.kind == "translation":
        return pts[None, :] + np.asarray(tgrid)[:, None] * field.vector[0]
    if field.kind == "circle_trig":
        w = field.w
        tgrid = np.asarray(tgrid, dtype=float)
        tmax = float(np.max(np.abs(tgrid))) if tgrid.size else 0.0
        v0, v1, v2, v3 = w(pts), w.d1(pts), w.d2(pts), w.d3(pts)
        if tmax * float(np.max(np.abs(v1)) + 1e-300) < 0.05:
            # fourth-order Taylor flow with exact trig derivatives (noise-free
            # for the tiny |t| used by finite-difference oracles)
            a2 = v1 * v0
            a3 = v2 * v0**2 + v1**2 * v0
            a4 = v3 * v0**3 + 4.0 * v2 * v1 * v0**2 + v1**3 * v0
            t = tgrid[:, None]
            return pts[None, :] + t * v0 + t**2 / 2.0 * a2 + t**3 / 6.0 * a3 + t**4 / 24.0 * a4
        out = np.empty((len(tgrid), len(pts)))
        for i, t in enumerate(tgrid):
            if t == 0.0:
                out[i] = pts
                continue
            sol = solve_ivp(lambda tt, y: w(y), (0.0, float(t)), pts,
                            rtol=1e-12, atol=1e-14, method="DOP853")
            out[i] = sol.y[:, -1]
        return out
    raise TypeError(f"no 1D flow for kind {field.kind}")


def pullback_perimeter_circle(shape: ArcUnion, field: DeformationField,
                              spec: KernelSpec, t: float, nlevels: int = 26) -> float:
    """Per_s(psi^t E) = 2 iint_{E x E^c} K(psi x, psi y) J_t(x) J_t(y) dx dy.

    Generic change-of-variables route of the flow-smoothness lemma: tensor
    Gauss panels graded geometrically into the touching corners of each
    (arc, gap) pair.  Cross-checks the exact transported closed form.
    """
    L = spec.geom.L
    s = spec.s

    def flowed_jac(pts):
        h = 1e-6 * L
        trip = np.concatenate([pts, pts + h, pts - h])
        out = _flow_points(field, trip, np.array([t]))[0]
        m = len(pts)
        return out[:m], (out[m:2 * m] - out[2 * m:]) / (2.0 * h)

    def graded_edges(length):
        e = [0.0, length * 2.0 ** (-nlevels)]
        while e[-1] < length:
            e.append(min(e[-1] * 2.0, length))
        return e

    xg, wg = roots_legendre(12)
    total = 0.0
    comp = arc_complement(shape.arcs, L)
    for (a, b) in shape.arcs:
        for (c, d) in comp:
            if c < b:
                c, d = c + L, d + L
            ex = graded_edges(b - a)   # distance of x below b
            ey = graded_edges(d - c)   # distance of y above c
            for x0, x1 in zip(ex[:-1], ex[1:]):
                xs = b - (0.5 * (x0 + x1) + 0.5 * (x1 - x0) * xg)
                wx = 0.5 * (x1 - x0) * wg
                fx, jx = flowed_jac(xs)
                for y0, y1 in zip(ey[:-1], ey[1:]):
                    ys = c + (0.5 * (y0 + y1) + 0.5 * (y1 - y0) * xg)
                    wy = 0.5 * (y1 - y0) * wg
                    fy, jy = flowed_jac(ys)
                    kv = lattice_power_sum(np.abs(fx[:, None] - fy[None, :]), s, L)
                    total += float(np.einsum("i,j,ij->", wx * jx, wy * jy, kv))
    return 2.0 * alpha(1, s) * total


# ---------------------------------------------------------------------------
# first variation


def first_variation(shape, field: DeformationField, spec: KernelSpec) -> float:
    """2 int_{dE} Htilde_s <X, nu> (matches d/dt of the transported perimeter)."""
    spec.order.require_perimeter_range()
    geom = spec.geom
    if isinstance(shape, ArcUnion):
        if not geom.periodic:
            raise NotImplementedError("first variation implemented on the circle")
        L = geom.L
        total = 0.0
        for (a, b) in shape.arcs:
            for p, nu in ((a, -1.0), (b, 1.0)):
                ht = arc_nmc_htilde(shape.arcs, p, spec.s, L)
                xi = float(field.velocity_1d(np.array([p]))[0]) * nu
                total += ht * xi
        return 2.0 * total
    if isinstance(shape, Ball):
        pt = np.asarray(shape.center, dtype=float)
        pt[0] += shape.r
        samp = nmc_pointwise(shape, pt, spec)
        if field.kind == "radial":
            xi_tot = field.speed * 2.0 * math.pi * shape.r
        elif field.kind == "translation":
            xi_tot = 0.0
        else:
            raise TypeError("ball first variation supports radial/translation fields")
        return 2.0 * samp.h_tilde * xi_tot
    if isinstance(shape, GraphLayers) and field.kind == "layer_speeds":
        heights = [g.c0 for g in shape.layers]
        arcs = [(heights[i], heights[i + 1]) for i in range(0, len(heights) - 1, 2)]
        total = 0.0
        for j, (hgt, v) in enumerate(zip(heights, field.vector)):
            nu_up = 1.0 if j % 2 == 1 else -1.0
            ht = arc_nmc_htilde(arcs, hgt, spec.s, geom.L)
            total += ht * v * nu_up * geom.L ** (geom.dim - 1)
        return 2.0 * total
    raise TypeError(f"no first variation for {type(shape)}")


# ---------------------------------------------------------------------------
# exact 1D kernels for the volume term


def _kernel_circle(d, s: float, L: float):
    return alpha(1, s) * lattice_power_sum(d, s, L)


def _kernel_circle_prime(d, s: float, L: float):
    """d/dd of the image-summed kernel (odd), exact via Hurwitz zeta."""
    from .onedim import hurwitz_zeta

    d = np.asarray(d, dtype=float)
    z = hurwitz_zeta(2.0 + s, 1.0 + d / L) - hurwitz_zeta(2.0 + s, 1.0 - d / L)
    out = -(1.0 + s) * (np.sign(d) * np.abs(d) ** (-2.0 - s) + L ** (-2.0 - s) * z)
    return alpha(1, s) * out


def _w_extension(positions, normals, L: float) -> TrigGraph:
    """Smooth periodic field w with w(p_i) = nu_i (least-squares trig fit)."""
    positions = np.asarray(positions, dtype=float)
    normals = np.asarray(normals, dtype=float)
    nmodes = max(2, len(positions))
    cols = [np.ones_like(positions)]
    for m in range(1, nmodes + 1):
        cols.append(np.cos(2.0 * math.pi * m * positions / L))
        cols.append(np.sin(2.0 * math.pi * m * positions / L))
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, normals, rcond=None)
    if np.max(np.abs(A @ coef - normals)) > 1e-9:
        raise RuntimeError("normal extension fit failed")
    a = coef[1::2]
    b = coef[2::2]
    return TrigGraph(a, b, L, c0=float(coef[0]))


def _inside_arcs(y: float, arcs, L: float) -> bool:
    y = y % L
    return any(a <= y < b or a <= y + L < b for (a, b) in arcs)


def volume_term_circle(arcs, p: float, wext: TrigGraph, spec: KernelSpec) -> float:
    """pv int (chi_E-chi_{E^c})(q)[div_q(nub K) + div_p(nub K)] dq on T^1.

    Symmetric-exclusion principal value: the q = p +- tau contributions are
    paired, which cancels the odd tau^{-1-s} part and leaves a tau^{-s}
    integrable integrand handled by Jacobi/graded Gauss panels.  Exact
    Hurwitz-zeta kernels, no regularisation parameter.
    """
    L, s = spec.geom.L, spec.s
    wp = float(wext(np.array([p]) % L)[0])

    def chi(y):
        return 1.0 if _inside_arcs(y, arcs, L) else -1.0

    wprime_p = float(wext.d1(np.array([p]) % L)[0])

    def paired_vec(tau):
        # div_q(w K) + div_p(w K) = [w'(q) + w'(p)] K + (w(q) - w(p)) K'
        tau = np.asarray(tau, dtype=float)
        qp = p + tau
        qm = p - tau
        cp = np.array([chi(v) for v in qp])
        cm = np.array([chi(v) for v in qm])
        K = _kernel_circle(tau, s, L)
        Kp = _kernel_circle_prime(tau, s, L)
        ip = cp * ((wext.d1(qp % L) + wprime_p) * K + (wext(qp % L) - wp) * Kp)
        im = cm * ((wext.d1(qm % L) + wprime_p) * K - (wext(qm % L) - wp) * Kp)
        return ip + im

    # breakpoints in tau where either q = p + tau or q = p - tau crosses dE
    ends = sorted({e % L for arc in arcs for e in arc})
    taus = set()
    for e in ends:
        for branch in (e - p, p - e):
            tb = branch % L
            if 0 < tb <= L / 2.0:
                taus.add(tb)
    taus = sorted(taus | {L / 2.0})
    total = 0.0
    lo = 0.0
    xj, wj = roots_jacobi(96, 0.0, -s)
    xg, wg = roots_legendre(24)
    for hi in taus:
        if hi - lo < 1e-15:
            lo = hi
            continue
        if lo == 0.0:
            half = hi / 2.0
            tt = (xj + 1.0) * half
            ww = wj * half ** (1.0 - s)
            total += float(np.sum(ww * paired_vec(tt) * tt**s))
        else:
            edges = np.geomspace(lo, hi, 8)
            for a, b in zip(edges[:-1], edges[1:]):
                mid, hl = 0.5 * (a + b), 0.5 * (b - a)
                tt = mid + hl * xg
                total += hl * float(np.sum(wg * paired_vec(tt)))
        lo = hi
    return total


def second_variation_circle(shape: ArcUnion, spec: KernelSpec) -> QuadraticForm:
    """Second-variation quadratic form on the endpoint basis (T^1 arcs).

    Basis vectors are unit normal speeds at each boundary point.  Applies to
    s-minimal reference sets (the Htilde bracket is omitted); Q[xi] equals
    d^2/dt^2 Per_s for the flow of w xi-interpolating fields.
    """
    spec.order.require_perimeter_range()
    L = spec.geom.L
    ends = [e for arc in shape.arcs for e in arc]
    normals = [(-1.0) ** (i + 1) for i in range(len(ends))]
    m = len(ends)
    wext = _w_extension(ends, normals, L)
    K = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            K[i, j] = K[j, i] = float(_kernel_circle(abs(ends[i] - ends[j]), spec.s, L))
    vol = np.array([volume_term_circle(shape.arcs, e, wext, spec) for e in ends])
    Qm = np.zeros((m, m))
    for i in range(m):
        Qm[i, i] = 2.0 * (2.0 * K[i].sum() - vol[i])
        for j in range(m):
            if j != i:
                Qm[i, j] -= 4.0 * K[i, j]
    return QuadraticForm(Qm, np.eye(m), tuple(ends))


# ---------------------------------------------------------------------------
# second variation on the 2D ball (Fourier modes on the circle)


def ball_volume_term(rball: float, spec: KernelSpec, extension: str = "linear",
                     taumax_fac: float = 400.0) -> float:
    """pv int (chi_B-chi_{B^c})[div_q(nub K)+div_p(nub K)] dq for the 2D ball.

    With the linear radial extension nub = q/r the integrand collapses to
    (4K + tau K')/r = (2-s) alpha tau^{-2-s} / r times the angular indicator
    weight w(tau) = 2 pi - 4 acos(-tau/2r), an exact one-dimensional
    integral.  extension="unit" keeps nub = q/|q| (polar quadrature with the
    angular crossings split exactly) for the extension-independence check.
    """
    spec.order.require_perimeter_range()
    s = spec.s
    a2 = alpha(2, s)
    r = rball
    if extension == "linear":
        # int_0^{2r} tau^{-1-s} wchi(tau) dtau, wchi ~ -2 tau/r at 0
        xj, wj = roots_jacobi(96, 0.0, -s)
        tau = (xj + 1.0) * r
        wt = wj * r ** (1.0 - s)
        wchi = 2.0 * math.pi - 4.0 * np.arccos(-tau / (2.0 * r))
        core = float(np.sum(wt * (wchi / tau ** (0.0)) * tau ** (0.0)))
        core = float(np.sum(wt * wchi))  # weight tau^{-s}; integrand tau^{-1-s} wchi = tau^{-s} (wchi/tau)
        core = float(np.sum(wt * (wchi / tau)))
        tail = -2.0 * math.pi * (2.0 * r) ** (-s) / s
        return (2.0 - s) * a2 / r * (core + tail)
    if extension != "unit":
        raise ValueError("extension must be 'linear' or 'unit'")
    p = np.array([r, 0.0])
    nb = 48
    xb, wb = roots_legendre(nb)

    def shell(tau):
        tau = float(tau)
        K = a2 * tau ** (-(2.0 + s))
        Kp = -(2.0 + s) * a2 * tau ** (-(3.0 + s))
        if tau < 2.0 * r:
            bstar = math.acos(-tau / (2.0 * r))
            segs = [(-bstar, bstar, -1.0)]
            # inside segment, split at beta = pi where |q| can vanish
            segs += [(bstar, math.pi, 1.0), (math.pi, 2.0 * math.pi - bstar, 1.0)]
        else:
            segs = [(0.0, 2.0 * math.pi, -1.0)]
        tot = 0.0
        for b0, b1, sgn in segs:
            # grade toward the segment ends (q may pass near the origin)
            sub = np.linspace(b0, b1, 5)
            for c0, c1 in zip(sub[:-1], sub[1:]):
                beta = 0.5 * (c0 + c1) + 0.5 * (c1 - c0) * xb
                wwb = 0.5 * (c1 - c0) * wb
                om = np.stack([np.cos(beta), np.sin(beta)], 1)
                q = p[None, :] + tau * om
                qn = np.linalg.norm(q, axis=1)
                qn = np.maximum(qn, 1e-12 * r)
                proj = ((q / qn[:, None] - p[None, :] / r) * om).sum(1)
                vals = K * (1.0 / qn + 1.0 / r) + Kp * proj
                tot += sgn * float(np.sum(wwb * vals))
        return tot * tau

    taumax = taumax_fac * r
    xj, wj = roots_jacobi(64, 0.0, -s)
    t1 = 0.05 * r
    tt = (xj + 1.0) * (t1 / 2.0)
    ww = wj * (t1 / 2.0) ** (1.0 - s)
    total = float(np.sum(ww * np.array([shell(t) * t**s for t in tt])))
    edges = np.geomspace(t1, taumax, 64)
    xg, wg = roots_legendre(16)
    for a, b in zip(edges[:-1], edges[1:]):
        mid, hl = 0.5 * (a + b), 0.5 * (b - a)
        tt = mid + hl * xg
        total += hl * float(np.sum(wg * np.array([shell(t) for t in tt])))
    total += -2.0 * math.pi * a2 * taumax ** (-s) / (s * r)
    return total


def second_variation_ball_mode(rball: float, k: int, spec: KernelSpec,
                               field_kind: str = "radial",
                               extension: str = "linear") -> float:
    """Q[cos(k theta)] for the 2D ball (normal extension nub = q/r).

    field_kind fixes the deformation behind the Htilde bracket: "radial"
    (X = cos k theta e_r) or "translation" (X = e_1, requires k = 1).  The
    classical-curvature bracket term enters with the mean-curvature-vector
    sign (-xi^2 H), the sign the finite-difference oracles force.
    """
    spec.order.require_perimeter_range()
    s = spec.s
    a2 = alpha(2, s)
    r = rball
    if k == 0:
        sob = 0.0
    else:
        xj, wj = roots_jacobi(128, 0.0, -s)
        D = (xj + 1.0) * (math.pi / 2.0)
        wD = wj * (math.pi / 2.0) ** (1.0 - s)
        phi = (1.0 - np.cos(k * D)) * a2 * (2.0 * r * np.sin(D / 2.0)) ** (-(2.0 + s)) * D**s
        sob = 2.0 * math.pi * r**2 * 2.0 * float(np.sum(wD * phi))
    vol = ball_volume_term(r, spec, extension=extension)
    ht = nmc_pointwise(Ball((0.0, 0.0), r), (r, 0.0), spec).h_tilde
    xi2 = math.pi * r if k >= 1 else 2.0 * math.pi * r
    div_nub = 2.0 / r if extension == "linear" else 1.0 / r
    H = 1.0 / r
    if field_kind == "radial":
        # bracket = xi^2 div nub + 0 - xi^2 H - 0
        bracket = ht * (div_nub - H) * xi2
    elif field_kind == "translation":
        if k != 1:
            raise ValueError("translation bracket applies to the k = 1 mode")
        # bracket = xi^2 div nub + sin^2/r - xi^2 H - 0
        bracket = ht * ((div_nub - H) * xi2 + math.pi)
    else:
        raise ValueError("unknown field kind")
    return 2.0 * (sob - vol * xi2 - bracket)
