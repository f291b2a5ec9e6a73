"""Weighted harmonic extension in one extra variable, energy identity, Phi(R).

The extension U of u solves div(z^{1-s} grad U) = 0 with trace u; each
eigenmode extends by the radial profile psi solving (z^{1-s} psi')' =
z^{1-s} psi, psi(0) = 1, psi(inf) = 0, and the weighted Dirichlet energy
recovers the H^{s/2} seminorm through the constant beta_s:

    [u]^2 = 2 beta_s int z^{1-s} |grad U|^2,
    int_0^inf z^{1-s} (psi'^2 + psi^2) dz = 1 / beta_s   (unit mode).

The profile is solved by shooting (bisection on the z^s coefficient); the
Bessel closed form 2^{1-s/2}/Gamma(s/2) r^{s/2} K_{s/2}(r) backs the fast
evaluations and the tests cross-check the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import kv, kvp, roots_jacobi, roots_legendre

from .constants import FractionalOrder, beta, beta_fn
from .sobolev import SpectralField, seminorm_spectral


def _as_s(s) -> float:
    return s.s if isinstance(s, FractionalOrder) else float(s)


@dataclass
class ExtensionProfile:
    s: float
    r: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    ode_residual: float
    shooting_coeff: float

    def __call__(self, r):
        return np.interp(r, self.r, self.psi, right=0.0)


def bessel_profile(r, s) -> np.ndarray:
    """Closed-form mode profile 2^{1-s/2}/Gamma(s/2) r^{s/2} K_{s/2}(r)."""
    sv = _as_s(s)
    r = np.asarray(r, dtype=float)
    out = np.ones_like(r)
    pos = r > 0
    from .constants import gamma_fn

    out[pos] = 2.0 ** (1.0 - sv / 2.0) / gamma_fn(sv / 2.0) * r[pos] ** (sv / 2.0) * kv(
        sv / 2.0, r[pos])
    big = r > 600.0
    out[big] = 0.0
    return out


def bessel_profile_deriv(r, s) -> np.ndarray:
    sv = _as_s(s)
    r = np.asarray(r, dtype=float)
    from .constants import gamma_fn

    c = 2.0 ** (1.0 - sv / 2.0) / gamma_fn(sv / 2.0)
    out = np.zeros_like(r)
    pos = (r > 0) & (r <= 600.0)
    rp = r[pos]
    out[pos] = c * ((sv / 2.0) * rp ** (sv / 2.0 - 1.0) * kv(sv / 2.0, rp)
                    + rp ** (sv / 2.0) * kvp(sv / 2.0, rp))
    return out


def cs_profile(s, r_grid=None, z_far: float = 35.0) -> ExtensionProfile:
    """Solve (z^{1-s} psi')' = z^{1-s} psi, psi(0) = 1, psi(inf) = 0 by shooting.

    Near zero psi = 1 + b z^s + z^2/(2(2-s)) + ...; b is the shooting
    parameter, bisected on blow-up direction at z_far.  The returned grid is
    logarithmic (the z^s boundary behaviour needs it); the max-norm ODE
    residual on the grid is recorded.
    """
    sv = _as_s(s)
    if not (0.0 < sv < 2.0):
        raise ValueError("cs_profile needs s in (0,2)")
    if r_grid is None:
        r_grid = np.geomspace(1e-6, z_far, 400)
    r_grid = np.asarray(r_grid, dtype=float)
    z0 = min(1e-8, r_grid[0] / 10.0)

    def rhs(z, y):
        psi, q = y
        return [q * z ** (sv - 1.0), z ** (1.0 - sv) * psi]

    def shoot(b, dense=False):
        psi0 = 1.0 + b * z0**sv + z0**2 / (2.0 * (2.0 - sv))
        q0 = b * sv + z0 ** (2.0 - sv) / (2.0 - sv)
        return solve_ivp(rhs, (z0, z_far), [psi0, q0], rtol=3e-13, atol=1e-14,
                         dense_output=dense, method="LSODA")

    lo, hi = -8.0, 0.0
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if shoot(mid).y[0, -1] > 0:
            hi = mid
        else:
            lo = mid
    b = 0.5 * (lo + hi)
    sol = shoot(b, dense=True)
    vals = sol.sol(r_grid)
    psi = vals[0]
    q = vals[1]
    dpsi = q * r_grid ** (sv - 1.0)
    # residual of q' = z^{1-s} psi, with q' from 4th-order central differences
    # of the dense solution (step h per node)
    hstep = np.minimum(r_grid * 1e-3, 1e-3)
    qp = sol.sol(np.clip(r_grid + hstep, z0, z_far))[1]
    qm = sol.sol(np.clip(r_grid - hstep, z0, z_far))[1]
    dq = (qp - qm) / (np.clip(r_grid + hstep, z0, z_far) - np.clip(r_grid - hstep, z0, z_far))
    scale = np.maximum(np.abs(r_grid ** (1.0 - sv) * psi), 1e-12)
    res = float(np.max(np.abs((dq - r_grid ** (1.0 - sv) * psi) / scale)[1:-1]))
    return ExtensionProfile(sv, r_grid, psi, dpsi, res, b)


def mode_energy_integral(s, zfar: float = 80.0) -> float:
    """int_0^inf z^{1-s}(psi'^2 + psi^2) dz for the unit mode (= 1/beta_s).

    Geometric panels resolve the z^{s-1} edge of the psi'^2 part.
    """
    sv = _as_s(s)
    total = 0.0
    edges = np.concatenate([np.geomspace(1e-10, 1.0, 140), np.geomspace(1.2, zfar, 120)])
    xg, wg = roots_legendre(16)
    for a, b in zip(edges[:-1], edges[1:]):
        zz = 0.5 * (a + b) + 0.5 * (b - a) * xg
        ww = 0.5 * (b - a) * wg
        f = zz ** (1.0 - sv) * (bessel_profile_deriv(zz, sv) ** 2
                                + bessel_profile(zz, sv) ** 2)
        total += float(np.sum(ww * f))
    return total


def extend(u: SpectralField, s, z_grid) -> np.ndarray:
    """U(x, z) = sum_k c_k phi_k(x) psi(sqrt(lam_k) z) on grid x times z_grid."""
    sv = _as_s(s)
    z_grid = np.asarray(z_grid, dtype=float)
    _, lam, _ = u.mode_table()
    c = u.coeffs
    slam = np.sqrt(lam)
    shape = (len(z_grid),) + u.values.shape
    out = np.empty(shape)
    for i, z in enumerate(z_grid):
        damp = bessel_profile(slam * z, sv)
        out[i] = np.real(np.fft.ifftn(c * damp * u.values.size))
    return out


def full_energy_identity(u: SpectralField, s, nz: int = 240, zmax_fac: float = 12.0) -> dict:
    """2 beta_s iint z^{1-s} |grad U|^2 vs the spectral seminorm.

    The (x, z) quadrature is honest: spectral x-derivative per z node, exact
    profile derivative in z, geometric z panels capturing the z^{s-1} edge.
    """
    sv = _as_s(s)
    _, lam, _ = u.mode_table()
    c = u.coeffs
    slam = np.sqrt(lam)
    lam_min = np.min(slam[slam > 0])
    zmax = zmax_fac / lam_min
    edges = np.geomspace(1e-9 / lam_min, zmax, nz)
    xg, wg = roots_legendre(8)
    N = u.values.size
    L = u.geom.L
    ks = np.fft.fftfreq(u.N, d=1.0 / u.N)
    if u.geom.dim == 1:
        kvec = 2.0 * math.pi / L * ks
    else:
        kx, ky = np.meshgrid(ks, ks, indexing="ij")
        kvx = 2.0 * math.pi / L * kx
        kvy = 2.0 * math.pi / L * ky
    total = 0.0
    cell = (L / u.N) ** u.geom.dim
    for a, b in zip(edges[:-1], edges[1:]):
        for g, w in zip(xg, wg):
            z = 0.5 * (a + b) + 0.5 * (b - a) * g
            ww = 0.5 * (b - a) * w
            damp = bessel_profile(slam * z, sv)
            ddamp = bessel_profile_deriv(slam * z, sv) * slam
            Uc = c * damp
            dUz = np.real(np.fft.ifftn(c * ddamp * N))
            if u.geom.dim == 1:
                dUx = np.real(np.fft.ifftn(1j * kvec * Uc * N))
                grad2 = dUx**2 + dUz**2
            else:
                dUx = np.real(np.fft.ifftn(1j * kvx * Uc * N))
                dUy = np.real(np.fft.ifftn(1j * kvy * Uc * N))
                grad2 = dUx**2 + dUy**2 + dUz**2
            total += ww * z ** (1.0 - sv) * float(grad2.sum()) * cell
    lhs = 2.0 * beta(sv) * total
    rhs = seminorm_spectral(u, sv)
    return {"extension_energy": lhs, "seminorm": rhs,
            "rel_err": abs(lhs - rhs) / rhs if rhs > 0 else 0.0}


# ---------------------------------------------------------------------------
# half-space monotonicity quantity


def _poisson_kernel_1d(x, z: float, s: float):
    """P(x, z) = z^s / (B(1/2, s/2) (x^2 + z^2)^{(1+s)/2}), int P dx = 1."""
    return z**s / (beta_fn(0.5, s / 2.0) * (x**2 + z**2) ** ((1.0 + s) / 2.0))


def _mollified_sign(x, h: float):
    """Odd quintic ramp: -1 below -h, +1 above h, C^2 across."""
    t = np.clip(np.asarray(x, dtype=float) / h, -1.0, 1.0)
    return (15.0 * t - 10.0 * t**3 + 3.0 * t**5) / 8.0


def halfspace_extension_gradient(x, z, s: float, h: float):
    """(dU/dx, dU/dz) for U = P * sign_h at heights z (1D data, vectorised).

    dU/dx convolves the mollifier derivative with P.  dU/dz splits the data
    into the mollified strip (quadrature) plus the exact +-1 tails, whose
    z-derivative integrals reduce to the closed form -P(u, z) u / z.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.broadcast_to(np.asarray(z, dtype=float), x.shape).astype(float)
    xg, wg = roots_legendre(16)
    Bc = beta_fn(0.5, s / 2.0)
    dUdx = np.zeros_like(x)
    dUdz = np.zeros_like(x)
    for i, (xv, zv) in enumerate(zip(x, z)):
        # the Poisson kernel is a spike of width z around t = x; panel the
        # mollifier strip (-h, h) geometrically about that point
        cuts = {-h, h}
        scale = zv
        while scale < 4.0 * h:
            for c in (xv - scale, xv + scale):
                if -h < c < h:
                    cuts.add(c)
            scale *= 4.0
        if -h < xv < h:
            cuts.add(xv)
        cuts = sorted(cuts)
        for a, b in zip(cuts[:-1], cuts[1:]):
            t = 0.5 * (a + b) + 0.5 * (b - a) * xg
            wt = 0.5 * (b - a) * wg
            tt = t / h
            dsign = (15.0 - 30.0 * tt**2 + 15.0 * tt**4) / (8.0 * h)
            dx = xv - t
            P = zv**s / (Bc * (dx**2 + zv**2) ** ((1.0 + s) / 2.0))
            dUdx[i] += float(np.sum(wt * P * dsign))
            Pz = P * (s / zv - (1.0 + s) * zv / (dx**2 + zv**2))
            dUdz[i] += float(np.sum(wt * Pz * _mollified_sign(t, h)))
    # exact tails: int_{|y|>h} dP/dz(x-y) sign(y) dy = -P(u,z) u/z at u = x -+ h
    for uu in (x - h, x + h):
        Pu = z**s / (Bc * (uu**2 + z**2) ** ((1.0 + s) / 2.0))
        dUdz -= Pu * uu / z
    return dUdx, dUdz


def phi_halfspace(radii, s, h: float = 1e-3, n: int = 1, extrapolate: bool = True) -> dict:
    """Phi(R) = R^{s-n} (beta_s/2) int_{B_R^+} z^{1-s} |grad U|^2 for the
    half-space indicator, mollified at scale h and extrapolated h -> 0.

    The mollification bias is exactly of order h^{1-s} with an R-independent
    coefficient, so the (h, h/2) extrapolation at that order removes it.
    The (x, z) integral is polar: x = rho cos t, z = rho sin t.
    """
    sv = _as_s(s)
    if n != 1:
        raise NotImplementedError("the half-space reduction is one-dimensional")
    if extrapolate:
        r1 = phi_halfspace(radii, s, h=h, n=n, extrapolate=False)
        r2 = phi_halfspace(radii, s, h=h / 2.0, n=n, extrapolate=False)
        w1, w2 = h ** (1.0 - sv), (h / 2.0) ** (1.0 - sv)
        vals = (np.asarray(r2["phi"]) * w1 - np.asarray(r1["phi"]) * w2) / (w1 - w2)
        return {"radii": r1["radii"], "phi": vals,
                "variation": float(vals.max() / vals.min() - 1.0)}
    radii = sorted(float(R) for R in radii)
    tq, twq = roots_jacobi(48, 0.0, sv - 1.0)  # weight (1+x)^{s-1} <-> theta^{s-1}
    out = {}
    for R in radii:
        # geometric panels from far below the mollification scale up to R so
        # the interface blob (rho ~ h, |grad U| ~ 1/h) is fully resolved
        edges = np.geomspace(1e-3 * h, R, 110)
        xg, wg = roots_legendre(12)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            for g, w in zip(xg, wg):
                rho = 0.5 * (a + b) + 0.5 * (b - a) * g
                wrho = 0.5 * (b - a) * w
                # theta in (0, pi): z = rho sin, symmetric about pi/2; the
                # z^{1-s}|grad U|^2 integrand behaves like theta^{s-1} at the
                # ends, matching the Jacobi weight
                th = (tq + 1.0) * (math.pi / 4.0)
                wth = twq * (math.pi / 4.0) ** sv
                for sign_ in (1.0, -1.0):
                    tt = th if sign_ > 0 else math.pi - th
                    xx = rho * np.cos(tt)
                    zz = rho * np.sin(tt)
                    gx, gz = halfspace_extension_gradient(xx, zz, sv, h)
                    f = (zz ** (1.0 - sv) * (gx**2 + gz**2)) / th ** (sv - 1.0)
                    total += wrho * rho * float(np.sum(wth * f))
        out[R] = R ** (sv - n) * beta(sv) / 2.0 * total
    vals = np.array([out[R] for R in radii])
    return {"radii": radii, "phi": vals,
            "variation": float(vals.max() / vals.min() - 1.0)}
