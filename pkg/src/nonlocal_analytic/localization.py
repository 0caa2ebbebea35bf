"""
Nested radial cutoffs on shrinking balls and the derivative decomposition they induce.

For a centre ``x0``, radius ``R``, layer width ``eps`` and depth ``j`` we use
``omega_delta = B_{R - delta}(x0)`` and build

* ``Phi``, equal to 1 on ``omega_{eps(j+1)}`` and supported in ``omega_{eps(j+3/4)}``;
* ``eta_k``, vanishing on ``omega_{eps(j-k+1/2)}`` and equal to 1 off ``omega_{eps(j-k+1/4)}``;
* ``chi_0 = 1 - eta_0`` and ``chi_k = eta_{k-1} - eta_k`` for ``k >= 1``.

All of them are radial compositions of one smooth monotone ramp, so the
partition identities hold up to a single rounding.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .spectral_core import (
    Field,
    GridSpec,
    MultiIndex,
    band_limited_random,
    resample,
    spectral_derivative,
)

PARTITION_TOL = 1e-12


class GeometryError(ValueError):
    """Localization geometry violates ``eps (j+1) <= R/2`` or is under-resolved."""


class ChainError(ValueError):
    """Multi-index chain does not satisfy the decomposition hypotheses."""


# ---------------------------------------------------------------------------
# transition profile

def _f(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def ramp(t) -> np.ndarray:
    """C-infinity ramp: 0 for ``t <= 0``, 1 for ``t >= 1``, ``f(t)/(f(t)+f(1-t))`` between."""
    t = np.asarray(t, dtype=float)
    a, b = _f(t), _f(1.0 - t)
    return a / (a + b)


def ramp_derivative(t) -> np.ndarray:
    """Exact derivative of :func:`ramp`."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0) & (t < 1)
    ti = t[inside]
    a, b = np.exp(-1.0 / ti), np.exp(-1.0 / (1.0 - ti))
    da, db = a / ti**2, b / (1.0 - ti) ** 2
    out[inside] = (da * b + a * db) / (a + b) ** 2
    return out


def step_down(rho, a: float, b: float) -> np.ndarray:
    """Radial step: 1 for ``rho <= a``, 0 for ``rho >= b``."""
    return ramp((b - np.asarray(rho, dtype=float)) / (b - a))


def step_down_slope(rho, a: float, b: float) -> np.ndarray:
    """``|d/drho step_down(rho; a, b)|``."""
    return ramp_derivative((b - np.asarray(rho, dtype=float)) / (b - a)) / (b - a)


# ---------------------------------------------------------------------------
# geometry

@dataclass(frozen=True)
class LocalizationGeometry:
    """Centre, radius, layer width and depth of a localization family."""

    x0: tuple[float, ...]
    R: float
    eps: float
    j: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "x0", tuple(float(c) for c in np.atleast_1d(self.x0)))
        if not (0 < self.R <= 1):
            raise GeometryError(f"R must lie in (0, 1], got {self.R}")
        if self.j < 1 or self.eps <= 0:
            raise GeometryError("need j >= 1 and eps > 0")
        if self.eps * (self.j + 1) > self.R / 2 * (1 + 1e-12):
            raise GeometryError(f"eps (j+1) = {self.eps * (self.j + 1)} exceeds R/2 = {self.R / 2}")

    @classmethod
    def extremal(cls, x0, R: float, j: int) -> "LocalizationGeometry":
        """Largest admissible layer width ``eps = R / (2 (j+1))``."""
        return cls(x0, R, R / (2 * (j + 1)), j)

    @property
    def n(self) -> int:
        return len(self.x0)

    def omega_radius(self, delta: float) -> float:
        """Radius of ``omega_delta``; non-positive means empty."""
        return self.R - delta

    # cutoff transition bands as (inner, outer) radii
    def eta_band(self, k: int) -> tuple[float, float]:
        e, j, R = self.eps, self.j, self.R
        return R - e * (j - k + 0.5), R - e * (j - k + 0.25)

    def phi_band(self) -> tuple[float, float]:
        e, j, R = self.eps, self.j, self.R
        return R - e * (j + 1), R - e * (j + 0.75)

    def as_dict(self) -> dict:
        return {"x0": list(self.x0), "R": self.R, "eps": self.eps, "j": self.j}


@dataclass(frozen=True, eq=False)
class LocalizationFamily:
    """Sampled cutoffs ``Phi``, ``chi_0..chi_j``, ``eta_0..eta_j`` and the measured ``C_star``."""

    geom: LocalizationGeometry
    grid: GridSpec
    phi: Field
    chi: tuple[Field, ...]
    eta: tuple[Field, ...]
    C_star: float
    slopes: dict = field(default_factory=dict, repr=False)


def _sample_cutoffs(geom: LocalizationGeometry, grid: GridSpec):
    rho = grid.radius(geom.x0)
    eta = [1.0 - step_down(rho, *geom.eta_band(k)) for k in range(geom.j + 1)]
    chi = [1.0 - eta[0]] + [eta[k - 1] - eta[k] for k in range(1, geom.j + 1)]
    phi = step_down(rho, *geom.phi_band())
    return rho, phi, chi, eta


def build_family(geom: LocalizationGeometry, grid: GridSpec) -> LocalizationFamily:
    """Sample the cutoff family on ``grid`` and measure ``C_star``.

    ``C_star = eps * max |grad|`` over all ``chi_k`` and ``eta_k``, taken from
    the exact radial derivative at the grid points.
    """
    if grid.n != geom.n:
        raise GeometryError("grid and geometry dimensions differ")
    if grid.h > geom.eps / 16 * (1 + 1e-12):
        raise GeometryError(f"grid spacing {grid.h:g} does not resolve eps/16 = {geom.eps / 16:g}")
    if np.any(np.abs(np.asarray(geom.x0)) + geom.R >= grid.L):
        raise GeometryError("ball B_R(x0) does not fit inside the periodic box")
    rho, phi, chi, eta = _sample_cutoffs(geom, grid)

    eta_slopes = [step_down_slope(rho, *geom.eta_band(k)) for k in range(geom.j + 1)]
    chi_slopes = [eta_slopes[0]] + [
        # the two ramps of chi_k occupy disjoint shells, so the gradient is their sum
        eta_slopes[k - 1] + eta_slopes[k] for k in range(1, geom.j + 1)
    ]
    slopes = {
        "eta": [float(s.max()) for s in eta_slopes],
        "chi": [float(s.max()) for s in chi_slopes],
        "phi": float(step_down_slope(rho, *geom.phi_band()).max()),
    }
    C_star = geom.eps * max(max(slopes["eta"]), max(slopes["chi"]))
    return LocalizationFamily(
        geom,
        grid,
        Field(grid, phi),
        tuple(Field(grid, c) for c in chi),
        tuple(Field(grid, e) for e in eta),
        float(C_star),
        slopes,
    )


# ---------------------------------------------------------------------------
# verification

@dataclass(frozen=True)
class PartitionReport:
    """Max-norm residuals of the three partition identities and of the range/support checks."""

    chi0_eta0: float
    chi_eta_off_ball: float
    eta_telescoping: float
    range_violation: float
    support_distances: dict
    tol: float = PARTITION_TOL

    @property
    def passed(self) -> bool:
        return max(self.chi0_eta0, self.chi_eta_off_ball, self.eta_telescoping) <= self.tol and self.range_violation <= self.tol

    def as_dict(self) -> dict:
        return {
            "chi0_eta0": self.chi0_eta0,
            "chi_eta_off_ball": self.chi_eta_off_ball,
            "eta_telescoping": self.eta_telescoping,
            "range_violation": self.range_violation,
            "support_distances": self.support_distances,
            "tol": self.tol,
            "passed": self.passed,
        }


def _support_radii(values: np.ndarray, rho: np.ndarray) -> tuple[float, float]:
    nz = np.abs(values) > 0
    if not nz.any():
        return math.inf, -math.inf
    return float(rho[nz].min()), float(rho[nz].max())


def support_distances(fam: LocalizationFamily) -> dict:
    """Measured radial gaps between supports and their nominal values.

    Gaps are between the outer support radius of ``Phi`` and the inner support
    radius of ``chi_k`` (``k >= 1``) or ``eta_j``; grid sampling makes the
    measured gap at most one cell larger than the nominal one.
    """
    g = fam.geom
    rho = fam.grid.radius(g.x0)
    _, phi_out = _support_radii(fam.phi.values.real, rho)
    out = {"cell": fam.grid.h * math.sqrt(g.n)}
    chi_gaps = []
    for k in range(1, g.j + 1):
        lo, _ = _support_radii(fam.chi[k].values.real, rho)
        chi_gaps.append({"k": k, "measured": lo - phi_out, "nominal": g.eps * (k - 0.75)})
    lo, _ = _support_radii(fam.eta[g.j].values.real, rho)
    out["chi"] = chi_gaps
    out["eta_j"] = {"measured": lo - phi_out, "nominal": g.eps * (g.j + 0.25)}
    return out


def verify_partition(fam: LocalizationFamily) -> PartitionReport:
    """Residuals of ``chi_0 + eta_0 = 1``, ``chi_k + eta_k = 1`` off ``omega_{eps(j-k+5/4)}``
    and ``eta_k = chi_{k+1} + eta_{k+1}``."""
    g = fam.geom
    rho = fam.grid.radius(g.x0)
    chi = [c.values for c in fam.chi]
    eta = [e.values for e in fam.eta]
    r1 = float(np.max(np.abs(chi[0] + eta[0] - 1.0)))
    r2 = 0.0
    for k in range(1, g.j + 1):
        off = rho >= g.omega_radius(g.eps * (g.j - k + 1.25))
        if off.any():
            r2 = max(r2, float(np.max(np.abs(chi[k][off] + eta[k][off] - 1.0))))
    r3 = 0.0
    for k in range(g.j):
        r3 = max(r3, float(np.max(np.abs(eta[k] - chi[k + 1] - eta[k + 1]))))
    rng_viol = 0.0
    for v in [fam.phi.values, *chi, *eta]:
        rng_viol = max(rng_viol, float(np.max(np.maximum(-v.real, v.real - 1.0))), float(np.max(np.abs(v.imag))))
    return PartitionReport(r1, r2, r3, max(rng_viol, 0.0), support_distances(fam))


# ---------------------------------------------------------------------------
# decomposition of D^sigma g

def lexicographic_chain(sigma: MultiIndex, ell: int) -> list[MultiIndex]:
    """``beta_0 = 0`` and ``beta_{k+1} = beta_k + e_nu`` with ``nu`` the first coordinate where ``sigma - beta_k > 0``."""
    chain = [MultiIndex.zero(sigma.n)]
    for _ in range(ell):
        rest = sigma - chain[-1]
        nu = next(i for i, r in enumerate(rest.entries) if r > 0)
        chain.append(chain[-1] + MultiIndex.unit(sigma.n, nu))
    return chain


def random_chain(sigma: MultiIndex, ell: int, rng: np.random.Generator) -> list[MultiIndex]:
    """Chain with each increment drawn uniformly from the coordinates still available in ``sigma``."""
    chain = [MultiIndex.zero(sigma.n)]
    for _ in range(ell):
        rest = sigma - chain[-1]
        options = [i for i, r in enumerate(rest.entries) if r > 0]
        nu = int(rng.choice(options))
        chain.append(chain[-1] + MultiIndex.unit(sigma.n, nu))
    return chain


def _validate_chain(sigma: MultiIndex, ell: int, chain: Sequence[MultiIndex]) -> list[MultiIndex]:
    chain = list(chain)
    if len(chain) == ell:
        chain = [MultiIndex.zero(sigma.n)] + chain
    if len(chain) != ell + 1:
        raise ChainError(f"chain needs {ell + 1} entries (beta_0..beta_ell), got {len(chain)}")
    if not 1 <= ell <= sigma.order:
        raise ChainError(f"need 1 <= ell <= |sigma| = {sigma.order}")
    for k, b in enumerate(chain):
        if b.n != sigma.n or b.order != k:
            raise ChainError(f"beta_{k} = {b} must have order {k}")
        if k and not chain[k - 1] < b:
            raise ChainError(f"beta_{k - 1} < beta_{k} fails")
    if not chain[-1] <= sigma:
        raise ChainError(f"beta_ell = {chain[-1]} is not <= sigma = {sigma}")
    return chain


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Terms of the decomposition on the padded grid and the relative residual."""

    near: tuple[Field, ...]
    commutators: tuple[Field, ...]
    far: Field
    target: Field
    residual: float

    @property
    def terms(self) -> list[Field]:
        return [*self.near, *self.commutators, self.far]


def edgardo_decompose(g: Field, fam: LocalizationFamily, sigma: MultiIndex, ell: int,
                      chain: Sequence[MultiIndex], pad: int = 2) -> Decomposition:
    """Split ``D^sigma g`` into near, commutator and far terms.

    ``sum_k D^{beta_k}(chi_k D^{sigma-beta_k} g)
    + sum_k D^{beta_k}(eta_k D^{mu_k} h_k - D^{mu_k}(eta_k h_k))
    + D^{beta_ell}(eta_ell D^{sigma-beta_ell} g)``, with
    ``h_k = D^{sigma-beta_{k+1}} g`` and ``mu_k = beta_{k+1} - beta_k``.
    Products are formed on a grid refined by ``pad`` with the cutoffs
    re-sampled exactly there.
    """
    geom = fam.geom
    if sigma.order != geom.j:
        raise ChainError(f"|sigma| = {sigma.order} must equal j = {geom.j}")
    chain = _validate_chain(sigma, ell, chain)
    if g.grid != fam.grid:
        raise GeometryError("field and family live on different grids")
    fine = fam.grid.refined(pad) if pad > 1 else fam.grid
    gf = resample(g, fine)
    _, _, chi, eta = _sample_cutoffs(geom, fine)
    cap = max(sigma.order, 1) + 1

    def D(f: Field, b: MultiIndex) -> Field:
        return spectral_derivative(f, b, max_order=cap)

    u = [D(gf, sigma - b) for b in chain]
    near = tuple(D(u[k] * Field(fine, chi[k]), chain[k]) for k in range(ell + 1))
    comms = []
    for k in range(ell):
        mu = chain[k + 1] - chain[k]
        h = u[k + 1]
        e = Field(fine, eta[k])
        comms.append(D(e * D(h, mu) - D(e * h, mu), chain[k]))
    far = D(u[ell] * Field(fine, eta[ell]), chain[ell])
    target = u[0]
    total = far
    for t in (*near, *comms):
        total = total + t
    denom = target.norm()
    residual = (total - target).norm() / denom if denom > 0 else (total - target).norm()
    return Decomposition(near, tuple(comms), far, target, float(residual))


# ---------------------------------------------------------------------------
# export

def family_summary(fam: LocalizationFamily, report: PartitionReport | None = None) -> dict:
    out = {
        "geometry": fam.geom.as_dict(),
        "grid": {"n": fam.grid.n, "L": fam.grid.L, "N": fam.grid.N},
        "C_star": fam.C_star,
        "max_slopes": fam.slopes,
    }
    if report is not None:
        out["partition"] = report.as_dict()
    return out


def write_family_json(path, fam: LocalizationFamily, report: PartitionReport | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(family_summary(fam, report), fh, indent=2)


def write_cross_section_csv(path, geom: LocalizationGeometry, samples: int = 2001) -> None:
    """Radial cross-section of every cutoff through ``x0`` along the first axis."""
    rho = np.linspace(0.0, geom.R * 1.1, samples)
    eta = [1.0 - step_down(rho, *geom.eta_band(k)) for k in range(geom.j + 1)]
    chi = [1.0 - eta[0]] + [eta[k - 1] - eta[k] for k in range(1, geom.j + 1)]
    phi = step_down(rho, *geom.phi_band())
    header = ["rho", "phi"] + [f"chi_{k}" for k in range(geom.j + 1)] + [f"eta_{k}" for k in range(geom.j + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(samples):
            w.writerow([repr(float(rho[i])), repr(float(phi[i]))] + [repr(float(c[i])) for c in chi]
                       + [repr(float(e[i])) for e in eta])


# ---------------------------------------------------------------------------
# sweeps

def resolving_grid(geom: LocalizationGeometry, L: float, cells_per_eps: int = 16) -> GridSpec:
    """Smallest fast even FFT size with ``h <= eps / cells_per_eps`` on ``[-L, L)^n``."""
    N = sfft.next_fast_len(int(math.ceil(2 * L * cells_per_eps / geom.eps)))
    while N % 2:
        N = sfft.next_fast_len(N + 1)
    return GridSpec(geom.n, L, N)


def default_sigma(n: int, j: int) -> MultiIndex:
    """``(j)`` in one dimension, ``(j - j//2, j//2, 0, ...)`` otherwise."""
    if n == 1:
        return MultiIndex((j,))
    return MultiIndex((j - j // 2, j // 2) + (0,) * (n - 2))


def localization_sweep(n: int, js: Sequence[int], chains: int = 3, ells: str = "all",
                       R: float = 1.0, L: float = 1.1, seed: int = 0) -> list[dict]:
    """Partition identities and decomposition residuals for each depth ``j``.

    ``ells`` is ``"all"`` (every ``1 <= ell <= j``) or ``"ends"`` (``ell`` in
    ``{1, j}``).  Each ``(sigma, ell)`` is tested with ``chains`` random
    chains; the test field is a unit band-limited random function.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for j in js:
        geom = LocalizationGeometry.extremal((0.0,) * n, R, j)
        grid = resolving_grid(geom, L)
        fam = build_family(geom, grid)
        rep = verify_partition(fam)
        g = band_limited_random(grid, grid.k_max / 2, rng)
        sigma = default_sigma(n, j)
        ell_list = range(1, j + 1) if ells == "all" else sorted({1, j})
        residuals = []
        for ell in ell_list:
            for _ in range(chains):
                chain = random_chain(sigma, ell, rng)
                residuals.append(edgardo_decompose(g, fam, sigma, ell, chain).residual)
        rows.append({
            "n": n, "j": j, "eps": geom.eps, "N": grid.N, "C_star": fam.C_star,
            "partition": rep.as_dict(), "partition_passed": rep.passed,
            "sigma": str(sigma), "decompositions": len(residuals),
            "max_residual": max(residuals),
        })
    return rows
