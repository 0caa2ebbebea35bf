"""
Quantitative estimates: analyticity constants of potentials, the smoothing
estimate and its certificates, operator-norm measurements and the
combinatorial inequalities used in the induction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np
from scipy import fft as sfft
from scipy import optimize

from . import spectral_core as sc
from .kernels import (
    HProfile,
    H_tail_norm,
    hermite_table,
    smoothing_constants,
)
from .spectral_core import Ball, Field, GridSpec, MultiIndex, OperatorSpec, multi_indices

REL_SLACK = 1e-9


class PotentialError(ValueError):
    """Invalid potential specification or evaluation region."""


# ---------------------------------------------------------------------------
# potentials

def _taylor_power(q0: np.ndarray, lin: np.ndarray, quad: float, p: float, order: int, n: int) -> np.ndarray:
    """Taylor coefficients of ``(q0 + lin . h + quad |h|^2)^p`` in ``h`` up to total degree ``order``.

    ``q0`` has shape ``(P,)``, ``lin`` shape ``(P, n)``.  Returns an array of
    shape ``(P,) + (order+1,)*n``; entry ``[i, a]`` is the coefficient of ``h^a``.
    """
    P = q0.shape[0]
    shape = (P,) + (order + 1,) * n
    # relative perturbation r(h) = (lin . h + quad |h|^2) / q0, no constant term
    terms = []
    for i in range(n):
        idx = [0] * n
        idx[i] = 1
        terms.append((tuple(idx), lin[:, i] / q0))
        idx2 = [0] * n
        idx2[i] = 2
        terms.append((tuple(idx2), np.full(P, quad) / q0))

    def times_r(S: np.ndarray) -> np.ndarray:
        out = np.zeros(shape)
        for shift, coef in terms:
            src = (slice(None),) + tuple(slice(0, order + 1 - s) for s in shift)
            dst = (slice(None),) + tuple(slice(s, order + 1) for s in shift)
            out[dst] += coef.reshape((P,) + (1,) * n) * S[src]
        return out

    total = np.zeros(shape)
    power = np.zeros(shape)
    power[(slice(None),) + (0,) * n] = 1.0
    binom = 1.0
    for k in range(order + 1):
        total += binom * power
        power = times_r(power)
        binom *= (p - k) / (k + 1)
    return total * (q0 ** p).reshape((P,) + (1,) * n)


@dataclass(frozen=True)
class AnalyticTerm:
    """One catalog term of the analytic part of a potential.

    kinds: ``constant`` (amp), ``gaussian`` (amp e^{-a|x-c|^2}), ``rational``
    (amp / (1 + |x-c|^2)), ``coulomb`` (amp / |x-c|, singular at ``c``),
    ``trig`` (amp cos(k.x + phase)).
    """

    kind: str
    amp: float = 1.0
    center: tuple[float, ...] = ()
    a: float = 1.0
    wavevector: tuple[float, ...] = ()
    phase: float = 0.0

    KINDS = ("constant", "gaussian", "rational", "coulomb", "trig")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise PotentialError(f"unknown term kind {self.kind!r}")

    def _c(self, n: int) -> np.ndarray:
        return np.zeros(n) if not self.center else np.asarray(self.center, dtype=float)

    def singular_point(self, n: int) -> np.ndarray | None:
        return self._c(n) if self.kind == "coulomb" else None

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.derivatives(x, 0)[(slice(None),) + (0,) * x.shape[-1]]

    def derivatives(self, x: np.ndarray, order: int) -> np.ndarray:
        """All ``D^sigma`` with each ``sigma_i <= order``; indexed ``[point, sigma_1, ..., sigma_n]``.

        Only entries with ``|sigma| <= order`` are meaningful.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        P, n = x.shape
        shape = (P,) + (order + 1,) * n
        if self.kind == "constant":
            out = np.zeros(shape)
            out[(slice(None),) + (0,) * n] = self.amp
            return out
        if self.kind == "trig":
            kv = np.asarray(self.wavevector, dtype=float) if self.wavevector else np.ones(n)
            arg = x @ kv + self.phase
            out = np.zeros(shape)
            for sig in np.ndindex(*(order + 1,) * n):
                tot = sum(sig)
                if tot > order:
                    continue
                out[(slice(None),) + sig] = self.amp * np.prod(kv ** np.array(sig)) * np.cos(arg + tot * math.pi / 2)
            return out
        if self.kind == "gaussian":
            y = (x - self._c(n)) * math.sqrt(self.a)
            per_axis = []
            for i in range(n):
                H = hermite_table(y[:, i], order)
                g = np.exp(-y[:, i] ** 2)
                per_axis.append([(-1) ** k * self.a ** (k / 2) * H[k] * g for k in range(order + 1)])
            out = np.zeros(shape)
            for sig in np.ndindex(*(order + 1,) * n):
                if sum(sig) > order:
                    continue
                v = np.full(P, self.amp)
                for i, k in enumerate(sig):
                    v = v * per_axis[i][k]
                out[(slice(None),) + sig] = v
            return out
        # rational and coulomb: powers of a quadratic
        dx = x - self._c(n)
        if self.kind == "rational":
            q0 = 1.0 + np.sum(dx * dx, axis=1)
            p = -1.0
        else:
            q0 = np.sum(dx * dx, axis=1)
            if np.any(q0 == 0):
                raise PotentialError("evaluation at the Coulomb singularity")
            p = -0.5
        coef = _taylor_power(q0, 2.0 * dx, 1.0, p, order, n)
        fact = np.ones((order + 1,) * n)
        for sig in np.ndindex(*(order + 1,) * n):
            fact[sig] = math.prod(math.factorial(s) for s in sig)
        return self.amp * coef * fact


@dataclass(frozen=True)
class SingularPart:
    """Truncated power ``amp |x - center|^{-alpha}`` for ``|x - center| < cutoff``."""

    alpha: float
    cutoff: float
    center: tuple[float, ...]
    amp: float = 1.0

    def value(self, x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(x) - np.asarray(self.center), axis=-1)
        out = np.zeros_like(r)
        inside = (r < self.cutoff) & (r > 0)
        out[inside] = self.amp * r[inside] ** (-self.alpha)
        return out


def admissible_t(n: int, s: float) -> tuple[str, float]:
    """Integrability requirement on the singular part: ``("eq", t)`` or ``("gt", 1)``."""
    if s < n / 4 and n >= 3:
        return "eq", n / (4 * s)
    if math.isclose(s, n / 4) and n in (2, 3):
        return "gt", 1.0
    return "eq", 1.0


@dataclass(frozen=True)
class PotentialSpec:
    """Potential ``V = analytic part + optional singular part`` with analyticity region ``omega``.

    ``t`` is the Lebesgue exponent claimed for the singular part; it is
    validated against the requirement for ``(n, s)``.
    """

    n: int
    analytic: tuple[AnalyticTerm, ...]
    omega: Ball
    s: float = 0.5
    singular: SingularPart | None = None
    t: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "analytic", tuple(self.analytic))
        if len(self.omega.x0) != self.n:
            raise PotentialError("omega centre dimension does not match n")
        rule, tval = admissible_t(self.n, self.s)
        if rule == "eq" and not math.isclose(self.t, tval):
            raise PotentialError(f"t must equal {tval} for n={self.n}, s={self.s}; got {self.t}")
        if rule == "gt" and not self.t > tval:
            raise PotentialError(f"t must exceed {tval} for n={self.n}, s={self.s}; got {self.t}")
        if self.singular is not None:
            if not self.singular.alpha * self.t < self.n:
                raise PotentialError("singular part is not in L^t: need alpha * t < n")
            gap = np.linalg.norm(np.asarray(self.singular.center) - np.asarray(self.omega.x0))
            if gap - self.singular.cutoff < self.omega.R:
                raise PotentialError("singular part meets the analyticity region")
        for term in self.analytic:
            c = term.singular_point(self.n)
            if c is not None and np.linalg.norm(c - np.asarray(self.omega.x0)) <= self.omega.R:
                raise PotentialError("Coulomb singularity lies inside the analyticity region")

    # catalog constructors -------------------------------------------------
    @classmethod
    def gaussian(cls, n: int, amp: float, a: float = 1.0, omega: Ball | None = None, s: float = 0.5) -> "PotentialSpec":
        om = omega or Ball((0.0,) * n, 1.0)
        return cls(n, (AnalyticTerm("gaussian", amp, a=a),), om, s, t=admissible_t(n, s)[1] + (admissible_t(n, s)[0] == "gt"))

    @classmethod
    def constant(cls, n: int, c: float, omega: Ball | None = None, s: float = 0.5) -> "PotentialSpec":
        om = omega or Ball((0.0,) * n, 1.0)
        return cls(n, (AnalyticTerm("constant", c),), om, s, t=admissible_t(n, s)[1] + (admissible_t(n, s)[0] == "gt"))

    @classmethod
    def from_string(cls, n: int, text: str, s: float = 0.5) -> "PotentialSpec":
        """Parse ``kind:amp[:param]``, e.g. ``gaussian:4`` or ``rational:1``."""
        parts = text.split(":")
        kind = parts[0]
        amp = float(parts[1]) if len(parts) > 1 else 1.0
        extra = float(parts[2]) if len(parts) > 2 else None
        t = admissible_t(n, s)[1] + (admissible_t(n, s)[0] == "gt")
        om = Ball((0.0,) * n, 1.0)
        if kind == "gaussian":
            term = AnalyticTerm("gaussian", amp, a=extra or 1.0)
        elif kind == "rational":
            term = AnalyticTerm("rational", amp)
        elif kind == "trig":
            term = AnalyticTerm("trig", amp, wavevector=(extra or 1.0,) * n)
        elif kind == "constant":
            term = AnalyticTerm("constant", amp)
        elif kind == "coulomb":
            c = extra if extra is not None else 3.0
            term = AnalyticTerm("coulomb", amp, center=(c,) + (0.0,) * (n - 1))
        else:
            raise PotentialError(f"unknown potential {text!r}")
        return cls(n, (term,), om, s, t=t)

    # evaluation -----------------------------------------------------------
    def analytic_value(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return sum((t.value(x) for t in self.analytic), np.zeros(x.shape[0]))

    def value(self, x: np.ndarray) -> np.ndarray:
        v = self.analytic_value(x)
        if self.singular is not None:
            v = v + self.singular.value(x)
        return v

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        pts = np.stack([np.broadcast_to(c, grid.shape) for c in grid.coords], axis=-1).reshape(-1, grid.n)
        return self.value(pts).reshape(grid.shape)

    def derivative_table(self, x: np.ndarray, order: int) -> np.ndarray:
        x = np.atleast_2d(x)
        return sum((t.derivatives(x, order) for t in self.analytic), np.zeros((x.shape[0],) + (order + 1,) * self.n))


def ball_samples(ball: Ball, n_per_axis: int = 201) -> np.ndarray:
    """Points of the closed ball: a cubic lattice clipped to the ball plus boundary points.

    ``n_per_axis`` applies in one dimension; fixed lattices of 81^2 and 25^3
    points are used in two and three dimensions.
    """
    n = len(ball.x0)
    c = np.asarray(ball.x0, dtype=float)
    if n == 1:
        return (c + np.linspace(-ball.R, ball.R, n_per_axis))[:, None]
    m = {2: 81, 3: 25}[n]
    axes = [np.linspace(-ball.R, ball.R, m)] * n
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    pts = pts[np.linalg.norm(pts, axis=1) <= ball.R]
    rng = np.random.default_rng(12345)
    sph = rng.standard_normal((8 * m * m, n))
    sph = ball.R * sph / np.linalg.norm(sph, axis=1, keepdims=True)
    axes_pts = np.concatenate([np.eye(n), -np.eye(n)]) * ball.R
    return c + np.concatenate([pts, sph, axes_pts])


def _order_sups(V: PotentialSpec, pts: np.ndarray, max_order: int) -> dict[int, float]:
    """``M_k = max_{|sigma| = k} sup |D^sigma V|`` over the sample points."""
    out = {k: 0.0 for k in range(max_order + 1)}
    for start in range(0, pts.shape[0], 2048):
        table = np.abs(V.derivative_table(pts[start:start + 2048], max_order))
        for sig in np.ndindex(*(max_order + 1,) * V.n):
            k = sum(sig)
            if k <= max_order:
                out[k] = max(out[k], float(table[(slice(None),) + sig].max()))
    return out


def _check_region(V: PotentialSpec, ball: Ball) -> None:
    for term in V.analytic:
        c = term.singular_point(V.n)
        if c is not None and np.linalg.norm(c - np.asarray(ball.x0)) <= ball.R:
            raise PotentialError("the ball touches a singularity of V")
    big = np.linalg.norm(np.asarray(ball.x0) - np.asarray(V.omega.x0)) + ball.R
    if big > V.omega.R * (1 + 1e-12):
        raise PotentialError("the ball is not contained in the analyticity region")


def analyticity_constant(V: PotentialSpec, ball: Ball, max_order: int = 12, samples: int = 2001) -> float:
    """Smallest ``A >= 1`` with ``sup_ball |D^sigma V| <= A^{|sigma|+1} |sigma|!`` for ``|sigma| <= max_order``."""
    if max_order > 12:
        raise ValueError("max_order is capped at 12")
    _check_region(V, ball)
    pts = ball_samples(ball, samples)
    sups = _order_sups(V, pts, max_order)
    A = 1.0
    for k, M in sups.items():
        if M > 0:
            A = max(A, (M / math.factorial(k)) ** (1.0 / (k + 1)))
    return A


@dataclass(frozen=True)
class ScaledCheck:
    eps: float
    ell: int
    order: int
    lhs: float
    rhs: float
    vacuous: bool

    @property
    def passed(self) -> bool:
        return self.vacuous or self.lhs <= self.rhs * (1 + REL_SLACK)


def scaled_derivative_bound_check(V: PotentialSpec, ball: Ball, A: float, orders: Sequence[int],
                                  eps_values: Sequence[float], ells: Sequence[int], samples: int = 2001) -> list[ScaledCheck]:
    """Check ``eps^{|sigma|} sup_{B_{R - eps ell}} |D^sigma V| <= A^{|sigma|+1} |sigma|! ell^{-|sigma|}``."""
    out = []
    kmax = max(orders)
    for eps in eps_values:
        for ell in ells:
            radius = ball.R - eps * ell
            if radius <= 0:
                out.extend(ScaledCheck(eps, ell, k, 0.0, math.inf, True) for k in orders)
                continue
            pts = ball_samples(Ball(ball.x0, radius), samples)
            sups = _order_sups(V, pts, kmax)
            for k in orders:
                rhs = A ** (k + 1) * math.factorial(k) * (float(ell) ** (-k) if ell > 0 else (1.0 if k == 0 else math.inf))
                out.append(ScaledCheck(eps, ell, k, eps**k * sups[k], rhs, False))
    return out


# ---------------------------------------------------------------------------
# norm triples and the right-hand side of the smoothing estimate

@dataclass(frozen=True)
class NormTriple:
    """Exponents with ``1/p + 1/q + 1/r = 2``."""

    p: float
    q: float
    r: float

    def __post_init__(self) -> None:
        if not (self.p >= 1 and self.r >= 1 and self.q > 1):
            raise ValueError(f"need p, r >= 1 and q > 1, got {self}")
        if abs(1 / self.p + 1 / self.q + 1 / self.r - 2) > 1e-12:
            raise ValueError(f"1/p + 1/q + 1/r = {1 / self.p + 1 / self.q + 1 / self.r} != 2")

    @property
    def q_star(self) -> float:
        return self.q / (self.q - 1)


def triple_table(n: int, s: float) -> list[NormTriple]:
    """``(2, 2, 1)``, ``(p2, 2, r2)`` with ``p2 = max(2n/(n+4s), 1)``, ``r2 = min(n/(n-2s), 2)``, and ``(1, 2, 2)``."""
    p2 = max(2 * n / (n + 4 * s), 1.0)
    r2 = 2.0 if n <= 2 * s else min(n / (n - 2 * s), 2.0)
    out: list[NormTriple] = []
    for p, r in ((2.0, 1.0), (p2, r2), (1.0, 2.0)):
        t = NormTriple(p, 2.0, r)
        if all(abs(t.p - u.p) > 1e-12 or abs(t.r - u.r) > 1e-12 for u in out):
            out.append(t)
    return out


def smoothing_exponent(op: OperatorSpec, beta: MultiIndex, rr: float) -> float:
    """``|beta| - 2s + n(1 - 1/rr)``."""
    return beta.order - 2 * op.s + op.n * (1 - 1 / rr)


def predicted_rhs(op: OperatorSpec, beta: MultiIndex, d: float, rr: float, constants: dict | None = None,
                  phi_sup: float = 1.0, chi_sup: float = 1.0) -> float:
    """``c beta! (base/d)^{|beta| - 2s + n(1-1/rr)} ||Phi||_inf ||chi||_inf`` with the explicit constant chain."""
    if beta.order < 2:
        raise ValueError("the smoothing estimate needs |beta| >= 2")
    if not d > 0 or rr < 1:
        raise ValueError("need d > 0 and rr >= 1")
    const = constants if constants is not None else smoothing_constants(op, rr)
    return const["c"] * beta.factorial * (const["base"] / d) ** smoothing_exponent(op, beta, rr) * phi_sup * chi_sup


def young_bound_from_H(profile: HProfile, triple: NormTriple, phi_sup: float = 1.0, chi_sup: float = 1.0) -> float:
    """``||Phi||_inf ||chi||_inf ||H||_{L^r(|z| >= d)}``, a bound on the ``L^p -> L^{q*}`` norm."""
    return phi_sup * chi_sup * H_tail_norm(profile, triple.r)


@dataclass(frozen=True)
class BoundCertificate:
    measured: float
    predicted_rhs: float
    inputs: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.predicted_rhs / self.measured if self.measured > 0 else math.inf

    @property
    def passed(self) -> bool:
        return self.margin >= 1 - REL_SLACK

    def row(self) -> dict:
        return {**self.inputs, "measured": self.measured, "rhs": self.predicted_rhs, "margin": self.margin, "pass": self.passed}


# ---------------------------------------------------------------------------
# operator norms on the grid

@dataclass(frozen=True)
class NormEstimate:
    """Largest singular value from power iteration; a lower bound if not converged."""

    value: float
    iterations: int
    converged: bool
    seed: int

    def __float__(self) -> float:
        return self.value


def input_filter(grid: GridSpec, fraction: float | None) -> np.ndarray:
    """Gaussian low-pass ``exp(-|k|^2 / 2 k_w^2)``, ``k_w = fraction * k_max``; ones if ``fraction`` is None."""
    if fraction is None:
        return np.ones(grid.shape)
    kw = fraction * grid.k_max
    return np.exp(-0.5 * (grid.kabs / kw) ** 2)


def _power_iteration(apply, apply_adj, shape, rng, tol: float, max_iter: int) -> tuple[float, int, bool]:
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    prev = 0.0
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = apply(v)
        lam = float(np.vdot(w, w).real)
        u = apply_adj(w)
        nu = np.linalg.norm(u)
        if nu == 0:
            return 0.0, it, True
        v = u / nu
        if it > 1 and abs(lam - prev) <= tol * lam:
            return math.sqrt(lam), it, True
        prev = lam
    return math.sqrt(lam), max_iter, False


def operator_norm_L2(phi: Field, beta: MultiIndex, chi: Field, op: OperatorSpec, *, seed: int = 0,
                     tol: float = 1e-6, max_iter: int = 2000, starts: int = 2,
                     filter_fraction: float | None = 0.125) -> NormEstimate:
    """Norm of ``Phi E^{-1} D^beta chi P`` on the grid by power iteration on ``K^* K``.

    ``P`` is a smooth Gaussian low-pass on the input (``filter_fraction`` of
    the Nyquist wavenumber).  Since ``||P|| <= 1`` the result is a lower
    bound for the norm of the continuum operator, and it suppresses the
    spurious near-Nyquist modes that a sharp grid symbol would produce.
    """
    grid = phi.grid
    if chi.grid != grid or op.n != grid.n or beta.n != grid.n:
        raise sc.GridMismatchError("Phi, chi, beta and op must share the grid dimension")
    sym = sc.derivative_symbol(grid, beta) * op.inverse_symbol(grid.kabs)
    if beta.order % 2:
        sym[grid.nyquist_mask] = 0.0
    P = input_filter(grid, filter_fraction)
    ph, ch = phi.values, chi.values
    w = sc.FFT_WORKERS

    def apply(v):
        x = sfft.ifftn(P * sfft.fftn(v, workers=w), workers=w)
        return ph * sfft.ifftn(sym * sfft.fftn(ch * x, workers=w), workers=w)

    def apply_adj(y):
        x = sfft.ifftn(np.conj(sym) * sfft.fftn(np.conj(ph) * y, workers=w), workers=w)
        return sfft.ifftn(P * sfft.fftn(np.conj(ch) * x, workers=w), workers=w)

    best = (0.0, 0, False)
    for k in range(starts):
        rng = np.random.default_rng([seed, k])
        res = _power_iteration(apply, apply_adj, grid.shape, rng, tol, max_iter)
        if res[0] > best[0]:
            best = res
    return NormEstimate(best[0], best[1], best[2], seed)


def transverse_weight(beta_perp: Sequence[int]) -> float:
    """``max |k_2^{b_2} ... k_n^{b_n}|`` over unit transverse vectors."""
    tot = sum(beta_perp)
    if tot == 0:
        return 1.0
    return math.prod((b / tot) ** (b / 2) for b in beta_perp if b)


def operator_norm_slab(phi: Field, beta: MultiIndex, chi: Field, op: OperatorSpec, *, seed: int = 0,
                       tol: float = 1e-6, filter_fraction: float | None = 0.125, rho_samples: int = 12,
                       d: float | None = None) -> NormEstimate:
    """Norm of ``Phi E^{-1} D^beta chi`` for cutoffs depending on ``x_1`` only, in ``n = op.n`` dimensions.

    The operator commutes with transverse translations, so its norm is the
    supremum over transverse wavenumbers ``rho`` of the norms of the
    one-dimensional fiber operators with symbol
    ``(i k_1)^{beta_1} w rho^{|beta_perp|} E^{-1}(sqrt(k_1^2 + rho^2))``.
    ``phi`` and ``chi`` live on a one-dimensional grid.
    """
    grid = phi.grid
    if grid.n != 1 or chi.grid != grid:
        raise sc.GridMismatchError("slab cutoffs must live on a shared one-dimensional grid")
    if beta.n != op.n:
        raise ValueError("beta dimension must match the operator")
    k1 = grid.k1d
    b1, bperp = beta.entries[0], beta.entries[1:]
    tw = transverse_weight(bperp)
    nperp = sum(bperp)
    P = input_filter(grid, filter_fraction)
    ph, ch = phi.values, chi.values
    iters = 0

    def fiber(rho: float) -> float:
        nonlocal iters
        sym = (1j * k1) ** b1 * tw * rho**nperp * op.inverse_symbol(np.sqrt(k1 * k1 + rho * rho))
        if b1 % 2:
            sym[grid.N // 2] = 0.0

        def apply(v):
            return ph * sfft.ifft(sym * sfft.fft(ch * sfft.ifft(P * sfft.fft(v))))

        def apply_adj(y):
            return sfft.ifft(P * sfft.fft(np.conj(ch) * sfft.ifft(np.conj(sym) * sfft.fft(np.conj(ph) * y))))

        val, it, ok = _power_iteration(apply, apply_adj, (grid.N,), np.random.default_rng([seed, int(rho * 1e6)]), tol, 2000)
        iters += it
        return val

    if op.n == 1:
        return NormEstimate(fiber(0.0), iters, True, seed)
    scale = d if d is not None else 2 * grid.h
    rhos = np.concatenate([[0.0], np.linspace(0.05, 6.0 * (nperp + 1) / scale, rho_samples)])
    vals = [fiber(float(r)) for r in rhos]
    i = int(np.argmax(vals))
    best = vals[i]
    lo, hi = rhos[max(i - 1, 0)], rhos[min(i + 1, len(rhos) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda r: -fiber(r), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-3 * (hi - lo)})
        best = max(best, -res.fun)
    return NormEstimate(best, iters, True, seed)


def separated_pair(grid: GridSpec, d: float, width: float, ramp_width: float) -> tuple[Field, Field]:
    """Bumps ``Phi`` on ``[-d/2 - width, -d/2]`` and ``chi`` on ``[d/2, d/2 + width]`` along ``x_1``.

    Each is 1 in the middle (when ``width > 2 ramp_width``) with smooth ramps of
    width ``ramp_width``; the supports are exactly ``d`` apart.
    """
    from .localization import step_down

    x = grid.coords[0]
    half = width / 2
    phi = step_down(np.abs(x + d / 2 + half), half - ramp_width, half)
    chi = step_down(np.abs(x - d / 2 - half), half - ramp_width, half)
    phi = np.broadcast_to(phi, grid.shape).copy()
    chi = np.broadcast_to(chi, grid.shape).copy()
    return Field(grid, phi), Field(grid, chi)


def C_s(m: float, s: float) -> float:
    """``sup_{k >= 0} k / (k^2 + m^2)^s`` by golden-section search on ``[0, 10m + 10]``.

    For ``s = 1/2`` the function increases to its supremum 1 at infinity.
    """
    if math.isclose(s, 0.5):
        return 1.0
    f = lambda k: -(k / (k * k + m * m) ** s)
    hi = 10 * m + 10
    kstar_guess = m / math.sqrt(2 * s - 1)
    while kstar_guess >= hi:
        hi *= 10
    mid = min(max(kstar_guess, 1e-6), hi * 0.999)
    res = optimize.minimize_scalar(f, bracket=(0.0, mid, hi), method="golden", tol=1e-12)
    return float(-res.fun)


# ---------------------------------------------------------------------------
# combinatorial inequalities

@dataclass
class CheckTally:
    name: str
    checked: int = 0
    violations: list = field(default_factory=list)

    def record(self, ok: bool, info) -> None:
        self.checked += 1
        if not ok:
            self.violations.append(info)

    def as_dict(self) -> dict:
        return {"name": self.name, "checked": self.checked, "violations": len(self.violations),
                "first_violations": [str(v) for v in self.violations[:5]]}


@dataclass
class CombinatorialReport:
    tallies: list[CheckTally]

    @property
    def passed(self) -> bool:
        return all(not t.violations for t in self.tallies)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": [t.as_dict() for t in self.tallies]}


def check_beta_factorial(j_max: int, n: int) -> CheckTally:
    """``beta! ((2n+2)/(j+1/4))^{|beta|} <= (8n+8)^{|beta|} (j+1)!/(j+1)^{j+1} <= (8n+8)^{|beta|}``, ``|beta| = j+1``.

    Exact integer form: ``beta! (j+1)^{j+1} <= (j+1)! (4j+1)^{j+1}`` and ``(j+1)! <= (j+1)^{j+1}``.
    """
    tally = CheckTally("beta-factorial")
    for j in range(1, j_max + 1):
        J = j + 1
        for beta in multi_indices(n, J):
            lhs = beta.factorial * J**J
            rhs = math.factorial(J) * (4 * j + 1) ** J
            tally.record(lhs <= rhs and math.factorial(J) <= J**J, (j, str(beta)))
    return tally


def check_leibniz_sum(j_max: int, A: float, B: float) -> CheckTally:
    """Term-wise and summed bounds of ``sum_m binom(J,m) m! (J-m)^{J-m} / J^J (A/B)^m <= sum (A/B)^m <= 2``."""
    if not B > 2 * A:
        raise ValueError("the geometric-sum bound needs B > 2A")
    tally = CheckTally("leibniz-geometric-sum")
    ratio = Fraction(A) / Fraction(B)
    for J in range(1, j_max + 1):
        total = Fraction(0)
        geom = Fraction(0)
        for m in range(J + 1):
            w = Fraction(math.comb(J, m) * math.factorial(m) * (J - m) ** (J - m), J**J)
            tally.record(w <= 1, ("term", J, m))
            total += w * ratio**m
            geom += ratio**m
        tally.record(total <= geom <= 2, ("sum", J))
    return tally


def check_stirling_step(beta_max: int, r_values: Sequence[float] = (1.0, 1.25, 1.5, 2.0, 3.0, 10.0)) -> CheckTally:
    """``(b-1-1/r)^{b-1-1/r} <= (b-1)^{b-1/2} <= b! e^b`` and the Stirling remainder ``theta`` lies in (0, 1).

    ``theta`` is defined by ``(b-1)! = sqrt(2 pi) (b-1)^{b-1/2} e^{-(b-1)} e^{theta/(12(b-1))}``.
    """
    tally = CheckTally("stirling-step")
    mpmath.mp.dps = 60
    for b in range(2, beta_max + 1):
        mid = mpmath.mpf(b - 1) ** (mpmath.mpf(b) - mpmath.mpf(1) / 2)
        top = mpmath.factorial(b) * mpmath.e**b
        for r in r_values:
            a = mpmath.mpf(b) - 1 - 1 / mpmath.mpf(r)
            low = a**a if a > 0 else mpmath.mpf(1)
            tally.record(low <= mid, ("lower", b, r))
        tally.record(mid <= top, ("upper", b))
        if b >= 3:
            nn = b - 1
            theta = 12 * nn * (mpmath.log(mpmath.factorial(nn)) - mpmath.log(mpmath.sqrt(2 * mpmath.pi))
                               - (nn + mpmath.mpf(1) / 2) * mpmath.log(nn) + nn)
            tally.record(0 < theta < 1, ("theta", b, float(theta)))
    return tally


def check_last_integral(beta_max: int, r_values: Sequence[float] = (1.0, 1.25, 1.5, 2.0, 3.0, 10.0)) -> CheckTally:
    """``int_0^1 t^{b-1/r-1} e^{-t} dt + int_1^inf t^{b-1/r-1} e^{-t} dt <= Gamma(b-1) + Gamma(b) <= 2 (b-1)! <= b!``."""
    tally = CheckTally("last-integral")
    mpmath.mp.dps = 40
    for b in range(2, beta_max + 1):
        g = mpmath.gamma(b - 1) + mpmath.gamma(b)
        for r in r_values:
            a = mpmath.mpf(b) - 1 / mpmath.mpf(r)
            lower = mpmath.gammainc(a, 0, 1)
            upper = mpmath.gammainc(a, 1, mpmath.inf)
            tally.record(lower <= mpmath.gamma(b - 1) and upper <= mpmath.gamma(b) and lower + upper <= g, (b, r))
        tally.record(g <= 2 * mpmath.factorial(b - 1) <= mpmath.factorial(b), (b, "gamma"))
    return tally


def combinatorial_checks(j_max: int = 40, n: int = 1, A: float = 1.0, B: float = 2.5, beta_max: int = 60) -> CombinatorialReport:
    """All exact inequalities of the induction bookkeeping; zero tolerance."""
    return CombinatorialReport([
        check_beta_factorial(j_max, n),
        check_leibniz_sum(j_max, A, B),
        check_stirling_step(beta_max),
        check_last_integral(beta_max),
    ])


# ---------------------------------------------------------------------------
# export

CERT_COLUMNS = ("n", "flavor", "s", "m", "beta", "d", "p", "q", "r", "stage", "measured", "rhs", "margin", "pass")


def write_certificates(rows: list[dict], csv_path, json_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CERT_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(row)
    summary = {
        "cases": len(rows),
        "failed": sum(1 for r in rows if not r["pass"]),
        "min_margin": min((r["margin"] for r in rows), default=math.inf),
    }
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2)


# ---------------------------------------------------------------------------
# the smoothing-estimate chain

@dataclass(frozen=True)
class ChainSettings:
    """Desk-scale settings of the smoothing chain sweep.

    Cutoffs are bumps of width ``width * d`` with ramps ``ramp * d`` along
    ``x_1``; in three dimensions they are slabs and the norm is computed
    fiberwise.
    """

    L: float = 2.0
    N1: int = 32768
    N3: int = 16384
    width: float = 0.25
    ramp: float = 0.125
    tol: float = 1e-8
    u_panels: int = 8


def beta_for_order(n: int, order: int) -> MultiIndex:
    """Axial multi-index ``(order, 0, ..., 0)``."""
    return MultiIndex((order,) + (0,) * (n - 1))


def smoothing_chain(op: OperatorSpec, order: int, ds: Sequence[float] = (0.25, 0.5, 1.0),
                    settings: ChainSettings = ChainSettings(), seed: int = 0) -> tuple[list[dict], float]:
    """Certificates ``||K||_{2->2} <= Young(quadrature H) <= Young(majorant H) <= rhs`` over ``ds``.

    The first link is checked for the ``L^2 -> L^2`` triple ``(2, 2, 1)``;
    the others for every triple of the table.  Returns the certificate rows
    and the fitted slope of ``log ||K||`` against ``log(1/d)``.
    """
    from .kernels import KernelQuadratureConfig, build_H_profile

    n = op.n
    beta = beta_for_order(n, order)
    grid = GridSpec(1, settings.L, settings.N1 if n == 1 else settings.N3)
    cfg = KernelQuadratureConfig(u_panels=settings.u_panels)
    rows: list[dict] = []
    norms = []
    for d in ds:
        phi, chi = separated_pair(grid, d, settings.width * d, settings.ramp * d)
        if n == 1:
            est = operator_norm_L2(phi, beta, chi, op, seed=seed, tol=settings.tol)
        else:
            est = operator_norm_slab(phi, beta, chi, op, seed=seed, tol=settings.tol, d=d)
        norms.append(est.value)
        pq = build_H_profile(op, beta, d, cfg, mode="quadrature")
        pm = build_H_profile(op, beta, d, cfg, mode="majorant")
        for tr in triple_table(n, op.s):
            yq = young_bound_from_H(pq, tr)
            ym = young_bound_from_H(pm, tr)
            rhs = predicted_rhs(op, beta, d, tr.r)
            base = {"n": n, "flavor": op.flavor, "s": op.s, "m": op.m, "beta": str(beta), "d": d,
                    "p": tr.p, "q": tr.q, "r": tr.r}
            stages = [("young_quadrature<=young_majorant", yq, ym), ("young_majorant<=rhs", ym, rhs)]
            if tr.p == 2 and tr.r == 1:
                stages.insert(0, ("norm<=young_quadrature", est.value, yq))
            for stage, lhs, bound in stages:
                cert = BoundCertificate(lhs, bound, {**base, "stage": stage})
                rows.append(cert.row())
    slope = float(np.polyfit(np.log(1.0 / np.asarray(ds)), np.log(norms), 1)[0])
    return rows, slope
