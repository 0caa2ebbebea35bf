"""
Derivative-growth diagnostic of real analyticity and the Fourier-decay fit.

For order ``j`` the scale is ``eps_j = R/(2j)``, so that ``eps_j j = R/2``
and every order is measured on the same ball ``B_{R/2}(x0)``.  The scaled
norms ``eps_j^{|beta|} ||D^beta phi||`` of an analytic field stay below a
geometric envelope ``C B^{|beta|}``; factorial-type excess growth shows up
as a convex trend in their logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral_core as sc
from .spectral_core import Ball, Field, MultiIndex, multi_indices

CONSISTENT = "consistent-with-analytic"
GROWTH = "growth-detected"
INCONCLUSIVE = "inconclusive"

LIMITATION = (
    "The diagnostic evaluates finitely many derivative orders of a sampled field. "
    "It can corroborate real analyticity on the ball but cannot verify it."
)

# signal must exceed this multiple of the conditioning estimate
NOISE_FACTOR = 5.0
# orders whose relative conditioning error exceeds this are dropped
MAX_CONDITIONING = 1e-2
# consecutive convex excess orders needed for a growth verdict
RUN_LENGTH = 3


class DiagnosticError(ValueError):
    """Invalid diagnostic input, e.g. an empty fit band."""


@dataclass(frozen=True)
class OrderRecord:
    """Scaled norms at one derivative order.

    ``q`` is ``max_{|beta| <= j} eps_j^{|beta|} ||D^beta phi||`` and
    ``q_exact`` the same quantity restricted to ``|beta| = j``, which is what
    the envelope fit uses.
    """

    j: int
    eps: float
    q: float
    q_exact: float
    argmax: str
    conditioning: float

    def as_dict(self) -> dict:
        return {"j": self.j, "eps": self.eps, "q": self.q, "q_exact": self.q_exact,
                "argmax_beta": self.argmax, "conditioning": self.conditioning}


@dataclass(frozen=True)
class AnalyticityReport:
    x0: tuple[float, ...]
    R: float
    j_max: int
    q0: float
    orders: tuple[OrderRecord, ...]
    C: float
    B: float
    active_order: int
    excess: tuple[float, ...]
    truncated_at: int | None
    verdict: str
    notes: tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "x0": list(self.x0),
            "R": self.R,
            "j_max": self.j_max,
            "q0": self.q0,
            "orders": [o.as_dict() for o in self.orders],
            "fit": {"C": self.C, "B": self.B, "active_order": self.active_order},
            "convex_excess": list(self.excess),
            "truncated_at": self.truncated_at,
            "verdict": self.verdict,
            "notes": list(self.notes),
            "limitation": LIMITATION,
        }


def fit_envelope(q0: float, q: list[float]) -> tuple[float, float, int]:
    """Smallest ``C`` and then smallest ``B >= 1`` with ``q_k <= C B^k`` for all ``k``.

    The order-0 constraint forces ``C >= q0``; with ``C = q0`` the smallest
    admissible ``B`` is ``max_k (q_k/q0)^{1/k}``.  Returns ``(C, B, k)`` with
    ``k`` the active order (0 when ``B`` is clamped to 1).
    """
    if q0 <= 0:
        raise DiagnosticError("the field vanishes on the ball")
    B, active = 1.0, 0
    for k, qk in enumerate(q, start=1):
        if qk <= 0:
            continue
        b = (qk / q0) ** (1.0 / k)
        if b > B:
            B, active = b, k
    return q0, B, active


def _conditioning(grid, spec: np.ndarray, k_eff: float, order: int, discarded: float | None) -> float:
    """Relative error estimate of ``||D^beta f||`` at ``|beta| = order`` from a band-limited spectrum.

    When the spectrum fell below the noise floor inside the grid band,
    ``discarded`` bounds the amplitude of the removed modes next to the cut
    and their derivative weight is ``discarded * k_eff^order``.  Otherwise
    the field is not resolved and the share carried by the top tenth of the
    band stands in.  Round-off amplification is added in both cases.
    """
    weight = np.abs(spec) * grid.kabs**order
    total = math.sqrt(float(np.sum(weight**2)))
    if total == 0:
        return math.inf
    if discarded is not None:
        lost = discarded * k_eff**order
    else:
        lost = math.sqrt(float(np.sum(weight[grid.kabs >= 0.9 * k_eff] ** 2)))
    roundoff = np.finfo(float).eps * k_eff**order * math.sqrt(float(np.sum(np.abs(spec) ** 2)))
    return (lost + roundoff) / total


def spectral_plateau(f: Field, factor: float = 100.0) -> float:
    """Relative round-off plateau of ``|f_hat|``: ``factor`` times its median over the upper half band.

    Clamped to ``[1e-16, 1e-10]``; the upper clamp keeps under-resolved
    fields from being filtered into apparent smoothness.
    """
    amp = np.abs(f.spectrum)
    peak = float(amp.max())
    if peak == 0:
        return 1e-16
    upper = amp[f.grid.kabs >= 0.5 * f.grid.k_max]
    level = float(np.median(upper)) / peak if upper.size else 0.0
    return min(max(factor * level, 1e-16), 1e-10)


def _band_cut(f: Field, floor: float) -> tuple[np.ndarray, float, float | None]:
    amp = np.abs(f.spectrum)
    peak = float(amp.max())
    if peak == 0:
        return np.zeros_like(f.spectrum), 0.0, None
    k = f.grid.kabs
    dk = math.pi / f.grid.L
    shell = np.rint(k / dk).astype(int)
    shell_max = np.zeros(shell.max() + 1)
    np.maximum.at(shell_max, shell.ravel(), amp.ravel())
    # search outward from the peak shell; empty low shells are not a cut
    start = int(np.argmax(shell_max))
    below = start + np.nonzero(shell_max[start:] < floor * peak)[0]
    cut = int(below[0]) if below.size else int(shell.max()) + 1
    keep = shell < cut
    k_eff = float(k[keep].max()) if keep.any() else 0.0
    # removed modes next to the cut are at most floor * peak each
    discarded = floor * peak * math.sqrt(int(np.sum(shell == cut))) if below.size else None
    return np.where(keep, f.spectrum, 0.0), k_eff, discarded


def band_limit(f: Field, floor: float) -> tuple[np.ndarray, float]:
    """Keep modes below the first shell beyond the peak whose largest ``|f_hat|`` falls below ``floor * peak``.

    Isolated round-off spikes further out are removed with everything else
    beyond that shell.  Returns the masked spectrum and the cut ``k_eff``.
    Derivatives must be taken from this array: transforming back to samples
    would reintroduce round-off at every wavenumber.
    """
    spec, k_eff, _ = _band_cut(f, floor)
    return spec, k_eff


def derivative_growth_report(phi: Field, x0, R: float, j_max: int,
                             max_order: int = sc.DEFAULT_MAX_DERIVATIVE_ORDER,
                             noise_floor: float | None = None) -> AnalyticityReport:
    """Scaled derivative norms on ``B_{R/2}(x0)`` for orders ``1..j_max``, envelope fit and verdict.

    Fourier modes below ``noise_floor`` times the peak are removed first;
    by default the floor is read off the round-off plateau of the spectrum.
    """
    if j_max < 1 or j_max > max_order:
        raise ValueError(f"j_max must lie in [1, {max_order}]")
    x0 = tuple(float(v) for v in np.broadcast_to(np.asarray(x0, dtype=float), (phi.grid.n,)))
    ball = Ball(x0, R)
    n = phi.grid.n
    notes: list[str] = []
    if noise_floor is None:
        noise_floor = spectral_plateau(phi)
    spec, k_eff, discarded = _band_cut(phi, noise_floor)
    grid = phi.grid
    q0 = sc.local_norm(Field.from_spectrum(grid, spec), ball, R / 2)

    # ||D^beta phi|| on the ball, max over |beta| = k
    raw: list[tuple[float, str]] = []
    cond: list[float] = []
    for k in range(1, j_max + 1):
        best, arg = 0.0, ""
        for beta in multi_indices(n, k):
            val = sc.local_norm(Field.from_spectrum(grid, spec * sc.derivative_symbol(grid, beta)), ball, R / 2)
            if val > best:
                best, arg = val, str(beta)
        raw.append((best, arg))
        cond.append(_conditioning(grid, spec, k_eff, k, discarded))

    truncated = None
    for k, c in enumerate(cond, start=1):
        if c > MAX_CONDITIONING:
            truncated = k - 1
            notes.append(f"orders >= {k} dropped: conditioning {c:.1e} exceeds {MAX_CONDITIONING:.0e}")
            break
    usable = j_max if truncated is None else truncated

    records = []
    for j in range(1, usable + 1):
        eps = R / (2 * j)
        q_exact = eps**j * raw[j - 1][0]
        q, arg = q0, str(MultiIndex.zero(n))
        for k in range(1, j + 1):
            v = eps**k * raw[k - 1][0]
            if v > q:
                q, arg = v, raw[k - 1][1]
        records.append(OrderRecord(j, eps, q, q_exact, arg, cond[j - 1]))

    qs = [r.q_exact for r in records]
    C, B, active = fit_envelope(q0, qs)

    # convexity of log q_k: second differences against the conditioning
    logs = [math.log(q0)] + [math.log(v) if v > 0 else -math.inf for v in qs]
    excess = []
    for k in range(2, len(logs)):
        excess.append(logs[k] - 2 * logs[k - 1] + logs[k - 2])
    run = 0
    grew = False
    for k, e in enumerate(excess, start=2):
        noise = NOISE_FACTOR * (cond[k - 1] + cond[k - 2] + (cond[k - 3] if k >= 3 else 0.0))
        if e > noise and e > 0:
            run += 1
            if run >= RUN_LENGTH:
                grew = True
        else:
            run = 0
    if grew:
        verdict = GROWTH
    elif usable < RUN_LENGTH + 2:
        verdict = INCONCLUSIVE
        notes.append("too few resolved orders for a verdict")
    else:
        verdict = CONSISTENT
    return AnalyticityReport(x0, R, j_max, q0, tuple(records), C, B, active, tuple(excess), truncated, verdict, tuple(notes))


@dataclass(frozen=True)
class DecayFit:
    """Exponential decay ``|phi_hat(k)| ~ exp(-a |k|)`` over the fitted band."""

    rate: float
    r_squared: float
    curvature: float
    convex: bool
    band: tuple[float, float]
    points: int

    def as_dict(self) -> dict:
        return {"rate": self.rate, "r_squared": self.r_squared, "curvature": self.curvature,
                "super_exponential": self.convex, "band": list(self.band), "points": self.points}


def fourier_decay_radius(phi: Field, lo: float = 1e-12, hi: float = 1e-2) -> DecayFit:
    """Least-squares slope of ``log |phi_hat|`` against ``|k|`` where ``|phi_hat| / max`` lies in ``[lo, hi]``.

    The decay rate is minus the slope.  ``curvature`` is the quadratic
    coefficient of a second fit; a clearly negative value (faster than
    exponential, as for a Gaussian) sets ``convex``.
    """
    spec = np.abs(phi.spectrum).ravel()
    k = phi.grid.kabs.ravel()
    peak = spec.max()
    if peak == 0:
        raise DiagnosticError("zero field")
    rel = spec / peak
    sel = (rel >= lo) & (rel <= hi) & (k > 0)
    if sel.sum() < 3:
        raise DiagnosticError("no spectral band between the noise floor and the peak region")
    ks, ys = k[sel], np.log(rel[sel])
    if np.ptp(ks) == 0:
        raise DiagnosticError("band covers a single wavenumber shell")
    slope, icpt = np.polyfit(ks, ys, 1)
    pred = slope * ks + icpt
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    curv = float(np.polyfit(ks, ys, 2)[0]) if sel.sum() >= 4 else 0.0
    span = float(np.ptp(ks))
    # curvature is significant when it bends the fit by more than 1 (a factor e) over the band
    convex = curv * span**2 < -1.0
    return DecayFit(float(-slope), r2, curv, bool(convex), (float(ks.min()), float(ks.max())), int(sel.sum()))
