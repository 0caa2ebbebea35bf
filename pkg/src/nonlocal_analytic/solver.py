"""
Ground states of ``E phi = V phi`` on the periodic grid.

The eigenvalue ``lam`` of ``E - V`` is absorbed into the potential,
``V_eff = V + lam``, so that the returned pair satisfies the equation
without an explicit eigenvalue.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, cg, eigsh

from . import spectral_core as sc
from .bounds import PotentialSpec
from .spectral_core import Field, GridSpec, OperatorSpec


class SolverError(RuntimeError):
    """The eigen-iteration did not converge."""


class SpectralGapWarning(UserWarning):
    """Ground and first excited eigenvalues are nearly degenerate."""


@dataclass(frozen=True, eq=False)
class SolveResult:
    op: OperatorSpec
    phi: Field
    V_effective: Field
    lam: float
    residual: float
    iterations: int
    gap: float = math.nan
    converged: bool = True
    config: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def sidecar(self) -> dict:
        return {
            "lambda": self.lam,
            "residual": self.residual,
            "iterations": self.iterations,
            "gap": self.gap,
            "converged": self.converged,
            "operator": self.op.as_dict(),
            "config": self.config,
            "config_hash": self.config_hash(),
        }

    def save(self, out_dir, stem: str = "phi") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        bin_path = out / f"{stem}.bin"
        json_path = out / f"{stem}.json"
        sc.write_field(bin_path, self.phi, self.op)
        sc.write_field(out / f"{stem}_veff.bin", self.V_effective, self.op)
        json_path.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True))
        return bin_path, json_path


def forward_symbol(op: OperatorSpec, grid: GridSpec) -> np.ndarray:
    """Symbol of ``E`` on the grid; ``|k|`` for the massless-shifted flavor."""
    return op.symbol(grid.kabs)


def _apply_symbol(sym: np.ndarray, v: np.ndarray) -> np.ndarray:
    w = sc.FFT_WORKERS
    return sfft.ifftn(sym * sfft.fftn(v, workers=w), workers=w).real


def residual_norm(op: OperatorSpec, phi: Field, V_eff: Field) -> float:
    """``||E phi - V_eff phi||_2`` with the grid L2 weight."""
    Ephi = sc.apply_multiplier(phi, forward_symbol(op, phi.grid))
    return (Ephi - V_eff * phi).norm()


def solve_eigen(op: OperatorSpec, V: PotentialSpec | np.ndarray, grid: GridSpec, tol: float = 1e-10,
                state: int = 0, max_iter: int = 200, polish_steps: int = 2) -> SolveResult:
    """Lowest eigenpair (or ``state``-th, behind the flag) of ``E - V`` by shift-inverted Lanczos.

    The shift lies below the spectrum, so ``E - V - shift`` is positive definite
    and the inner solves use conjugate gradients preconditioned by the
    multiplier ``(E(k) - shift - mean V)^{-1}``, with relative tolerance ``tol/10``.
    """
    if op.n != grid.n:
        raise sc.GridMismatchError("operator and grid dimensions differ")
    Vg = V.on_grid(grid) if isinstance(V, PotentialSpec) else np.asarray(V)
    if np.iscomplexobj(Vg):
        if np.max(np.abs(Vg.imag)) > 0:
            raise ValueError("the solver handles real potentials only")
        Vg = Vg.real
    sym = forward_symbol(op, grid)
    shape = grid.shape
    size = int(np.prod(shape))
    shift = float(sym.min() - Vg.max() - 1.0)
    # positive since shift < min E - max V
    pre_sym = 1.0 / (sym - shift - float(Vg.mean()))

    def A(v):
        v = v.reshape(shape)
        return (_apply_symbol(sym, v) - Vg * v).ravel()

    def A_shift(v):
        return A(v) - shift * v

    A_op = LinearOperator((size, size), matvec=A, dtype=float)
    S_op = LinearOperator((size, size), matvec=A_shift, dtype=float)
    M_op = LinearOperator((size, size), matvec=lambda v: _apply_symbol(pre_sym, v.reshape(shape)).ravel(), dtype=float)
    inner = {"count": 0}

    def solve_shifted(b):
        x, info = cg(S_op, b, rtol=tol / 10, atol=0.0, M=M_op, maxiter=10 * max_iter)
        inner["count"] += 1
        if info > 0:
            warnings.warn("inner conjugate-gradient solve did not converge", RuntimeWarning, stacklevel=2)
        return x

    OPinv = LinearOperator((size, size), matvec=solve_shifted, dtype=float)
    k = state + 2 if size > state + 2 else state + 1
    v0 = np.exp(-0.5 * sum(c**2 for c in grid.coords) * np.ones(shape)).ravel()
    try:
        vals, vecs = eigsh(A_op, k=k, sigma=shift, OPinv=OPinv, which="LM", tol=tol / 10, v0=v0, maxiter=max_iter)
        converged = True
    except Exception as exc:  # ArpackNoConvergence carries partial results
        vals = getattr(exc, "eigenvalues", None)
        vecs = getattr(exc, "eigenvectors", None)
        if vals is None or len(vals) <= state:
            raise SolverError(f"eigen-iteration failed: {exc}") from exc
        converged = False
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vec = vecs[:, state].reshape(shape)
    gap = float(vals[state + 1] - vals[state]) if len(vals) > state + 1 else math.nan
    if gap == gap and gap < 1e-8 * max(1.0, abs(vals[state])):
        warnings.warn(f"spectral gap {gap:.2e} is too small", SpectralGapWarning, stacklevel=2)

    # polish the ground state by inverse iteration with a shift just below it
    if state == 0 and gap == gap:
        polish = float(vals[0] - 0.01 * gap)
        P_op = LinearOperator((size, size), matvec=lambda v: A(v) - polish * v, dtype=float)
        v = vec.ravel()
        for _ in range(polish_steps):
            v, _info = cg(P_op, v, rtol=1e-14, atol=0.0, M=M_op, maxiter=20 * max_iter)
            v /= np.linalg.norm(v)
            inner["count"] += 1
        vec = v.reshape(shape)

    # sign convention and normalization
    if state == 0 and vec.sum() < 0:
        vec = -vec
    vec = vec / math.sqrt(grid.cell_volume * np.sum(vec * vec))
    Av = A(vec.ravel()).reshape(shape)
    lam = float(grid.cell_volume * np.sum(vec * Av))
    phi = Field(grid, vec)
    V_eff = Field(grid, Vg + lam)
    res = residual_norm(op, phi, V_eff)
    cfg = {"grid": {"n": grid.n, "L": grid.L, "N": grid.N}, "operator": op.as_dict(), "tol": tol, "state": state}
    if res > max(tol, 1e-13):
        converged = False
    return SolveResult(op, phi, V_eff, lam, res, inner["count"], gap, converged, cfg)


def fixed_point_map(op: OperatorSpec, V_eff: Field, phi: Field) -> Field:
    """``E^{-1} V_eff phi``; for the massless-shifted flavor ``(|p| + 1)^{-1} (V_eff + 1) phi``."""
    Vt = V_eff if op.is_massive else V_eff + 1.0
    return sc.apply_E_inverse(Vt * phi, op)


def dense_ground_state(op: OperatorSpec, V: PotentialSpec | np.ndarray, grid: GridSpec, count: int = 1):
    """Dense eigen-decomposition of ``E - V`` on a one-dimensional grid (oracle, ``N <= 1024``)."""
    if grid.n != 1 or grid.N > 1024:
        raise ValueError("dense oracle is for n = 1 and N <= 1024")
    Vg = V.on_grid(grid) if isinstance(V, PotentialSpec) else np.asarray(V)
    sym = forward_symbol(op, grid)
    Emat = sfft.ifft(sym[:, None] * sfft.fft(np.eye(grid.N), axis=0), axis=0).real
    Emat = 0.5 * (Emat + Emat.T)
    vals, vecs = np.linalg.eigh(Emat - np.diag(Vg.real))
    return vals[:count], vecs[:, :count]
