"""
Periodic grid fields and Fourier-multiplier application of the nonlocal operators.

The whole space is modelled by the periodic box ``[-L, L)^n`` sampled with
``N`` points per axis.  Wavenumbers are ``k = (pi / L) * q`` with integer
``q`` in ``[-N/2, N/2)`` so that every grid plane wave is exactly periodic.
Periodization error of slowly decaying kernels is not compensated.
"""

from __future__ import annotations

import csv
import math
import struct
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft

MASSIVE = "massive"
MASSLESS_SHIFTED = "massless-shifted"
FLAVORS = (MASSIVE, MASSLESS_SHIFTED)

DEFAULT_MAX_DERIVATIVE_ORDER = 14
DEFAULT_NYQUIST_FRACTION = 1e-8

# FFT worker count, set from the CLI --threads flag.
FFT_WORKERS = 1


class FlavorError(ValueError):
    """Operator flavor does not support the requested operation."""


class GridMismatchError(ValueError):
    """Fields defined on different grids were combined."""


class DerivativeOrderError(ValueError):
    """Requested derivative order exceeds the configured cap."""


class AliasingWarning(UserWarning):
    """Field has significant spectral content at the Nyquist shell."""


@dataclass(frozen=True)
class OperatorSpec:
    """Identifies ``(-Delta + m^2)^s`` or the shifted massless ``(-Delta)^{1/2} + 1``.

    For the massless-shifted flavor the inverse symbol is ``(|k| + 1)^{-1}``.
    """

    n: int
    s: float
    m: float
    flavor: str = MASSIVE

    def __post_init__(self) -> None:
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.n}")
        if self.flavor == MASSIVE:
            if not (0.5 <= self.s < 1.0):
                raise ValueError(f"massive flavor needs s in [1/2, 1), got {self.s}")
            if not self.m > 0:
                raise ValueError(f"massive flavor needs m > 0, got {self.m}")
        elif self.flavor == MASSLESS_SHIFTED:
            if self.s != 0.5 or self.m != 0:
                raise ValueError("massless-shifted flavor needs s = 1/2 and m = 0")
        else:
            raise ValueError(f"unknown flavor {self.flavor!r}")

    @classmethod
    def massless(cls, n: int) -> "OperatorSpec":
        return cls(n=n, s=0.5, m=0.0, flavor=MASSLESS_SHIFTED)

    @property
    def is_massive(self) -> bool:
        return self.flavor == MASSIVE

    def symbol(self, kabs: np.ndarray) -> np.ndarray:
        """Symbol of the forward operator ``E`` (``|k|`` for the massless flavor)."""
        if self.is_massive:
            return (kabs**2 + self.m**2) ** self.s
        return np.asarray(kabs, dtype=float).copy()

    def inverse_symbol(self, kabs: np.ndarray) -> np.ndarray:
        if self.is_massive:
            return (kabs**2 + self.m**2) ** (-self.s)
        return 1.0 / (kabs + 1.0)

    def as_dict(self) -> dict:
        return {"n": self.n, "s": self.s, "m": self.m, "flavor": self.flavor}


@dataclass(frozen=True)
class GridSpec:
    """Periodic sampling of ``[-L, L)^n`` with ``N`` points per axis."""

    n: int
    L: float
    N: int

    def __post_init__(self) -> None:
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.n}")
        if self.N % 2 != 0 or self.N < 8:
            raise ValueError(f"N must be even and >= 8, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @property
    def k_max(self) -> float:
        """Largest wavenumber magnitude on one axis (the Nyquist value)."""
        return math.pi * self.N / (2.0 * self.L)

    @cached_property
    def x1d(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    @cached_property
    def k1d(self) -> np.ndarray:
        # fftfreq ordering; integers in [-N/2, N/2) times pi/L
        return (math.pi / self.L) * np.fft.fftfreq(self.N, d=1.0 / self.N)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x1d] * self.n), indexing="ij", sparse=True))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.k1d] * self.n), indexing="ij", sparse=True))

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(sum(k**2 for k in self.wavenumbers))

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        q = np.fft.fftfreq(self.N, d=1.0 / self.N)
        on_edge = np.abs(q) == self.N // 2
        axes = np.meshgrid(*([on_edge] * self.n), indexing="ij", sparse=True)
        mask = np.zeros(self.shape, dtype=bool)
        for a in axes:
            mask = mask | a
        return mask

    def radius(self, center: Sequence[float]) -> np.ndarray:
        """Distance of each grid point from ``center`` (no periodic wrap)."""
        center = np.broadcast_to(np.asarray(center, dtype=float), (self.n,))
        return np.sqrt(sum((x - c) ** 2 for x, c in zip(self.coords, center)))

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n, self.L, self.N * factor)


def _freeze(values: np.ndarray) -> np.ndarray:
    values.flags.writeable = False
    return values


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a function on a :class:`GridSpec`; immutable."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", _freeze(vals))

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> "Field":
        vals = func(*grid.coords)
        return cls(grid, np.broadcast_to(vals, grid.shape))

    @classmethod
    def from_spectrum(cls, grid: GridSpec, spectrum: np.ndarray) -> "Field":
        return cls(grid, sfft.ifftn(spectrum, workers=FFT_WORKERS))

    @cached_property
    def spectrum(self) -> np.ndarray:
        return _freeze(sfft.fftn(self.values, workers=FFT_WORKERS))

    def _check(self, other: "Field") -> None:
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} != {other.grid}")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __rsub__(self, other):
        return Field(self.grid, other - self.values)

    def __mul__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values * other.values)
        return Field(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))

    def norm(self) -> float:
        """Discrete L2 norm with the cell-volume weight."""
        return float(np.sqrt(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def inner(self, other: "Field") -> complex:
        self._check(other)
        return complex(self.grid.cell_volume * np.vdot(self.values, other.values))


@dataclass(frozen=True)
class MultiIndex:
    """Multi-index ``(beta_1, ..., beta_n)`` of non-negative integers."""

    entries: tuple[int, ...]

    def __post_init__(self) -> None:
        entries = tuple(int(b) for b in self.entries)
        if any(b < 0 for b in entries):
            raise ValueError(f"multi-index entries must be >= 0: {entries}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def of(cls, *entries: int) -> "MultiIndex":
        return cls(tuple(entries))

    @classmethod
    def zero(cls, n: int) -> "MultiIndex":
        return cls((0,) * n)

    @classmethod
    def unit(cls, n: int, nu: int) -> "MultiIndex":
        e = [0] * n
        e[nu] = 1
        return cls(tuple(e))

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def order(self) -> int:
        return sum(self.entries)

    @property
    def factorial(self) -> int:
        return math.prod(math.factorial(b) for b in self.entries)

    def __le__(self, other: "MultiIndex") -> bool:
        return all(a <= b for a, b in zip(self.entries, other.entries))

    def __lt__(self, other: "MultiIndex") -> bool:
        return self <= other and self != other

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(tuple(a + b for a, b in zip(self.entries, other.entries)))

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(tuple(a - b for a, b in zip(self.entries, other.entries)))

    def __iter__(self):
        return iter(self.entries)

    def __str__(self) -> str:
        return "(" + ",".join(str(b) for b in self.entries) + ")"


def multi_indices(n: int, order: int):
    """All multi-indices in ``n`` variables with ``|beta| == order``, lexicographic."""
    if n == 1:
        yield MultiIndex((order,))
        return
    for first in range(order, -1, -1):
        for rest in multi_indices(n - 1, order - first):
            yield MultiIndex((first,) + rest.entries)


@dataclass(frozen=True)
class Ball:
    """Closed ball ``B_R(x0)``; anything with ``x0`` and ``R`` works where a Ball is expected."""

    x0: tuple[float, ...]
    R: float


def _check_nyquist(f: Field, fraction: float) -> None:
    spec = f.spectrum
    total = np.sqrt(np.sum(np.abs(spec) ** 2))
    if total == 0:
        return
    edge = np.max(np.abs(spec[f.grid.nyquist_mask]))
    if edge > fraction * total:
        warnings.warn(
            f"grid too coarse: Nyquist-shell amplitude {edge / total:.2e} of total exceeds {fraction:.1e}",
            AliasingWarning,
            stacklevel=3,
        )


def apply_multiplier(f: Field, symbol: np.ndarray) -> Field:
    return Field.from_spectrum(f.grid, f.spectrum * symbol)


def apply_E(f: Field, op: OperatorSpec, nyquist_fraction: float = DEFAULT_NYQUIST_FRACTION) -> Field:
    """Apply ``(-Delta + m^2)^s`` as the multiplier ``(|k|^2 + m^2)^s``."""
    if not op.is_massive:
        raise FlavorError("apply_E is defined for the massive flavor only")
    if op.n != f.grid.n:
        raise GridMismatchError("operator and grid dimensions differ")
    _check_nyquist(f, nyquist_fraction)
    return apply_multiplier(f, op.symbol(f.grid.kabs))


def apply_E_inverse(f: Field, op: OperatorSpec) -> Field:
    """Apply ``E^{-1}``: ``(|k|^2+m^2)^{-s}`` (massive) or ``(|k|+1)^{-1}`` (massless-shifted)."""
    if op.n != f.grid.n:
        raise GridMismatchError("operator and grid dimensions differ")
    return apply_multiplier(f, op.inverse_symbol(f.grid.kabs))


def derivative_symbol(grid: GridSpec, beta: MultiIndex) -> np.ndarray:
    sym = np.ones(grid.shape, dtype=complex)
    for k, b in zip(grid.wavenumbers, beta.entries):
        if b:
            sym = sym * (1j * k) ** b
    return sym


def spectral_derivative(f: Field, beta: MultiIndex, max_order: int = DEFAULT_MAX_DERIVATIVE_ORDER) -> Field:
    """Apply ``D^beta`` as the multiplier ``(ik)^beta``."""
    if beta.n != f.grid.n:
        raise ValueError(f"multi-index {beta} does not match dimension {f.grid.n}")
    if beta.order > max_order:
        raise DerivativeOrderError(f"|beta| = {beta.order} exceeds cap {max_order}")
    if beta.order == 0:
        return f
    return apply_multiplier(f, derivative_symbol(f.grid, beta))


def derivative_noise_floor(f: Field, order: int, k_eff: float | None = None) -> float:
    """Round-off level of ``||D^beta f||_2`` for ``|beta| = order``.

    FFT round-off of relative size machine-epsilon per mode is amplified by
    ``|k|^order``; ``k_eff`` is the largest wavenumber carrying signal
    (defaults to the grid Nyquist value).
    """
    k = f.grid.k_max if k_eff is None else k_eff
    eps = np.finfo(float).eps
    return float(eps * k**order * f.norm() / math.sqrt(2 * order + 1))


def spectral_noise_filter(f: Field, floor: float = 1e-14) -> tuple[Field, float]:
    """Zero Fourier modes below ``floor * max|f_hat|``.

    Returns the filtered field and the largest ``|k|`` still carrying signal.
    """
    spec = f.spectrum
    amp = np.abs(spec)
    keep = amp > floor * amp.max()
    k_eff = float(np.max(f.grid.kabs[keep])) if keep.any() else 0.0
    return Field.from_spectrum(f.grid, np.where(keep, spec, 0.0)), k_eff


def local_norm(f: Field, geom, delta: float) -> float:
    """L2 norm of ``f`` on ``B_{R - delta}(x0)`` by masked quadrature.

    Nodes on the sphere (within ``1e-9 h``) get weight 1/2, so that aligned
    intervals in one dimension use the trapezoid rule.  ``geom`` is any
    object with ``x0`` and ``R``.  Returns 0 when ``delta >= R``.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    radius = geom.R - delta
    if radius <= 0:
        return 0.0
    rho = f.grid.radius(geom.x0)
    edge = 1e-9 * f.grid.h
    inside = rho < radius - edge
    on = np.abs(rho - radius) <= edge
    mass = np.sum(np.abs(f.values[inside]) ** 2) + 0.5 * np.sum(np.abs(f.values[on]) ** 2)
    return float(np.sqrt(f.grid.cell_volume * mass))


def band_limited_random(grid: GridSpec, k_cut: float, rng: np.random.Generator, real: bool = True) -> Field:
    """Random field whose spectrum is supported in ``|k| <= k_cut``."""
    spec = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    spec = np.where(grid.kabs <= k_cut, spec, 0.0)
    spec[grid.nyquist_mask] = 0.0
    vals = sfft.ifftn(spec, workers=FFT_WORKERS)
    if real:
        vals = vals.real
    vals = vals / np.sqrt(grid.cell_volume * np.sum(np.abs(vals) ** 2))
    return Field(grid, vals)


def resample(f: Field, grid: GridSpec) -> Field:
    """Spectral interpolation (zero-padding) or truncation onto ``grid``.

    Both grids must share ``n`` and ``L``; the Nyquist modes are dropped.
    """
    if grid.n != f.grid.n or grid.L != f.grid.L:
        raise GridMismatchError("resample needs the same dimension and box")
    if grid == f.grid:
        return f
    src, dst = f.grid.N, grid.N
    keep = min(src, dst) // 2
    spec = sfft.fftshift(f.spectrum)
    out = np.zeros(grid.shape, dtype=complex)
    sl_src = tuple(slice(src // 2 - keep + 1, src // 2 + keep) for _ in range(f.grid.n))
    sl_dst = tuple(slice(dst // 2 - keep + 1, dst // 2 + keep) for _ in range(f.grid.n))
    out[sl_dst] = spec[sl_src] * (dst / src) ** f.grid.n
    return Field.from_spectrum(grid, sfft.ifftshift(out))


# ---------------------------------------------------------------------------
# serialization
#
# Binary layout, little-endian:
#   magic  8 bytes  b"NLAFLD01"
#   n      uint8    dimension
#   flags  uint8    bit 0: operator present, bit 1: massless-shifted flavor
#   dtype  uint8    0 = complex128, 1 = complex64
#   pad    uint8
#   N      uint32
#   L, s, m float64 x 3   (s, m are 0 when no operator is attached)
# followed by N^n complex values in row-major order.

FIELD_MAGIC = b"NLAFLD01"
_HEADER = struct.Struct("<8sBBBxIddd")
_DTYPES = {0: np.dtype("<c16"), 1: np.dtype("<c8")}


class FieldFormatError(ValueError):
    """Malformed field file."""


def write_field(path, f: Field, op: OperatorSpec | None = None, dtype: str = "complex128") -> None:
    """Write ``f`` (and optionally the operator it belongs to) in the binary layout."""
    code = {"complex128": 0, "complex64": 1}.get(dtype)
    if code is None:
        raise ValueError(f"unsupported dtype {dtype!r}")
    flags = 0
    s = m = 0.0
    if op is not None:
        flags |= 1
        flags |= 2 if op.flavor == MASSLESS_SHIFTED else 0
        s, m = op.s, op.m
    header = _HEADER.pack(FIELD_MAGIC, f.grid.n, flags, code, f.grid.N, f.grid.L, s, m)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype=_DTYPES[code]).tobytes())


def read_field(path) -> tuple[Field, OperatorSpec | None]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FieldFormatError("file shorter than the header")
    magic, n, flags, code, N, L, s, m = _HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise FieldFormatError("bad magic")
    if code not in _DTYPES:
        raise FieldFormatError(f"unknown dtype code {code}")
    grid = GridSpec(n, L, N)
    dt = _DTYPES[code]
    payload = raw[_HEADER.size:]
    if len(payload) != dt.itemsize * N**n:
        raise FieldFormatError("payload size does not match the header")
    vals = np.frombuffer(payload, dtype=dt).reshape(grid.shape).astype(complex)
    op = None
    if flags & 1:
        op = OperatorSpec.massless(n) if flags & 2 else OperatorSpec(n, s, m)
    return Field(grid, vals), op


def write_field_csv(path, f: Field) -> None:
    """Columns ``x, re, im`` for a one-dimensional field."""
    if f.grid.n != 1:
        raise ValueError("CSV export is for n = 1 only")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re", "im"])
        for x, v in zip(f.grid.x1d, f.values):
            w.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])


def read_field_csv(path, L: float) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = GridSpec(1, L, data.shape[0])
    if not np.allclose(data[:, 0], grid.x1d, rtol=0, atol=1e-12 * L):
        raise FieldFormatError("CSV abscissae do not match the grid for this L")
    return Field(grid, data[:, 1] + 1j * data[:, 2])
