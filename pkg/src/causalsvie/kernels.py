"""Analytic kernel specifications and their sampling on a time grid.

A kernel is a matrix-valued function ``k(t, s)`` on the triangle ``s < t``.
Vector-valued inhomogeneous terms (``b``, ``sigma``, ``chi``) are kernels
with a single column.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .grid import GridError, TimeGrid, TriField


class KernelError(ValueError):
    """Raised for malformed kernel specifications."""


def _as_matrix(value) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise KernelError(f"expected a matrix, got array of shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise KernelError("kernel value is not finite")
    return m


@dataclass(frozen=True)
class Zero:
    rows: int
    cols: int = 1

    @property
    def shape(self):
        return (self.rows, self.cols)


@dataclass(frozen=True, eq=False)
class Constant:
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", _as_matrix(self.value))

    @property
    def shape(self):
        return self.value.shape


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Values on a fixed grid, ``values[i, j]`` for ``j < i``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 3:
            v = v[..., None]
        if v.ndim != 4 or v.shape[0] != v.shape[1]:
            raise KernelError(f"tabulated kernel must be (N+1, N+1, r, c), got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape[2:]


Modulation = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class FractionalConvolution:
    """``k(t, s) = c * (t - s)**(H - 1/2) * m(s)``.

    ``modulation`` is either a constant matrix or a callable mapping an array
    of times ``(n,)`` to matrices ``(n, r, c)``.
    """

    c: float
    H: float
    modulation: Modulation = 1.0

    def __post_init__(self):
        if not np.isfinite(self.c):
            raise KernelError(f"coefficient c must be finite, got {self.c}")
        if not (0.0 < self.H < 1.0):
            raise KernelError(f"Hurst parameter must lie in (0, 1), got {self.H}")
        if not callable(self.modulation):
            object.__setattr__(self, "modulation", _as_matrix(self.modulation))

    @property
    def shape(self):
        if callable(self.modulation):
            return tuple(np.shape(self.modulation(np.zeros(1)))[1:])
        return self.modulation.shape

    def modulation_at(self, t: np.ndarray) -> np.ndarray:
        if callable(self.modulation):
            m = np.asarray(self.modulation(np.asarray(t, dtype=float)), dtype=float)
            return m.reshape((len(t),) + self.shape)
        return np.broadcast_to(self.modulation, (len(t),) + self.modulation.shape)


@dataclass(frozen=True, eq=False)
class Function:
    """Smooth kernel given by a vectorised callable ``f(t, s) -> (..., r, c)``."""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rows: int
    cols: int = 1

    @property
    def shape(self):
        return (self.rows, self.cols)


@dataclass(frozen=True)
class Sum:
    terms: Sequence["KernelSpec"]

    def __post_init__(self):
        if not self.terms:
            raise KernelError("Sum needs at least one term")
        shapes = {tuple(t.shape) for t in self.terms}
        if len(shapes) != 1:
            raise KernelError(f"Sum terms have mismatched shapes {sorted(shapes)}")
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def shape(self):
        return tuple(self.terms[0].shape)


KernelSpec = Union[Zero, Constant, Tabulated, FractionalConvolution, Function, Sum]


def fractional_cell_average(c: float, H: float, grid: TimeGrid) -> np.ndarray:
    """Exact cell averages ``(1/h) int_{t_j}^{t_{j+1}} c (t_i - s)^(H-1/2) ds``.

    Returns an ``(N+1, N+1)`` array, zero for ``j >= i``.
    """
    N, h = grid.N, grid.h
    p = H + 0.5
    lag = np.subtract.outer(np.arange(N + 1), np.arange(N + 1)).astype(float)
    upper = np.where(lag > 0, lag * h, 0.0) ** p
    lower = np.where(lag > 1, (lag - 1) * h, 0.0) ** p
    out = c * (upper - lower) / (p * h)
    return np.where(lag > 0, out, 0.0)


def sample_kernel(spec: KernelSpec, grid: TimeGrid, mode: str = "cell_avg") -> TriField:
    """Sample ``spec`` at ``(t_i, t_j)``, ``j < i``.

    ``mode='point'`` evaluates the kernel at grid points; ``'cell_avg'``
    averages singular convolution kernels over ``[t_j, t_{j+1})`` in closed
    form and coincides with point sampling for the other kernel types.
    """
    if mode not in ("point", "cell_avg"):
        raise KernelError(f"unknown sampling mode {mode!r}")
    N = grid.N
    t = grid.nodes
    if isinstance(spec, Zero):
        return TriField.zeros(N, spec.shape)
    if isinstance(spec, Constant):
        vals = np.broadcast_to(spec.value, (N + 1, N + 1) + spec.shape)
        return TriField(np.array(vals))
    if isinstance(spec, Tabulated):
        if spec.values.shape[0] != N + 1:
            raise GridError(
                f"tabulated kernel has N={spec.values.shape[0] - 1}, grid has N={N}"
            )
        return TriField(spec.values.copy())
    if isinstance(spec, FractionalConvolution):
        if mode == "cell_avg":
            scal = fractional_cell_average(spec.c, spec.H, grid)
        else:
            lag = np.subtract.outer(t, t)
            with np.errstate(divide="ignore", invalid="ignore"):
                scal = np.where(lag > 0, spec.c * np.abs(lag) ** (spec.H - 0.5), 0.0)
        m = spec.modulation_at(t)
        return TriField(scal[:, :, None, None] * m[None, :, :, :])
    if isinstance(spec, Function):
        tt, ss = np.meshgrid(t, t, indexing="ij")
        vals = np.asarray(spec.func(tt, ss), dtype=float)
        vals = vals.reshape((N + 1, N + 1) + spec.shape)
        return TriField(vals)
    if isinstance(spec, Sum):
        fields = [sample_kernel(term, grid, mode) for term in spec.terms]
        out = fields[0].values.copy()
        for f in fields[1:]:
            out += f.values
        return TriField(out)
    raise KernelError(f"unsupported kernel spec {type(spec).__name__}")


@dataclass(frozen=True)
class KernelSet:
    """Coefficients ``A, B, C, D`` and inhomogeneous terms ``b, sigma``."""

    A: KernelSpec
    B: KernelSpec
    C: KernelSpec
    D: KernelSpec
    b: KernelSpec = None
    sigma: KernelSpec = None

    def __post_init__(self):
        d = self.A.shape[0]
        if self.b is None:
            object.__setattr__(self, "b", Zero(d, 1))
        if self.sigma is None:
            object.__setattr__(self, "sigma", Zero(d, 1))
        l = self.B.shape[1]
        want = {"A": (d, d), "B": (d, l), "C": (d, d), "D": (d, l), "b": (d, 1), "sigma": (d, 1)}
        for name, shape in want.items():
            got = tuple(getattr(self, name).shape)
            if got != shape:
                raise KernelError(f"{name} has shape {got}, expected {shape}")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def l(self) -> int:
        return self.B.shape[1]

    def sample(self, grid: TimeGrid, mode: str = "cell_avg") -> "GridKernels":
        s = {name: sample_kernel(getattr(self, name), grid, mode)
             for name in ("A", "B", "C", "D", "b", "sigma")}
        return GridKernels(
            grid=grid, A=s["A"], B=s["B"], C=s["C"], D=s["D"],
            b=TriField(s["b"].values[..., 0]), sigma=TriField(s["sigma"].values[..., 0]),
        )


@dataclass
class GridKernels:
    """A :class:`KernelSet` sampled on a grid.  ``b`` and ``sigma`` are vector fields."""

    grid: TimeGrid
    A: TriField
    B: TriField
    C: TriField
    D: TriField
    b: TriField
    sigma: TriField

    def __post_init__(self):
        N = self.grid.N
        for name in ("A", "B", "C", "D", "b", "sigma"):
            if getattr(self, name).N != N:
                raise GridError(f"{name} is sampled on a different grid")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def l(self) -> int:
        return self.B.shape[1]

    @property
    def homogeneous(self) -> bool:
        return not (np.any(self.b.values) or np.any(self.sigma.values))

    def scaled(self, factor: float) -> "GridKernels":
        """Copy with the inhomogeneous terms ``b, sigma`` multiplied by ``factor``."""
        return GridKernels(self.grid, self.A, self.B, self.C, self.D,
                           self.b * factor, self.sigma * factor)

    def with_inhomogeneity(self, b=None, sigma=None) -> "GridKernels":
        N, d = self.grid.N, self.d
        b = TriField.zeros(N, d) if b is None else b
        sigma = TriField.zeros(N, d) if sigma is None else sigma
        return GridKernels(self.grid, self.A, self.B, self.C, self.D, b, sigma)
