"""Periodic grids, the spectral transform and lattice norms.

Every field in the package lives on a :class:`Lattice` (position space) or on a
:class:`PhaseSpaceGrid` (the product of a lattice with a momentum grid).  The
discrete Fourier transform is normalised as the midpoint quadrature of the
continuum transform

    g_hat(xi) = sum_x g(x) exp(-i x.xi) h^d,

so multiplier constants derived for R^d carry over unchanged.  Arrays are kept
in FFT frequency order; :attr:`Lattice.xi` gives the matching frequencies.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DomainError

Symbol = Union[np.ndarray, Callable[..., np.ndarray]]


class MultiplierError(DomainError):
    """A Fourier symbol is not finite at some lattice frequency."""


def japanese(x: np.ndarray) -> np.ndarray:
    """The bracket <x> = sqrt(1 + |x|^2)."""
    return np.sqrt(1.0 + np.abs(x) ** 2)


def _check_r(r: float) -> None:
    if not (r >= 1.0):
        raise DomainError(f"Lebesgue exponent must satisfy r >= 1, got {r}")


def lp_quadrature(values: np.ndarray, r: float, cell: float) -> float:
    """(sum |f|^r cell)^(1/r), or max |f| when r is infinite."""
    _check_r(r)
    a = np.abs(values)
    if np.isinf(r):
        return float(a.max()) if a.size else 0.0
    if r == 1.0:
        return float(a.sum() * cell)
    if r == 2.0:
        return float(np.sqrt(np.vdot(a, a).real * cell))
    m = a.max() if a.size else 0.0
    if m == 0:
        return 0.0
    # scale by the peak so |f|^r neither underflows nor overflows
    return float(m * (np.sum((a / m) ** r) * cell) ** (1.0 / r))


def _axis_transform(values, axes, spacing, n, inverse):
    """Continuum-normalised FFT along ``axes`` of a grid starting at -n*h/2.

    With x_j = -n*h/2 + j*h the phase exp(-i x_j xi_k) equals (-1)^k times the
    plain DFT kernel, so the convention costs one sign flip per axis.
    """
    sign = (-1.0) ** np.fft.fftfreq(n, 1.0 / n)

    def flip(a):
        for ax in axes:
            shape = [1] * a.ndim
            shape[ax] = n
            a = a * sign.reshape(shape)
        return a

    if inverse:
        return np.fft.ifftn(flip(values), axes=axes) / spacing ** len(axes)
    return flip(np.fft.fftn(values, axes=axes)) * spacing ** len(axes)


@dataclass(frozen=True)
class Lattice:
    """Periodic d-dimensional grid spanning [-L/2, L/2) on each axis."""

    d: int
    n: int
    box_length: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 4 or self.n & (self.n - 1):
            raise ValueError(f"points per axis must be a power of two >= 4, got {self.n}")
        if not self.box_length > 0:
            raise ValueError("box length must be positive")

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def cells(self) -> int:
        return self.n**self.d

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def cell(self) -> float:
        return self.spacing**self.d

    @cached_property
    def x(self) -> np.ndarray:
        """1-D coordinates of one axis."""
        return -0.5 * self.box_length + self.spacing * np.arange(self.n)

    @cached_property
    def xi(self) -> np.ndarray:
        """1-D dual frequencies of one axis, FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, self.spacing)

    @cached_property
    def coords(self) -> tuple:
        return tuple(np.meshgrid(*([self.x] * self.d), indexing="ij"))

    @cached_property
    def freqs(self) -> tuple:
        return tuple(np.meshgrid(*([self.xi] * self.d), indexing="ij"))

    @cached_property
    def r2(self) -> np.ndarray:
        """|x|^2 on the grid."""
        return sum(c**2 for c in self.coords)

    @cached_property
    def xi2(self) -> np.ndarray:
        """|xi|^2 on the frequency grid."""
        return sum(k**2 for k in self.freqs)

    @property
    def xi_max(self) -> float:
        return np.pi * self.n / self.box_length

    # -- spectral machinery ------------------------------------------------

    def fft(self, f: np.ndarray) -> np.ndarray:
        """Transform the trailing d axes (batch axes may lead)."""
        axes = tuple(range(f.ndim - self.d, f.ndim))
        return _axis_transform(f, axes, self.spacing, self.n, inverse=False)

    def ifft(self, g: np.ndarray) -> np.ndarray:
        axes = tuple(range(g.ndim - self.d, g.ndim))
        return _axis_transform(g, axes, self.spacing, self.n, inverse=True)

    def symbol_values(self, symbol: Symbol) -> np.ndarray:
        if callable(symbol):
            values = np.asarray(symbol(*self.freqs))
        else:
            values = np.asarray(symbol)
        values = np.broadcast_to(values, self.shape)
        if not np.all(np.isfinite(values)):
            raise MultiplierError("Fourier symbol is not finite at every lattice frequency")
        return values

    def multiplier(self, f: np.ndarray, symbol: Symbol) -> np.ndarray:
        """Inverse transform of symbol(xi) * f_hat(xi)."""
        m = self.symbol_values(symbol)
        axes = tuple(range(f.ndim - self.d, f.ndim))
        # The sign factors of the continuum convention cancel for multipliers.
        return np.fft.ifftn(m * np.fft.fftn(f, axes=axes), axes=axes)

    def gradient(self, f: np.ndarray) -> list:
        """Spectral partial derivatives, one array per axis."""
        return [self.multiplier(f, 1j * k).real if np.isrealobj(f) else self.multiplier(f, 1j * k)
                for k in self.freqs]

    def shift(self, f: np.ndarray, s: Sequence[float]) -> np.ndarray:
        """Spectral translate: returns f(x + s)."""
        phase = np.exp(1j * sum(k * si for k, si in zip(self.freqs, s)))
        return self.multiplier(f, phase)

    # -- norms -------------------------------------------------------------

    def lp_norm(self, f: np.ndarray, r: float) -> float:
        return lp_quadrature(f, r, self.cell)

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.vdot(u, v) * self.cell)

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(f).real * self.cell)

    def parseval_l2sq(self, g_hat: np.ndarray) -> float:
        """Continuum Parseval: (2 pi)^-d sum |g_hat|^2 dxi^d."""
        dxi = 2.0 * np.pi / self.box_length
        return float(np.vdot(g_hat, g_hat).real * (dxi / (2.0 * np.pi)) ** self.d)

    def sobolev_seminorm(self, f: np.ndarray, s: float, r: float) -> float:
        """Homogeneous seminorm || |grad|^s f ||_{L^r}."""
        if s == 0:
            return self.lp_norm(f, r)
        g = self.multiplier(f, np.sqrt(self.xi2) ** s)
        return self.lp_norm(g, r)

    def gradient_sup(self, f: np.ndarray) -> float:
        """|| grad f ||_inf (Euclidean length of the gradient)."""
        grads = self.gradient(f)
        return float(np.sqrt(sum(np.abs(g) ** 2 for g in grads)).max())


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Product of a position lattice with a momentum grid on [-P, P)^d.

    Phase-space arrays have shape ``lattice.shape + (n_p,) * d``: the first d
    axes are q, the last d are p.
    """

    lattice: Lattice
    n_p: int
    p_extent: float

    def __post_init__(self):
        if self.n_p < 4 or self.n_p & (self.n_p - 1):
            raise ValueError("momentum points must be a power of two >= 4")
        if not self.p_extent > 0:
            raise ValueError("momentum extent must be positive")

    @classmethod
    def for_wigner(cls, lattice: Lattice, hbar: float) -> "PhaseSpaceGrid":
        """Momentum grid p = hbar * xi over the lattice frequencies."""
        return cls(lattice, lattice.n, hbar * lattice.xi_max)

    @property
    def d(self) -> int:
        return self.lattice.d

    @property
    def shape(self) -> tuple:
        return self.lattice.shape + (self.n_p,) * self.d

    @property
    def dp(self) -> float:
        return 2.0 * self.p_extent / self.n_p

    @property
    def cell(self) -> float:
        return self.lattice.cell * self.dp**self.d

    @cached_property
    def p(self) -> np.ndarray:
        return -self.p_extent + self.dp * np.arange(self.n_p)

    @cached_property
    def zeta(self) -> np.ndarray:
        """Frequencies dual to p, FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_p, self.dp)

    @cached_property
    def coords(self) -> tuple:
        axes = [self.lattice.x] * self.d + [self.p] * self.d
        return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))

    @property
    def q_axes(self) -> tuple:
        return tuple(range(self.d))

    @property
    def p_axes(self) -> tuple:
        return tuple(range(self.d, 2 * self.d))

    def q2(self):
        return sum(c**2 for c in self.coords[: self.d])

    def p2(self):
        return sum(c**2 for c in self.coords[self.d:])

    def sample(self, func: Callable[..., np.ndarray]) -> "PhaseSpaceField":
        """Evaluate func(q1..qd, p1..pd) on the grid."""
        values = np.asarray(func(*self.coords))
        return PhaseSpaceField(self, np.broadcast_to(values, self.shape).copy())

    def zeros(self) -> "PhaseSpaceField":
        return PhaseSpaceField(self, np.zeros(self.shape))

    def fft(self, values: np.ndarray) -> np.ndarray:
        """Continuum-normalised transform over all 2d phase-space axes."""
        lat = self.lattice
        out = _axis_transform(values, self.q_axes, lat.spacing, lat.n, inverse=False)
        return _axis_transform(out, self.p_axes, self.dp, self.n_p, inverse=False)

    def frequency_bracket_sq(self) -> np.ndarray:
        """1 + |xi_q|^2 + |zeta_p|^2 in FFT order (broadcastable)."""
        ks = np.meshgrid(*([self.lattice.xi] * self.d + [self.zeta] * self.d),
                         indexing="ij", sparse=True)
        return 1.0 + sum(k**2 for k in ks)

    def multiplier(self, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(symbol * np.fft.fftn(values))


@dataclass
class PhaseSpaceField:
    """A function on a phase-space grid."""

    grid: PhaseSpaceGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")

    def _check(self, other: "PhaseSpaceField"):
        if other.grid != self.grid:
            raise ValueError("phase-space fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return PhaseSpaceField(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return PhaseSpaceField(self.grid, self.values - other.values)

    def __mul__(self, c):
        return PhaseSpaceField(self.grid, self.values * c)

    __rmul__ = __mul__

    @property
    def real(self) -> "PhaseSpaceField":
        return PhaseSpaceField(self.grid, self.values.real.copy())

    def lp_norm(self, r: float) -> float:
        return lp_quadrature(self.values, r, self.grid.cell)

    def inner(self, other: "PhaseSpaceField") -> complex:
        """<self | other> in L^2(q, p)."""
        self._check(other)
        return complex(np.vdot(self.values, other.values) * self.grid.cell)

    def integral(self) -> float:
        return float(np.sum(self.values).real * self.grid.cell)


def lp_norm(f, r: float, lattice: Lattice | None = None) -> float:
    """L^r norm of a position field (with its lattice) or a PhaseSpaceField."""
    if isinstance(f, PhaseSpaceField):
        return f.lp_norm(r)
    if lattice is None:
        raise TypeError("position-space arrays need their lattice")
    return lattice.lp_norm(f, r)


def fourier_multiplier(f: np.ndarray, symbol: Symbol, lattice: Lattice) -> np.ndarray:
    return lattice.multiplier(f, symbol)


def weighted_norm(f: PhaseSpaceField, r: float, sigma: float) -> float:
    """||<q>^sigma f||_r + ||<p>^sigma f||_r."""
    g = f.grid
    wq = (1.0 + g.q2()) ** (0.5 * sigma)
    wp = (1.0 + g.p2()) ** (0.5 * sigma)
    return lp_quadrature(wq * f.values, r, g.cell) + lp_quadrature(wp * f.values, r, g.cell)
