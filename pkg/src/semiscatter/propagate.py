"""Linear flows and the probes built on them.

Free Schrodinger and free transport are exact Fourier multipliers; the
potential-perturbed flow uses Strang splitting with an exact phase substep.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AliasingWarning, DomainError, StepStabilityError
from .lattice import Lattice, PhaseSpaceField, lp_quadrature
from .qstate import OrbitalEnsemble, density, dispersion_constant, weighted_schatten_norm


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    dt: float
    stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("time step must be positive")
        if self.stride < 1:
            raise DomainError("snapshot stride must be >= 1")
        steps = (self.t1 - self.t0) / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, abs(steps)):
            raise DomainError("(t1 - t0) / dt must be an integer")

    @property
    def steps(self) -> int:
        return int(round((self.t1 - self.t0) / self.dt))

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    def snapshot_steps(self) -> list:
        idx = list(range(0, self.steps + 1, self.stride))
        if idx[-1] != self.steps:
            idx.append(self.steps)
        return idx


@dataclass
class PotentialTrajectory:
    """Samples (t_k, V_k) of a real potential; linear in time between samples."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.values = np.asarray(self.values, float)
        if self.times.ndim != 1 or self.values.shape[0] != self.times.size:
            raise ValueError("one potential sample per time")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise DomainError("sample times must be strictly increasing")

    @classmethod
    def constant(cls, v: np.ndarray, t0: float = 0.0, t1: float = 1.0) -> "PotentialTrajectory":
        return cls(np.array([t0, t1]), np.stack([v, v]))

    @classmethod
    def from_function(cls, func: Callable[[float], np.ndarray], times: Sequence[float]) -> "PotentialTrajectory":
        return cls(np.asarray(times, float), np.stack([np.asarray(func(t), float) for t in times]))

    def at(self, t: float) -> np.ndarray:
        ts = self.times
        if ts.size == 1 or t <= ts[0]:
            return self.values[0]
        if t >= ts[-1]:
            return self.values[-1]
        k = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1 - w) * self.values[k] + w * self.values[k + 1]

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def scaled(self, c: float) -> "PotentialTrajectory":
        return PotentialTrajectory(self.times.copy(), c * self.values)


# -- flows -----------------------------------------------------------------

def kinetic_phase(lattice: Lattice, t: float, hbar: float) -> np.ndarray:
    return np.exp(-0.5j * t * hbar * lattice.xi2)


def free_schrodinger(u: np.ndarray, t: float, hbar: float, lattice: Lattice) -> np.ndarray:
    """exp(i t hbar Laplacian / 2) applied to the trailing d axes of ``u``."""
    if t == 0:
        return np.array(u, dtype=complex, copy=True)
    return lattice.multiplier(u, kinetic_phase(lattice, t, hbar))


def free_ensemble(gamma: OrbitalEnsemble, t: float) -> OrbitalEnsemble:
    """U(t) gamma U(t)^*."""
    return gamma.with_orbitals(free_schrodinger(gamma.orbitals, t, gamma.hbar, gamma.lattice))


def transport_phase(grid, t: float) -> np.ndarray:
    """exp(-i t p.xi_q) on (xi_q, p) for the q-axis FFT of a phase-space field."""
    d = grid.d
    xs = np.meshgrid(*([grid.lattice.xi] * d + [grid.p] * d), indexing="ij", sparse=True)
    return np.exp(-1j * t * sum(xs[i] * xs[d + i] for i in range(d)))


def free_transport(f: PhaseSpaceField, t: float, warn: bool = True) -> PhaseSpaceField:
    """f(q - t p, p), exact per momentum slice."""
    if t == 0:
        return PhaseSpaceField(f.grid, f.values.copy())
    g = f.grid
    if warn:
        _support_check(f, t)
    axes = g.q_axes
    out = np.fft.ifftn(transport_phase(g, t) * np.fft.fftn(f.values, axes=axes), axes=axes)
    if np.isrealobj(f.values):
        out = out.real
    return PhaseSpaceField(g, out)


def _support_check(f: PhaseSpaceField, t: float, edge_tol: float = 1e-8):
    """Warn when the mass that would land near the box edge is not small."""
    g = f.grid
    lat = g.lattice
    a = np.abs(f.values)
    peak = a.max()
    if peak == 0:
        return
    mask = a > edge_tol * peak
    if not mask.any():
        return
    for i in range(g.d):
        q = np.broadcast_to(g.coords[i], g.shape)[mask]
        p = np.broadcast_to(g.coords[g.d + i], g.shape)[mask]
        if np.abs(q + t * p).max() > 0.5 * lat.box_length:
            warnings.warn(f"transported support leaves the box at t={t}", AliasingWarning, stacklevel=3)
            return


def _potential_phase(v: np.ndarray, dt: float, hbar: float) -> np.ndarray:
    return np.exp(-1j * dt * v / hbar)


def check_step(vmax: float, dt: float, hbar: float, limit: float = 1.0, override: bool = False):
    if vmax * dt / hbar > limit and not override:
        raise StepStabilityError(
            f"||V||_inf dt / hbar = {vmax * dt / hbar:.3g} exceeds {limit}; pass override=True to force"
        )


def perturbed_flow(u: np.ndarray, V: PotentialTrajectory, timegrid: TimeGrid, hbar: float,
                   lattice: Lattice, limit: float = 1.0, override: bool = False) -> list:
    """Strang splitting for i hbar u_t = -hbar^2/2 Laplacian u + V u.

    Returns ``[(t, u(t)), ...]`` at the grid's snapshot steps.  Works for stacks
    of orbitals as well as single fields.
    """
    check_step(V.sup(), timegrid.dt, hbar, limit, override)
    half = kinetic_phase(lattice, 0.5 * timegrid.dt, hbar)
    dt = timegrid.dt
    snaps = set(timegrid.snapshot_steps())
    axes = tuple(range(np.ndim(u) - lattice.d, np.ndim(u)))
    w = np.array(u, dtype=complex, copy=True)
    out = [(timegrid.t0, w.copy())]
    for k in range(timegrid.steps):
        tm = timegrid.t0 + (k + 0.5) * dt
        w = np.fft.ifftn(half * np.fft.fftn(w, axes=axes), axes=axes)
        w = w * _potential_phase(V.at(tm), dt, hbar)
        w = np.fft.ifftn(half * np.fft.fftn(w, axes=axes), axes=axes)
        if k + 1 in snaps:
            out.append((timegrid.t0 + (k + 1) * dt, w.copy()))
    return out


def perturbed_propagator(V: PotentialTrajectory, t: float, dt: float, hbar: float, lattice: Lattice,
                         limit: float = 1.0, override: bool = False):
    """Split-step U_V(t, 0) and its exact discrete adjoint, as callables."""
    nsteps = max(1, int(round(abs(t) / dt)))
    dt = t / nsteps
    check_step(V.sup(), abs(dt), hbar, limit, override)
    half = kinetic_phase(lattice, 0.5 * dt, hbar)
    phases = [_potential_phase(V.at((k + 0.5) * dt), dt, hbar) for k in range(nsteps)]
    nd = lattice.d

    def kin(w, m):
        axes = tuple(range(w.ndim - nd, w.ndim))
        return np.fft.ifftn(m * np.fft.fftn(w, axes=axes), axes=axes)

    def forward(u):
        w = np.asarray(u, dtype=complex)
        for ph in phases:
            w = kin(kin(w, half) * ph, half)
        return w

    def adjoint(u):
        w = np.asarray(u, dtype=complex)
        hc = half.conj()
        for ph in reversed(phases):
            w = kin(kin(w, hc) * ph.conj(), hc)
        return w

    return forward, adjoint


def wave_operator_apply(u: np.ndarray, V: PotentialTrajectory, t: float, hbar: float, lattice: Lattice,
                        dt: float = 0.01, **kw) -> np.ndarray:
    """W_V(t, 0) u = U(t)^* U_V(t, 0) u."""
    forward, _ = perturbed_propagator(V, t, dt, hbar, lattice, **kw)
    return free_schrodinger(forward(u), -t, hbar, lattice)


def wave_operator_pair(V: PotentialTrajectory, t: float, hbar: float, lattice: Lattice, dt: float = 0.01, **kw):
    forward, adjoint = perturbed_propagator(V, t, dt, hbar, lattice, **kw)

    def w(u):
        return free_schrodinger(forward(u), -t, hbar, lattice)

    def w_adj(u):
        return adjoint(free_schrodinger(u, t, hbar, lattice))

    return w, w_adj


@dataclass
class NormEstimate:
    value: float
    estimates: np.ndarray
    spread: float


def power_iteration(apply, apply_adj, shape, iterations: int = 30, starts: int = 20, seed: int = 0,
                    tol: float = 1e-6) -> NormEstimate:
    """Largest singular value of a linear map from seeded random starts.

    All starts are iterated together as one batch (leading axis), so ``apply``
    must act on stacks of fields.  Iteration stops early once every start has
    converged to relative tolerance ``tol``.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((starts,) + tuple(shape)) + 1j * rng.standard_normal((starts,) + tuple(shape))
    axes = tuple(range(1, v.ndim))

    def norms(a):
        return np.sqrt(np.sum(np.abs(a) ** 2, axis=axes))

    v /= norms(v).reshape((-1,) + (1,) * len(shape))
    s_old = np.zeros(starts)
    s = s_old
    for _ in range(iterations):
        w = apply(v)
        s = norms(w)
        v = apply_adj(w)
        nv = norms(v)
        v = v / np.where(nv > 0, nv, 1.0).reshape((-1,) + (1,) * len(shape))
        if np.all(np.abs(s - s_old) <= tol * np.maximum(s, 1e-300)):
            break
        s_old = s
    est = np.asarray(s, float)
    top = float(est.max())
    return NormEstimate(top, est, float((top - est.min()) / top) if top > 0 else 0.0)


def weighted_wave_operator_norm(V: PotentialTrajectory, t: float, hbar: float, lattice: Lattice,
                                dt: float = 0.01, seed: int = 0, iterations: int = 30,
                                starts: int = 20, **kw) -> NormEstimate:
    """Estimate ||<x> W_V(t,0) <x>^-1|| by power iteration."""
    w, w_adj = wave_operator_pair(V, t, hbar, lattice, dt, **kw)
    bx = np.sqrt(1.0 + lattice.r2)

    def a(u):
        return bx * w(u / bx)

    def a_adj(u):
        return w_adj(bx * u) / bx

    return power_iteration(a, a_adj, lattice.shape, iterations, starts, seed)


def z_norm(V: PotentialTrajectory, sigma: float, lattice: Lattice) -> float:
    """Time integral of <t>(||grad V||_inf + || |grad|^sigma V ||_{L^{d/(sigma-1)}}).

    Seminorms are interpolated linearly between samples and the weight <t> is
    integrated in closed form, so time-independent potentials are exact.
    """
    if not sigma > 1:
        raise DomainError("z-norm needs sigma > 1")
    r = lattice.d / (sigma - 1.0)
    if r < 1:
        raise DomainError(f"seminorm exponent d/(sigma-1) = {r} is below 1")
    s = np.array([lattice.gradient_sup(v) + lattice.sobolev_seminorm(v, sigma, r) for v in V.values])
    t = V.times
    if t.size == 1:
        return 0.0

    def F0(x):  # antiderivative of <x>
        return 0.5 * (x * np.sqrt(1 + x * x) + np.arcsinh(x))

    def F1(x):  # antiderivative of x <x>
        return (1 + x * x) ** 1.5 / 3.0

    total = 0.0
    for k in range(t.size - 1):
        a, b = t[k], t[k + 1]
        slope = (s[k + 1] - s[k]) / (b - a)
        i0 = F0(b) - F0(a)
        i1 = F1(b) - F1(a)
        total += (s[k] - slope * a) * i0 + slope * i1
    return float(total)


@dataclass
class DecaySeries:
    t: np.ndarray
    norm: np.ndarray
    ceiling_static: np.ndarray
    ceiling_decay: np.ndarray
    meta: dict = field(default_factory=dict)

    def ratio(self) -> np.ndarray:
        c = np.minimum(self.ceiling_static, self.ceiling_decay)
        return self.norm / c

    def rows(self):
        for row in zip(self.t, self.norm, self.ceiling_static, self.ceiling_decay):
            yield tuple(float(x) for x in row)


def default_sigma(r: float, d: int) -> float:
    """Smallest convenient admissible weight exponent, d/(2 r') + 1/2."""
    rp = 1.0 if np.isinf(r) else (np.inf if r == 1 else r / (r - 1.0))
    return 0.5 * d / rp + 0.5


def free_dispersion_probe(gamma0: OrbitalEnsemble, r: float, times: Sequence[float],
                          sigma: float | None = None) -> DecaySeries:
    """||rho(t)||_{L^r} along the free flow with both static and decaying ceilings."""
    lat = gamma0.lattice
    d = lat.d
    if sigma is None:
        sigma = default_sigma(r, d)
    c = dispersion_constant(sigma, r, d)
    rp = 1.0 if np.isinf(r) else (np.inf if r == 1 else r / (r - 1.0))
    static = c * weighted_schatten_norm(gamma0, r, sigma, "momentum")
    wx = c * weighted_schatten_norm(gamma0, r, sigma, "position")
    norms, cs, cd = [], [], []
    for t in times:
        g = free_ensemble(gamma0, t)
        norms.append(lp_quadrature(density(g), r, lat.cell))
        cs.append(static)
        cd.append(np.inf if t == 0 else wx * abs(t) ** (-d / rp))
    return DecaySeries(np.asarray(times, float), np.array(norms), np.array(cs), np.array(cd),
                       meta={"r": r, "sigma": sigma, "C": c, "hbar": gamma0.hbar})
