"""Hartree dynamics for finite-rank density operators.

The orbitals evolve under i hbar d_t psi_j = -hbar^2/2 Laplacian psi_j + Phi psi_j
with Phi = w * rho.  Strang splitting: half kinetic, exact potential phase
with Phi from the half-step density, half kinetic.  The phase substep leaves
|psi_j| unchanged, so Phi is constant along it and needs no predictor.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError, FitError, IntegratorError, RegimeWarning
from .lattice import Lattice, lp_quadrature
from .propagate import PotentialTrajectory, TimeGrid, free_schrodinger, kinetic_phase, z_norm
from .qstate import (OrbitalEnsemble, Params, density, schatten_norm, trace_norm_difference,
                     weighted_schatten_norm)


def riesz_constant(d: int, a: float) -> float:
    """c_{d,a} with FT(|x|^-a) = c_{d,a} |xi|^(a-d) (analytic continuation for a > d)."""
    return 2.0 ** (d - a) * np.pi ** (d / 2) * gamma_fn((d - a) / 2) / gamma_fn(a / 2)


@dataclass(frozen=True)
class Interaction:
    """Pair potential w with its Fourier multiplier.

    Modes:
      ``riesz``     sign |x|^-a, 0 < a < d; zero mode removed.
      ``analogue``  sign c_{d,a} |xi|^(a-d) exp(-l^2 |xi|^2 / 2); any a > 0 away
                    from d + 2k.  Decays like sign |x|^-a and has zero mean, so
                    in one dimension it mimics the short-range Riesz regime.
      ``smooth``    a user-supplied real-space kernel ``w``.
      ``none``      no interaction.
    """

    sign: int = 1
    a: float = 1.2
    mode: str = "analogue"
    length: float = 1.0
    strength: float = 1.0
    w: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise DomainError("interaction sign must be +1 or -1")
        if self.mode not in ("riesz", "analogue", "smooth", "none"):
            raise DomainError(f"unknown interaction mode {self.mode!r}")
        if self.mode == "smooth" and self.w is None:
            raise DomainError("smooth interaction needs a kernel")
        if self.mode in ("riesz", "analogue") and not (1.0 < self.a < 5.0 / 3.0):
            warnings.warn(f"interaction exponent a = {self.a} lies outside (1, 5/3)", RegimeWarning, stacklevel=3)

    @classmethod
    def zero(cls) -> "Interaction":
        return cls(mode="none")

    def multiplier(self, lattice: Lattice) -> np.ndarray:
        d = lattice.d
        if self.mode == "none":
            return np.zeros(lattice.shape)
        if self.mode == "smooth":
            w = np.broadcast_to(self.w, lattice.shape)
            return self.sign * self.strength * lattice.fft(w)
        if self.mode == "riesz" and not self.a < d:
            raise DomainError(f"Riesz mode needs a < d, got a = {self.a}, d = {d}")
        k = np.sqrt(lattice.xi2)
        with np.errstate(divide="ignore", invalid="ignore"):
            m = self.sign * self.strength * riesz_constant(d, self.a) * np.where(k > 0, k, 1.0) ** (self.a - d)
        if self.mode == "analogue":
            m = m * np.exp(-0.5 * self.length**2 * lattice.xi2)
        m = np.where(k > 0, m, 0.0)
        return m

    def kernel(self, lattice: Lattice) -> np.ndarray:
        """w on the grid (inverse transform of the multiplier)."""
        return lattice.ifft(self.multiplier(lattice)).real


def mean_field(rho: np.ndarray, w: Interaction, lattice: Lattice, multiplier=None):
    """Phi = w * rho and its spectral gradient."""
    m = w.multiplier(lattice) if multiplier is None else multiplier
    rho_hat = np.fft.fftn(rho)
    phi = np.fft.ifftn(m * rho_hat).real
    grads = [np.fft.ifftn(1j * k * m * rho_hat).real for k in lattice.freqs]
    return phi, grads


def _grad_sup(grads) -> float:
    return float(np.sqrt(sum(g**2 for g in grads)).max())


# -- interpolation diagnostics ---------------------------------------------

@dataclass
class InterpolationReport:
    lhs_potential: float
    lhs_gradient: float
    rhs_potential: float
    rhs_gradient: float
    theta: tuple

    @property
    def ratios(self) -> tuple:
        r1 = self.lhs_potential / self.rhs_potential if self.rhs_potential else 0.0
        r2 = self.lhs_gradient / self.rhs_gradient if self.rhs_gradient else 0.0
        return r1, r2


def interpolation_exponents(params: Params) -> tuple:
    """theta_1 = a r'/d and theta_2 = (1 + a) r'/d for r = r_eps.

    These are the exponents fixed by dilation invariance; at d = 3 they read
    a/(1+a+eps) and (1+a)/(1+a+eps).
    """
    r = params.r_eps
    rp = r / (r - 1.0)
    return params.a * rp / params.d, (1.0 + params.a) * rp / params.d


def interpolation_check(zeta: np.ndarray, w: Interaction, params: Params, lattice: Lattice) -> InterpolationReport:
    """Compare ||w*zeta||_inf, ||grad w*zeta||_inf with ||zeta||_r^theta ||zeta||_1^(1-theta)."""
    if np.any(zeta < -1e-12 * max(1.0, float(np.abs(zeta).max()))):
        raise DomainError("interpolation check needs nonnegative data")
    th1, th2 = interpolation_exponents(params)
    phi, grads = mean_field(zeta, w, lattice)
    l1 = lattice.lp_norm(zeta, 1)
    lr = lattice.lp_norm(zeta, params.r_eps)
    if l1 == 0:
        return InterpolationReport(0.0, 0.0, 0.0, 0.0, (th1, th2))
    return InterpolationReport(float(np.abs(phi).max()), _grad_sup(grads),
                               lr**th1 * l1 ** (1 - th1), lr**th2 * l1 ** (1 - th2), (th1, th2))


# -- time stepping ----------------------------------------------------------

def x_in_norm(gamma: OrbitalEnsemble) -> float:
    """L^1_hbar norm plus the momentum-weighted L^{r_eps, sigma_eps}_hbar norm."""
    p = gamma.params
    return schatten_norm(gamma, 1) + weighted_schatten_norm(gamma, p.r_eps, p.sigma_eps, "momentum")


def lwp_timestep(gamma0: OrbitalEnsemble, safety: float = 0.1) -> float:
    """safety * hbar / X_in(gamma0)."""
    nrm = x_in_norm(gamma0)
    if nrm == 0:
        raise DomainError("zero initial datum has no intrinsic time scale")
    return safety * gamma0.hbar / nrm


@dataclass
class Snapshot:
    t: float
    ensemble: OrbitalEnsemble
    rho: np.ndarray
    phi: np.ndarray
    grad_sup: float


@dataclass
class HartreeTrajectory:
    snapshots: list
    interaction: Interaction
    timegrid: TimeGrid
    conservation: list = field(default_factory=list)
    halted: bool = False
    halt_reason: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def potential_trajectory(self) -> PotentialTrajectory:
        return PotentialTrajectory(self.times, np.stack([s.phi for s in self.snapshots]))


def _fft_axes(lattice: Lattice):
    return tuple(range(1, lattice.d + 1))


def evolve(gamma0: OrbitalEnsemble, w: Interaction, timegrid: TimeGrid, trace_tol: float = 1e-8,
           blowup_ceiling: float | None = None, check_lwp: bool = False, safety: float = 1.0) -> HartreeTrajectory:
    """Split-step Hartree evolution; snapshots at the grid's stride.

    Raises IntegratorError if the trace drifts by more than ``trace_tol`` per
    unit time.  If ``blowup_ceiling`` is set, the run halts (without raising)
    once ||<hbar grad>^s gamma <hbar grad>^s||_{L^r_hbar} exceeds it.
    """
    lat = gamma0.lattice
    p = gamma0.params
    hbar, dt = p.hbar, timegrid.dt
    if check_lwp:
        lim = lwp_timestep(gamma0, safety)
        if dt > lim:
            raise DomainError(f"time step {dt} exceeds the local well-posedness scale {lim:.3g}")
    mult = w.multiplier(lat)
    axes = _fft_axes(lat)
    half = kinetic_phase(lat, 0.5 * dt, hbar)
    full = half * half
    occ = gamma0.occupations
    pc = p.phase_cell

    def rho_of(psi):
        return pc * np.tensordot(occ, np.abs(psi) ** 2, axes=(0, 0))

    def snap(t, spec):
        psi = np.fft.ifftn(spec, axes=axes)
        rho = rho_of(psi)
        phi, grads = mean_field(rho, w, lat, mult)
        ens = OrbitalEnsemble(lat, p, psi, occ.copy())
        return Snapshot(t, ens, rho, phi, _grad_sup(grads))

    def weighted(spec):
        wpsi = np.fft.ifftn(spec * (1.0 + hbar**2 * lat.xi2) ** (0.5 * p.sigma_eps), axes=axes)
        return schatten_norm(OrbitalEnsemble(lat, p, wpsi, occ), p.r_eps)

    spec = np.fft.fftn(gamma0.orbitals, axes=axes)
    tr0 = gamma0.trace()
    snaps = [snap(timegrid.t0, spec)]
    log = [(timegrid.t0, tr0, 0.0)]
    marks = set(timegrid.snapshot_steps())
    traj = HartreeTrajectory(snaps, w, timegrid, log)
    if gamma0.rank == 0:
        return traj
    spec = spec * half
    for k in range(timegrid.steps):
        psi = np.fft.ifftn(spec, axes=axes)
        phi, _ = mean_field(rho_of(psi), w, lat, mult)
        psi *= np.exp(-1j * dt * phi / hbar)
        spec = np.fft.fftn(psi, axes=axes)
        step = k + 1
        if step in marks:
            spec = spec * half
            t = timegrid.t0 + step * dt
            s = snap(t, spec)
            tr = s.ensemble.trace()
            drift = abs(tr - tr0) / max(tr0, 1e-300)
            log.append((t, tr, drift))
            snaps.append(s)
            if drift > trace_tol * max(1.0, t - timegrid.t0):
                raise IntegratorError(f"trace drift {drift:.3e} at t={t}", {"t": t, "trace": tr, "trace0": tr0})
            if not np.all(np.isfinite(s.rho)):
                raise IntegratorError(f"non-finite density at t={t}", {"t": t})
            if blowup_ceiling is not None:
                wn = weighted(spec)
                if wn > blowup_ceiling:
                    traj.halted = True
                    traj.halt_reason = f"weighted norm {wn:.4g} exceeds ceiling {blowup_ceiling:.4g} at t={t:.4g}"
                    return traj
            spec = spec * half
        else:
            spec = spec * full
    return traj


# -- diagnostics ------------------------------------------------------------

@dataclass
class DecayFit:
    slope_rho: float
    stderr_rho: float
    slope_grad: float
    stderr_grad: float
    target_rho: float
    target_grad: float
    window: tuple
    residuals: np.ndarray = field(repr=False, default=None)


def decay_report(traj: HartreeTrajectory, r: float, window: tuple = (2.0, np.inf)) -> DecayFit:
    """Slopes of log ||rho||_{L^r} and log ||grad Phi||_inf against log <t>."""
    from .experiments.fitting import fit_power_law

    t = traj.times
    lat = traj.snapshots[0].ensemble.lattice
    p = traj.snapshots[0].ensemble.params
    nrm = np.array([lp_quadrature(s.rho, r, lat.cell) for s in traj.snapshots])
    gs = np.array([s.grad_sup for s in traj.snapshots])
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 5:
        raise FitError("decay fit window needs at least five snapshots")
    s1, e1, res = fit_power_law(np.column_stack([t, nrm]), window, return_residuals=True)
    if np.all(gs[sel] > 0):
        s2, e2 = fit_power_law(np.column_stack([t, gs]), window)
    else:
        s2, e2 = float("nan"), float("nan")
    rp = 1.0 if np.isinf(r) else r / (r - 1.0)
    return DecayFit(s1, e1, s2, e2, -lat.d / rp, -(1.0 + p.a), window, res)


@dataclass
class ScatteringReport:
    pairs: list
    D: np.ndarray
    gamma_plus: OrbitalEnsemble
    tail_slope: float
    tail_target: float
    scatters: bool
    note: str = ""


def backward_state(s: Snapshot) -> OrbitalEnsemble:
    """U(t)^* gamma(t) U(t)."""
    e = s.ensemble
    return e.with_orbitals(free_schrodinger(e.orbitals, -s.t, e.hbar, e.lattice))


def scattering_report(traj: HartreeTrajectory, pairs: Sequence[tuple] | None = None) -> ScatteringReport:
    """Trace-norm Cauchy differences of the backward-propagated state.

    By default the pairs are (t, 2t) for every snapshot time t > 0 whose double
    is also a snapshot; if there are none, consecutive checkpoints are used.
    """
    times = traj.times
    idx = {round(float(t), 9): i for i, t in enumerate(times)}
    if pairs is None:
        pairs = [(t, 2 * t) for t in times if t > 0 and round(2 * float(t), 9) in idx]
        if not pairs:
            pairs = list(zip(times[:-1], times[1:]))
    back = {}

    def bs(t):
        i = idx[round(float(t), 9)]
        if i not in back:
            back[i] = backward_state(traj.snapshots[i])
        return back[i]

    D = np.array([trace_norm_difference(bs(t2), bs(t1)) for t1, t2 in pairs])
    gplus = bs(times[-1])
    a = traj.snapshots[0].ensemble.params.a
    tail = float("nan")
    t1s = np.array([p[0] for p in pairs], float)
    if len(D) >= 2 and np.all(D > 0):
        from .experiments.fitting import fit_power_law

        tail, _ = fit_power_law(np.column_stack([t1s, D]), None, min_points=2)
    monotone = bool(np.all(np.diff(D) < 0)) if len(D) > 1 else True
    note = "" if monotone else "Cauchy differences are not decreasing"
    return ScatteringReport(list(pairs), D, gplus, tail, 1.0 - a, monotone, note)


def weighted_norm_series(traj: HartreeTrajectory) -> np.ndarray:
    p = traj.snapshots[0].ensemble.params
    return np.array([weighted_schatten_norm(s.ensemble, p.r_eps, p.sigma_eps, "momentum") for s in traj.snapshots])


def potential_z_norm(traj: HartreeTrajectory) -> float:
    p = traj.snapshots[0].ensemble.params
    return z_norm(traj.potential_trajectory(), p.sigma_eps if p.sigma_eps > 1 else 1.0 + 1e-9,
                  traj.snapshots[0].ensemble.lattice)
