"""Vlasov dynamics on a phase-space grid.

d_t f + p.grad_q f - grad Phi.grad_p f = 0 with Phi = w * rho_f, advanced by
Strang splitting: half free transport in q, exact momentum kick in p, half
free transport.  Both substeps are Fourier shifts along one set of axes,
exact for band-limited data.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FitError, IntegratorError, StepStabilityError
from .hartree import Interaction, mean_field, _grad_sup
from .lattice import PhaseSpaceField, PhaseSpaceGrid, lp_quadrature
from .phasespace import hminus1_norm
from .propagate import TimeGrid, free_transport, transport_phase


def vlasov_density(f: PhaseSpaceField) -> np.ndarray:
    """rho_f(q) = int f(q, p) dp."""
    g = f.grid
    return np.sum(f.values, axis=g.p_axes).real * g.dp**g.d


@dataclass
class VlasovSnapshot:
    t: float
    f: PhaseSpaceField
    rho: np.ndarray
    phi: np.ndarray
    grad_sup: float


@dataclass
class VlasovTrajectory:
    snapshots: list
    interaction: Interaction
    timegrid: TimeGrid
    mass_log: list = field(default_factory=list)
    min_ratio: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])


class _Stepper:
    """Precomputed multipliers for repeated steps on one grid."""

    def __init__(self, grid: PhaseSpaceGrid, w: Interaction, dt: float, cfl_safety: float = 4.0):
        self.grid = grid
        self.w = w
        self.dt = dt
        self.mult = w.multiplier(grid.lattice)
        self.half = transport_phase(grid, 0.5 * dt)
        self.full = self.half * self.half
        self.cfl = cfl_safety
        d = grid.d
        self.zeta = np.meshgrid(*([grid.zeta] * d), indexing="ij", sparse=True)

    def transport(self, values, phase):
        axes = self.grid.q_axes
        return np.fft.ifftn(phase * np.fft.fftn(values, axes=axes), axes=axes).real

    def field(self, values):
        g = self.grid
        rho = np.sum(values, axis=g.p_axes) * g.dp**g.d
        return rho, *mean_field(rho, self.w, g.lattice, self.mult)

    def kick(self, values, grads):
        """f(q, p + dt grad Phi(q)) through a Fourier shift in p."""
        g = self.grid
        d = g.d
        gmax = _grad_sup(grads)
        if gmax * self.dt > self.cfl * g.dp:
            raise StepStabilityError(
                f"|grad Phi| dt = {gmax * self.dt:.3g} exceeds {self.cfl} momentum cells"
            )
        if gmax == 0:
            return values
        axes = g.p_axes
        ph = 0.0
        for i in range(d):
            gi = grads[i].reshape(g.lattice.shape + (1,) * d)
            zi = self.zeta[i].reshape((1,) * d + self.zeta[i].shape)
            ph = ph + gi * zi
        return np.fft.ifftn(np.exp(1j * self.dt * ph) * np.fft.fftn(values, axes=axes), axes=axes).real


def vlasov_step(f: PhaseSpaceField, w: Interaction, dt: float, cfl_safety: float = 4.0) -> PhaseSpaceField:
    st = _Stepper(f.grid, w, dt, cfl_safety)
    v = st.transport(f.values, st.half)
    _, _, grads = st.field(v)
    v = st.kick(v, grads)
    v = st.transport(v, st.half)
    return PhaseSpaceField(f.grid, v)


def vlasov_evolve(f0: PhaseSpaceField, w: Interaction, timegrid: TimeGrid, mass_tol: float = 1e-6,
                  cfl_safety: float = 4.0) -> VlasovTrajectory:
    """Strang-split Vlasov run with snapshots at the grid's stride.

    Raises IntegratorError when the mass drifts more than ``mass_tol`` (relative)
    per unit time.  The most negative value relative to the peak is recorded in
    ``min_ratio``.
    """
    g = f0.grid
    st = _Stepper(g, w, timegrid.dt, cfl_safety)
    v = np.array(f0.values, float)

    def snap(t, vals):
        rho, phi, grads = st.field(vals)
        return VlasovSnapshot(t, PhaseSpaceField(g, vals.copy()), rho, phi, _grad_sup(grads))

    s0 = snap(timegrid.t0, v)
    m0 = float(np.sum(v) * g.cell)
    peak = float(np.abs(v).max()) or 1.0
    traj = VlasovTrajectory([s0], w, timegrid, [(timegrid.t0, m0, 0.0)])
    marks = set(timegrid.snapshot_steps())
    worst = float(v.min()) / peak
    v = st.transport(v, st.half)
    for k in range(timegrid.steps):
        _, _, grads = st.field(v)
        v = st.kick(v, grads)
        step = k + 1
        if step in marks:
            v = st.transport(v, st.half)
            t = timegrid.t0 + step * timegrid.dt
            s = snap(t, v)
            m = float(np.sum(v) * g.cell)
            drift = abs(m - m0) / max(abs(m0), 1e-300)
            traj.mass_log.append((t, m, drift))
            traj.snapshots.append(s)
            worst = min(worst, float(v.min()) / peak)
            if drift > mass_tol * max(1.0, t - timegrid.t0):
                raise IntegratorError(f"mass drift {drift:.3e} at t={t}", {"t": t, "mass": m, "mass0": m0})
            v = st.transport(v, st.half)
        else:
            v = st.transport(v, st.full)
    traj.min_ratio = worst
    return traj


def moving_frame(traj: VlasovTrajectory) -> list:
    """g(t_k) = U(-t_k) f(t_k) for every snapshot."""
    return [free_transport(s.f, -s.t, warn=False) for s in traj.snapshots]


@dataclass
class VlasovScatteringReport:
    pairs: list
    cauchy: np.ndarray
    f_plus: PhaseSpaceField
    density_slope: float
    density_stderr: float
    density_target: float
    decreasing: bool
    note: str = ""


def vlasov_scattering_report(traj: VlasovTrajectory, r: float = np.inf, pairs: Sequence[tuple] | None = None,
                             window: tuple = (2.0, np.inf)) -> VlasovScatteringReport:
    """H^-1 Cauchy differences of the moving-frame solution and a density-decay fit."""
    from .experiments.fitting import fit_power_law

    times = traj.times
    idx = {round(float(t), 9): i for i, t in enumerate(times)}
    if pairs is None:
        pairs = [(t, 2 * t) for t in times if t > 0 and round(2 * float(t), 9) in idx]
        if not pairs:
            pairs = list(zip(times[:-1], times[1:]))
    gs = moving_frame(traj)
    cauchy = np.array([hminus1_norm(gs[idx[round(float(b), 9)]] - gs[idx[round(float(a), 9)]]) for a, b in pairs])
    lat = traj.snapshots[0].f.grid.lattice
    nrm = np.array([lp_quadrature(s.rho, r, lat.cell) for s in traj.snapshots])
    sel = (times >= window[0]) & (times <= window[1])
    slope, err = float("nan"), float("nan")
    if sel.sum() >= 5 and np.all(nrm[sel] > 0):
        slope, err = fit_power_law(np.column_stack([times, nrm]), window)
    rp = 1.0 if np.isinf(r) else r / (r - 1.0)
    dec = bool(np.all(np.diff(cauchy) < 0)) if len(cauchy) > 1 else True
    return VlasovScatteringReport(list(pairs), cauchy, gs[-1], slope, err, -lat.d / rp, dec,
                                  "" if dec else "Cauchy differences are not decreasing")
