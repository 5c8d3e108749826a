"""Matched quantum/classical runs over a decreasing sequence of hbar.

For each hbar the initial density operator is the Toeplitz quantisation of a
shared phase-space datum f0.  The Hartree solution is pulled back along the
free flow, g_hbar(t) = Wig[U(t)^* gamma(t) U(t)], and compared in the weak
metric with the moving-frame Vlasov solution g(t) = f(t, q + t p, p).  Each grid
carries its own Hermite test set; the metric is formed from the two vectors of
pairings.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
import numpy as np

from ..errors import ConfigError, DomainError, IntegratorError, SemiscatterError
from ..hartree import Interaction, backward_state, evolve, potential_z_norm, x_in_norm
from ..lattice import Lattice, PhaseSpaceField, PhaseSpaceGrid
from ..phasespace import make_test_set, pairings, toeplitz, weak_metric_from_pairings, wigner, wigner_grid
from ..propagate import TimeGrid
from ..qstate import OrbitalEnsemble, Params, schatten_norm
from ..vlasov import moving_frame, vlasov_evolve

SMALLNESS = 0.05


@dataclass(frozen=True)
class GaussianDatum:
    """f0 = mass * N(q0, var_q) x N(p0, var_p), a normalised product Gaussian."""

    mass: float = 0.02
    q0: float = 0.7
    p0: float = 0.4
    var_q: float = 1.0
    var_p: float = 0.25

    def __call__(self, q, p):
        c = self.mass / (2 * np.pi * math.sqrt(self.var_q * self.var_p))
        return c * np.exp(-((q - self.q0) ** 2) / (2 * self.var_q) - (p - self.p0) ** 2 / (2 * self.var_p))

    def sample(self, grid: PhaseSpaceGrid) -> PhaseSpaceField:
        return grid.sample(self)


@dataclass
class SweepConfig:
    hbars: tuple = (1.0, 0.5, 0.25, 0.125)
    f0: GaussianDatum = field(default_factory=GaussianDatum)
    rank_budget: int = 128
    horizon: float = 8.0
    test_size: int = 16
    out_dir: str | None = None
    box_length: float = 80.0
    n_base: int = 256
    dt: float = 0.05
    snapshot_every: float = 1.0
    sign: int = 1
    a: float = 1.2
    mode: str = "analogue"
    length: float = 1.0
    strength: float = 1.0
    epsilon: float = 0.05
    vlasov_nq: int = 256
    vlasov_np: int = 512
    vlasov_p: float = 7.0
    z_gate: float = 1.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        h = tuple(float(x) for x in self.hbars)
        if not h or any(not (0 < x <= 1) for x in h):
            raise ConfigError("hbar values must lie in (0, 1]")
        if any(b >= a for a, b in zip(h, h[1:])):
            raise ConfigError("hbar values must be strictly decreasing")
        self.hbars = h
        steps = self.snapshot_every / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("snapshot interval must be a multiple of dt")

    def interaction(self) -> Interaction:
        return Interaction(self.sign, self.a, self.mode, self.length, self.strength)

    def params(self, hbar: float) -> Params:
        return Params(hbar, 1, self.a, self.sign, self.epsilon)

    def lattice(self, hbar: float) -> Lattice:
        """Box fixed, points doubled per halving of hbar so P = hbar pi n / L is constant."""
        n = int(2 ** round(math.log2(self.n_base / hbar)))
        return Lattice(1, n, self.box_length)

    def vlasov_grid(self) -> PhaseSpaceGrid:
        return PhaseSpaceGrid(Lattice(1, self.vlasov_nq, self.box_length), self.vlasov_np, self.vlasov_p)

    def timegrid(self) -> TimeGrid:
        return TimeGrid(0.0, self.horizon, self.dt, int(round(self.snapshot_every / self.dt)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hbars"] = list(self.hbars)
        d.pop("workers")  # scheduling only, results do not depend on it
        d.pop("out_dir")
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class MatchedData:
    gamma0: OrbitalEnsemble
    f0: PhaseSpaceField
    x_in: float
    small: bool
    mass_quantum: float
    mass_classical: float


def prepare_matched_data(f0: PhaseSpaceField, params: Params, rank_budget: int,
                         smallness: float = SMALLNESS) -> MatchedData:
    """gamma0 = Toep[f0] together with f0 and its smallness diagnostics."""
    if np.any(np.real(f0.values) < -1e-14 * max(1.0, float(np.abs(f0.values).max()))):
        raise DomainError("initial phase-space datum must be nonnegative")
    gamma0 = toeplitz(f0, rank_budget, params)
    xin = x_in_norm(gamma0) if gamma0.rank else 0.0
    return MatchedData(gamma0, f0, xin, xin <= smallness, schatten_norm(gamma0, 1), f0.integral())


@dataclass
class MemberResult:
    hbar: float
    n: int
    rank: int
    times: np.ndarray
    dw: np.ndarray
    pair_quantum: np.ndarray
    x_in: float
    small: bool
    z_norm: float
    trace_drift: float
    toeplitz_fidelity: float

    @property
    def sup_dw(self) -> float:
        return float(self.dw.max())

    def scattering_gap(self, pair_classical_plus: np.ndarray) -> np.ndarray:
        return np.abs(self.pair_quantum[-1] - pair_classical_plus)


@dataclass
class CorrespondenceReport:
    config: dict
    digest: str
    times: np.ndarray
    pair_classical: np.ndarray
    members: list = field(default_factory=list)
    aborted: bool = False
    reason: str = ""
    vlasov_mass_drift: float = 0.0

    @property
    def hbars(self) -> list:
        return [m.hbar for m in self.members]

    def sup_dw(self) -> np.ndarray:
        return np.array([m.sup_dw for m in self.members])

    def scattering_gaps(self, nmax: int = 8) -> np.ndarray:
        """|<psi_n| Wig[gamma_+] - f_+>| per member (rows) and test index (cols)."""
        return np.array([m.scattering_gap(self.pair_classical[-1])[:nmax] for m in self.members])

    def monotone_dw(self) -> bool:
        s = self.sup_dw()
        return bool(np.all(np.diff(s) < 0))

    def monotone_pairings(self, nmax: int = 8) -> np.ndarray:
        g = self.scattering_gaps(nmax)
        return np.all(np.diff(g, axis=0) < 0, axis=0)

    def flags(self) -> list:
        out = []
        if not self.monotone_dw():
            out.append("sup d^w is not monotone across hbar")
        bad = np.flatnonzero(~self.monotone_pairings())
        if bad.size:
            out.append("scattering pairings not monotone for n in " + ",".join(str(i + 1) for i in bad))
        return out

    def to_json(self) -> dict:
        return {
            "schema": "semiscatter.correspondence/1",
            "digest": self.digest,
            "config": self.config,
            "aborted": self.aborted,
            "reason": self.reason,
            "times": self.times.tolist(),
            "vlasov_mass_drift": self.vlasov_mass_drift,
            "members": [
                {
                    "hbar": m.hbar, "n": m.n, "rank": m.rank, "sup_dw": m.sup_dw,
                    "dw": m.dw.tolist(), "x_in": m.x_in, "small": m.small, "z_norm": m.z_norm,
                    "trace_drift": m.trace_drift, "toeplitz_fidelity": m.toeplitz_fidelity,
                    "scattering_gap": m.scattering_gap(self.pair_classical[-1]).tolist(),
                    "digest": self.digest,
                }
                for m in self.members
            ],
            "flags": self.flags() if self.members else [],
        }


def classical_reference(cfg: SweepConfig):
    grid = cfg.vlasov_grid()
    f0 = cfg.f0.sample(grid)
    traj = vlasov_evolve(f0, cfg.interaction(), cfg.timegrid())
    tests = make_test_set(cfg.test_size, grid)
    gs = moving_frame(traj)
    pc = np.array([pairings(g, tests) for g in gs])
    drift = max(c[2] for c in traj.mass_log)
    return traj.times, pc, drift


def quantum_member(cfg: SweepConfig, hbar: float, pair_classical: np.ndarray) -> MemberResult:
    lat = cfg.lattice(hbar)
    params = cfg.params(hbar)
    grid = wigner_grid(lat, hbar)
    md = prepare_matched_data(cfg.f0.sample(grid), params, cfg.rank_budget)
    tests = make_test_set(cfg.test_size, grid)
    traj = evolve(md.gamma0, cfg.interaction(), cfg.timegrid())
    z = potential_z_norm(traj)
    if z > cfg.z_gate:
        raise IntegratorError(f"potential z-norm {z:.3g} exceeds the gate {cfg.z_gate} at hbar={hbar}")
    pq = np.array([pairings(wigner(backward_state(s), grid), tests) for s in traj.snapshots])
    dw = np.array([weak_metric_from_pairings(a, b) for a, b in zip(pq, pair_classical)])
    fid = weak_metric_from_pairings(pairings(wigner(md.gamma0, grid), tests), pairings(md.f0, tests))
    drift = max(c[2] for c in traj.conservation)
    return MemberResult(hbar, lat.n, md.gamma0.rank, traj.times, dw, pq, md.x_in, md.small, z, drift, fid)


def _member(args):
    cfg, h, pc = args
    try:
        return quantum_member(cfg, h, pc)
    except SemiscatterError as exc:
        return exc


def semiclassical_sweep(cfg: SweepConfig) -> CorrespondenceReport:
    """Run the classical reference once and one Hartree member per hbar.

    With ``cfg.workers > 1`` the members run in a process pool; the report is
    assembled in hbar order either way and stops at the first failing member.
    """
    times, pc, drift = classical_reference(cfg)
    rep = CorrespondenceReport(cfg.to_dict(), cfg.digest(), times, pc, vlasov_mass_drift=drift)
    jobs = [(cfg, h, pc) for h in cfg.hbars]
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_member, jobs))
    else:
        results = []
        for j in jobs:
            results.append(_member(j))
            if isinstance(results[-1], Exception):
                break
    for h, res in zip(cfg.hbars, results):
        if isinstance(res, Exception):
            rep.aborted = True
            rep.reason = f"hbar={h}: {res}"
            break
        rep.members.append(res)
    if cfg.out_dir:
        from ..io import write_correspondence

        write_correspondence(rep, cfg.out_dir)
    return rep
