"""INI run configuration.

Schema (all sections optional unless noted)::

    [lattice]       d = 1, n = 256, box_length = 40
    [params]        hbar = 0.5, a = 1.2, sign = 1, epsilon = 0.05
    [interaction]   mode = analogue | riesz | smooth | none, length = 1, strength = 1
    [initial]       kind = gaussian | coherent | file | toeplitz
                    gaussian/toeplitz: q0, p0, var_q, var_p, mass, rank
                    coherent: centers = q:p:weight; q:p:weight ...
                    file: path (an ensemble written by semiscatter.io.save_ensemble)
    [timegrid]      t0 = 0, t1 = 2, dt = 0.05, stride = 1
    [diagnostics]   r = inf, trace_tol = 1e-8, blowup_ceiling = (none),
                    check_lwp = no, snapshots = no, window = 2:inf
    [vlasov]        n_p = 256, p_extent = 4, mass_tol = 1e-6, cfl_safety = 4
    [sweep]         hbars = 1,0.5,0.25,0.125, rank_budget, horizon, test_size,
                    n_base, box_length, dt, snapshot_every, vlasov_nq,
                    vlasov_np, vlasov_p, z_gate, workers, seed
    [f0]            mass, q0, p0, var_q, var_p    (shared sweep datum)
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..errors import ConfigError, SemiscatterError
from ..hartree import Interaction
from ..lattice import Lattice, PhaseSpaceGrid
from ..propagate import TimeGrid
from ..qstate import OrbitalEnsemble, Params, coherent_ensemble, gaussian_state

KNOWN = {
    "lattice": {"d", "n", "box_length"},
    "params": {"hbar", "a", "sign", "epsilon"},
    "interaction": {"mode", "length", "strength"},
    "initial": {"kind", "q0", "p0", "var_q", "var_p", "mass", "rank", "centers", "path"},
    "timegrid": {"t0", "t1", "dt", "stride"},
    "diagnostics": {"r", "trace_tol", "blowup_ceiling", "check_lwp", "snapshots", "window"},
    "vlasov": {"n_p", "p_extent", "mass_tol", "cfl_safety"},
    "sweep": {"hbars", "rank_budget", "horizon", "test_size", "n_base", "box_length", "dt",
              "snapshot_every", "vlasov_nq", "vlasov_np", "vlasov_p", "z_gate", "length", "mode",
              "strength", "sign", "a", "epsilon", "workers", "seed"},
    "f0": {"mass", "q0", "p0", "var_q", "var_p"},
}


def _float(s: str) -> float:
    s = s.strip().lower()
    if s in ("inf", "infinity", "+inf"):
        return math.inf
    return float(s)


@dataclass
class RunConfig:
    lattice: Lattice
    params: Params
    interaction: Interaction
    timegrid: TimeGrid
    initial: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    vlasov: dict = field(default_factory=dict)
    source: str = ""
    raw: dict = field(default_factory=dict)

    def build_initial_state(self) -> OrbitalEnsemble:
        ini = self.initial
        kind = ini.get("kind", "gaussian")
        lat, par = self.lattice, self.params
        if kind in ("gaussian", "toeplitz"):
            g = dict(q0=0.0, p0=0.0, var_q=1.0, var_p=0.25, mass=1.0)
            g.update({k: _float(v) for k, v in ini.items() if k in g})
            rank = int(ini["rank"]) if "rank" in ini else None
            if kind == "gaussian":
                return gaussian_state(lat, par, g["q0"], g["p0"], g["var_q"], g["var_p"], g["mass"], rank)
            from ..phasespace import wigner_grid
            from .sweep import GaussianDatum, prepare_matched_data

            datum = GaussianDatum(g["mass"], g["q0"], g["p0"], g["var_q"], g["var_p"])
            grid = wigner_grid(lat, par.hbar)
            return prepare_matched_data(datum.sample(grid), par, rank or 128).gamma0
        if kind == "coherent":
            centers, weights = [], []
            for item in ini.get("centers", "").split(";"):
                if not item.strip():
                    continue
                parts = [_float(x) for x in item.split(":")]
                if len(parts) != 3:
                    raise ConfigError(f"coherent centre {item!r} must read q:p:weight")
                centers.append((parts[0], parts[1]))
                weights.append(parts[2])
            if not centers:
                raise ConfigError("coherent initial state needs at least one centre")
            return coherent_ensemble(lat, par, centers, weights)
        if kind == "file":
            from ..io import load_ensemble

            g = load_ensemble(ini["path"])
            if g.lattice != lat:
                raise ConfigError("stored ensemble lattice disagrees with [lattice]")
            return g
        raise ConfigError(f"unknown initial-state kind {kind!r}")

    def initial_datum(self):
        """Phase-space Gaussian matching [initial] for Vlasov runs."""
        from .sweep import GaussianDatum

        g = dict(mass=1.0, q0=0.0, p0=0.0, var_q=1.0, var_p=0.25)
        g.update({k: _float(v) for k, v in self.initial.items() if k in g})
        return GaussianDatum(**g)

    def vlasov_grid(self) -> PhaseSpaceGrid:
        v = self.vlasov
        return PhaseSpaceGrid(self.lattice, int(v.get("n_p", self.lattice.n)), _float(v.get("p_extent", "4")))


def _read(source) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        if isinstance(source, (str, Path)) and Path(source).exists():
            cp.read(source)
        elif isinstance(source, str) and "[" in source:
            cp.read_string(source)
        else:
            raise ConfigError(f"config file {source!r} not found")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for sec in cp.sections():
        if sec not in KNOWN:
            raise ConfigError(f"unknown section [{sec}]")
        extra = set(cp[sec]) - KNOWN[sec]
        if extra:
            raise ConfigError(f"unknown keys in [{sec}]: {', '.join(sorted(extra))}")
    return cp


def load_run_config(source) -> RunConfig:
    """Parse a run config from a path or an INI string."""
    cp = _read(source)
    try:
        lat = cp["lattice"] if cp.has_section("lattice") else {}
        lattice = Lattice(int(lat.get("d", 1)), int(lat.get("n", 256)), _float(lat.get("box_length", "40")))
        pr = cp["params"] if cp.has_section("params") else {}
        params = Params(_float(pr.get("hbar", "0.5")), lattice.d, _float(pr.get("a", "1.2")),
                        int(pr.get("sign", 1)), _float(pr.get("epsilon", "0.05")))
        it = cp["interaction"] if cp.has_section("interaction") else {}
        inter = Interaction(params.sign, params.a, it.get("mode", "analogue"),
                            _float(it.get("length", "1")), _float(it.get("strength", "1")))
        tg = cp["timegrid"] if cp.has_section("timegrid") else {}
        timegrid = TimeGrid(_float(tg.get("t0", "0")), _float(tg.get("t1", "2")),
                            _float(tg.get("dt", "0.05")), int(tg.get("stride", 1)))
    except (ValueError, KeyError, SemiscatterError) as exc:
        raise ConfigError(f"invalid run config: {exc}") from exc
    sec = lambda name: dict(cp[name]) if cp.has_section(name) else {}
    return RunConfig(lattice, params, inter, timegrid, sec("initial"), sec("diagnostics"), sec("vlasov"),
                     str(source), {s: dict(cp[s]) for s in cp.sections()})


def load_sweep_config(source, out_dir: str | None = None):
    """Build a SweepConfig from the [sweep] and [f0] sections."""
    from .sweep import GaussianDatum, SweepConfig

    cp = _read(source)
    sw = dict(cp["sweep"]) if cp.has_section("sweep") else {}
    kw = {}
    types = {f.name: f.type for f in fields(SweepConfig)}
    try:
        for k, v in sw.items():
            if k == "hbars":
                kw[k] = tuple(_float(x) for x in v.split(","))
            elif k == "mode":
                kw[k] = v.strip()
            elif types[k] in ("int", int):
                kw[k] = int(v)
            else:
                kw[k] = _float(v)
        if cp.has_section("f0"):
            kw["f0"] = GaussianDatum(**{k: _float(v) for k, v in cp["f0"].items()})
        if out_dir is not None:
            kw["out_dir"] = out_dir
        return SweepConfig(**kw)
    except (ValueError, TypeError, SemiscatterError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid sweep config: {exc}") from exc


def window(diag: dict) -> tuple:
    w = diag.get("window", "2:inf")
    a, b = w.split(":")
    return _float(a), _float(b)


def as_bool(diag: dict, key: str, default: bool = False) -> bool:
    v = str(diag.get(key, default)).strip().lower()
    return v in ("1", "yes", "true", "on")


def optional_float(diag: dict, key: str):
    v = diag.get(key)
    if v is None or str(v).strip().lower() in ("", "none"):
        return None
    return _float(v)
