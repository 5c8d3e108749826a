"""Serialization: ensembles, phase-space fields, CSV tables and JSON reports.

Binary payloads go through numpy (.npz / .npy) and metadata through JSON
sidecars, so arrays round-trip bit-exactly.  Floats in CSV are written with
``repr`` (shortest round-trip form), which makes the text deterministic.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .lattice import Lattice, PhaseSpaceField, PhaseSpaceGrid
from .qstate import OrbitalEnsemble, Params

OUTPUT_ENV = "SEMISCATTER_OUTPUT"
SCHEMA_ENSEMBLE = "semiscatter.ensemble/1"
SCHEMA_FIELD = "semiscatter.field/1"


def output_root(default: str = "semiscatter_out") -> Path:
    """Directory named by $SEMISCATTER_OUTPUT, else ``default`` under the cwd."""
    return Path(os.environ.get(OUTPUT_ENV) or default)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _lattice_meta(lat: Lattice) -> dict:
    return {"d": lat.d, "n": lat.n, "box_length": lat.box_length}


# -- ensembles ----------------------------------------------------------------

def save_ensemble(gamma: OrbitalEnsemble, path) -> Path:
    """Write ``path``.npz (orbitals, occupations) and ``path``.json (lattice, params, meta)."""
    path = Path(path).with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, orbitals=gamma.orbitals, occupations=gamma.occupations)
    write_json(_sidecar(path), {
        "schema": SCHEMA_ENSEMBLE,
        "lattice": _lattice_meta(gamma.lattice),
        "params": asdict(gamma.params),
        "meta": gamma.meta,
    })
    return path


def load_ensemble(path) -> OrbitalEnsemble:
    path = Path(path).with_suffix(".npz")
    side = read_json(_sidecar(path))
    if side.get("schema") != SCHEMA_ENSEMBLE:
        raise ConfigError(f"{path} is not an ensemble file")
    lat = Lattice(**side["lattice"])
    params = Params(**side["params"])
    with np.load(path) as z:
        return OrbitalEnsemble(lat, params, z["orbitals"], z["occupations"], side.get("meta", {}))


# -- phase-space fields --------------------------------------------------------

def save_field(f: PhaseSpaceField, path, meta: dict | None = None) -> Path:
    path = Path(path).with_suffix(".npy")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, f.values)
    g = f.grid
    write_json(_sidecar(path), {
        "schema": SCHEMA_FIELD,
        "lattice": _lattice_meta(g.lattice),
        "n_p": g.n_p,
        "p_extent": g.p_extent,
        "meta": meta or {},
    })
    return path


def load_field(path) -> PhaseSpaceField:
    path = Path(path).with_suffix(".npy")
    side = read_json(_sidecar(path))
    if side.get("schema") != SCHEMA_FIELD:
        raise ConfigError(f"{path} is not a phase-space field file")
    grid = PhaseSpaceGrid(Lattice(**side["lattice"]), side["n_p"], side["p_extent"])
    return PhaseSpaceField(grid, np.load(path))


def field_slice_rows(f: PhaseSpaceField, fixed: Sequence[int] | None = None):
    """(q, p, value) rows of a d = 1 field, or of the (q_0, p_0) plane for d > 1.

    ``fixed`` gives the indices held fixed on the remaining axes (default: the
    middle index, i.e. the origin).
    """
    g = f.grid
    d = g.d
    v = np.real(f.values)
    if d > 1:
        fixed = list(fixed) if fixed is not None else [g.lattice.n // 2] * (d - 1) + [g.n_p // 2] * (d - 1)
        idx = [slice(None)] + fixed[: d - 1] + [slice(None)] + fixed[d - 1:]
        v = v[tuple(idx)]
    q, p = g.lattice.x, g.p
    for i in range(q.size):
        for j in range(p.size):
            yield (float(q[i]), float(p[j]), float(v[i, j]))


def write_field_slice(f: PhaseSpaceField, path, fixed=None) -> Path:
    return write_csv(path, ["q", "p", "value"], field_slice_rows(f, fixed))


# -- tables ----------------------------------------------------------------------

def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])
    return path


def read_csv(path) -> tuple:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


DECAY_COLUMNS = ["t", "norm", "ceiling_static", "ceiling_decay"]


def write_decay_series(series, path, meta: dict | None = None) -> Path:
    """Decay series CSV plus a metadata JSON next to it."""
    path = write_csv(path, DECAY_COLUMNS, series.rows())
    write_json(_sidecar(path), {**series.meta, **(meta or {})})
    return path


def write_correspondence(rep, out_dir) -> dict:
    """report.json, dw.csv (t x hbar) and pairings.csv for a CorrespondenceReport."""
    out = Path(out_dir)
    paths = {"report": write_json(out / "report.json", rep.to_json())}
    header = ["t"] + [f"dw_hbar_{m.hbar!r}" for m in rep.members] + ["digest"]
    rows = [[t] + [m.dw[k] for m in rep.members] + [rep.digest] for k, t in enumerate(rep.times)
            if all(k < m.dw.size for m in rep.members)]
    paths["dw"] = write_csv(out / "dw.csv", header, rows)
    rows = []
    fplus = rep.pair_classical[-1]
    for m in rep.members:
        qplus = m.pair_quantum[-1]
        for k in range(fplus.size):
            rows.append([m.hbar, k + 1, qplus[k], fplus[k], abs(qplus[k] - fplus[k]), rep.digest])
    paths["pairings"] = write_csv(out / "pairings.csv",
                                  ["hbar", "n", "quantum_plus", "classical_plus", "gap", "digest"], rows)
    for m in rep.members:
        sub = out / f"hbar_{m.hbar!r}"
        paths[f"member_{m.hbar!r}"] = write_csv(sub / "series.csv", ["t", "dw", "digest"],
                                                [[t, v, rep.digest] for t, v in zip(m.times, m.dw)])
    return paths
