"""Invariant suite for the phase-space transforms on one grid."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..lattice import Lattice
from ..phasespace import (gaussian_smooth, husimi, operator_trace, toeplitz_kernel, weyl_kernel_nd,
                          wigner, wigner_grid)
from ..propagate import free_ensemble, free_transport
from ..qstate import OrbitalEnsemble, Params, coherent_ensemble, coherent_state


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float
    skipped: bool = False

    @property
    def passed(self) -> bool:
        return self.skipped or self.error <= self.tol

    def row(self) -> str:
        state = "skip" if self.skipped else ("pass" if self.passed else "FAIL")
        return f"{self.name:<28s} {self.error:11.3e} {self.tol:9.1e}  {state}"


def balanced_box(n: int, hbar: float) -> float:
    """Box length giving equal position and momentum extents, L/2 = hbar pi n / L."""
    return math.sqrt(2 * math.pi * n * hbar)


def _rel(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def transform_suite(d: int = 1, n: int = 256, hbar: float = 1.0, box_length: float | None = None,
                    times=(0.5, 1.0, 2.0)) -> list:
    L = box_length or balanced_box(n, hbar)
    lat = Lattice(d, n, L)
    par = Params(hbar, d)
    grid = wigner_grid(lat, hbar)
    out = []
    q0, p0 = [0.5, -0.3][:d], [0.7, 0.2][:d]

    # coherent state: Wig = 2^d exp(-|z - z0|^2 / hbar)
    g1 = OrbitalEnsemble(lat, par, coherent_state(lat, q0, p0, hbar)[None], [1.0])
    W = wigner(g1)
    q, p = grid.coords[:d], grid.coords[d:]
    exact = 2.0**d * np.exp(-sum((qi - a) ** 2 for qi, a in zip(q, q0)) / hbar
                            - sum((pi - b) ** 2 for pi, b in zip(p, p0)) / hbar)
    out.append(CheckResult("coherent wigner", _rel(W.values, exact), 1e-8))

    # mixed state used for the remaining identities
    centers = [(q0, p0), ([-1.0, 0.4][:d], [-0.4, 0.6][:d])]
    gam = coherent_ensemble(lat, par, centers, [0.6, 0.4])
    Wg = wigner(gam)
    K = gam.kernel()
    hs = float(np.sum(np.abs(K) ** 2) * lat.cell**2)
    iso = float(np.sum(Wg.values**2) * grid.cell) / (2 * np.pi * hbar) ** d
    out.append(CheckResult("wigner isometry", abs(iso - hs) / hs, 1e-8))
    tr = Wg.integral() / (2 * np.pi * hbar) ** d
    out.append(CheckResult("wigner trace", abs(tr - gam.trace()) / gam.trace(), 1e-8))

    Hd = husimi(gam)
    Hs = gaussian_smooth(Wg, hbar)
    out.append(CheckResult("husimi = G * wigner", _rel(Hd.values, Hs.values), 1e-8))

    f = grid.sample(lambda *c: np.exp(-sum((x - 0.3) ** 2 for x in c[:d]) - sum((y + 0.2) ** 2 for y in c[d:]) / 2))
    if d == 1 and n <= 1024:
        back = weyl_kernel_nd(Wg, hbar)
        out.append(CheckResult("weyl(wigner) = identity", _rel(back, K.reshape(back.shape)), 1e-8))
        lhs = operator_trace(gam, weyl_kernel_nd(f, hbar)).real
        rhs = float(np.sum(f.values * Wg.values) * grid.cell) / (2 * np.pi * hbar) ** d
        out.append(CheckResult("weyl/wigner duality", abs(lhs - rhs) / abs(rhs), 1e-6))
        T = toeplitz_kernel(f, hbar)
        ev = np.linalg.eigvalsh(0.5 * (T + T.conj().T) * lat.cell)
        out.append(CheckResult("toeplitz positivity", max(0.0, -ev.min() / ev.max()), 1e-12))
    else:
        for name in ("weyl(wigner) = identity", "weyl/wigner duality", "toeplitz positivity"):
            out.append(CheckResult(name, 0.0, 0.0, skipped=True))

    # Husimi/Toeplitz duality: Tr(gamma Toep f) = (2 pi hbar)^-d int f Hus gamma
    if d == 1 and n <= 1024:
        lhs = operator_trace(gam, toeplitz_kernel(f, hbar)).real
        rhs = float(np.sum(f.values * Hd.values) * grid.cell) / (2 * np.pi * hbar) ** d
        out.append(CheckResult("toeplitz/husimi duality", abs(lhs - rhs) / abs(rhs), 1e-6))

    for t in times:
        a = wigner(free_ensemble(gam, t)).values
        b = free_transport(Wg, t, warn=False).values
        out.append(CheckResult(f"free commutation t={t:g}", _rel(a, b), 1e-6))
    return out


def format_table(results) -> str:
    head = f"{'check':<28s} {'error':>11s} {'tol':>9s}  state"
    return "\n".join([head] + [r.row() for r in results])
