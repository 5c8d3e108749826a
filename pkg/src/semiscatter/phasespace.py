"""Phase-space transforms: Wigner, Weyl, Husimi, Toeplitz and friends.

All quantum-to-phase-space maps use the momentum grid p = hbar * xi built by
:meth:`PhaseSpaceGrid.for_wigner`, so the y -> p integral is a plain discrete
transform.  Half-integer kernel offsets are handled by spectrally shifting the
orbitals (or the kernel) by half a cell, which is exact for band-limited data.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import AliasingError, CapabilityError, DomainError
from .lattice import Lattice, PhaseSpaceField, PhaseSpaceGrid, _axis_transform, lp_quadrature
from .qstate import (OrbitalEnsemble, Params, coherent_state, hermite_functions,
                     minimum_image)

MAX_WIGNER_DIM = 2


@dataclass(frozen=True)
class CoherentState:
    q0: tuple
    p0: tuple
    hbar: float

    def field(self, lattice: Lattice) -> np.ndarray:
        return coherent_state(lattice, self.q0, self.p0, self.hbar)


def wigner_grid(lattice: Lattice, hbar: float) -> PhaseSpaceGrid:
    return PhaseSpaceGrid.for_wigner(lattice, hbar)


def _check_grid(grid: PhaseSpaceGrid | None, lattice: Lattice, hbar: float) -> PhaseSpaceGrid:
    ref = wigner_grid(lattice, hbar)
    if grid is None:
        return ref
    if grid.lattice != lattice:
        raise ValueError("phase-space grid and ensemble use different lattices")
    if grid.n_p != ref.n_p or not math.isclose(grid.p_extent, ref.p_extent, rel_tol=1e-12):
        raise AliasingError(
            f"momentum grid must be the hbar-image of the lattice frequencies "
            f"(n_p={ref.n_p}, P={ref.p_extent:.6g})"
        )
    return grid


def _half_shift(values: np.ndarray, parity: Sequence[int], lattice: Lattice, axis0: int) -> np.ndarray:
    """Shift ``values`` by +h/2 along lattice axes flagged in ``parity``.

    ``axis0`` is the array axis that holds lattice axis 0.
    """
    if not any(parity):
        return values
    n, h = lattice.n, lattice.spacing
    out = values
    for i, s in enumerate(parity):
        if s:
            ax = axis0 + i
            shape = [1] * out.ndim
            shape[ax] = n
            ph = np.exp(0.5j * h * lattice.xi).reshape(shape)
            out = np.fft.ifft(ph * np.fft.fft(out, axis=ax), axis=ax)
    return out


def _gather_indices(n: int, d: int, parity: Sequence[int]):
    """Index arrays mapping (q_j, y_m) samples onto kernel entries.

    For y = (2k + s) h the points q +- y/2 are x_{j+k} + s h/2 and
    x_{j-k-s} + s h/2.
    """
    j = np.arange(n)[:, None]
    k = np.arange(-(n // 4), n // 4)[None, :]
    ia, ib, ms = [], [], []
    for i, s in enumerate(parity):
        shape = [1] * (2 * d)
        shape[i] = n
        shape[d + i] = n // 2
        ia.append(((j + k) % n).reshape(shape))
        ib.append(((j - k - s) % n).reshape(shape))
        ms.append((2 * k[0] + s + n // 2))
    return tuple(ia), tuple(ib), ms


def _parities(d: int):
    return list(itertools.product((0, 1), repeat=d))


def _ambiguity(kernels, lattice: Lattice, weights=None) -> np.ndarray:
    """A(q, y) = K(q + y/2, q - y/2) on the (q, y) grid.

    ``kernels(parity)`` returns the kernel sampled on the grid shifted by half a
    cell along flagged axes, as an array of shape ``(n,)*d + (n,)*d``.  When
    ``weights(parity, ia, ib, ms)`` is given, its output multiplies each block.
    """
    n, d = lattice.n, lattice.d
    out = np.zeros((n,) * (2 * d), dtype=complex)
    for par in _parities(d):
        ia, ib, ms = _gather_indices(n, d, par)
        block = kernels(par)[ia + ib]
        if weights is not None:
            block = block * weights(par, ia, ib, ms)
        out[(slice(None),) * d + np.ix_(*ms)] = block
    return out


def _y_to_p(a: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Continuum transform in y over the trailing d axes; p ascending."""
    d = lattice.d
    axes = tuple(range(d, 2 * d))
    out = _axis_transform(a, axes, lattice.spacing, lattice.n, inverse=False)
    return np.fft.fftshift(out, axes=axes)


def _ensemble_kernels(gamma: OrbitalEnsemble):
    lat = gamma.lattice
    cache = {}

    def kernels(par):
        if par not in cache:
            psi = _half_shift(gamma.orbitals, par, lat, 1)
            flat = psi.reshape(gamma.rank, gamma.lattice.cells)
            k = (flat.T * gamma.occupations) @ flat.conj()
            cache.clear()
            cache[par] = k.reshape(lat.shape * 2)
        return cache[par]

    return kernels


def _require_dim(lattice: Lattice):
    if lattice.d > MAX_WIGNER_DIM:
        raise CapabilityError(f"phase-space transforms are limited to d <= {MAX_WIGNER_DIM}")


def wigner(gamma: OrbitalEnsemble, grid: PhaseSpaceGrid | None = None) -> PhaseSpaceField:
    """Wig[gamma](q, p) = int gamma(q + y/2, q - y/2) exp(-i y.p / hbar) dy."""
    lat = gamma.lattice
    _require_dim(lat)
    grid = _check_grid(grid, lat, gamma.hbar)
    if gamma.rank == 0:
        return grid.zeros()
    a = _ambiguity(_ensemble_kernels(gamma), lat)
    return PhaseSpaceField(grid, _y_to_p(a, lat).real)


def wigner_kernel(kernel: np.ndarray, lattice: Lattice, hbar: float, real: bool = True) -> PhaseSpaceField:
    """Wigner transform of an operator given by its dense kernel K(x, x')."""
    _require_dim(lattice)
    grid = wigner_grid(lattice, hbar)
    k = np.asarray(kernel).reshape(lattice.shape * 2)
    a = _ambiguity(lambda par: _shift_kernel(k, par, lattice), lattice)
    w = _y_to_p(a, lattice)
    return PhaseSpaceField(grid, w.real if real else w)


def _shift_kernel(k, par, lattice):
    """K(x + s h/2, x' + s h/2)."""
    return _half_shift(_half_shift(k, par, lattice, 0), par, lattice, lattice.d)


def _weyl_profile(f: PhaseSpaceField, hbar: float) -> np.ndarray:
    """F(q, y) = (2 pi hbar)^-d int f(q, p) exp(i p.y / hbar) dp on the (q, y) grid."""
    g = f.grid
    lat = g.lattice
    axes = g.p_axes
    vals = np.fft.ifftshift(f.values, axes=axes)
    # dp = hbar dxi turns the p integral into a lattice inverse transform.
    return _axis_transform(vals, axes, lat.spacing, lat.n, inverse=True)


def weyl_kernel_nd(f: PhaseSpaceField, hbar: float) -> np.ndarray:
    """Weyl[f](x, x') on the grid, shape ``(n,)*d + (n,)*d``.

    Entries with |x_i - x'_i| >= L/2 on some axis are set to zero.
    """
    g = f.grid
    lat = g.lattice
    _check_grid(g, lat, hbar)
    _require_dim(lat)
    n, d = lat.n, lat.d
    prof = _weyl_profile(f, hbar)
    a = np.arange(n)[:, None]
    b = np.arange(n)[None, :]
    par = (a + b) % 2
    qidx = (a + b - par) // 2
    midx = a - b + n // 2
    valid = np.abs(a - b) < n // 2
    midx = np.where(valid, midx, 0)
    out = np.zeros((n,) * (2 * d), dtype=complex)
    for s in _parities(d):
        fs = _half_shift(prof, s, lat, 0)
        idx_q, idx_m, mask = [], [], None
        for i in range(d):
            shape = [1] * (2 * d)
            shape[i] = n
            shape[d + i] = n
            idx_q.append(qidx.reshape(shape))
            idx_m.append(midx.reshape(shape))
            mi = ((par == s[i]) & valid).reshape(shape)
            mask = mi if mask is None else mask & mi
        vals = fs[tuple(idx_q) + tuple(idx_m)]
        out = np.where(mask, vals, out)
    return out


def weyl(f: PhaseSpaceField, hbar: float) -> np.ndarray:
    """Dense Weyl kernel (n, n); one dimension only."""
    if f.grid.d != 1:
        raise CapabilityError("dense Weyl kernels are available for d = 1 only")
    if f.grid.lattice.n > 1024:
        raise CapabilityError("dense Weyl kernels are limited to n <= 1024")
    return weyl_kernel_nd(f, hbar)


def weyl_apply(f: PhaseSpaceField, u: np.ndarray, hbar: float) -> np.ndarray:
    """(Weyl[f] u)(x) = int Weyl[f](x, x') u(x') dx'."""
    lat = f.grid.lattice
    k = weyl_kernel_nd(f, hbar)
    d = lat.d
    return np.tensordot(k, u, axes=(tuple(range(d, 2 * d)), tuple(range(d)))) * lat.cell


def operator_trace(gamma: OrbitalEnsemble, kernel: np.ndarray) -> complex:
    """Tr(gamma K) for a dense kernel K."""
    lat = gamma.lattice
    k = kernel.reshape(lat.n**lat.d, -1)
    psi = gamma.orbitals.reshape(gamma.rank, gamma.lattice.cells)
    vals = np.einsum("ja,ab,jb->j", psi.conj(), k, psi) * lat.cell**2
    return complex(np.dot(gamma.occupations, vals))


# -- Husimi and Gaussian smoothing -----------------------------------------

def gaussian_smooth(f: PhaseSpaceField, hbar: float) -> PhaseSpaceField:
    """G * f with G(z) = exp(-|z|^2 / hbar) / (pi hbar)^d on phase space."""
    g = f.grid
    sym = np.exp(-0.25 * hbar * (g.frequency_bracket_sq() - 1.0))
    out = g.multiplier(f.values, sym)
    return PhaseSpaceField(g, out.real if np.isrealobj(f.values) else out)


def husimi(gamma: OrbitalEnsemble, grid: PhaseSpaceGrid | None = None) -> PhaseSpaceField:
    """Hus[gamma](q, p) = <phi_(q,p)| gamma |phi_(q,p)> by coherent-state overlaps."""
    lat, hbar = gamma.lattice, gamma.hbar
    _require_dim(lat)
    grid = _check_grid(grid, lat, hbar)
    if gamma.rank == 0:
        return grid.zeros()
    n, d = lat.n, lat.d
    win = np.exp(-minimum_image(lat.x[None, :], lat.x[:, None], lat.box_length) ** 2 / (2 * hbar))
    pref = (np.pi * hbar) ** (-d / 2.0)
    out = np.zeros(grid.shape)
    for lam, psi in zip(gamma.occupations, gamma.orbitals):
        # windowed field indexed (q_1..q_d, x_1..x_d)
        w = psi.reshape((1,) * d + lat.shape)
        for i in range(d):
            shape = [1] * (2 * d)
            shape[i] = n
            shape[d + i] = n
            w = w * win.reshape(shape)
        spec = _axis_transform(w, tuple(range(d, 2 * d)), lat.spacing, n, inverse=False)
        out += lam * np.abs(np.fft.fftshift(spec, axes=tuple(range(d, 2 * d)))) ** 2
    return PhaseSpaceField(grid, pref * out)


def husimi_from_wigner(gamma: OrbitalEnsemble, grid: PhaseSpaceGrid | None = None) -> PhaseSpaceField:
    return gaussian_smooth(wigner(gamma, grid), gamma.hbar)


# -- Toeplitz quantisation --------------------------------------------------

def toeplitz(f: PhaseSpaceField, rank_budget: int, params: Params, method: str = "eigen",
             rel_cut: float = 1e-14) -> OrbitalEnsemble:
    """Toep[f] = (2 pi hbar)^-d int f(z) |phi_z><phi_z| dz by grid quadrature.

    ``method="nodes"`` keeps the ``rank_budget`` nodes with the largest
    quadrature contributions w_k f(z_k), giving an ensemble of coherent states.
    ``method="eigen"`` (d = 1, Wigner momentum grid) sums every node into a
    dense kernel and keeps its ``rank_budget`` largest eigenpairs, which gives
    an orthonormal ensemble.  Negative eigenvalues (from f < 0) are dropped.
    """
    g = f.grid
    lat = g.lattice
    hbar = params.hbar
    if rank_budget < 1:
        raise DomainError("rank budget must be >= 1")
    if method == "nodes":
        return _toeplitz_nodes(f, rank_budget, params)
    if method != "eigen":
        raise ValueError(f"unknown Toeplitz method {method!r}")
    if lat.d != 1:
        raise CapabilityError("the eigen Toeplitz route is available for d = 1 only")
    if rank_budget > lat.n:
        raise CapabilityError(f"rank budget {rank_budget} exceeds the {lat.n} available eigenpairs")
    if not np.any(f.values):
        return OrbitalEnsemble.empty(lat, params)
    k = toeplitz_kernel(f, hbar)
    h = lat.spacing
    m = 0.5 * (k + k.conj().T) * h
    mu, v = linalg.eigh(m)
    order = np.argsort(-mu, kind="stable")[:rank_budget]
    mu, v = mu[order], v[:, order]
    keep = mu > rel_cut * max(mu.max(), 0.0)
    mu, v = mu[keep], v[:, keep]
    return OrbitalEnsemble(lat, params, (v / math.sqrt(h)).T, mu,
                           meta={"kind": "toeplitz", "method": "eigen", "rank_budget": rank_budget})


def _toeplitz_nodes(f: PhaseSpaceField, rank_budget: int, params: Params) -> OrbitalEnsemble:
    g = f.grid
    lat = g.lattice
    nodes = int(np.prod(g.shape))
    if rank_budget > nodes:
        raise CapabilityError(f"rank budget {rank_budget} exceeds {nodes} quadrature nodes")
    score = (g.cell * np.real(f.values)).reshape(-1)
    order = np.argsort(-score, kind="stable")[:rank_budget]
    order = order[score[order] > 0]
    if order.size == 0:
        return OrbitalEnsemble.empty(lat, params)
    d = g.d
    qs = [lat.x] * d
    ps = [g.p] * d
    orbs, occ = [], []
    for flat in order:
        idx = np.unravel_index(flat, g.shape)
        q = [qs[i][idx[i]] for i in range(d)]
        p = [ps[i][idx[d + i]] for i in range(d)]
        orbs.append(coherent_state(lat, q, p, params.hbar))
        occ.append(score[flat] / params.phase_cell)
    return OrbitalEnsemble(lat, params, np.array(orbs), np.array(occ),
                           meta={"kind": "toeplitz", "method": "nodes", "rank_budget": rank_budget})


def toeplitz_kernel(f: PhaseSpaceField, hbar: float) -> np.ndarray:
    """Dense kernel of the full-grid Toeplitz operator (d = 1, Wigner grid).

    K(x, x - y) = (pi hbar)^(-1/2) sum_q h F(q, y) G(x - q) G(x - y - q) with
    F the inverse momentum transform of f and G the minimum-image Gaussian.
    Each offset y is one circular convolution in q.
    """
    g = f.grid
    lat = g.lattice
    _check_grid(g, lat, hbar)
    n, h, L = lat.n, lat.spacing, lat.box_length
    prof = _weyl_profile(f, hbar)              # (q, m) with y_m = -L/2 + m h
    offs = np.arange(n)                          # o = a - b mod n
    mcol = (offs + n // 2) % n
    disp = minimum_image(h * np.arange(n), 0.0, L)
    gdisp = np.exp(-disp**2 / (2 * hbar))
    # H_o(i) = G(i h) G((i - o) h)
    hmat = gdisp[None, :] * gdisp[(np.arange(n)[None, :] - offs[:, None]) % n]
    conv = np.fft.ifft(np.fft.fft(prof[:, mcol].T, axis=1) * np.fft.fft(hmat, axis=1), axis=1)
    conv *= h * (np.pi * hbar) ** -0.5
    k = np.empty((n, n), dtype=complex)
    a = np.arange(n)
    for o in range(n):
        k[a, (a - o) % n] = conv[o]
    return k


# -- semiclassical remainder ------------------------------------------------

def remainder(gamma: OrbitalEnsemble, V, grid: PhaseSpaceGrid | None = None, grad=None) -> PhaseSpaceField:
    """R[gamma; V] = (1/hbar) int Q(q, y) gamma(q + y/2, q - y/2) exp(-i y.p/hbar) dy.

    Q(q, y) = V(q + y/2) - V(q - y/2) - grad V(q).y is the part of the
    potential difference beyond the force term; in the rescaled variable
    y = hbar y' this is hbar^(d-1) F_{y'->p}[Q_hbar gamma(q + hbar y'/2, q - hbar y'/2)].

    ``V`` is either a periodic sample array on the lattice (differences taken on
    the torus, gradient spectral) or a callable ``V(*coords)`` evaluated at the
    unwrapped points q +- y/2.  For a callable the gradient is ``grad(*coords)``
    (a sequence of d arrays) when given, else a central difference.
    """
    lat, hbar = gamma.lattice, gamma.hbar
    _require_dim(lat)
    grid = _check_grid(grid, lat, hbar)
    if gamma.rank == 0:
        return PhaseSpaceField(grid, np.zeros(grid.shape, complex))
    n, d, h = lat.n, lat.d, lat.spacing

    def offsets(ms):
        out = []
        for i in range(d):
            shape = [1] * (2 * d)
            shape[d + i] = n // 2
            out.append(((ms[i] - n // 2) * h).reshape(shape))
        return out

    if callable(V):
        qs = []
        for i in range(d):
            shape = [1] * (2 * d)
            shape[i] = n
            qs.append(lat.x.reshape(shape))
        if grad is None:
            eps = 1e-5 * max(1.0, lat.box_length / (2 * np.pi)) ** 0.5

            def grad(*c):
                g = []
                for i in range(d):
                    up = [ci + (eps if k == i else 0.0) for k, ci in enumerate(c)]
                    dn = [ci - (eps if k == i else 0.0) for k, ci in enumerate(c)]
                    g.append((np.asarray(V(*up), float) - np.asarray(V(*dn), float)) / (2 * eps))
                return g

        gq = [np.asarray(gi, float) for gi in grad(*qs)]

        def weights(par, ia, ib, ms):
            ys = offsets(ms)
            plus = [q + 0.5 * y for q, y in zip(qs, ys)]
            minus = [q - 0.5 * y for q, y in zip(qs, ys)]
            w = np.asarray(V(*plus), float) - np.asarray(V(*minus), float)
            for gi, y in zip(gq, ys):
                w = w - gi * y
            return w
    else:
        V = np.asarray(V, float)
        grads = lat.gradient(V)

        def weights(par, ia, ib, ms):
            vs = _half_shift(V.astype(complex), par, lat, 0).real
            w = vs[ia] - vs[ib]
            for i, y in enumerate(offsets(ms)):
                w = w - grads[i].reshape(list(grads[i].shape) + [1] * d) * y
            return w

    a = _ambiguity(_ensemble_kernels(gamma), lat, weights)
    return PhaseSpaceField(grid, _y_to_p(a, lat) / hbar)


def bracket_norm(g: PhaseSpaceField, s_q: float, s_p: float) -> float:
    """|| <grad_q>^s_q <grad_p>^s_p g ||_{L^2}."""
    grid = g.grid
    d = grid.d
    ks = np.meshgrid(*([grid.lattice.xi] * d + [grid.zeta] * d), indexing="ij", sparse=True)
    kq = 1.0 + sum(k**2 for k in ks[:d])
    kp = 1.0 + sum(k**2 for k in ks[d:])
    sym = kq ** (0.5 * s_q) * kp ** (0.5 * s_p)
    out = grid.multiplier(g.values, sym)
    return lp_quadrature(out, 2, grid.cell)


def hminus1_norm(g: PhaseSpaceField) -> float:
    """|| <(xi_q, xi_p)>^-1 g_hat || in L^2, evaluated on the position side by Parseval."""
    grid = g.grid
    out = grid.multiplier(g.values, grid.frequency_bracket_sq() ** -0.5)
    return lp_quadrature(out, 2, grid.cell)


# -- weak metric ------------------------------------------------------------

@dataclass
class TestSet:
    grid: PhaseSpaceGrid
    indices: list
    functions: np.ndarray
    width: float = 1.0

    __test__ = False  # not a pytest class

    def __len__(self):
        return len(self.indices)


def _multi_indices(count: int, dims: int) -> list:
    out = []
    deg = 0
    while len(out) < count:
        level = [c for c in itertools.product(range(deg + 1), repeat=dims) if sum(c) == deg]
        out.extend(sorted(level))
        deg += 1
    return out[:count]


def make_test_set(N: int, grid: PhaseSpaceGrid, width: float = 1.0, center=None, tol: float = 1e-10) -> TestSet:
    """First N Hermite tensor products on (q, p), by total degree then lexicographically."""
    if N < 1:
        raise DomainError("test set needs N >= 1")
    d = grid.d
    idx = _multi_indices(N, 2 * d)
    deg = max(max(i) for i in idx) + 1
    c = np.zeros(2 * d) if center is None else np.broadcast_to(np.asarray(center, float), (2 * d,))
    axes_q = hermite_functions(grid.lattice.x - c[0], deg, width)
    axes_p = hermite_functions(grid.p - c[d], deg, width)
    funcs = np.empty((N,) + grid.shape)
    for k, mi in enumerate(idx):
        v = np.ones(())
        for i in range(d):
            v = np.multiply.outer(v, axes_q[mi[i]]) if v.ndim else axes_q[mi[i]]
        for i in range(d):
            v = np.multiply.outer(v, axes_p[mi[d + i]])
        funcs[k] = v
    norms = np.sqrt(np.sum(funcs**2, axis=tuple(range(1, funcs.ndim))) * grid.cell)
    if np.any(np.abs(norms - 1.0) > tol):
        raise CapabilityError("grid does not resolve the requested test functions")
    return TestSet(grid, idx, funcs, width)


def pairings(g: PhaseSpaceField, tests: TestSet) -> np.ndarray:
    """<psi_n | g> for every test function."""
    if g.grid != tests.grid:
        raise ValueError("field and test set live on different grids")
    flat = tests.functions.reshape(len(tests), -1)
    return flat @ g.values.reshape(-1) * g.grid.cell


def weak_metric_from_pairings(a: np.ndarray, b: np.ndarray) -> float:
    w = 0.5 ** np.arange(1, len(a) + 1)
    return float(np.sum(w * np.abs(np.asarray(a) - np.asarray(b))))


def weak_metric(g1: PhaseSpaceField, g2: PhaseSpaceField, tests: TestSet, with_bound: bool = False):
    """sum_n 2^-n |<psi_n | g1 - g2>|, truncated at the test-set size.

    With ``with_bound`` also returns 2^-N ||g1 - g2||_2, which bounds the
    contribution of the omitted terms.
    """
    if g1.grid != g2.grid:
        raise ValueError("fields live on different grids")
    diff = g1 - g2
    val = weak_metric_from_pairings(pairings(diff, tests), np.zeros(len(tests)))
    if with_bound:
        return val, 0.5 ** len(tests) * diff.lp_norm(2)
    return val
