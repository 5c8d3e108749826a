import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semiscatter.errors import AliasingError, CapabilityError, DomainError
from semiscatter.experiments.checks import balanced_box, transform_suite
from semiscatter.experiments.fitting import fit_power_law
from semiscatter.lattice import Lattice, PhaseSpaceField, PhaseSpaceGrid
from semiscatter.phasespace import (CoherentState, bracket_norm, gaussian_smooth, hminus1_norm, husimi,
                                    husimi_from_wigner, make_test_set, operator_trace, pairings, remainder, toeplitz,
                                    toeplitz_kernel, weak_metric, weyl, weyl_apply, wigner, wigner_grid)
from semiscatter.qstate import (OrbitalEnsemble, Params, coherent_ensemble, coherent_state, eigenvalues,
                                gaussian_state, schatten_norm, weighted_schatten_norm)

HBARS = (1.0, 0.5, 0.25)


def lat_for(hbar, n=256):
    return Lattice(1, n, balanced_box(n, hbar))


def random_ensemble(lat, hbar, rank, seed):
    rng = np.random.default_rng(seed)
    centers = [([rng.uniform(-2, 2)], [rng.uniform(-2, 2)]) for _ in range(rank)]
    return coherent_ensemble(lat, Params(hbar), centers, rng.uniform(0.2, 1.5, rank))


def test_coherent_state_normalized():
    lat = lat_for(0.5)
    c = CoherentState((0.4,), (-0.3,), 0.5)
    u = c.field(lat)
    assert abs(np.sum(np.abs(u) ** 2) * lat.cell - 1) < 1e-10


def test_wigner_zero():
    lat = lat_for(1.0)
    w = wigner(OrbitalEnsemble.empty(lat, Params(1.0)))
    assert np.all(w.values == 0)


def test_wigner_coherent_origin():
    lat = lat_for(1.0)
    g = OrbitalEnsemble(lat, Params(1.0), coherent_state(lat, [0.0], [0.0], 1.0)[None], [1.0])
    w = wigner(g)
    q, p = w.grid.coords
    exact = 2 * np.exp(-(q**2 + p**2))
    assert np.max(np.abs(w.values - exact)) / exact.max() < 1e-6


@pytest.mark.parametrize("hbar", HBARS)
def test_wigner_isometry(hbar):
    lat = lat_for(hbar)
    g = random_ensemble(lat, hbar, 3, 11)
    w = wigner(g)
    assert abs(w.lp_norm(2) / schatten_norm(g, 2) - 1) < 1e-8


def test_wigner_real_for_self_adjoint():
    lat = lat_for(0.5)
    g = random_ensemble(lat, 0.5, 3, 4)
    from semiscatter.phasespace import wigner_kernel

    w = wigner_kernel(g.kernel(), lat, 0.5, real=False)
    assert np.max(np.abs(w.values.imag)) <= 1e-10 * np.max(np.abs(w.values.real))


def test_wigner_rejects_foreign_p_grid():
    lat = lat_for(1.0)
    g = random_ensemble(lat, 1.0, 1, 0)
    bad = PhaseSpaceGrid(lat, lat.n, 0.5 * wigner_grid(lat, 1.0).p_extent)
    with pytest.raises(AliasingError):
        wigner(g, bad)


def test_wigner_d3_is_a_capability_error():
    lat = Lattice(3, 8, 6.0)
    g = OrbitalEnsemble(lat, Params(1.0, d=3), coherent_state(lat, [0] * 3, [0] * 3, 1.0)[None], [1.0])
    with pytest.raises(CapabilityError):
        wigner(g)


def test_wigner_d2_coherent():
    lat = Lattice(2, 32, balanced_box(32, 1.0) * 1.2)
    g = OrbitalEnsemble(lat, Params(1.0, d=2), coherent_state(lat, [0.2, -0.1], [0.0, 0.3], 1.0)[None], [1.0])
    w = wigner(g)
    q1, q2, p1, p2 = w.grid.coords
    exact = 4 * np.exp(-((q1 - 0.2) ** 2 + (q2 + 0.1) ** 2 + p1**2 + (p2 - 0.3) ** 2))
    assert np.max(np.abs(w.values - exact)) < 1e-6


def test_weyl_zero_and_capability():
    lat = lat_for(1.0)
    grid = wigner_grid(lat, 1.0)
    assert np.all(weyl(grid.zeros(), 1.0) == 0)
    lat2 = Lattice(2, 8, 6.0)
    with pytest.raises(CapabilityError):
        weyl(wigner_grid(lat2, 1.0).zeros(), 1.0)


def test_weyl_of_coherent_wigner_is_projector():
    lat = lat_for(1.0)
    grid = wigner_grid(lat, 1.0)
    f = grid.sample(lambda q, p: 2 * np.exp(-(q**2 + p**2)))
    k = weyl(f, 1.0)
    ev = np.sort(np.linalg.eigvalsh(0.5 * (k + k.conj().T) * lat.cell))[::-1]
    assert abs(ev[0] - 1) < 1e-6
    assert abs(ev[1]) < 1e-6


@pytest.mark.parametrize("hbar", HBARS)
def test_wigner_weyl_roundtrip(hbar):
    lat = lat_for(hbar)
    grid = wigner_grid(lat, hbar)
    f = grid.sample(lambda q, p: np.exp(-((q - 0.3) ** 2) - (p + 0.5) ** 2 / 2) * (1 + 0.5 * q * p))
    from semiscatter.phasespace import wigner_kernel

    back = wigner_kernel(weyl(f, hbar), lat, hbar)
    assert np.max(np.abs(back.values - f.values)) / np.max(np.abs(f.values)) < 1e-8


@pytest.mark.parametrize("hbar", HBARS)
def test_adjointness(hbar):
    lat = lat_for(hbar)
    grid = wigner_grid(lat, hbar)
    g = random_ensemble(lat, hbar, 2, 3)
    f = grid.sample(lambda q, p: np.cos(q) * np.exp(-(q**2) / 4 - p**2))
    lhs = np.sum(wigner(g).values * f.values) * grid.cell
    rhs = 2 * np.pi * hbar * operator_trace(g, weyl(f, hbar)).real
    assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))


def test_weyl_apply_matches_kernel():
    lat = lat_for(0.5, 128)
    grid = wigner_grid(lat, 0.5)
    f = grid.sample(lambda q, p: np.exp(-q**2 - p**2))
    u = coherent_state(lat, [0.5], [0.2], 0.5)
    assert np.allclose(weyl_apply(f, u, 0.5), weyl(f, 0.5) @ u * lat.cell, atol=1e-14)


def test_husimi_zero_and_coherent():
    lat = lat_for(1.0)
    assert np.all(husimi(OrbitalEnsemble.empty(lat, Params(1.0))).values == 0)
    g = OrbitalEnsemble(lat, Params(1.0), coherent_state(lat, [0.0], [0.0], 1.0)[None], [1.0])
    hu = husimi(g)
    q, p = hu.grid.coords
    exact = np.exp(-(q**2 + p**2) / 2)
    assert np.max(np.abs(hu.values - exact)) < 1e-6


@pytest.mark.parametrize("hbar", HBARS)
def test_husimi_is_smoothed_wigner(hbar):
    lat = lat_for(hbar)
    g = random_ensemble(lat, hbar, 2, 8)
    a = husimi(g).values
    b = husimi_from_wigner(g).values
    assert np.max(np.abs(a - b)) < 1e-8
    assert a.min() >= -1e-12 * a.max()


@pytest.mark.parametrize("hbar", HBARS)
def test_husimi_toeplitz_duality(hbar):
    lat = lat_for(hbar)
    grid = wigner_grid(lat, hbar)
    g = random_ensemble(lat, hbar, 2, 9)
    f = grid.sample(lambda q, p: np.exp(-((q + 0.4) ** 2) / 2 - p**2 / 3))
    lhs = 2 * np.pi * hbar * operator_trace(g, toeplitz_kernel(f, hbar)).real
    rhs = np.sum(husimi(g).values * f.values) * grid.cell
    assert abs(lhs - rhs) <= 1e-6 * abs(rhs)


def test_toeplitz_zero():
    lat = lat_for(1.0)
    g = toeplitz(wigner_grid(lat, 1.0).zeros(), 8, Params(1.0))
    assert g.rank == 0
    g = toeplitz(wigner_grid(lat, 1.0).zeros(), 8, Params(1.0), method="nodes")
    assert g.rank == 0


def test_toeplitz_budget_errors():
    lat = Lattice(1, 16, 8.0)
    f = wigner_grid(lat, 1.0).sample(lambda q, p: np.exp(-q**2 - p**2))
    with pytest.raises(CapabilityError):
        toeplitz(f, 17, Params(1.0))
    with pytest.raises(CapabilityError):
        toeplitz(f, 16 * 16 + 1, Params(1.0), method="nodes")
    with pytest.raises(DomainError):
        toeplitz(f, 0, Params(1.0))


def test_toeplitz_constant_is_identity():
    hbar, c = 0.5, 0.7
    lat = lat_for(hbar)
    grid = wigner_grid(lat, hbar)
    g = toeplitz(grid.sample(lambda q, p: c + 0 * q), lat.n, Params(hbar))
    for q0, p0 in ((0.0, 0.0), (1.5, -1.0), (-3.0, 2.0)):
        u = coherent_state(lat, [q0], [p0], 0.3)
        ov = g.orbitals.conj() @ u * lat.cell
        val = np.sum(g.occupations * np.abs(ov) ** 2)
        assert abs(val / c - 1) < 0.02


@pytest.mark.parametrize("method", ["eigen", "nodes"])
def test_toeplitz_wigner_is_smoothed_f(method):
    hbar = 0.5
    lat = lat_for(hbar, 128)
    grid = wigner_grid(lat, hbar)
    f = grid.sample(lambda q, p: np.exp(-((q - 0.5) ** 2) / 2 - p**2 / 0.5))
    g = toeplitz(f, 64 if method == "eigen" else 2000, Params(hbar), method=method)
    assert np.all(g.occupations >= 0)
    err = (wigner(g) - gaussian_smooth(f, hbar)).lp_norm(2) / f.lp_norm(2)
    assert err < 5e-2


def test_toeplitz_mass():
    hbar = 0.25
    lat = lat_for(hbar, 256)
    grid = wigner_grid(lat, hbar)
    f = grid.sample(lambda q, p: 0.3 * np.exp(-(q**2) / 2 - p**2 / 0.5))
    g = toeplitz(f, 128, Params(hbar))
    assert abs(schatten_norm(g, 1) / f.integral() - 1) < 1e-10


@pytest.mark.parametrize("hbar", HBARS)
def test_transform_suite_passes(hbar):
    assert all(r.passed for r in transform_suite(1, 256, hbar))


def test_moment_bound_stable_across_hbar():
    ratios = []
    for hbar in HBARS:
        lat = lat_for(hbar)
        g = gaussian_state(lat, Params(hbar), 0.3, 0.2, 1.0, 0.5)
        hu = husimi(g)
        lhs = np.sum((1 + hu.grid.p2()) * np.abs(hu.values)) * hu.grid.cell
        ratios.append(lhs / weighted_schatten_norm(g, 1, 1.0, "momentum"))
    ratios = np.array(ratios)
    assert (ratios.max() - ratios.min()) / ratios.max() < 0.25


# -- remainder ------------------------------------------------------------------

def _remainder_setup(hbar, L=8 * np.pi):
    n = int(2 ** math.ceil(math.log2(8 * L / (math.pi * hbar))))
    lat = Lattice(1, n, L)
    return lat, gaussian_state(lat, Params(hbar), 0.0, 0.0, 1.0, 1.0)


def test_remainder_affine_vanishes():
    lat, g = _remainder_setup(0.25)
    r = remainder(g, lambda x: 0.3 * x - 1.2)
    w = wigner(g)
    assert np.max(np.abs(r.values)) < 1e-10 * max(1.0, np.max(np.abs(w.values)))
    r0 = remainder(g, np.full(lat.shape, 2.5))
    assert np.max(np.abs(r0.values)) < 1e-12


def test_remainder_array_and_callable_agree():
    lat, g = _remainder_setup(0.4)
    a = remainder(g, np.cos(lat.x))
    b = remainder(g, np.cos, grad=lambda x: [-np.sin(x)])
    assert np.max(np.abs(a.values - b.values)) < 1e-10


def test_remainder_hbar_slope():
    pts = []
    for hbar in (0.4, 0.2, 0.1):
        lat, g = _remainder_setup(hbar)
        r = remainder(g, np.cos(lat.x))
        pts.append((hbar, bracket_norm(r, -2, -2)))
    pts = np.array(pts)
    slope = np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)[0]
    assert slope >= 0.8


def _remainder_ratio(seed, refine=1):
    rng = np.random.default_rng(seed)
    hbar = [0.5, 0.25][int(rng.integers(2))]
    L = 8 * np.pi
    n = refine * int(2 ** math.ceil(math.log2(8 * L / (math.pi * hbar))))
    lat = Lattice(1, n, L)
    m, amp, ph = int(rng.integers(1, 3)), rng.uniform(0.2, 1.5), rng.uniform(0, 2 * np.pi)
    V = amp * np.cos(m * lat.x / 4 + ph)
    g = gaussian_state(lat, Params(hbar), rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(0.5, 1.5),
                       rng.uniform(0.5, 1.5))
    R = remainder(g, V)
    return bracket_norm(R, 0, -1) / (lat.gradient_sup(V) * schatten_norm(g, 2))


REMAINDER_C = 2.0


def test_remainder_bound_random_cases():
    ratios = np.array([_remainder_ratio(s) for s in range(5)])
    assert np.all(ratios <= REMAINDER_C)
    refined = np.array([_remainder_ratio(s, refine=2) for s in range(5)])
    assert np.all(np.abs(refined / ratios - 1) < 0.10)


# -- metrics and test sets ---------------------------------------------------------

def test_bracket_and_hminus1():
    grid = PhaseSpaceGrid(Lattice(1, 64, 20.0), 64, 6.0)
    assert hminus1_norm(grid.zeros()) == 0
    k, z = 3, 5
    kq = 2 * np.pi * k / 20.0
    kp = 2 * np.pi * z / (2 * 6.0)
    f = grid.sample(lambda q, p: np.cos(kq * q + kp * p))
    expect = f.lp_norm(2) / math.sqrt(1 + kq**2 + kp**2)
    assert abs(hminus1_norm(f) - expect) < 1e-12 * expect
    assert abs(bracket_norm(f, 0, 0) - f.lp_norm(2)) < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_hminus1_contracts(seed):
    grid = PhaseSpaceGrid(Lattice(1, 32, 10.0), 32, 4.0)
    f = PhaseSpaceField(grid, np.random.default_rng(seed).normal(size=grid.shape))
    assert hminus1_norm(f) <= f.lp_norm(2) * (1 + 1e-12)


def test_make_test_set():
    grid = wigner_grid(lat_for(1.0), 1.0)
    t1 = make_test_set(1, grid)
    assert t1.indices == [(0, 0)]
    assert abs(np.sum(t1.functions[0] ** 2) * grid.cell - 1) < 1e-10
    t = make_test_set(16, grid)
    gram = t.functions.reshape(16, -1) @ t.functions.reshape(16, -1).T * grid.cell
    off = gram - np.diag(np.diag(gram))
    assert np.max(np.abs(off)) < 1e-8
    t2 = make_test_set(16, grid)
    assert np.array_equal(t.functions, t2.functions) and t.indices == t2.indices
    with pytest.raises(CapabilityError):
        make_test_set(400, PhaseSpaceGrid(Lattice(1, 16, 6.0), 16, 3.0))
    with pytest.raises(DomainError):
        make_test_set(0, grid)


def test_weak_metric_examples():
    grid = wigner_grid(lat_for(1.0), 1.0)
    tests = make_test_set(16, grid)
    g = grid.sample(lambda q, p: np.exp(-q**2 - p**2))
    assert weak_metric(g, g, tests) == 0
    psi1 = PhaseSpaceField(grid, tests.functions[0].copy())
    assert abs(weak_metric(g + psi1, g, tests) - 0.5) < 1e-10
    val, bound = weak_metric(g + psi1, g, tests, with_bound=True)
    assert bound == pytest.approx(0.5**16, rel=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_weak_metric_cauchy_schwarz(seed):
    grid = wigner_grid(Lattice(1, 64, balanced_box(64, 1.0)), 1.0)
    tests = make_test_set(8, grid)
    rng = np.random.default_rng(seed)
    a = PhaseSpaceField(grid, rng.normal(size=grid.shape))
    b = PhaseSpaceField(grid, rng.normal(size=grid.shape))
    assert weak_metric(a, b, tests) < (a - b).lp_norm(2)


def test_pairings_grid_mismatch():
    g1 = wigner_grid(lat_for(1.0), 1.0)
    g2 = wigner_grid(lat_for(0.5), 0.5)
    with pytest.raises(ValueError):
        pairings(g2.zeros(), make_test_set(4, g1))
