import math

import numpy as np
import pytest

from semiscatter.errors import DomainError, FitError, RegimeWarning
from semiscatter.hartree import (Interaction, backward_state, decay_report, evolve, interpolation_check,
                                 interpolation_exponents, lwp_timestep, mean_field, potential_z_norm, riesz_constant,
                                 scattering_report, weighted_norm_series, x_in_norm)
from semiscatter.lattice import Lattice
from semiscatter.propagate import TimeGrid, free_ensemble
from semiscatter.qstate import OrbitalEnsemble, Params, gaussian_state, schatten_norm, trace_norm_difference

LAT = Lattice(1, 256, 40.0)


def test_riesz_constant_known_values():
    # FT |x|^-1 in 3d is 4 pi / |xi|^2; FT |x|^-1/2 in 1d is sqrt(2 pi) |xi|^-1/2
    assert riesz_constant(3, 1.0) == pytest.approx(4 * np.pi, rel=1e-14)
    assert riesz_constant(1, 0.5) == pytest.approx(math.sqrt(2 * np.pi), rel=1e-14)


def test_interaction_validation():
    with pytest.raises(DomainError):
        Interaction(sign=0)
    with pytest.raises(DomainError):
        Interaction(mode="bogus")
    with pytest.raises(DomainError):
        Interaction(mode="smooth")
    with pytest.warns(RegimeWarning):
        Interaction(a=2.0)
    with pytest.raises(DomainError):
        Interaction(mode="riesz", a=1.2).multiplier(LAT)


def test_interaction_multiplier_properties():
    w = Interaction(sign=-1, a=1.2, length=1.0)
    m = w.multiplier(LAT)
    assert m[LAT.xi == 0] == 0
    assert np.array_equal(Interaction(sign=1, a=1.2, length=1.0).multiplier(LAT), -m)
    assert np.all(Interaction.zero().multiplier(LAT) == 0)
    k = w.kernel(LAT)
    assert np.allclose(k, k[::-1][np.r_[-1, :LAT.n - 1]], atol=1e-12)  # even about x = 0


def test_mean_field_gaussian_convolution():
    x = LAT.x
    w = Interaction(mode="smooth", w=np.exp(-x**2 / 2))
    rho = np.exp(-x**2 / 2)
    phi, grads = mean_field(rho, w, LAT)
    exact = math.sqrt(np.pi) * np.exp(-x**2 / 4)
    assert np.max(np.abs(phi - exact)) < 1e-10
    assert np.max(np.abs(grads[0] + 0.5 * x * exact)) < 1e-10


def test_mean_field_linear_and_signed():
    w = Interaction(sign=1)
    r1 = np.exp(-LAT.x**2)
    r2 = np.exp(-(LAT.x - 1) ** 2)
    a = mean_field(r1 + 2 * r2, w, LAT)[0]
    b = mean_field(r1, w, LAT)[0] + 2 * mean_field(r2, w, LAT)[0]
    assert np.max(np.abs(a - b)) < 1e-12
    neg = mean_field(r1, Interaction(sign=-1), LAT)[0]
    assert np.max(np.abs(neg + mean_field(r1, w, LAT)[0])) < 1e-14


def test_interpolation_exponents_d3():
    p = Params(0.5, d=3, a=1.2, epsilon=0.05)
    th1, th2 = interpolation_exponents(p)
    assert th1 == pytest.approx(1.2 / (1 + 1.2 + 0.05))
    assert th2 == pytest.approx(2.2 / (1 + 1.2 + 0.05))


def test_interpolation_check():
    p = Params(0.5, a=1.2, epsilon=0.05)
    w = Interaction(a=1.2)
    zeta = np.exp(-LAT.x**2)
    rep = interpolation_check(zeta, w, p, LAT)
    assert all(np.isfinite(rep.ratios)) and rep.rhs_potential > 0
    rep2 = interpolation_check(3 * zeta, w, p, LAT)
    assert rep2.ratios == pytest.approx(rep.ratios, rel=1e-12)
    assert interpolation_check(np.zeros(LAT.shape), w, p, LAT).ratios == (0.0, 0.0)
    with pytest.raises(DomainError):
        interpolation_check(-zeta, w, p, LAT)


def _state(hbar=0.5, mass=1.0, sign=1):
    return gaussian_state(LAT, Params(hbar, sign=sign), 0.0, 0.3, 0.5, 0.5, mass=mass)


def test_evolve_zero_interaction_is_free():
    g = _state()
    traj = evolve(g, Interaction.zero(), TimeGrid(0.0, 1.0, 0.1, stride=5))
    end = traj.snapshots[-1].ensemble
    assert trace_norm_difference(end, free_ensemble(g, 1.0)) < 1e-10
    assert np.allclose(traj.times, [0.0, 0.5, 1.0])


def test_evolve_conserves_trace_and_hs_norm():
    g = _state(mass=2.0)
    traj = evolve(g, Interaction(sign=1), TimeGrid(0.0, 2.0, 0.05, stride=10))
    for s in traj.snapshots:
        assert abs(schatten_norm(s.ensemble, 2) / schatten_norm(g, 2) - 1) < 1e-10
    assert max(c[2] for c in traj.conservation) < 1e-10
    assert not traj.halted


def test_evolve_empty_and_lwp():
    e = OrbitalEnsemble.empty(LAT, Params(0.5))
    assert len(evolve(e, Interaction(), TimeGrid(0.0, 1.0, 0.1)).snapshots) == 1
    g = _state()
    dt = lwp_timestep(g, 0.1)
    assert dt == pytest.approx(0.1 * 0.5 / x_in_norm(g))
    with pytest.raises(DomainError):
        evolve(g, Interaction(), TimeGrid(0.0, 1.0, 0.5), check_lwp=True, safety=0.1)
    with pytest.raises(DomainError):
        lwp_timestep(e)


def test_blowup_ceiling_halts():
    g = _state(mass=20.0, sign=-1)
    ceiling = 4 * weighted_norm_series(evolve(g, Interaction(), TimeGrid(0.0, 0.0 + 0.005, 0.005)))[0]
    traj = evolve(g, Interaction(sign=-1), TimeGrid(0.0, 2.0, 0.005), blowup_ceiling=ceiling)
    assert traj.halted
    assert "exceeds ceiling" in traj.halt_reason
    assert traj.times[-1] < 2.0


def test_backward_state_undoes_free_flow():
    g = _state()
    traj = evolve(g, Interaction.zero(), TimeGrid(0.0, 3.0, 0.1, stride=10))
    for s in traj.snapshots:
        assert trace_norm_difference(backward_state(s), g) < 1e-10


def test_decay_and_scattering_reports():
    lat = Lattice(1, 1024, 256.0)
    g = gaussian_state(lat, Params(0.5), 0.0, 0.0, 0.25, 1.0, mass=0.01)
    traj = evolve(g, Interaction(sign=1, a=1.2, length=0.5), TimeGrid(0.0, 16.0, 0.05, stride=20))
    fit = decay_report(traj, np.inf, (2.0, 16.0))
    assert fit.target_rho == -1.0 and fit.target_grad == pytest.approx(-2.2)
    assert -1.2 < fit.slope_rho < -0.8
    assert [tuple(p) for p in scattering_report(traj).pairs][:3] == [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]
    rep = scattering_report(traj, [(2.0, 4.0), (4.0, 8.0), (8.0, 16.0)])
    assert rep.scatters and np.all(np.diff(rep.D) < 0)
    assert potential_z_norm(traj) > 0
    with pytest.raises(FitError):
        decay_report(traj, np.inf, (15.0, 16.0))
