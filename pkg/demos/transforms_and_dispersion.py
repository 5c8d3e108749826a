"""Phase-space transforms and free dispersion on one small grid.

Builds a mixed coherent-state density operator, checks its Wigner and Husimi
transforms, then follows the free flow and fits the density decay rate.

    python3 demos/transforms_and_dispersion.py
"""
import numpy as np

from semiscatter.experiments.checks import balanced_box, format_table, transform_suite
from semiscatter.experiments.fitting import fit_power_law
from semiscatter.lattice import Lattice
from semiscatter.phasespace import husimi, wigner
from semiscatter.propagate import free_dispersion_probe
from semiscatter.qstate import Params, coherent_ensemble, gaussian_state

hbar = 0.5
n = 256
lat = Lattice(1, n, balanced_box(n, hbar))
gam = coherent_ensemble(lat, Params(hbar), [([0.5], [0.7]), ([-1.0], [-0.4])], [0.6, 0.4])

W = wigner(gam)
H = husimi(gam)
print(f"trace {gam.trace():.6f}, Wigner mass / 2 pi hbar {W.integral() / (2 * np.pi * hbar):.6f}")
print(f"min Wigner {W.values.min():+.3e} (may be negative), min Husimi {H.values.min():+.3e}")
print(format_table(transform_suite(1, n, hbar)))

# free dispersion of a squeezed thermal state: ||rho(t)||_inf ~ <t>^-1
big = Lattice(1, 4096, 512.0)
g0 = gaussian_state(big, Params(hbar), 0.0, 0.0, 1.0, 0.25)
times = np.concatenate([[0.0], np.geomspace(5, 50, 10)])
ser = free_dispersion_probe(g0, np.inf, times)
slope, err = fit_power_law(np.column_stack([ser.t, ser.norm]), (5, 50))
print(f"free decay slope {slope:+.4f} +- {err:.1e}, norm/ceiling <= {ser.ratio()[1:].max():.3f}")
