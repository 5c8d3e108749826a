"""Spectral laboratory for Hartree and Vlasov dynamics and their semiclassical link."""
from .lattice import Lattice, PhaseSpaceField, PhaseSpaceGrid, fourier_multiplier, lp_norm, weighted_norm
from .qstate import OrbitalEnsemble, Params, density, schatten_norm, weighted_schatten_norm

__version__ = "0.1.0"
