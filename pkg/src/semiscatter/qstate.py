"""Finite-rank density operators and their semiclassical norms.

An ensemble gamma = sum_j lam_j |psi_j><psi_j| is stored as a stack of orbitals
with shape ``(rank,) + lattice.shape`` and a vector of occupations.  Densities
and Schatten norms carry the semiclassical factor (2 pi hbar)^d.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import gamma as gamma_fn

from .errors import DomainError, NumericalError, RegimeWarning
from .lattice import Lattice, japanese

EIG_CLIP = 1e-12


@dataclass(frozen=True)
class Params:
    """Physical parameters: Planck constant, dimension and interaction law.

    The exponents r_eps = d / (2 - a - eps) and sigma_eps = (1 + a + 2 eps) / 2
    reduce to the three-dimensional choice when d = 3.
    """

    hbar: float
    d: int = 1
    a: float = 1.2
    sign: int = 1
    epsilon: float = 0.05

    def __post_init__(self):
        if not (0 < self.hbar <= 1):
            raise DomainError(f"hbar must lie in (0, 1], got {self.hbar}")
        if self.d not in (1, 2, 3):
            raise DomainError("dimension must be 1, 2 or 3")
        if self.sign not in (1, -1):
            raise DomainError("interaction sign must be +1 or -1")
        if not self.a > 0:
            raise DomainError("interaction exponent must be positive")
        if not self.epsilon > 0:
            raise DomainError("exponent margin must be positive")
        gap = 2.0 - self.a - self.epsilon
        if gap <= 0 or self.d / gap < 1:
            raise DomainError(
                f"exponents undefined for d={self.d}, a={self.a}, eps={self.epsilon}"
            )
        if not (1.0 < self.a < 5.0 / 3.0):
            warnings.warn(f"a = {self.a} lies outside (1, 5/3)", RegimeWarning, stacklevel=3)

    @property
    def r_eps(self) -> float:
        return self.d / (2.0 - self.a - self.epsilon)

    @property
    def sigma_eps(self) -> float:
        return 0.5 * (1.0 + self.a + 2.0 * self.epsilon)

    @property
    def phase_cell(self) -> float:
        """(2 pi hbar)^d."""
        return (2.0 * np.pi * self.hbar) ** self.d

    def with_hbar(self, hbar: float) -> "Params":
        return replace(self, hbar=hbar)


@dataclass
class OrbitalEnsemble:
    lattice: Lattice
    params: Params
    orbitals: np.ndarray
    occupations: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.orbitals = np.asarray(self.orbitals, dtype=complex)
        self.occupations = np.asarray(self.occupations, dtype=float).reshape(-1)
        shape = self.lattice.shape
        if self.orbitals.size == 0:
            self.orbitals = self.orbitals.reshape((0,) + shape)
        if self.orbitals.shape[1:] != shape:
            raise ValueError(f"orbitals have shape {self.orbitals.shape[1:]}, lattice is {shape}")
        if self.orbitals.shape[0] != self.occupations.size:
            raise ValueError("one occupation per orbital is required")
        if np.any(self.occupations < 0):
            raise DomainError("occupations must be nonnegative")
        if self.params.d != self.lattice.d:
            raise ValueError("params and lattice disagree on the dimension")

    @property
    def rank(self) -> int:
        return self.occupations.size

    @property
    def hbar(self) -> float:
        return self.params.hbar

    @classmethod
    def empty(cls, lattice: Lattice, params: Params) -> "OrbitalEnsemble":
        return cls(lattice, params, np.zeros((0,) + lattice.shape, complex), np.zeros(0))

    def with_orbitals(self, orbitals: np.ndarray) -> "OrbitalEnsemble":
        return OrbitalEnsemble(self.lattice, self.params, orbitals, self.occupations.copy(), dict(self.meta))

    def scaled(self, c: float) -> "OrbitalEnsemble":
        return OrbitalEnsemble(self.lattice, self.params, self.orbitals.copy(), c * self.occupations, dict(self.meta))

    def trace(self) -> float:
        """Plain operator trace sum_j lam_j ||psi_j||^2."""
        if self.rank == 0:
            return 0.0
        norms = np.sum(np.abs(self.orbitals) ** 2, axis=tuple(range(1, self.orbitals.ndim)))
        return float(np.dot(self.occupations, norms) * self.lattice.cell)

    def factor(self) -> np.ndarray:
        """Matrix B with gamma = B^H B in the discrete L^2 inner product."""
        b = self.orbitals.reshape(self.rank, self.lattice.cells) * np.sqrt(self.occupations)[:, None]
        return b * math.sqrt(self.lattice.cell)

    def kernel(self) -> np.ndarray:
        """Dense kernel gamma(x, x') on the grid (d = 1 sized problems only)."""
        psi = self.orbitals.reshape(self.rank, self.lattice.cells)
        return (psi.T * self.occupations) @ psi.conj()


def minimum_image(x: np.ndarray, center: float, box_length: float) -> np.ndarray:
    return (x - center + 0.5 * box_length) % box_length - 0.5 * box_length


def coherent_state(lattice: Lattice, q0: Sequence[float], p0: Sequence[float], hbar: float) -> np.ndarray:
    """Gaussian wave packet of width sqrt(hbar) centred at (q0, p0).

    Displacements use the periodic minimum image, so packets near the box edge
    wrap around instead of being cut.
    """
    q0 = np.broadcast_to(np.asarray(q0, float), (lattice.d,))
    p0 = np.broadcast_to(np.asarray(p0, float), (lattice.d,))
    out = np.full(lattice.shape, (np.pi * hbar) ** (-lattice.d / 4.0), dtype=complex)
    for c, q, p in zip(lattice.coords, q0, p0):
        s = minimum_image(c, q, lattice.box_length)
        out = out * np.exp(-(s**2) / (2.0 * hbar) + 1j * s * p / hbar)
    return out


def hermite_functions(x: np.ndarray, nmax: int, width: float = 1.0) -> np.ndarray:
    """Orthonormal Hermite functions h_0..h_{nmax-1} of length scale ``width``.

    Uses the three-term recurrence, which stays stable to high degree.
    """
    u = np.asarray(x, float) / width
    out = np.zeros((nmax,) + u.shape)
    if nmax == 0:
        return out
    out[0] = np.pi**-0.25 * np.exp(-0.5 * u**2)
    if nmax > 1:
        out[1] = math.sqrt(2.0) * u * out[0]
    for k in range(1, nmax - 1):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * u * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out / math.sqrt(width)


def gaussian_state(lattice: Lattice, params: Params, center_q, center_p, var_q: float,
                   var_p: float, mass: float = 1.0, rank: int | None = None,
                   tol: float = 1e-13) -> OrbitalEnsemble:
    """Mixed Gaussian state whose Wigner function is a product Gaussian.

    The Wigner function has variances ``var_q`` and ``var_p`` on each axis and
    integrates to ``mass``.  It is a squeezed thermal state, diagonal in
    Hermite functions of length sqrt(hbar * sqrt(var_q / var_p)) that are
    translated to ``center_q`` and boosted to ``center_p``.  Requires
    var_q * var_p >= hbar^2 / 4.
    """
    hbar, d = params.hbar, lattice.d
    nu = math.sqrt(var_q * var_p)
    if nu < 0.5 * hbar * (1 - 1e-12):
        raise DomainError("variances violate the uncertainty bound")
    kappa = max(0.0, (2 * nu / hbar - 1) / (2 * nu / hbar + 1))
    if rank is None:
        rank = 1 if kappa == 0 else int(math.ceil(math.log(tol) / math.log(kappa))) + 1
    ell = math.sqrt(hbar * math.sqrt(var_q / var_p))
    cq = np.broadcast_to(np.asarray(center_q, float), (d,))
    cp = np.broadcast_to(np.asarray(center_p, float), (d,))
    axes = []
    for ax in range(d):
        s = minimum_image(lattice.x, cq[ax], lattice.box_length)
        h = hermite_functions(s, rank, ell) * np.exp(1j * s * cp[ax] / hbar)
        axes.append(h)
    weights1 = (1 - kappa) * kappa ** np.arange(rank)
    if d == 1:
        orbitals, occ = axes[0], weights1
    else:
        idx = [i for i in np.ndindex(*(rank,) * d) if sum(i) < rank]
        orbitals = []
        occ = []
        for i in idx:
            o = axes[0][i[0]]
            for ax in range(1, d):
                o = np.multiply.outer(o, axes[ax][i[ax]])
            orbitals.append(o)
            occ.append(np.prod(weights1[list(i)]))
        orbitals, occ = np.array(orbitals), np.array(occ)
    occ = occ * mass / params.phase_cell
    return OrbitalEnsemble(lattice, params, orbitals, occ,
                           meta={"kind": "gaussian", "kappa": kappa, "ell": ell})


def coherent_ensemble(lattice: Lattice, params: Params, centers: Sequence, weights: Sequence[float]) -> OrbitalEnsemble:
    """sum_k w_k |phi_(q_k,p_k)><phi_(q_k,p_k)| for centers [(q, p), ...]."""
    orbs = [coherent_state(lattice, q, p, params.hbar) for q, p in centers]
    if not orbs:
        return OrbitalEnsemble.empty(lattice, params)
    return OrbitalEnsemble(lattice, params, np.array(orbs), np.asarray(weights, float))


# -- densities and norms ---------------------------------------------------

def density(gamma: OrbitalEnsemble) -> np.ndarray:
    """(2 pi hbar)^d sum_j lam_j |psi_j(x)|^2."""
    if gamma.rank == 0:
        return np.zeros(gamma.lattice.shape)
    rho = np.tensordot(gamma.occupations, np.abs(gamma.orbitals) ** 2, axes=(0, 0))
    return gamma.params.phase_cell * rho


def _factor_eigenvalues(b: np.ndarray) -> np.ndarray:
    """Eigenvalues of B^H B, via the small Gram matrix B B^H."""
    if b.shape[0] == 0:
        return np.zeros(0)
    gram = b @ b.conj().T
    try:
        mu = linalg.eigvalsh(gram)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"Gram eigen-solve failed: {exc}") from exc
    if not np.all(np.isfinite(mu)):
        raise NumericalError("Gram eigenvalues are not finite")
    scale = max(1.0, float(np.abs(mu).max()))
    mu = np.where(mu < -EIG_CLIP * scale, mu, np.maximum(mu, 0.0))
    return np.clip(mu, 0.0, None)


def eigenvalues(gamma: OrbitalEnsemble) -> np.ndarray:
    """Nonzero spectrum of gamma, descending."""
    return np.sort(_factor_eigenvalues(gamma.factor()))[::-1]


def _rescaled(mu: np.ndarray, r: float, d: int, hbar: float) -> float:
    if not r >= 1:
        raise DomainError(f"Schatten exponent must satisfy r >= 1, got {r}")
    if mu.size == 0:
        return 0.0
    if np.isinf(r):
        return float(mu.max())
    return float((2 * np.pi * hbar) ** (d / r) * np.sum(mu**r) ** (1.0 / r))


def schatten_norm(gamma: OrbitalEnsemble, r: float) -> float:
    """Semiclassical Schatten norm (2 pi hbar)^(d/r) ||gamma||_{S^r}."""
    if not r >= 1:
        raise DomainError(f"Schatten exponent must satisfy r >= 1, got {r}")
    return _rescaled(_factor_eigenvalues(gamma.factor()), r, gamma.lattice.d, gamma.hbar)


def momentum_weight(psi: np.ndarray, sigma: float, hbar: float, lattice: Lattice) -> np.ndarray:
    """<hbar grad>^sigma applied spectrally."""
    return lattice.multiplier(psi, (1.0 + hbar**2 * lattice.xi2) ** (0.5 * sigma))


def position_weight(psi: np.ndarray, sigma: float, lattice: Lattice) -> np.ndarray:
    return (1.0 + lattice.r2) ** (0.5 * sigma) * psi


def apply_vector_field(psi: np.ndarray, t: float, sigma: float, hbar: float,
                       lattice: Lattice, method: str = "phase") -> np.ndarray:
    """<J_t>^sigma psi for the vector field J_t = x + i t hbar grad.

    ``method="phase"`` conjugates <t hbar grad>^sigma by the chirp
    exp(i|x|^2 / (2 t hbar)); ``method="flow"`` conjugates <x>^sigma by the free
    Schrodinger flow.  The two agree while the chirp is resolved by the grid;
    on long runs only the flow form stays alias-free.
    """
    if not hbar > 0:
        raise DomainError("hbar must be positive")
    if sigma == 0:
        return np.array(psi, copy=True)
    if t == 0:
        return position_weight(psi, sigma, lattice)
    if method == "phase":
        chirp = np.exp(1j * lattice.r2 / (2.0 * t * hbar))
        inner = lattice.multiplier(psi * chirp.conj(), (1.0 + (t * hbar) ** 2 * lattice.xi2) ** (0.5 * sigma))
        return chirp * inner
    if method == "flow":
        from .propagate import free_schrodinger

        u = free_schrodinger(psi, -t, hbar, lattice)
        return free_schrodinger(position_weight(u, sigma, lattice), t, hbar, lattice)
    raise ValueError(f"unknown vector-field method {method!r}")


def abs_vector_field(psi: np.ndarray, t: float, hbar: float, lattice: Lattice, method: str = "phase") -> np.ndarray:
    """|J_t| psi (the modulus rather than the bracket)."""
    if t == 0:
        return np.sqrt(lattice.r2) * psi
    if method == "phase":
        chirp = np.exp(1j * lattice.r2 / (2.0 * t * hbar))
        return chirp * lattice.multiplier(psi * chirp.conj(), abs(t) * hbar * np.sqrt(lattice.xi2))
    from .propagate import free_schrodinger

    u = free_schrodinger(psi, -t, hbar, lattice)
    return free_schrodinger(np.sqrt(lattice.r2) * u, t, hbar, lattice)


def weight_orbitals(gamma: OrbitalEnsemble, sigma: float, weight: str, t: float = 0.0,
                    method: str = "phase") -> np.ndarray:
    lat, hbar = gamma.lattice, gamma.hbar
    psi = gamma.orbitals
    if sigma == 0:
        return psi
    if weight == "position":
        return position_weight(psi, sigma, lat)
    if weight == "momentum":
        return momentum_weight(psi, sigma, hbar, lat)
    if weight == "vector-field":
        return apply_vector_field(psi, t, sigma, hbar, lat, method=method)
    raise ValueError(f"unknown weight {weight!r}")


def weighted_schatten_norm(gamma: OrbitalEnsemble, r: float, sigma: float, weight: str = "momentum",
                           t: float = 0.0, method: str = "phase") -> float:
    """||W gamma W||_{L^r_hbar} for W = <x>^sigma, <hbar grad>^sigma or <J_t>^sigma.

    Every weight is self-adjoint, so W gamma W = sum lam_j |W psi_j><W psi_j| is
    nonnegative and its eigenvalues come from the weighted Gram matrix.
    """
    if sigma < 0:
        raise DomainError("weight exponent must be nonnegative")
    if not r >= 1:
        raise DomainError(f"Schatten exponent must satisfy r >= 1, got {r}")
    w = weight_orbitals(gamma, sigma, weight, t, method)
    return schatten_norm(gamma.with_orbitals(w), r)


def dispersion_constant(sigma: float, r: float, d: int) -> float:
    """C_{sigma,r} = ||<z>^(-2 sigma)||_{L^{r'}(R^d)}.

    Finite when 2 sigma r' > d; equals 1 for r = 1.
    """
    if r == 1:
        return 1.0
    rp = 1.0 if np.isinf(r) else r / (r - 1.0)
    s = sigma * rp
    if not 2 * s > d:
        raise DomainError(f"need sigma > d/(2 r'), got sigma={sigma}, r={r}")
    integral = np.pi ** (d / 2) * gamma_fn(s - d / 2) / gamma_fn(s)
    return float(integral ** (1.0 / rp))


def trace_norm_difference(a: OrbitalEnsemble, b: OrbitalEnsemble) -> float:
    """||a - b||_{L^1_hbar} for two nonnegative ensembles on one lattice."""
    if a.lattice != b.lattice:
        raise ValueError("ensembles live on different lattices")
    m = np.concatenate([a.factor(), b.factor()], axis=0)
    if m.shape[0] == 0:
        return 0.0
    signs = np.concatenate([np.ones(a.rank), -np.ones(b.rank)])
    # a - b = M^H S M; reduce to the row space of M.
    q, rr = np.linalg.qr(m.conj().T, mode="reduced")
    core = rr @ (signs[:, None] * rr.conj().T)
    mu = linalg.eigvalsh(0.5 * (core + core.conj().T))
    return float(a.params.phase_cell * np.abs(mu).sum())
