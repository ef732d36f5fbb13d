"""Commensurate Aubry-Andre-Harper chain with cyclically modulated parameters.

The lattice has L cells of q sites on a ring (N = q*L sites, numbered
j = 1..N).  On-site energies follow V_j(t) = V0*cos(2*pi*beta*j + phi(t))
with beta = p/q and phi(t) = omega*t + phi0.  Nearest-neighbor tunneling is
either a constant -J or the bond-modulated -J*sin(2*pi*beta*j + phi(t)).
Sublattices are labeled by s = ((j-1) mod q) + 1, so for q = 3 the sites
(3l-2, 3l-1, 3l) of cell l carry sublattice labels (1, 2, 3) = (A, B, C).

Bloch reduction: with psi_j = e^{ikj} u_{s(j)} / sqrt(L) and u strictly
q-periodic, each quasi-momentum k of the ring gives a q x q Hermitian block.
`bloch_hamiltonian` returns the cell-gauge matrix (plain intra-cell bonds,
wrap bond carrying e^{ikq}); the diagonal map w_s = e^{iks} u_s converts its
eigenvectors to the site-phase periodic parts used by the Wannier and Berry
machinery (see `spectrum.solve_bands`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

HERMITICITY_ATOL = 1e-12


class TunnelingMode(Enum):
    UNIFORM = "uniform"
    SINE_MODULATED = "sine"


class Sign(Enum):
    """Overall sign of the Hamiltonian; MINUS drives the echo reversal."""

    PLUS = 1
    MINUS = -1


@dataclass(frozen=True)
class ModelParams:
    """Static parameters of the modulated chain.

    J : tunneling scale (energy units)
    V0 : on-site modulation amplitude
    p, q : coprime integers defining beta = p/q (q >= 2)
    phi0 : initial modulation phase (radians)
    omega : ramping speed (radians per unit time); period T = 2*pi/omega
    L : number of cells (>= 3); total sites N = q*L
    """

    J: float = 1.0
    V0: float = 30.0
    p: int = 1
    q: int = 3
    phi0: float = 0.0
    omega: float = 0.01
    L: int = 15
    tunneling_mode: TunnelingMode = TunnelingMode.UNIFORM
    sign: Sign = Sign.PLUS

    def __post_init__(self):
        if self.q < 2:
            raise ValueError(f"q must be >= 2, got {self.q}")
        if self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        if math.gcd(self.p, self.q) != 1:
            raise ValueError(f"p and q must be coprime, got p={self.p}, q={self.q}")
        if self.L < 3:
            raise ValueError(f"L must be >= 3, got {self.L}")
        if self.omega <= 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @property
    def beta(self) -> float:
        return self.p / self.q

    @property
    def n_sites(self) -> int:
        return self.q * self.L

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega

    def phase(self, t) -> float:
        """Modulation phase phi(t) = omega*t + phi0."""
        return self.omega * np.asarray(t) + self.phi0


def site_index(cell: int, sublattice: int, q: int) -> int:
    """1-based site index j = q*(cell-1) + sublattice (cells and sublattices 1-based)."""
    return q * (cell - 1) + sublattice


def onsite_energy(params: ModelParams, j: int, t: float) -> float:
    """On-site energy V_j(t) = V0*cos(2*pi*beta*j + phi(t)), times the overall sign."""
    j = np.asarray(j)
    if np.any(j < 1) or np.any(j > params.n_sites):
        raise IndexError(f"site index must lie in 1..{params.n_sites}")
    angle = 2.0 * np.pi * params.beta * j + params.phase(t)
    return params.sign.value * params.V0 * np.cos(angle)


def tunneling(params: ModelParams, j: int, t: float) -> float:
    """Strength of bond j (connecting sites j and j+1, periodic wrap at j = N).

    UNIFORM mode gives -J; SINE_MODULATED gives -J*sin(2*pi*beta*j + phi(t)).
    Both are multiplied by the overall sign.
    """
    j = np.asarray(j)
    if np.any(j < 1) or np.any(j > params.n_sites):
        raise IndexError(f"bond index must lie in 1..{params.n_sites}")
    if params.tunneling_mode is TunnelingMode.UNIFORM:
        val = -params.J * np.ones_like(np.asarray(j, dtype=float))
    else:
        angle = 2.0 * np.pi * params.beta * j + params.phase(t)
        val = -params.J * np.sin(angle)
    return params.sign.value * val


def real_space_hamiltonian(params: ModelParams, t: float) -> np.ndarray:
    """Dense N x N Hamiltonian on the ring at time t.

    Diagonal holds `onsite_energy`; entries (j, j+1) hold `tunneling` on bond
    j, with the periodic bond (N, 1) closing the ring.
    """
    n = params.n_sites
    j = np.arange(1, n + 1)
    h = np.zeros((n, n), dtype=complex)
    h[j - 1, j - 1] = onsite_energy(params, j, t)
    hop = tunneling(params, j, t)
    rows = j - 1
    cols = j % n  # bond j couples sites j and j+1 with wrap N -> 1
    h[rows, cols] += hop
    h[cols, rows] += np.conj(hop)
    return h


def _k_wavenumbers(L: int) -> np.ndarray:
    """Integer wavenumbers w with k = 2*pi*w/(q*L), reduced to (-L/2, L/2]."""
    w = np.arange(L)
    w = np.where(w > L // 2, w - L, w)
    return np.sort(w)


def k_grid(params: ModelParams) -> np.ndarray:
    """The L ring momenta 2*pi*n/(q*L) reduced to (-pi/q, pi/q], ascending."""
    return 2.0 * np.pi * _k_wavenumbers(params.L) / (params.q * params.L)


def _check_on_grid(params: ModelParams, k: float) -> None:
    grid = k_grid(params)
    if not np.any(np.abs(grid - k) < 1e-9):
        raise ValueError(
            f"k={k} is not on the {params.L}-point momentum grid; discrete "
            "Berry phases require grid momenta"
        )


def bloch_hamiltonian(params: ModelParams, k: float, t: float) -> np.ndarray:
    """q x q Bloch block at grid momentum k: intra-cell bonds are plain
    hopping entries and the cell-boundary bond carries exp(+ikq)."""
    _check_on_grid(params, k)
    return bloch_blocks(params, np.asarray([k]), t)[0]


def bloch_blocks(params: ModelParams, k: np.ndarray, t: float) -> np.ndarray:
    """Cell-gauge Bloch matrices for an array of momenta, shape (len(k), q, q)."""
    return bloch_blocks_batch(params, k, np.asarray([t]))[0]


def bloch_blocks_batch(params: ModelParams, k: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Cell-gauge Bloch matrices on a time batch, shape (len(ts), len(k), q, q)."""
    q = params.q
    k = np.asarray(k, dtype=float)
    ts = np.asarray(ts, dtype=float)
    s = np.arange(1, q + 1)
    angle = 2.0 * np.pi * params.beta * s + params.phase(ts)[:, None]  # (T, q)
    v = params.sign.value * params.V0 * np.cos(angle)
    if params.tunneling_mode is TunnelingMode.UNIFORM:
        hop = np.full_like(angle, -params.sign.value * params.J)
    else:
        hop = -params.sign.value * params.J * np.sin(angle)
    h = np.zeros((len(ts), len(k), q, q), dtype=complex)
    h[..., s - 1, s - 1] = v[:, None, :]
    for si in range(1, q):  # intra-cell bonds
        h[..., si - 1, si] += hop[:, None, si - 1]
        h[..., si, si - 1] += np.conj(hop[:, None, si - 1])
    wrap = hop[:, None, q - 1] * np.exp(1j * k * q)[None, :]  # boundary bond (q, 1)
    h[..., q - 1, 0] += wrap
    h[..., 0, q - 1] += np.conj(wrap)
    return h


# builders expose their time-batched form through a `batch` attribute
bloch_blocks.batch = bloch_blocks_batch


def cell_to_site_gauge(params: ModelParams, k: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Convert cell-gauge eigenvectors w to site-phase periodic parts u.

    u_s = e^{-iks} w_s, so that psi_j = e^{ikj} u_{s(j)} / sqrt(L) solves the
    ring eigenproblem.  `w` has shape (..., q) with momenta broadcast along
    the leading axes of `k`.
    """
    s = np.arange(1, params.q + 1)
    phases = np.exp(-1j * np.asarray(k)[..., None] * s)
    return w * phases


def bz_wrap_phases(params: ModelParams) -> np.ndarray:
    """Component phases relating u(k + 2*pi/q) = diag(e^{-i 2*pi s/q}) u(k)."""
    s = np.arange(1, params.q + 1)
    return np.exp(-2j * np.pi * s / params.q)


def check_hermitian(h: np.ndarray, atol: float = HERMITICITY_ATOL) -> None:
    """Raise if h deviates from Hermiticity beyond atol (absolute, entrywise)."""
    dev = np.max(np.abs(h - h.conj().T))
    if dev > atol:
        raise ValueError(f"matrix is not Hermitian: max deviation {dev:.3e}")
