"""Wannier states, maximal localization, and spread decomposition.

A Wannier state of band m at cell R (1-based) is the discrete transform

    W_j = (1/L) * sum_k e^{ik(j - q(R-1))} e^{i theta(k)} u_{m,s(j)}(k),

over the L-point momentum grid.  The gauge theta(k) minimizing the spread
Omega = <X^2> - <X>^2 is found by parallel transport: re-phase so every link
overlap <u(k_n)|u(k_{n+1})> is real positive, then spread the residual loop
phase uniformly, which makes the discrete Berry connection k-uniform.  The
spread splits into a gauge-invariant part Omega_I (inter-band matrix
elements of X) and a gauge-dependent part Omega_D (intra-band, off-home-cell
elements); Omega_D vanishes for the maximally localized state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, bz_wrap_phases
from .spectrum import BandSolution


@dataclass
class WannierState:
    amplitudes: np.ndarray  # (N,) complex, unit norm
    band: int  # 0-based band index
    cell: int  # 1-based home cell


@dataclass
class SpreadReport:
    omega: float
    omega_I: float
    omega_D: float
    center: float  # <X> in sites

    @property
    def d_w(self) -> float:
        return float(np.sqrt(max(self.omega, 0.0)))


def wannier_from_bloch(
    bands: BandSolution,
    m: int,
    cell: int,
    theta: np.ndarray | None = None,
    t_index: int = 0,
) -> WannierState:
    """Discrete Bloch-to-Wannier transform with gauge phases e^{i theta(k)}."""
    p = bands.params
    u = bands.states[m, :, t_index, :]  # (L, q)
    if theta is None:
        theta = np.zeros(p.L)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (p.L,):
        raise ValueError(f"theta must have one phase per momentum, shape ({p.L},)")
    j = np.arange(1, p.n_sites + 1)
    sub = (j - 1) % p.q
    phases = np.exp(1j * (bands.k_grid[:, None] * (j - p.q * (cell - 1)) + theta[:, None]))
    amps = np.sum(phases * u[:, sub], axis=0) / p.L
    return WannierState(amplitudes=amps, band=m, cell=cell)


def _link_overlaps(params: ModelParams, u: np.ndarray) -> np.ndarray:
    """Overlaps <u_n|u_{n+1}> around the momentum loop, the last linking the
    top of the zone back to k_0 + 2*pi/q via the wrap phases."""
    wrapped = u[:1] * bz_wrap_phases(params)[None, :]
    ext = np.concatenate([u, wrapped], axis=0)
    return np.einsum("ns,ns->n", np.conj(ext[:-1]), ext[1:])


def parallel_transport_gauge(params: ModelParams, u: np.ndarray) -> np.ndarray:
    """Gauge phases theta(k) that equalize all link phases around the loop.

    After re-phasing u_n -> e^{i theta_n} u_n, every overlap
    <u_n|u_{n+1}> (wrap link included) carries the identical phase Phi/L,
    where Phi is the loop Berry phase on its principal branch.
    """
    links = _link_overlaps(params, u)
    if np.min(np.abs(links)) < 1e-12:
        raise RuntimeError("vanishing momentum-space link; cannot parallel transport")
    L = len(u)
    theta = np.zeros(L)
    args = np.angle(links)
    theta[1:] = -np.cumsum(args[:-1])
    # total loop phase (gauge invariant) on its principal branch
    loop_phase = float(np.angle(np.exp(1j * np.sum(args))))
    theta += loop_phase / L * np.arange(L)
    return theta


def berry_connection_mean(params: ModelParams, u: np.ndarray) -> float:
    """(1/L) * sum_k <u|i d_k|u> from link phases, in sites."""
    args = np.angle(_link_overlaps(params, u))
    return -params.q / (2.0 * np.pi) * float(np.sum(args))


def mlws_gauge(bands: BandSolution, m: int, t_index: int = 0) -> np.ndarray:
    """Transport gauge with the loop-phase branch fixed by recentering.

    Shifts theta by integer multiples of kq so the cell-R Wannier state is
    centered inside cell R's site range [q(R-1)+1, q(R-1)+q].
    """
    p = bands.params
    anchor = p.L // 2 + 1
    theta = parallel_transport_gauge(p, bands.states[m, :, t_index, :])
    state = wannier_from_bloch(bands, m, anchor, theta, t_index)
    center = float(np.arange(1, p.n_sites + 1) @ (np.abs(state.amplitudes) ** 2))
    shift = int(np.rint((p.q * (anchor - 1) + (p.q + 1) / 2.0 - center) / p.q))
    if shift:
        theta = theta - shift * bands.k_grid * p.q
    return theta


def maximally_localize(
    bands: BandSolution,
    m: int,
    cell: int | None = None,
    t_index: int = 0,
) -> tuple[WannierState, SpreadReport, np.ndarray]:
    """Maximally localized Wannier state of band m with home cell `cell`.

    Returns (state, spread report, theta).  The post-conditions Omega_D ~ 0
    and a k-uniform Berry connection hold by construction of the transport
    gauge.
    """
    p = bands.params
    if cell is None:
        cell = p.L // 2 + 1
    theta = mlws_gauge(bands, m, t_index)
    state = wannier_from_bloch(bands, m, cell, theta, t_index)
    basis = wannier_basis(bands, t_index)
    report = spread_decomposition(state, basis)
    return state, report, theta


def wannier_basis(
    bands: BandSolution,
    t_index: int = 0,
    thetas: np.ndarray | None = None,
) -> np.ndarray:
    """Complete orthonormal Wannier set, shape (q, L, N): band m, cell R.

    By default every band carries its recentered transport gauge; `thetas`
    (shape (q, L)) overrides the gauge per band.
    """
    p = bands.params
    basis = np.empty((p.q, p.L, p.n_sites), dtype=complex)
    for m in range(p.q):
        theta = mlws_gauge(bands, m, t_index) if thetas is None else thetas[m]
        for r in range(p.L):
            basis[m, r] = wannier_from_bloch(bands, m, r + 1, theta, t_index).amplitudes
    return basis


def spread_decomposition(state: WannierState, basis: np.ndarray) -> SpreadReport:
    """Literal spread sums over a complete Wannier basis.

    Omega_I collects |<W_m'(R)|X|W>|^2 over all cells of the other bands,
    Omega_D the same within the state's own band excluding its home cell;
    Omega comes directly from <X^2> - <X>^2 and must equal their sum.
    Raises if the basis is not a complete orthonormal set, or if its
    (state.band, state.cell) member differs from the state (the sums are
    only meaningful for a member of the basis family).
    """
    q_bands, L, n = basis.shape
    if q_bands * L != n:
        raise ValueError("Wannier basis is incomplete: need q*L states on N = q*L sites")
    flat = basis.reshape(q_bands * L, n)
    gram_dev = np.max(np.abs(flat @ flat.conj().T - np.eye(n)))
    if gram_dev > 1e-10:
        raise ValueError(f"Wannier basis is not orthonormal: Gram deviation {gram_dev:.3e}")

    w = state.amplitudes
    member = np.abs(np.vdot(basis[state.band, state.cell - 1], w))
    if abs(member - 1.0) > 1e-8:
        raise ValueError(
            "basis does not contain the state in its band family; rebuild the "
            "basis with the state's gauge (|overlap| = %r)" % member
        )
    j = np.arange(1, n + 1)
    xw = j * w
    center = float(np.real(np.vdot(w, xw)))
    x2 = float(np.real(np.vdot(xw, xw)))
    omega = x2 - center**2

    elements = np.abs(flat.conj() @ xw) ** 2  # |<W_m'(R)|X|W>|^2, flattened (m', R)
    elements = elements.reshape(q_bands, L)
    own = state.band
    omega_i = float(np.sum(elements) - np.sum(elements[own]))
    omega_d = float(np.sum(elements[own]) - elements[own, state.cell - 1])

    if abs(omega - (omega_i + omega_d)) > 1e-9 * max(1.0, abs(omega)):
        raise AssertionError(
            f"spread identity violated: Omega={omega!r}, "
            f"Omega_I+Omega_D={omega_i + omega_d!r}"
        )
    return SpreadReport(omega=omega, omega_I=omega_i, omega_D=omega_d, center=center)


def predict_dispersion(gamma: np.ndarray, k_grid: np.ndarray) -> float:
    """Gauge-dependent spread acquired over a cycle from the phase profile.

    Computes the variance of -d(gamma)/dk over the momentum grid.  Because
    the Wannier transform is a discrete Fourier sum, the matching derivative
    is spectral: the winding across the zone (a multiple of 2*pi from the
    Berry phase) is removed as a linear ramp, the periodic remainder is
    differentiated by FFT, and the ramp slope is restored.  The seam link
    uses the principal-branch increment; raises if any neighboring increment
    reaches pi, i.e. the input was not unwrapped.
    """
    gamma = np.asarray(gamma, dtype=float)
    k = np.asarray(k_grid, dtype=float)
    if gamma.shape != k.shape:
        raise ValueError("gamma and k_grid must have matching shapes")
    length = len(gamma)
    dk = k[1] - k[0]
    inc = np.empty_like(gamma)
    inc[:-1] = np.diff(gamma)
    inc[-1] = np.angle(np.exp(1j * (gamma[0] - gamma[-1])))
    if np.max(np.abs(inc)) >= np.pi:
        raise ValueError(
            "gamma is not unwrapped: adjacent increments reach pi; "
            "refine the grid or unwrap the input"
        )
    slope = np.sum(inc) / (length * dk)
    residual = gamma - slope * (k - k[0])  # periodic over the zone
    freqs = 2.0 * np.pi * np.fft.fftfreq(length, d=dk)
    d_residual = np.real(np.fft.ifft(1j * freqs * np.fft.fft(residual)))
    x = -(d_residual + slope)
    return float(np.mean((x - np.mean(x)) ** 2))
