"""Third-order effective Hamiltonians for the strongly modulated chain.

Under strong diagonal modulation (|J/V0| << 1) the tunneling term acts as a
perturbation on the on-site energies.  One pump cycle splits into three
regions around the pairwise resonances of the sublattice energies
(I: V_A = V_B, II: V_B = V_C, III: V_C = V_A).  Within each region a
Schrieffer-Wolff rotation yields renormalized on-site energies, a
first-order resonant bond, a second-order inter-cell bond, and third-order
same-sublattice hoppings.

Two independent routes are implemented: `sw_generic` evaluates the literal
second- and third-order matrix-element sums for an arbitrary diagonal H0
plus perturbation, and `effective_params` evaluates the closed-form
coefficients; they must agree to rounding, which is the module's
self-consistency oracle.  `effective_cycle_hamiltonian` assembles the
piecewise cycle generator from the closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import ModelParams, TunnelingMode, tunneling


class Region(Enum):
    I = "I"
    II = "II"
    III = "III"


class DivergentDenominatorError(RuntimeError):
    """Subspace separation below gap_floor; perturbation theory invalid."""


@dataclass
class EffectiveParams:
    """Closed-form effective couplings of one region at one time.

    onsite : renormalized (V_A, V_B, V_C)
    j1, j2, j3 : first-, second-, third-order tunneling strengths
    biases : (Delta_1, Delta_2, Delta_3) = (V_A-V_B, V_B-V_C, V_A-V_C)
    bare : bare bond strengths (J_1, J_2, J_3)
    """

    region: Region
    onsite: tuple
    j1: float
    j2: float
    j3: float
    biases: tuple
    bare: tuple


def region_of_phase(phi: float) -> Region:
    """Region of the reduced modulation phase, by the cycle partition
    I: [0,pi/6) u [5pi/6,7pi/6) u [11pi/6,2pi]; II: [pi/6,pi/2) u
    [7pi/6,3pi/2); III: [pi/2,5pi/6) u [3pi/2,11pi/6)."""
    phi = float(np.mod(phi, 2.0 * np.pi))
    sixth = np.pi / 6.0
    if phi < sixth or 5 * sixth <= phi < 7 * sixth or phi >= 11 * sixth:
        return Region.I
    if sixth <= phi < 3 * sixth or 7 * sixth <= phi < 9 * sixth:
        return Region.II
    return Region.III


def sw_generic(
    h0_diag: np.ndarray,
    v: np.ndarray,
    subspace,
    order: int = 3,
    gap_floor: float = 0.0,
) -> np.ndarray:
    """Effective Hamiltonian on `subspace` from the Schrieffer-Wolff sums.

    h0_diag holds the unperturbed (diagonal) energies, v the perturbation in
    the same basis.  Returns the subspace block of
    H0*P + P*V*P + H_eff2 (+ H_eff3 for order 3), indexed in subspace order:

        H_eff2[i,j] = 1/2 sum_m V[i,m] V[m,j] (1/(E_i-E_m) + 1/(E_j-E_m))

    with m outside the subspace, and the four third-order sums chaining
    V through one or two outside states (including the block-diagonal V
    elements inside the subspace).  Raises DivergentDenominatorError when
    the subspace-to-complement gap is below gap_floor.
    """
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    h0_diag = np.asarray(h0_diag, dtype=float)
    v = np.asarray(v, dtype=complex)
    n = len(h0_diag)
    p_idx = np.asarray(sorted(subspace), dtype=int)
    mask = np.zeros(n, dtype=bool)
    mask[p_idx] = True
    c_idx = np.nonzero(~mask)[0]
    if len(c_idx) == 0:
        raise ValueError("subspace must have a nonempty complement")

    e_p = h0_diag[p_idx]
    e_c = h0_diag[c_idx]
    gap = np.abs(e_p[:, None] - e_c[None, :])
    if np.min(gap) <= gap_floor:
        raise DivergentDenominatorError(
            f"subspace-complement gap {np.min(gap):.3e} <= gap_floor {gap_floor:.3e}"
        )

    v_pp = v[np.ix_(p_idx, p_idx)]
    v_pc = v[np.ix_(p_idx, c_idx)]
    v_cc = v[np.ix_(c_idx, c_idx)]
    g = 1.0 / (e_p[:, None] - e_c[None, :])  # g[i, m] = 1/(E_i - E_m)

    h_eff = np.diag(e_p).astype(complex) + v_pp
    t1 = (v_pc * g) @ np.conj(v_pc.T)
    h_eff += 0.5 * (t1 + np.conj(t1.T))

    if order == 3:
        # chain through two outside states: V[k,m] V[m,n] V[n,j] with the
        # column-index energy in both denominators
        x1 = np.conj(v_pc.T) * g.T  # x1[n, j] = V[n,j] / (E_j - E_n)
        s_a = 0.5 * v_pc @ (g.T * (v_cc @ x1))
        # chain through one inside state: -V[k,i] V[i,m] V[m,j] /
        # ((E_k - E_m)(E_i - E_m))
        s_c = -0.5 * ((v_pp @ (v_pc * g)) * g) @ np.conj(v_pc.T)
        h_eff += s_a + np.conj(s_a.T) + s_c + np.conj(s_c.T)
    return h_eff


def _bare_bonds(params: ModelParams, t: float) -> tuple:
    """(J_1, J_2, J_3): bonds A-B and B-C within a cell, C-A across cells."""
    if params.q != 3:
        raise ValueError("effective Hamiltonians are derived for q = 3")
    return tuple(float(tunneling(params, j, t)) for j in (1, 2, 3))


def _sublattice_energies(params: ModelParams, t: float) -> tuple:
    from .model import onsite_energy

    return tuple(float(onsite_energy(params, s, t)) for s in (1, 2, 3))


def effective_params(params: ModelParams, t: float, region: Region | None = None) -> EffectiveParams:
    """Closed-form effective couplings at time t.

    The region defaults to the one owning phi(t); passing a mismatched
    region raises.  Denominators entering the chosen region's formulas must
    exceed gap_floor = 0.1*V0.
    """
    phi = float(np.mod(params.phase(t), 2.0 * np.pi))
    own = region_of_phase(phi)
    if region is None:
        region = own
    elif region is not own:
        raise ValueError(f"phi(t) = {phi:.4f} lies in region {own.value}, not {region.value}")

    va, vb, vc = _sublattice_energies(params, t)
    j1, j2, j3 = _bare_bonds(params, t)
    d1, d2, d3 = va - vb, vb - vc, va - vc
    gap_floor = 0.1 * abs(params.V0)
    relevant = {
        Region.I: (d2, d3),
        Region.II: (d1, d3),
        Region.III: (d1, d2),
    }[region]
    if min(abs(d) for d in relevant) <= gap_floor:
        raise DivergentDenominatorError(
            f"region {region.value} denominators {relevant} within gap_floor {gap_floor:.3e}"
        )

    if region is Region.I:
        onsite = (va + j3**2 / d3, vb + j2**2 / d2, vc - j2**2 / d2 - j3**2 / d3)
        eff1 = j1 - j1 * (j2**2 + j3**2) / (2 * d2 * d3)
        eff2 = 0.5 * j2 * j3 * (1 / d2 + 1 / d3)
        eff3 = j1 * j2 * j3 / (2 * d2 * d3)
    elif region is Region.II:
        onsite = (va + j1**2 / d1 + j3**2 / d3, vb - j1**2 / d1, vc - j3**2 / d3)
        eff1 = j2 - j2 * (j1**2 + j3**2) / (2 * d1 * d3)
        eff2 = -0.5 * j1 * j3 * (1 / d1 + 1 / d3)
        eff3 = j1 * j2 * j3 / (2 * d1 * d3)
    else:
        # region III chains pass through the extremal B sublattice, so both
        # third-order denominators are (E - E_B) products and the correction
        # enters with the opposite sign to regions I and II (the generic sums
        # confirm this; the sign follows from Delta_1*Delta_2 < 0 here)
        onsite = (va + j1**2 / d1, vb - j1**2 / d1 + j2**2 / d2, vc - j2**2 / d2)
        eff1 = j3 + j3 * (j1**2 + j2**2) / (2 * d1 * d2)
        eff2 = 0.5 * j1 * j2 * (1 / d1 - 1 / d2)
        eff3 = -j1 * j2 * j3 / (2 * d1 * d2)
    return EffectiveParams(
        region=region, onsite=onsite, j1=eff1, j2=eff2, j3=eff3,
        biases=(d1, d2, d3), bare=(j1, j2, j3),
    )


def _add_bond(h: np.ndarray, row: int, col: int, val: complex) -> None:
    h[row, col] += val
    h[col, row] += np.conj(val)


def effective_cycle_hamiltonian(params: ModelParams, t: float) -> np.ndarray:
    """Piecewise cycle generator H_T(t) on the L-cell ring (dense N x N).

    Assembles the region-owning effective Hamiltonian from the closed-form
    couplings; continuous within each region and discontinuous at region
    boundaries by construction.
    """
    ep = effective_params(params, t)
    L, q, n = params.L, params.q, params.n_sites
    h = np.zeros((n, n), dtype=complex)
    sites = np.arange(n)
    h[sites, sites] = np.tile(ep.onsite, L)

    a = lambda l: q * (l % L)  # 0-based site of sublattice A in cell l (0-based)
    b = lambda l: q * (l % L) + 1
    c = lambda l: q * (l % L) + 2
    for l in range(L):
        if ep.region is Region.I:
            _add_bond(h, a(l), b(l), ep.j1)
            _add_bond(h, a(l), b(l - 1), ep.j2)
            _add_bond(h, a(l), a(l + 1), -ep.j3)
            _add_bond(h, b(l), b(l + 1), -ep.j3)
            _add_bond(h, c(l), c(l + 1), 2 * ep.j3)
        elif ep.region is Region.II:
            _add_bond(h, b(l), c(l), ep.j1)
            _add_bond(h, b(l + 1), c(l), ep.j2)
            _add_bond(h, a(l), a(l + 1), 2 * ep.j3)
            _add_bond(h, b(l), b(l + 1), -ep.j3)
            _add_bond(h, c(l), c(l + 1), -ep.j3)
        else:
            _add_bond(h, a(l + 1), c(l), ep.j1)
            _add_bond(h, a(l), c(l), ep.j2)
            _add_bond(h, a(l), a(l + 1), -ep.j3)
            _add_bond(h, b(l), b(l + 1), 2 * ep.j3)
            _add_bond(h, c(l), c(l + 1), -ep.j3)
    return h


def effective_bloch_blocks(params: ModelParams, k: np.ndarray, t: float) -> np.ndarray:
    """Cell-gauge Bloch blocks of H_T(t), shape (len(k), q, q).

    In the cell gauge a hopping c^dag_{l+a,s'} c_{l,s} with amplitude A
    contributes A*exp(-ikq*a) to block element (s', s): intra-cell terms are
    plain, inter-cell terms carry whole-cell phases (matching
    `model.bloch_blocks`).
    """
    ep = effective_params(params, t)
    k = np.asarray(k, dtype=float)
    q = params.q
    h = np.zeros((len(k), q, q), dtype=complex)
    for s in range(q):
        h[:, s, s] = ep.onsite[s]

    def add(sp, s, a, amp):
        ph = amp * np.exp(-1j * k * q * a)
        h[:, sp, s] += ph
        h[:, s, sp] += np.conj(ph)

    if ep.region is Region.I:
        add(0, 1, 0, ep.j1)  # A_l <- B_l
        add(0, 1, 1, ep.j2)  # A_l <- B_{l-1}
        third = (-ep.j3, -ep.j3, 2 * ep.j3)
    elif ep.region is Region.II:
        add(1, 2, 0, ep.j1)  # B_l <- C_l
        add(1, 2, 1, ep.j2)  # B_{l+1} <- C_l
        third = (2 * ep.j3, -ep.j3, -ep.j3)
    else:
        add(0, 2, 1, ep.j1)  # A_{l+1} <- C_l
        add(0, 2, 0, ep.j2)  # A_l <- C_l
        third = (-ep.j3, 2 * ep.j3, -ep.j3)
    for s, amp in enumerate(third):
        h[:, s, s] += 2 * amp * np.cos(k * q)
    return h


def effective_bloch_blocks_batch(params: ModelParams, k: np.ndarray, ts: np.ndarray) -> np.ndarray:
    out = np.empty((len(ts), len(k), params.q, params.q), dtype=complex)
    for i, t in enumerate(ts):
        out[i] = effective_bloch_blocks(params, k, t)
    return out


effective_bloch_blocks.batch = effective_bloch_blocks_batch


def compare_effective(
    params: ModelParams,
    initial,
    n_cycles: int = 1,
    dt: float | None = None,
    samples_per_cycle: int | None = None,
):
    """Pump under the full Hamiltonian and under H_T from the same state.

    Returns (full, effective, fidelity): two trajectories with aligned
    sample grids and the final-state overlap modulus squared.
    """
    from .dynamics import SAMPLES_PER_CYCLE, dt_max, run_protocol, Protocol

    samples = samples_per_cycle or SAMPLES_PER_CYCLE
    if dt is None:
        dt = min(dt_max(params), dt_max(params, effective_bloch_blocks))
    full = run_protocol(params, Protocol.TRADITIONAL, n_cycles, initial,
                        dt=dt, samples_per_cycle=samples)
    eff = run_protocol(params, Protocol.TRADITIONAL, n_cycles, initial,
                       dt=dt, samples_per_cycle=samples,
                       bloch_builder=effective_bloch_blocks)
    fid = float(np.abs(np.vdot(full.final_state, eff.final_state)) ** 2)
    return full, eff, fid
