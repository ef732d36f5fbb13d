import numpy as np
import pytest

from aah_pump import model, spectrum
from aah_pump.model import ModelParams, Sign, TunnelingMode


def test_three_bands_orthonormal(bands_topology):
    assert bands_topology.n_bands == 3
    u = bands_topology.states  # (q, L, M, q)
    gram = np.einsum("mkts,nkts->ktmn", np.conj(u), u)
    eye = np.broadcast_to(np.eye(3), gram.shape)
    assert np.max(np.abs(gram - eye)) < 1e-10


def test_energies_sorted_and_gapped(bands_topology):
    e = bands_topology.energies
    assert np.all(e[1:] >= e[:-1])
    # strong diagonal modulation: bands well separated
    assert bands_topology.min_gap() > 1.0


def test_decoupled_sites_flat_bands():
    p = ModelParams(J=0.0, phi0=0.4)
    bands = spectrum.solve_bands(p, np.array([0.0]))
    e = bands.energies[:, :, 0]
    assert np.max(np.ptp(e, axis=1)) < 1e-12  # k-independent
    onsite = np.sort([model.onsite_energy(p, s, 0.0) for s in (1, 2, 3)])
    np.testing.assert_allclose(np.sort(e[:, 0]), onsite, atol=1e-12)


def test_band_touching_raises():
    # with J = 0 the on-site levels cross during the cycle
    p = ModelParams(J=0.0)
    grid = spectrum.default_topology_grid(p, 240)
    with pytest.raises(spectrum.BandTouchingError):
        spectrum.solve_bands(p, grid)


@pytest.mark.parametrize("fixture", ["bands_topology", "bands_topology_sine"])
def test_chern_numbers(fixture, request):
    bands = request.getfixturevalue(fixture)
    cherns = [spectrum.chern_number(bands, m) for m in range(3)]
    assert cherns == [-1, 2, -1]
    assert sum(cherns) == 0


def test_chern_stable_under_refinement():
    for mode in (TunnelingMode.UNIFORM, TunnelingMode.SINE_MODULATED):
        p = ModelParams(L=30, tunneling_mode=mode)
        bands = spectrum.solve_bands(p, spectrum.default_topology_grid(p, 480))
        assert [spectrum.chern_number(bands, m) for m in range(3)] == [-1, 2, -1]


def test_curvature_sums_to_chern(bands_topology):
    for m in range(3):
        c = spectrum.chern_number(bands_topology, m)
        total = np.sum(spectrum.berry_curvature_grid(bands_topology, m))
        assert total / (2 * np.pi) == pytest.approx(c, abs=1e-9)


def test_chern_gauge_independence(bands_topology):
    rng = np.random.default_rng(7)
    scrambled = spectrum.BandSolution(
        params=bands_topology.params,
        k_grid=bands_topology.k_grid,
        t_grid=bands_topology.t_grid,
        energies=bands_topology.energies,
        states=bands_topology.states
        * np.exp(2j * np.pi * rng.random(bands_topology.states.shape[:-1]))[..., None],
    )
    for m in range(3):
        assert spectrum.chern_number(scrambled, m) == spectrum.chern_number(bands_topology, m)


def test_band_inversion(paper_params, bands_topology):
    import dataclasses

    minus = dataclasses.replace(paper_params, sign=Sign.MINUS)
    inverted = spectrum.solve_bands(minus, bands_topology.t_grid)
    # energies negate and reverse order
    np.testing.assert_allclose(
        inverted.energies, -bands_topology.energies[::-1], atol=1e-10)
    # eigenvectors agree up to phase
    ov = np.abs(np.einsum(
        "kts,kts->kt", np.conj(inverted.states[0]), bands_topology.states[2]))
    assert np.min(ov) > 1 - 1e-10
    # Berry curvature of band m equals that of band q+1-m of the flipped model
    f_plus = spectrum.berry_curvature_grid(bands_topology, 2)
    f_minus = spectrum.berry_curvature_grid(inverted, 0)
    np.testing.assert_allclose(f_plus, f_minus, atol=1e-9)


def test_chern_requires_full_torus(paper_params):
    bands = spectrum.solve_bands(paper_params, np.linspace(0, paper_params.period / 2, 33))
    with pytest.raises(ValueError):
        spectrum.chern_number(bands, 0)


def test_flatness_nonnegative_and_flat_limit():
    p = ModelParams()
    report = spectrum.flatness(
        spectrum.solve_bands(p, spectrum.default_topology_grid(p, 60)))
    assert np.all(report.ratios >= 0)
    assert np.all(report.gaps > 0)
    # widths and ratios shrink toward the decoupled-site limit
    maxima = []
    for j in (0.5, 0.05):
        pj = ModelParams(J=j)
        rep = spectrum.flatness(
            spectrum.solve_bands(pj, spectrum.default_topology_grid(pj, 60)))
        maxima.append(np.max(rep.ratios))
    assert maxima[1] < maxima[0]
    assert maxima[1] < 2e-3


def test_flatness_sine_below_uniform(bands_topology, bands_topology_sine):
    flat_u = spectrum.flatness(bands_topology)
    flat_s = spectrum.flatness(bands_topology_sine)
    assert np.all(flat_s.ratios[2] <= flat_u.ratios[2])
