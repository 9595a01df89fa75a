import math

import numpy as np
import pytest

from owpcce.central import (NoSignChange, Transition, build_spectrum, central_eigenbasis, clock_identity_residual,
                            df_dB, donor_hamiltonian, find_clock_transition, find_owp, level_labels, polarization,
                            polarization_difference, transition_frequency)

GAUSS = 1e-4


def _spin_ops(s):
    """Independent spin matrices from the ladder-operator definition."""
    m = np.arange(s, -s - 1, -1)
    sp = np.zeros((len(m), len(m)))
    for i in range(1, len(m)):
        sp[i - 1, i] = math.sqrt(s * (s + 1) - m[i] * (m[i] + 1))
    return (sp + sp.T) / 2, (sp - sp.T) / 2j, np.diag(m)


def _oracle_levels(donor, B):
    """Brute-force eigen-energies and <Sz> of w0 Sz - d w0 Iz + A I.S."""
    S = _spin_ops(0.5)
    I = _spin_ops(donor.host_spin)
    nI = I[0].shape[0]
    w0 = donor.electron_gyromag * B
    H = w0 * np.kron(S[2], np.eye(nI)) - donor.delta * w0 * np.kron(np.eye(2), I[2])
    H = H + donor.hyperfine_A * sum(np.kron(S[k], I[k]) for k in range(3))
    E, V = np.linalg.eigh(H)
    Sz = np.kron(S[2], np.eye(nI))
    P = np.einsum("ki,kl,li->i", V.conj(), Sz, V).real
    return E, P


def test_level_counts(bismuth, arsenic):
    assert bismuth.n_levels == 20
    assert arsenic.n_levels == 8
    assert len(build_spectrum(bismuth, 0.1)) == 20
    assert len(build_spectrum(arsenic, 0.1)) == 8


@pytest.mark.parametrize("B", [1e-3, 0.05, 0.0799, 0.32, 1.0])
def test_spectrum_matches_brute_force(bismuth, B):
    E, P = _oracle_levels(bismuth, B)
    levels = build_spectrum(bismuth, B)
    e = np.array([lv.energy for lv in levels])
    p = np.array([lv.P for lv in levels])
    order = np.argsort(e)
    assert np.allclose(np.sort(e), E, rtol=0, atol=1e-9 * np.abs(E).max())
    # match P level by level through the energy ordering (no degeneracies at these fields)
    assert np.allclose(p[order], P, atol=1e-10)


def test_package_diagonalization_matches_analytic(bismuth):
    for B in (0.02, 0.0795, 0.6):
        E, V, P = central_eigenbasis(bismuth, B)
        ref = build_spectrum(bismuth, B)
        assert np.allclose(E, [lv.energy for lv in ref], rtol=1e-12)
        assert np.allclose(P, [lv.P for lv in ref], atol=1e-10)
        H = donor_hamiltonian(bismuth, B)
        assert np.allclose(H @ V, V * E, atol=1e-6 * np.abs(E).max())


def test_ordering_at_reference_field(bismuth):
    levels = build_spectrum(bismuth, 0.6)
    assert [lv.index for lv in levels] == list(range(1, 21))
    assert np.all(np.diff([lv.energy for lv in levels]) > 0)


def test_unmixed_levels(bismuth, arsenic):
    for donor in (bismuth, arsenic):
        n = donor.n_levels
        top = donor.host_spin + 0.5
        for B in (1e-3, 0.08, 3.0):
            for lv in build_spectrum(donor, B):
                assert abs(lv.P) <= 0.5 + 1e-15
                if abs(lv.m) == top:
                    assert lv.beta == 0.0
                    assert abs(lv.P) == 0.5
        labels = level_labels(donor)
        unmixed = [i + 1 for i, (m, _) in enumerate(labels) if abs(m) == top]
        assert sorted(unmixed) == [n // 2, n]


def test_bi_levels_10_and_20(bismuth):
    for B in (0.01, 0.2, 2.0):
        assert abs(polarization(bismuth, B, 10)) == 0.5
        assert abs(polarization(bismuth, B, 20)) == 0.5


def test_high_field_limit(bismuth):
    P = np.array([lv.P for lv in build_spectrum(bismuth, 100.0)])
    assert np.allclose(np.abs(P), 0.5, atol=1e-3)


def test_zero_crossing_of_Z_gives_beta_half_pi(bismuth):
    # Z_m = m + w0 (1 + delta) / A = 0 for m = -2
    m = -2.0
    B = -m * bismuth.hyperfine_A / (bismuth.electron_gyromag * (1 + bismuth.delta))
    levels = [lv for lv in build_spectrum(bismuth, B) if lv.m == m]
    assert len(levels) == 2
    for lv in levels:
        assert lv.beta == pytest.approx(math.pi / 2, abs=1e-12)
        assert lv.P == pytest.approx(0.0, abs=1e-12)


def test_transition_delta_m(bismuth):
    tr = Transition.between(bismuth, 14, 7)
    assert tr.delta_m == 1
    assert abs(tr.delta_m) == 1


def test_zero_field_splitting(bismuth):
    # at B = 0 the doublets merge into F = I +- 1/2 manifolds split by A (I + 1/2)
    E = np.sort([lv.energy for lv in build_spectrum(bismuth, 0.0)])
    A, I = bismuth.hyperfine_A, bismuth.host_spin
    assert np.allclose(E[:9], -A * (I + 1) / 2)
    assert np.allclose(E[9:], A * I / 2)
    tr = Transition.between(bismuth, 20, 1)
    assert abs(transition_frequency(bismuth, 1e-9, tr)) == pytest.approx(A * (I + 0.5), rel=1e-6)
    assert abs(transition_frequency(bismuth, 1e-9, Transition.between(bismuth, 20, 10))) < 1e-6 * A


def test_frequency_analytic_vs_diagonalized(bismuth, owp_transition):
    B = 799 * GAUSS
    f = transition_frequency(bismuth, B, owp_transition)
    E, _, _ = central_eigenbasis(bismuth, B)
    assert f == pytest.approx(E[13] - E[6], rel=1e-10)


def test_high_field_frequency_grows_linearly(bismuth):
    tr = Transition.between(bismuth, 20, 10)
    x = np.linspace(5, 10, 6)
    f = np.array([transition_frequency(bismuth, B, tr) for B in x])
    assert np.all(np.diff(f) > 0)
    slopes = np.diff(f) / np.diff(x)
    assert np.allclose(slopes, slopes[0], rtol=1e-3)


def test_owp(bismuth, owp_transition):
    B = find_owp(bismuth, owp_transition, (0.05, 0.1))
    assert abs(B - 799 * GAUSS) < 2 * GAUSS
    assert abs(polarization_difference(bismuth, B, owp_transition)) < 1e-6


def test_owp_unmixed_has_no_root(bismuth):
    with pytest.raises(NoSignChange):
        find_owp(bismuth, Transition.between(bismuth, 20, 10), (0.01, 0.3))


def test_clock_transition(bismuth, owp_transition):
    owp = find_owp(bismuth, owp_transition)
    clock = find_clock_transition(bismuth, owp_transition)
    assert 0 < abs(clock - owp) < 10 * GAUSS
    assert abs(df_dB(bismuth, clock, owp_transition)) < 1e-3 * bismuth.electron_gyromag
    assert abs(clock_identity_residual(bismuth, clock, owp_transition)) < 1e-6


def test_clock_equals_owp_without_nuclear_zeeman(bismuth, owp_transition):
    d0 = bismuth.with_delta_zero()
    owp = find_owp(d0, owp_transition)
    clock = find_clock_transition(d0, owp_transition)
    assert clock == pytest.approx(owp, abs=1e-9)


def test_invalid_inputs(bismuth):
    with pytest.raises(ValueError):
        polarization(bismuth, -0.1, 3)
    with pytest.raises(ValueError):
        Transition.between(bismuth, 14, 21)
    with pytest.raises(ValueError):
        Transition.between(bismuth, 7, 7)
