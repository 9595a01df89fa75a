import numpy as np
import pytest

from owpcce import cce
from owpcce import pseudospin as ps
from owpcce.bath import BathRealization, LatticeSpec
from owpcce.clusters import build_neighbor_graph, enumerate_clusters
from owpcce.constants import GAUSS

B_OWP = 795 * GAUSS
B_HIGH = 3200 * GAUSS


def synthetic_bath(positions, rng, J_scale=2 * np.pi * 3e3, orient=None):
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    if orient is None:
        orient = rng.choice([-0.5, 0.5], size=n)
    return BathRealization(pos, rng.normal(scale=J_scale, size=n), np.asarray(orient, dtype=float),
                           np.arange(n), LatticeSpec(seed=0))


def random_connected_bath(small_bath, k, rng):
    """A k-spin sub-bath whose neighbor graph is connected, with strong random J."""
    graph = build_neighbor_graph(small_bath.positions)
    pool = enumerate_clusters(graph, k)[k]
    members = pool[rng.integers(len(pool))]
    return synthetic_bath(small_bath.positions[list(members)], rng)


def test_identical_branches_give_unity(small_bath, bismuth, owp_transition, rng):
    sys_ = cce.CCESystem(small_bath, bismuth, B_HIGH, owp_transition)
    prob = sys_.problem(enumerate_clusters(sys_.graph, 3)[3][0])
    same = cce.ClusterProblem(prob.cluster, prob.transition, prob.mode, prob.h_u, prob.h_u, prob.orientations)
    t = np.linspace(0, 5e-3, 40)
    for N in (0, 1, 2, 5):
        assert np.allclose(cce.cluster_coherence(same, N, t), 1.0, atol=1e-12)


def test_time_zero_is_one(small_bath, bismuth, owp_transition):
    sys_ = cce.CCESystem(small_bath, bismuth, B_OWP, owp_transition)
    res = cce.run_cce(sys_, 1, np.linspace(0, 1e-2, 8), k_max=3)
    for k, L in res.orders.items():
        assert L[0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("B", [B_OWP, B_HIGH])
@pytest.mark.parametrize("N", [0, 1, 2, 4])
def test_secular_pair_matches_pseudospin(bismuth, owp_transition, rng, B, N):
    """2-spin antiparallel cluster with the secular dipolar coupling: the engine equals the pair model."""
    for _ in range(10):
        r = rng.normal(size=3)
        r *= rng.uniform(2.5, 5.0) / np.linalg.norm(r)
        bath = synthetic_bath([[0, 0, 0], r], rng, orient=[0.5, -0.5])
        sys_ = cce.CCESystem(bath, bismuth, B, owp_transition, secular=True, couplings="all")
        t = np.linspace(0, 20e-3, 30)
        L = cce.exact_coherence(sys_, N, t)
        pair = ps.pairs_from_bath(bath, [(0, 1)], sys_.P_u, sys_.P_l)
        tau = t if N == 0 else t / (2 * N)
        ref = ps.pair_coherence(pair, tau[None, :], N).ravel()
        # the engine keeps the common Ising/Zeeman phases, which only matter for FID
        if N == 0:
            assert np.allclose(np.abs(L), np.abs(ref), atol=1e-10)
        else:
            assert np.allclose(L, ref, atol=1e-10)


def test_ising_only_pair_has_no_decay(bismuth, owp_transition, rng):
    """Parallel spins cannot flip-flop under the secular coupling: |L| = 1 for echo sequences."""
    bath = synthetic_bath([[0, 0, 0], [1.5, 2.0, 1.0]], rng, orient=[0.5, 0.5])
    sys_ = cce.CCESystem(bath, bismuth, B_OWP, owp_transition, secular=True)
    L = cce.exact_coherence(sys_, 2, np.linspace(0, 0.1, 30))
    assert np.allclose(np.abs(L), 1.0, atol=1e-10)


def test_single_pair_bath_is_exact_at_cce2(bismuth, owp_transition, rng):
    bath = synthetic_bath([[0, 0, 0], [1.4, 1.4, 1.4]], rng, orient=[0.5, -0.5])
    sys_ = cce.CCESystem(bath, bismuth, B_OWP, owp_transition)
    t = np.linspace(0, 30e-3, 25)
    res = cce.run_cce(sys_, 1, t, k_max=2)
    assert np.allclose(res.orders[2], cce.exact_coherence(sys_, 1, t), atol=1e-12)


def test_uncoupled_triple_has_unit_term(bismuth, owp_transition, rng):
    bath = synthetic_bath([[0, 0, 0], [40, 0, 0], [0, 40, 0]], rng)
    sys_ = cce.CCESystem(bath, bismuth, B_OWP, owp_transition)
    t = np.linspace(0, 10e-3, 20)
    cache = cce.TermCache()
    for c in [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]:
        cce.cce_term(c, cce.evaluate_clusters(sys_, [c], 1, t)[0], cache)
    for c in [(0, 1), (0, 2), (1, 2), (0, 1, 2)]:
        assert np.allclose(cache.terms[c], 1.0, atol=1e-12)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_expansion_is_exact_on_small_baths(small_bath, bismuth, owp_transition, rng, k):
    t = np.linspace(0, 20e-3, 21)
    for _ in range(5):
        bath = random_connected_bath(small_bath, k, rng)
        for B in (B_OWP, B_HIGH):
            sys_ = cce.CCESystem(bath, bismuth, B, owp_transition)
            for N in (1, 2):
                res = cce.run_cce(sys_, N, t, k_max=k)
                exact = cce.exact_coherence(sys_, N, t)
                assert np.max(np.abs(res.orders[k] - exact)) < 1e-10


def test_secular_cce2_is_pair_product(small_bath, bismuth, owp_transition):
    sys_ = cce.CCESystem(small_bath, bismuth, B_OWP, owp_transition, secular=True)
    t = np.linspace(0, 0.2, 40)
    for N in (1, 2):
        res = cce.run_cce(sys_, N, t, k_max=2)
        pairs = ps.pairs_from_bath(small_bath, sys_.graph.edges, sys_.P_u, sys_.P_l)
        ref = ps.product_over_pairs(pairs, N, t).values
        assert np.allclose(np.abs(res.orders[2]), ref, atol=1e-8)


def test_full_hyperfine_close_to_pure_dephasing(small_bath, bismuth, owp_transition):
    t = np.linspace(0, 2e-3, 12)
    pure = cce.CCESystem(small_bath, bismuth, B_HIGH, owp_transition)
    full = cce.CCESystem(small_bath, bismuth, B_HIGH, owp_transition, mode="full-hyperfine", graph=pure.graph)
    clusters = enumerate_clusters(pure.graph, 2)[2][:20]
    Lp = cce.evaluate_clusters(pure, clusters, 1, t)
    Lf = cce.evaluate_clusters(full, clusters, 1, t)
    assert np.max(np.abs(Lp - Lf)) < 1e-2
    # the bath-free normalization makes a spin with J = 0 exactly invisible
    lone = synthetic_bath([[0, 0, 0]], np.random.default_rng(0), J_scale=0.0)
    fs = cce.CCESystem(lone, bismuth, B_HIGH, owp_transition, mode="full-hyperfine")
    assert np.allclose(cce.exact_coherence(fs, 1, t), 1.0, atol=1e-10)


def test_worker_count_does_not_change_results(small_bath, bismuth, owp_transition):
    sys_ = cce.CCESystem(small_bath, bismuth, B_OWP, owp_transition)
    t = np.linspace(0, 0.05, 1500)  # small chunks, so several jobs
    clusters = enumerate_clusters(sys_.graph, 2)
    assert cce._chunk_size(2, len(t)) < len(clusters[2])
    r1 = cce.run_cce(sys_, 1, t, k_max=2, clusters=clusters, workers=1)
    r2 = cce.run_cce(sys_, 1, t, k_max=2, clusters=clusters, workers=2)
    assert np.array_equal(r1.orders[2], r2.orders[2])


def test_divergence_guard_clamps_and_counts():
    cache = cce.TermCache()
    t = np.arange(5)
    cache.terms[(0,)] = np.array([1, 1e-12, 1, 1, 1], dtype=complex)
    cache.terms[(1,)] = np.ones(5, dtype=complex)
    term = cce.cce_term((0, 1), np.full(5, 0.5, dtype=complex), cache)
    assert term[1] == 1.0 and np.allclose(term[[0, 2, 3, 4]], 0.5)
    assert cache.divergences == {2: 1}


def test_result_gaps_and_convergence():
    t = np.linspace(0, 1, 4)
    res = cce.CCEResult(t, {2: np.ones(4), 3: np.array([1, 0.98, 0.9, 0.8])}, {}, {}, threshold=0.1)
    assert res.gap(2, 3) == pytest.approx(0.2)
    assert res.converged == {2: False}
    assert res.curve().metadata["cce_order"] == 3


def test_rejects_bad_input(small_bath, bismuth, owp_transition):
    sys_ = cce.CCESystem(small_bath, bismuth, B_OWP, owp_transition)
    prob = sys_.problem((0, 1))
    with pytest.raises(ValueError, match="Hermitian"):
        cce.ClusterProblem(prob.cluster, prob.transition, prob.mode, prob.h_u + np.triu(np.ones((4, 4)), 1),
                           prob.h_l, prob.orientations)
    with pytest.raises(ValueError):
        sys_.problem(tuple(range(cce.MAX_CLUSTER + 4)))
    with pytest.raises(ValueError):
        cce.run_cce(sys_, 1, [0.0, 1.0], k_max=6)
    with pytest.raises(ValueError):
        cce.CCESystem(small_bath, bismuth, B_OWP, owp_transition, mode="bogus")
