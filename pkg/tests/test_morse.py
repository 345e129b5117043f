import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morsepack.complex import (
    BasedChainComplex,
    CellId,
    betti_numbers,
    cycle_graph,
    filled_triangle,
    interval,
)
from morsepack.hodge import hodge_matching
from morsepack.morse import (
    Matching,
    MatchingError,
    NonOrthogonalBaseError,
    PairingReducer,
    SequentialMatching,
    adjoint_flow,
    adjoint_retraction,
    compose,
    identity_retraction,
    is_morse_matching,
    matching_graph,
    random_matching,
    reduce,
    sequential_reduce,
    single_pairing_reduce,
    summed_index,
    summed_index_matrix,
)

from oracles import brute_gamma, brute_maps, complexes, exact_betti, small_complexes_with_triangles

T = filled_triangle()
F = CellId(2, 0)
E01, E02, E12 = T.cell(1, "e01"), T.cell(1, "e02"), T.cell(1, "e12")


def test_graph_edges():
    g = matching_graph(interval())
    assert {b for b in g[CellId(1, 0)]} == {CellId(0, 0), CellId(0, 1)}
    assert sum(len(v) for v in matching_graph(T).values()) == 9
    zero = BasedChainComplex.from_dense((("a",), ("x",)), {1: np.zeros((1, 1))})
    assert sum(len(v) for v in matching_graph(zero).values()) == 0


def test_matched_edge_is_reversed():
    g = matching_graph(T, Matching(((F, E01),)))
    assert E01 not in g[F]
    assert g[E01][F] == -1.0


def test_matching_validity():
    assert is_morse_matching(T, Matching(((F, E01),))).ok
    bad = is_morse_matching(T, Matching(((F, CellId(1, 5)),)))
    assert not bad.ok
    c = BasedChainComplex.from_dense((("a", "b"), ("x",)), {1: np.array([[1.0], [0.0]])})
    r = is_morse_matching(c, Matching(((CellId(1, 0), CellId(0, 1)),)))
    assert "non-invertible pair" in {v.check for v in r.violations}


def test_four_cycle_alternating_matching_is_cyclic():
    C = cycle_graph(4)
    v = [C.cell(0, f"v{i}") for i in range(4)]
    e = [C.cell(1, name) for name in ("e01", "e12", "e23", "e03")]
    M = Matching(((e[0], v[1]), (e[1], v[2]), (e[2], v[3]), (e[3], v[0])))
    r = is_morse_matching(C, M)
    cyc = [x for x in r.violations if x.check == "cycle"]
    assert cyc and len(cyc[0].location) >= 4


def test_summed_index_examples():
    M = Matching(((F, E01),))
    assert summed_index(T, M, E01, E01) == 1.0
    assert summed_index(T, M, E01, E02) == 1.0
    assert summed_index(T, M, CellId(0, 0), CellId(0, 1)) == 0.0


def test_reduce_empty_matching_is_identity():
    r = reduce(T, Matching())
    assert r.reduced.dims == T.dims
    for n in range(3):
        np.testing.assert_array_equal(r.psi[n], np.eye(T.dim(n)))
        assert not r.h[n].any()


def test_reduce_single_pair_hand_values():
    r = reduce(T, Matching(((F, E01),)))
    assert r.reduced.cells == (("v0", "v1", "v2"), ("e02", "e12"), ())
    np.testing.assert_array_equal(r.psi[1][:, E01.index], [1.0, -1.0])     # e02 - e12
    assert r.psi[2].shape == (0, 1)
    np.testing.assert_array_equal(r.phi[1], np.eye(3)[:, [1, 2]])
    assert r.h[1][F.index, E01.index] == -1.0
    assert np.count_nonzero(r.h[1]) == 1
    assert r.check()


def test_single_pairing_matches_reduce():
    for beta in (E01, E02, E12):
        a, b = reduce(T, Matching(((F, beta),))), single_pairing_reduce(T, F, beta)
        for n in range(3):
            np.testing.assert_allclose(a.psi[n], b.psi[n], atol=1e-12)
            np.testing.assert_allclose(a.phi[n], b.phi[n], atol=1e-12)
            np.testing.assert_allclose(a.h[n], b.h[n], atol=1e-12)
        for n in (1, 2):
            np.testing.assert_allclose(a.reduced.d(n), b.reduced.d(n), atol=1e-12)


def test_single_pairing_coefficient_minus_two():
    # square with a 2-cell glued along e0 with degree -2; the update divides by -2
    d1 = np.array([[-1, 0, 1], [1, -1, 0], [0, 1, -1]], dtype=float)
    d2 = np.array([[-2.0], [-2.0], [-2.0]])
    C = BasedChainComplex.from_dense((("a", "b", "c"), ("x", "y", "z"), ("f",)), {1: d1, 2: d2})
    r = single_pairing_reduce(C, CellId(2, 0), CellId(1, 0))
    assert r.h[1][0, 0] == pytest.approx(0.5)
    np.testing.assert_allclose(r.psi[1][:, 0], [-1.0, -1.0])
    assert r.check()


def test_only_face_leaves_boundary_untouched():
    r = single_pairing_reduce(interval(), CellId(1, 0), CellId(0, 1))
    assert r.reduced.dims == (1, 0)
    c = BasedChainComplex.from_dense((("a",), ("x", "y"), ("f",)),
                                     {1: np.zeros((1, 2)), 2: np.array([[1.0], [0.0]])})
    r = single_pairing_reduce(c, CellId(2, 0), CellId(1, 0))
    np.testing.assert_array_equal(r.reduced.d(1), [[0.0]])


def test_zero_incidence_rejected():
    with pytest.raises(MatchingError):
        single_pairing_reduce(T, CellId(1, 0), CellId(0, 2))


def test_sequential_two_pairs_on_triangle():
    S = SequentialMatching((Matching(((F, E01),)), Matching(((E02, CellId(0, 0)),))))
    r = sequential_reduce(T, S)
    assert r.reduced.dims == (2, 1, 0)
    assert r.check()
    single = sequential_reduce(T, SequentialMatching((Matching(((F, E01),)),)))
    np.testing.assert_array_equal(single.psi[1], reduce(T, Matching(((F, E01),))).psi[1])


def test_sequential_stage_must_be_critical():
    S = SequentialMatching((Matching(((F, E01),)), Matching(((E01, CellId(0, 0)),))))
    with pytest.raises(MatchingError):
        sequential_reduce(T, S)


def test_adjoint_identity_weights_is_transpose():
    M = Matching(((F, E01),))
    a = adjoint_retraction(T, M)
    r = a.retraction
    for n in range(3):
        np.testing.assert_array_equal(a.psi_dag[n], r.psi[n].T)
        np.testing.assert_array_equal(a.phi_dag[n], r.phi[n].T)
    assert a.h_dag[1][E01.index, F.index] == -1.0
    assert max(a.residuals().values()) <= 1e-12


def test_adjoint_refused_on_non_orthogonal_base():
    w = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(NonOrthogonalBaseError):
        adjoint_retraction(T.with_weights({1: w}), Matching(((F, E01),)))


def test_pairing_reducer_matches_sequential():
    rng = np.random.default_rng(11)
    for C in small_complexes_with_triangles(rng, 10, max_cells=20):
        pr = PairingReducer(C, track_maps=True)
        pairs = []
        for d in (2, 1):
            while pr.available(d) and len(pairs) < 4:
                c = min(k for k, col in pr.cols[d].items() if col)
                b = min(pr.cols[d][c])
                pairs.append((CellId(d, c), CellId(d - 1, b)))
                pr.pair(*pairs[-1])
        ref = sequential_reduce(C, SequentialMatching(tuple(Matching((p,)) for p in pairs)))
        got = pr.retraction()
        assert got.critical == ref.critical
        for n in range(C.max_degree + 1):
            np.testing.assert_allclose(got.psi[n], ref.psi[n], atol=1e-12)
            np.testing.assert_allclose(got.phi[n], ref.phi[n], atol=1e-12)
            np.testing.assert_allclose(got.h[n], ref.h[n], atol=1e-12)
        assert got.check()


def test_gamma_dp_equals_path_enumeration():
    rng = np.random.default_rng(2024)
    for C in small_complexes_with_triangles(rng, 25):
        M = random_matching(C, rng)
        G = summed_index_matrix(C, M)
        offs = np.cumsum([0] + list(C.dims))
        for n in range(C.max_degree + 1):
            for m in range(C.max_degree + 1):
                for i in range(C.dim(n)):
                    for j in range(C.dim(m)):
                        a, b = CellId(n, i), CellId(m, j)
                        assert abs(G[offs[n] + i, offs[m] + j] - brute_gamma(C, M.pairs, a, b)) <= 1e-12


def test_reduce_equals_enumerated_maps():
    rng = np.random.default_rng(7)
    for C in small_complexes_with_triangles(rng, 10):
        M = random_matching(C, rng)
        r = reduce(C, M)
        psi, phi, h, bd = brute_maps(C, M.pairs)
        for n in range(C.max_degree + 1):
            np.testing.assert_allclose(r.psi[n], psi[n], atol=1e-12)
            np.testing.assert_allclose(r.phi[n], phi[n], atol=1e-12)
            np.testing.assert_allclose(r.h[n], h[n], atol=1e-12)
        for n in range(1, C.max_degree + 1):
            np.testing.assert_allclose(r.reduced.d(n), bd[n], atol=1e-12)


def test_adjoint_flow_equals_w_adjoint_weighted():
    rng = np.random.default_rng(9)
    for C in small_complexes_with_triangles(rng, 10, max_cells=16):
        C = C.with_weights({n: np.diag(rng.uniform(0.5, 3.0, C.dim(n))) for n in range(C.max_degree + 1)})
        M = random_matching(C, rng)
        a = adjoint_retraction(C, M)
        f = adjoint_flow(C, M)
        for n in range(C.max_degree + 1):
            np.testing.assert_allclose(f["psi_dag"][n], a.psi_dag[n], atol=1e-12)
            np.testing.assert_allclose(f["phi_dag"][n], a.phi_dag[n], atol=1e-12)
            if n < C.max_degree:
                np.testing.assert_allclose(f["h_dag"][n], a.h_dag[n], atol=1e-12)
        assert max(a.residuals().values()) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(complexes(), st.integers(0, 2**32 - 1))
def test_random_matching_retraction_invariants(C, seed):
    M = random_matching(C, np.random.default_rng(seed))
    assert is_morse_matching(C, M).ok
    r = reduce(C, M)
    assert r.check(), r.residuals()
    assert betti_numbers(r.reduced) == exact_betti(C)


@settings(max_examples=30, deadline=None)
@given(complexes(), st.integers(0, 2**32 - 1))
def test_composition_is_a_retraction(C, seed):
    rng = np.random.default_rng(seed)
    first = reduce(C, random_matching(C, rng, max_pairs=2))
    second = reduce(first.reduced, random_matching(first.reduced, rng, max_pairs=2))
    r = compose(first, second)
    assert r.check(), r.residuals()


def test_hodge_matching_reduces_to_homology():
    hm = hodge_matching(T)
    assert hm.retraction.reduced.dims == (1, 0, 0)
    assert identity_retraction(T).check()
