"""End-to-end acceptance checks, one test per criterion, at the stated tolerances."""

import statistics
import time

import numpy as np
import pytest

from morsepack.complex import (
    CellId,
    Signal,
    adjoint,
    betti_numbers,
    filled_triangle,
    hollow_triangle,
    inner_product,
    interval,
    norm,
    validate,
)
from morsepack.harness import ExperimentSpec, generate_grid_complex, generate_signal, run_experiment
from morsepack.hodge import hodge_decompose, hodge_matching, laplacian
from morsepack.morse import compose, random_matching, reduce, single_pairing_reduce, summed_index_matrix
from morsepack.morsify import morsify, pair_counts, reconstruction_operator
from morsepack.optimize import (
    OptimizerConfig,
    free_reduce,
    full_reduce,
    k_optimal_pairings,
    pairing_losses,
    random_pairings,
    single_pairing_loss,
    topological_loss,
)

from acceptance_log import record
from oracles import (
    brute_gamma,
    exact_betti,
    exact_rank,
    proj_ker_boundary,
    proj_ker_coboundary,
    random_simplicial,
    random_weights,
    small_complexes_with_triangles,
)

HAND = (interval(), filled_triangle(), hollow_triangle())


def _grid(seed: int, max_side: int = 10, weighted: bool = False):
    rng = np.random.default_rng(seed)
    C, xy = generate_grid_complex(int(rng.integers(1, max_side + 1)), int(rng.integers(1, max_side + 1)), seed)
    if weighted:
        C = random_weights(C, rng, diagonal=True)
    return C, xy


def _free_trajectory(seed: int):
    """Optimal (2,1)-pairings on a weighted grid: never pairs a 1-cell down."""
    C, xy = _grid(seed, max_side=5, weighted=True)
    s = generate_signal(C, xy, "uniform", seed)
    t = k_optimal_pairings(C, s, OptimizerConfig(1, max(1, C.dim(2) // 2), seed, track_maps=True))
    return C, t.retraction


def test_criterion_1_structural():
    t0 = time.perf_counter()
    grids = [_grid(seed)[0] for seed in range(50)]
    valid = all(validate(C).ok for C in grids + list(HAND))
    worst, betti_ok = 0.0, True
    rng = np.random.default_rng(1)
    pool = [_grid(100 + i, max_side=4, weighted=bool(i % 2))[0] for i in range(40)] + list(HAND)
    for i in range(100):
        C = pool[i % len(pool)]
        r = reduce(C, random_matching(C, rng))
        worst = max(worst, *r.residuals().values())
        betti_ok &= betti_numbers(r.reduced) == exact_betti(C)
    elapsed = time.perf_counter() - t0
    ok = valid and worst <= 1e-9 and betti_ok and elapsed <= 30.0
    record(1, ok, f"validate={valid} max residual={worst:.1e} betti={betti_ok} time={elapsed:.1f}s")


def test_criterion_2_hodge():
    rng = np.random.default_rng(2)
    complexes = list(HAND) + [_grid(200 + i, max_side=5, weighted=bool(i % 2))[0] for i in range(15)]
    dec_err, bd, counts_ok = 0.0, 0.0, True
    for C in complexes:
        for n in range(C.max_degree + 1):
            s = C.signal(n, rng.normal(size=C.dim(n)))
            dec = hodge_decompose(C, s)
            parts = [dec.im_d.values, dec.ker.values, dec.im_dt.values]
            scale = max(1.0, norm(C, n, s.values))
            dec_err = max(dec_err, np.abs(sum(parts) - s.values).max() / scale)
            for i in range(3):
                for j in range(i + 1, 3):
                    dec_err = max(dec_err, abs(inner_product(C, n, parts[i], parts[j])) / scale ** 2)
        red = hodge_matching(C).retraction.reduced
        bd = max([bd] + [float(np.abs(red.d(n)).max(initial=0.0)) for n in range(1, red.max_degree + 1)])
        harmonic = tuple(int(np.sum(np.abs(np.linalg.eigvalsh(_sym(C, n))) < 1e-9)) for n in range(C.max_degree + 1))
        counts_ok &= red.dims == harmonic == exact_betti(C)
    ok = dec_err <= 1e-9 and bd <= 1e-9 and counts_ok
    record(2, ok, f"decomposition={dec_err:.1e} reduced boundary={bd:.1e} counts={counts_ok}")


def _sym(C, n):
    # W^(1/2) L W^(-1/2) is symmetric with the Laplacian's spectrum
    w = np.sqrt(np.diag(C.W(n)))
    return (w[:, None] * laplacian(C, n)) / w[None, :]


def test_criterion_3_gamma_oracle():
    rng = np.random.default_rng(3)
    worst, count = 0.0, 0
    for C in small_complexes_with_triangles(rng, 40, max_cells=12) + list(HAND):
        M = random_matching(C, rng)
        G = summed_index_matrix(C, M)
        offs = np.cumsum([0] + list(C.dims))
        for n in range(C.max_degree + 1):
            for m in range(C.max_degree + 1):
                for i in range(C.dim(n)):
                    for j in range(C.dim(m)):
                        ref = brute_gamma(C, M.pairs, CellId(n, i), CellId(m, j))
                        worst = max(worst, abs(G[offs[n] + i, offs[m] + j] - ref))
                        count += 1
    record(3, worst <= 1e-12, f"{count} entries, max deviation={worst:.1e}")


def test_criterion_4_reconstruction():
    rng = np.random.default_rng(4)
    fwd, adj = 0.0, 0.0
    for seed in range(20):
        C, r = _free_trajectory(seed)
        P1, P0 = proj_ker_coboundary(C, 1), proj_ker_boundary(C, 0)
        psi_d = adjoint(r.psi[0], C.W(0), r.reduced.W(0))
        phi_d = adjoint(r.phi[0], r.reduced.W(0), C.W(0))
        for _ in range(200):
            s = rng.normal(size=C.dim(1))
            fwd = max(fwd, norm(C, 1, P1 @ (r.projection(1) @ s - s)) / norm(C, 1, s))
            x = rng.normal(size=C.dim(0))
            adj = max(adj, norm(C, 0, P0 @ (psi_d @ phi_d @ x - x)) / norm(C, 0, x))
    witnesses = 0
    for seed in range(20):
        C, _ = _grid(400 + seed, max_side=4, weighted=bool(seed % 2))
        M = random_matching(C, np.random.default_rng(seed), degrees=[1], max_pairs=3)
        r = reduce(C, M)
        alpha = M.pairs[0][0]
        x = C.basis_signal(alpha).values
        gap = norm(C, 1, proj_ker_coboundary(C, 1) @ (r.projection(1) @ x - x)) / norm(C, 1, x)
        witnesses += gap >= 1e-6
    ok = fwd <= 1e-8 and adj <= 1e-8 and witnesses == 20
    record(4, ok, f"forward={fwd:.1e} adjoint={adj:.1e} witnesses={witnesses}/20")


def test_criterion_5_sparsification():
    rng = np.random.default_rng(5)
    off_worst, iso_worst = 0.0, 0.0
    for seed in range(20):
        C, r = _free_trajectory(seed)
        crit = set(r.critical[1])
        off = [i for i in range(C.dim(1)) if i not in crit]
        for _ in range(50):
            s = rng.normal(size=C.dim(1))
            out = r.projection(1) @ s
            off_worst = max(off_worst, np.abs(out[off]).max(initial=0.0) / norm(C, 1, s))
            x = rng.normal(size=len(crit))
            iso_worst = max(iso_worst, abs(norm(C, 1, r.phi[1] @ x) - norm(r.reduced, 1, x)) / norm(r.reduced, 1, x))
    ok = off_worst <= 1e-10 and iso_worst <= 1e-10
    record(5, ok, f"off-critical={off_worst:.1e} isometry={iso_worst:.1e}")


def test_criterion_6_morsification():
    rng = np.random.default_rng(6)
    op, closed, counts_ok, cases = 0.0, 0.0, True, 0
    retractions = []
    for i in range(15):
        C = random_weights(random_simplicial(rng, int(rng.integers(4, 7))), rng, diagonal=bool(i % 2))
        first = reduce(C, random_matching(C, rng, max_pairs=3))
        second = reduce(first.reduced, random_matching(first.reduced, rng, max_pairs=2))
        retractions.append(compose(first, second))
    retractions += [_free_trajectory(seed)[1] for seed in range(5)]
    for r in retractions:
        m = morsify(r)
        op = max(op, m.operator_residual())
        counts_ok &= m.pair_counts() == pair_counts(r)
        ops = reconstruction_operator(m)
        for n in range(r.source.max_degree + 1):
            if r.source.dim(n):
                closed = max(closed, np.abs(ops[n] - (np.eye(r.source.dim(n)) - r.projection(n))).max())
        cases += 1
    ok = op <= 1e-8 and counts_ok and closed <= 1e-9
    record(6, ok, f"{cases} retractions, operator={op:.1e} counts={counts_ok} closed form={closed:.1e}")


def test_criterion_7_convergence():
    steps_ok, free_ok = True, True
    rng = np.random.default_rng(7)
    for seed in range(20):
        C = _grid(700 + seed, max_side=4)[0] if seed % 2 else random_simplicial(rng, int(rng.integers(4, 8)))
        b = exact_betti(C)
        expected = sum(C.dim(n) - b[n] for n in range(C.max_degree + 1)) // 2
        r = full_reduce(C)
        steps_ok &= len(r.matching) == expected and r.reduced.dims == b
        for n in range(1, C.max_degree + 1):
            D = free_reduce(C, n).reduced
            rank_n = exact_rank(C.d(n)) if C.dim(n) and C.dim(n - 1) else 0
            free_ok &= D.dim(n) == b[n] + rank_n and D.dim(n - 1) == b[n - 1] + rank_n
            free_ok &= all(exact_rank(D.d(i)) == 0 for i in range(1, C.max_degree + 1)
                           if i != n and D.dim(i) and D.dim(i - 1))
    record(7, steps_ok and free_ok, f"step counts={steps_ok} free identities={free_ok}")


def _local(current, source, cell):
    return CellId(cell.degree, current.cells[cell.degree].index(source.cells[cell.degree][cell.index]))


def test_criterion_8_optimality_and_losses():
    argmin_ok, compact, slack, n_steps = True, 0.0, 0.0, 0
    for seed in range(12):
        C, xy = _grid(800 + seed, max_side=4, weighted=bool(seed % 2))
        s = generate_signal(C, xy, ("uniform", "height", "radial", "normal")[seed % 4], seed)
        for mode in (k_optimal_pairings, random_pairings):
            t = mode(C, s, OptimizerConfig(1, C.dim(2), seed))
            current, sig, prefix = C, s, 0.0
            for rec in t.records:
                alpha, beta = _local(current, C, rec.pair[0]), _local(current, C, rec.pair[1])
                if mode is k_optimal_pairings:
                    losses = pairing_losses(current, sig)
                    argmin_ok &= losses[(alpha, beta)] <= min(losses.values()) * (1 + 1e-12)
                step = single_pairing_reduce(current, alpha, beta)
                matrix = topological_loss(current, step.psi, step.phi, sig)
                scale = max(1.0, matrix)
                compact = max(compact, abs(single_pairing_loss(current, alpha, beta, sig) - matrix) / scale)
                prefix += rec.loss_conditional
                slack = max(slack, rec.loss_total - prefix)
                sig = Signal(1, step.psi[1] @ sig.values)
                current = step.reduced
                n_steps += 1
    ok = argmin_ok and compact <= 1e-12 and slack <= 1e-9
    record(8, ok, f"{n_steps} steps, argmin={argmin_ok} compact vs matrix={compact:.1e} bound slack={slack:.1e}")


def test_criterion_9_experiment():
    t0 = time.perf_counter()
    lines, ok = [], True
    for kind in ("uniform", "normal", "height", "radial"):
        spec = ExperimentSpec(grid_rows=8, grid_cols=8, signal_kind=kind, k_max=128, n_trials=10)
        rep = run_experiment(spec)
        opt, rnd = np.array(rep.modes["optimal"].mean), np.array(rep.modes["random"].mean)
        below = bool(np.all(opt <= rnd + 1e-12))
        gain = 1.0 - opt[-1] / rnd[-1]
        ok &= below and gain >= 0.2 and len(opt) == 128
        lines.append(f"{kind}: {100 * gain:.0f}% lower")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 60.0
    record(9, ok, f"{', '.join(lines)}; time={elapsed:.1f}s")


def _per_step(rows, cols, steps):
    C, xy = generate_grid_complex(rows, cols, 0)
    s = generate_signal(C, xy, "uniform", 0)
    return statistics.median(
        k_optimal_pairings(C, s, OptimizerConfig(1, steps, seed)).seconds_per_step for seed in range(5))


def test_criterion_10_scaling():
    _per_step(4, 4, 8)    # warm-up
    small, large = _per_step(16, 16, 256), _per_step(16, 32, 256)
    ratio = large / small
    record(10, ratio <= 2.5, f"per step {1e3 * small:.2f} ms -> {1e3 * large:.2f} ms, ratio={ratio:.2f}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
