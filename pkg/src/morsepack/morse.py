"""Algebraic Morse matchings and the reductions they induce.

A matching pairs a cell ``alpha`` of degree d with a face ``beta`` of degree d-1.  The
matching graph has an edge alpha -> beta (weight d_{beta,alpha}) for every non-zero
incidence; matched edges are reversed and carry weight -1/d_{beta,alpha}.  Summed
indices are path sums in that DAG and assemble into the retraction maps.
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .complex import (BasedChainComplex, CellId, ValidationReport, Violation, adjoint)

RESIDUAL_RTOL = 1e-9


class MatchingError(ValueError):
    pass


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[CellId, CellId], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((CellId(*a), CellId(*b)) for a, b in self.pairs))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def matched(self) -> set[CellId]:
        return {c for p in self.pairs for c in p}

    def down(self, n: int) -> list[CellId]:
        """n-cells paired with a face (the M_n^- cells)."""
        return [a for a, _ in self.pairs if a.degree == n]

    def up(self, n: int) -> list[CellId]:
        """n-cells paired with a coface (the M_n^+ cells)."""
        return [b for _, b in self.pairs if b.degree == n]

    def critical(self, complex: BasedChainComplex) -> list[list[int]]:
        m = self.matched
        return [[i for i in range(complex.dim(n)) if CellId(n, i) not in m]
                for n in range(complex.max_degree + 1)]

    def to_json(self, complex: BasedChainComplex) -> dict:
        return {"pairs": [[complex.name(a), complex.name(b)] for a, b in self.pairs]}

    @classmethod
    def from_json(cls, complex: BasedChainComplex, data: dict) -> "Matching":
        pairs = []
        for a, b in data["pairs"]:
            alpha = _find_by_name(complex, a)
            pairs.append((alpha, complex.cell(alpha.degree - 1, b)))
        return cls(tuple(pairs))


def _find_by_name(complex: BasedChainComplex, name: str) -> CellId:
    found = [n for n in range(complex.max_degree + 1) if name in complex.cells[n]]
    if len(found) != 1:
        raise MatchingError(f"cell name {name!r} matches {len(found)} degrees")
    return complex.cell(found[0], name)


@dataclass(frozen=True)
class SequentialMatching:
    """Stages of single or multiple pairs; cells are named by their id in the source complex."""
    stages: tuple[Matching, ...] = ()

    def __len__(self):
        return len(self.stages)

    @property
    def pairs(self) -> list[tuple[CellId, CellId]]:
        return [p for m in self.stages for p in m.pairs]

    def flat(self) -> Matching:
        return Matching(tuple(self.pairs))


# ---------------------------------------------------------------------------
# matching graph


class _Index:
    def __init__(self, complex: BasedChainComplex):
        self.offsets = np.concatenate([[0], np.cumsum(complex.dims)]).astype(int)
        self.n = int(self.offsets[-1])

    def g(self, c: CellId) -> int:
        return int(self.offsets[c.degree] + c.index)

    def cell(self, g: int) -> CellId:
        d = int(np.searchsorted(self.offsets, g, side="right") - 1)
        return CellId(d, g - int(self.offsets[d]))

    def block(self, n: int) -> slice:
        return slice(int(self.offsets[n]), int(self.offsets[n + 1]))


def matching_graph(complex: BasedChainComplex, M: Matching | None = None) -> dict[CellId, dict[CellId, float]]:
    """Adjacency {source: {target: edge weight}} of the graph of the complex.

    Without a matching the weight of alpha -> beta is d_{beta,alpha}.  Pairs of ``M`` are
    reversed into beta -> alpha with weight -1/d_{beta,alpha}.
    """
    matched = set(M.pairs) if M else set()
    graph: dict[CellId, dict[CellId, float]] = {
        CellId(n, i): {} for n in range(complex.max_degree + 1) for i in range(complex.dim(n))}
    for n in range(1, complex.max_degree + 1):
        mat = complex.boundary[n].tocoo()
        for r, c, v in zip(mat.row, mat.col, mat.data):
            alpha, beta = CellId(n, int(c)), CellId(n - 1, int(r))
            if (alpha, beta) in matched:
                graph[beta][alpha] = -1.0 / float(v)
            else:
                graph[alpha][beta] = float(v)
    return graph


def _order(graph) -> list:
    """Topological order with successors first; raises graphlib.CycleError."""
    return list(graphlib.TopologicalSorter({v: tuple(w) for v, w in graph.items()}).static_order())


def is_morse_matching(complex: BasedChainComplex, M: Matching) -> ValidationReport:
    out = []
    seen: dict[CellId, tuple] = {}
    for a, b in M.pairs:
        if not (complex.has_cell(a) and complex.has_cell(b)):
            out.append(Violation("unknown-cell", (a, b), float("nan")))
            continue
        if b.degree != a.degree - 1:
            out.append(Violation("degree-mismatch", (a, b), float(a.degree - b.degree)))
        for c in (a, b):
            if c in seen:
                out.append(Violation("cell-reused", (c, seen[c], (a, b)), 1.0))
            seen[c] = (a, b)
        if complex.coefficient(a, b) == 0.0:
            out.append(Violation("non-invertible pair", (a, b), 0.0))
    if out:
        return ValidationReport(tuple(out))
    try:
        _order(matching_graph(complex, M))
    except graphlib.CycleError as exc:
        cycle = tuple(exc.args[1])
        out.append(Violation("cycle", cycle, float(len(cycle) - 1)))
    return ValidationReport(tuple(out))


def _require_valid(complex, M):
    report = is_morse_matching(complex, M)
    if not report.ok:
        v = report.violations[0]
        raise MatchingError(f"invalid Morse matching: {v.check} at {v.location}")


def summed_index(complex: BasedChainComplex, M: Matching, alpha: CellId, beta: CellId) -> float:
    """Sum over all directed paths alpha -> beta of the products of edge weights."""
    graph = matching_graph(complex, M)
    memo: dict[CellId, float] = {}
    stack = [(alpha, False)]
    while stack:
        v, expanded = stack.pop()
        if v in memo:
            continue
        if expanded:
            memo[v] = (1.0 if v == beta else 0.0) + sum(c * memo[w] for w, c in graph[v].items())
            continue
        stack.append((v, True))
        stack.extend((w, False) for w in graph[v] if w not in memo)
    return memo[alpha]


def summed_index_matrix(complex: BasedChainComplex, M: Matching) -> np.ndarray:
    """Dense G with G[g(alpha), g(beta)] = Gamma_{beta,alpha} in global cell numbering."""
    idx = _Index(complex)
    graph = matching_graph(complex, M)
    G = np.zeros((idx.n, idx.n))
    for v in _order(graph):
        row = G[idx.g(v)]
        row[idx.g(v)] = 1.0
        for w, c in graph[v].items():
            row += c * G[idx.g(w)]
    return G


# ---------------------------------------------------------------------------
# retractions


def _rel(residual: np.ndarray, *terms: np.ndarray) -> float:
    if residual.size == 0:
        return 0.0
    scale = max([1.0] + [float(np.max(np.abs(t))) for t in terms if t.size])
    return float(np.max(np.abs(residual))) / scale


@dataclass(frozen=True, eq=False)
class Retraction:
    """Deformation retract (psi, phi, h) of ``source`` onto ``reduced``.

    ``psi[n]``: C_n -> D_n, ``phi[n]``: D_n -> C_n, ``h[n]``: C_n -> C_{n+1}.  The
    homotopy satisfies d h + h d = phi psi - 1.  ``critical[n]`` lists the source
    indices of the n-cells kept in ``reduced``.
    """
    source: BasedChainComplex
    reduced: BasedChainComplex
    psi: dict[int, np.ndarray]
    phi: dict[int, np.ndarray]
    h: dict[int, np.ndarray]
    critical: tuple[tuple[int, ...], ...]
    matching: SequentialMatching = field(default_factory=SequentialMatching)

    def projection(self, n: int) -> np.ndarray:
        return self.phi[n] @ self.psi[n]

    def residuals(self) -> dict[str, float]:
        C, D = self.source, self.reduced
        out = {"retract": 0.0, "psi_chain": 0.0, "phi_chain": 0.0, "homotopy": 0.0}
        for n in range(C.max_degree + 1):
            eye = np.eye(D.dim(n))
            out["retract"] = max(out["retract"], _rel(self.psi[n] @ self.phi[n] - eye, eye))
            if n >= 1:
                a, b = self.psi[n - 1] @ C.d(n), D.d(n) @ self.psi[n]
                out["psi_chain"] = max(out["psi_chain"], _rel(a - b, a, b))
                a, b = self.phi[n - 1] @ D.d(n), C.d(n) @ self.phi[n]
                out["phi_chain"] = max(out["phi_chain"], _rel(a - b, a, b))
            up = C.d(n + 1) @ self.h[n]
            down = self.h[n - 1] @ C.d(n) if n >= 1 else np.zeros_like(up)
            target = self.projection(n) - np.eye(C.dim(n))
            out["homotopy"] = max(out["homotopy"], _rel(up + down - target, up, down, target))
        return out

    def check(self, rtol: float = RESIDUAL_RTOL) -> bool:
        return all(v <= rtol for v in self.residuals().values())

    def to_json(self) -> dict:
        C, D = self.source, self.reduced
        deg = range(C.max_degree + 1)
        return {
            "source_cells": {str(n): list(C.cells[n]) for n in deg},
            "reduced_cells": {str(n): list(D.cells[n]) for n in deg},
            "reduced_boundary": {str(n): D.d(n).tolist() for n in range(1, D.max_degree + 1)},
            "psi": {str(n): self.psi[n].tolist() for n in deg},
            "phi": {str(n): self.phi[n].tolist() for n in deg},
            "h": {str(n): self.h[n].tolist() for n in deg},
        }


def _reduced_complex(complex: BasedChainComplex, critical, boundary: dict[int, np.ndarray]) -> BasedChainComplex:
    cells = tuple(tuple(complex.cells[n][i] for i in crit) for n, crit in enumerate(critical))
    w = {}
    for n, crit in enumerate(critical):
        d = complex.diagonal_weights(n)
        w[n] = d[list(crit)] if d is not None else complex.W(n)[np.ix_(crit, crit)]
    return BasedChainComplex(cells, {n: sp.csc_matrix(b) for n, b in boundary.items()}, w)


def identity_retraction(complex: BasedChainComplex) -> Retraction:
    K = complex.max_degree
    eye = {n: np.eye(complex.dim(n)) for n in range(K + 1)}
    h = {n: np.zeros((complex.dim(n + 1), complex.dim(n))) for n in range(-1, K + 1)}
    return Retraction(complex, complex, dict(eye), dict(eye), h,
                      tuple(tuple(range(complex.dim(n))) for n in range(K + 1)))


def reduce(complex: BasedChainComplex, M: Matching) -> Retraction:
    """Morse complex and retraction maps assembled from summed indices."""
    _require_valid(complex, M)
    idx = _Index(complex)
    G = summed_index_matrix(complex, M)
    crit = M.critical(complex)
    K = complex.max_degree
    psi, phi, h, bd = {}, {}, {}, {}
    for n in range(K + 1):
        blk = G[idx.block(n), idx.block(n)]          # [alpha, beta] = Gamma_{beta,alpha}
        psi[n] = blk[:, crit[n]].T
        phi[n] = blk[crit[n], :].T
        if n + 1 <= K:
            h[n] = G[idx.block(n), idx.block(n + 1)].T
        else:
            h[n] = np.zeros((0, complex.dim(n)))
        if n >= 1:
            bd[n] = G[idx.block(n), idx.block(n - 1)][np.ix_(crit[n], crit[n - 1])].T
    h[-1] = np.zeros((complex.dim(0), 0))
    reduced = _reduced_complex(complex, crit, bd)
    return Retraction(complex, reduced, psi, phi, h, tuple(tuple(c) for c in crit),
                      SequentialMatching((M,)))


def single_pairing_reduce(complex: BasedChainComplex, alpha: CellId, beta: CellId) -> Retraction:
    """Closed-form reduction of a single pair alpha -> beta."""
    alpha, beta = CellId(*alpha), CellId(*beta)
    if beta.degree != alpha.degree - 1:
        raise MatchingError(f"{beta} is not of degree {alpha.degree} - 1")
    a = complex.coefficient(alpha, beta)
    if a == 0.0:
        raise MatchingError(f"zero incidence between {alpha} and {beta}")
    d, K = alpha.degree, complex.max_degree
    crit = [list(range(complex.dim(n))) for n in range(K + 1)]
    crit[d].remove(alpha.index)
    crit[d - 1].remove(beta.index)

    D = complex.d(d)
    col_alpha, row_beta = D[:, alpha.index], D[beta.index, :]
    bd = {}
    for n in range(1, K + 1):
        mat = complex.d(n)
        if n == d:
            mat = mat - np.outer(col_alpha, row_beta) / a
        bd[n] = mat[np.ix_(crit[n - 1], crit[n])]

    psi = {n: np.eye(complex.dim(n))[crit[n], :] for n in range(K + 1)}
    phi = {n: np.eye(complex.dim(n))[:, crit[n]] for n in range(K + 1)}
    h = {n: np.zeros((complex.dim(n + 1), complex.dim(n))) for n in range(-1, K + 1)}
    full = np.eye(complex.dim(d - 1))
    full[:, beta.index] = -col_alpha / a
    full[beta.index, beta.index] = 0.0
    psi[d - 1] = full[crit[d - 1], :]
    phi_d = np.eye(complex.dim(d))
    phi_d[alpha.index, :] = -row_beta / a
    phi_d[alpha.index, alpha.index] = 0.0
    phi[d] = phi_d[:, crit[d]]
    h[d - 1][alpha.index, beta.index] = -1.0 / a
    reduced = _reduced_complex(complex, crit, bd)
    return Retraction(complex, reduced, psi, phi, h, tuple(tuple(c) for c in crit),
                      SequentialMatching((Matching(((alpha, beta),)),)))


def compose(first: Retraction, second: Retraction) -> Retraction:
    """Retraction of first.source onto second.reduced, given second.source == first.reduced."""
    C, K = first.source, first.source.max_degree
    psi = {n: second.psi[n] @ first.psi[n] for n in range(K + 1)}
    phi = {n: first.phi[n] @ second.phi[n] for n in range(K + 1)}
    h = {-1: np.zeros((C.dim(0), 0))}
    for n in range(K + 1):
        h[n] = first.h[n] + first.phi[n + 1] @ second.h[n] @ first.psi[n] if n < K else first.h[n]
    crit = tuple(tuple(first.critical[n][i] for i in second.critical[n]) for n in range(K + 1))
    stages = first.matching.stages + tuple(
        Matching(tuple((_lift(first, a), _lift(first, b)) for a, b in m.pairs))
        for m in second.matching.stages)
    return Retraction(C, second.reduced, psi, phi, h, crit, SequentialMatching(stages))


def _lift(r: Retraction, c: CellId) -> CellId:
    return CellId(c.degree, r.critical[c.degree][c.index])


def sequential_reduce(complex: BasedChainComplex, S: SequentialMatching) -> Retraction:
    """Compose the stage retractions; stage cells are ids in the source complex."""
    current = identity_retraction(complex)
    for j, stage in enumerate(S.stages):
        local = []
        for a, b in stage.pairs:
            try:
                local.append((_localize(current, a), _localize(current, b)))
            except ValueError:
                raise MatchingError(f"stage {j}: cell {a} or {b} is not critical after stage {j - 1}") from None
        m = Matching(tuple(local))
        step = single_pairing_reduce(current.reduced, *m.pairs[0]) if len(m) == 1 else reduce(current.reduced, m)
        current = compose(current, step)
    return current


def _localize(r: Retraction, c: CellId) -> CellId:
    return CellId(c.degree, r.critical[c.degree].index(c.index))


def random_matching(complex: BasedChainComplex, rng: np.random.Generator, *,
                    degrees: Iterable[int] | None = None, max_pairs: int | None = None) -> Matching:
    """Greedy random Morse matching: shuffled incidences, kept while acyclic."""
    degrees = set(range(1, complex.max_degree + 1) if degrees is None else degrees)
    edges = []
    for n in sorted(degrees):
        mat = complex.boundary[n].tocoo()
        edges += [(CellId(n, int(c)), CellId(n - 1, int(r))) for r, c in zip(mat.row, mat.col)]
    order = rng.permutation(len(edges))
    pairs: list = []
    used: set = set()
    for k in order:
        if max_pairs is not None and len(pairs) >= max_pairs:
            break
        a, b = edges[k]
        if a in used or b in used:
            continue
        trial = Matching(tuple(pairs + [(a, b)]))
        try:
            _order(matching_graph(complex, trial))
        except graphlib.CycleError:
            continue
        pairs.append((a, b))
        used.update((a, b))
    return Matching(tuple(pairs))


# ---------------------------------------------------------------------------
# adjoints


class NonOrthogonalBaseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AdjointRetraction:
    """W-adjoints of a retraction.  ``h_dag[n]`` is the adjoint of ``h[n]``, C_{n+1} -> C_n."""
    retraction: Retraction
    psi_dag: dict[int, np.ndarray]
    phi_dag: dict[int, np.ndarray]
    h_dag: dict[int, np.ndarray]

    def residuals(self) -> dict[str, float]:
        from .complex import adjoint_boundary
        C = self.retraction.source
        out = {"retract": 0.0, "homotopy": 0.0}
        for n in range(C.max_degree + 1):
            eye = np.eye(self.retraction.reduced.dim(n))
            out["retract"] = max(out["retract"], _rel(self.phi_dag[n] @ self.psi_dag[n] - eye, eye))
            up = self.h_dag[n] @ adjoint_boundary(C, n + 1) if n < C.max_degree else np.zeros((C.dim(n),) * 2)
            down = adjoint_boundary(C, n) @ self.h_dag[n - 1] if n >= 1 else np.zeros_like(up)
            target = self.psi_dag[n] @ self.phi_dag[n] - np.eye(C.dim(n))
            out["homotopy"] = max(out["homotopy"], _rel(up + down - target, up, down, target))
        return out


def _require_orthogonal(complex: BasedChainComplex):
    if not complex.is_orthogonal_base:
        raise NonOrthogonalBaseError(
            "adjoint flow needs an orthogonal base (diagonal inner products); "
            "this complex has a non-diagonal Gram matrix")


def adjoint_retraction(complex: BasedChainComplex, M: Matching | Retraction) -> AdjointRetraction:
    """Adjoint maps W_src^{-1} f^T W_dst of psi, phi and h."""
    _require_orthogonal(complex)
    r = M if isinstance(M, Retraction) else reduce(complex, M)
    C, D = r.source, r.reduced
    K = C.max_degree
    psi_dag = {n: adjoint(r.psi[n], C.W(n), D.W(n)) for n in range(K + 1)}
    phi_dag = {n: adjoint(r.phi[n], D.W(n), C.W(n)) for n in range(K + 1)}
    h_dag = {n: adjoint(r.h[n], C.W(n), C.W(n + 1)) for n in range(K)}
    h_dag[K] = np.zeros((C.dim(K), 0))
    h_dag[-1] = np.zeros((0, C.dim(0)))
    return AdjointRetraction(r, psi_dag, phi_dag, h_dag)


def adjoint_flow(complex: BasedChainComplex, M: Matching) -> dict[str, dict[int, np.ndarray]]:
    """Adjoint maps from adjoint path sums, following each path backwards.

    An edge of weight c from x to y contributes c * w_y / w_x to the adjoint flow y -> x,
    with w the diagonal weights; summing over paths gives Gamma^dagger.
    """
    _require_orthogonal(complex)
    _require_valid(complex, M)
    idx = _Index(complex)
    w = np.concatenate([np.diag(complex.W(n)) for n in range(complex.max_degree + 1)])
    graph = matching_graph(complex, M)
    opposite: dict[CellId, dict[CellId, float]] = {v: {} for v in graph}
    for x, succ in graph.items():
        for y, c in succ.items():
            opposite[y][x] = c * w[idx.g(y)] / w[idx.g(x)]
    G = np.zeros((idx.n, idx.n))        # G[g(beta), g(alpha)] = Gamma^dagger_{beta,alpha}
    for v in _order(opposite):
        row = G[idx.g(v)]
        row[idx.g(v)] = 1.0
        for u, c in opposite[v].items():
            row += c * G[idx.g(u)]
    crit = M.critical(complex)
    K = complex.max_degree
    out = {"psi_dag": {}, "phi_dag": {}, "h_dag": {}, "boundary_dag": {}}
    for n in range(K + 1):
        blk = G[idx.block(n), idx.block(n)]     # [beta, alpha]: C_beta -> C_alpha
        out["phi_dag"][n] = blk[:, crit[n]].T
        out["psi_dag"][n] = blk[crit[n], :].T
        if n < K:
            out["h_dag"][n] = G[idx.block(n + 1), idx.block(n)].T
        if n >= 1:
            out["boundary_dag"][n] = G[idx.block(n - 1), idx.block(n)][np.ix_(crit[n - 1], crit[n])].T
    return out


# ---------------------------------------------------------------------------
# incremental single pairings


class PairingReducer:
    """Iterated single pairings on a sparse working copy of the boundaries.

    Cells keep their source indices throughout.  With ``track_maps`` the composite psi,
    phi and h are maintained as dense source-sized matrices by rank-one updates.
    """

    def __init__(self, complex: BasedChainComplex, track_maps: bool = False):
        self.source = complex
        K = self.K = complex.max_degree
        self.alive = [dict.fromkeys(range(complex.dim(n)), True) for n in range(K + 1)]
        self.cols: list[dict[int, dict[int, float]]] = [{} for _ in range(K + 2)]
        self.rows: list[dict[int, dict[int, float]]] = [{} for _ in range(K + 2)]
        for n in range(1, K + 1):
            cols = {c: {} for c in range(complex.dim(n))}
            rows = {r: {} for r in range(complex.dim(n - 1))}
            mat = complex.boundary[n]
            for c in range(mat.shape[1]):
                for k in range(mat.indptr[c], mat.indptr[c + 1]):
                    r, v = int(mat.indices[k]), float(mat.data[k])
                    cols[c][r] = v
                    rows[r][c] = v
            self.cols[n], self.rows[n] = cols, rows
        self.pairs: list[tuple[CellId, CellId]] = []
        self.changed: dict[int, set[int]] = {}   # degree -> columns rewritten by the last pair
        self.track = track_maps
        if track_maps:
            self.psi = {n: np.eye(complex.dim(n)) for n in range(K + 1)}
            self.phi = {n: np.eye(complex.dim(n)) for n in range(K + 1)}
            self.h = {n: np.zeros((complex.dim(n + 1), complex.dim(n))) for n in range(K + 1)}

    def coefficient(self, alpha: CellId, beta: CellId) -> float:
        if not 1 <= alpha.degree <= self.K:
            return 0.0
        return self.cols[alpha.degree].get(alpha.index, {}).get(beta.index, 0.0)

    def available(self, degree: int) -> bool:
        return any(self.cols[degree].values()) if 1 <= degree <= self.K else False

    def pair(self, alpha: CellId, beta: CellId) -> None:
        d = alpha.degree
        cols, rows = self.cols[d], self.rows[d]
        a = cols[alpha.index].get(beta.index, 0.0)
        if a == 0.0:
            raise MatchingError(f"zero incidence between {alpha} and {beta}")
        col_a = dict(cols[alpha.index])
        row_b = dict(rows[beta.index])
        if self.track:
            self._update_maps(d, alpha.index, beta.index, a, col_a, row_b)
        self.changed = {d: set()}
        for sigma, c_bs in row_b.items():
            if sigma == alpha.index:
                continue
            f = c_bs / a
            col = cols[sigma]
            for tau, c_ta in col_a.items():
                if tau == beta.index:
                    continue
                old = col.get(tau, 0.0)
                new = old - f * c_ta
                if abs(new) <= 1e-12 * max(abs(old), abs(f * c_ta)):
                    col.pop(tau, None)
                    rows[tau].pop(sigma, None)
                else:
                    col[tau] = new
                    rows[tau][sigma] = new
            self.changed[d].add(sigma)
        self._drop_col(d, alpha.index)
        self._drop_row(d, beta.index)
        if d - 1 >= 1:
            self._drop_col(d - 1, beta.index)
        if d + 1 <= self.K:
            self._drop_row(d + 1, alpha.index)
        del self.alive[d][alpha.index]
        del self.alive[d - 1][beta.index]
        self.pairs.append((alpha, beta))

    def _drop_col(self, n, c):
        for r in self.cols[n].pop(c, {}):
            self.rows[n][r].pop(c, None)

    def _drop_row(self, n, r):
        for c in self.rows[n].pop(r, {}):
            self.cols[n][c].pop(r, None)
            self.changed.setdefault(n, set()).add(c)

    def _update_maps(self, d, ai, bi, a, col_a, row_b):
        phi_d_alpha = self.phi[d][:, ai].copy()
        psi_beta = self.psi[d - 1][bi, :].copy()
        self.h[d - 1] += np.outer(phi_d_alpha, psi_beta) * (-1.0 / a)
        for tau, c in col_a.items():
            if tau != bi:
                self.psi[d - 1][tau, :] -= (c / a) * psi_beta
        self.psi[d - 1][bi, :] = 0.0
        self.psi[d][ai, :] = 0.0
        for eta, c in row_b.items():
            if eta != ai:
                self.phi[d][:, eta] -= (c / a) * phi_d_alpha
        self.phi[d][:, ai] = 0.0
        self.phi[d - 1][:, bi] = 0.0

    def critical(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(sorted(a)) for a in self.alive)

    def boundary_sparse(self, n: int) -> sp.csc_matrix:
        crit = self.critical()
        ri = {r: i for i, r in enumerate(crit[n - 1])}
        ci = {c: i for i, c in enumerate(crit[n])}
        rows, cols, vals = [], [], []
        for c, col in self.cols[n].items():
            for r, v in col.items():
                rows.append(ri[r])
                cols.append(ci[c])
                vals.append(v)
        return sp.csc_matrix((vals, (rows, cols)), shape=(len(ri), len(ci)))

    def boundary_dense(self, n: int) -> np.ndarray:
        return self.boundary_sparse(n).toarray()

    def to_complex(self) -> BasedChainComplex:
        return _reduced_complex(self.source, self.critical(),
                                {n: self.boundary_sparse(n) for n in range(1, self.K + 1)})

    def retraction(self) -> Retraction:
        if not self.track:
            raise RuntimeError("maps were not tracked")
        crit = self.critical()
        psi = {n: self.psi[n][list(crit[n]), :] for n in range(self.K + 1)}
        phi = {n: self.phi[n][:, list(crit[n])] for n in range(self.K + 1)}
        h = dict(self.h)
        h[-1] = np.zeros((self.source.dim(0), 0))
        seq = SequentialMatching(tuple(Matching((p,)) for p in self.pairs))
        return Retraction(self.source, self.to_complex(), psi, phi, h, crit, seq)
