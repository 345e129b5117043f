"""Topological reconstruction loss and greedy pairing strategies that keep it small.

A trajectory pairs (n+1)-cells with n-cells one at a time.  Each choice minimizes
|s_beta| / |[alpha:beta]| * ||d alpha||, the loss of that single collapse on the current
signal, and the signal is then pushed forward by psi.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .complex import BasedChainComplex, CellId, Signal, adjoint_boundary, dual_complex, norm
from .morse import (
    MatchingError,
    Matching,
    NonOrthogonalBaseError,
    PairingReducer,
    Retraction,
    SequentialMatching,
)

log = logging.getLogger(__name__)

TIE_RTOL = 1e-12
CSV_HEADER = "# morsepack-trajectory v1"
CSV_COLUMNS = ["step", "alpha", "beta", "loss_conditional", "loss_total", "dims_per_degree"]


class NoPairingError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    degree: int = 1
    steps: int = 1
    seed: int = 0
    mode: str = "optimal"          # optimal | random
    loss_side: str = "primal"      # primal | dual
    track_maps: bool = False

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.mode not in ("optimal", "random"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.loss_side not in ("primal", "dual"):
            raise ValueError(f"unknown loss side {self.loss_side!r}")


@dataclass(frozen=True)
class LossRecord:
    step: int
    pair: tuple[CellId, CellId]    # (alpha, beta), source cell ids
    loss_conditional: float
    loss_total: float
    dims: tuple[int, ...]


@dataclass
class Trajectory:
    complex: BasedChainComplex               # reduced complex
    matching: SequentialMatching              # one single-pair stage per step, source ids
    signal: Signal | list[Signal]             # compressed signal on the reduced complex
    records: list[LossRecord]
    stopped_early: bool = False
    retraction: Retraction | None = None      # only with track_maps
    source: BasedChainComplex | None = field(default=None, repr=False)
    seconds_per_step: float = 0.0             # wall time of the step loop, setup excluded

    def __iter__(self):
        return iter((self.complex, self.matching, self.signal, self.records))

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss_total for r in self.records])


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Independent PCG64 stream for one step: SeedSequence(seed, spawn_key=(step,))."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(step,))))


# ---------------------------------------------------------------------------
# losses


def _signal_matrix(signals) -> tuple[int, np.ndarray]:
    if isinstance(signals, Signal):
        signals = [signals]
    signals = list(signals)
    if not signals:
        raise ValueError("empty signal set")
    degrees = {s.degree for s in signals}
    if len(degrees) != 1:
        raise ValueError(f"signals of mixed degrees {sorted(degrees)}")
    return degrees.pop(), np.column_stack([s.values for s in signals])


def topological_loss(complex: BasedChainComplex, psi, phi, s) -> float:
    """W-norm of s - phi psi s; summed over a set of signals."""
    n, S = _signal_matrix(s)
    p_n, f_n = (psi[n], phi[n]) if isinstance(psi, dict) else (psi, phi)
    if p_n.shape[1] != S.shape[0]:
        raise ValueError(f"signal has {S.shape[0]} entries, psi_{n} expects {p_n.shape[1]}")
    R = S - f_n @ (p_n @ S)
    return float(sum(norm(complex, n, R[:, j]) for j in range(R.shape[1])))


def retraction_loss(r: Retraction, s) -> float:
    return topological_loss(r.source, r.psi, r.phi, s)


def _column_norm(w: np.ndarray, col: dict[int, float]) -> float:
    """W-norm of a sparse column; ``w`` is the Gram matrix or, for orthogonal bases, its diagonal."""
    if not col:
        return 0.0
    idx = np.fromiter(col.keys(), dtype=int, count=len(col))
    val = np.fromiter(col.values(), dtype=float, count=len(col))
    if w.ndim == 1:
        return float(np.sqrt(np.sum(w[idx] * val * val)))
    return float(np.sqrt(max(val @ w[np.ix_(idx, idx)] @ val, 0.0)))


def single_pairing_loss(complex: BasedChainComplex, alpha: CellId, beta: CellId, s) -> float:
    """Loss of collapsing alpha onto beta for s in the degree of beta."""
    alpha, beta = CellId(*alpha), CellId(*beta)
    n, S = _signal_matrix(s)
    if n != beta.degree or alpha.degree != n + 1:
        raise ValueError(f"pair {alpha}->{beta} does not act on degree {n}")
    a = complex.coefficient(alpha, beta)
    if a == 0.0:
        raise MatchingError(f"zero incidence between {alpha} and {beta}")
    col = complex.d(n + 1)[:, alpha.index]
    scale = np.sqrt(max(col @ complex.W(n) @ col, 0.0)) / abs(a)
    return float(np.sum(np.abs(S[beta.index])) * scale)


def dual_pairing_loss(complex: BasedChainComplex, alpha: CellId, beta: CellId, s) -> float:
    """Loss of the adjoint retraction of the pair alpha -> beta on s in the degree of alpha."""
    alpha, beta = CellId(*alpha), CellId(*beta)
    if not complex.is_orthogonal_base:
        raise NonOrthogonalBaseError("the dual loss needs an orthogonal base")
    m, S = _signal_matrix(s)
    if m != alpha.degree or beta.degree != m - 1:
        raise ValueError(f"pair {alpha}->{beta} does not act on degree {m}")
    if complex.coefficient(alpha, beta) == 0.0:
        raise MatchingError(f"zero incidence between {alpha} and {beta}")
    dt = adjoint_boundary(complex, m)              # C_{m-1} -> C_m
    col = dt[:, beta.index]
    coeff = col[alpha.index]
    return float(np.sum(np.abs(S[alpha.index])) * norm(complex, m, col) / abs(coeff))


# ---------------------------------------------------------------------------
# single optimal pairing


class _Search:
    """Incremental argmin state over the (n+1)-cells of a PairingReducer."""

    def __init__(self, reducer: PairingReducer, n: int, S: np.ndarray):
        self.r, self.n = reducer, n
        self.S = S.copy()                                    # source-indexed, dead rows unused
        self.absS = np.abs(self.S).sum(axis=1)
        src = reducer.source
        d = src.diagonal_weights(n)
        self.w = d if d is not None else src.W(n)
        p = src.dim(n + 1)
        self.norms = np.zeros(p)
        self.best = np.full(p, np.inf)
        for c in range(p):
            self._refresh(c, norm=True)

    def _refresh(self, c: int, norm: bool = False) -> None:
        col = self.r.cols[self.n + 1].get(c)
        if not col:
            self.best[c] = np.inf
            return
        if norm:
            self.norms[c] = _column_norm(self.w, col)
        self.best[c] = self.norms[c] * min(self.absS[b] / abs(v) for b, v in col.items())

    def faces(self, c: int) -> list[tuple[int, float]]:
        col = self.r.cols[self.n + 1][c]
        return [(b, self.norms[c] * self.absS[b] / abs(v)) for b, v in col.items()]

    def losses(self) -> dict[tuple[int, int], float]:
        """Every admissible pair with its loss."""
        out = {}
        for c, col in self.r.cols[self.n + 1].items():
            for b, v in col.items():
                out[(c, b)] = self.norms[c] * self.absS[b] / abs(v)
        return out

    def choose(self, rng: np.random.Generator) -> tuple[int, int, float]:
        lo = float(np.min(self.best)) if self.best.size else np.inf
        if not np.isfinite(lo):
            raise NoPairingError(f"no ({self.n + 1},{self.n}) pairing available")
        cells = np.flatnonzero(self.best <= lo + TIE_RTOL * max(lo, 1e-300))
        c = int(cells[rng.integers(len(cells))]) if len(cells) > 1 else int(cells[0])
        faces = self.faces(c)
        m = min(l for _, l in faces)
        ties = sorted(b for b, l in faces if l <= m + TIE_RTOL * max(m, 1e-300))
        b = ties[rng.integers(len(ties))] if len(ties) > 1 else ties[0]
        return c, b, m

    def choose_random(self, rng: np.random.Generator) -> tuple[int, int, float]:
        pairs = sorted(self.losses().items())
        if not pairs:
            raise NoPairingError(f"no ({self.n + 1},{self.n}) pairing available")
        (c, b), loss = pairs[rng.integers(len(pairs))]
        return c, b, loss

    def apply(self, c: int, b: int) -> None:
        """Pair (c, b), push the signal forward by psi and refresh the touched cells."""
        n = self.n
        col_a = dict(self.r.cols[n + 1][c])
        a = col_a[b]
        sb = self.S[b].copy()
        self.r.pair(CellId(n + 1, c), CellId(n, b))
        moved = [t for t in col_a if t != b]
        for t in moved:
            self.S[t] -= (col_a[t] / a) * sb
            self.absS[t] = np.abs(self.S[t]).sum()
        self.S[b] = 0.0
        self.absS[b] = 0.0
        self.best[c] = np.inf
        rewritten = self.r.changed.get(n + 1, set())
        touched = set(rewritten)
        rows = self.r.rows[n + 1]
        for t in moved:
            touched.update(rows.get(t, {}))
        for x in touched:
            self._refresh(x, norm=x in rewritten)


def _prepare(complex: BasedChainComplex, s, n: int | None = None):
    deg, S = _signal_matrix(s)
    if n is not None and n != deg:
        raise ValueError(f"signal degree {deg} does not match target degree {n}")
    if not 0 <= deg < complex.max_degree:
        raise NoPairingError(f"no ({deg + 1},{deg}) pairing in a complex of dimension {complex.max_degree}")
    if S.shape[0] != complex.dim(deg):
        raise ValueError(f"signal has {S.shape[0]} entries, C_{deg} has {complex.dim(deg)}")
    return deg, S


def optimal_pairing(complex: BasedChainComplex, s, rng: np.random.Generator | int = 0) -> tuple[CellId, CellId]:
    """An (n+1, n)-pair of least single-pairing loss; ties broken with ``rng``."""
    n, S = _prepare(complex, s)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    c, b, _ = _Search(PairingReducer(complex), n, S).choose(rng)
    return CellId(n + 1, c), CellId(n, b)


def pairing_losses(complex: BasedChainComplex, s) -> dict[tuple[CellId, CellId], float]:
    """Exhaustive table of single-pairing losses of every admissible (n+1, n)-pair."""
    n, _ = _signal_matrix(s)
    out = {}
    D = complex.d(n + 1)
    for c in range(D.shape[1]):
        for b in np.flatnonzero(D[:, c]):
            alpha, beta = CellId(n + 1, c), CellId(n, int(b))
            out[(alpha, beta)] = single_pairing_loss(complex, alpha, beta, s)
    return out


# ---------------------------------------------------------------------------
# iterated pairings


def _total_loss(complex: BasedChainComplex, n: int, S0: np.ndarray, S: np.ndarray, alive: dict) -> float:
    # (n, n-1)-free: phi_n is the inclusion of the surviving n-cells
    emb = np.zeros_like(S)
    idx = np.fromiter(alive.keys(), dtype=int, count=len(alive))
    emb[idx] = S[idx]
    R = S0 - emb
    return float(sum(norm(complex, n, R[:, j]) for j in range(R.shape[1])))


def _run(complex: BasedChainComplex, s, config: OptimizerConfig) -> Trajectory:
    n, S0 = _prepare(complex, s, config.degree)
    reducer = PairingReducer(complex, track_maps=config.track_maps)
    search = _Search(reducer, n, S0)
    records, stopped = [], False
    t0 = time.perf_counter()
    for step in range(config.steps):
        rng = step_rng(config.seed, step)
        try:
            if config.mode == "optimal":
                c, b, cond = search.choose(rng)
            else:
                c, b, cond = search.choose_random(rng)
        except NoPairingError:
            stopped = True
            log.info("no pairing left after %d of %d steps", step, config.steps)
            break
        search.apply(c, b)
        total = _total_loss(complex, n, S0, search.S, reducer.alive[n])
        dims = tuple(len(a) for a in reducer.alive)
        records.append(LossRecord(step + 1, (CellId(n + 1, c), CellId(n, b)), float(cond), total, dims))
    per_step = (time.perf_counter() - t0) / max(len(records), 1)
    crit = reducer.critical()
    values = search.S[list(crit[n])]
    reduced = reducer.to_complex()
    signal = Signal(n, values[:, 0]) if isinstance(s, Signal) else [Signal(n, v) for v in values.T]
    matching = SequentialMatching(tuple(Matching((p,)) for p in reducer.pairs))
    retraction = reducer.retraction() if config.track_maps else None
    return Trajectory(reduced, matching, signal, records, stopped, retraction, complex, per_step)


def _dual_run(complex: BasedChainComplex, s, config: OptimizerConfig) -> Trajectory:
    if not complex.is_orthogonal_base:
        raise NonOrthogonalBaseError("dual-loss trajectories need an orthogonal base")
    K = complex.max_degree
    n, _ = _signal_matrix(s)
    if n != config.degree + 1:
        raise ValueError(f"dual loss at degree {config.degree} takes signals on C_{config.degree + 1}")
    dual = dual_complex(complex)
    sigs = [s] if isinstance(s, Signal) else list(s)
    dual_sigs = [Signal(K - n, x.values) for x in sigs]
    cfg = OptimizerConfig(K - config.degree - 1, config.steps, config.seed, config.mode, "primal",
                          config.track_maps)
    t = _run(dual, dual_sigs[0] if isinstance(s, Signal) else dual_sigs, cfg)

    def flip(c: CellId) -> CellId:
        return CellId(K - c.degree, c.index)

    records = [LossRecord(r.step, (flip(r.pair[1]), flip(r.pair[0])), r.loss_conditional, r.loss_total,
                          tuple(reversed(r.dims))) for r in t.records]
    matching = SequentialMatching(tuple(Matching(((flip(b), flip(a)),)) for (a, b) in t.matching.pairs))
    signal = Signal(n, t.signal.values) if isinstance(s, Signal) else [Signal(n, x.values) for x in t.signal]
    return Trajectory(t.complex, matching, signal, records, t.stopped_early,
                      t.retraction, dual, t.seconds_per_step)


def k_optimal_pairings(complex: BasedChainComplex, s, config: OptimizerConfig | None = None, **kw) -> Trajectory:
    """Greedy trajectory of up to ``config.steps`` optimal (n+1, n)-pairings.

    In dual mode the signal lives on C_{n+1} and the pairs minimize the adjoint loss; the
    returned complex and signal then live on the dual of the reduced complex.
    """
    config = config or OptimizerConfig(**kw)
    if config.mode != "optimal":
        config = OptimizerConfig(config.degree, config.steps, config.seed, "optimal", config.loss_side,
                                 config.track_maps)
    return _dual_run(complex, s, config) if config.loss_side == "dual" else _run(complex, s, config)


def random_pairings(complex: BasedChainComplex, s, config: OptimizerConfig | None = None, **kw) -> Trajectory:
    """Baseline: each step picks uniformly among all admissible (n+1, n)-pairs."""
    config = config or OptimizerConfig(**kw)
    config = OptimizerConfig(config.degree, config.steps, config.seed, "random", config.loss_side,
                             config.track_maps)
    return _dual_run(complex, s, config) if config.loss_side == "dual" else _run(complex, s, config)


def run_trajectory(complex: BasedChainComplex, s, config: OptimizerConfig) -> Trajectory:
    if config.mode == "optimal":
        return k_optimal_pairings(complex, s, config)
    return random_pairings(complex, s, config)


def trajectory_csv(complex: BasedChainComplex, records: Sequence[LossRecord]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        a, b = r.pair
        w.writerow([r.step, complex.name(a), complex.name(b), repr(r.loss_conditional), repr(r.loss_total),
                    " ".join(map(str, r.dims))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# convergence drivers


def _first_pair(reducer: PairingReducer, degrees: Sequence[int]) -> tuple[CellId, CellId] | None:
    for d in degrees:
        cols = reducer.cols[d]
        live = [c for c, col in cols.items() if col]
        if live:
            c = min(live)
            return CellId(d, c), CellId(d - 1, min(cols[c]))
    return None


def _drive(complex: BasedChainComplex, degrees: Sequence[int]) -> Retraction:
    reducer = PairingReducer(complex, track_maps=True)
    while (p := _first_pair(reducer, degrees)) is not None:
        reducer.pair(*p)
    return reducer.retraction()


def full_reduce(complex: BasedChainComplex) -> Retraction:
    """Single pairings, lowest degree then lowest index first, until the boundary vanishes."""
    return _drive(complex, range(1, complex.max_degree + 1))


def free_reduce(complex: BasedChainComplex, n: int) -> Retraction:
    """Like full_reduce but never pairs an n-cell down to an (n-1)-cell."""
    return _drive(complex, [d for d in range(1, complex.max_degree + 1) if d != n])


def expected_steps(complex: BasedChainComplex) -> int:
    from .complex import betti_numbers
    b = betti_numbers(complex)
    total = sum(complex.dim(n) - b[n] for n in range(complex.max_degree + 1))
    return total // 2
