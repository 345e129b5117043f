"""Finite-type based chain complexes over the reals with degree-wise inner products.

Every cell spans a one-dimensional component, so a degree-n chain group is R^{#n-cells}
with the cells as its basis.  Boundaries are stored sparsely, inner products densely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

BOUNDARY_RTOL = 1e-10
SYMMETRY_TOL = 1e-12
SPD_RTOL = 1e-12


class CellId(NamedTuple):
    degree: int
    index: int


@dataclass(frozen=True)
class Violation:
    check: str
    location: tuple
    magnitude: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class Signal:
    degree: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


class ComplexFormatError(ValueError):
    """Raised for malformed complex, signal or matching files."""


@dataclass(frozen=True, eq=False)
class BasedChainComplex:
    """A based chain complex in degrees 0..max_degree.

    ``cells[n]`` lists the names of the n-cells in matrix order.  ``boundary[n]`` is the
    sparse matrix of the map C_n -> C_{n-1} (rows: (n-1)-cells, columns: n-cells) for
    1 <= n <= max_degree.  ``weights[n]`` is the Gram matrix of the n-th inner product.
    """

    cells: tuple[tuple[str, ...], ...]
    boundary: dict[int, sp.csc_matrix]
    weights: dict[int, np.ndarray]
    _index: tuple[dict[str, int], ...] = field(init=False, repr=False)
    _diag: tuple[np.ndarray | None, ...] = field(init=False, repr=False)

    def __post_init__(self):
        cells = tuple(tuple(str(c) for c in deg) for deg in self.cells)
        object.__setattr__(self, "cells", cells)
        index = []
        for n, names in enumerate(cells):
            lookup = {name: i for i, name in enumerate(names)}
            if len(lookup) != len(names):
                raise ValueError(f"duplicate cell names in degree {n}")
            index.append(lookup)
        object.__setattr__(self, "_index", tuple(index))

        bd = {}
        for n in range(1, len(cells)):
            mat = self.boundary.get(n)
            shape = (len(cells[n - 1]), len(cells[n]))
            if mat is None:
                mat = sp.csc_matrix(shape)
            mat = sp.csc_matrix(mat, dtype=float)
            if mat.shape != shape:
                raise ValueError(f"boundary {n} has shape {mat.shape}, expected {shape}")
            mat.eliminate_zeros()
            mat.sort_indices()
            bd[n] = mat
        object.__setattr__(self, "boundary", bd)

        w = {}
        for n, names in enumerate(cells):
            mat = self.weights.get(n)
            mat = np.eye(len(names)) if mat is None else np.array(mat, dtype=float)
            if mat.ndim == 1:
                mat = np.diag(mat)
            if mat.shape != (len(names), len(names)):
                raise ValueError(f"weights {n} have shape {mat.shape}")
            mat.setflags(write=False)
            w[n] = mat
        object.__setattr__(self, "weights", w)
        diag = []
        for n in range(len(cells)):
            d = np.diag(w[n]).copy()
            diag.append(d if np.count_nonzero(w[n]) == np.count_nonzero(d) else None)
        object.__setattr__(self, "_diag", tuple(diag))

    @classmethod
    def from_dense(cls, cells, boundary, weights=None) -> "BasedChainComplex":
        return cls(cells, {n: sp.csc_matrix(np.asarray(b, dtype=float)) for n, b in boundary.items()},
                   dict(weights or {}))

    @property
    def max_degree(self) -> int:
        return len(self.cells) - 1

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.cells)

    def dim(self, n: int) -> int:
        return len(self.cells[n]) if 0 <= n <= self.max_degree else 0

    @property
    def n_cells(self) -> int:
        return sum(self.dims)

    def cell(self, degree: int, name: str) -> CellId:
        try:
            return CellId(degree, self._index[degree][name])
        except (IndexError, KeyError):
            raise KeyError(f"no {degree}-cell named {name!r}") from None

    def name(self, cell: CellId) -> str:
        return self.cells[cell.degree][cell.index]

    def has_cell(self, cell: CellId) -> bool:
        return 0 <= cell.degree <= self.max_degree and 0 <= cell.index < self.dim(cell.degree)

    def d(self, n: int) -> np.ndarray:
        """Dense boundary matrix C_n -> C_{n-1}; a correctly shaped zero matrix off range."""
        if 1 <= n <= self.max_degree:
            return self.boundary[n].toarray()
        return np.zeros((self.dim(n - 1), self.dim(n)))

    def coefficient(self, alpha: CellId, beta: CellId) -> float:
        """The incidence coefficient of beta in the boundary of alpha."""
        if beta.degree != alpha.degree - 1 or not 1 <= alpha.degree <= self.max_degree:
            return 0.0
        return float(self.boundary[alpha.degree][beta.index, alpha.index])

    def faces(self, alpha: CellId) -> list[tuple[CellId, float]]:
        if not 1 <= alpha.degree <= self.max_degree:
            return []
        col = self.boundary[alpha.degree]
        start, stop = col.indptr[alpha.index], col.indptr[alpha.index + 1]
        return [(CellId(alpha.degree - 1, int(r)), float(v))
                for r, v in zip(col.indices[start:stop], col.data[start:stop])]

    def W(self, n: int) -> np.ndarray:
        if 0 <= n <= self.max_degree:
            return self.weights[n]
        return np.zeros((0, 0))

    @property
    def is_orthogonal_base(self) -> bool:
        return all(d is not None for d in self._diag)

    def diagonal_weights(self, n: int) -> np.ndarray | None:
        """Diagonal of W_n when W_n is diagonal, else None."""
        return self._diag[n] if 0 <= n <= self.max_degree else np.zeros(0)

    def signal(self, degree: int, values=None) -> Signal:
        if values is None:
            values = np.zeros(self.dim(degree))
        values = np.asarray(values, dtype=float)
        if values.shape != (self.dim(degree),):
            raise ValueError(f"signal of length {values.shape} on {self.dim(degree)} {degree}-cells")
        return Signal(degree, values)

    def basis_signal(self, cell: CellId) -> Signal:
        v = np.zeros(self.dim(cell.degree))
        v[cell.index] = 1.0
        return Signal(cell.degree, v)

    def with_weights(self, weights: dict[int, np.ndarray]) -> "BasedChainComplex":
        merged = dict(self.weights)
        merged.update(weights)
        return BasedChainComplex(self.cells, self.boundary, merged)


# ---------------------------------------------------------------------------
# validation and linear algebra


def _max_abs(a) -> float:
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def validate(complex: BasedChainComplex) -> ValidationReport:
    """Check d^2 = 0, symmetric positive definite weights and matrix shapes."""
    out = []
    for n in range(1, complex.max_degree + 1):
        mat = complex.boundary[n]
        if mat.shape != (complex.dim(n - 1), complex.dim(n)):
            out.append(Violation("index-consistency", (n,), float("nan")))
            continue
        if not np.all(np.isfinite(mat.data)):
            out.append(Violation("finite-coefficients", (n,), float("inf")))
    for n in range(1, complex.max_degree):
        lo, hi = complex.boundary[n], complex.boundary[n + 1]
        prod = (lo @ hi).toarray()
        if not prod.size:
            continue
        tol = BOUNDARY_RTOL * (1.0 + _max_abs(lo) * _max_abs(hi))
        bad = np.argwhere(np.abs(prod) > tol)
        for r, c in bad:
            out.append(Violation("boundary-squared",
                                 (complex.cells[n + 1][c], complex.cells[n - 1][r]),
                                 float(abs(prod[r, c]))))
    for n in range(complex.max_degree + 1):
        w = complex.weights[n]
        if not w.size:
            continue
        asym = float(np.max(np.abs(w - w.T)))
        if asym > SYMMETRY_TOL:
            out.append(Violation("weights-symmetric", (n,), asym))
            continue
        lam = float(np.linalg.eigvalsh(w)[0])
        if not lam > SPD_RTOL * float(np.trace(w)):
            out.append(Violation("weights-positive-definite", (n,), lam))
    return ValidationReport(tuple(out))


def _check_degree(complex: BasedChainComplex, n: int, lo: int, hi: int):
    if not lo <= n <= hi:
        raise ValueError(f"degree {n} outside [{lo}, {hi}]")


def adjoint_boundary(complex: BasedChainComplex, n: int) -> np.ndarray:
    """Matrix of the adjoint C_{n-1} -> C_n, namely W_n^{-1} d_n^T W_{n-1}."""
    _check_degree(complex, n, 1, complex.max_degree)
    return np.linalg.solve(complex.W(n), complex.d(n).T @ complex.W(n - 1))


def adjoint(mat: np.ndarray, w_src: np.ndarray, w_dst: np.ndarray) -> np.ndarray:
    """Adjoint of a map with Gram matrices w_src on its domain and w_dst on its codomain."""
    if mat.size == 0:
        return np.zeros(mat.T.shape)
    return np.linalg.solve(w_src, mat.T @ w_dst)


def _vals(x) -> np.ndarray:
    return x.values if isinstance(x, Signal) else np.asarray(x, dtype=float)


def inner_product(complex: BasedChainComplex, n: int, x, y) -> float:
    for s in (x, y):
        if isinstance(s, Signal) and s.degree != n:
            raise ValueError(f"signal of degree {s.degree} paired in degree {n}")
    d = complex.diagonal_weights(n)
    if d is not None:
        return float(np.sum(_vals(x) * d * _vals(y)))
    return float(_vals(x) @ complex.W(n) @ _vals(y))


def norm(complex: BasedChainComplex, n: int, x) -> float:
    return float(np.sqrt(max(inner_product(complex, n, x, x), 0.0)))


def numerical_rank(mat: np.ndarray) -> int:
    """Rank with the cutoff sigma <= 1e-10 * sigma_max * max(shape)."""
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if not s.size or s[0] == 0:
        return 0
    return int(np.sum(s > 1e-10 * s[0] * max(mat.shape)))


def betti_numbers(complex: BasedChainComplex) -> tuple[int, ...]:
    ranks = [numerical_rank(complex.d(n)) for n in range(complex.max_degree + 2)]
    return tuple(complex.dim(n) - ranks[n] - ranks[n + 1] for n in range(complex.max_degree + 1))


def dual_complex(complex: BasedChainComplex) -> BasedChainComplex:
    """Cochain complex read as a chain complex: degree k holds the (K-k)-cells, d = adjoint."""
    K = complex.max_degree
    cells = tuple(complex.cells[K - k] for k in range(K + 1))
    bd = {k: sp.csc_matrix(adjoint_boundary(complex, K - k + 1)) for k in range(1, K + 1)}
    w = {k: complex.W(K - k) for k in range(K + 1)}
    return BasedChainComplex(cells, bd, w)


def rescale_basis(complex: BasedChainComplex, scales: Sequence[np.ndarray]) -> BasedChainComplex:
    """Replace each basis cell c by scales[n][c] * c; boundaries and Gram matrices follow."""
    scales = [np.asarray(s, dtype=float) for s in scales]
    bd = {n: sp.csc_matrix(sp.diags(1.0 / scales[n - 1]) @ complex.boundary[n] @ sp.diags(scales[n]))
          for n in range(1, complex.max_degree + 1)}
    w = {n: scales[n][:, None] * complex.W(n) * scales[n][None, :] for n in range(complex.max_degree + 1)}
    return BasedChainComplex(complex.cells, bd, w)


# ---------------------------------------------------------------------------
# JSON format


def _weights_json(w: np.ndarray):
    if np.count_nonzero(w - np.diag(np.diag(w))) == 0:
        return {"diag": [float(x) for x in np.diag(w)]}
    return [[float(x) for x in row] for row in w]


def to_json(complex: BasedChainComplex) -> dict:
    bd = {}
    for n in range(1, complex.max_degree + 1):
        mat = complex.boundary[n]
        triples = []
        for c in range(mat.shape[1]):
            for k in range(mat.indptr[c], mat.indptr[c + 1]):
                triples.append([complex.cells[n - 1][mat.indices[k]], complex.cells[n][c],
                                float(mat.data[k])])
        bd[str(n)] = triples
    return {
        "max_degree": complex.max_degree,
        "cells": {str(n): list(names) for n, names in enumerate(complex.cells)},
        "boundary": bd,
        "weights": {str(n): _weights_json(complex.W(n)) for n in range(complex.max_degree + 1)},
    }


def from_json(data: dict) -> BasedChainComplex:
    try:
        k = int(data["max_degree"])
        raw_cells = data["cells"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ComplexFormatError(f"missing or invalid field: {exc}") from None
    cells = []
    for n in range(k + 1):
        names = raw_cells.get(str(n), [])
        if not isinstance(names, list):
            raise ComplexFormatError(f"cells.{n}: expected a list of names")
        cells.append(tuple(str(x) for x in names))
    lookup = [{name: i for i, name in enumerate(names)} for names in cells]

    bd = {}
    for key, triples in (data.get("boundary") or {}).items():
        n = int(key)
        if not 1 <= n <= k:
            raise ComplexFormatError(f"boundary.{key}: degree outside 1..{k}")
        rows, cols, vals = [], [], []
        for i, entry in enumerate(triples):
            try:
                r, c, v = entry
                v = float(v)
            except (TypeError, ValueError):
                raise ComplexFormatError(f"boundary.{key}[{i}]: expected [row, col, coeff]") from None
            if str(r) not in lookup[n - 1]:
                raise ComplexFormatError(f"boundary.{key}[{i}]: unknown {n - 1}-cell {r!r}")
            if str(c) not in lookup[n]:
                raise ComplexFormatError(f"boundary.{key}[{i}]: unknown {n}-cell {c!r}")
            rows.append(lookup[n - 1][str(r)])
            cols.append(lookup[n][str(c)])
            vals.append(v)
        bd[n] = sp.csc_matrix((vals, (rows, cols)), shape=(len(cells[n - 1]), len(cells[n])))

    w = {}
    for key, spec in (data.get("weights") or {}).items():
        n = int(key)
        if not 0 <= n <= k:
            raise ComplexFormatError(f"weights.{key}: degree outside 0..{k}")
        if isinstance(spec, dict):
            if "diag" not in spec:
                raise ComplexFormatError(f"weights.{key}: expected matrix or {{'diag': [...]}}")
            w[n] = np.diag(np.asarray(spec["diag"], dtype=float))
        else:
            w[n] = np.asarray(spec, dtype=float)
    try:
        return BasedChainComplex(tuple(cells), bd, w)
    except ValueError as exc:
        raise ComplexFormatError(str(exc)) from None


def load(path) -> BasedChainComplex:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ComplexFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_json(data)


def dumps(complex: BasedChainComplex) -> str:
    return json.dumps(to_json(complex), indent=1) + "\n"


def save(complex: BasedChainComplex, path) -> None:
    Path(path).write_text(dumps(complex))


def signal_to_json(complex: BasedChainComplex, s: Signal) -> dict:
    return {"degree": s.degree,
            "values": {name: float(v) for name, v in zip(complex.cells[s.degree], s.values)}}


def signal_from_json(complex: BasedChainComplex, data: dict) -> Signal:
    n = int(data["degree"])
    values = np.zeros(complex.dim(n))
    for name, v in data["values"].items():
        try:
            values[complex.cell(n, name).index] = float(v)
        except KeyError:
            raise ComplexFormatError(f"signal names unknown {n}-cell {name!r}") from None
    return Signal(n, values)


def load_signal(complex: BasedChainComplex, path) -> Signal:
    return signal_from_json(complex, json.loads(Path(path).read_text()))


def save_signal(complex: BasedChainComplex, s: Signal, path) -> None:
    Path(path).write_text(json.dumps(signal_to_json(complex, s), indent=1) + "\n")


# ---------------------------------------------------------------------------
# small hand-built complexes


def interval() -> BasedChainComplex:
    return BasedChainComplex.from_dense((("v0", "v1"), ("e",)), {1: [[-1.0], [1.0]]})


def simplicial(vertices: Sequence[str], edges: Sequence[tuple[int, int]],
               triangles: Sequence[tuple[int, int, int]] = ()) -> BasedChainComplex:
    """Simplicial chain complex with the orientation induced by vertex order."""
    edges = [tuple(sorted(e)) for e in edges]
    triangles = [tuple(sorted(t)) for t in triangles]
    eidx = {e: i for i, e in enumerate(edges)}
    d1 = np.zeros((len(vertices), len(edges)))
    for j, (a, b) in enumerate(edges):
        d1[a, j], d1[b, j] = -1.0, 1.0
    cells = [tuple(vertices), tuple(f"e{a}{b}" if len(vertices) <= 10 else f"e{a}_{b}" for a, b in edges)]
    bd = {1: d1}
    if triangles:
        d2 = np.zeros((len(edges), len(triangles)))
        for j, (a, b, c) in enumerate(triangles):
            d2[eidx[(b, c)], j] = 1.0
            d2[eidx[(a, c)], j] = -1.0
            d2[eidx[(a, b)], j] = 1.0
        cells.append(tuple(f"f{a}{b}{c}" if len(vertices) <= 10 else f"f{a}_{b}_{c}"
                           for a, b, c in triangles))
        bd[2] = d2
    return BasedChainComplex.from_dense(tuple(cells), bd)


def filled_triangle() -> BasedChainComplex:
    """Edges ordered (e01, e02, e12); d f = e12 - e02 + e01."""
    return simplicial(("v0", "v1", "v2"), [(0, 1), (0, 2), (1, 2)], [(0, 1, 2)])


def hollow_triangle() -> BasedChainComplex:
    return simplicial(("v0", "v1", "v2"), [(0, 1), (0, 2), (1, 2)])


def cycle_graph(k: int) -> BasedChainComplex:
    return simplicial(tuple(f"v{i}" for i in range(k)), [(i, (i + 1) % k) for i in range(k)])
