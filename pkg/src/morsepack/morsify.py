"""Splitting and Morsification of deformation retracts.

Any retract (psi, phi) of C splits C as Ker psi + Im phi.  A Hodge matching on Ker psi
together with the trivial matching on Im phi is a Morse matching over a new base whose
retraction has the same projection phi psi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .complex import BasedChainComplex, CellId
from .hodge import change_of_basis, hodge_basis
from .morse import Matching, Retraction, SequentialMatching, _rel, reduce

SPLIT_RTOL = 1e-9
OPERATOR_RTOL = 1e-8


class RetractError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DeformationRetract:
    """Chain maps psi: C -> D and phi: D -> C with psi phi = 1; h is optional."""
    source: BasedChainComplex
    psi: dict[int, np.ndarray]
    phi: dict[int, np.ndarray]
    h: dict[int, np.ndarray] | None = None
    target: BasedChainComplex | None = None

    @classmethod
    def from_retraction(cls, r: Retraction) -> "DeformationRetract":
        return cls(r.source, r.psi, r.phi, r.h, r.reduced)

    def projection(self, n: int) -> np.ndarray:
        return self.phi[n] @ self.psi[n]

    def residuals(self) -> dict[str, float]:
        C = self.source
        out = {"retract": 0.0, "idempotent": 0.0, "chain": 0.0}
        for n in range(C.max_degree + 1):
            eye = np.eye(self.psi[n].shape[0])
            out["retract"] = max(out["retract"], _rel(self.psi[n] @ self.phi[n] - eye, eye))
            p = self.projection(n)
            out["idempotent"] = max(out["idempotent"], _rel(p @ p - p, p))
            if n >= 1:
                a, b = C.d(n) @ self.projection(n), self.projection(n - 1) @ C.d(n)
                out["chain"] = max(out["chain"], _rel(a - b, a, b))
                if self.target is not None:
                    a, b = self.psi[n - 1] @ C.d(n), self.target.d(n) @ self.psi[n]
                    out["chain"] = max(out["chain"], _rel(a - b, a, b))
        return out


def _as_retract(obj) -> DeformationRetract:
    if isinstance(obj, DeformationRetract):
        return obj
    if isinstance(obj, Retraction):
        return DeformationRetract.from_retraction(obj)
    raise TypeError(f"expected a retract, got {type(obj).__name__}")


@dataclass(frozen=True)
class Split:
    ker_psi: dict[int, np.ndarray]      # columns span Ker psi_n
    im_phi: dict[int, np.ndarray]       # columns span Im phi_n
    closure_residual: float

    def dims(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        K = len(self.ker_psi)
        return (tuple(self.ker_psi[n].shape[1] for n in range(K)),
                tuple(self.im_phi[n].shape[1] for n in range(K)))


def _rank_cut(s: np.ndarray, shape) -> int:
    if not s.size or s[0] == 0:
        return 0
    return int(np.sum(s > 1e-10 * s[0] * max(shape)))


def _null_and_range(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dim = p.shape[0]
    if dim == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    u, s, vt = np.linalg.svd(p)
    r = _rank_cut(s, p.shape)
    return vt[r:].T.copy(), u[:, :r].copy()


def _coords(basis: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Coordinates of the columns of x in ``basis`` and the relative fit residual."""
    if basis.shape[1] == 0 or x.shape[1] == 0:
        return np.zeros((basis.shape[1], x.shape[1])), _rel(x, x) if basis.shape[1] == 0 else 0.0
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return coef, _rel(basis @ coef - x, x)


def split_retract(retract) -> Split:
    """Bases of Ker psi (null space of phi psi) and Im phi (its range), degree-wise."""
    r = _as_retract(retract)
    res = r.residuals()
    if res["retract"] > SPLIT_RTOL or res["idempotent"] > SPLIT_RTOL:
        raise RetractError(f"not a deformation retract: {res}")
    C = r.source
    ker, im = {}, {}
    for n in range(C.max_degree + 1):
        ker[n], im[n] = _null_and_range(r.projection(n))
    closure = 0.0
    for n in range(1, C.max_degree + 1):
        for basis in (ker, im):
            _, resid = _coords(basis[n - 1], C.d(n) @ basis[n])
            closure = max(closure, resid)
    return Split(ker, im, closure)


def subcomplex(complex: BasedChainComplex, bases: dict[int, np.ndarray], prefix: str = "k") -> BasedChainComplex:
    """The d-closed subspaces spanned by ``bases`` with the subspace inner product."""
    K = complex.max_degree
    bd = {}
    for n in range(1, K + 1):
        coef, _ = _coords(bases[n - 1], complex.d(n) @ bases[n])
        bd[n] = sp.csc_matrix(coef)
    w = {n: bases[n].T @ complex.W(n) @ bases[n] for n in range(K + 1)}
    w = {n: (m + m.T) / 2 for n, m in w.items()}
    cells = tuple(tuple(f"{prefix}{n}.{i}" for i in range(bases[n].shape[1])) for n in range(K + 1))
    return BasedChainComplex(cells, bd, w)


@dataclass(frozen=True, eq=False)
class Morsification:
    retract: DeformationRetract
    split: Split
    basis: dict[int, np.ndarray]           # columns: new base of C_n in cell coordinates
    complex: BasedChainComplex             # C rewritten in that base
    matching: Matching                     # Hodge matching on Ker psi, over ``complex``
    retraction: Retraction                 # Morse retraction of ``complex`` by ``matching``

    @property
    def hodge_matching_on_kernel(self) -> Matching:
        return self.matching

    @property
    def critical_subspace(self) -> dict[int, np.ndarray]:
        return self.split.im_phi

    def projection(self, n: int) -> np.ndarray:
        """phi psi of the Morse retraction, in cell coordinates."""
        q = self.basis[n]
        if q.shape[1] == 0:
            return np.zeros((0, 0))
        return q @ self.retraction.projection(n) @ np.linalg.inv(q)

    def operator_residual(self) -> float:
        """Largest relative Frobenius error between the Morse and original projections."""
        worst = 0.0
        for n in range(self.complex.max_degree + 1):
            p = self.retract.projection(n)
            if p.size:
                worst = max(worst, np.linalg.norm(self.projection(n) - p) / max(1.0, np.linalg.norm(p)))
        return float(worst)

    def pair_counts(self) -> dict[int, dict[str, int]]:
        return pair_counts(self.matching, self.complex)

    def orthogonality_defect(self) -> float:
        """Largest cosine between Ker psi and Im phi in any degree (0 when orthogonal)."""
        worst = 0.0
        src = self.retract.source
        for n in range(src.max_degree + 1):
            k, f = self.split.ker_psi[n], self.split.im_phi[n]
            if k.shape[1] == 0 or f.shape[1] == 0:
                continue
            s, _ = _sqrt(src.W(n))
            qk, _ = np.linalg.qr(s @ k)
            qf, _ = np.linalg.qr(s @ f)
            worst = max(worst, float(np.linalg.norm(qf.T @ qk, 2)))
        return worst

    def to_json(self) -> dict:
        ker_dims, im_dims = self.split.dims()
        counts = self.pair_counts()
        return {
            "pair_counts": {str(n): counts[n] for n in sorted(counts)},
            "ker_psi_dims": list(ker_dims),
            "im_phi_dims": list(im_dims),
            "operator_residual": self.operator_residual(),
            "closure_residual": self.split.closure_residual,
            "orthogonality_defect": self.orthogonality_defect(),
        }


def _sqrt(w):
    lam, q = np.linalg.eigh(w)
    return (q * np.sqrt(lam)) @ q.T, (q / np.sqrt(lam)) @ q.T


def morsify(retract) -> Morsification:
    r = _as_retract(retract)
    C = r.source
    split = split_retract(r)
    sub = subcomplex(C, split.ker_psi)
    hb = hodge_basis(sub)
    leftover = [hb[n].kernel.shape[1] for n in range(C.max_degree + 1)]
    if any(leftover):
        raise RetractError(f"Ker psi has non-trivial homology {leftover}; retract is not a homotopy equivalence")
    basis, names = {}, []
    for n in range(C.max_degree + 1):
        k = split.ker_psi[n]
        up, down = k @ hb[n].L_plus, k @ hb[n].R_plus
        basis[n] = np.hstack([up, down, split.im_phi[n]])
        names.append([f"L{n}.{i}" for i in range(up.shape[1])]
                     + [f"R{n}.{i}" for i in range(down.shape[1])]
                     + [f"F{n}.{i}" for i in range(split.im_phi[n].shape[1])])
    mc = change_of_basis(C, [basis[n] for n in range(C.max_degree + 1)], names)
    pairs = []
    for n in range(1, C.max_degree + 1):
        for i, j, _ in hb.pairing(n):
            pairs.append((mc.cell(n, f"R{n}.{i}"), mc.cell(n - 1, f"L{n - 1}.{j}")))
    m = Matching(tuple(pairs))
    return Morsification(r, split, basis, mc, m, reduce(mc, m))


def reconstruction_operator(morsification: Morsification) -> dict[int, np.ndarray]:
    """1 - phi psi assembled as the sum of inclusion-projection pairs over paired cells."""
    out = {}
    matched = morsification.matching.matched
    for n, q in morsification.basis.items():
        if q.shape[1] == 0:
            out[n] = np.zeros((0, 0))
            continue
        q_inv = np.linalg.inv(q)
        paired = [i for i in range(q.shape[1]) if CellId(n, i) in matched]
        out[n] = q[:, paired] @ q_inv[paired, :]
    return out


def pair_counts(obj, complex: BasedChainComplex | None = None) -> dict[int, dict[str, int]]:
    """|M_n^+|, |M_n^-| and |M_n^0| per degree."""
    if isinstance(obj, Morsification):
        return obj.pair_counts()
    if isinstance(obj, Retraction):
        obj, complex = obj.matching, obj.source
    if isinstance(obj, (DeformationRetract,)):
        return morsify(obj).pair_counts()
    if complex is None:
        raise ValueError("pair counts of a matching need its complex")
    pairs = obj.pairs if isinstance(obj, (Matching, SequentialMatching)) else list(obj)
    out = {}
    for n in range(complex.max_degree + 1):
        minus = sum(1 for a, _ in pairs if a.degree == n)
        plus = sum(1 for _, b in pairs if b.degree == n)
        out[n] = {"+": plus, "-": minus, "0": complex.dim(n) - plus - minus}
    return out


def is_free(obj, n: int) -> bool:
    """True iff no n-cell is paired down to an (n-1)-cell."""
    if isinstance(obj, (Matching, SequentialMatching)):
        return not any(a.degree == n for a, _ in obj.pairs)
    if isinstance(obj, Retraction) and obj.matching.stages:
        return is_free(obj.matching, n)
    if isinstance(obj, Morsification):
        return is_free(obj.matching, n)
    return is_free(morsify(_as_retract(obj)).matching, n)
