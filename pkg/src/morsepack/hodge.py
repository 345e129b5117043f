"""Combinatorial Laplacians, Hodge decomposition and Hodge bases/matchings.

Spectral work happens in W^{1/2}-conjugated coordinates, where adjoints are plain
transposes, and results are mapped back to the cell basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .complex import BasedChainComplex, Signal, _check_degree, adjoint_boundary


class EigensolverError(RuntimeError):
    pass


def up_laplacian(complex: BasedChainComplex, n: int) -> np.ndarray:
    _check_degree(complex, n, 0, complex.max_degree)
    if n == complex.max_degree:
        return np.zeros((complex.dim(n), complex.dim(n)))
    return complex.d(n + 1) @ adjoint_boundary(complex, n + 1)


def down_laplacian(complex: BasedChainComplex, n: int) -> np.ndarray:
    _check_degree(complex, n, 0, complex.max_degree)
    if n == 0:
        return np.zeros((complex.dim(0), complex.dim(0)))
    return adjoint_boundary(complex, n) @ complex.d(n)


def laplacian(complex: BasedChainComplex, n: int) -> np.ndarray:
    return up_laplacian(complex, n) + down_laplacian(complex, n)


def _sqrt_pair(w: np.ndarray):
    if not w.size:
        return w, w
    lam, q = np.linalg.eigh(w)
    return (q * np.sqrt(lam)) @ q.T, (q / np.sqrt(lam)) @ q.T


@dataclass(frozen=True)
class _SVD:
    left: np.ndarray     # columns: L_+ vectors in C_{n-1}, cell coordinates
    right: np.ndarray    # columns: R_+ vectors in C_n
    sigma: np.ndarray    # descending


def _boundary_svd(complex: BasedChainComplex, n: int) -> _SVD:
    """SVD of d_n : C_n -> C_{n-1} with respect to the weighted inner products."""
    rows, cols = complex.dim(n - 1), complex.dim(n)
    if not 1 <= n <= complex.max_degree or rows == 0 or cols == 0:
        return _SVD(np.zeros((rows, 0)), np.zeros((cols, 0)), np.zeros(0))
    s_lo, s_lo_inv = _sqrt_pair(complex.W(n - 1))
    s_hi, s_hi_inv = _sqrt_pair(complex.W(n))
    sym = s_lo @ complex.d(n) @ s_hi_inv
    try:
        u, sig, vt = np.linalg.svd(sym)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"SVD of boundary {n} did not converge: {exc}") from None
    if not sig.size or sig[0] == 0:
        return _SVD(np.zeros((rows, 0)), np.zeros((cols, 0)), np.zeros(0))
    r = int(np.sum(sig > 1e-10 * sig[0] * max(rows, cols)))
    left = s_lo_inv @ u[:, :r]
    right = s_hi_inv @ vt[:r].T
    _fix_signs(left, right)
    resid = np.max(np.abs(complex.d(n) @ right - left * sig[:r])) if r else 0.0
    if not np.isfinite(resid) or resid > 1e-6 * max(1.0, sig[0]):
        raise EigensolverError(f"degree {n}: singular pairing residual {resid:.3e}")
    return _SVD(left, right, sig[:r].copy())


def _harmonic(complex: BasedChainComplex, n: int, im_d: np.ndarray, im_dt: np.ndarray) -> np.ndarray:
    """W-orthonormal basis (columns) of the orthogonal complement of im_d + im_dt."""
    dim = complex.dim(n)
    if dim == 0:
        return np.zeros((0, 0))
    s, s_inv = _sqrt_pair(complex.W(n))
    span = s @ np.hstack([im_d, im_dt])
    if span.shape[1] == 0:
        ker = np.eye(dim)
    else:
        ker = sla.null_space(span.T, rcond=1e-10)
    q, _ = np.linalg.qr(ker) if ker.shape[1] else (ker, None)
    return _fix_signs(s_inv @ q)


def _fix_signs(vecs: np.ndarray, *partners: np.ndarray) -> np.ndarray:
    """Flip columns so the first clearly non-zero coordinate is positive (partners follow)."""
    for j in range(vecs.shape[1]):
        col = np.abs(vecs[:, j])
        first = np.flatnonzero(col > 1e-12 * col.max())[0]
        if vecs[first, j] < 0:
            vecs[:, j] *= -1
            for p in partners:
                p[:, j] *= -1
    return vecs


@dataclass(frozen=True)
class DegreeBasis:
    """Hodge basis of one degree; vectors are columns in cell coordinates."""
    degree: int
    L_plus: np.ndarray            # spans Im d_{n+1}
    L_sigma: np.ndarray
    R_plus: np.ndarray            # spans Im d_n^dagger
    R_sigma: np.ndarray
    kernel: np.ndarray            # spans Ker Laplacian_n

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack([self.L_plus, self.kernel, self.R_plus])

    @property
    def labels(self) -> list[tuple[str, int]]:
        return ([("im_d", i) for i in range(self.L_plus.shape[1])]
                + [("ker", i) for i in range(self.kernel.shape[1])]
                + [("im_dt", i) for i in range(self.R_plus.shape[1])])


@dataclass(frozen=True)
class HodgeBasis:
    complex: BasedChainComplex
    degrees: tuple[DegreeBasis, ...]

    def __getitem__(self, n: int) -> DegreeBasis:
        return self.degrees[n]

    def pairing(self, n: int) -> list[tuple[int, int, float]]:
        """(R_plus index in degree n, L_plus index in degree n-1, singular value)."""
        return [(i, i, float(s)) for i, s in enumerate(self.degrees[n].R_sigma)]

    def to_json(self) -> dict:
        out = {}
        for b in self.degrees:
            out[str(b.degree)] = {
                "L_plus": [{"vector": b.L_plus[:, i].tolist(), "sigma": float(b.L_sigma[i])}
                           for i in range(b.L_plus.shape[1])],
                "R_plus": [{"vector": b.R_plus[:, i].tolist(), "sigma": float(b.R_sigma[i])}
                           for i in range(b.R_plus.shape[1])],
                "kernel": [b.kernel[:, i].tolist() for i in range(b.kernel.shape[1])],
            }
        return {"cells": {str(n): list(c) for n, c in enumerate(self.complex.cells)}, "degrees": out}


def _degree_basis(complex: BasedChainComplex, n: int, svd_up: _SVD, svd_down: _SVD) -> DegreeBasis:
    ker = _harmonic(complex, n, svd_up.left, svd_down.right)
    return DegreeBasis(n, svd_up.left, svd_up.sigma, svd_down.right, svd_down.sigma, ker)


def hodge_basis(complex: BasedChainComplex) -> HodgeBasis:
    svds = [_boundary_svd(complex, n) for n in range(complex.max_degree + 2)]
    return HodgeBasis(complex, tuple(_degree_basis(complex, n, svds[n + 1], svds[n])
                                     for n in range(complex.max_degree + 1)))


@dataclass(frozen=True)
class HodgeDecomposition:
    degree: int
    im_d: Signal
    ker: Signal
    im_dt: Signal

    @property
    def ker_coboundary(self) -> Signal:
        """Component in Ker d_{n+1}^dagger = Ker Laplacian + Im d_n^dagger."""
        return Signal(self.degree, self.ker.values + self.im_dt.values)

    @property
    def ker_boundary(self) -> Signal:
        """Component in Ker d_n = Im d_{n+1} + Ker Laplacian."""
        return Signal(self.degree, self.im_d.values + self.ker.values)

    @property
    def total(self) -> Signal:
        return Signal(self.degree, self.im_d.values + self.ker.values + self.im_dt.values)


def projector(complex: BasedChainComplex, n: int, basis: np.ndarray) -> np.ndarray:
    """W-orthogonal projector onto the span of W-orthonormal columns."""
    return basis @ basis.T @ complex.W(n)


def hodge_decompose(complex: BasedChainComplex, s: Signal) -> HodgeDecomposition:
    n = s.degree
    _check_degree(complex, n, 0, complex.max_degree)
    b = _degree_basis(complex, n, _boundary_svd(complex, n + 1), _boundary_svd(complex, n))
    x = s.values
    im_d = projector(complex, n, b.L_plus) @ x
    im_dt = projector(complex, n, b.R_plus) @ x
    ker = projector(complex, n, b.kernel) @ x
    return HodgeDecomposition(n, Signal(n, im_d), Signal(n, ker), Signal(n, im_dt))


def coefficients(complex: BasedChainComplex, n: int, basis: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Coordinates of x against W-orthonormal columns."""
    return basis.T @ complex.W(n) @ x


# ---------------------------------------------------------------------------
# Hodge matching


def change_of_basis(complex: BasedChainComplex, bases: list[np.ndarray], names, *,
                    clean_rtol: float = 1e-10) -> BasedChainComplex:
    """Rewrite a complex in new bases (columns of ``bases[n]``, cell coordinates).

    Entries of the new boundary below ``clean_rtol`` times its largest entry are zeroed,
    since round-off would otherwise show up as spurious edges of the matching graph.
    """
    bd = {}
    for n in range(1, complex.max_degree + 1):
        lo, hi = bases[n - 1], bases[n]
        if lo.shape[1] == 0 or hi.shape[1] == 0:
            bd[n] = sp.csc_matrix((lo.shape[1], hi.shape[1]))
            continue
        mat = np.linalg.solve(lo, complex.d(n) @ hi)
        scale = np.max(np.abs(mat)) if mat.size else 0.0
        mat[np.abs(mat) <= clean_rtol * scale] = 0.0
        bd[n] = sp.csc_matrix(mat)
    w = {n: bases[n].T @ complex.W(n) @ bases[n] for n in range(complex.max_degree + 1)}
    w = {n: (m + m.T) / 2 for n, m in w.items()}
    return BasedChainComplex(tuple(tuple(x) for x in names), bd, w)


@dataclass(frozen=True)
class HodgeMatching:
    basis: HodgeBasis
    complex: BasedChainComplex           # the source complex rewritten in its Hodge basis
    matching: "Matching"
    retraction: "Retraction"


def hodge_complex(basis: HodgeBasis) -> BasedChainComplex:
    src = basis.complex
    names, mats = [], []
    for b in basis.degrees:
        n = b.degree
        names.append([f"L{n}.{i}" for i in range(b.L_plus.shape[1])]
                     + [f"K{n}.{i}" for i in range(b.kernel.shape[1])]
                     + [f"R{n}.{i}" for i in range(b.R_plus.shape[1])])
        mats.append(b.matrix)
    return change_of_basis(src, mats, names)


def hodge_matching(complex: BasedChainComplex, basis: HodgeBasis | None = None) -> HodgeMatching:
    """Pair each R_plus vector of d_n with its L_plus partner and reduce."""
    from .morse import Matching, reduce

    basis = basis or hodge_basis(complex)
    hc = hodge_complex(basis)
    pairs = []
    for n in range(1, complex.max_degree + 1):
        for i, j, _ in basis.pairing(n):
            pairs.append((hc.cell(n, f"R{n}.{i}"), hc.cell(n - 1, f"L{n - 1}.{j}")))
    m = Matching(tuple(pairs))
    return HodgeMatching(basis, hc, m, reduce(hc, m))
