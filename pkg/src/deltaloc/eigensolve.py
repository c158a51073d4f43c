#!/usr/bin/env python3
# -*- coding:utf-8 -*-
"""
Lowest eigenpairs of the pencil (K - S) u = lambda M u and shifted solves.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import (
    ArpackError,
    ArpackNoConvergence,
    LinearOperator,
    cg,
    eigsh,
    lobpcg,
    minres,
    spilu,
    splu,
)

from deltaloc.assembly import DiscreteOperator
from deltaloc.errors import (
    NoConvergence,
    ProblemTooLarge,
    ShiftTooCloseToSpectrum,
    SingularMass,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAX_ITERS = 500
DENSE_LIMIT = 4000
CLUSTER_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class EigenResult:
    eigenvalues: np.ndarray
    # M-orthonormal columns
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    method: str = "lobpcg"

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def lowest(self) -> float:
        return float(self.eigenvalues[0])

    def take(self, count: int) -> "EigenResult":
        return EigenResult(
            eigenvalues=self.eigenvalues[:count],
            eigenvectors=self.eigenvectors[:, :count],
            residuals=self.residuals[:count],
            iterations=self.iterations,
            method=self.method,
        )


def _check_mass(op: DiscreteOperator) -> None:
    diagonal = op.mass.diagonal()
    if diagonal.size == 0 or np.any(diagonal <= 0):
        raise SingularMass("Mass matrix has a non-positive diagonal entry")


def _mass_solve(op: DiscreteOperator, rhs: np.ndarray) -> np.ndarray:
    try:
        return op.mass_lu.solve(rhs)
    except RuntimeError as e:
        raise SingularMass(f"Mass matrix factorization failed: {e}") from e


def _check_tol(tol: float) -> None:
    if not 1e-12 <= tol <= 1e-4:
        raise ValueError(f"Tolerance must lie in [1e-12, 1e-4], got {tol}")


def residual_norms(
    op: DiscreteOperator, eigenvalues: np.ndarray, eigenvectors: np.ndarray
) -> np.ndarray:
    """Per pair ||(K - S) u - lambda M u|| / ||u||_M."""
    A, M = op.hamiltonian, op.mass
    mv = M @ eigenvectors
    r = A @ eigenvectors - mv * eigenvalues[None, :]
    m_norm = np.sqrt(np.abs(np.sum(eigenvectors * mv, axis=0)))
    return np.linalg.norm(r, axis=0) / m_norm


def _rayleigh_ritz(
    op: DiscreteOperator, vectors: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    A, M = op.hamiltonian, op.mass
    a = vectors.T @ (A @ vectors)
    m = vectors.T @ (M @ vectors)
    values, coefficients = scipy.linalg.eigh(0.5 * (a + a.T), 0.5 * (m + m.T))
    return values, vectors @ coefficients


def _finish(
    op: DiscreteOperator,
    values: np.ndarray,
    vectors: np.ndarray,
    k: int,
    iterations: int,
    method: str,
) -> EigenResult:
    order = np.argsort(values, kind="stable")[:k]
    values, vectors = values[order], vectors[:, order]
    return EigenResult(
        eigenvalues=values,
        eigenvectors=vectors,
        residuals=residual_norms(op, values, vectors),
        iterations=iterations,
        method=method,
    )


def _converged(result: EigenResult, tol: float) -> bool:
    bound = tol * np.maximum(1.0, np.abs(result.eigenvalues))
    return bool(np.all(result.residuals <= bound))


def _dense(op: DiscreteOperator, k: int) -> EigenResult:
    A = op.hamiltonian.toarray()
    M = op.mass.toarray()
    try:
        values, vectors = scipy.linalg.eigh(A, M, subset_by_index=[0, k - 1])
    except np.linalg.LinAlgError as e:
        raise SingularMass(f"Dense solve failed: {e}") from e
    return _finish(op, values, vectors, k, 0, "dense")


def _preconditioner(op: DiscreteOperator) -> LinearOperator:
    shifted = (op.stiffness + op.mass).tocsc()
    try:
        ilu = spilu(shifted, drop_tol=1e-6, fill_factor=20)
        apply: Callable[[np.ndarray], np.ndarray] = ilu.solve
    except RuntimeError:
        logger.debug("Incomplete factorization failed, falling back to Jacobi")
        inverse = 1.0 / shifted.diagonal()
        apply = lambda x: inverse * x  # noqa: E731

    def matmat(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 1:
            return apply(x)
        return np.column_stack([apply(column) for column in x.T])

    return LinearOperator(shifted.shape, matvec=matmat, matmat=matmat, dtype=float)


def _lobpcg(
    op: DiscreteOperator, k: int, block: int, tol: float, seed: int, maxiter: int
) -> Optional[EigenResult]:
    rng = np.random.default_rng(seed)
    start = rng.standard_normal((op.n_dofs, block))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            values, vectors, history = lobpcg(
                op.hamiltonian,
                start,
                B=op.mass,
                M=_preconditioner(op),
                tol=tol,
                maxiter=maxiter,
                largest=False,
                retResidualNormsHistory=True,
            )
        except (np.linalg.LinAlgError, ValueError, ArithmeticError) as e:
            logger.debug("lobpcg failed: %s", e)
            return None

    values, vectors = _rayleigh_ritz(op, vectors)
    return _finish(op, values, vectors, k, len(history), "lobpcg")


def _shift_invert(
    op: DiscreteOperator, k: int, seed: int, estimate: Optional[float]
) -> EigenResult:
    if estimate is not None and math.isfinite(estimate):
        sigma = estimate - 0.1 * max(1.0, abs(estimate))
    else:
        surface_rows = np.asarray(abs(op.surface).sum(axis=1)).ravel()
        sigma = -1.0 - float(np.max(surface_rows / op.lumped_mass))

    ncv = min(op.n_dofs - 1, max(2 * k + 1, 20))
    v0 = np.random.default_rng(seed).standard_normal(op.n_dofs)
    try:
        values, vectors = eigsh(
            op.hamiltonian.tocsc(),
            k=min(k, op.n_dofs - 1),
            M=op.mass.tocsc(),
            sigma=sigma,
            which="LM",
            v0=v0,
            ncv=ncv,
            tol=0,
        )
    except ArpackNoConvergence as e:
        raise NoConvergence(MAX_ITERS, []) from e
    except (ArpackError, RuntimeError) as e:
        # the shifted factorization is singular when sigma is an eigenvalue
        raise ShiftTooCloseToSpectrum(f"Shift-invert at {sigma} failed: {e}") from e
    values, vectors = _rayleigh_ritz(op, vectors)
    return _finish(op, values, vectors, k, 0, "shift-invert")


def lowest_eigenpairs(
    op: DiscreteOperator,
    k: int = 1,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    maxiter: int = MAX_ITERS,
    block: Optional[int] = None,
) -> EigenResult:
    """
    lowest_eigenpairs k lowest eigenpairs of the generalized problem

    Parameters
    ----------
    op : DiscreteOperator
        pencil with boundary conditions applied
    k : int
        number of pairs
    tol : float
        residual tolerance relative to max(1, |lambda|)
    seed : int
        seed of the starting block
    maxiter : int
        block iteration limit
    block : Optional[int]
        block size, at least k + 2

    Returns
    -------
    EigenResult
        ascending eigenvalues with M-orthonormal eigenvectors
    """
    _check_tol(tol)
    _check_mass(op)
    n = op.n_dofs
    if not 1 <= k <= n:
        raise ValueError(f"Requested {k} eigenpairs of a problem with {n} dofs")

    block = max(k + 2, block or 0)
    if n < 5 * block:
        return _dense(op, k)

    result = _lobpcg(op, k, block, tol, seed, maxiter)
    if result is not None and _converged(result, tol):
        return result

    estimate = None if result is None else float(result.eigenvalues[0])
    logger.info(
        "Block iteration did not reach tol=%g on %d dofs, using shift-invert", tol, n
    )
    fallback = _shift_invert(op, k, seed, estimate)
    if not _converged(fallback, tol):
        raise NoConvergence(maxiter, fallback.residuals.tolist())
    return fallback


def dense_reference(op: DiscreteOperator, k: Optional[int] = None) -> EigenResult:
    n = op.n_dofs
    if n > DENSE_LIMIT:
        raise ProblemTooLarge(f"Dense reference limited to {DENSE_LIMIT} dofs, got {n}")
    _check_mass(op)
    return _dense(op, n if k is None else min(k, n))


def spectrum_up_to(
    op: DiscreteOperator,
    threshold: float,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    start: int = 4,
) -> EigenResult:
    """
    spectrum_up_to lowest eigenpairs, growing the count until one computed
    eigenvalue lies above threshold or the whole spectrum is known
    """
    n = op.n_dofs
    k = min(start, n)
    while True:
        result = lowest_eigenpairs(op, k, tol=tol, seed=seed)
        if result.eigenvalues[-1] > threshold + CLUSTER_TOL or k == n:
            return result
        k = min(2 * k, n)


def eigenvalues_below(
    op: DiscreteOperator,
    threshold: float,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    start: int = 4,
) -> EigenResult:
    """All eigenpairs with eigenvalue <= threshold, possibly none."""
    result = spectrum_up_to(op, threshold, tol, seed, start)
    return result.take(int(np.count_nonzero(result.eigenvalues <= threshold)))


def _krylov(method, A, b, tol: float, **kwargs) -> Tuple[np.ndarray, int]:
    try:
        return method(A, b, rtol=tol, **kwargs)
    except TypeError:
        # older scipy spells the relative tolerance "tol"
        return method(A, b, tol=tol, **kwargs)


class ShiftedSolver:
    """
    Solves (K - S - shift M) x = rhs for many right-hand sides with one
    factorization.
    """

    def __init__(self, op: DiscreteOperator, shift: float, tol: float = DEFAULT_TOL):
        _check_tol(tol)
        _check_mass(op)
        self.op = op
        self.shift = float(shift)
        self.tol = tol
        self.margin = math.sqrt(tol) * max(1.0, abs(self.shift))

        self._matrix = (op.hamiltonian - self.shift * op.mass).tocsr()
        try:
            self._lu = splu(self._matrix.tocsc())
        except RuntimeError as e:
            raise ShiftTooCloseToSpectrum(
                f"Shifted operator at {self.shift} is singular: {e}"
            ) from e

        self._preconditioner = LinearOperator(
            self._matrix.shape, matvec=self._lu.solve, dtype=float
        )

    def distance_bound(self, x: np.ndarray, rhs: np.ndarray) -> float:
        """
        distance_bound upper bound ||rhs||_{M^-1} / ||x||_M on the distance
        from the shift to the spectrum
        """
        rhs_norm = math.sqrt(max(float(rhs @ _mass_solve(self.op, rhs)), 0.0))
        x_norm = math.sqrt(max(float(x @ (self.op.mass @ x)), 0.0))
        if x_norm == 0.0:
            return math.inf
        return rhs_norm / x_norm

    def _accurate(self, x: np.ndarray, rhs: np.ndarray) -> bool:
        residual = np.linalg.norm(self._matrix @ x - rhs)
        return bool(residual <= 10 * self.tol * np.linalg.norm(rhs))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if not np.any(rhs):
            return np.zeros_like(rhs)

        maxiter = max(100, self.op.n_dofs // 10)
        x, info = _krylov(
            cg, self._matrix, rhs, self.tol, M=self._preconditioner, maxiter=maxiter, atol=0.0
        )
        if info != 0 or not self._accurate(x, rhs):
            logger.debug("CG stopped with info=%d at shift %g, trying MINRES", info, self.shift)
            x, info = _krylov(
                minres, self._matrix, rhs, self.tol, x0=x, maxiter=10 * maxiter
            )
            if info != 0 or not self._accurate(x, rhs):
                raise ShiftTooCloseToSpectrum(
                    f"Shifted solve at {self.shift} did not converge (info={info})"
                )

        bound = self.distance_bound(x, rhs)
        if bound < self.margin:
            raise ShiftTooCloseToSpectrum(
                f"Shift {self.shift} is within {bound:.3g} of the spectrum"
            )
        return x

    __call__ = solve


def shifted_solve(
    op: DiscreteOperator, shift: float, rhs: np.ndarray, tol: float = DEFAULT_TOL
) -> np.ndarray:
    return ShiftedSolver(op, shift, tol).solve(rhs)


def mass_gram(result: EigenResult, op: DiscreteOperator) -> np.ndarray:
    vectors = result.eigenvectors
    return vectors.T @ (op.mass @ vectors)


def from_dense(K: np.ndarray, M: np.ndarray) -> DiscreteOperator:
    return DiscreteOperator.from_pencil(sp.csr_matrix(K), sp.csr_matrix(M))
