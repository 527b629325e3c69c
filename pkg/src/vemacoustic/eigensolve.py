"""Generalized symmetric eigenproblem ``Ahat p = lambda B p`` and frequency recovery."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConsistencyError, ConvergenceError, MatrixError, ParameterError

log = logging.getLogger(__name__)

DENSE_AUTO = "dense-auto"
SPARSE = "sparse"
DENSE_LIMIT = 2000
SHIFT_CLAMP = 1e-8
SHIFT_VIOLATION = 1e-6
SEED = 20240611

OMEGA = "omega"
NU = "nu"


@dataclass(frozen=True)
class EigenSolverConfig:
    """``mode`` is ``"dense-auto"`` (dense LAPACK up to n = 2000, sparse above)
    or ``"sparse"`` (always shift-invert Lanczos)."""

    k: int = 6
    tol: float = 1e-9
    max_iterations: int = 5000
    mode: str = DENSE_AUTO
    ncv: int | None = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ParameterError(f"k must be a positive integer, got {self.k}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if self.mode not in (DENSE_AUTO, SPARSE):
            raise ParameterError(f"unknown solver mode {self.mode!r}")


@dataclass(frozen=True)
class Spectrum:
    lambdas: np.ndarray
    vectors: np.ndarray
    omegas: np.ndarray
    residuals: np.ndarray
    method: str = ""

    def __len__(self):
        return len(self.lambdas)


def _operator_scale(Ahat, B, lambdas):
    na = spla.norm(Ahat, 1) if sp.issparse(Ahat) else np.linalg.norm(Ahat, 1)
    nb = spla.norm(B, 1) if sp.issparse(B) else np.linalg.norm(B, 1)
    return na + np.abs(lambdas) * nb


def residual_check(system_or_pair, spectrum_or_lambdas, vectors=None) -> np.ndarray:
    """Recompute ``||Ahat x - lambda B x||_2 / ||x||_2`` for every mode.

    Accepts a :class:`GlobalSystem` (or an ``(Ahat, B)`` pair) and either a
    :class:`Spectrum` or explicit ``lambdas`` and ``vectors``.
    """
    if isinstance(system_or_pair, tuple):
        Ahat, B = system_or_pair
    else:
        Ahat, B = system_or_pair.Ahat, system_or_pair.B
    if vectors is None:
        lambdas, vectors = spectrum_or_lambdas.lambdas, spectrum_or_lambdas.vectors
    else:
        lambdas = spectrum_or_lambdas
    X = np.asarray(vectors, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    R = Ahat @ X - (B @ X) * lambdas[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(X, axis=0)


def _check_spd(B, name="B"):
    if B.shape[0] != B.shape[1]:
        raise MatrixError(f"{name} is not square")
    if abs(B - B.T).max() > 1e-12 * abs(B).max():
        raise MatrixError(f"{name} is not symmetric")
    d = B.diagonal()
    if np.any(d <= 0):
        raise MatrixError(f"{name} is not positive definite (non-positive diagonal)")


def _rayleigh_ritz(Ahat, B, V):
    """B-orthonormalize a basis and diagonalize the projected pencil."""
    Ap = V.T @ (Ahat @ V)
    Bp = V.T @ (B @ V)
    w, Q = la.eigh(0.5 * (Ap + Ap.T), 0.5 * (Bp + Bp.T))
    return w, V @ Q


def _dense(Ahat, B, k):
    Ad = Ahat.toarray() if sp.issparse(Ahat) else np.asarray(Ahat, dtype=float)
    Bd = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    try:
        # Cholesky of B reduces to a standard symmetric problem
        w, V = la.eigh(Ad, Bd, subset_by_index=[0, k - 1], driver="gvx")
    except la.LinAlgError as exc:
        raise MatrixError(f"B is not positive definite: {exc}") from None
    return w, V


def _sparse(Ahat, B, k, cfg):
    n = Ahat.shape[0]
    try:
        lu = spla.splu(sp.csc_matrix(Ahat))
    except RuntimeError as exc:
        raise MatrixError(f"shifted matrix is singular: {exc}") from None
    op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    v0 = np.random.default_rng(SEED).standard_normal(n)
    ncv = cfg.ncv or min(n, max(2 * k + 1, 20))
    try:
        # shift-invert about 0: the k largest theta = 1/lambda are wanted
        _, V = spla.eigsh(
            Ahat, k=k, M=B, sigma=0.0, which="LM", OPinv=op, v0=v0, ncv=ncv,
            maxiter=cfg.max_iterations, tol=0.0,
        )
    except spla.ArpackNoConvergence as exc:
        V = exc.eigenvectors
        if V is None or V.shape[1] < k:
            raise ConvergenceError(f"ARPACK did not converge: {exc}") from None
    return _rayleigh_ritz(Ahat, B, V)


def solve(system, cfg: EigenSolverConfig = EigenSolverConfig(), B=None) -> Spectrum:
    """k smallest eigenpairs of ``(Ahat, B)``, ascending, B-orthonormal.

    ``system`` is a :class:`GlobalSystem`, or ``Ahat`` itself when ``B`` is
    passed explicitly. The constant mode (lambda = 1) is returned as the
    first pair.

    Raises
    ------
    MatrixError
        If B is not symmetric positive definite.
    ConvergenceError
        If some residual exceeds ``tol`` relative to the pencil scale;
        ``exc.residuals`` carries the values reached.
    """
    T = None
    if B is None:
        Ahat, B = system.Ahat, system.B
        if getattr(system, "T", None) is not None:
            T = system.T
            Ahat_s, B_s = system.Ahat_y, system.B_y
        else:
            Ahat_s, B_s = Ahat, B
    else:
        Ahat = Ahat_s = system
        B_s = B
    n = Ahat.shape[0]
    if not cfg.k < n:
        raise ParameterError(f"requested k = {cfg.k} eigenpairs of an n = {n} pencil")
    _check_spd(B)
    if cfg.mode == DENSE_AUTO and n <= DENSE_LIMIT:
        w, V = _dense(Ahat_s, B_s, cfg.k)
        method = "dense"
    else:
        w, V = _sparse(Ahat_s, B_s, cfg.k, cfg)
        method = "sparse"
    if T is not None:
        V = T @ V
    order = np.argsort(w, kind="stable")
    w, V = w[order], V[:, order]
    # fix the sign so that the largest-magnitude entry is positive
    idx = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[idx, np.arange(V.shape[1])])
    res = residual_check((Ahat, B), w, V)
    rel = res / _operator_scale(Ahat, B, w)
    if np.any(rel > cfg.tol):
        raise ConvergenceError(
            f"relative residuals {np.array2string(rel, precision=2)} exceed tol {cfg.tol:g}",
            residuals=res,
        )
    omegas = recover_frequencies(w, OMEGA, strict=False)
    return Spectrum(lambdas=w, vectors=V, omegas=omegas, residuals=res, method=method)


def recover_frequencies(lambdas, normalization=OMEGA, strict=True) -> np.ndarray:
    """``omega = sqrt(lambda - 1)`` or ``nu = (lambda - 1) / pi**2``.

    Negative ``lambda - 1`` from roundoff on the constant mode is clamped to
    zero. A violation beyond ``1e-6`` raises :class:`ConsistencyError` unless
    ``strict`` is false; the threshold is relative to ``max(1, |lambda - 1|)``
    over the given modes, so that stiff materials (``c**2`` of order 1e6)
    are judged on the same footing as ``c = 1``.
    """
    lam = getattr(lambdas, "lambdas", lambdas)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    shifted = lam - 1.0
    scale = max(1.0, float(np.max(np.abs(shifted)))) if len(shifted) else 1.0
    if strict and np.any(shifted < -SHIFT_VIOLATION * scale):
        raise ConsistencyError(f"lambda = {lam.min()!r} violates the shift lambda >= 1")
    shifted = np.maximum(shifted, 0.0)
    if normalization == OMEGA:
        return np.sqrt(shifted)
    if normalization == NU:
        return shifted / np.pi ** 2
    raise ParameterError(f"unknown normalization {normalization!r}")
