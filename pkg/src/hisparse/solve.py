"""HTP and HiHTP iterations with restricted least squares."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, lsqr

from .measure import MeasurementOperator
from .model import FlatSparsity, HierarchicalSupport, Sparsity, support_from_indices
from .threshold import select_top_k, support_indices

__all__ = [
    "SolverOptions",
    "SolveResult",
    "LeastSquaresInfo",
    "UnderdeterminedWarning",
    "restricted_least_squares",
    "proxy_step",
    "hihtp",
    "htp",
    "STOP_STALLED",
    "STOP_MAX_ITERS",
    "STOP_RESIDUAL",
]

logger = logging.getLogger(__name__)

STOP_STALLED = "support_stalled"
STOP_MAX_ITERS = "max_iters"
STOP_RESIDUAL = "residual_tol"


class UnderdeterminedWarning(UserWarning):
    """The restricted system has more unknowns than measurements."""


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 100
    support_stall_stop: bool = True
    residual_tol: float = 0.0
    ls_tol: float = 1e-12
    ls_max_iters: Optional[int] = None
    # restricted systems up to this many columns are solved directly
    direct_limit: int = 2048
    record_iterates: bool = False
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.residual_tol < 0 or self.ls_tol < 0:
            raise ValueError("tolerances must be nonnegative")


@dataclass
class SolveResult:
    estimate: np.ndarray
    support: HierarchicalSupport
    iterations: int
    residual_norms: list[float]
    stop_reason: str
    rank_deficient: bool = False
    cycle_period: Optional[int] = None
    iterates: Optional[list[np.ndarray]] = field(default=None, repr=False)

    @property
    def support_indices(self) -> np.ndarray:
        return self.support.flatten()

    def to_json(self, include_estimate: bool = False) -> dict:
        out = {
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "residual_norms": [float(r) for r in self.residual_norms],
            "support": self.support_indices.tolist(),
            "rank_deficient": self.rank_deficient,
            "cycle_period": self.cycle_period,
        }
        if include_estimate:
            if np.iscomplexobj(self.estimate):
                out["estimate"] = {"real": self.estimate.real.tolist(),
                                   "imag": self.estimate.imag.tolist()}
            else:
                out["estimate"] = self.estimate.tolist()
        return out


@dataclass(frozen=True)
class LeastSquaresInfo:
    rank_deficient: bool
    method: str
    iterations: int = 0


def proxy_step(op: MeasurementOperator, y, x_k) -> np.ndarray:
    """Gradient proxy ``x_k + A^*(y - A x_k)``."""
    return x_k + op.adjoint(y - op.apply(x_k))


def _result_dtype(op, y):
    return np.result_type(np.complex128 if op.is_complex else np.float64, np.asarray(y).dtype)


def restricted_least_squares(op: MeasurementOperator, y, omega, opts: SolverOptions | None = None,
                             return_info: bool = False):
    """Minimise ``||y - A z||`` over vectors ``z`` supported on ``omega``.

    Small supports are solved directly through the SVD-based LAPACK driver,
    which yields the minimum-norm solution for rank-deficient column sets.
    Larger ones run LSQR against ``apply``/``adjoint``.
    """
    opts = opts or SolverOptions()
    y = np.asarray(y)
    omega = np.asarray(omega, dtype=np.intp)
    m, d = op.shape
    if y.shape != (m,):
        raise ValueError(f"measurement vector has shape {y.shape}, expected ({m},)")
    if omega.size and (omega.min() < 0 or omega.max() >= d):
        raise IndexError(f"support index out of range [0, {d})")
    if omega.size > m:
        warnings.warn(f"support of size {omega.size} exceeds m={m}", UnderdeterminedWarning,
                      stacklevel=2)
    z = np.zeros(d, dtype=_result_dtype(op, y))
    if omega.size == 0:
        info = LeastSquaresInfo(False, "empty")
    elif omega.size <= opts.direct_limit:
        cols = op.columns(omega)
        coef, _, rank, _ = np.linalg.lstsq(cols, y, rcond=None)
        z[omega] = coef
        info = LeastSquaresInfo(bool(rank < omega.size), "direct")
    else:
        dtype = z.dtype

        def matvec(c):
            full = np.zeros(d, dtype=dtype)
            full[omega] = np.ravel(c)
            return op.apply(full)

        def rmatvec(r):
            return op.adjoint(np.ravel(r))[omega]

        lin = LinearOperator((m, omega.size), matvec=matvec, rmatvec=rmatvec, dtype=dtype)
        sol = lsqr(lin, y, atol=opts.ls_tol, btol=opts.ls_tol, iter_lim=opts.ls_max_iters)
        z[omega] = sol[0]
        # istop 1/2: solved; 3/7 hit limits; anything else signals trouble
        info = LeastSquaresInfo(sol[1] not in (1, 2), "lsqr", int(sol[2]))
    return (z, info) if return_info else z


def _pursuit(op, y, thresholder: Callable[[np.ndarray], np.ndarray], sparsity: Sparsity,
             opts: SolverOptions) -> SolveResult:
    y = np.asarray(y)
    m, d = op.shape
    if y.shape != (m,):
        raise ValueError(f"measurement vector has shape {y.shape}, expected ({m},)")
    dtype = _result_dtype(op, y)
    x = np.zeros(d, dtype=dtype) if opts.x0 is None else np.asarray(opts.x0, dtype=dtype).copy()
    omega = None
    seen: dict[bytes, int] = {}
    residuals: list[float] = []
    iterates = [x.copy()] if opts.record_iterates else None
    rank_deficient = False
    cycle_period = None
    stop = STOP_MAX_ITERS
    residual = float(np.linalg.norm(y - op.apply(x)))
    k = 0
    for k in range(1, opts.max_iters + 1):
        new_omega = thresholder(proxy_step(op, y, x))
        if omega is not None and opts.support_stall_stop and np.array_equal(new_omega, omega):
            residuals.append(residual)
            if iterates is not None:
                iterates.append(x.copy())
            stop = STOP_STALLED
            break
        key = new_omega.tobytes()
        if cycle_period is None and key in seen and seen[key] < k - 1:
            cycle_period = k - seen[key]
            logger.info("support cycle of period %d detected at iteration %d", cycle_period, k)
        seen[key] = k
        omega = new_omega
        x, info = restricted_least_squares(op, y, omega, opts, return_info=True)
        rank_deficient |= info.rank_deficient
        residual = float(np.linalg.norm(y - op.apply(x)))
        residuals.append(residual)
        if iterates is not None:
            iterates.append(x.copy())
        if opts.residual_tol > 0 and residual <= opts.residual_tol:
            stop = STOP_RESIDUAL
            break
    if omega is None:
        omega = np.empty(0, dtype=np.intp)
    return SolveResult(
        estimate=x,
        support=support_from_indices(sparsity, omega),
        iterations=k,
        residual_norms=residuals,
        stop_reason=stop,
        rank_deficient=rank_deficient,
        cycle_period=cycle_period,
        iterates=iterates,
    )


def hihtp(op: MeasurementOperator, y, sparsity: Sparsity, opts: SolverOptions | None = None) -> SolveResult:
    """Hierarchical hard thresholding pursuit.

    Each iteration thresholds the proxy ``x + A^*(y - A x)`` with the
    hierarchical operator for ``sparsity`` and solves least squares on the
    resulting support. Stops when the support repeats, after ``max_iters``
    iterations, or once the residual norm drops to ``residual_tol``.
    """
    opts = opts or SolverOptions()
    if op.shape[1] != (sparsity.d):
        raise ValueError(f"operator has {op.shape[1]} columns, sparsity expects {sparsity.d}")
    return _pursuit(op, y, lambda z: support_indices(z, sparsity), sparsity, opts)


def htp(op: MeasurementOperator, y, k_sparsity: int, opts: SolverOptions | None = None) -> SolveResult:
    """Plain hard thresholding pursuit with a top-``k`` support."""
    opts = opts or SolverOptions()
    d = op.shape[1]
    # a single block of length d holding k entries is plain k-sparsity
    flat = FlatSparsity(1, d, 1, k_sparsity)
    return _pursuit(op, y, lambda z: select_top_k(z, k_sparsity), flat, opts)
