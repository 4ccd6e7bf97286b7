"""Measurement operators: dense matrices and row-subsampled DFTs."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "DegenerateOperatorError",
    "DenseOperator",
    "SubsampledDFTOperator",
    "ColumnScaling",
    "MeasurementOperator",
    "gaussian_operator",
    "subsampled_dft",
    "dft_matrix",
    "apply",
    "adjoint_apply",
    "normalize_columns",
    "unnormalize_solution",
    "operator_header",
    "save_operator",
    "load_operator",
]


class DegenerateOperatorError(ValueError):
    """Raised when an operator has a zero column."""


def _check_dim(x, d):
    x = np.asarray(x)
    if x.shape != (d,):
        raise ValueError(f"expected a vector of shape ({d},), got {x.shape}")
    return x


class DenseOperator:
    """Explicit ``m x d`` matrix."""

    kind = "dense"

    def __init__(self, matrix, seed: int | None = None):
        matrix = np.asarray(matrix)
        if matrix.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("matrix has non-finite entries")
        self.matrix = matrix.view()
        self.matrix.setflags(write=False)
        self.seed = seed

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.matrix)

    def apply(self, x) -> np.ndarray:
        return self.matrix @ _check_dim(x, self.d)

    def adjoint(self, y) -> np.ndarray:
        y = _check_dim(y, self.m)
        if self.is_complex:
            return self.matrix.conj().T @ y
        return self.matrix.T @ y

    def columns(self, idx) -> np.ndarray:
        return self.matrix[:, np.asarray(idx, dtype=np.intp)]

    def to_dense(self) -> np.ndarray:
        return np.array(self.matrix)


class SubsampledDFTOperator:
    """Rows ``rows`` of the ``d``-point DFT with kernel ``exp(-2 pi i jk / d)``.

    With ``normalization="unitary"`` the full transform is scaled by
    ``1/sqrt(d)``; ``"columns"`` scales by ``1/sqrt(m)`` instead, which gives
    every column unit norm.
    """

    kind = "dft"

    def __init__(self, d: int, rows, normalization: str = "unitary", seed: int | None = None,
                 mode: str | None = None):
        rows = np.asarray(rows, dtype=np.intp)
        if rows.ndim != 1 or rows.size == 0:
            raise ValueError("rows must be a non-empty 1-D index array")
        if np.any(np.diff(rows) <= 0):
            raise ValueError("rows must be strictly increasing")
        if rows[0] < 0 or rows[-1] >= d:
            raise ValueError(f"rows out of range [0, {d})")
        if normalization not in ("unitary", "columns"):
            raise ValueError(f"unknown normalization {normalization!r}")
        self.d = int(d)
        self.rows = rows.view()
        self.rows.setflags(write=False)
        self.normalization = normalization
        self.seed = seed
        self.mode = mode

    @property
    def m(self) -> int:
        return self.rows.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.d)

    is_complex = True

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.d if self.normalization == "unitary" else self.m)

    def apply(self, x) -> np.ndarray:
        x = _check_dim(x, self.d)
        return np.fft.fft(x)[self.rows] * self.scale

    def adjoint(self, y) -> np.ndarray:
        y = _check_dim(y, self.m)
        full = np.zeros(self.d, dtype=np.complex128)
        full[self.rows] = y
        # ifft carries a 1/d factor; undo it to get the plain conjugate transpose
        return np.fft.ifft(full) * (self.d * self.scale)

    def columns(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp)
        phase = np.outer(self.rows, idx) % self.d
        return np.exp(-2j * np.pi * phase / self.d) * self.scale

    def to_dense(self) -> np.ndarray:
        return self.columns(np.arange(self.d))


MeasurementOperator = Union[DenseOperator, SubsampledDFTOperator]


@dataclass(frozen=True)
class ColumnScaling:
    """Original column norms of an operator that was normalised to unit columns."""

    scales: np.ndarray

    def __post_init__(self):
        scales = np.asarray(self.scales, dtype=np.float64)
        if np.any(~(scales > 0)):
            raise ValueError("column scales must be positive")
        object.__setattr__(self, "scales", scales)


def gaussian_operator(m: int, d: int, rng_seed=None, field: str = "real") -> DenseOperator:
    """Matrix with i.i.d. standard normal entries (not divided by ``sqrt(m)``).

    For ``field="complex"`` real and imaginary parts are independent with
    variance 1/2 each.
    """
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive")
    rng = np.random.default_rng(rng_seed)
    if field == "complex":
        a = (rng.standard_normal((m, d)) + 1j * rng.standard_normal((m, d))) / np.sqrt(2)
    else:
        a = rng.standard_normal((m, d))
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return DenseOperator(a, seed=seed)


def subsampled_dft(d: int, m: int, mode: str = "uniform", seed=None) -> SubsampledDFTOperator:
    """Pick ``m`` DFT rows, uniformly without replacement or the ``m`` lowest."""
    if not 1 <= m <= d:
        raise ValueError(f"need 1 <= m <= d, got m={m}, d={d}")
    if mode == "uniform":
        rows = np.sort(np.random.default_rng(seed).choice(d, size=m, replace=False))
    elif mode == "lowest":
        rows = np.arange(m)
    else:
        raise ValueError(f"unknown row selection mode {mode!r}")
    int_seed = seed if isinstance(seed, (int, np.integer)) else None
    return SubsampledDFTOperator(d, rows, seed=int_seed, mode=mode)


def dft_matrix(d: int) -> np.ndarray:
    """Unitary DFT matrix built entry by entry, as an independent reference."""
    j = np.arange(d)
    return np.exp(-2j * np.pi * np.outer(j, j) / d) / np.sqrt(d)


def apply(op: MeasurementOperator, x) -> np.ndarray:
    return op.apply(x)


def adjoint_apply(op: MeasurementOperator, y) -> np.ndarray:
    return op.adjoint(y)


def normalize_columns(op: MeasurementOperator):
    """Return ``(op_unit, scaling)`` with unit-norm columns and the original norms.

    A solution ``z`` for ``op_unit`` maps back through
    :func:`unnormalize_solution`. DFT columns all have norm ``sqrt(m/d)``
    under the unitary convention, so the DFT case only switches convention.
    """
    if isinstance(op, SubsampledDFTOperator):
        norm = op.scale * np.sqrt(op.m)
        unit = SubsampledDFTOperator(op.d, op.rows, normalization="columns",
                                     seed=op.seed, mode=op.mode)
        return unit, ColumnScaling(np.full(op.d, norm))
    norms = np.linalg.norm(op.matrix, axis=0)
    if np.any(norms == 0):
        raise DegenerateOperatorError(
            f"zero column(s) at {np.flatnonzero(norms == 0).tolist()}")
    return DenseOperator(op.matrix / norms, seed=op.seed), ColumnScaling(norms)


def unnormalize_solution(x, scaling: ColumnScaling) -> np.ndarray:
    return np.asarray(x) / scaling.scales


def operator_header(op: MeasurementOperator) -> dict:
    if isinstance(op, SubsampledDFTOperator):
        return {"kind": "dft", "m": op.m, "d": op.d, "seed": op.seed, "mode": op.mode,
                "normalization": op.normalization, "rows": op.rows.tolist()}
    return {"kind": "dense", "m": op.m, "d": op.d, "seed": op.seed,
            "dtype": "complex128" if op.is_complex else "float64"}


def save_operator(op: MeasurementOperator, path, with_matrix: bool = True) -> None:
    """Write ``<path>.json`` and, for dense operators, ``<path>.bin``.

    The blob is the row-major matrix as little-endian float64 (complex
    matrices interleave real and imaginary parts).
    """
    from pathlib import Path

    path = Path(path)
    header = operator_header(op)
    if isinstance(op, DenseOperator) and with_matrix:
        header["blob"] = path.with_suffix(".bin").name
        dt = "<c16" if op.is_complex else "<f8"
        path.with_suffix(".bin").write_bytes(np.ascontiguousarray(op.matrix, dtype=dt).tobytes())
    path.with_suffix(".json").write_text(json.dumps(header, indent=2))


def load_operator(path) -> MeasurementOperator:
    from pathlib import Path

    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    if header["kind"] == "dft":
        return SubsampledDFTOperator(header["d"], header["rows"],
                                     normalization=header.get("normalization", "unitary"),
                                     seed=header.get("seed"), mode=header.get("mode"))
    if "blob" in header:
        dt = "<c16" if header.get("dtype") == "complex128" else "<f8"
        raw = (path.parent / header["blob"]).read_bytes()
        a = np.frombuffer(raw, dtype=dt).reshape(header["m"], header["d"]).copy()
        return DenseOperator(a, seed=header.get("seed"))
    if header.get("seed") is None:
        raise ValueError("dense operator header has neither a blob nor a seed")
    field = "complex" if header.get("dtype") == "complex128" else "real"
    return gaussian_operator(header["m"], header["d"], header["seed"], field=field)
