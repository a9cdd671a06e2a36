"""Dense float64 matrix helpers, stable reductions, seeded randomness and
transient-allocation accounting.

A "matrix" throughout the package is a C-contiguous 2-D ``numpy.ndarray`` of
``float64``. Working buffers that the attention code allocates go through
:func:`buffer`, which charges every :class:`AllocMeter` active in the current
context; that is the memory figure the benchmark reports.
"""

from __future__ import annotations

import contextvars
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import kernels

__all__ = [
    "ShapeError",
    "NumericError",
    "ContractError",
    "ConfigError",
    "AllocMeter",
    "as_matrix",
    "buffer",
    "identity",
    "matmul",
    "row_softmax",
    "log_sum_exp",
    "make_rng",
    "randn_matrix",
    "sample_without_replacement",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(ValueError):
    """Inconsistent hyper-parameters."""


_ACTIVE_METERS: contextvars.ContextVar[tuple] = contextvars.ContextVar(
    "probsparse_active_meters", default=()
)


@dataclass
class AllocMeter:
    """Cumulative count of transient bytes requested through :func:`buffer`.

    Use as a context manager; nested meters all see the same charges::

        with AllocMeter() as meter:
            attention_dense(q, k, v)
        meter.transient_bytes

    Charges are cumulative, not peak: two sequential 1 MiB score buffers
    count as 2 MiB. ``by_tag`` splits the total by buffer category
    (``"scores"``, ``"sampling"``, ``"activations"``).
    """

    transient_bytes: int = 0
    by_tag: dict = field(default_factory=lambda: defaultdict(int))
    _token: object = field(default=None, repr=False, compare=False)

    def charge(self, nbytes: int, tag: str = "activations") -> None:
        self.transient_bytes += int(nbytes)
        self.by_tag[tag] += int(nbytes)

    def reset(self) -> None:
        self.transient_bytes = 0
        self.by_tag.clear()

    def __enter__(self) -> "AllocMeter":
        self._token = _ACTIVE_METERS.set(_ACTIVE_METERS.get() + (self,))
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_METERS.reset(self._token)
        self._token = None


def buffer(shape, tag: str = "activations") -> np.ndarray:
    """Allocate an uninitialised float64 working buffer and charge it."""
    out = np.empty(shape, dtype=np.float64)
    for meter in _ACTIVE_METERS.get():
        meter.charge(out.nbytes, tag)
    return out


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {m.shape}")
    return m


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.float64)


def matmul(a, b, tag: str = "activations") -> np.ndarray:
    """Row-major product ``a @ b`` into a freshly charged buffer."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = buffer((a.shape[0], b.shape[1]), tag)
    np.matmul(a, b, out=out)
    return out


def row_softmax(m, scale: float = 1.0) -> np.ndarray:
    """Softmax over each row of ``scale * m``, with per-row max subtraction."""
    m = as_matrix(m)
    if not np.isfinite(m).all():
        raise NumericError("row_softmax input contains non-finite values")
    out = buffer(m.shape, "scores")
    out[:] = m
    kernels.softmax_rows_(out, float(scale))
    return out


def log_sum_exp(v) -> float:
    """``max(v) + ln(sum(exp(v - max(v))))`` for a non-empty finite vector."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ContractError("log_sum_exp of an empty vector")
    if not np.isfinite(v).all():
        raise NumericError("log_sum_exp input contains non-finite values")
    return float(kernels.lse_rows(v.reshape(1, -1))[0])


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the same seed yields the same stream on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def randn_matrix(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ContractError(f"randn_matrix needs rows, cols >= 1, got ({rows}, {cols})")
    return rng.standard_normal((rows, cols))


def sample_without_replacement(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` distinct indices from ``range(n)``, sorted ascending."""
    if not 1 <= k <= n:
        raise ContractError(f"need 1 <= k <= n, got k={k}, n={n}")
    if k == n:
        return np.arange(n, dtype=np.int64)
    return np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)


def ceil_count(rate: float, total: float, n: int) -> int:
    """``clamp(ceil(rate * total), 1, n)``, tolerant of products like 0.35*100."""
    return min(max(math.ceil(round(rate * total, 9)), 1), n)
