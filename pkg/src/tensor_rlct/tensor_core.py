"""Dense 3-way tensor arithmetic for the Gaussian CP model.

Tensors are plain ``numpy`` arrays of shape ``(I, J, K)`` (C order, so the
flat layout is row-major over ``(i, j, k)``).  A CP parameter is the factor
triple ``(A, B, C)`` with shapes ``(I, H)``, ``(J, H)``, ``(K, H)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionError",
    "ModelSpec",
    "CpParams",
    "compose",
    "frobenius_sq",
    "kl_divergence",
]


class DimensionError(ValueError):
    """Raised when factor matrices or tensors have inconsistent shapes."""


@dataclass(frozen=True)
class ModelSpec:
    """Dimensions of one experiment cell.

    Attributes
    ----------
    I, J, K : int
        Tensor dimensions.
    H : int
        Rank of the learning model.
    H0 : int
        Rank of the true parameter, ``0 <= H0 <= H``.
    n : int
        Number of training tensors.
    """

    I: int
    J: int
    K: int
    H: int
    H0: int
    n: int = 100

    def __post_init__(self):
        for name in ("I", "J", "K", "H", "n"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if int(self.H0) != self.H0 or self.H0 < 0:
            raise ValueError(f"H0 must be a nonnegative integer, got {self.H0!r}")
        if self.H0 > self.H:
            raise ValueError(f"H0 must be <= H, got H0={self.H0}, H={self.H}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.I, self.J, self.K)

    @property
    def n_params(self) -> int:
        """Number of scalar parameters of the rank-H model."""
        return self.H * (self.I + self.J + self.K)

    def key(self) -> tuple[int, ...]:
        return (self.I, self.J, self.K, self.H, self.H0, self.n)


@dataclass(frozen=True, eq=False)
class CpParams:
    """Factor matrices ``A`` (I x H), ``B`` (J x H), ``C`` (K x H)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        mats = []
        for name in ("A", "B", "C"):
            m = np.array(getattr(self, name), dtype=float)
            if m.ndim != 2:
                raise DimensionError(f"{name} must be a matrix, got shape {m.shape}")
            m.setflags(write=False)
            object.__setattr__(self, name, m)
            mats.append(m)
        ranks = {m.shape[1] for m in mats}
        if len(ranks) != 1:
            raise DimensionError(
                "A, B, C must have the same number of columns, got "
                f"{[m.shape[1] for m in mats]}"
            )

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.A.shape[0], self.B.shape[0], self.C.shape[0])

    @property
    def size(self) -> int:
        return self.A.size + self.B.size + self.C.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.A.ravel(), self.B.ravel(), self.C.ravel()])

    @classmethod
    def from_vector(cls, vec, dims, rank) -> "CpParams":
        I, J, K = dims
        vec = np.asarray(vec, dtype=float)
        if vec.shape != ((I + J + K) * rank,):
            raise DimensionError(
                f"vector of length {vec.size} does not fit dims {dims} at rank {rank}"
            )
        a, b = I * rank, (I + J) * rank
        return cls(
            vec[:a].reshape(I, rank),
            vec[a:b].reshape(J, rank),
            vec[b:].reshape(K, rank),
        )

    @classmethod
    def zeros(cls, dims, rank) -> "CpParams":
        I, J, K = dims
        return cls(np.zeros((I, rank)), np.zeros((J, rank)), np.zeros((K, rank)))

    def check_dims(self, dims) -> None:
        if tuple(dims) != self.dims:
            raise DimensionError(f"parameter dims {self.dims} do not match {tuple(dims)}")

    def __eq__(self, other):
        if not isinstance(other, CpParams):
            return NotImplemented
        return all(
            np.array_equal(x, y)
            for x, y in zip((self.A, self.B, self.C), (other.A, other.B, other.C))
        )

    __hash__ = None


def compose(params: CpParams) -> np.ndarray:
    """Return the tensor ``T[i, j, k] = sum_h A[i, h] B[j, h] C[k, h]``."""
    return np.einsum("ih,jh,kh->ijk", params.A, params.B, params.C)


def compose_batch(A, B, C) -> np.ndarray:
    """Vectorized ``compose`` over a leading batch axis.

    ``A``, ``B``, ``C`` have shapes ``(c, I, H)``, ``(c, J, H)``, ``(c, K, H)``;
    the result has shape ``(c, I, J, K)``.
    """
    c, I, H = A.shape
    J, K = B.shape[1], C.shape[1]
    AB = (A[:, :, None, :] * B[:, None, :, :]).reshape(c, I * J, H)
    return np.matmul(AB, np.swapaxes(C, 1, 2)).reshape(c, I, J, K)


def frobenius_sq(t) -> float:
    """Sum of squared entries of ``t``."""
    t = np.asarray(t, dtype=float)
    return float(np.dot(t.ravel(), t.ravel()))


def kl_divergence(w: CpParams, w0: CpParams) -> float:
    """KL divergence between the unit-variance Gaussian models at ``w0`` and ``w``.

    Both directions coincide and equal ``0.5 * ||compose(w) - compose(w0)||^2``.
    The ranks of ``w`` and ``w0`` may differ.
    """
    if w.dims != w0.dims:
        raise DimensionError(f"dims differ: {w.dims} vs {w0.dims}")
    return 0.5 * frobenius_sq(compose(w) - compose(w0))
