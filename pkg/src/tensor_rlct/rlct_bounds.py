"""Closed-form RLCT values and the upper bound for the CP model.

All quantities are exact ``Fraction`` values; every one of them is an integer
multiple of 1/8 (or 1/2 for the bound core term).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .tensor_core import ModelSpec

__all__ = ["RlctBound", "rrr_rlct", "tensor_rlct_bound", "reference_bounds"]


def rrr_rlct(N: int, M: int, H: int) -> Fraction:
    """RLCT of ``||BA||^2`` for ``B`` of size N x H and ``A`` of size H x M.

    Parameters
    ----------
    N, M : int
        Outer dimensions, both >= 1.
    H : int
        Inner rank, >= 0.

    Returns
    -------
    Fraction
        The exact value.  ``rrr_rlct(N, M, 0) == 0``.
    """
    for name, value, low in (("N", N, 1), ("M", M, 1), ("H", H, 0)):
        if int(value) != value or value < low:
            raise ValueError(f"{name} must be an integer >= {low}, got {value!r}")
    N, M, H = int(N), int(M), int(H)

    if abs(N - M) <= H <= N + M:
        num = 2 * (N * M + M * H + H * N) - (N * N + M * M + H * H)
        if (H + M - N) % 2:
            num += 1
        return Fraction(num, 8)
    if H <= N - M:
        return Fraction(M * H, 2)
    if H <= M - N:
        return Fraction(N * H, 2)
    if M + N <= H:
        return Fraction(N * M, 2)
    # The four regions cover every integer triple.
    raise AssertionError(f"no case of F matched N={N}, M={M}, H={H}")


def reference_bounds(spec: ModelSpec) -> tuple[Fraction, Fraction]:
    """Return ``(half_params, obvious_lambda1)``.

    ``half_params`` is half the parameter count of the rank-H model;
    ``obvious_lambda1`` is the same quantity for the rank-H0 part only.
    """
    s = spec.I + spec.J + spec.K
    return Fraction(spec.H * s, 2), Fraction(spec.H0 * s, 2)


@dataclass(frozen=True)
class RlctBound:
    spec: ModelSpec
    core_term: Fraction
    m1: Fraction
    m2: Fraction
    m3: Fraction
    half_params: Fraction
    obvious_lambda1: Fraction

    @property
    def m_min(self) -> Fraction:
        return min(self.m1, self.m2, self.m3)

    @property
    def argmin(self) -> list[str]:
        """Names of the ``m`` terms attaining the minimum."""
        lo = self.m_min
        return [name for name in ("m1", "m2", "m3") if getattr(self, name) == lo]

    @property
    def bound(self) -> Fraction:
        return self.core_term + self.m_min


def tensor_rlct_bound(spec: ModelSpec) -> RlctBound:
    """Upper bound on the RLCT of the rank-H CP model with a rank-H0 truth."""
    if spec.H0 < 1:
        raise ValueError("H0 must be >= 1 for the bound to be defined")
    I, J, K, H, H0 = spec.I, spec.J, spec.K, spec.H, spec.H0
    half_params, obvious = reference_bounds(spec)
    return RlctBound(
        spec=spec,
        core_term=Fraction(H0 * (I + J + K) - 2, 2),
        m1=rrr_rlct(I * J, K, H - H0),
        m2=rrr_rlct(J * K, I, H - H0),
        m3=rrr_rlct(K * I, J, H - H0),
        half_params=half_params,
        obvious_lambda1=obvious,
    )


def format_fraction(x: Fraction) -> str:
    """Render ``7`` as ``"7"`` and ``29/2`` as ``"14.5"``."""
    if x.denominator == 1:
        return str(x.numerator)
    return repr(float(x))
