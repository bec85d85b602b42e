"""Gaussian CP model: likelihood, prior, truth generation and data sampling.

Each observation is an I x J x K tensor whose entries are independent
``N(compose(w)[i, j, k], 1)``.  The noise variance is fixed at 1.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import CpParams, DimensionError, ModelSpec, compose, frobenius_sq

__all__ = [
    "PriorSpec",
    "Dataset",
    "log_likelihood",
    "log_prior",
    "draw_true_params",
    "sample_dataset",
    "save_dataset_json",
    "load_dataset_json",
    "save_dataset_csv",
    "load_dataset_csv",
]

LOG_2PI = math.log(2.0 * math.pi)
DEGENERATE_COLUMN_THRESHOLD = 0.1
MAX_TRUTH_ATTEMPTS = 100


@dataclass(frozen=True)
class PriorSpec:
    """Prior on every entry of ``A``, ``B``, ``C``.

    ``kind="gaussian"`` puts an independent ``N(0, scale^2)`` on each entry;
    ``kind="uniform_box"`` is the (unnormalized) indicator of
    ``max |entry| <= scale``.
    """

    kind: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform_box"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError(f"prior scale must be positive, got {self.scale!r}")

    @classmethod
    def gaussian(cls, sigma=1.0):
        return cls("gaussian", sigma)

    @classmethod
    def uniform_box(cls, half_width):
        return cls("uniform_box", half_width)

    def contains(self, w: CpParams) -> bool:
        if self.kind == "gaussian":
            return True
        return bool(np.max(np.abs(w.to_vector()), initial=0.0) <= self.scale)


@dataclass(frozen=True, eq=False)
class Dataset:
    """A training sample of ``spec.n`` tensors, stored as an ``(n, I, J, K)`` array."""

    spec: ModelSpec
    tensors: np.ndarray
    seed: int | None = None
    total: np.ndarray = field(init=False, repr=False)
    sum_sq: float = field(init=False, repr=False)

    def __post_init__(self):
        x = np.array(self.tensors, dtype=float).reshape(-1, *self.spec.dims)
        if x.shape[0] != self.spec.n:
            raise DimensionError(f"expected {self.spec.n} tensors, got {x.shape[0]}")
        x.setflags(write=False)
        object.__setattr__(self, "tensors", x)
        object.__setattr__(self, "total", x.sum(axis=0))
        object.__setattr__(self, "sum_sq", float(np.sum(x * x)))

    def __len__(self):
        return self.tensors.shape[0]


def log_likelihood(x, w: CpParams) -> float:
    """Log density of one tensor ``x`` under the model at ``w``."""
    x = np.asarray(x, dtype=float)
    if x.shape != w.dims:
        raise DimensionError(f"tensor shape {x.shape} does not match parameter dims {w.dims}")
    return -0.5 * x.size * LOG_2PI - 0.5 * frobenius_sq(x - compose(w))


def log_prior(w: CpParams, prior: PriorSpec) -> float:
    """Log prior density; ``-inf`` outside the support of a box prior."""
    v = w.to_vector()
    if prior.kind == "gaussian":
        s = prior.scale
        return float(-0.5 * np.dot(v, v) / s**2 - v.size * (math.log(s) + 0.5 * LOG_2PI))
    return 0.0 if prior.contains(w) else -math.inf


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_true_params(spec: ModelSpec, seed) -> CpParams:
    """Draw a rank-H0 truth with standard normal entries.

    A draw is rejected when any factor matrix has a column whose entries are
    all smaller than 0.1 in absolute value.
    """
    rng = _as_rng(seed)
    I, J, K = spec.dims
    for _ in range(MAX_TRUTH_ATTEMPTS):
        mats = [rng.standard_normal((d, spec.H0)) for d in (I, J, K)]
        if all(np.all(np.max(np.abs(m), axis=0) >= DEGENERATE_COLUMN_THRESHOLD) for m in mats):
            return CpParams(*mats)
    raise RuntimeError(
        f"could not draw a non-degenerate truth in {MAX_TRUTH_ATTEMPTS} attempts"
    )


def sample_dataset(w0: CpParams, n: int, seed, spec: ModelSpec | None = None) -> Dataset:
    """Draw ``n`` i.i.d. tensors from the model at ``w0``.

    ``spec`` defaults to a cell with ``H = H0 = w0.rank``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if spec is None:
        spec = ModelSpec(*w0.dims, H=max(w0.rank, 1), H0=w0.rank, n=n)
    elif spec.n != n:
        spec = ModelSpec(spec.I, spec.J, spec.K, spec.H, spec.H0, n)
    w0.check_dims(spec.dims)
    seed_value = seed if isinstance(seed, (int, np.integer)) else None
    rng = _as_rng(seed)
    mean = compose(w0)
    x = mean + rng.standard_normal((n, *mean.shape))
    return Dataset(spec, x, None if seed_value is None else int(seed_value))


def _spec_dict(spec: ModelSpec) -> dict:
    return {"I": spec.I, "J": spec.J, "K": spec.K, "H": spec.H, "H0": spec.H0, "n": spec.n}


def save_dataset_json(data: Dataset, path) -> None:
    payload = {
        "spec": _spec_dict(data.spec),
        "seed": data.seed,
        "tensors": data.tensors.reshape(len(data), -1).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_dataset_json(path) -> Dataset:
    with open(path) as fh:
        payload = json.load(fh)
    return Dataset(ModelSpec(**payload["spec"]), np.asarray(payload["tensors"]), payload["seed"])


def save_dataset_csv(data: Dataset, path) -> None:
    """One row per tensor, entries row-major; a leading ``#`` line records the cell."""
    I, J, K = data.spec.dims
    header = [f"x_{i}_{j}_{k}" for i in range(I) for j in range(J) for k in range(K)]
    meta = " ".join(f"{k}={v}" for k, v in _spec_dict(data.spec).items())
    with open(path, "w", newline="") as fh:
        fh.write(f"# {meta} seed={data.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in data.tensors.reshape(len(data), -1):
            writer.writerow([repr(float(v)) for v in row])


def load_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        meta_line = fh.readline()
        if not meta_line.startswith("#"):
            raise ValueError(f"{path}: missing '#' metadata line")
        meta = dict(item.split("=", 1) for item in meta_line[1:].split())
        rows = list(csv.reader(fh))
    seed_text = meta.pop("seed", "None")
    seed = None if seed_text == "None" else int(seed_text)
    spec = ModelSpec(**{k: int(v) for k, v in meta.items()})
    values = np.array([[float(v) for v in row] for row in rows[1:]])
    return Dataset(spec, values, seed)
