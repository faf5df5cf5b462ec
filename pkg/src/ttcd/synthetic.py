"""Seeded generators for the two synthetic benchmarks.

Row ``r`` of a generated dataset corresponds to time ``t = r``; the initial
history and burn-in steps run at negative times and are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TemporalGraph, TimeSeriesDataset

DATASETS = ("ds1", "ds2")
MAX_LAG = {"ds1": 5, "ds2": 4}

# (src, lag, dst, coefficient)
_TRUTH = {
    "ds1": [
        ("X1", 5, "X1", 0.5),
        ("X1", 2, "X1", 0.5),
        ("X1", 0, "X2", 0.1),
        ("X1", 1, "X2", 0.7),
        ("X1", 1, "X3", 0.8),
        ("X4", 1, "X4", 0.2),
        ("X3", 0, "X4", 0.4),
        ("X3", 1, "X4", 0.4),
        ("X1", 1, "X4", 0.4),
    ],
    "ds2": [
        ("X2", 1, "X2", 0.2),
        ("X1", 1, "X2", 0.3),
        ("X3", 1, "X3", 0.5),
        ("X1", 4, "X3", 0.2),
        ("X4", 1, "X4", 0.7),
        ("X3", 3, "X4", 0.5),
        ("X2", 0, "X4", 0.8),
        ("X5", 2, "X5", 0.6),
        ("X1", 1, "X5", 0.2),
    ],
}
_NVARS = {"ds1": 4, "ds2": 5}


@dataclass(frozen=True)
class GenSpec:
    dataset: str = "ds1"
    length: int = 1000
    seed: int = 0
    burn_in: int = 50
    noise: str = "gaussian"  # gaussian | poisson (centered, lambda=1) | none
    init_history: str = "normal"  # normal | zeros

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}; expected one of {DATASETS}")
        if self.length < 50:
            raise ValueError(f"length must be >= 50, got {self.length}")
        if self.burn_in < MAX_LAG[self.dataset]:
            raise ValueError(f"burn_in must be >= {MAX_LAG[self.dataset]} for {self.dataset}")
        if self.noise not in ("gaussian", "poisson", "none"):
            raise ValueError(f"unknown noise kind {self.noise!r}")
        if self.init_history not in ("normal", "zeros"):
            raise ValueError(f"unknown init_history {self.init_history!r}")


def truth_graph(dataset: str) -> TemporalGraph:
    if dataset not in _TRUTH:
        raise ValueError(f"unknown dataset {dataset!r}; expected one of {DATASETS}")
    names = [f"X{i + 1}" for i in range(_NVARS[dataset])]
    return TemporalGraph(names, MAX_LAG[dataset], _TRUTH[dataset])


def f_exp(x):
    """x + 5 x^2 exp(-x^2 / 20)."""
    return x + 5.0 * x**2 * np.exp(-(x**2) / 20.0)


def _setup(spec: GenSpec):
    rng = np.random.default_rng(spec.seed)
    n, hist = _NVARS[spec.dataset], MAX_LAG[spec.dataset]
    total = hist + spec.burn_in + spec.length
    if spec.noise == "gaussian":
        eps = rng.standard_normal((total, n))
    elif spec.noise == "poisson":
        eps = rng.poisson(1.0, size=(total, n)) - 1.0
    else:
        eps = np.zeros((total, n))
    X = np.zeros((total, n))
    if spec.init_history == "normal":
        X[:hist] = rng.standard_normal((hist, n))
    t0 = hist + spec.burn_in  # internal index of output row 0
    return X, eps, hist, t0, total


def _finish(spec: GenSpec, X: np.ndarray, t0: int):
    names = [f"X{i + 1}" for i in range(X.shape[1])]
    meta = {"dataset": spec.dataset, "max_lag": MAX_LAG[spec.dataset], "seed": spec.seed,
            "burn_in": spec.burn_in, "noise": spec.noise}
    return TimeSeriesDataset(names, X[t0:], meta), truth_graph(spec.dataset)


def generate_ds1(spec: GenSpec):
    if spec.dataset != "ds1":
        spec = GenSpec(**{**spec.__dict__, "dataset": "ds1"})
    X, e, hist, t0, total = _setup(spec)
    for s in range(hist, total):
        t = s - t0
        X[s, 0] = 0.5 * X[s - 5, 0] + 0.5 * X[s - 2, 0] + e[s, 0]
        X[s, 1] = 0.1 * X[s, 0] + 0.7 * X[s - 1, 0] + 1.5 * np.sin(t / 50) + e[s, 1]
        X[s, 2] = 0.8 * X[s - 1, 0] + e[s, 2]
        X[s, 3] = (0.2 * X[s - 1, 3] + 0.4 * X[s, 2] + 0.4 * X[s - 1, 2] + 0.4 * X[s - 1, 0]
                   + np.sin(t / 50) + np.sin(t / 20) + e[s, 3])
    return _finish(spec, X, t0)


def generate_ds2(spec: GenSpec):
    if spec.dataset != "ds2":
        spec = GenSpec(**{**spec.__dict__, "dataset": "ds2"})
    X, e, hist, t0, total = _setup(spec)
    f = f_exp
    X[:, 0] = (np.arange(total) - t0) * 1.2 / 300.0
    for s in range(hist, total):
        X[s, 1] = 0.2 * f(X[s - 1, 1]) + 0.3 * f(X[s - 1, 0]) + e[s, 1]
        X[s, 2] = 0.5 * f(X[s - 1, 2]) + 0.2 * f(X[s - 4, 0]) + e[s, 2]
        X[s, 3] = 0.7 * f(X[s - 1, 3]) + 0.5 * f(X[s - 3, 2]) + 0.8 * f(X[s, 1]) + e[s, 3]
        X[s, 4] = 0.6 * f(X[s - 2, 4]) + 0.2 * f(X[s - 1, 0]) + e[s, 4]
    return _finish(spec, X, t0)


def generate(spec: GenSpec):
    return (generate_ds1 if spec.dataset == "ds1" else generate_ds2)(spec)
