"""Joint training under the augmented-Lagrangian acyclicity schedule.

Objective per step:
    L_r + L_tve + (rho / 2) h(W^t)^2 + alpha h(W^t) + lambda1 ||W||_1
minimized with Adam on full batches; after each round of ``epochs`` steps
the multiplier moves to alpha + rho h and rho grows tenfold when h did not
shrink below a quarter of its previous value.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
from torch import nn

from .data import (TemporalAdjacency, TemporalGraph, TimeSeriesDataset, compute_norm, make_windows,
                   normalize)
from .feature_learner import ConvFeatureBlock, FeatureLearner, LearnerConfig, reconstruction_loss
from .numeric import DTYPE
from .structure import (CausalConv1dLearner, CausalStructureLearner, acyclicity_value, extract_adjacency,
                        threshold_graph, tve_loss)

log = logging.getLogger(__name__)

VARIANTS = ("full", "no-dsb", "no-frequency", "normal-transformer", "causal-conv1d", "no-transformer")
RHO_MAX = 1e14  # past 1e10 so a stalled two-cycle can still be pushed to h <= 1e-8

# default edge threshold per dataset profile, drawn from {0.002, 0.004, 0.007, 0.17}
DEFAULT_OMEGA = {"ds1": 0.17, "ds2": 0.17, None: 0.17}


class DivergenceError(FloatingPointError):
    def __init__(self, message, traces=None):
        super().__init__(message)
        self.traces = traces or {}


@dataclass(frozen=True)
class HyperParams:
    lambda1: float = 0.9
    alpha: float = 1.0
    rho: float = 1.0
    lr: float = 1e-2
    epochs: int = 100
    max_rounds: int = 30
    h_tol: float = 1e-8
    omega: float | None = None
    seed: int = 0
    d_e: int = 16
    hidden: int = 4
    two_stage: bool = False
    couple_tve: bool = False
    head_scale: float = 0.5
    lr_floor: float = 1e-3  # per-round cosine decay from lr to lr * lr_floor; 1 keeps lr constant

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.lambda1 < 0:
            raise ValueError("lambda1 must be >= 0")
        if self.lr <= 0 or self.epochs < 1 or self.max_rounds < 1:
            raise ValueError("lr, epochs and max_rounds must be positive")
        if not 0 < self.lr_floor <= 1:
            raise ValueError("lr_floor must be in (0, 1]")
        if self.omega is not None and self.omega < 0:
            raise ValueError("omega must be >= 0")


def default_omega(dataset: TimeSeriesDataset) -> float:
    return DEFAULT_OMEGA.get(dataset.meta.get("dataset"), DEFAULT_OMEGA[None])


class Batch:
    """Tensors for one full-batch pass."""

    def __init__(self, dataset: TimeSeriesDataset, l_max: int):
        stats = compute_norm(dataset)
        self.stats = stats
        self.windows = torch.as_tensor(make_windows(normalize(dataset.data, stats), l_max).windows, dtype=DTYPE)
        self.raw = torch.as_tensor(make_windows(dataset.data, l_max).windows, dtype=DTYPE)
        self.mu = torch.as_tensor(stats.mu, dtype=DTYPE)
        self.sigma = torch.as_tensor(stats.sigma, dtype=DTYPE)
        self.targets = self.windows[:, -1, :]


class TTCDModel(nn.Module):
    """Feature learner (or its conv stand-in) feeding the structure learner."""

    def __init__(self, n_vars: int, l_max: int, variant: str = "full",
                 config: LearnerConfig = LearnerConfig(), hidden: int = 4, couple_tve: bool = True,
                 head_scale: float = 1.0):
        super().__init__()
        self.couple_tve = couple_tve
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.variant = variant
        if variant == "no-transformer":
            self.features = ConvFeatureBlock(n_vars, l_max, dsb_hidden=config.dsb_hidden)
        else:
            self.features = FeatureLearner(
                n_vars, l_max, config,
                use_profile=variant != "normal-transformer",
                use_dsb=variant not in ("no-dsb", "normal-transformer"),
                use_freq=variant not in ("no-frequency", "normal-transformer"),
            )
        if variant == "causal-conv1d":
            self.structure = CausalConv1dLearner(n_vars, l_max, hidden)
        else:
            self.structure = CausalStructureLearner(n_vars, l_max, hidden, head_scale=head_scale)

    @property
    def has_reconstruction(self) -> bool:
        return self.variant != "no-transformer"

    def terms(self, batch: Batch) -> dict[str, torch.Tensor]:
        """Independently computed objective components."""
        out = {}
        if self.has_reconstruction:
            learned = self.features(batch.windows, batch.raw, batch.mu, batch.sigma)
            out["reconstruction"] = reconstruction_loss(batch.windows, learned.reconstruction_raw)
            distilled = learned.reconstruction_raw
        else:
            distilled, _ = self.features(batch.windows, batch.raw, batch.mu, batch.sigma)
        if not self.couple_tve and self.has_reconstruction:
            # L_tve trains the structure learner only; L_r alone shapes the distilled signal
            distilled = distilled.detach()
        out["tve"] = tve_loss(self.structure(distilled), batch.targets)
        W = self.structure.adjacency()
        out["h"] = acyclicity_value(W, self.structure.l_max)
        out["l1"] = W.abs().sum()
        return out


def total_objective(terms: dict, alpha: float, rho: float, lambda1: float) -> torch.Tensor:
    """L_r + L_tve + rho/2 h^2 + alpha h + lambda1 ||W||_1."""
    for name, value in terms.items():
        if not bool(torch.isfinite(value)):
            raise DivergenceError(f"non-finite objective term {name!r}")
    h = terms["h"]
    total = terms["tve"] + 0.5 * rho * h * h + alpha * h + lambda1 * terms["l1"]
    if "reconstruction" in terms:
        total = total + terms["reconstruction"]
    return total


@dataclass
class TrainReport:
    variant: str
    seed: int
    hyperparams: dict
    l_max: int
    traces: dict[str, list[float]]
    rounds: list[dict]
    final_h: float
    converged: bool
    adjacency: TemporalAdjacency
    graph: TemporalGraph | None
    omega: float
    wall_clock: float
    error: str | None = None

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("adjacency", "graph")}
        d["adjacency"] = self.adjacency.W.tolist()
        d["graph"] = self.graph.to_dict() if self.graph is not None else None
        return d


@dataclass
class TrainState:
    model: TTCDModel
    batch: Batch
    alpha: float
    rho: float
    report: TrainReport = field(repr=False, default=None)


def _seed_all(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)


def train(dataset: TimeSeriesDataset, l_max: int, hp: HyperParams = HyperParams(), variant: str = "full",
          config: LearnerConfig | None = None, raise_on_cycle: bool = True) -> TrainState:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if dataset.T < l_max + 2:
        raise ValueError(f"dataset has T={dataset.T}; need at least l_max + 2 = {l_max + 2}")
    config = config or LearnerConfig(d_e=hp.d_e)
    start = time.perf_counter()
    _seed_all(hp.seed)
    batch = Batch(dataset, l_max)
    model = TTCDModel(dataset.n, l_max, variant, config, hp.hidden, hp.couple_tve, hp.head_scale)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=hp.lr)

    names = ["tve", "h", "sparsity", "total"]
    if model.has_reconstruction:
        names.insert(0, "reconstruction")
    traces: dict[str, list[float]] = {k: [] for k in names}
    alpha, rho = hp.alpha, hp.rho

    def step(recon_only: bool = False) -> None:
        opt.zero_grad()
        terms = model.terms(batch)
        try:
            loss = terms["reconstruction"] if recon_only else total_objective(terms, alpha, rho, hp.lambda1)
        except DivergenceError as exc:
            raise DivergenceError(f"{exc} (last finite totals: {traces['total'][-3:]})", traces) from None
        loss.backward()
        opt.step()
        for k in names:
            if k == "sparsity":
                traces[k].append(hp.lambda1 * float(terms["l1"].detach()))
            elif k == "total":
                traces[k].append(float(loss.detach()))
            else:
                traces[k].append(float(terms[k].detach()))

    if hp.two_stage and model.has_reconstruction:
        for _ in range(hp.epochs):
            step(recon_only=True)

    rounds = []
    h_prev = math.inf
    h_val = math.inf
    for r in range(hp.max_rounds):
        for e in range(hp.epochs):
            frac = e / max(hp.epochs - 1, 1)
            scale = hp.lr_floor + (1 - hp.lr_floor) * 0.5 * (1 + math.cos(math.pi * frac))
            for group in opt.param_groups:
                group["lr"] = hp.lr * scale
            step()
        with torch.no_grad():
            h_val = float(acyclicity_value(model.structure.adjacency(), l_max))
        alpha = alpha + rho * h_val
        if h_val > 0.25 * h_prev:
            rho = min(10.0 * rho, RHO_MAX)
        h_prev = h_val
        rounds.append({"round": r, "h": h_val, "alpha": alpha, "rho": rho})
        log.info("round %d: h=%.3e alpha=%.3e rho=%.1e", r, h_val, alpha, rho)
        if h_val <= hp.h_tol:
            break

    adjacency = extract_adjacency(model.structure, dataset.names)
    omega = hp.omega if hp.omega is not None else default_omega(dataset)
    graph, error = None, None
    try:
        graph = threshold_graph(adjacency, omega)
    except ValueError as exc:
        if raise_on_cycle:
            raise
        error = str(exc)
    report = TrainReport(
        variant=variant, seed=hp.seed, hyperparams=asdict(hp), l_max=l_max, traces=traces, rounds=rounds,
        final_h=h_val, converged=h_val <= hp.h_tol, adjacency=adjacency, graph=graph, omega=omega,
        wall_clock=time.perf_counter() - start, error=error,
    )
    return TrainState(model, batch, alpha, rho, report)


def run_ablation(dataset: TimeSeriesDataset, l_max: int, hp: HyperParams, variants, seeds=None):
    """Train every variant (for every seed) on the same data; returns {variant: [TrainReport]}."""
    variants = list(variants)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; expected one of {VARIANTS}")
    seeds = list(seeds) if seeds is not None else [hp.seed]
    out = {}
    for v in variants:
        out[v] = [train(dataset, l_max, replace(hp, seed=s), v, raise_on_cycle=False).report for s in seeds]
    return out
