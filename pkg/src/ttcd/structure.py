"""Causal structure learner: one masked causal layer per target variable.

Each layer is a convolution whose receptive field covers the whole
(variable x lag-slot) grid, with ``hidden`` output channels, a rectifier
and a fixed-sign scalar head. The cell (target, contemporaneous) is masked out so a
variable can never be its own instantaneous parent. Edge strength of
(variable i, lag slot j) -> k is the L2 norm of layer k's first-layer
weights at that cell.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .data import AcyclicityError, TemporalAdjacency, TemporalGraph, decode_row, slot_to_lag
from .numeric import DTYPE, as_tensor, trace_expm_gap


def _group_norm(w: torch.Tensor, dim) -> torch.Tensor:
    # exact zeros stay exact zeros and get a zero (sub)gradient
    sq = (w**2).sum(dim=dim)
    nz = sq > 0
    return torch.where(nz, torch.sqrt(torch.where(nz, sq, torch.ones_like(sq))), torch.zeros_like(sq))


class CausalStructureLearner(nn.Module):
    """n independent masked causal layers stored as stacked tensors.

    ``kernel[k, h, i, j]`` connects input cell (variable i, lag slot j) to
    hidden channel h of target k; nothing is shared across targets.
    """

    def __init__(self, n_vars: int, l_max: int, hidden: int = 4, activation: str = "relu", head_scale: float = 1.0):
        super().__init__()
        if activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {activation!r}")
        if head_scale <= 0:
            raise ValueError("head_scale must be > 0")
        self.n_vars, self.l_max, self.hidden, self.activation = n_vars, l_max, hidden, activation
        L = l_max + 1
        mask = torch.ones(n_vars, 1, n_vars, L, dtype=DTYPE)
        for k in range(n_vars):
            mask[k, 0, k, L - 1] = 0.0
        self.register_buffer("mask", mask)
        bound = 1.0 / math.sqrt(n_vars * L)
        self.kernel = nn.Parameter(torch.empty(n_vars, hidden, n_vars, L, dtype=DTYPE).uniform_(-bound, bound) * mask)
        self.bias = nn.Parameter(torch.empty(n_vars, hidden, dtype=DTYPE).uniform_(-bound, bound))
        # Fixed +1/-1 readout: with a trainable head, kernel * c and head / c give the same
        # predictor, so the L1 penalty on the kernel could shrink W without bound.
        signs = head_scale * torch.tensor([(-1.0) ** h for h in range(hidden)], dtype=DTYPE)
        self.register_buffer("head", signs.expand(n_vars, hidden).clone())
        self.head_bias = nn.Parameter(torch.zeros(n_vars, dtype=DTYPE))

    def masked_kernel(self) -> torch.Tensor:
        return self.kernel * self.mask

    def forward(self, distilled) -> torch.Tensor:
        """(N_w, L, n) -> (N_w, n): layer k predicts x^k_t."""
        x = as_tensor(distilled)
        if x.ndim != 3 or x.shape[1:] != (self.l_max + 1, self.n_vars):
            raise ValueError(
                f"expected distilled signal of shape (N, {self.l_max + 1}, {self.n_vars}), got {tuple(x.shape)}"
            )
        z = torch.einsum("khij,wji->wkh", self.masked_kernel(), x) + self.bias
        if self.activation == "relu":
            z = torch.relu(z)
        return (z * self.head).sum(-1) + self.head_bias

    def adjacency(self) -> torch.Tensor:
        """Differentiable W of shape (n * (l_max + 1), n)."""
        norms = _group_norm(self.masked_kernel(), dim=1)  # (k, i, j)
        return norms.permute(1, 2, 0).reshape(self.n_vars * (self.l_max + 1), self.n_vars)


class CausalConv1dLearner(nn.Module):
    """Ablation: 1-D kernels sliding over the flattened (time-major) window.

    The flattened sequence is [x^1_{t-l_max}, ..., x^n_{t-l_max}, ..., x^n_t].
    Each target owns ``hidden`` kernels of width ``n_vars``; the dense
    effective weight matrix is masked like the 2-D layer and its column norms
    give the adjacency.
    """

    def __init__(self, n_vars: int, l_max: int, hidden: int = 4, width: int | None = None):
        super().__init__()
        self.n_vars, self.l_max, self.hidden = n_vars, l_max, hidden
        L = l_max + 1
        self.width = width or n_vars
        self.positions = n_vars * L - self.width + 1
        bound = 1.0 / math.sqrt(self.width)
        self.kernel = nn.Parameter(torch.empty(n_vars, hidden, self.width, dtype=DTYPE).uniform_(-bound, bound))
        self.bias = nn.Parameter(torch.empty(n_vars, hidden, dtype=DTYPE).uniform_(-bound, bound))
        hb = 1.0 / math.sqrt(hidden * self.positions)
        self.head = nn.Parameter(torch.empty(n_vars, hidden, self.positions, dtype=DTYPE).uniform_(-hb, hb))
        self.head_bias = nn.Parameter(torch.zeros(n_vars, dtype=DTYPE))
        # scatter[q, c, p] = 1 when kernel tap c at position q reads flat input p
        scatter = torch.zeros(self.positions, self.width, n_vars * L, dtype=DTYPE)
        for q in range(self.positions):
            for c in range(self.width):
                scatter[q, c, q + c] = 1.0
        self.register_buffer("scatter", scatter)
        # flat index p = slot * n + variable; mask the target's own time-t cell
        mask = torch.ones(n_vars, 1, 1, n_vars * L, dtype=DTYPE)
        for k in range(n_vars):
            mask[k, 0, 0, (L - 1) * n_vars + k] = 0.0
        self.register_buffer("mask", mask)

    def effective(self) -> torch.Tensor:
        """(target, hidden, position, flat input) dense weights."""
        return torch.einsum("khc,qcp->khqp", self.kernel, self.scatter) * self.mask

    def forward(self, distilled) -> torch.Tensor:
        x = as_tensor(distilled)
        flat = x.reshape(x.shape[0], -1)  # time-major flattening
        z = torch.relu(torch.einsum("khqp,wp->wkhq", self.effective(), flat) + self.bias[..., None])
        return (z * self.head).sum(dim=(-1, -2)) + self.head_bias

    def adjacency(self) -> torch.Tensor:
        L = self.l_max + 1
        norms = _group_norm(self.effective(), dim=(1, 2))  # (k, p)
        # p = slot * n + i  ->  row i * L + slot
        return norms.reshape(self.n_vars, L, self.n_vars).permute(2, 1, 0).reshape(self.n_vars * L, self.n_vars)


def predict_targets(distilled, layers: nn.Module) -> torch.Tensor:
    x = as_tensor(distilled)
    if x.shape[-1] != layers.n_vars:
        raise ValueError(f"{layers.n_vars} causal layers for {x.shape[-1]} variables")
    return layers(x)


def extract_adjacency(layers: nn.Module, names) -> TemporalAdjacency:
    W = layers.adjacency().detach().numpy().copy()
    return TemporalAdjacency(W, tuple(names), layers.l_max)


def contemporaneous_block(W, l_max: int):
    return W[l_max :: l_max + 1]


def acyclicity_value(W, l_max: int | None = None) -> torch.Tensor:
    """h of the contemporaneous block only; lagged edges cannot form cycles."""
    if isinstance(W, TemporalAdjacency):
        W, l_max = W.W, W.l_max
    return trace_expm_gap(contemporaneous_block(as_tensor(W), l_max))


def threshold_graph(adj: TemporalAdjacency, omega: float) -> TemporalGraph:
    """Keep entries strictly above ``omega``."""
    if omega < 0:
        raise ValueError("threshold must be nonnegative")
    edges = []
    for row, col in zip(*np.nonzero(adj.W > omega)):
        i, j = decode_row(int(row), adj.l_max)
        edges.append((adj.names[i], slot_to_lag(j, adj.l_max), adj.names[int(col)], float(adj.W[row, col])))
    try:
        return TemporalGraph(adj.names, adj.l_max, edges)
    except AcyclicityError:
        raise AcyclicityError(f"acyclicity violated at threshold {omega}") from None


def tve_loss(predictions, targets) -> torch.Tensor:
    """(1/N_w) * sum of squared errors over windows and target variables."""
    p, t = as_tensor(predictions), as_tensor(targets)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {tuple(p.shape)} vs {tuple(t.shape)}")
    return ((p - t) ** 2).sum() / p.shape[0]


def linear_tve_loss(W, windows) -> torch.Tensor:
    """Linear-SEM reading ||X_t - W^T vec(window)||^2 / N_w, for diagnostics."""
    W, x = as_tensor(W), as_tensor(windows)
    N, L, n = x.shape
    grid = x.transpose(1, 2).reshape(N, n * L)  # row index i * L + j
    return ((x[:, -1, :] - grid @ W) ** 2).sum() / N


def sparsity_loss(W, lambda1: float) -> torch.Tensor:
    return lambda1 * as_tensor(W).abs().sum()
