"""Dense-array math substrate shared by the learners.

Everything here works on float64 torch tensors so reverse-mode gradients come
from autograd. Numpy inputs are accepted and converted.
"""

from __future__ import annotations

import math
from typing import Callable, Mapping

import numpy as np
import torch

DTYPE = torch.float64


def as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if x.dtype in (DTYPE, torch.complex128) else x.to(DTYPE)
    arr = np.asarray(x, dtype=np.float64)
    # torch cannot wrap read-only buffers
    return torch.as_tensor(arr if arr.flags.writeable else arr.copy())


def _match(ref, out: torch.Tensor):
    """Return numpy if the caller passed numpy."""
    if isinstance(ref, torch.Tensor):
        return out
    return out.detach().numpy()


def assert_finite(x: torch.Tensor, what: str = "array") -> None:
    if not bool(torch.isfinite(x).all()):
        raise FloatingPointError(f"non-finite values in {what}")


def softmax_rows(x, axis: int = -1):
    """Max-shifted softmax along ``axis``."""
    t = as_tensor(x)
    if t.ndim == 0 or t.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    shifted = t - t.max(dim=axis, keepdim=True).values.detach()
    e = torch.exp(shifted)
    return _match(x, e / e.sum(dim=axis, keepdim=True))


def rfft(x, axis: int = -1):
    """Unnormalized real FFT; returns floor(L/2)+1 complex bins."""
    t = as_tensor(x)
    if t.shape[axis] < 2:
        raise ValueError(f"rfft needs at least 2 samples along axis {axis}, got {t.shape[axis]}")
    return _match(x, torch.fft.rfft(t, dim=axis))


def irfft(X, length: int, axis: int = -1):
    """Inverse of :func:`rfft` with 1/L normalization."""
    t = X if isinstance(X, torch.Tensor) else torch.as_tensor(np.asarray(X, dtype=np.complex128))
    if t.shape[axis] != length // 2 + 1:
        raise ValueError(
            f"irfft: {t.shape[axis]} bins cannot describe a length-{length} signal "
            f"(expected {length // 2 + 1})"
        )
    return _match(X, torch.fft.irfft(t, n=length, dim=axis))


def expm(M: torch.Tensor, tol: float = 1e-12) -> torch.Tensor:
    """Matrix exponential by scaling and squaring around a Taylor series.

    Differentiable through autograd. Intended for the small (n <= ~16)
    matrices that appear in the acyclicity penalty.
    """
    M = as_tensor(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {tuple(M.shape)}")
    n = M.shape[0]
    norm = float(M.detach().abs().sum(dim=0).max()) if n else 0.0
    squarings = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0.5 else 0
    A = M / (2.0 ** squarings)
    eye = torch.eye(n, dtype=M.dtype)
    out = eye.clone()
    term = eye
    # ||A|| <= 0.5 so the series converges geometrically
    for k in range(1, 60):
        term = term @ A / k
        out = out + term
        if float(term.detach().abs().max()) <= tol * float(out.detach().abs().max()):
            break
    for _ in range(squarings):
        out = out @ out
    return out


def trace_expm_gap(A) -> torch.Tensor:
    """h(A) = tr(exp(A * A)) - n, zero iff the support of A is acyclic."""
    t = as_tensor(A)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError(f"trace_expm_gap needs a square matrix, got shape {tuple(t.shape)}")
    assert_finite(t, "acyclicity input")
    return torch.trace(expm(t * t)) - t.shape[0]


def trace_expm_gap_grad(A) -> np.ndarray:
    """Closed-form gradient (exp(A*A))^T * 2A, used as an oracle."""
    t = as_tensor(A).detach()
    return (expm(t * t).T * 2 * t).numpy()


def gradients(objective: torch.Tensor, params: Mapping[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients for every registered parameter.

    Parameters the objective does not touch get an exact zero gradient.
    """
    names = list(params)
    grads = torch.autograd.grad(objective, [params[k] for k in names], allow_unused=True)
    return {
        k: (torch.zeros_like(params[k]) if g is None else g.detach())
        for k, g in zip(names, grads)
    }


def check_gradients(
    objective: Callable[[], torch.Tensor],
    params: Mapping[str, torch.Tensor],
    eps: float = 1e-5,
    n_samples: int | None = 50,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central differences.

    ``objective`` is re-evaluated with each sampled coordinate nudged by
    +/- eps in place; the error for a coordinate is
    |analytic - numeric| / max(1, |numeric|).
    """
    value = objective()
    if not bool(torch.isfinite(value)):
        raise FloatingPointError("objective is not finite at the base point")
    analytic = gradients(value, params)

    coords = [(k, i) for k, p in params.items() for i in range(p.numel())]
    if n_samples is not None and n_samples < len(coords):
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coords), size=n_samples, replace=False)
        coords = [coords[j] for j in sorted(picks)]

    worst = 0.0
    with torch.no_grad():
        for name, i in coords:
            flat = params[name].view(-1)
            orig = float(flat[i])
            flat[i] = orig + eps
            up = float(objective())
            flat[i] = orig - eps
            down = float(objective())
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise FloatingPointError(f"objective not finite near {name}[{i}]")
            numeric = (up - down) / (2 * eps)
            exact = float(analytic[name].reshape(-1)[i])
            worst = max(worst, abs(exact - numeric) / max(1.0, abs(numeric)))
    return worst
