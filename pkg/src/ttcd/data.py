"""Datasets, windows, normalization and the temporal graph types."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

SIGMA_FLOOR = 1e-8
PREAMBLE = "# ttcd: "  # optional first CSV line carrying JSON metadata


class DataError(ValueError):
    """Malformed input data."""


class AcyclicityError(ValueError):
    """The contemporaneous part of a graph contains a cycle."""


@dataclass(frozen=True)
class TimeSeriesDataset:
    names: tuple[str, ...]
    data: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "names", tuple(self.names))
        if data.ndim != 2:
            raise DataError(f"data must be 2-D (T x n), got shape {data.shape}")
        if data.shape[1] != len(self.names):
            raise DataError(f"{data.shape[1]} columns but {len(self.names)} names")
        if len(set(self.names)) != len(self.names):
            raise DataError("variable names must be unique")
        if not np.isfinite(data).all():
            raise DataError("data contains NaN or infinite values")

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def T(self) -> int:
        return self.data.shape[0]

    def to_csv(self, path, preamble: dict | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            _write_preamble(fh, preamble)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.names)
            for row in self.data:
                w.writerow([repr(float(v)) for v in row])


def _write_preamble(fh, preamble: dict | None) -> None:
    if preamble is not None:
        fh.write(PREAMBLE + json.dumps(preamble, sort_keys=True) + "\n")


def load_csv(path) -> TimeSeriesDataset:
    """Read a header-plus-numeric-body CSV file.

    An optional leading ``# ttcd: {...}`` line is parsed into ``meta``.
    Errors carry the 1-based line number of the offending row.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    meta = {"source": str(path)}
    first = 1
    if text.startswith(PREAMBLE):
        line, _, text = text.partition("\n")
        try:
            meta.update(json.loads(line[len(PREAMBLE):]))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line 1: bad metadata line: {exc}") from None
        first = 2
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise DataError(f"{path}: empty file")
    names = [h.strip() for h in rows[0]]
    if not names or any(not h for h in names):
        raise DataError(f"{path}: line {first}: empty variable name in header")
    body = []
    for lineno, row in enumerate(rows[1:], start=first + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(names):
            raise DataError(f"{path}: line {lineno}: expected {len(names)} cells, got {len(row)}")
        vals = []
        for cell in row:
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: line {lineno}: non-finite cell {cell!r}")
            vals.append(v)
        body.append(vals)
    if not body:
        raise DataError(f"{path}: no data rows")
    return TimeSeriesDataset(names, np.array(body), meta=meta)


@dataclass(frozen=True)
class NormStats:
    """Per-variable mean and population standard deviation."""

    mu: np.ndarray
    sigma: np.ndarray
    floored: np.ndarray  # bool per variable; True where sigma hit SIGMA_FLOOR

    convention = "population"


def compute_norm(X: TimeSeriesDataset | np.ndarray) -> NormStats:
    data = X.data if isinstance(X, TimeSeriesDataset) else np.asarray(X, dtype=np.float64)
    if data.shape[0] < 2:
        raise DataError("need at least 2 timesteps to normalize")
    mu = data.mean(axis=0)
    sigma = data.std(axis=0)
    floored = sigma < SIGMA_FLOOR
    return NormStats(mu, np.where(floored, SIGMA_FLOOR, sigma), floored)


def normalize(X, stats: NormStats):
    if isinstance(X, TimeSeriesDataset):
        return TimeSeriesDataset(X.names, (X.data - stats.mu) / stats.sigma, dict(X.meta))
    return (X - stats.mu) / stats.sigma


def denormalize(X, stats: NormStats):
    if isinstance(X, TimeSeriesDataset):
        return TimeSeriesDataset(X.names, X.data * stats.sigma + stats.mu, dict(X.meta))
    return X * stats.sigma + stats.mu


@dataclass(frozen=True)
class WindowBatch:
    """Stride-1 windows; ``windows[w, r] == data[w + r]``."""

    windows: np.ndarray  # (N_w, l_max + 1, n)
    l_max: int
    origin: int  # dataset row of the first window's last row

    @property
    def current(self) -> np.ndarray:
        """The time-t slice of each window, shape (N_w, n)."""
        return self.windows[:, -1, :]


def make_windows(X: TimeSeriesDataset | np.ndarray, l_max: int) -> WindowBatch:
    data = X.data if isinstance(X, TimeSeriesDataset) else np.asarray(X, dtype=np.float64)
    T = data.shape[0]
    # T = l_max + 1 still yields one window; training separately requires T >= l_max + 2
    if not 1 <= l_max <= T - 1:
        raise DataError(f"l_max must be in [1, {T - 1}] for T={T}, got {l_max}")
    view = np.lib.stride_tricks.sliding_window_view(data, l_max + 1, axis=0)
    # sliding_window_view puts the window axis last
    windows = np.ascontiguousarray(np.moveaxis(view, -1, 1))
    return WindowBatch(windows, l_max, origin=l_max)


# Row index of W: variable-major, lag slot j = 0 is lag l_max, j = l_max is lag 0.

def encode_row(i: int, j: int, l_max: int) -> int:
    return i * (l_max + 1) + j


def decode_row(row: int, l_max: int) -> tuple[int, int]:
    return divmod(row, l_max + 1)


def slot_to_lag(j: int, l_max: int) -> int:
    return l_max - j


def row_labels(names: Sequence[str], l_max: int) -> list[str]:
    return [f"{v}_lag{slot_to_lag(j, l_max)}" for v in names for j in range(l_max + 1)]


@dataclass(frozen=True)
class TemporalAdjacency:
    W: np.ndarray  # (n * (l_max + 1), n)
    names: tuple[str, ...]
    l_max: int

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        n, L = len(self.names), self.l_max + 1
        if W.shape != (n * L, n):
            raise DataError(f"adjacency shape {W.shape}, expected {(n * L, n)}")
        if not np.isfinite(W).all():
            raise DataError("adjacency contains non-finite entries")
        if (W < 0).any():
            raise DataError("adjacency entries must be nonnegative")
        if np.any(np.diag(W[self.l_max::L]) != 0):
            raise DataError("contemporaneous self-loops are not allowed")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def contemporaneous(self) -> np.ndarray:
        """The n x n block W^t (rows with lag slot l_max)."""
        return self.W[self.l_max :: self.l_max + 1]

    def to_csv(self, path, preamble: dict | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            _write_preamble(fh, preamble)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["", *self.names])
            for label, row in zip(row_labels(self.names, self.l_max), self.W):
                w.writerow([label, *(repr(float(v)) for v in row)])


class Edge(NamedTuple):
    src: str
    lag: int
    dst: str
    weight: float = 1.0

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.src, self.lag, self.dst)


class TemporalGraph:
    """Full temporal causal graph: edges x^src_{t-lag} -> x^dst_t."""

    def __init__(self, variables: Iterable[str], max_lag: int, edges: Iterable = ()):
        self.variables = tuple(variables)
        self.max_lag = int(max_lag)
        known = set(self.variables)
        by_key: dict[tuple, Edge] = {}
        for e in edges:
            e = Edge(*e) if not isinstance(e, Edge) else e
            e = Edge(str(e.src), int(e.lag), str(e.dst), float(e.weight))
            if e.src not in known or e.dst not in known:
                raise DataError(f"edge {e.key} references an unknown variable")
            if not 0 <= e.lag <= self.max_lag:
                raise DataError(f"edge {e.key} has lag outside [0, {self.max_lag}]")
            if e.lag == 0 and e.src == e.dst:
                raise DataError(f"contemporaneous self-loop on {e.src}")
            if e.key in by_key:
                raise DataError(f"duplicate edge {e.key}")
            by_key[e.key] = e
        self._edges = by_key
        order = self.contemporaneous_order()
        if order is None:
            raise AcyclicityError("contemporaneous subgraph has a cycle")

    @property
    def edges(self) -> list[Edge]:
        return sorted(self._edges.values(), key=lambda e: (self.variables.index(e.dst), e.lag, self.variables.index(e.src)))

    def keys(self) -> set[tuple[str, int, str]]:
        return set(self._edges)

    def __len__(self) -> int:
        return len(self._edges)

    def __contains__(self, key) -> bool:
        return tuple(key[:3]) in self._edges

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TemporalGraph)
            and self.variables == other.variables
            and self.max_lag == other.max_lag
            and self.keys() == other.keys()
        )

    def __repr__(self) -> str:
        return f"TemporalGraph({len(self)} edges, variables={self.variables}, max_lag={self.max_lag})"

    def contemporaneous_order(self) -> list[str] | None:
        """Topological order of the lag-0 subgraph, or None if it is cyclic."""
        ts = TopologicalSorter({v: set() for v in self.variables})
        for e in self._edges.values():
            if e.lag == 0:
                ts.add(e.dst, e.src)
        try:
            return list(ts.static_order())
        except CycleError:
            return None

    def to_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "max_lag": self.max_lag,
            "edges": [{"src": e.src, "lag": e.lag, "dst": e.dst, "weight": e.weight} for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TemporalGraph":
        try:
            return cls(
                d["variables"],
                d["max_lag"],
                [(e["src"], e["lag"], e["dst"], e.get("weight", 1.0)) for e in d["edges"]],
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed graph JSON: {exc}") from None

    def to_json(self, path=None, extra: dict | None = None) -> str:
        d = self.to_dict()
        if extra:
            d.update(extra)
        text = json.dumps(d, indent=2, sort_keys=False) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_json(cls, path) -> "TemporalGraph":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(d)

    def to_dot(self) -> str:
        """Graphviz source with one rank (column) per lag."""
        lines = ["digraph temporal {", "  rankdir=LR;", "  node [shape=ellipse];"]
        for lag in range(self.max_lag, -1, -1):
            nodes = " ".join(f'"{v}_lag{lag}";' for v in self.variables)
            lines.append(f"  subgraph cluster_lag{lag} {{ label=\"t-{lag}\" ; rank=same; {nodes} }}")
        for e in self.edges:
            lines.append(f'  "{e.src}_lag{e.lag}" -> "{e.dst}_lag0" [label="{e.weight:.3f}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"
