"""Command-line entry point: ``ttcd {generate,stationarity,discover,evaluate,ablate}``.

Exit codes: 0 success, 2 domain error, 64 usage error, 74 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from .data import AcyclicityError, DataError, TemporalGraph, load_csv
from .feature_learner import LearnerConfig
from .metrics import ScoreCard, score
from .stationarity import StationarityError, profile_dataset
from .synthetic import MAX_LAG, GenSpec, generate
from .trainer import VARIANTS, DivergenceError, HyperParams, default_omega, run_ablation, train

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_IO = 0, 2, 64, 74

log = logging.getLogger("ttcd")


class UsageError(Exception):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _field_parsers() -> dict:
    """One parser per RunConfig key, derived from the dataclass defaults."""
    parsers = {}
    for cls in (HyperParams, LearnerConfig, GenSpec):
        for f in fields(cls):
            default = f.default
            if isinstance(default, bool):
                parsers[f.name] = _bool
            elif isinstance(default, int):
                parsers[f.name] = int
            elif isinstance(default, float):
                parsers[f.name] = float
            elif default is None:
                parsers[f.name] = _opt_float
            else:
                parsers[f.name] = str
    parsers.update({"max_lag": _opt_int, "variant": str})
    return parsers


PARSERS = _field_parsers()


def parse_assignments(lines, origin: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise UsageError(f"{origin}:{lineno}: expected key=value, got {raw.strip()!r}")
        if key not in PARSERS:
            raise UsageError(f"{origin}:{lineno}: unknown config key {key!r}")
        try:
            out[key] = PARSERS[key](value)
        except ValueError as exc:
            raise UsageError(f"{origin}:{lineno}: bad value for {key}: {exc}") from None
    return out


def read_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    return parse_assignments(text.splitlines(), str(path))


class RunConfig:
    """Flat key/value settings: defaults < config file < TTCD_SEED (seed only) < flags."""

    def __init__(self, values: dict):
        self.values = dict(values)

    @classmethod
    def resolve(cls, args: argparse.Namespace, flag_keys=()) -> "RunConfig":
        values = {}
        for dc in (HyperParams(), LearnerConfig(), GenSpec()):
            values.update(asdict(dc))
        values.update({"max_lag": None, "variant": "full"})
        file_values = read_config(args.config) if getattr(args, "config", None) else {}
        values.update(file_values)
        if "seed" not in file_values and os.environ.get("TTCD_SEED"):
            try:
                values["seed"] = int(os.environ["TTCD_SEED"])
            except ValueError:
                raise UsageError(f"TTCD_SEED must be an integer, got {os.environ['TTCD_SEED']!r}") from None
        for key in flag_keys:
            v = getattr(args, key, None)
            if v is not None:
                values[key] = v
        values.update(parse_assignments(getattr(args, "set", None) or [], "--set"))
        return cls(values)

    def _pick(self, cls):
        return {f.name: self.values[f.name] for f in fields(cls)}

    def hyperparams(self) -> HyperParams:
        try:
            return HyperParams(**self._pick(HyperParams))
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def learner_config(self) -> LearnerConfig:
        try:
            return LearnerConfig(**self._pick(LearnerConfig))
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def genspec(self) -> GenSpec:
        try:
            return GenSpec(**self._pick(GenSpec))
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    cfg = RunConfig.resolve(args, ("dataset", "length", "seed", "noise", "burn_in", "init_history"))
    spec = cfg.genspec()
    ds, truth = generate(spec)
    out = _out_dir(args.out_dir)
    ds.to_csv(out / "data.csv", preamble={**ds.meta, "config": cfg.to_dict()})
    truth.to_json(out / "truth.json", extra={"config": cfg.to_dict(), "seed": spec.seed})
    print(f"wrote {out / 'data.csv'} ({ds.T}x{ds.n}) and {out / 'truth.json'} ({len(truth)} edges)")
    return EXIT_OK


def cmd_stationarity(args) -> int:
    ds = load_csv(args.input)
    report = profile_dataset(ds, alpha=args.alpha)
    print(report.format_table())
    if args.json:
        _write_json(Path(args.json), {"results": [asdict(r) for r in report.results], "alpha": args.alpha})
    return EXIT_OK


def cmd_discover(args) -> int:
    if args.max_lag is not None and args.max_lag < 1:
        raise UsageError(f"--max-lag must be >= 1, got {args.max_lag}")
    if args.threshold is not None and args.threshold < 0:
        raise UsageError("--threshold must be >= 0")
    args.omega = args.threshold
    cfg = RunConfig.resolve(args, ("max_lag", "omega", "variant", "seed", "epochs", "lr", "max_rounds"))
    ds = load_csv(args.input)
    max_lag = cfg.values["max_lag"] or ds.meta.get("max_lag")
    if max_lag is None:
        raise UsageError("--max-lag is required for data without a recorded max_lag")
    if not 1 <= int(max_lag) <= ds.T - 2:
        raise UsageError(f"--max-lag must be in [1, {ds.T - 2}] for T={ds.T}")
    max_lag = int(max_lag)
    if cfg.values["variant"] not in VARIANTS:
        raise UsageError(f"unknown variant {cfg.values['variant']!r}; expected one of {VARIANTS}")
    hp = cfg.hyperparams()
    if hp.omega is None:
        hp = replace(hp, omega=default_omega(ds))
    cfg.values.update(max_lag=max_lag, omega=hp.omega)
    effective = cfg.to_dict()
    out = _out_dir(args.out_dir)

    state = train(ds, max_lag, hp, cfg.values["variant"], cfg.learner_config(), raise_on_cycle=False)
    rep = state.report
    stamp = {"config": effective, "seed": hp.seed}
    rep.adjacency.to_csv(out / "adjacency.csv", preamble=stamp)
    doc = rep.to_dict()
    wall = doc.pop("wall_clock")  # kept out of the artifact so reruns are byte-identical
    _write_json(out / "report.json", {**doc, **stamp})
    log.info("training took %.1fs, final h=%.3e", wall, rep.final_h)
    if rep.graph is None:
        print(f"error: {rep.error}; adjacency.csv and report.json written", file=sys.stderr)
        return EXIT_DOMAIN
    rep.graph.to_json(out / "graph.json", extra=stamp)
    dot = rep.graph.to_dot()
    (out / "graph.dot").write_text(f"// ttcd: {json.dumps(stamp, sort_keys=True)}\n{dot}", encoding="utf-8")
    print(f"{len(rep.graph)} edges at omega={hp.omega}; final h={rep.final_h:.3e}; outputs in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pred, truth = TemporalGraph.from_json(args.pred), TemporalGraph.from_json(args.truth)
    try:
        card = score(pred, truth)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    print(card.row())
    if args.out:
        _write_json(Path(args.out), card.to_dict())
    return EXIT_OK


def _median_card(cards: list[ScoreCard]) -> dict:
    return {k: float(np.median([getattr(c, k) for c in cards])) for k in ("shd", "f1", "fdr")}


def format_ablation(rows: dict[str, dict]) -> str:
    lines = [f"{'variant':<20} {'SHD':>6} {'F1':>6} {'FDR':>6}"]
    for v, m in rows.items():
        lines.append(f"{v:<20} {m['shd']:>6.1f} {m['f1']:>6.2f} {m['fdr']:>6.2f}")
    return "\n".join(lines)


def cmd_ablate(args) -> int:
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}; expected one of {VARIANTS}")
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    cfg = RunConfig.resolve(args, ("dataset", "length", "seed", "epochs", "lr", "max_rounds"))
    base = cfg.genspec()
    hp = cfg.hyperparams()
    seeds = [base.seed + i for i in range(args.seeds)]
    reports = {v: [] for v in variants}
    cards = {v: [] for v in variants}
    for s in seeds:
        ds, truth = generate(replace(base, seed=s))
        run_hp = replace(hp, omega=hp.omega if hp.omega is not None else default_omega(ds))
        for v, reps in run_ablation(ds, MAX_LAG[base.dataset], run_hp, [v for v in variants], [s]).items():
            r = reps[0]
            pred = r.graph if r.graph is not None else TemporalGraph(truth.variables, truth.max_lag)
            cards[v].append(score(pred, truth))
            reports[v].append({"seed": s, "score": cards[v][-1].to_dict(), "error": r.error, "final_h": r.final_h})
    rows = {v: _median_card(cards[v]) for v in variants}
    table = format_ablation(rows)
    print(table)
    if args.out_dir:
        out = _out_dir(args.out_dir)
        (out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
        _write_json(out / "ablation.json", {"median": rows, "runs": reports, "config": cfg.to_dict(), "seeds": seeds})
    return EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ttcd", description="Temporal causal discovery on multivariate time series.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key=value file; flags override it")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        sp.add_argument("--seed", type=int)

    g = sub.add_parser("generate", help="write a synthetic dataset and its true graph")
    common(g)
    g.add_argument("--dataset", choices=["ds1", "ds2"])
    g.add_argument("--length", type=int)
    g.add_argument("--noise", choices=["gaussian", "poisson", "none"])
    g.add_argument("--burn-in", dest="burn_in", type=int)
    g.add_argument("--init-history", dest="init_history", choices=["normal", "zeros"])
    g.add_argument("--out-dir", default=".")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("stationarity", help="ADF and KPSS per variable")
    s.add_argument("--input", required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--json")
    s.set_defaults(func=cmd_stationarity)

    d = sub.add_parser("discover", help="learn a temporal causal graph from a CSV file")
    common(d)
    d.add_argument("--input", required=True)
    d.add_argument("--max-lag", dest="max_lag", type=int)
    d.add_argument("--threshold", type=float)
    d.add_argument("--variant", choices=VARIANTS)
    d.add_argument("--epochs", type=int)
    d.add_argument("--lr", type=float)
    d.add_argument("--max-rounds", dest="max_rounds", type=int)
    d.add_argument("--out-dir", default="out")
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("evaluate", help="score a predicted graph against the truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", help="compare variants on a synthetic dataset")
    common(a)
    a.add_argument("--variants", default=",".join(VARIANTS))
    a.add_argument("--dataset", choices=["ds1", "ds2"])
    a.add_argument("--length", type=int)
    a.add_argument("--seeds", type=int, default=3, help="number of consecutive seeds")
    a.add_argument("--epochs", type=int)
    a.add_argument("--lr", type=float)
    a.add_argument("--max-rounds", dest="max_rounds", type=int)
    a.add_argument("--out-dir")
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage problems (and --help) by exiting
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ttcd: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AcyclicityError, DivergenceError, StationarityError, DataError) as exc:
        print(f"ttcd: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"ttcd: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
