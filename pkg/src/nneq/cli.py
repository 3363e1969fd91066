"""``nneq`` command line: solve one scenario, sweep a parameter, or run the oracles.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

from . import oracle
from .equilibrium import EquilibriumReport, solve_spe
from .market_model import CANONICAL, MarketParams

SWEEP_COLUMNS = [
    "swept_value", "p_tilde", "q_N", "q_NN", "p_N", "p_NN", "delta_q", "n_N", "n_NN",
    "pi_N", "pi_NN", "pi_G", "branch", "interior", "coverage_isp", "coverage_cp",
]
SWEEPABLE = ("v", "v_star", "t", "c", "p_tilde")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    name: str
    lo: float
    hi: float
    steps: int

    def __post_init__(self) -> None:
        if self.name not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {self.name!r}; choose one of {', '.join(SWEEPABLE)}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigError("sweep bounds must be finite")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ConfigError(f"sweep needs at least 2 steps, got {self.steps}")

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        parts = text.split(":")
        if len(parts) != 4:
            raise ConfigError(f"--sweep expects name:lo:hi:steps, got {text!r}")
        name, lo, hi, steps = parts
        try:
            return cls(name, float(lo), float(hi), int(steps))
        except ValueError as err:
            raise ConfigError(f"bad --sweep value {text!r}: {err}") from None

    def values(self) -> List[float]:
        return [float(x) for x in oracle.GridSpec(self.lo, self.hi, self.steps).points()]


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one run needs. ``p_tilde=None`` means the smallest plateau fee."""

    params: MarketParams = CANONICAL
    p_tilde: Optional[float] = None
    sweep: Optional[SweepSpec] = None
    format: str = "json"
    path: Optional[str] = None
    stage: str = "all"
    deep: bool = False
    seed: int = 0
    p_tilde_grid: Optional[oracle.GridSpec] = None

    def to_dict(self) -> Dict[str, Any]:
        grid = self.p_tilde_grid
        return {
            "params": asdict(self.params),
            "p_tilde_policy": "minimal_plateau" if self.p_tilde is None else {"given": self.p_tilde},
            "sweep": None if self.sweep is None else asdict(self.sweep),
            "output": {"format": self.format, "path": self.path},
            "verify": {
                "stage": self.stage,
                "deep": self.deep,
                "seed": self.seed,
                "p_tilde_grid": None if grid is None else asdict(grid),
            },
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "ScenarioConfig":
        unknown = set(doc) - {"params", "p_tilde_policy", "sweep", "output", "verify"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            params = MarketParams(**doc["params"]) if "params" in doc else CANONICAL
            policy = doc.get("p_tilde_policy", "minimal_plateau")
            if policy == "minimal_plateau":
                p_tilde = None
            elif isinstance(policy, dict) and set(policy) == {"given"}:
                p_tilde = float(policy["given"])
            else:
                raise ConfigError(f"bad p_tilde_policy {policy!r}")
            sweep = SweepSpec(**doc["sweep"]) if doc.get("sweep") else None
            out = doc.get("output") or {}
            ver = doc.get("verify") or {}
            grid = ver.get("p_tilde_grid")
            return cls(
                params=params,
                p_tilde=p_tilde,
                sweep=sweep,
                format=out.get("format", "json"),
                path=out.get("path"),
                stage=ver.get("stage", "all"),
                deep=bool(ver.get("deep", False)),
                seed=int(ver.get("seed", 0)),
                p_tilde_grid=oracle.GridSpec(**grid) if grid else None,
            )
        except (TypeError, ValueError) as err:
            raise ConfigError(f"invalid config: {err}") from None


# ---------------------------------------------------------------------------
# rendering


def _num(x: float) -> float:
    return x + 0.0  # folds -0.0 into 0.0


def report_row(report: EquilibriumReport) -> Dict[str, Any]:
    f, s, pi = report.fees, report.split, report.payoffs
    return {
        "p_tilde": _num(f.p_tilde),
        "q_N": _num(f.q_N),
        "q_NN": _num(f.q_NN),
        "p_N": _num(f.p_N),
        "p_NN": _num(f.p_NN),
        "delta_q": _num(f.delta_q),
        "n_N": _num(s.n_N),
        "n_NN": _num(s.n_NN),
        "pi_N": _num(pi.pi_N),
        "pi_NN": _num(pi.pi_NN),
        "pi_G": _num(pi.pi_G),
        "branch": report.branch.branch.value,
        "interior": s.interior,
        "coverage_isp": report.coverage[0],
        "coverage_cp": report.coverage[1],
    }


def report_document(report: EquilibriumReport) -> Dict[str, Any]:
    row = report_row(report)
    return {
        "params": asdict(report.params),
        "fees": {k: row[k] for k in ("p_tilde", "q_N", "q_NN", "p_N", "p_NN")},
        "split": {"n_N": row["n_N"], "n_NN": row["n_NN"], "n_sub_N": report.split.n_sub_N,
                  "n_sub_NN": report.split.n_sub_NN, "interior": report.split.interior},
        "payoffs": {k: row[k] for k in ("pi_N", "pi_NN", "pi_G")},
        "branch": {"label": row["branch"], "delta_q_e": _num(report.branch.delta_q_e)},
        "coverage": {
            "isp": report.coverage[0],
            "cp": report.coverage[1],
            "sufficient": report.coverage_sufficient,
            "ok": report.coverage_ok,
        },
        "p_tilde_plateau": report.p_tilde_plateau,
        "warnings": report.warnings(),
    }


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def render_csv(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def render_json(doc: Any) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def sweep_row(config: ScenarioConfig, value: float) -> Dict[str, Any]:
    name = config.sweep.name
    if name == "p_tilde":
        report = solve_spe(config.params, value)
    else:
        report = solve_spe(replace(config.params, **{name: value}), config.p_tilde)
    return {"swept_value": _num(value), **report_row(report)}


def _sweep_task(args):
    return sweep_row(*args)


def run_sweep(config: ScenarioConfig, jobs: int = 1) -> List[Dict[str, Any]]:
    values = config.sweep.values()
    if config.sweep.name != "p_tilde":
        # fail fast on invalid points, e.g. t <= 0
        for v in values:
            try:
                replace(config.params, **{config.sweep.name: v})
            except ValueError as err:
                raise ConfigError(f"sweep point {config.sweep.name}={v!r}: {err}") from None
    tasks = [(config, v) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [_sweep_task(t) for t in tasks]


def cmd_solve(config: ScenarioConfig) -> int:
    report = solve_spe(config.params, config.p_tilde)
    for w in report.warnings():
        print(f"warning: {w}", file=sys.stderr)
    if config.format == "csv":
        _emit(render_csv([report_row(report)], SWEEP_COLUMNS[1:]), config.path)
    else:
        _emit(render_json(report_document(report)), config.path)
    return 0


def cmd_sweep(config: ScenarioConfig, jobs: int = 1) -> int:
    if config.sweep is None:
        raise ConfigError("sweep needs --sweep name:lo:hi:steps (or a 'sweep' entry in --config)")
    rows = run_sweep(config, jobs)
    if config.format == "csv":
        _emit(render_csv(rows, SWEEP_COLUMNS), config.path)
    else:
        _emit(render_json({"config": config.to_dict(), "columns": SWEEP_COLUMNS, "rows": rows}), config.path)
    return 0


def cmd_verify(config: ScenarioConfig) -> int:
    budget = oracle.Budget(p_tilde_grid=config.p_tilde_grid)
    verdicts = oracle.verify(config.params, config.stage, budget, seed=config.seed, deep=config.deep)
    passed = sum(v.passed for v in verdicts)
    if config.format == "json":
        docs = [
            {
                "target": v.target,
                "closed_form_value": v.closed_form_value,
                "oracle_value": v.oracle_value,
                "discrepancy": v.discrepancy if math.isfinite(v.discrepancy) else None,
                "tolerance_used": v.tolerance_used,
                "pass": v.passed,
                "diagnostics": v.diagnostics,
            }
            for v in verdicts
        ]
        text = json.dumps({"passed": passed, "total": len(verdicts), "verdicts": docs}, indent=2, default=_jsonable) + "\n"
    else:
        text = "".join(v.line() + "\n" for v in verdicts) + f"{passed}/{len(verdicts)} verdicts passed\n"
    _emit(text, config.path)
    return 0 if passed == len(verdicts) else 1


def _jsonable(value: Any) -> Any:
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario file; flags override its values")
    common.add_argument("--v", type=float)
    common.add_argument("--v-star", type=float, dest="v_star")
    common.add_argument("--t", type=float)
    common.add_argument("--c", type=float)
    policy = common.add_mutually_exclusive_group()
    policy.add_argument("--p-tilde", type=float, dest="p_tilde", help="play this transit fee")
    policy.add_argument("--plateau-min", action="store_true", help="play 5t/4, the smallest plateau fee (default)")
    common.add_argument("--format", choices=("csv", "json", "text"), help="csv|json for solve and sweep, text|json for verify")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--seed", type=int)
    common.add_argument("--dump-config", metavar="PATH", help="also write the effective config as JSON")

    parser = argparse.ArgumentParser(prog="nneq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one scenario")
    sweep = sub.add_parser("sweep", parents=[common], help="solve over a parameter grid")
    sweep.add_argument("--sweep", help="name:lo:hi:steps, name in " + ", ".join(SWEEPABLE))
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes (output order is fixed)")
    verify = sub.add_parser("verify", parents=[common], help="check closed forms against brute-force oracles")
    verify.add_argument("--deep", action="store_true", help="oracle-only pipeline and simulated users")
    verify.add_argument("--stage", choices=("stage1", "stage2", "stage3", "stage4", "all"))
    verify.add_argument("--p-tilde-grid", dest="p_tilde_grid", help="lo:hi:steps for the stage-1 grid")
    return parser


def config_from_args(args: argparse.Namespace) -> ScenarioConfig:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config!r}: {err}") from None
        config = ScenarioConfig.from_dict(doc)
    else:
        default_format = "csv" if args.command == "sweep" else ("text" if args.command == "verify" else "json")
        config = ScenarioConfig(format=default_format)

    overrides = {k: getattr(args, k) for k in ("v", "v_star", "t", "c") if getattr(args, k) is not None}
    try:
        params = replace(config.params, **overrides)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    changes: Dict[str, Any] = {"params": params}
    if args.p_tilde is not None:
        if not math.isfinite(args.p_tilde):
            raise ConfigError("--p-tilde must be finite")
        changes["p_tilde"] = args.p_tilde
    elif args.plateau_min:
        changes["p_tilde"] = None
    if args.format:
        changes["format"] = args.format
    if args.out:
        changes["path"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "sweep", None):
        changes["sweep"] = SweepSpec.parse(args.sweep)
    if getattr(args, "deep", False):
        changes["deep"] = True
    if getattr(args, "stage", None):
        changes["stage"] = args.stage
    if getattr(args, "p_tilde_grid", None):
        try:
            lo, hi, steps = args.p_tilde_grid.split(":")
            changes["p_tilde_grid"] = oracle.GridSpec(float(lo), float(hi), int(steps))
        except ValueError as err:
            raise ConfigError(f"bad --p-tilde-grid {args.p_tilde_grid!r}: {err}") from None
    allowed = ("text", "json") if args.command == "verify" else ("csv", "json")
    if args.format and args.format not in allowed:
        raise ConfigError(f"{args.command} --format must be one of {', '.join(allowed)}, got {args.format!r}")
    return replace(config, **changes)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        if args.dump_config:
            with open(args.dump_config, "w", encoding="utf-8") as fh:
                fh.write(render_json(config.to_dict()))
        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "sweep":
            return cmd_sweep(config, jobs=max(1, args.jobs))
        return cmd_verify(config)
    except ConfigError as err:
        print(f"nneq: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
