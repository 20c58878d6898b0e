"""Command-line front end.

Subcommands: solve, table1, figure, simulate, validate.  Settings come from
built-in defaults, then an optional ``--config`` file, then flags.  Exit codes:
0 success, 2 configuration error, 3 infeasible regime, 4 certification or
property failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from aoii import __version__
from aoii.baseline import solve_aoi_constrained
from aoii.model import SystemParams, aoii_kernel
from aoii.optimizer import InfeasibleRegimeError, solve_constrained, verify_optimality
from aoii.sim import DEFAULT_BURN_IN, MIXING_MODES, PolicySpec, SweepCell, run, run_sweep
from aoii.validation import default_grid, faulty_kernel, run_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_FAILED = 4


class ConfigError(ValueError):
    pass


def _prob_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# key -> (parser, unit or None)
SCHEMA: dict[str, tuple[Any, Optional[str]]] = {
    "N": (int, "states"),
    "p_remain": (float, "prob"),
    "p_success": (float, "prob"),
    "alpha": (float, "fraction"),
    "horizon": (int, "slots"),
    "burn_in": (int, "slots"),
    "seed": (int, None),
    "policy": (str, None),
    "threshold": (int, "slots"),
    "rho": (float, "prob"),
    "mixing": (str, None),
    "sweep_p_remain": (_prob_list, "prob"),
    "sweep_alpha": (_prob_list, "fraction"),
    "workers": (int, None),
    "format": (str, None),
    "out": (str, None),
    "which": (str, None),
}

BASE_DEFAULTS = {
    "N": 8,
    "p_remain": 0.8,
    "p_success": 0.8,
    "alpha": 0.1,
    "horizon": 1_000_000,
    "burn_in": DEFAULT_BURN_IN,
    "seed": 1,
    "policy": "optimal",
    "threshold": None,
    "rho": None,
    "mixing": "state",
    "sweep_p_remain": None,
    "sweep_alpha": None,
    "workers": 1,
    "format": "csv",
    "out": None,
    "which": "fig4",
}

COMMAND_DEFAULTS = {
    "solve": {"format": "json"},
    "table1": {"sweep_p_remain": [0.2, 0.4, 0.6, 0.8]},
    "simulate": {"format": "json"},
    "figure": {},
}

FIGURE_DEFAULTS = {
    "fig4": {"sweep_p_remain": [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]},
    "fig5": {"p_remain": 0.5, "sweep_alpha": [0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0]},
    "fig6": {"p_remain": 0.5, "sweep_alpha": [0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0]},
}

POLICIES = ("optimal", "always", "never", "threshold", "mixture", "aoi-threshold", "aoi-mixture", "aoi-optimal")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value [unit]`` lines; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value [unit]'")
        key, rhs = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        parser, unit = SCHEMA[key]
        tokens = rhs.split()
        if not tokens:
            raise ConfigError(f"{source}:{lineno}: missing value for {key!r}")
        if len(tokens) > 2 or (len(tokens) == 2 and tokens[1] != unit):
            expected = f"unit {unit!r}" if unit else "no unit"
            raise ConfigError(f"{source}:{lineno}: {key} takes {expected}, got {rhs!r}")
        try:
            out[key] = parser(tokens[0])
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {tokens[0]!r}") from None
    return out


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    cfg = dict(BASE_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(command, {}))
    if command == "figure":
        which = flag_values.get("which") or file_values.get("which") or cfg["which"]
        if which not in FIGURE_DEFAULTS:
            raise ConfigError(f"--which must be one of {sorted(FIGURE_DEFAULTS)}, got {which!r}")
        cfg.update(FIGURE_DEFAULTS[which])
    cfg.update(file_values)
    cfg.update({k: v for k, v in flag_values.items() if v is not None})
    _validate_config(command, cfg)
    return cfg


def _validate_config(command: str, cfg: dict) -> None:
    try:
        params(cfg)
        for pr in cfg["sweep_p_remain"] or []:
            SystemParams(cfg["N"], pr, cfg["p_success"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    alphas = [cfg["alpha"]] + list(cfg["sweep_alpha"] or [])
    for a in alphas:
        if not 0.0 < a <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {a}")
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {cfg['format']!r}")
    if cfg["horizon"] < 30:
        raise ConfigError(f"horizon must be >= 30 slots, got {cfg['horizon']}")
    if cfg["burn_in"] < 0 or cfg["horizon"] < 10 * cfg["burn_in"]:
        raise ConfigError(f"horizon ({cfg['horizon']}) must be >= 10 x burn_in ({cfg['burn_in']})")
    if cfg["policy"] not in POLICIES:
        raise ConfigError(f"policy must be one of {POLICIES}, got {cfg['policy']!r}")
    if cfg["mixing"] not in MIXING_MODES:
        raise ConfigError(f"mixing must be one of {MIXING_MODES}, got {cfg['mixing']!r}")
    if cfg["workers"] < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg['workers']}")
    if command == "simulate" and cfg["policy"] in ("threshold", "mixture", "aoi-threshold", "aoi-mixture"):
        if cfg["threshold"] is None:
            raise ConfigError(f"policy {cfg['policy']} needs a threshold")
        if cfg["policy"].endswith("mixture") and cfg["rho"] is None:
            raise ConfigError(f"policy {cfg['policy']} needs rho")


def params(cfg: dict, p_remain: Optional[float] = None) -> SystemParams:
    return SystemParams(cfg["N"], cfg["p_remain"] if p_remain is None else p_remain, cfg["p_success"])


def config_hash(command: str, cfg: dict) -> str:
    # Output plumbing and parallelism do not change results, so they stay out of the hash.
    blob = json.dumps({"command": command, **{k: v for k, v in cfg.items() if k not in ("out", "format", "workers")}}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _csv_text(command: str, cfg: dict, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    buf.write(f"# aoii {__version__} csv-schema 1\n")
    buf.write(f"# command={command} config-sha256={config_hash(command, cfg)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def _json_text(command: str, cfg: dict, payload: Any) -> str:
    doc = {"tool": f"aoii {__version__}", "command": command, "config_sha256": config_hash(command, cfg), "result": payload}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(cfg: dict, text: str) -> None:
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    else:
        sys.stdout.write(text)


def _records(command: str, cfg: dict, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    if cfg["format"] == "json":
        return _json_text(command, cfg, [dict(zip(header, r)) for r in rows])
    return _csv_text(command, cfg, header, rows)


def cmd_solve(cfg: dict) -> int:
    p = params(cfg)
    sol = solve_constrained(p, cfg["alpha"])
    cert = verify_optimality(p, sol)
    result = sol.as_dict()
    result["certificate"] = {"ok": cert.ok, "checks": cert.checks}
    if cfg["out"]:
        n0 = "never" if sol.never_transmit else sol.n0
        print(
            f"n0={n0} rho={sol.rho:.6g} lambda*={sol.lambda_star:.6g} "
            f"cost={sol.expected_cost:.6g} power={sol.expected_power:.6g} certified={cert.ok}"
        )
    if cfg["format"] == "json":
        _emit(cfg, _json_text("solve", cfg, result))
    else:
        header = list(sol.as_dict())
        _emit(cfg, _csv_text("solve", cfg, header + ["certified"], [list(sol.as_dict().values()) + [cert.ok]]))
    if not cert.ok:
        print(f"error: certification failed: {', '.join(cert.failures)}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_table1(cfg: dict) -> int:
    rows = []
    for pr in cfg["sweep_p_remain"]:
        sol = solve_constrained(params(cfg, pr), cfg["alpha"])
        rows.append([pr, "never" if sol.never_transmit else sol.n0])
    _emit(cfg, _records("table1", cfg, ["p_R", "n0"], rows))
    return EXIT_OK


FIGURE_HEADER = ["x", "closed_form", "sim_mean", "sim_se", "policy_tag"]


def figure_rows(cfg: dict, which: str) -> list[list[Any]]:
    """Curve points for one figure; rows ordered by x then policy."""
    cells: list[SweepCell] = []
    closed: list[Optional[float]] = []
    if which == "fig4":
        for pr in cfg["sweep_p_remain"]:
            p = params(cfg, pr)
            sol = solve_constrained(p, cfg["alpha"])
            cells.append(SweepCell(p, sol.policy(cfg["mixing"]), {"x": pr, "tag": "aoii-optimal"}))
            closed.append(sol.expected_cost)
    else:
        p = params(cfg)
        for alpha in cfg["sweep_alpha"]:
            sol = solve_constrained(p, alpha)
            fam = solve_aoi_constrained(p, alpha)
            cells.append(SweepCell(p, sol.policy(cfg["mixing"]), {"x": alpha, "tag": "aoii-optimal"}))
            cells.append(SweepCell(p, fam.policy(cfg["mixing"]), {"x": alpha, "tag": "aoi-baseline"}))
            if which == "fig5":
                closed += [sol.expected_cost, None]
            else:
                closed += [None, fam.expected_aoi]
    sweep = run_sweep(cells, cfg["horizon"], cfg["seed"], cfg["burn_in"], workers=cfg["workers"])
    rows = []
    for row, cf in zip(sweep, closed):
        m = row.metrics
        mean, se = (m.avg_aoi, m.se_aoi) if which == "fig6" else (m.avg_aoii, m.se_aoii)
        rows.append([row.cell.tags["x"], cf, mean, se, row.cell.tags["tag"]])
    return rows


def cmd_figure(cfg: dict) -> int:
    rows = figure_rows(cfg, cfg["which"])
    _emit(cfg, _records(f"figure-{cfg['which']}", cfg, FIGURE_HEADER, rows))
    return EXIT_OK


def _policy_from_config(cfg: dict, p: SystemParams) -> PolicySpec:
    kind, mixing = cfg["policy"], cfg["mixing"]
    if kind == "optimal":
        return solve_constrained(p, cfg["alpha"]).policy(mixing)
    if kind == "aoi-optimal":
        return solve_aoi_constrained(p, cfg["alpha"]).policy(mixing)
    if kind == "always":
        return PolicySpec.always()
    if kind == "never":
        return PolicySpec.never()
    if kind == "threshold":
        return PolicySpec.aoii_threshold(cfg["threshold"])
    if kind == "aoi-threshold":
        return PolicySpec.aoi_threshold(cfg["threshold"])
    if kind == "mixture":
        return PolicySpec.mixture(cfg["threshold"], cfg["rho"], mixing)
    return PolicySpec.aoi_mixture(cfg["threshold"], cfg["rho"], mixing)


def cmd_simulate(cfg: dict) -> int:
    p = params(cfg)
    policy = _policy_from_config(cfg, p)
    m = run(p, policy, cfg["horizon"], cfg["seed"], cfg["burn_in"])
    d = m.as_dict()
    _emit(cfg, _records("simulate", cfg, list(d), [list(d.values())]))
    return EXIT_OK


def cmd_validate(cfg: dict, inject_fault: bool = False) -> int:
    results = run_suite(default_grid(), kernel=faulty_kernel if inject_fault else aoii_kernel)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"error: {len(failed)} properties violated: {'; '.join(failed)}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        # One diagnostic line, config-error exit code.
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat 'key = value [unit]' file")
    common.add_argument("--N", dest="N", type=int, help="number of source states")
    common.add_argument("--p-remain", dest="p_remain", type=float, help="probability the source keeps its value")
    common.add_argument("--p-success", dest="p_success", type=float, help="channel success probability")
    common.add_argument("--alpha", type=float, help="power budget: max long-run fraction of slots transmitting")
    common.add_argument("--horizon", type=int, help="simulated slots after burn-in")
    common.add_argument("--seed", type=int)
    common.add_argument("--burn-in", dest="burn_in", type=int)
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--mixing", choices=MIXING_MODES, help="how mixtures randomise between thresholds")
    common.add_argument("--workers", type=int, help="parallel processes for sweeps")
    common.add_argument("--sweep-p-remain", dest="sweep_p_remain", type=_prob_list, metavar="LIST")
    common.add_argument("--sweep-alpha", dest="sweep_alpha", type=_prob_list, metavar="LIST")

    parser = _Parser(prog="aoii", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aoii {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="optimal constrained policy and its certificate")
    sub.add_parser("table1", parents=[common], help="lower threshold n0 across p_remain")
    fig = sub.add_parser("figure", parents=[common], help="simulated curves with closed-form overlays")
    fig.add_argument("--which", choices=sorted(FIGURE_DEFAULTS))
    sim = sub.add_parser("simulate", parents=[common], help="simulate one policy")
    sim.add_argument("--policy", choices=POLICIES)
    sim.add_argument("--threshold", type=int)
    sim.add_argument("--rho", type=float)
    val = sub.add_parser("validate", parents=[common], help="cross-check closed forms against oracles")
    val.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


FLAG_KEYS = set(SCHEMA)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k in FLAG_KEYS}
    try:
        file_values = {}
        if args.config:
            path = Path(args.config)
            try:
                text = path.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
            file_values = parse_config_text(text, str(path))
        cfg = resolve_config(args.command, file_values, flags)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "table1":
            return cmd_table1(cfg)
        if args.command == "figure":
            return cmd_figure(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_validate(cfg, inject_fault=args.inject_fault)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleRegimeError as exc:
        print(f"error: infeasible regime: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
