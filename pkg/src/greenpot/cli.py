"""Command-line front end.

    greenpot solve  --config scenario.json --out results/
    greenpot verify --config scenario.json --out results/ --jobs 2
    greenpot field  --config scenario.json --out results/

Exit codes: 0 success, 1 computational or experimental failure, 2
configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .config import load_config
from .equilibrium import DomainSolution
from .errors import ConfigError, GreenPotError
from .geometry import discretize_boundary
from .lab import _mode, run_scenario, run_scenarios
from .levelset import extract_level_domain

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("greenpot")


def _load(args, require_experiment: bool):
    configs = []
    for path in args.config:
        cfg = load_config(path, require_experiment)
        configs.append(cfg.with_overrides(args.h, args.panels))
    return configs


def _solutions(cfg):
    K = discretize_boundary(cfg.build_compact_set(), cfg.panel_count)
    for i in range(len(cfg.domains)):
        D = cfg.build_domain(i)
        yield i, K, DomainSolution(K, D, cfg.h, _mode(cfg, D))


def cmd_solve(args) -> int:
    configs = _load(args, require_experiment=False)
    out = Path(args.out)
    for cfg in configs:
        for i, K, sol in _solutions(cfg):
            r = sol.result
            payload = {"energy": r.energy, "capacity": r.capacity, "kkt_gap": r.kkt_gap,
                       "iterations": r.iterations, "weights": r.weights}
            stem = cfg.name if len(cfg.domains) == 1 else f"{cfg.name}_D{i + 1}"
            io.write_json(out / f"{stem}.json", payload)
            io.write_measure(out / f"{stem}_measure.csv", K, r.weights)
            print(f"{stem}: energy={r.energy:.10g} capacity={r.capacity:.10g} kkt_gap={r.kkt_gap:.3g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    configs = _load(args, require_experiment=True)
    out = Path(args.out)
    if len(configs) == 1:
        # a single scenario writes straight into --out
        manifests = [run_scenario(configs[0], out)]
    else:
        manifests = run_scenarios(configs, out, args.jobs)
    code = EXIT_OK
    for m in manifests:
        status = "PASS" if m.passed else "FAIL"
        note = "" if m.ok else " (unexpected)"
        print(f"{m.scenario['name']}: {status} expect={m.expect}{note} {m.reason}".rstrip())
        if not m.ok:
            code = EXIT_FAIL
    return code


def cmd_field(args) -> int:
    configs = _load(args, require_experiment=False)
    out = Path(args.out)
    for cfg in configs:
        alphas = [float(a) for a in cfg.params.get("alphas", [])]
        _, K, sol = next(_solutions(cfg))
        U = sol.field()
        io.write_field(out / f"{cfg.name}_field.csv", U)
        io.write_measure(out / f"{cfg.name}_measure.csv", K, sol.weights)
        for a in alphas:
            if not a < sol.energy:
                raise GreenPotError(f"level {a} is not below the energy {sol.energy}")
            level = extract_level_domain(U, a, K)
            io.write_mask(out / f"{cfg.name}_mask_{a:.6g}.csv", level)
            print(f"{cfg.name}: alpha={a:.6g} cells={int(level.mask.sum())} area={level.area:.6g}")
        print(f"{cfg.name}: energy={sol.energy:.10g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greenpot", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("solve", cmd_solve, "solve the equilibrium problem for each domain"),
                            ("verify", cmd_verify, "run the configured experiment"),
                            ("field", cmd_field, "write the potential field and level masks")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, action="append", help="scenario file (repeatable)")
        p.add_argument("--out", required=True, help="output directory (created if missing)")
        p.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")
        p.add_argument("--h", type=float, default=None, help="grid spacing override")
        p.add_argument("--panels", type=int, default=None, help="panel count override")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = None
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(Path(args.out) / "run.log", mode="w", encoding="utf-8")
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        handler.setLevel(logging.INFO)
        log.addHandler(handler)
        log.setLevel(logging.INFO)
        log.propagate = bool(args.verbose)
        log.info("%s %s", args.command, " ".join(args.config))
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GreenPotError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        log.info("failed: %s", exc)
        return EXIT_FAIL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    finally:
        if handler is not None:
            log.removeHandler(handler)
            handler.close()


if __name__ == "__main__":
    sys.exit(main())
