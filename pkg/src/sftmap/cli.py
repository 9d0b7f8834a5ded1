"""Command-line entry point: ``sftmap solve|validate|oracle|gen|bench|fixtures``.

Exit codes: 0 when the answer is positive (mapped, valid, feasible),
2 when it is a legitimate negative (infeasible, violations found) and 1 for
errors such as bad arguments or unreadable files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import re
import sys
from pathlib import Path

from . import fixtures
from .constraints import validate_full_mapping
from .dot import export_dot
from .generator import GenerationError, GenParams, generate_scenario, paper_params
from .io import (
    DocumentError,
    build_report,
    dumps,
    load_mapping,
    load_scenario,
    mapping_to_dict,
    save_mapping,
    save_scenario,
    scenario_to_dict,
)
from .model import ModelError, ScenarioError
from .oracle import OracleLimitError, enumerate_valid_mappings
from .solver import map_sft_to_pn

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NEGATIVE = 2

BENCH_COLUMNS = ["seed", "devices", "microservices", "success", "attempts", "backtracks", "extended_searches", "elapsed_ms"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which here means "infeasible".
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed_range(text: str) -> range:
    m = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}")
    lo, hi = int(m.group(1)), int(m.group(2))
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return range(lo, hi + 1)


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sftmap", description="Map service function trees onto fog networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="search for a valid mapping")
    p.add_argument("scenario")
    p.add_argument("--hmax", type=_positive, help="maximum hops per route (default: scenario setting)")
    p.add_argument("--dot", metavar="FILE", help="write the mapping as Graphviz DOT")
    p.add_argument("--report", metavar="FILE", help="write the JSON report ('-' for stdout)")
    p.add_argument("--mapping", metavar="FILE", help="write the mapping document")

    p = sub.add_parser("validate", help="check a mapping against every constraint")
    p.add_argument("scenario")
    p.add_argument("mapping")

    p = sub.add_parser("oracle", help="enumerate valid mappings exhaustively")
    p.add_argument("scenario")
    p.add_argument("--limit", type=_positive, help="stop after K mappings")
    p.add_argument("--dump", action="store_true", help="print each mapping as a JSON line")

    p = sub.add_parser("gen", help="generate a scenario")
    p.add_argument("--devices", type=_positive, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--profile", choices=["paper", "custom"], default="custom")
    p.add_argument("--microservices", type=_positive)
    p.add_argument("--hmax", type=_positive)
    p.add_argument("-o", "--output", metavar="FILE", help="output file (default: stdout)")

    p = sub.add_parser("bench", help="solve a range of generated scenarios and emit CSV")
    p.add_argument("--seeds", type=_seed_range, required=True, metavar="A..B")
    p.add_argument("--profile", choices=["paper"], default="paper")
    p.add_argument("-o", "--output", metavar="FILE", help="CSV file (default: stdout)")

    p = sub.add_parser("fixtures", help="write the worked-example scenarios as files")
    p.add_argument("--out", default=".", metavar="DIR")
    return parser


def _write(path: str | None, text: str, out) -> None:
    if path is None or path == "-":
        out.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_solve(args, out, err) -> int:
    scenario = load_scenario(args.scenario)
    if args.hmax is not None:
        scenario = dataclasses.replace(scenario, config=scenario.config.replace(h_max=args.hmax))
    result = map_sft_to_pn(scenario.sft, scenario.network, scenario.config)
    violations = validate_full_mapping(scenario.network, scenario.sft, result.mapping, scenario.config) if result.success else []
    if result.success and violations:
        err.write("internal error: solver produced a mapping that fails validation\n")
        for v in violations:
            err.write(f"  {v.constraint.value} {'/'.join(v.subject)}: {v.detail}\n")
        return EXIT_ERROR
    report = build_report(scenario, result, violations)
    if args.report:
        _write(args.report, dumps(report), out)
    if args.dot:
        _write(args.dot, export_dot(scenario.network, result, scenario.sft, scenario.config, scenario.name), out)
    if args.mapping:
        save_mapping(result.mapping, args.mapping, scenario.name)
    if args.report != "-" and args.dot != "-":
        if result.success:
            out.write(f"mapped {scenario.name}: {len(result.mapping.placements)} placements\n")
            for m, d in result.mapping.placements.items():
                rec = result.mapping.forwarding.get(m)
                via = f" (sensor data relayed from {rec.selected_sensor_device})" if rec else ""
                out.write(f"  {m} -> {d}{via}\n")
        else:
            out.write(f"no valid mapping for {scenario.name}\n")
        s = result.stats
        out.write(f"attempts={s.attempts} backtracks={s.backtracks} extended_searches={s.extended_searches}\n")
    return EXIT_OK if result.success else EXIT_NEGATIVE


def cmd_validate(args, out, err) -> int:
    scenario = load_scenario(args.scenario)
    mapping = load_mapping(args.mapping)
    violations = validate_full_mapping(scenario.network, scenario.sft, mapping, scenario.config)
    if not violations:
        out.write("valid\n")
        return EXIT_OK
    out.write(f"{len(violations)} violation(s)\n")
    for v in violations:
        out.write(f"  {v.constraint.value} {'/'.join(v.subject)}: {v.detail}\n")
    return EXIT_NEGATIVE


def cmd_oracle(args, out, err) -> int:
    scenario = load_scenario(args.scenario)
    found = enumerate_valid_mappings(scenario.network, scenario.sft, scenario.config, limit=args.limit)
    if args.dump:
        for m in found:
            out.write(json.dumps(mapping_to_dict(m), sort_keys=True) + "\n")
    suffix = " (limit reached)" if args.limit is not None and len(found) == args.limit else ""
    out.write(f"{len(found)} valid mapping(s){suffix}\n")
    return EXIT_OK if found else EXIT_NEGATIVE


def cmd_gen(args, out, err) -> int:
    overrides = {"device_count": args.devices}
    if args.microservices is not None:
        overrides["microservice_count"] = args.microservices
    if args.hmax is not None:
        overrides["h_max"] = args.hmax
    if args.profile == "paper":
        params = paper_params(args.seed, **overrides)
    else:
        n = args.devices
        params = GenParams(
            seed=args.seed,
            temperature_sensors=max(8, n),
            visual_sensors=max(2, n // 3),
            wind_sensors=max(1, n // 5),
            **overrides,
        )
    params.check()
    scenario = generate_scenario(params)
    _write(args.output, dumps(scenario_to_dict(scenario)), out)
    return EXIT_OK


def cmd_bench(args, out, err) -> int:
    rows = []
    for seed in args.seeds:
        scenario = generate_scenario(paper_params(seed))
        result = map_sft_to_pn(scenario.sft, scenario.network, scenario.config)
        if result.success and validate_full_mapping(scenario.network, scenario.sft, result.mapping, scenario.config):
            err.write(f"internal error: seed {seed} produced an invalid mapping\n")
            return EXIT_ERROR
        s = result.stats
        rows.append(
            [seed, len(scenario.network.devices), len(scenario.sft.nodes), int(result.success), s.attempts,
             s.backtracks, s.extended_searches, f"{s.elapsed * 1000:.3f}"]
        )
    if args.output:
        fh = open(args.output, "w", newline="", encoding="utf-8")
    else:
        fh = out
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        writer.writerows(rows)
    finally:
        if args.output:
            fh.close()
    ok = sum(r[3] for r in rows)
    err.write(f"{ok}/{len(rows)} scenarios mapped\n")
    return EXIT_OK


def cmd_fixtures(args, out, err) -> int:
    target = Path(args.out)
    target.mkdir(parents=True, exist_ok=True)
    for scenario in fixtures.all_fixtures():
        save_scenario(scenario, target / f"{scenario.name}.json")
        if scenario.reference_mapping is not None:
            save_mapping(scenario.reference_mapping, target / f"{scenario.name}-mapping.json", scenario.name)
        out.write(f"wrote {target / (scenario.name + '.json')}\n")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "validate": cmd_validate,
    "oracle": cmd_oracle,
    "gen": cmd_gen,
    "bench": cmd_bench,
    "fixtures": cmd_fixtures,
}


def run_cli(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    try:
        return COMMANDS[args.command](args, out, err)
    except (DocumentError, GenerationError, OracleLimitError, ScenarioError, ModelError, ValueError, OSError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_ERROR


def main() -> None:
    sys.exit(run_cli())


__all__ = ["BENCH_COLUMNS", "EXIT_ERROR", "EXIT_NEGATIVE", "EXIT_OK", "build_parser", "main", "run_cli"]
