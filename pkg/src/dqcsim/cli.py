"""Command line: ``dqcsim run|compile|parse``.

Exit codes: 0 ok, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .circuit import CircuitError
from .compiler import CompileError
from .config import (
    ConfigError,
    apply_overrides,
    build_scenario,
    bundled_scenarios,
    dump_config,
    load_config,
    run_settings,
)
from .hardware import TopologyError
from .kernel import SimulationError
from .qasm import QasmError, format_circuit, load_qasm
from .runtime import run_master, run_shots

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(args) -> dict:
    data = load_config(args.config)
    overrides = list(args.set or [])
    if getattr(args, "circuit", None):
        overrides.append(f"software.circuit_file={json.dumps(str(Path(args.circuit).resolve()))}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"run.seed={args.seed}")
    if getattr(args, "shots", None) is not None:
        overrides.append(f"run.shots={args.shots}")
    data = apply_overrides(data, overrides)
    if getattr(args, "dump_config", None):
        Path(args.dump_config).write_text(dump_config(data), encoding="utf-8")
    return data


def cmd_run(args) -> int:
    data = _load(args)
    scenario = build_scenario(data)
    seed, shots = run_settings(data)
    try:
        program = scenario.compile()
    except (CompileError, CircuitError) as e:
        raise ConfigError(str(e)) from None
    if args.verbose:
        row, machine = run_master(
            program, scenario.network, scenario.collector, seed, scenario.formalism,
            verbose=True, return_machine=True,
        )
        for line in machine.kernel.log_lines:
            print(line)
    result = run_shots(scenario, shots, seed, fail_fast=args.fail_fast, max_workers=args.jobs)
    text = result.to_json() if args.format == "json" else result.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    elif not args.quiet:
        sys.stdout.write(text)
    failed = [r for r in result.rows if r.error]
    ok = [r for r in result.rows if not r.error]
    if ok and scenario.collector is not None:
        print(f"mean fidelity: {result.mean_fidelity():.16f}")
    if ok:
        print(f"final time (shot {ok[0].shot}): {ok[0].final_time!r} ns")
    for r in failed:
        print(f"shot {r.shot} failed: {r.error}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_compile(args) -> int:
    data = _load(args)
    scenario = build_scenario(data)
    try:
        program = scenario.compile()
    except (CompileError, CircuitError) as e:
        raise ConfigError(str(e)) from None
    text = program.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    rep = program.report()
    print(f"ebits={rep['ebits']} classical_bits={rep['classical_bits']}")
    for node, d in rep["depth"].items():
        print(f"depth {node}={d}")
    return EXIT_OK


def cmd_parse(args) -> int:
    try:
        text = Path(args.qasm).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(str(e)) from None
    circ = load_qasm(text)
    out = format_circuit(circ)
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    for note in circ.annotations:
        print(f"# {note}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dqcsim", description="Distributed quantum circuit simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument(
            "--config", required=True,
            help=f"scenario TOML file or bundled name ({', '.join(bundled_scenarios())})",
        )
        sp.add_argument("--circuit", help="circuit file (.qasm or distributed text), replaces the config's")
        sp.add_argument("--set", action="append", metavar="PATH=VALUE", help="override a config value")
        sp.add_argument("--out", help="write output here instead of stdout")
        sp.add_argument("--dump-config", metavar="FILE", help="write the effective config")

    r = sub.add_parser("run", help="compile and run shots")
    common(r)
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--seed", type=int)
    r.add_argument("--shots", type=int)
    r.add_argument("--fail-fast", action="store_true")
    r.add_argument("--verbose", action="store_true", help="print the event trace of the first shot")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for shots")
    r.add_argument("--quiet", action="store_true", help="only print the summary")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compile", help="print per-QPU instruction streams and resource counts")
    common(c)
    c.set_defaults(func=cmd_compile)

    q = sub.add_parser("parse", help="parse an OpenQASM 2.0 file and list the flat circuit")
    q.add_argument("qasm")
    q.add_argument("--out")
    q.set_defaults(func=cmd_parse)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, QasmError, TopologyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
