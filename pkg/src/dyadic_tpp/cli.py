"""Command-line front end: ``tpp <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import stego
from .assignment_dp import StateCapExceeded
from .distribution import TokenDistribution, load_distribution, load_distribution_json, make_instance
from .solver import (
    AssumptionError,
    NoCandidateError,
    brute_force,
    solution_from_dict,
    solve,
    verify,
)
from .tree import enumerate_height_vectors

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_NO_CANDIDATE = 4
EXIT_STATE_CAP = 5

BENCH_COLUMNS = ["n", "zipf_s", "epsilon", "R", "divergence", "rate", "branch",
                 "candidates", "frontier_max", "millis"]


class ConfigError(ValueError):
    pass


def _read_dist(path: str | None) -> TokenDistribution:
    if not path:
        raise ConfigError("--input is required")
    try:
        return load_distribution_json(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except (json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"bad distribution file {path}: {exc}") from None


def _read_json(path: str | None, what: str):
    if not path:
        raise ConfigError(f"{what} file is required")
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad {what} file {path}: {exc}") from None


def _instance(args, dist):
    if args.rate is None or args.epsilon is None:
        raise ConfigError("--rate and --epsilon are required")
    try:
        return make_instance(dist, args.rate, args.epsilon)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _load_solution(args, dist):
    try:
        return solution_from_dict(_read_json(args.solution, "solution"), dist)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad solution file: {exc}") from None


def cmd_solve(args) -> int:
    dist = _read_dist(args.input)
    inst = _instance(args, dist)
    sol = solve(inst, strict=not args.no_strict, jobs=args.jobs)
    _emit(sol.to_json() + "\n", args.output)
    print(f"divergence={sol.divergence:.6g} rate={sol.rate:.6g} branch={sol.branch} "
          f"candidates={sol.candidate_count} heights={sol.heights.to_list()}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    dist = _read_dist(args.input)
    inst = _instance(args, dist)
    report = verify(_load_solution(args, dist), inst)
    _emit(json.dumps(report.to_dict()) + "\n", args.output)
    return EXIT_OK if report.passed else EXIT_FAILED_CHECK


def cmd_oracle(args) -> int:
    dist = _read_dist(args.input)
    if args.rate is None or args.rate <= 0:
        raise ConfigError("--rate must be positive")
    try:
        result = brute_force(dist, args.rate, args.max_depth)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = result.to_dict()
    if args.compare:
        inst = _instance(args, dist)
        sol = solve(inst, strict=False, jobs=args.jobs)
        out["solve_divergence"] = sol.divergence
        out["gap"] = sol.divergence - result.opt_divergence
        out["gap_bound"] = 12 * inst.epsilon
    _emit(json.dumps(out) + "\n", args.output)
    return EXIT_OK


def cmd_enum_trees(args) -> int:
    try:
        vectors = enumerate_height_vectors(args.max_depth)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = [{"heights": h.to_list(), "rate": h.rate, "has_max_depth_leaf": flag}
            for h, flag in vectors]
    _emit(json.dumps(rows) + "\n", args.output)
    return EXIT_OK


def _payload_bits(args) -> str:
    if args.payload_hex is not None and args.payload_file is not None:
        raise ConfigError("give either --payload-hex or --payload-file")
    if args.payload_hex is not None:
        try:
            return stego.bits_from_bytes(bytes.fromhex(args.payload_hex))
        except ValueError as exc:
            raise ConfigError(f"bad hex payload: {exc}") from None
    if args.payload_file is not None:
        try:
            return stego.bits_from_bytes(Path(args.payload_file).read_bytes())
        except OSError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError("--payload-hex or --payload-file is required")


def cmd_stego_encode(args) -> int:
    dist = _read_dist(args.input)
    codec = stego.build_codec(_load_solution(args, dist), dist)
    tokens = stego.encode(codec, _payload_bits(args), args.seed)
    _emit(json.dumps(tokens) + "\n", args.output)
    return EXIT_OK


def cmd_stego_decode(args) -> int:
    dist = _read_dist(args.input)
    codec = stego.build_codec(_load_solution(args, dist), dist)
    tokens = _read_json(args.tokens, "tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, int) for t in tokens):
        raise ConfigError("tokens file must hold a JSON integer array")
    try:
        data = stego.bytes_from_bits(stego.decode(codec, tokens))
    except (stego.DecodeError, ValueError) as exc:
        print(f"decode failed: {exc}", file=sys.stderr)
        return EXIT_FAILED_CHECK
    if args.output:
        Path(args.output).write_bytes(data)
    else:
        sys.stdout.write(data.hex() + "\n")
    return EXIT_OK


def zipf_distribution(n: int, s: float, rng: np.random.Generator, jitter: float = 0.1):
    """Zipf(s) weights over n tokens with multiplicative log-normal jitter."""
    w = np.arange(1, n + 1, dtype=float) ** -s
    w *= np.exp(jitter * rng.standard_normal(n))
    return load_distribution(w.tolist(), normalize=True)


def bench_rows(n: int, s: float, epsilon: float, rate_floor: float, trials: int, seed: int,
               jobs: int = 1) -> list[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(trials):
        dist = zipf_distribution(n, s, rng)
        inst = make_instance(dist, rate_floor, epsilon)
        started = time.perf_counter()
        row = {"n": n, "zipf_s": s, "epsilon": epsilon, "R": rate_floor}
        try:
            sol = solve(inst, strict=False, jobs=jobs)
        except (NoCandidateError, StateCapExceeded) as exc:
            row.update(divergence="", rate="", branch=type(exc).__name__, candidates="",
                       frontier_max="")
        else:
            row.update(divergence=sol.divergence, rate=sol.rate, branch=sol.branch,
                       candidates=sol.candidate_count, frontier_max=sol.frontier_max)
        row["millis"] = round((time.perf_counter() - started) * 1000, 3)
        rows.append(row)
    return rows


def cmd_bench(args) -> int:
    if args.epsilon is None or args.rate is None:
        raise ConfigError("--rate and --epsilon are required")
    if args.n < 1 or args.trials < 0:
        raise ConfigError("--n must be positive and --trials non-negative")
    try:
        rows = bench_rows(args.n, args.zipf_s, args.epsilon, args.rate, args.trials, args.seed,
                          args.jobs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _emit(buf.getvalue(), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, rate=True, eps=True):
        p.add_argument("--input", help="distribution JSON file")
        p.add_argument("--output", help="output file (default: stdout)")
        if rate:
            p.add_argument("--rate", type=float, help="rate floor R in bits per token")
        if eps:
            p.add_argument("--epsilon", type=float, help="approximation parameter in (0, 1)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for candidates")
        return p

    p = common(sub.add_parser("solve", help="run the approximation scheme"))
    p.add_argument("--no-strict", action="store_true",
                   help="warn instead of failing when instance assumptions do not hold")
    p.set_defaults(func=cmd_solve)

    p = common(sub.add_parser("verify", help="check a solution file"))
    p.add_argument("--solution", help="solution JSON from `solve`")
    p.set_defaults(func=cmd_verify)

    p = common(sub.add_parser("oracle", help="exact optimum by exhaustive search"))
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--compare", action="store_true", help="also run solve and report the gap")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("enum-trees", help="list Kraft-tight depth vectors")
    p.add_argument("--max-depth", type=int, required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_enum_trees)

    p = common(sub.add_parser("stego-encode", help="hide a payload in a token sequence"),
               rate=False, eps=False)
    p.add_argument("--solution", help="solution JSON from `solve`")
    p.add_argument("--payload-hex")
    p.add_argument("--payload-file")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stego_encode)

    p = common(sub.add_parser("stego-decode", help="recover a payload from tokens"),
               rate=False, eps=False)
    p.add_argument("--solution", help="solution JSON from `solve`")
    p.add_argument("--tokens", help="JSON integer array of token ids")
    p.set_defaults(func=cmd_stego_decode)

    p = common(sub.add_parser("bench", help="timings on synthetic Zipf instances"))
    p.add_argument("--zipf-s", type=float, default=1.1)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except NoCandidateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CANDIDATE
    except StateCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STATE_CAP
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
