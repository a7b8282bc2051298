"""Command-line front end: ``siht gen | bound | solve | verify | bench``.

Settings come from an optional flat ``key = value`` file (``--config``),
then ``--set key=value`` overrides, then the dedicated flags (``--out``,
``--seed``). Lines starting with ``#`` are comments; unknown keys are a
usage error. See :data:`CONFIG_KEYS` for the recognised keys.

Exit codes: 0 success, 1 failed checks or solver errors, 2 usage or input
errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import csvio, objectives, synthetic
from .core import InvalidArgumentError, LossKind, ProblemInstance, SihtError, SolverConfig, TieRule, seeded_rng
from .sampling import BatchBound, batch_size_lower_bound, batch_size_condition, zeta
from .solver import SolveResult, siht_run
from .suite import GROUPS, run_suite
from .verify import tail_oscillation, write_reports_csv

logger = logging.getLogger("siht")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

TAIL_TOL = 1e-6


class UsageError(Exception):
    """Bad configuration or missing input; maps to exit code 2."""


def _auto_or(conv):
    def parse(text: str):
        return "auto" if text == "auto" else conv(text)

    return parse


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_seed_list(text: str) -> tuple[int, ...]:
    """``"0-19"`` -> 0..19 inclusive; ``"1,4,7"`` -> (1, 4, 7); ranges may be mixed in."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            a, b = int(lo), int(hi)
            if b < a:
                raise ValueError(f"empty seed range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("seed list is empty")
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    """Every setting the subcommands understand.

    ``auto`` values are resolved against the instance: the step size is
    ``gamma_factor / L_s``, ``c_constant`` comes from :func:`empirical_c`,
    ``batch_size`` from the lower bound, ``s`` is ``s_true`` and
    ``smoothness_method`` picks the exact restricted modulus for small
    least-squares problems.
    """

    source: str = "synthetic"
    N: int = 50
    n: int = 100
    s_true: int = 5
    noise_sigma: float = 0.0
    gen_seed: int = 0
    data_dir: str = "."
    loss: str = "least_squares"
    s: object = "auto"
    gamma: object = "auto"
    gamma_factor: float = 0.9
    smoothness_method: str = "auto"
    batch_size: object = "auto"
    c_constant: object = "auto"
    c_trials: int = 2000
    c_safety: float = 1.5
    max_iters: int = 20000
    window: int = 200
    early_stop: bool = True
    seeds: tuple = tuple(range(20))
    seed: int = 0
    tie_rule: str = "lowest_index"
    out: str = "out"
    workers: int = 1
    bench_batch_sizes: str = "auto"

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise UsageError(f"source must be synthetic or csv, got {self.source!r}")
        if self.smoothness_method not in ("auto", "spectral_upper_bound", "exact_restricted"):
            raise UsageError(f"unknown smoothness_method {self.smoothness_method!r}")
        try:
            LossKind(self.loss)
            TieRule(self.tie_rule)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if self.workers < 1:
            raise UsageError("workers must be >= 1")
        if not 0 < self.gamma_factor < 1:
            raise UsageError("gamma_factor must lie in (0, 1)")


CONFIG_KEYS = {
    "source": str,
    "N": int,
    "n": int,
    "s_true": int,
    "noise_sigma": float,
    "gen_seed": int,
    "data_dir": str,
    "loss": str,
    "s": _auto_or(int),
    "gamma": _auto_or(float),
    "gamma_factor": float,
    "smoothness_method": str,
    "batch_size": _auto_or(int),
    "c_constant": _auto_or(float),
    "c_trials": int,
    "c_safety": float,
    "max_iters": int,
    "window": int,
    "early_stop": _bool,
    "seeds": parse_seed_list,
    "seed": int,
    "tie_rule": str,
    "out": str,
    "workers": int,
    "bench_batch_sizes": str,
}
assert set(CONFIG_KEYS) == {f.name for f in fields(ExperimentConfig)}


def parse_assignment(line: str, where: str) -> tuple[str, object]:
    if "=" not in line:
        raise UsageError(f"{where}: expected key=value, got {line!r}")
    key, text = (t.strip() for t in line.split("=", 1))
    if key not in CONFIG_KEYS:
        raise UsageError(f"{where}: unknown key {key!r}; known keys: {', '.join(sorted(CONFIG_KEYS))}")
    try:
        return key, CONFIG_KEYS[key](text)
    except ValueError as exc:
        raise UsageError(f"{where}: bad value for {key}: {exc}") from None


def read_config_file(path: Path) -> dict:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            key, val = parse_assignment(line, f"{path}:{lineno}")
            values[key] = val
    return values


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for item in args.set or ():
        key, val = parse_assignment(item, "--set")
        values[key] = val
    if args.out is not None:
        values["out"] = args.out
    if args.seed is not None:
        values["seed"] = args.seed
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# Instances and resolved parameters
# ---------------------------------------------------------------------------


def generate_instance(cfg: ExperimentConfig) -> tuple[ProblemInstance, np.ndarray]:
    rng = seeded_rng(cfg.gen_seed, "instance")
    try:
        return synthetic.planted_instance(cfg.N, cfg.n, cfg.s_true, cfg.noise_sigma, rng, LossKind(cfg.loss))
    except SihtError as exc:
        raise UsageError(str(exc)) from None


def load_instance(cfg: ExperimentConfig) -> ProblemInstance:
    if cfg.source == "synthetic":
        return generate_instance(cfg)[0]
    data = Path(cfg.data_dir)
    paths = data / "V.csv", data / "y.csv"
    for p in paths:
        if not p.is_file():
            raise UsageError(f"input file not found: {p}")
    try:
        V = csvio.read_matrix(paths[0])
        y = csvio.read_vector(paths[1])
        return ProblemInstance(V, y, LossKind(cfg.loss))
    except (ValueError, SihtError) as exc:
        raise UsageError(f"cannot load instance from {data}: {exc}") from None


@dataclass(frozen=True)
class Resolved:
    """Step size, constants and batch size after resolving ``auto`` values."""

    s: int
    L_s: float
    smoothness_method: str
    gamma: float
    c: float
    c_method: str
    bound: Optional[BatchBound]
    batch_size: int

    def solver_config(self, cfg: ExperimentConfig, seed: int) -> SolverConfig:
        return SolverConfig(
            s=self.s,
            gamma=self.gamma,
            batch_size=self.batch_size,
            max_iters=cfg.max_iters,
            seed=seed,
            c_constant=self.c,
            tie_rule=TieRule(cfg.tie_rule),
            smoothness=self.L_s,
            window=cfg.window,
            early_stop=cfg.early_stop,
        )


def smoothness_method_for(cfg: ExperimentConfig, inst: ProblemInstance) -> str:
    if cfg.smoothness_method != "auto":
        return cfg.smoothness_method
    if inst.loss is LossKind.LEAST_SQUARES and inst.n <= objectives.EXACT_SMOOTHNESS_MAX_N:
        return "exact_restricted"
    return "spectral_upper_bound"


def resolve(cfg: ExperimentConfig, inst: ProblemInstance) -> Resolved:
    s = cfg.s_true if cfg.s == "auto" else cfg.s
    method = smoothness_method_for(cfg, inst)
    L = objectives.smoothness_modulus(inst, s, method).L_s
    gamma = cfg.gamma_factor / L if cfg.gamma == "auto" else cfg.gamma
    if cfg.c_constant == "auto":
        est = objectives.empirical_c(inst, s, cfg.c_trials, seeded_rng(cfg.seed, "c_constant"), cfg.c_safety)
        c, c_method = est.value, est.method
    else:
        c, c_method = cfg.c_constant, "configured"
    bound = batch_size_lower_bound(inst.N, L, gamma, c) if inst.N >= 2 else None
    if cfg.batch_size == "auto":
        batch_size = bound.s_b_min if bound is not None else inst.N
    else:
        batch_size = cfg.batch_size
    return Resolved(s, L, method, gamma, c, c_method, bound, batch_size)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def cmd_gen(cfg: ExperimentConfig, args) -> int:
    if cfg.source != "synthetic":
        raise UsageError("gen needs source = synthetic")
    inst, x_star = generate_instance(cfg)
    out = _out_dir(cfg)
    try:
        csvio.write_matrix(out / "V.csv", inst.V)
        csvio.write_vector(out / "y.csv", inst.targets)
        csvio.write_vector(out / "ground_truth.csv", x_star)
    except OSError as exc:
        raise UsageError(f"cannot write to {out}: {exc.strerror}") from None
    print(f"wrote {out / 'V.csv'} ({inst.N} x {inst.n}), {out / 'y.csv'}, {out / 'ground_truth.csv'}")
    print(f"planted support: {csvio.join_indices(np.flatnonzero(x_star))}")
    return EXIT_OK


def cmd_bound(cfg: ExperimentConfig, args) -> int:
    inst = load_instance(cfg)
    res = resolve(cfg, inst)
    print(f"instance: N={inst.N} n={inst.n} loss={inst.loss.value} s={res.s}")
    print(f"L_s spectral_upper_bound = {objectives.smoothness_modulus(inst, res.s).L_s!r}")
    if inst.loss is LossKind.LEAST_SQUARES and inst.n <= objectives.EXACT_SMOOTHNESS_MAX_N:
        print(f"L_s exact_restricted = {objectives.smoothness_modulus(inst, res.s, 'exact_restricted').L_s!r}")
    else:
        print("L_s exact_restricted = n/a (too many columns or not least squares)")
    print(f"L_s used ({res.smoothness_method}) = {res.L_s!r}")
    print(f"gamma = {res.gamma!r} (gamma * L_s = {res.gamma * res.L_s!r})")
    print(f"c ({res.c_method}) = {res.c!r}")
    claim = objectives.claim_c_constant(inst, res.s, cfg.c_trials, seeded_rng(cfg.seed, "claim_c"))
    print(f"c (claim_bound, nonzero singular values) = {claim.value!r}")
    if res.bound is None:
        print("bound: n/a (needs N >= 2)")
        return EXIT_FAIL
    b = res.bound
    if b.degenerate:
        print("bound: degenerate (c <= N), any batch size works")
    print(f"S_B formula = {b.formula!r}")
    print(f"S_B_min = {b.s_b_min}")
    print(f"zeta(S_B_min) = {zeta(inst.N, b.s_b_min)!r}")
    print(f"margin 1 - c/N + a/zeta = {b.condition!r}")
    if res.batch_size != b.s_b_min:
        margin = batch_size_condition(inst.N, res.batch_size, res.L_s, res.gamma, res.c)
        print(f"configured batch_size = {res.batch_size} (margin {margin!r})")
    feasible = b.s_b_min <= inst.N and b.condition_holds
    print("feasible" if feasible else "infeasible: no batch size up to N satisfies the bound")
    return EXIT_OK if feasible else EXIT_FAIL


def run_seeds(cfg: ExperimentConfig, inst: ProblemInstance, res: Resolved, batch_size: Optional[int] = None):
    res = res if batch_size is None else replace(res, batch_size=batch_size)
    configs = [res.solver_config(cfg, seed) for seed in cfg.seeds]

    def one(sc: SolverConfig) -> tuple[SolveResult, float]:
        t0 = time.perf_counter()
        r = siht_run(inst, sc)
        return r, time.perf_counter() - t0

    if cfg.workers == 1:
        return [one(sc) for sc in configs]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(one, configs))


def cmd_solve(cfg: ExperimentConfig, args) -> int:
    inst = load_instance(cfg)
    res = resolve(cfg, inst)
    out = _out_dir(cfg)
    print(
        f"solving N={inst.N} n={inst.n} s={res.s} gamma={res.gamma:.6g} L_s={res.L_s:.6g} "
        f"c={res.c:.6g} batch_size={res.batch_size} seeds={len(cfg.seeds)}"
    )
    results = run_seeds(cfg, inst, res)
    rows = []
    converged = 0
    for seed, (r, _) in zip(cfg.seeds, results):
        csvio.write_trajectory(out / f"trajectory_seed{seed}.csv", r.trajectory)
        rows.append([seed, csvio.fmt(r.final_value), r.iterations, r.stop_reason, csvio.join_indices(r.x.support.indices)])
        osc = tail_oscillation(r.trajectory.f, cfg.window)
        converged += osc <= TAIL_TOL
        print(f"seed {seed}: f={r.final_value:.6g} iterations={r.iterations} {r.stop_reason} tail={osc:.3g}")
    csvio.write_rows(out / "summary.csv", csvio.SUMMARY_COLUMNS, rows)
    print(f"tail oscillation <= {TAIL_TOL:g} over the last {cfg.window} iterations: {converged}/{len(rows)} seeds")
    print(f"wrote {out / 'summary.csv'}")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    reports = run_suite(cfg.seed, args.only)
    path = out / "verify_report.csv"
    with open(path, "w", newline="") as fh:
        write_reports_csv(reports, fh)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.status} gap={r.gap:.3g} tol={r.tol:.3g} trials={r.trials}")
        for note in r.notes:
            print(f"    {note}")
    print(f"wrote {path}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def bench_batch_sizes(cfg: ExperimentConfig, N: int, res: Resolved) -> list[int]:
    if cfg.bench_batch_sizes == "auto":
        sizes = {1, max(1, N // 4), max(1, N // 2), res.batch_size, N}
    else:
        try:
            sizes = {N if t.strip() == "N" else int(t) for t in cfg.bench_batch_sizes.split(",") if t.strip()}
        except ValueError:
            raise UsageError(f"bad bench_batch_sizes {cfg.bench_batch_sizes!r}") from None
    bad = [b for b in sizes if not 1 <= b <= N]
    if bad:
        raise UsageError(f"bench batch sizes must lie in [1, {N}], got {sorted(bad)}")
    return sorted(sizes)


BENCH_COLUMNS = ("batch_size", "seed", "iterations", "final_f", "stop_reason", "seconds", "meets_bound")


def cmd_bench(cfg: ExperimentConfig, args) -> int:
    """Sweep batch sizes; below-bound sizes run with the bound check disabled."""
    inst = load_instance(cfg)
    res = resolve(cfg, inst)
    out = _out_dir(cfg)
    rows = []
    for b in bench_batch_sizes(cfg, inst.N, res):
        meets = res.bound is None or res.bound.degenerate or b >= res.bound.s_b_min
        sub = replace(res, batch_size=b)
        configs = [replace(sub.solver_config(cfg, seed), enforce_bound=False) for seed in cfg.seeds]
        times, finals = [], []
        for sc in configs:
            t0 = time.perf_counter()
            r = siht_run(inst, sc)
            dt = time.perf_counter() - t0
            times.append(dt)
            finals.append(r.final_value)
            rows.append([b, sc.seed, r.iterations, csvio.fmt(r.final_value), r.stop_reason, f"{dt:.6f}", int(meets)])
        print(
            f"batch_size={b:>4} meets_bound={int(meets)} median f={np.median(finals):.3g} "
            f"mean time={np.mean(times):.4f}s"
        )
    csvio.write_rows(out / "bench.csv", BENCH_COLUMNS, rows)
    print(f"wrote {out / 'bench.csv'}")
    return EXIT_OK


COMMANDS = {
    "gen": (cmd_gen, "write a synthetic planted-sparse instance (V.csv, y.csv, ground_truth.csv)"),
    "bound": (cmd_bound, "estimate L_s and c and print the minimum batch size"),
    "solve": (cmd_solve, "run mini-batch stochastic IHT for every configured seed"),
    "verify": (cmd_verify, "run the numerical verification suite"),
    "bench": (cmd_bench, "time solves across a sweep of batch sizes"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siht", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="flat key=value settings file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed for estimation and verification streams")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting (repeatable)")
        if name == "verify":
            p.add_argument(
                "--only", action="append", choices=sorted(GROUPS), metavar="NAME",
                help=f"run only this check group (repeatable): {', '.join(GROUPS)}",
            )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        cfg = build_config(args)
        return func(cfg, args)
    except (UsageError, InvalidArgumentError) as exc:
        print(f"siht {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SihtError as exc:
        print(f"siht {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
