"""Command line entry point.

Exit codes: 0 all checks pass, 1 an acceptance check failed, 2 usage,
configuration or hypothesis error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import EXPERIMENTS, RunConfig, parse_config, serialize_config
from .convolution import convolution_error_experiment
from .errors import ConfigError, HypothesisError

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


@dataclass
class Outcome:
    checks: list = field(default_factory=list)  # (name, passed, detail)
    tables: dict = field(default_factory=dict)  # file name -> (columns, rows)
    notes: list = field(default_factory=list)

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.checks.append((name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)


def _newton_check(out: Outcome, iterations: int, residual: float) -> None:
    ok = iterations <= ex.NEWTON_MAX_ITERATIONS and residual <= ex.NEWTON_MAX_RESIDUAL
    out.check("newton", ok, f"max iterations {iterations} (limit {ex.NEWTON_MAX_ITERATIONS}), "
                            f"max residual {residual:.3e} (limit {ex.NEWTON_MAX_RESIDUAL:g})")


def _run_simulate(cfg: RunConfig) -> Outcome:
    out = Outcome()
    traj = ex.simulate_experiment(cfg)
    rows = []
    for j in range(traj.states.shape[1]):
        path = traj.path(j)
        l2, h1 = path.norms(0.0), path.norms(1.0)
        for i, t in enumerate(path.times):
            rows.append([j, t, *path.states[i, :3], l2[i], h1[i]])
    out.tables["simulate.csv"] = (["path", "t", "u_1", "u_2", "u_3", "norm_l2", "norm_h1"], rows)
    out.notes.append(f"backward Euler trajectories: {traj.states.shape[1]} paths, dt={traj.dt:g}, "
                     f"{traj.step_count} steps")
    _newton_check(out, int(traj.iterations.max()), float(traj.residuals.max()))
    return out


def _run_convolution(cfg: RunConfig) -> Outcome:
    out = Outcome()
    p = int(cfg.p[0]) if cfg.p else None
    rep = convolution_error_experiment(
        cfg.noise, cfg.beta, cfg.epsilon, p, cfg.dt_levels, cfg.path_count, cfg.T, cfg.seed,
        cfg.batches, cfg.chunk, cfg.threads,
    )
    rows = [[r["dt"], r["error"], r["batch_std"]] for r in rep.metadata["rows"]]
    out.tables["convolution.csv"] = (["dt", "error", "batch_std"], rows)
    out.notes.append(f"stochastic convolution error, beta={cfg.beta:g}, p={rep.metadata['p']}: "
                     f"slope {rep.slope:.4f}, flags {list(rep.flags)}")
    if rep.fitted:
        lo, hi = ex.convolution_band(cfg.beta)
        out.check("convolution slope", lo <= rep.slope <= hi, f"slope {rep.slope:.4f} in [{lo:g}, {hi:g}]")
        se = rep.metadata["batch_slope_stderr"]
        out.check("convolution stderr", se < 0.05, f"batch-means slope stderr {se:.4f} < 0.05")
    return out


def _run_pathwise(cfg: RunConfig) -> Outcome:
    out = Outcome()
    s = ex.pathwise_rate_experiment(cfg)
    dts = s.metadata["dt_levels"]
    cols = ["path", "slope", "intercept", "residual", "dt0_proxy"] + [f"error_dt_{d!r}" for d in dts]
    rows = [[j, r.slope, r.intercept, r.residual, s.dt0_proxy[j], *s.errors[:, j]] for j, r in enumerate(s.reports)]
    out.tables["pathwise-rate.csv"] = (cols, rows)
    sanity = ex.deterministic_limit_rate(cfg)
    out.notes.append(f"pathwise rate: median slope {s.median_slope:.4f}, "
                     f"fraction >= {ex.PATHWISE_MIN_SLOPE} is {s.fraction_above:.2f}")
    out.notes.append(f"noise amplitude {ex.TINY_AMPLITUDE:g}: slope {sanity.slope:.4f} (deterministic order one)")
    finite = s.dt0_proxy[np.isfinite(s.dt0_proxy)]
    out.notes.append(f"monotone-threshold proxy: median {np.median(finite) if finite.size else float('nan'):g} "
                     f"over {finite.size} paths (reported only)")
    out.check("pathwise fraction", s.fraction_above >= ex.PATHWISE_MIN_FRACTION,
              f"{s.fraction_above:.2f} of slopes >= {ex.PATHWISE_MIN_SLOPE} (need {ex.PATHWISE_MIN_FRACTION})")
    out.check("pathwise median", s.median_slope >= ex.PATHWISE_MIN_MEDIAN,
              f"median slope {s.median_slope:.4f} >= {ex.PATHWISE_MIN_MEDIAN}")
    _newton_check(out, s.newton_iterations, s.newton_residual)
    return out


def _run_strong(cfg: RunConfig) -> Outcome:
    out = Outcome()
    rep = ex.strong_convergence_experiment(cfg)
    rows = [[p, dt, rep.estimates[i, k], rep.batch_std[i, k]]
            for i, p in enumerate(rep.moments) for k, dt in enumerate(rep.dts)]
    out.tables["strong.csv"] = (["p", "dt", "mean_sup_error_p", "batch_std"], rows)
    out.notes.append("strong convergence: E sup error^p per level, no rate fitted")
    for flag in rep.flags:
        out.notes.append(flag)
    for i, p in enumerate(rep.moments):
        out.check(f"strong p={p:g} decreasing", rep.decreasing(i), "estimates strictly decrease in dt")
        out.check(f"strong p={p:g} ratio", rep.ratio(i) < ex.STRONG_MAX_RATIO,
                  f"last/first {rep.ratio(i):.4f} < {ex.STRONG_MAX_RATIO}")
    _newton_check(out, rep.newton_iterations, rep.newton_residual)
    return out


def _run_moments(cfg: RunConfig) -> Outcome:
    out = Outcome()
    rep = ex.moment_bound_experiment(cfg)
    rows = [[T, rep.p, rep.dt, rep.gate[T], rep.l2[i], rep.l2_std[i], rep.h1[i], rep.h1_std[i]]
            for i, T in enumerate(rep.horizons)]
    out.tables["moments.csv"] = (["T", "p", "dt", "gate_T^(p-1)dt", "sup_l2_p", "sup_l2_p_std",
                                  "sup_h1_p", "sup_h1_p_std"], rows)
    out.notes.append(f"moment bounds, p={rep.p:g}, dt={rep.dt:g}: affine fit {rep.growth_fit}")
    if rep.p == 2 and len(rep.horizons) > 1:
        out.check("moment growth", rep.passed,
                  f"h1 ratio {rep.growth_ratio:.4f} <= {rep.growth_limit:.4f} "
                  f"(T={rep.horizons[-1]:g} vs {rep.horizons[-2]:g})")
    _newton_check(out, rep.newton_iterations, rep.newton_residual)
    return out


def _run_holder(cfg: RunConfig) -> Outcome:
    out = Outcome()
    rep = ex.holder_experiment(cfg)
    rows = [[j, a, b, a / b] for j, (a, b) in enumerate(zip(rep.fine, rep.coarse))]
    out.tables["holder.csv"] = (["path", "quotient_fine", "quotient_coarse", "ratio"], rows)
    out.notes.append(f"Hoelder quotient gamma={rep.gamma:g}: max {rep.fine.max():.4f}")
    out.check("holder stability", rep.passed,
              f"ratios in [{rep.ratios.min():.4f}, {rep.ratios.max():.4f}], limit factor {ex.HOLDER_MAX_FACTOR:g}")
    _newton_check(out, rep.newton_iterations, rep.newton_residual)
    return out


def _run_lipschitz(cfg: RunConfig) -> Outcome:
    out = Outcome()
    rep = ex.lipschitz_experiment(cfg)
    rows = [[t.modes, t.samples, t.skipped, t.constant, t.zero_constant, t.growth_constant]
            for t in (rep.coarse, rep.fine)]
    out.tables["lipschitz.csv"] = (["M", "samples", "skipped", "constant", "zero_constant", "growth_constant"], rows)
    out.notes.append(f"nonlinearity Lipschitz ratio: {rep.coarse.constant:.6f} at M={rep.coarse.modes}, "
                     f"{rep.fine.constant:.6f} at M={rep.fine.modes}")
    out.check("lipschitz stability", rep.passed, f"relative drift {rep.drift:.2e} (Lipschitz), "
                                                 f"{rep.growth_drift:.2e} (growth) <= {ex.LIPSCHITZ_MAX_DRIFT}")
    return out


def _run_smoothing(cfg: RunConfig) -> Outcome:
    out = Outcome()
    rep = ex.smoothing_experiment(cfg)
    out.tables["smoothing.csv"] = (["dt", "error"], [list(l) for l in rep.levels])
    out.notes.append(f"deterministic error operator at t=1: slope {rep.slope:.4f}")
    if rep.fitted:
        out.check("smoothing order", rep.slope >= ex.SMOOTHING_MIN_SLOPE,
                  f"slope {rep.slope:.4f} >= {ex.SMOOTHING_MIN_SLOPE}")
    return out


RUNNERS = {
    "simulate": _run_simulate,
    "convolution": _run_convolution,
    "pathwise-rate": _run_pathwise,
    "strong": _run_strong,
    "moments": _run_moments,
    "holder": _run_holder,
    "lipschitz": _run_lipschitz,
    "smoothing": _run_smoothing,
}

CLAIMS = {
    "simulate": "backward Euler trajectories of the stochastic Allen-Cahn equation",
    "convolution": "time discretisation error of the stochastic convolution, order beta/2",
    "pathwise-rate": "almost sure pathwise convergence with any order below one half",
    "strong": "uniform strong L^p convergence without a rate",
    "moments": "moment bounds of the scheme growing at most linearly in T",
    "holder": "Hoelder continuity in time of the solution for exponents below one half",
    "lipschitz": "local Lipschitz bound of the cubic nonlinearity in the negative norm",
    "smoothing": "first order error of the deterministic backward Euler operator for smooth data",
}


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.17g}"


def write_outputs(cfg: RunConfig, outcome: Outcome) -> list:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = "".join(f"# {line}\n" for line in serialize_config(cfg).splitlines())
    written = []
    for name, (cols, rows) in outcome.tables.items():
        lines = [",".join(cols)] + [",".join(_fmt(v) for v in row) for row in rows]
        path = out_dir / name
        path.write_text(header + "\n".join(lines) + "\n")
        written.append(path)
    summary = [f"experiment: {cfg.experiment}", f"claim: {CLAIMS[cfg.experiment]}", ""]
    summary += outcome.notes + [""]
    summary += [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in outcome.checks]
    summary.append(f"overall: {'PASS' if outcome.passed else 'FAIL'}")
    path = out_dir / "summary.txt"
    path.write_text(header + "\n".join(summary) + "\n")
    written.append(path)
    return written


def run(cfg: RunConfig) -> int:
    """Run one experiment, write its CSV and summary, return the exit code."""
    outcome = RUNNERS[cfg.experiment](cfg)
    write_outputs(cfg, outcome)
    for name, ok, detail in outcome.checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_PASS if outcome.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="allen-cahn-euler", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--paths", type=int)
    parser.add_argument("--threads", type=int, help="worker threads, 0 = one per CPU")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
        cfg = parse_config(
            text, experiment=args.experiment, seed=args.seed, out=args.out, paths=args.paths, threads=args.threads
        )
    except OSError as exc:
        print(f"error: cannot read config {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(cfg)
    except HypothesisError as exc:
        print(f"hypothesis not satisfied: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 3
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
