"""Command-line front end: config parsing, experiments, ingestion, bias probe.

Verbs: run (execute experiments and rate checks), ingest (prepare a dataset),
bias (measure the gradient-estimator bias), validate (config check only).
Exit codes: 0 all checks pass, 1 check failure, 2 config error, 3 divergence.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datasets, engine, metrics, network, problems, zo

OUT_ENV = "SPARSEGOSSIP_OUT"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

DEFAULTS: dict[str, dict[str, str]] = {
    "topology": {"kind": "complete:10", "nodes": "", "edges": ""},
    "protocol": {"rho0": "1.0", "zeta0": "0.3", "tau": "0.5", "epsilon": "0.25"},
    "steps": {"alpha0": "auto", "offset": "0"},
    "smoothing": {"delta": repr(1.0 / 6.0), "c0": "auto", "sampler": "gaussian"},
    "noise": {
        "value_noise_std": "0.5",
        "value_noise_scale": "0.0",
        "grad_noise_std": "0.5",
        "grad_noise_scale": "0.0",
    },
    "problem": {
        "kind": "quadratic",
        "dim": "5",
        "mu": "1.0",
        "lip_grad": "10.0",
        "spread": "1.0",
        "instance_seed": "0",
        "train": "",
        "test": "",
        "reg": "1.0",
    },
    "run": {
        "method": "zeroth",
        "horizon": "100000",
        "seed": "1",
        "ensemble": "1",
        "out": "runs",
        "log_gamma": "1.05",
        "log_every": "",
        "jobs": "auto",
        "fit_lo": "auto",
        "fit_hi": "auto",
        "check_mse_k_slope": "",
        "check_mse_k_tol": "0.15",
        "check_mse_comm_slope": "",
        "check_mse_comm_tol": "0.15",
        "allow_large_sweep": "false",
    },
}

# knobs that only make sense via auto-resolution
_AUTO_ALPHA = {"zeroth": 1.05, "zeroth-baseline": 1.05, "first": 2.1, "first-baseline": 2.1}
MAX_SWEEP = 10_000


class CliConfigError(ValueError):
    """Bad config file or flags."""


@dataclass
class ExperimentSpec:
    """Fully resolved experiment description (strings, as in the config file)."""

    resolved: dict[str, dict[str, str]]
    methods: list[str]
    seeds: list[int]
    out: Path
    jobs: int | None
    _problem_cache: dict = field(default_factory=dict, repr=False)

    def render(self) -> str:
        lines = []
        for section in DEFAULTS:
            lines.append(f"[{section}]")
            for key, value in self.resolved[section].items():
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)

    # -- builders ----------------------------------------------------------
    def topology(self) -> network.Topology:
        sec = self.resolved["topology"]
        kind = sec["kind"]
        if kind == "custom":
            nodes = _int(sec, "nodes", "topology")
            edges = _parse_edges(sec["edges"])
            return network.build_topology(nodes, edges)
        name, _, count = kind.partition(":")
        if not count:
            raise CliConfigError(f"[topology] kind = {kind!r}: expected e.g. complete:10 or custom")
        n = _as_int(count, "[topology] kind")
        builders = {
            "complete": network.complete_graph,
            "ring": network.ring_graph,
            "path": network.path_graph,
            "star": network.star_graph,
        }
        if name not in builders:
            raise CliConfigError(f"[topology] kind = {kind!r}: unknown graph family {name!r}")
        return builders[name](n)

    def problem(self, topology: network.Topology):
        key = "problem"
        if key in self._problem_cache:
            return self._problem_cache[key]
        sec = self.resolved["problem"]
        kind = sec["kind"]
        if kind == "quadratic":
            rng = np.random.default_rng(_int(sec, "instance_seed", "problem"))
            prob = problems.make_quadratic_problem(
                n_nodes=topology.node_count,
                dim=_int(sec, "dim", "problem"),
                mu=_float(sec, "mu", "problem"),
                lip_grad=_float(sec, "lip_grad", "problem"),
                rng=rng,
                spread=_float(sec, "spread", "problem"),
            )
            test = (None, None)
        elif kind == "erm":
            if not sec["train"]:
                raise CliConfigError("[problem] train: path required for erm problems")
            feats, targs = datasets.parse_csv(sec["train"])
            prob = problems.make_erm_problem(
                feats, targs, topology.node_count, _float(sec, "reg", "problem")
            )
            if sec["test"]:
                test = datasets.parse_csv(sec["test"])
            else:
                test = (None, None)
        else:
            raise CliConfigError(f"[problem] kind = {kind!r}: expected quadratic or erm")
        self._problem_cache[key] = (prob, test)
        return self._problem_cache[key]

    def build(self, method: str, seed: int) -> engine.RunConfig:
        topo = self.topology()
        prob, (test_x, test_y) = self.problem(topo)
        psec, ssec, msec, nsec, rsec = (
            self.resolved["protocol"],
            self.resolved["steps"],
            self.resolved["smoothing"],
            self.resolved["noise"],
            self.resolved["run"],
        )
        protocol = network.ProtocolSchedule(
            rho0=_float(psec, "rho0", "protocol"),
            zeta0=_float(psec, "zeta0", "protocol"),
            tau=_float(psec, "tau", "protocol"),
            epsilon=_float(psec, "epsilon", "protocol"),
        )
        if ssec["alpha0"] == "auto":
            alpha0 = _AUTO_ALPHA[method] / prob.mu if method in _AUTO_ALPHA else 1.0
        else:
            alpha0 = _float(ssec, "alpha0", "steps")
        steps = engine.StepSchedule(alpha0=alpha0, offset=_int(ssec, "offset", "steps"))
        sampler = zo.DirectionSampler(kind=msec["sampler"], dim=prob.dim)
        c0 = 1.0 / sampler.fourth_moment if msec["c0"] == "auto" else _float(msec, "c0", "smoothing")
        smoothing = zo.SmoothingSchedule(c0=c0, delta=_float(msec, "delta", "smoothing"))
        noise = problems.NoiseModel.from_std(
            value_std=_float(nsec, "value_noise_std", "noise"),
            grad_std=_float(nsec, "grad_noise_std", "noise"),
            value_scale=_float(nsec, "value_noise_scale", "noise"),
            grad_scale=_float(nsec, "grad_noise_scale", "noise"),
        )
        log_every = _int(rsec, "log_every", "run") if rsec["log_every"] else None
        return engine.RunConfig(
            method=method,
            topology=topo,
            problem=prob,
            protocol=protocol,
            steps=steps,
            noise=noise,
            smoothing=smoothing,
            sampler=sampler,
            horizon=_int(rsec, "horizon", "run"),
            seed=seed,
            log_gamma=_float(rsec, "log_gamma", "run"),
            log_every=log_every,
            test_features=test_x,
            test_targets=test_y,
        )

    def fit_window(self) -> tuple[int, int]:
        rsec = self.resolved["run"]
        horizon = _int(rsec, "horizon", "run")
        lo = horizon // 100 if rsec["fit_lo"] == "auto" else _int(rsec, "fit_lo", "run")
        hi = horizon if rsec["fit_hi"] == "auto" else _int(rsec, "fit_hi", "run")
        return max(1, lo), hi

    def slope_checks(self) -> list[tuple[str, str, float, float]]:
        """(name, abscissa, expected slope, tolerance) for each enabled check."""
        rsec = self.resolved["run"]
        checks = []
        if rsec["check_mse_k_slope"]:
            checks.append(("mse_vs_iterations", "k",
                           _float(rsec, "check_mse_k_slope", "run"),
                           _float(rsec, "check_mse_k_tol", "run")))
        if rsec["check_mse_comm_slope"]:
            checks.append(("mse_vs_comm_expected", "comm_expected",
                           _float(rsec, "check_mse_comm_slope", "run"),
                           _float(rsec, "check_mse_comm_tol", "run")))
        return checks


def _as_int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise CliConfigError(f"{where}: expected an integer, got {text!r}") from None


def _int(sec: dict[str, str], key: str, section: str) -> int:
    return _as_int(sec[key], f"[{section}] {key}")


def _float(sec: dict[str, str], key: str, section: str) -> float:
    try:
        return float(sec[key])
    except ValueError:
        raise CliConfigError(f"[{section}] {key}: expected a number, got {sec[key]!r}") from None


def _parse_edges(text: str) -> list[tuple[int, int]]:
    edges = []
    for token in text.replace(";", ",").split(","):
        token = token.strip()
        if not token:
            continue
        a, _, b = token.partition("-")
        edges.append((_as_int(a, "[topology] edges"), _as_int(b, "[topology] edges")))
    return edges


def parse_config(path, overrides: argparse.Namespace | None = None) -> ExperimentSpec:
    """Read, default-fill and validate a config file; unknown keys are fatal."""
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise CliConfigError(f"cannot read config file {path}")
    resolved = {s: dict(kv) for s, kv in DEFAULTS.items()}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise CliConfigError(f"unknown config section [{section}]")
        for key, value in parser[section].items():
            if key not in DEFAULTS[section]:
                raise CliConfigError(f"unknown key {key!r} in section [{section}]")
            resolved[section][key] = value.strip()

    if overrides is not None:
        if getattr(overrides, "method", None):
            resolved["run"]["method"] = ",".join(overrides.method)
        if getattr(overrides, "seed", None):
            resolved["run"]["seed"] = ",".join(str(s) for s in overrides.seed)
        if getattr(overrides, "ensemble", None):
            resolved["run"]["ensemble"] = str(overrides.ensemble)
        if getattr(overrides, "horizon", None):
            resolved["run"]["horizon"] = str(overrides.horizon)
        if getattr(overrides, "out", None):
            resolved["run"]["out"] = str(overrides.out)

    methods = [m.strip() for m in resolved["run"]["method"].split(",") if m.strip()]
    for m in methods:
        if m not in engine.METHODS:
            raise CliConfigError(f"[run] method = {m!r}: choose from {engine.METHODS}")
    seeds = [_as_int(s.strip(), "[run] seed")
             for s in resolved["run"]["seed"].split(",") if s.strip()]
    if not seeds:
        raise CliConfigError("[run] seed: need at least one seed")
    ensemble = _int(resolved["run"], "ensemble", "run")
    if len(seeds) == 1 and ensemble > 1:
        seeds = [seeds[0] + i for i in range(ensemble)]
    resolved["run"]["seed"] = ",".join(str(s) for s in seeds)
    resolved["run"]["ensemble"] = str(len(seeds))

    sweep = len(methods) * len(seeds)
    if sweep > MAX_SWEEP and resolved["run"]["allow_large_sweep"].lower() != "true":
        raise CliConfigError(
            f"sweep of {sweep} runs exceeds the {MAX_SWEEP} limit; set allow_large_sweep = true"
        )

    out = Path(resolved["run"]["out"])
    if not out.is_absolute():
        out = Path(os.environ.get(OUT_ENV, ".")) / out
    jobs = None if resolved["run"]["jobs"] == "auto" else _int(resolved["run"], "jobs", "run")

    spec = ExperimentSpec(resolved=resolved, methods=methods, seeds=seeds, out=out, jobs=jobs)
    _validate_spec(spec)
    return spec


def _validate_spec(spec: ExperimentSpec) -> None:
    """Fail fast on constraint violations, citing the condition that broke."""
    topo = spec.topology()
    probe = spec.build(spec.methods[0], spec.seeds[0])
    violations = network.validate_protocol(topo, probe.protocol)
    delta = probe.smoothing.delta
    if not (0 < delta < 0.5):
        violations.append(
            f"smoothing decay delta = {delta} outside (0, 1/2); noise amplification not summable"
        )
    if violations:
        raise CliConfigError("; ".join(violations))


PLOT_TEMPLATE = """\
# gnuplot script: log-log error curves
set datafile separator ","
set key autotitle columnhead
set logscale xy
set terminal pngcairo size 900,600
set output "mse_vs_iterations.png"
set xlabel "iterations"
set ylabel "MSE"
plot {iter_plots}
set output "mse_vs_comm.png"
set xlabel "expected transmissions per node"
plot {comm_plots}
"""


def _write_plot_script(path: Path, methods: list[str]) -> None:
    iter_plots = ", ".join(
        f'"ensemble_{m}.csv" using "k":"mse" with lines title "{m}"' for m in methods
    )
    comm_plots = ", ".join(
        f'"ensemble_{m}.csv" using "comm_expected":"mse" with lines title "{m}"' for m in methods
    )
    path.write_text(PLOT_TEMPLATE.format(iter_plots=iter_plots, comm_plots=comm_plots))


def cmd_run(args: argparse.Namespace) -> int:
    spec = parse_config(args.config, overrides=args)
    spec.out.mkdir(parents=True, exist_ok=True)
    (spec.out / "resolved.cfg").write_text(spec.render())

    failures: list[dict] = []
    fit_lines: list[str] = []
    window = spec.fit_window()
    for method in spec.methods:
        config = spec.build(method, spec.seeds[0])
        traces = engine.run_ensemble(config, spec.seeds, jobs=spec.jobs)
        for seed, trace in zip(spec.seeds, traces):
            metrics.save_trace(trace, spec.out / f"trace_{method}_seed{seed}.csv")
        summary = metrics.summarize_ensemble(traces)
        (spec.out / f"ensemble_{method}.csv").write_text(summary.to_csv())
        mean_trace = summary.as_trace()
        for name, abscissa, expected, tol in spec.slope_checks():
            try:
                fit = metrics.fit_rate(mean_trace, "mse", abscissa, window)
            except metrics.FitError as exc:
                failures.append({"check": f"{method}:{name}", "expected": expected,
                                 "got": None, "tolerance": tol, "error": str(exc)})
                continue
            fit_lines.append(
                f"{method} {name}: slope {fit.slope:+.4f} over k in [{fit.k_lo}, {fit.k_hi}] "
                f"({fit.n_rows} rows, residual rms {fit.residual_rms:.3f})"
            )
            if abs(fit.slope - expected) > tol:
                failures.append({"check": f"{method}:{name}", "expected": expected,
                                 "got": round(fit.slope, 4), "tolerance": tol})
        if not spec.slope_checks():
            for abscissa, label in (("k", "mse_vs_iterations"),
                                    ("comm_expected", "mse_vs_comm_expected")):
                try:
                    fit = metrics.fit_rate(mean_trace, "mse", abscissa, window)
                    fit_lines.append(
                        f"{method} {label}: slope {fit.slope:+.4f} over k in "
                        f"[{fit.k_lo}, {fit.k_hi}] ({fit.n_rows} rows, residual rms "
                        f"{fit.residual_rms:.3f})"
                    )
                except metrics.FitError as exc:
                    fit_lines.append(f"{method} {label}: no fit ({exc})")

    (spec.out / "ratefit.txt").write_text("\n".join(fit_lines) + "\n")
    _write_plot_script(spec.out / "plot.gp", spec.methods)
    if failures:
        with open(spec.out / "failures.jsonl", "w") as fh:
            for item in failures:
                fh.write(json.dumps(item) + "\n")
        for item in failures:
            print(f"CHECK FAILED: {json.dumps(item)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"wrote {spec.out}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    spec = parse_config(args.config, overrides=args)
    config = spec.build(spec.methods[0], spec.seeds[0])
    engine.check_config(config)  # emits advisory warnings
    print(spec.render())
    print("config ok")
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if not out.is_absolute():
        out = Path(os.environ.get(OUT_ENV, ".")) / out
    out.mkdir(parents=True, exist_ok=True)
    parse = datasets.parse_libsvm if args.format == "libsvm" else datasets.parse_csv
    features, targets = parse(args.data)
    features, targets, _stats = datasets.standardize(features, targets)
    test = float(args.test) if "." in str(args.test) else int(args.test)
    (train_x, train_y), (test_x, test_y) = datasets.split_tail(features, targets, test)
    datasets.write_csv(out / "train.csv", train_x, train_y)
    if len(test_x):
        datasets.write_csv(out / "test.csv", test_x, test_y)
    sizes = problems.partition_sizes(len(train_x), args.nodes)
    gram_max = 0.0
    start = 0
    for size in sizes:
        block = train_x[start:start + size]
        start += size
        gram_max = max(gram_max, float(np.linalg.eigvalsh(block.T @ block / size)[-1]))
    summary = {
        "rows": int(len(features)),
        "train_rows": int(len(train_x)),
        "test_rows": int(len(test_x)),
        "dim": int(features.shape[1]),
        "per_node": sizes,
        "reg": args.reg,
        "lip_grad_estimate": args.reg + gram_max,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_bias(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if not out.is_absolute():
        out = Path(os.environ.get(OUT_ENV, ".")) / out
    out.mkdir(parents=True, exist_ok=True)
    sampler = zo.DirectionSampler(kind="gaussian", dim=args.dim)
    base = 1.0 / sampler.fourth_moment
    radii = [base * 2.0**-j for j in range(7)]
    rng = np.random.default_rng(args.seed)

    control = problems.make_quadratic_problem(1, args.dim, 1.0, 4.0, np.random.default_rng(0))
    probe = problems.make_cubic_probe(args.dim, mu=1.0, lip_hess=args.hess_lip)
    point = np.zeros(args.dim)
    control_pts = zo.measure_bias(control, rng.standard_normal(args.dim), radii, sampler,
                                  args.samples, rng)
    probe_pts = zo.measure_bias(probe, point, radii, sampler, args.samples, rng)

    lines = ["problem,radius,bias_norm,std_error"]
    for p in control_pts:
        lines.append(f"quadratic,{p.radius!r},{p.bias_norm!r},{p.std_error!r}")
    for p in probe_pts:
        lines.append(f"cubic,{p.radius!r},{p.bias_norm!r},{p.std_error!r}")
    (out / "bias.csv").write_text("\n".join(lines) + "\n")

    failures = []
    for p in control_pts:
        if p.bias_norm > 3.0 * p.std_error:
            failures.append({"check": "quadratic_bias_zero", "expected": 0.0,
                             "got": p.bias_norm, "tolerance": 3.0 * p.std_error})
    slope = zo.bias_slope(probe_pts)
    (out / "biasfit.txt").write_text(f"cubic bias slope: {slope:.4f}\n")
    if not 1.8 <= slope <= 2.2:
        failures.append({"check": "cubic_bias_slope", "expected": 2.0,
                         "got": round(slope, 4), "tolerance": 0.2})
    for p in probe_pts:
        cap = 1.1 * zo.bias_envelope(p.radius, args.hess_lip, sampler)
        if p.bias_norm > cap:
            failures.append({"check": "bias_envelope", "expected": cap,
                             "got": p.bias_norm, "tolerance": 0.0})
    if failures:
        with open(out / "failures.jsonl", "w") as fh:
            for item in failures:
                fh.write(json.dumps(item) + "\n")
        for item in failures:
            print(f"CHECK FAILED: {json.dumps(item)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"bias slope {slope:.3f}; wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsegossip", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute configured experiments")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, action="append")
    p_run.add_argument("--method", action="append")
    p_run.add_argument("--out")
    p_run.add_argument("--ensemble", type=int)
    p_run.add_argument("--horizon", type=int)
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=cmd_validate, seed=None, method=None, out=None,
                       ensemble=None, horizon=None)

    p_ing = sub.add_parser("ingest", help="standardize, split and summarize a dataset")
    p_ing.add_argument("--data", required=True)
    p_ing.add_argument("--format", choices=("libsvm", "csv"), default="csv")
    p_ing.add_argument("--test", default="0", help="held-out rows (count or fraction)")
    p_ing.add_argument("--nodes", type=int, default=10)
    p_ing.add_argument("--reg", type=float, default=1.0)
    p_ing.add_argument("--out", default="ingested")
    p_ing.set_defaults(func=cmd_ingest)

    p_bias = sub.add_parser("bias", help="measure gradient-estimator bias vs radius")
    p_bias.add_argument("--dim", type=int, default=3)
    p_bias.add_argument("--hess-lip", type=float, default=1.0)
    p_bias.add_argument("--samples", type=int, default=1_000_000)
    p_bias.add_argument("--seed", type=int, default=7)
    p_bias.add_argument("--out", default="bias")
    p_bias.set_defaults(func=cmd_bias)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliConfigError, engine.ConfigError, datasets.DatasetError,
            problems.ProblemError, network.TopologyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except engine.DivergenceError as exc:
        print(f"runtime divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
