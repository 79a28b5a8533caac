"""Command line entry point.

    stochgalerkin SUBCOMMAND --config PATH [--seed U64] [--jobs N] [--out DIR]

Subcommands: check-model, simulate, ensemble, convergence, uniqueness,
integral. ``--config`` accepts a RunConfig or a manifest written by an
earlier run (which replays it). Exit codes: 0 pass, 1 verdict failed,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .diagnostics import (ChainTooShortError, IntegrandFixture, gk_cauchy,
                          integral_convergence_check, moment_harness, uniqueness_check)
from .io import dumps, fmt, git_blob_hash, tree_hash, write_array, write_csv
from .model_api import CutoffSpec, check_model, estimate_c0, verify_lipschitz
from .models import build_model
from .noise import sample_path
from .solver import InadmissibleCutoff, NumericalBlowupError, SolverConfig, TrajectoryRecord, run_truncated
from .spectral import SpectralDomainError

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
COMMANDS = ("check-model", "simulate", "ensemble", "convergence", "uniqueness", "integral")


class ConfigError(Exception):
    """Invalid configuration; mapped to exit code 2."""


def load_schema() -> dict:
    return json.loads(resources.files("stochgalerkin").joinpath("schema.json").read_text())


def demo_configs() -> dict:
    """{name: path} of the configs shipped with the package."""
    root = resources.files("stochgalerkin").joinpath("configs")
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def demo_command(name: str) -> str:
    """Subcommand a shipped config is meant for, taken from its file name prefix."""
    for command in COMMANDS:
        if name.startswith(command.replace("-", "_") + "_"):
            return command
    raise ConfigError(f"no subcommand matches demo config {name!r}")


def read_config(path) -> tuple[dict, dict | None]:
    """Parse and validate; returns (config, manifest or None)."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None
    manifest = None
    if isinstance(doc, dict) and "manifest_version" in doc:
        manifest, doc = doc, doc["config"]
    errors = sorted(jsonschema.Draft202012Validator(load_schema()).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError(f"{path}: schema violation\n  " + "\n  ".join(lines))
    return doc, manifest


def initial_state(block: dict | None, dim: int) -> np.ndarray:
    u = np.zeros(dim)
    block = block or {"kind": "zero"}
    kind = block["kind"]
    if kind == "power":
        m = min(dim, block.get("modes", dim))
        k = np.arange(1, m + 1, dtype=float)
        u[:m] = block.get("amplitude", 1.0) * k ** (-block.get("decay", 2.0))
    elif kind == "coeffs":
        c = np.asarray(block.get("coeffs", []), float)
        if len(c) > dim:
            raise ConfigError(f"initial coeffs longer than model dimension {dim}")
        u[: len(c)] = c
    elif kind == "unit":
        k = block.get("k", 1)
        if k > dim:
            raise ConfigError(f"unit mode {k} beyond model dimension {dim}")
        u[k - 1] = block.get("amplitude", 1.0)
    return u


def solver_config(cfg: dict, model, check_kappa: bool = True) -> SolverConfig:
    s = cfg["solver"]
    if s["n"] > model.declared_dim:
        raise ConfigError(f"solver.n={s['n']} exceeds model dimension {model.declared_dim}")
    c0 = None
    if check_kappa:
        c0 = (cfg.get("assumptions") or {}).get("c0_est")
        if c0 is None:
            samples = (cfg.get("diagnostics") or {}).get("check_model", {}).get("samples", 1000)
            c0 = estimate_c0(model, s["n"], samples, int(cfg.get("seed", 0))).c0_est
    cut = s["cutoff"]
    try:
        return SolverConfig(
            n=s["n"], dt=s["dt"], T=s["T"], K=s["K"],
            cutoff=CutoffSpec(cut["kappa"], cut.get("transition", "smooth_exp")),
            scheme=s.get("scheme", "exp_euler"), record_stride=s.get("record_stride", 1),
            p_list=tuple(s.get("p_list", (2, 4, 8))),
            announce_levels=tuple(s.get("announce_levels", (1.0, 2.0, 4.0, 8.0, 16.0))),
            c0=c0)
    except (InadmissibleCutoff, SpectralDomainError) as err:
        raise ConfigError(str(err)) from None


class Artifacts:
    """Single writer for one run directory; hashes every file it writes."""

    def __init__(self, out: Path):
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self.files = {}

    def _hash(self, name):
        self.files[name] = git_blob_hash((self.out / name).read_bytes())

    def json(self, name, obj):
        (self.out / name).write_text(dumps(obj) + "\n")
        self._hash(name)

    def csv(self, name, header, rows):
        write_csv(self.out / name, header, rows)
        self._hash(name)

    def array(self, name, arr):
        write_array(self.out / name, arr)
        self._hash(name)

    def manifest(self, command, cfg, seed, model, verdict):
        config = {k: v for k, v in cfg.items() if k != "output"}
        config["seed"] = int(seed)
        doc = {"manifest_version": 1, "command": command, "package_version": __version__,
               "seed": int(seed), "model": model.describe() if model is not None else None,
               "config": config, "files": dict(sorted(self.files.items())),
               "content_hash": tree_hash(self.files), "verdict": verdict}
        (self.out / "manifest.json").write_text(dumps(doc) + "\n")
        return doc


def _diag(cfg, name):
    return (cfg.get("diagnostics") or {}).get(name, {})


def cmd_check_model(cfg, seed, jobs, art):
    model = build_model(cfg["model"]["label"], cfg["model"].get("spec"))
    opts = _diag(cfg, "check_model")
    classes = tuple(opts.get("classes", ("F_in_Bnd", "sigma_in_Bnd", "F_in_Lip", "sigma_in_Lip")))
    n = opts.get("n", cfg["solver"]["n"])
    report = check_model(model, n, opts.get("samples", 1000), seed, classes, opts.get("beta", 1.0))
    d = report.to_dict()
    wanted = {"F_in_Bnd": ["growth_F"], "sigma_in_Bnd": ["growth_sigma_H", "growth_sigma_V", "growth_sigma_DA"],
              "F_in_Lip": ["lip_F"], "sigma_in_Lip": ["lip_sigma_H", "lip_sigma_V", "lip_sigma_DA"]}
    certified = {c: all(d[f] is not None and np.isfinite(d[f]) for f in wanted[c]) for c in classes}
    ok = d["cancellation_residual"] <= 1e-8 and all(certified.values())
    d["certified"] = certified
    d["kappa_admissible_max"] = 1.0 / (64 * d["c0_est"]) if d["c0_est"] > 0 else None
    art.json("report.json", d)
    print(f"cancellation residual {fmt(d['cancellation_residual'])}; c0 estimate {fmt(d['c0_est'])}")
    return ok, model


def cmd_simulate(cfg, seed, jobs, art):
    model = build_model(cfg["model"]["label"], cfg["model"].get("spec"))
    config = solver_config(cfg, model)
    opts = _diag(cfg, "simulate")
    u0 = initial_state(cfg.get("initial"), model.declared_dim)
    noise = sample_path(seed, config.K, config.M, config.dt, opts.get("trajectory", 0))
    ok = True
    try:
        rec = run_truncated(model, u0, noise, config)
    except NumericalBlowupError as err:
        rec, ok = err.partial, False
        print(f"numerical blow-up after step {err.last_valid}", file=sys.stderr)
    art.csv("trajectory.csv", TrajectoryRecord.CSV_HEADER, rec.csv_rows())
    art.array("states.bin", rec.states)
    art.array("noise_integral.bin", rec.noise_integral)
    events = {"tau_index": rec.tau_index,
              "tau_time": None if rec.tau_index is None else float(rec.times[rec.tau_index]),
              "announce_indices": {fmt(k): v for k, v in rec.announce_indices.items()},
              "noise": noise.sidecar(), "state_index": rec.state_index.tolist()}
    if opts.get("self_test"):
        lam = model.basis.eigenvalues[: config.n]
        exact = np.exp(-np.outer(rec.times[rec.state_index], lam)) * u0[: config.n]
        err = float(np.max(np.abs(rec.states - exact)))
        events["self_test_max_error"] = err
        ok &= err <= 1e-12
    art.json("events.json", events)
    tau = "none" if rec.tau_index is None else f"{rec.tau_index} (t = {fmt(rec.times[rec.tau_index])})"
    print(f"tau index: {tau}")
    for level, idx in rec.announce_indices.items():
        print(f"announce level {fmt(level)}: {'none' if idx is None else idx}")
    return ok, model


def cmd_ensemble(cfg, seed, jobs, art):
    model = build_model(cfg["model"]["label"], cfg["model"].get("spec"))
    config = solver_config(cfg, model)
    opts = _diag(cfg, "ensemble")
    if not opts:
        raise ConfigError("diagnostics.ensemble block is required")
    p_list = tuple(opts.get("p_list", (2, 4)))
    u0 = initial_state(cfg.get("initial"), model.declared_dim)
    summ = moment_harness(model, opts["dims"], opts["trials"], p_list, config, seed, u0,
                          alpha=opts.get("alpha", 0.25), jobs=jobs)
    report = summ.to_dict()
    report["standard_errors"] = "undefined" if opts["trials"] < 2 else "defined"
    art.json("report.json", report)
    for stat in ("sup_moment", "energy_moment", "noise_frac_norm", "drift_w12"):
        art.csv(f"moments_{stat}.csv", ("p", "n", "mean", "se"), summ.moment_rows(stat))
    print(f"uniformity verdict: {summ.verdict}")
    return summ.verdict is not False and summ.theta_violations == 0, model


def cmd_convergence(cfg, seed, jobs, art):
    model = build_model(cfg["model"]["label"], cfg["model"].get("spec"))
    config = solver_config(cfg, model)
    opts = _diag(cfg, "convergence")
    if not opts:
        raise ConfigError("diagnostics.convergence block is required")
    pairs = [tuple(p) for p in opts["pairs"]]
    if len(pairs) < 2:
        raise ConfigError("convergence needs a chain of at least two pairs")
    u0 = initial_state(cfg.get("initial"), model.declared_dim)
    summ = gk_cauchy(model, pairs, opts["trials"], config, seed, u0, jobs=jobs)
    art.json("report.json", summ.to_dict())
    rows = [(a, b) + tuple(q.values()) for (a, b), q in summ.distance_table.items()]
    art.csv("distances.csv", ("n", "m", "q25", "q50", "q75", "q95"), rows)
    print(f"medians: {' > '.join(fmt(m) for m in summ.verdict_detail['medians'])}; verdict {summ.verdict}")
    return summ.verdict and summ.theta_violations == 0, model


def cmd_uniqueness(cfg, seed, jobs, art):
    model = build_model(cfg["model"]["label"], cfg["model"].get("spec"))
    config = solver_config(cfg, model)
    opts = _diag(cfg, "uniqueness")
    if not opts:
        raise ConfigError("diagnostics.uniqueness block is required")
    samples = opts.get("lipschitz_samples", 1000)
    lip = estimate_c0(model, config.n, samples, seed)
    lip.lip_F = verify_lipschitz(model, "F_in_Lip", samples, seed + 4, config.n)
    g = verify_lipschitz(model, "sigma_in_Lip", samples, seed + 5, config.n)
    lip.lip_sigma_H, lip.lip_sigma_V, lip.lip_sigma_DA = g["H"], g["V"], g["DA"]
    ua = initial_state(cfg.get("initial"), model.declared_dim)
    ub = initial_state(opts.get("initial_b", cfg.get("initial")), model.declared_dim)
    report = uniqueness_check(model, ua, ub, opts.get("agreement_set_fraction", 1.0),
                              opts["trials"], config, seed, lipschitz_report=lip)
    report["lipschitz"] = lip.to_dict()
    art.json("report.json", report)
    print(f"max distance on agreement set {fmt(report['max_distance_on_agreement_set'])}; "
          f"twin {fmt(report['max_twin_distance'])}; verdict {report['verdict']}")
    return report["verdict"] and report["theta_violations"] == 0, model


def cmd_integral(cfg, seed, jobs, art):
    opts = _diag(cfg, "integral")
    if not opts:
        raise ConfigError("diagnostics.integral block is required")
    fixture = IntegrandFixture(opts.get("fixture", "constant"), opts.get("K", 4), opts.get("n", 4),
                               opts.get("scale", 0.1))
    report = integral_convergence_check(fixture, opts["perturbations"], opts["levels"], opts["trials"],
                                        seed, M=opts.get("M", 1024), T=opts.get("T", 1.0),
                                        eps=opts.get("eps", 1e-2))
    art.json("report.json", report)
    rows = [(d,) + tuple(row) for d, row in zip(report["perturbations"], report["table"])]
    art.csv("exceedance.csv", ("perturbation",) + tuple(f"level_{lv}" for lv in report["levels"]), rows)
    print(f"exceedance table final rung {fmt(report['final'])}; verdict {report['verdict']}")
    return report["verdict"], None


HANDLERS = {"check-model": cmd_check_model, "simulate": cmd_simulate, "ensemble": cmd_ensemble,
            "convergence": cmd_convergence, "uniqueness": cmd_uniqueness, "integral": cmd_integral}


def run(command: str, config_path, seed=None, jobs=None, out=None) -> int:
    """Run one subcommand; returns the exit code."""
    try:
        cfg, manifest = read_config(config_path)
        if manifest is not None and manifest.get("command") not in (None, command):
            raise ConfigError(f"manifest was written by {manifest['command']!r}, not {command!r}")
        if seed is None:
            seed = manifest["seed"] if manifest is not None else cfg.get("seed", 0)
        out = out or cfg.get("output") or f"runs/{command}"
        if jobs is None:
            jobs = os.cpu_count() or 1
        art = Artifacts(Path(out))
        ok, model = HANDLERS[command](cfg, int(seed), int(jobs), art)
    except (ConfigError, ChainTooShortError, InadmissibleCutoff) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError, KeyError) as err:
        print(f"error: invalid configuration: {err}", file=sys.stderr)
        return EXIT_USAGE
    doc = art.manifest(command, cfg, seed, model, bool(ok))
    print(f"wrote {len(doc['files']) + 1} files to {out} (content hash {doc['content_hash']})")
    return EXIT_PASS if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochgalerkin", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="RunConfig JSON or a manifest to replay")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs is not None and args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    return run(args.command, args.config, args.seed, args.jobs, args.out)


if __name__ == "__main__":
    sys.exit(main())
