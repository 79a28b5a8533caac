"""End-to-end acceptance criteria, one test per criterion at the stated tolerances.

Each test records a single PASS/FAIL line, shown in the terminal summary."""

import json
import math
import time

import numpy as np
import pytest

from stochgalerkin.cli import EXIT_FAIL, EXIT_PASS, demo_command, demo_configs, run
from stochgalerkin.diagnostics import (IntegrandFixture, bdg_ratio, gk_cauchy, integral_convergence_check,
                                       ito_statistics, moment_harness, smoothing_functional,
                                       uniqueness_check, w12_drift_parts)
from stochgalerkin.model_api import (AssumptionReport, CutoffSpec, estimate_c0, verify_cancellation,
                                     verify_lipschitz)
from stochgalerkin.models import (NS2DModel, NS2DSpec, PE3DSpec, PEModel, PEState, SyntheticModel,
                                  SyntheticSpec, ZeroModel)
from stochgalerkin.models.pe import (grid_axes, pe_Ap_field, pe_coriolis_field, pe_w_diagnostic,
                                     rigid_lid_project)
from stochgalerkin.noise import sample_increments, sample_path
from stochgalerkin.solver import SolverConfig, run_aux_linear, run_batch, run_truncated
from stochgalerkin.spectral import (SpectralVector, frac_norms, heat_semigroup, poincare_constant,
                                    squares_basis, tail_poincare_constant)

KAPPA = 0.02


@pytest.fixture(scope="module")
def model():
    return SyntheticModel(SyntheticSpec(dim=64))


@pytest.fixture(scope="module")
def c0(model):
    return estimate_c0(model, model.declared_dim, 1000, 0).c0_est


@pytest.fixture(scope="module")
def ensemble(model, c0):
    cfg = SolverConfig(8, 1e-3, 1.0, CutoffSpec(KAPPA), 32, record_stride=1, c0=c0)
    U0 = np.r_[0.3, 0.2, 0.1]
    start = time.perf_counter()
    summ = moment_harness(model, (8, 16, 32), 256, (2, 4), cfg, 2024, U0, alpha=0.25, jobs=1)
    return summ, time.perf_counter() - start


@pytest.fixture(scope="module")
def chain(model, c0):
    cfg = SolverConfig(8, 1e-3, 1.0, CutoffSpec(KAPPA), 64, record_stride=5, c0=c0)
    start = time.perf_counter()
    summ = gk_cauchy(model, [(8, 16), (16, 32), (32, 64)], 128, cfg, 7, 0.3 / np.arange(1, 65) ** 2, jobs=1)
    return summ, time.perf_counter() - start


@pytest.fixture(scope="module")
def uniqueness(model, c0):
    n = 32
    rep = AssumptionReport(c0_est=c0, samples=1000, seed=0)
    rep.lip_F = verify_lipschitz(model, "F_in_Lip", 1000, 4, n)
    rep.lip_sigma_H = verify_lipschitz(model, "sigma_in_Lip", 1000, 5, n)["H"]
    cfg = SolverConfig(n, 1e-3, 1.0, CutoffSpec(KAPPA), 32, c0=c0)
    U0 = 0.3 / np.arange(1, 33) ** 2
    return uniqueness_check(model, U0, U0, 1.0, 64, cfg, 11, rep)


@pytest.fixture(scope="module")
def forced_twin(model, c0):
    """Largest gap on [0, tau] between the cutoff run and its theta = 1 twin."""
    cfg = SolverConfig(16, 1e-3, 1.0, CutoffSpec(KAPPA), 16, c0=c0)
    inc = sample_increments(31, 16, cfg.M, cfg.dt, range(32))
    U0 = np.r_[0.3, 0.2, 0.1]
    a = run_batch(model, U0, inc, cfg)
    b = run_batch(model, U0, inc, cfg.with_(force_theta_one=True))
    worst, hits, violations = 0.0, 0, 0
    for i in range(len(a)):
        rec = a.trajectory(i)
        tau = rec.tau_index
        hits += tau is not None
        end = len(rec.times) if tau is None else tau
        violations += int(np.any(rec.theta_value[:end] != 1.0))
        last = min(end, len(rec.times) - 1)
        worst = max(worst, float(np.max(np.abs(a.states[i, : last + 1] - b.states[i, : last + 1]))))
    return worst, hits, violations


def test_criterion_01_cancellation(acceptance):
    start = time.perf_counter()
    models = {"synthetic": SyntheticModel(SyntheticSpec(dim=64)),
              "ns2d": NS2DModel(NS2DSpec(modes_per_axis=32)),
              "pe": PEModel(PE3DSpec(modes=(8, 8, 8)))}
    res = {k: verify_cancellation(m, m.declared_dim, 1000, 0) for k, m in models.items()}
    elapsed = time.perf_counter() - start
    ok = res["synthetic"] <= 1e-12 and res["ns2d"] <= 1e-8 and res["pe"] <= 1e-8 and elapsed < 30
    acceptance(1, "cancellation", ok,
               ", ".join(f"{k} {v:.1e}" for k, v in res.items()) + f", {elapsed:.1f}s")


def test_criterion_02_spectral_identities(acceptance):
    basis = squares_basis(64)
    rng = np.random.default_rng(2)
    X = rng.standard_normal((10_000, 64)) * rng.uniform(0.1, 10, (10_000, 1))
    ok = True
    for n in (4, 16, 40):
        for a1, a2 in ((0.0, 0.5), (0.5, 1.0), (-0.5, 0.25)):
            low, high = X.copy(), X.copy()
            low[:, n:] = 0
            high[:, :n] = 0
            c = poincare_constant(basis, n, a1, a2)
            ok &= bool(np.all(frac_norms(low, basis, a2) <= c * frac_norms(low, basis, a1) * (1 + 1e-12)))
            c = tail_poincare_constant(basis, n, a1, a2)
            ok &= bool(np.all(frac_norms(high, basis, a1) <= c * frac_norms(high, basis, a2) * (1 + 1e-12)))
    semigroup_gap = 0.0
    for row in X[:200]:
        U = SpectralVector(row, basis)
        for t, s in ((0.01, 0.02), (0.1, 0.3)):
            lhs = heat_semigroup(heat_semigroup(U, t), s).coeffs
            rhs = heat_semigroup(U, t + s).coeffs
            semigroup_gap = max(semigroup_gap, float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(row))))
    ok &= semigroup_gap <= 1e-12
    acceptance(2, "spectral identities", ok, f"semigroup gap {semigroup_gap:.1e}")


def test_criterion_03_linear_reduction(acceptance):
    zero = ZeroModel(32)
    U0 = zero.basis.unit(1).coeffs + 0.5 * zero.basis.unit(3).coeffs
    cfg = SolverConfig(32, 1e-3, 1.0, CutoffSpec(KAPPA), 1)
    rec = run_truncated(zero, U0, sample_path(0, 1, cfg.M, cfg.dt), cfg)
    exact = np.exp(-np.outer(rec.times, zero.basis.eigenvalues[:32])) * U0
    heat_gap = float(np.max(np.abs(rec.states - exact)))
    unit = run_aux_linear(zero, zero.basis.unit(1), cfg)
    deriv, _ = w12_drift_parts(unit)
    q = math.exp(-cfg.dt)
    geometric = (1 - q) ** 2 * (1 - q ** (2 * cfg.M)) / ((1 - q * q) * cfg.dt)
    continuum = (1 - math.exp(-2.0)) / 2
    ok = heat_gap <= 1e-12 and abs(deriv - geometric) <= 1e-12 and abs(deriv - continuum) <= 2 * cfg.dt
    acceptance(3, "linear reduction", ok,
               f"heat gap {heat_gap:.1e}, w12 vs continuum {abs(deriv - continuum):.1e}")


def test_criterion_04_stochastic_calculus(acceptance):
    start = time.perf_counter()
    stats = [ito_statistics(IntegrandFixture(kind), 10_000, 5) for kind in IntegrandFixture.KINDS]
    ito_ok = all(s["zero_mean_pass"] and s["isometry_pass"] for s in stats)
    bdg_ok, spreads = True, []
    for r in (1, 2):
        for seed in (4, 8):
            vals = np.array([bdg_ratio(IntegrandFixture(kind), r, 10_000, seed)
                             for kind in IntegrandFixture.KINDS])
            spread = float(np.max(np.abs(vals / vals.mean() - 1)))
            spreads.append(spread)
            bdg_ok &= bool(np.all(np.isfinite(vals))) and spread <= 0.2
    elapsed = time.perf_counter() - start
    ok = ito_ok and bdg_ok and elapsed < 120
    acceptance(4, "stochastic calculus", ok, f"max BDG spread {max(spreads):.1%}, {elapsed:.0f}s")


def test_criterion_05_uniformity(acceptance, ensemble):
    summ, elapsed = ensemble
    growth = {k: v["growth"] / v["allowed"] for k, v in summ.verdict_detail.items()}
    ok = summ.verdict is True and elapsed < 600 and sum(summ.failures.values()) == 0
    acceptance(5, "uniform Galerkin moments", ok,
               f"worst growth {max(growth.values()):.2f} of allowed slack, {elapsed:.0f}s")


def test_criterion_06_cutoff_tau(acceptance, ensemble, chain, uniqueness, forced_twin):
    worst, hits, violations = forced_twin
    total = violations + ensemble[0].theta_violations + chain[0].theta_violations \
        + uniqueness["theta_violations"]
    ok = total == 0 and worst <= 1e-12 and hits > 0
    acceptance(6, "cutoff equals one before tau", ok,
               f"{total} violations, twin gap {worst:.1e} over {hits} stopped trajectories")


def test_criterion_07_gk_chain(acceptance, chain):
    summ, elapsed = chain
    medians = summ.verdict_detail["medians"]
    ok = summ.verdict is True and elapsed < 600
    acceptance(7, "Galerkin Cauchy chain", ok,
               " > ".join(f"{m:.3g}" for m in medians) + f", {elapsed:.0f}s")


def test_criterion_08_uniqueness(acceptance, uniqueness):
    ok = (uniqueness["trials"] == 64 and uniqueness["max_distance_on_agreement_set"] <= 1e-10
          and uniqueness["max_twin_distance"] <= 1e-8 and uniqueness["verdict"])
    acceptance(8, "pathwise uniqueness", ok,
               f"distance {uniqueness['max_distance_on_agreement_set']:.1e}, "
               f"twin {uniqueness['max_twin_distance']:.1e}")


def test_criterion_09_integral_convergence(acceptance):
    start = time.perf_counter()
    out = integral_convergence_check(IntegrandFixture("constant"), [0.1, 0.01, 0.001], [2, 5, 8],
                                     256, 3, M=1024, eps=1e-2)
    dt, rho = 1e-3, 0.1
    t = np.arange(1001) * dt
    r_gap = float(np.max(np.abs(smoothing_functional(np.ones_like(t), rho, dt) - (1 - np.exp(-t / rho)))))
    elapsed = time.perf_counter() - start
    ok = out["verdict"] and out["monotone"] and out["final"] < 0.05 and r_gap <= 1e-10 and elapsed < 300
    acceptance(9, "stochastic integral convergence", ok,
               f"final rung {out['final']:.3f}, smoothing gap {r_gap:.1e}, {elapsed:.0f}s")


def test_criterion_10_pe_identities(acceptance):
    spec = PE3DSpec(modes=(8, 8, 8))
    x, y, z = grid_axes(spec)
    X, Y, Z = np.meshgrid(x, y, z, indexing="ij")
    shape = X.shape
    a, h = 0.7, spec.depth
    v = np.stack([a * np.cos(X) * np.cos(np.pi * Z / h), np.zeros_like(X)])
    w_err = float(np.max(np.abs(pe_w_diagnostic(spec, v)
                                - (a * h / np.pi) * np.sin(X) * np.sin(np.pi * Z / h))))
    ap = pe_Ap_field(spec, np.sin(X), np.zeros_like(X))
    ap_err = max(float(np.max(np.abs(ap[0] - spec.g * spec.beta_T * Z * np.cos(X)))),
                 float(np.max(np.abs(ap[1]))))
    rot = PE3DSpec(modes=(8, 8, 8), f0=1e-4, beta=0.0)
    cor = pe_coriolis_field(rot, np.stack([np.ones(shape), np.zeros(shape)]))
    cor_err = max(float(np.max(np.abs(cor[0]))), float(np.max(np.abs(cor[1] - 1e-4))) / 1e-4)
    rng = np.random.default_rng(10)
    vr = rng.standard_normal((2,) + shape)
    neutral = abs(float(np.sum(pe_coriolis_field(PE3DSpec(f0=1.3, beta=0.4), vr) * vr))) / float(np.sum(vr * vr))
    state = PEState(rng.standard_normal((2,) + shape), rng.standard_normal(shape), rng.standard_normal(shape))
    once = rigid_lid_project(spec, state)
    idem = float(np.max(np.abs(rigid_lid_project(spec, once).stack() - once.stack())))
    ok = w_err <= 1e-10 and ap_err <= 1e-10 and cor_err <= 1e-10 and neutral <= 1e-12 and idem <= 1e-12
    acceptance(10, "primitive-equation operators", ok,
               f"w {w_err:.1e}, Ap {ap_err:.1e}, coriolis {cor_err:.1e}, "
               f"neutral {neutral:.1e}, projection {idem:.1e}")


def test_criterion_11_reproducibility(acceptance, tmp_path):
    mismatched = []
    for name, path in sorted(demo_configs().items()):
        command = demo_command(name)
        first, second = tmp_path / name / "first", tmp_path / name / "second"
        code = run(command, path, jobs=1, out=first)
        assert code in (EXIT_PASS, EXIT_FAIL)
        assert run(command, first / "manifest.json", jobs=1, out=second) == code
        m1 = json.loads((first / "manifest.json").read_text())
        m2 = json.loads((second / "manifest.json").read_text())
        same = m1["content_hash"] == m2["content_hash"] and all(
            (first / f).read_bytes() == (second / f).read_bytes() for f in m1["files"])
        if not same:
            mismatched.append(name)
    acceptance(11, "manifest replay", not mismatched,
               f"{len(demo_configs())} demo configs" + (f", mismatched {mismatched}" if mismatched else ""))
