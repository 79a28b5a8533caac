"""Cutoff Galerkin time stepping, stopping-time detection and record invariants."""

import hashlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochgalerkin.model_api import CutoffSpec, FunctionalModel
from stochgalerkin.models import SyntheticModel, SyntheticSpec, ZeroModel
from stochgalerkin.noise import sample_increments, sample_path
from stochgalerkin.solver import (InadmissibleCutoff, NumericalBlowupError, Scheme, SolverConfig,
                                  TrajectoryRecord, detect_announce, detect_tau, run_aux_linear,
                                  run_batch, run_truncated, step)
from stochgalerkin.spectral import SpectralDomainError, heat_semigroup, squares_basis

KAPPA = 0.02
U0_SMALL = np.r_[0.3, 0.2, 0.1, np.zeros(13)]

# sha1 of the final state bytes: synthetic dim 64, n 16, dt 1e-3, T 1, K 16,
# kappa 0.02, noise seed 0, U0 = (0.3, 0.2, 0.1, 0, ...)
GOLDEN_FINAL_SHA1 = "3129e51cdfc0de5a95793e25df55a6633b59a809"
GOLDEN_TAU = 116


def config(n=16, dt=1e-3, T=1.0, K=16, **kw):
    return SolverConfig(n, dt, T, CutoffSpec(KAPPA), K, **kw)


def fake_record(dist=None, v=None, energy=None):
    size = len(dist if dist is not None else v)
    zeros = np.zeros(size)
    return TrajectoryRecord(np.arange(size) * 0.1, np.arange(size), np.zeros((size, 1)),
                            np.zeros((size, 1)), zeros if v is None else np.asarray(v, float),
                            zeros, zeros if dist is None else np.asarray(dist, float),
                            np.ones(size), zeros if energy is None else np.asarray(energy, float),
                            zeros, {}, KAPPA)


class TestConfig:
    def test_dt_larger_than_T(self):
        with pytest.raises(SpectralDomainError):
            config(dt=2.0, T=1.0)

    def test_T_not_multiple_of_dt(self):
        with pytest.raises(SpectralDomainError):
            config(dt=0.3, T=1.0)

    def test_inadmissible_kappa(self):
        with pytest.raises(InadmissibleCutoff):
            config(c0=1.0)

    def test_admissible_kappa(self):
        assert config(c0=0.5).M == 1000

    def test_bad_drift_order(self):
        with pytest.raises(ValueError):
            config(drift_order="sideways")

    def test_n_beyond_model(self, synthetic):
        with pytest.raises(SpectralDomainError):
            run_batch(synthetic, np.zeros(65), np.zeros((1, 1, 10)), config(n=65, K=1, T=0.01))


class TestStep:
    def test_linear_step_is_heat_semigroup(self):
        model = ZeroModel(16)
        U = squares_basis(16).unit(1) + squares_basis(16).unit(3, 0.5)
        cfg = config(K=1, dt=0.01, T=0.01)
        out = step(model, U, U, [0.0], cfg)
        assert np.allclose(out.coeffs, heat_semigroup(U, 0.01).coeffs, atol=1e-15, rtol=0)

    def test_semi_implicit_linear_step(self):
        model = ZeroModel(8)
        U = np.ones(8)
        cfg = config(n=8, K=1, dt=0.1, T=0.1, scheme=Scheme.SEMI_IMPLICIT_EULER)
        lam = model.basis.eigenvalues[:8]
        assert np.allclose(step(model, U, U, [0.0], cfg), U / (1 + 0.1 * lam), atol=1e-15)

    def test_tiny_dt_consistency(self, synthetic):
        k = np.arange(1, 17)
        U = 10.0 * np.random.default_rng(0).standard_normal(16) / k ** 2
        cfg = config(dt=1e-8, T=1e-8)
        dW = sample_increments(0, 16, 1, 1e-8)[0, :, 0]
        out = step(synthetic, U, U, dW, cfg)
        assert np.linalg.norm(out - U) / np.linalg.norm(U) < 1e-6

    def test_cutoff_plateau_removes_B(self, synthetic):
        rng = np.random.default_rng(1)
        Us = rng.standard_normal(16) * 0.05
        d = rng.standard_normal(16)
        lam = synthetic.basis.eigenvalues[:16]
        d *= 3 * KAPPA / math.sqrt(np.sum(lam * d * d))
        U = Us + d
        no_b = FunctionalModel(synthetic.basis, F=synthetic.F,
                               sigma=lambda t, u: synthetic.sigma(t, u, 16), noise_modes=16)
        cfg = config(dt=1e-3, T=1e-3)
        dW = sample_increments(2, 16, 1, 1e-3)[0, :, 0]
        a = step(synthetic, U, Us, dW, cfg)
        b = step(no_b, U, Us, dW, cfg)
        assert np.max(np.abs(a - b)) <= 1e-14

    def test_step_matches_batch_run(self, synthetic):
        cfg = config(dt=1e-3, T=1e-3)
        inc = sample_increments(4, 16, 1, 1e-3)
        rec = run_batch(synthetic, U0_SMALL, inc, cfg)
        out = step(synthetic, U0_SMALL, U0_SMALL, inc[0, :, 0], cfg)
        assert np.array_equal(rec.states[0, -1], out)

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_non_finite_raises(self):
        model = FunctionalModel(squares_basis(4), F=lambda t, u: -1e300 * u)
        with pytest.raises(NumericalBlowupError):
            step(model, np.ones(4) * 1e10, np.ones(4), [0.0], config(n=4, K=1, dt=0.5, T=0.5))


class TestRunTruncated:
    def test_zero_model_matches_heat_flow(self):
        model = ZeroModel(32)
        U0 = model.basis.unit(1).coeffs + 0.5 * model.basis.unit(2).coeffs
        cfg = config(n=32, K=1, dt=0.01, T=1.0)
        rec = run_truncated(model, U0, sample_path(0, 1, 100, 0.01), cfg)
        lam = model.basis.eigenvalues[:32]
        exact = np.exp(-np.outer(rec.times, lam)) * U0
        assert np.max(np.abs(rec.states - exact)) <= 1e-12

    def test_zero_model_matches_aux_linear(self):
        model = ZeroModel(16)
        U0 = model.basis.unit(1).coeffs
        cfg = config(K=1, dt=0.01, T=1.0)
        a = run_truncated(model, U0, sample_path(0, 1, 100, 0.01), cfg)
        b = run_aux_linear(model, U0, cfg)
        assert np.max(np.abs(a.states - b.states)) <= 1e-12
        assert detect_tau(a, KAPPA) is None

    def test_deterministic(self, synthetic):
        cfg = config(T=0.2)
        path = sample_path(3, 16, cfg.M, cfg.dt)
        a = run_truncated(synthetic, U0_SMALL, path, cfg)
        b = run_truncated(synthetic, U0_SMALL, path, cfg)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.blowup_integral, b.blowup_integral)

    def test_golden_final_state(self, synthetic):
        cfg = config()
        rec = run_truncated(synthetic, U0_SMALL, sample_path(0, 16, cfg.M, cfg.dt), cfg)
        assert hashlib.sha1(rec.final_state.tobytes()).hexdigest() == GOLDEN_FINAL_SHA1
        assert rec.tau_index == GOLDEN_TAU

    def test_dt_mismatch(self, synthetic):
        with pytest.raises(SpectralDomainError):
            run_truncated(synthetic, U0_SMALL, sample_path(0, 16, 100, 2e-3), config(T=0.2))

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_blowup_keeps_partial_record(self):
        model = FunctionalModel(squares_basis(4), F=lambda t, u: -1e200 * u)
        cfg = config(n=4, K=1, dt=0.5, T=5.0)
        with pytest.raises(NumericalBlowupError) as info:
            run_truncated(model, np.ones(4), sample_path(0, 1, 10, 0.5), cfg)
        err = info.value
        assert err.last_valid >= 0
        assert isinstance(err.partial, TrajectoryRecord)
        assert len(err.partial.times) == err.last_valid + 1
        assert np.all(np.isfinite(err.partial.states))

    def test_record_stride_keeps_last_state(self, synthetic):
        cfg = config(T=0.1, record_stride=30)
        rec = run_truncated(synthetic, U0_SMALL, sample_path(1, 16, 100, 1e-3), cfg)
        assert list(rec.state_index) == [0, 30, 60, 90, 100]

    def test_csv_rows(self, synthetic):
        cfg = config(T=0.01)
        rec = run_truncated(synthetic, U0_SMALL, sample_path(1, 16, 10, 1e-3), cfg)
        rows = list(rec.csv_rows())
        assert len(rows) == 11 and len(rows[0]) == len(TrajectoryRecord.CSV_HEADER)


class TestBatch:
    def test_trajectory_independent_of_batch(self, synthetic):
        cfg = config(T=0.1)
        inc = sample_increments(8, 16, cfg.M, cfg.dt, range(5))
        full = run_batch(synthetic, U0_SMALL, inc, cfg)
        alone = run_batch(synthetic, U0_SMALL, inc[3:4], cfg)
        assert np.array_equal(full.states[3], alone.states[0])
        assert np.array_equal(full.v_norm[3], alone.v_norm[0])

    def test_rejects_wrong_noise_shape(self, synthetic):
        with pytest.raises(SpectralDomainError):
            run_batch(synthetic, U0_SMALL, np.zeros((1, 4, 100)), config(T=0.1))

    def test_noise_integral_additive(self):
        # constant additive column Phi_1: the recorded integral is W_1(t) Phi_1
        basis = squares_basis(4)
        col = np.zeros((1, 4))
        col[0, 0] = 1.0
        model = FunctionalModel(basis, sigma=lambda t, u: np.broadcast_to(col, u.shape[:-1] + (1, 4)),
                                noise_modes=1)
        cfg = config(n=4, K=1, dt=0.01, T=0.5)
        path = sample_path(5, 1, 50, 0.01)
        rec = run_truncated(model, np.zeros(4), path, cfg)
        assert np.allclose(rec.noise_integral[:, 0], path.cumulative()[0], atol=1e-14)


class TestInvariants:
    @settings(max_examples=8, deadline=None)
    @given(st.integers(0, 2**31))
    def test_theta_one_before_tau(self, seed):
        model = SyntheticModel(SyntheticSpec(dim=16, noise_additive=0.05))
        cfg = config(T=0.3)
        rec = run_truncated(model, U0_SMALL, sample_path(seed, 16, cfg.M, cfg.dt), cfg)
        end = rec.tau_index if rec.tau_index is not None else len(rec.times)
        assert np.all(rec.theta_value[:end] == 1.0)
        assert np.all(rec.dist_to_ustar[:end] < KAPPA)
        assert np.all(np.diff(rec.blowup_integral) >= 0)
        idx = [i for i in rec.announce_indices.values() if i is not None]
        assert idx == sorted(idx)

    def test_forced_theta_twin_agrees_before_tau(self, synthetic):
        cfg = config()
        path = sample_path(0, 16, cfg.M, cfg.dt)
        a = run_truncated(synthetic, U0_SMALL, path, cfg)
        b = run_truncated(synthetic, U0_SMALL, path, cfg.with_(force_theta_one=True))
        tau = a.tau_index
        assert tau is not None
        assert np.max(np.abs(a.states[: tau + 1] - b.states[: tau + 1])) <= 1e-12

    def test_galerkin_consistency(self, synthetic):
        U0 = 0.3 / np.arange(1, 65) ** 2
        inc = sample_increments(3, 8, 200, 5e-3, range(32))
        lam = synthetic.basis.eigenvalues
        gaps = []
        for n in (4, 8, 16):
            a = run_batch(synthetic, U0, inc, config(n=n, K=8, dt=5e-3, p_list=(2,)))
            b = run_batch(synthetic, U0, inc, config(n=2 * n, K=8, dt=5e-3, p_list=(2,)))
            diff = a.states[:, -1] - b.states[:, -1, :n]
            gaps.append(np.median(np.sqrt(np.sum(lam[:n] * diff * diff, axis=-1))))
        assert gaps[0] > gaps[1] > gaps[2]

    def test_time_step_convergence(self, synthetic):
        fine_dt, trials = 1 / 1024, 32
        inc = sample_increments(5, 16, 1024, fine_dt, range(trials))
        ref = run_batch(synthetic, U0_SMALL, inc, config(dt=fine_dt, p_list=(2,)))
        lam = synthetic.basis.eigenvalues[:16]
        factors = (4, 8, 16, 32)
        errs = []
        for f in factors:
            coarse = inc.reshape(trials, 16, 1024 // f, f).sum(axis=-1)
            rec = run_batch(synthetic, U0_SMALL, coarse, config(dt=fine_dt * f, p_list=(2,)))
            diff = rec.states[:, -1] - ref.states[:, -1]
            errs.append(np.median(np.sqrt(np.sum(lam * diff * diff, axis=-1))))
        assert all(a < b for a, b in zip(errs, errs[1:]))
        slope = np.polyfit(np.log(factors), np.log(errs), 1)[0]
        assert slope >= 0.4


class TestAuxLinear:
    def test_first_mode_at_one(self):
        model = ZeroModel(8)
        rec = run_aux_linear(model, model.basis.unit(1), config(n=8, K=1, dt=0.01))
        assert math.isclose(rec.states[-1, 0], math.exp(-1.0), rel_tol=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31))
    def test_v_norm_nonincreasing(self, seed):
        model = ZeroModel(16)
        U0 = np.random.default_rng(seed).standard_normal(16)
        rec = run_aux_linear(model, U0, config(dt=0.01))
        assert np.all(np.diff(rec.v_norm) <= 1e-15)

    def test_energy_bounded_by_half_initial_norm(self):
        model = ZeroModel(16)
        U0 = np.random.default_rng(0).standard_normal(16)
        dt = 1e-3
        rec = run_aux_linear(model, U0, config(dt=dt, T=5.0))
        lam = model.basis.eigenvalues[:16]
        # left-point sum of lam^2 e^{-2 lam t} over the grid, in closed form
        q = np.exp(-2 * lam * dt)
        steps = len(rec.times) - 1
        closed = float(np.sum(lam ** 2 * U0 ** 2 * dt * (1 - q ** steps) / (1 - q)))
        assert math.isclose(rec.energy_integral[-1], closed, rel_tol=1e-10)
        half_v = 0.5 * float(np.sum(lam * U0 ** 2))
        assert rec.energy_integral[-1] <= half_v + float(np.sum(lam ** 2 * U0 ** 2)) * dt


class TestDetect:
    def test_tau_none_when_flat(self):
        assert detect_tau(fake_record(dist=np.zeros(5)), KAPPA) is None

    def test_tau_first_crossing(self):
        assert detect_tau(fake_record(dist=[0.0, KAPPA / 2, 2 * KAPPA]), KAPPA) == 2

    def test_tau_boundary_counts(self):
        assert detect_tau(fake_record(dist=[0.0, KAPPA]), KAPPA) == 1

    def test_announce_zero_trajectory(self):
        out = detect_announce(fake_record(v=np.zeros(4)), (1, 2, 4))
        assert all(v is None for v in out.values())

    def test_announce_linear_decay(self):
        model = ZeroModel(8)
        rec = run_aux_linear(model, model.basis.unit(1), config(n=8, K=1, dt=1e-3))
        out = detect_announce(rec, (1.0, 2.0))
        assert out[1.0] == 0 and out[2.0] is None
        q = np.maximum.accumulate(rec.v_norm ** 2) + rec.energy_integral
        assert math.isclose(q[-1], 1 + (1 - math.exp(-2.0)) / 2, rel_tol=1e-3)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31))
    def test_announce_monotone(self, seed):
        rng = np.random.default_rng(seed)
        v = rng.uniform(0, 3, 30)
        energy = np.cumsum(rng.uniform(0, 1, 30))
        out = detect_announce(fake_record(v=v, energy=energy), (1, 2, 4, 8, 16))
        idx = [out[float(k)] for k in (1, 2, 4, 8, 16)]
        seen = [i for i in idx if i is not None]
        assert seen == sorted(seen)
        # once a level is never reached, no higher level is reached either
        if None in idx:
            assert all(i is None for i in idx[idx.index(None):])
