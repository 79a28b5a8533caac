"""Monte Carlo diagnostics for the Galerkin scheme.

Covers uniform moment bounds across Galerkin dimensions, fractional-in-time
Sobolev norms, same-noise Cauchy tests for convergence in probability,
pathwise uniqueness twins, and convergence of stochastic integrals under
perturbed integrands and mollified noise. Verdicts are statistical: they
bound trends over a finite set of dimensions, they do not prove limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model_api import AbstractModel, AssumptionReport
from .noise import NoisePath, mollify_path, sample_increments
from .solver import BatchRecord, NumericalBlowupError, SolverConfig, run_batch
from .spectral import EigenbasisSpec, SpectralDomainError, SpectralVector

__all__ = [
    "FracNormSpec",
    "EnsembleSummary",
    "GridMismatchError",
    "ChainTooShortError",
    "LipschitzUnverifiedError",
    "STATISTICS",
    "wap_norm",
    "wap_norms",
    "w12_drift_norm",
    "w12_drift_parts",
    "phase_distance",
    "moment_harness",
    "gk_cauchy",
    "uniqueness_check",
    "smoothing_functional",
    "IntegrandFixture",
    "stochastic_integral",
    "ito_statistics",
    "bdg_ratio",
    "integral_convergence_check",
]

STATISTICS = ("sup_moment", "energy_moment", "noise_frac_norm", "drift_w12")
QUANTILES = (0.25, 0.5, 0.75, 0.95)


class GridMismatchError(SpectralDomainError):
    pass


class ChainTooShortError(ValueError):
    pass


class LipschitzUnverifiedError(RuntimeError):
    pass


@dataclass(frozen=True)
class FracNormSpec:
    alpha: float
    p: float
    quadrature: str = "trapezoid"
    diagonal_cut: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise SpectralDomainError("alpha must lie in (0, 1]")
        if not self.p > 1:
            raise SpectralDomainError("p must exceed 1")
        if self.quadrature != "trapezoid":
            raise ValueError(f"unsupported quadrature {self.quadrature!r}")
        if not self.diagonal_cut > 0:
            raise SpectralDomainError("diagonal_cut must be positive")

    @property
    def embeds_continuously(self) -> bool:
        """alpha * p > 1, the regime where W^{alpha,p} sits inside C([0, T])."""
        return self.alpha * self.p > 1


def _trapezoid_weights(R: int, h: float) -> np.ndarray:
    c = np.full(R, h)
    c[0] = c[-1] = 0.5 * h
    return c


def wap_norms(series: np.ndarray, h: float, spec: FracNormSpec,
              weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Batched W^{alpha,p}([0, T]; X) norms of series shaped (..., R, n).

    |x|_X = (sum_k weights_k x_k^2)^(1/2) (unit weights when omitted). Both
    terms use the product trapezoid rule; pairs closer than diagonal_cut grid
    steps are dropped."""
    X = np.asarray(series, dtype=np.float64)
    R = X.shape[-2]
    if R < 2:
        raise SpectralDomainError("need at least two time points")
    w = np.ones(X.shape[-1]) if weights is None else np.asarray(weights, float)
    p, ap = spec.p, spec.alpha * spec.p
    c = _trapezoid_weights(R, h)
    mag = np.sqrt(np.sum(w * X * X, axis=-1))
    lp = np.sum(c * mag ** p, axis=-1)
    double = np.zeros(X.shape[:-2])
    first = max(1, int(math.ceil(spec.diagonal_cut - 1e-12)))
    for lag in range(first, R):
        d = X[..., lag:, :] - X[..., :-lag, :]
        dn = np.sqrt(np.sum(w * d * d, axis=-1)) ** p
        double += np.sum(c[lag:] * c[:-lag] * dn, axis=-1) / (lag * h) ** (1.0 + ap)
    return (lp + 2.0 * double) ** (1.0 / p)


def wap_norm(series, spec: FracNormSpec, h: float, basis: Optional[EigenbasisSpec] = None,
             alpha_space: float = 0.0) -> float:
    """W^{alpha,p} norm of one series with values in D(A^alpha_space).

    ``series`` is a sequence of SpectralVectors or an (R, n) array."""
    if isinstance(series, (list, tuple)) and series and isinstance(series[0], SpectralVector):
        basis = series[0].basis if basis is None else basis
        n = max(len(v) for v in series)
        arr = np.array([v.padded(n).coeffs for v in series])
    else:
        arr = np.asarray(series, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
    if len(arr) < 2:
        raise SpectralDomainError("need at least two time points")
    w = None
    if alpha_space:
        if basis is None:
            raise SpectralDomainError("a basis is needed for alpha_space != 0")
        w = basis.weights(2 * alpha_space, arr.shape[-1])
    return float(wap_norms(arr, h, spec, w))


def _grid_step(record) -> float:
    idx = np.asarray(record.state_index)
    if len(idx) < 2:
        raise SpectralDomainError("need at least two recorded states")
    steps = np.diff(idx)
    if np.any(steps != steps[0]):
        raise GridMismatchError("recorded grid is not uniform; use a stride dividing M")
    return float(record.times[idx[1]] - record.times[idx[0]])


def w12_drift_parts(record, noise_integral=None):
    """(derivative part, L2 part) of |U - int sigma dW|^2_{W^{1,2}} on the recorded grid."""
    states = np.asarray(record.states)
    M = record.noise_integral if noise_integral is None else np.asarray(noise_integral, float)
    if M.shape != states.shape:
        raise GridMismatchError(f"noise integral shape {M.shape} != states {states.shape}")
    h = _grid_step(record)
    D = states - M
    dD = np.diff(D, axis=-2)
    deriv = float(np.sum(dD * dD) / h)
    l2 = float(np.sum(D[:-1] * D[:-1]) * h)
    return deriv, l2


def w12_drift_norm(record, noise_integral=None) -> float:
    deriv, l2 = w12_drift_parts(record, noise_integral)
    return math.sqrt(deriv + l2)


def phase_distance(a, b, basis: EigenbasisSpec, h: float) -> float:
    """(int_0^T ||a - b||^2 dt)^(1/2) + max_t |a - b|_{-1/2} over recorded states.

    Accepts TrajectoryRecords or (R, n) arrays of possibly different widths."""
    sa = np.asarray(a.states if hasattr(a, "states") else a, float)
    sb = np.asarray(b.states if hasattr(b, "states") else b, float)
    if sa.shape[-2] != sb.shape[-2]:
        raise GridMismatchError("records have different time grids")
    n = max(sa.shape[-1], sb.shape[-1])
    d = np.zeros(np.broadcast_shapes(sa.shape[:-1], sb.shape[:-1]) + (n,))
    d[..., : sa.shape[-1]] += sa
    d[..., : sb.shape[-1]] -= sb
    lam = basis.eigenvalues[:n]
    c = _trapezoid_weights(d.shape[-2], h)
    l2v = np.sqrt(np.sum(c * np.sum(lam * d * d, axis=-1), axis=-1))
    supm = np.sqrt(np.max(np.sum(d * d / lam, axis=-1), axis=-1))
    out = l2v + supm
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------
# ensemble plumbing


def _trial_batches(trials: int, batch: int):
    for start in range(0, trials, batch):
        yield list(range(start, min(trials, start + batch)))


def _run_quarantined(model, U0, inc, config):
    """Run a batch; if it blows up, rerun row by row and drop failing rows."""
    try:
        return run_batch(model, U0, inc, config), np.arange(inc.shape[0]), 0
    except NumericalBlowupError:
        pass
    good, recs = [], []
    for i in range(inc.shape[0]):
        try:
            recs.append(run_batch(model, U0, inc[i:i + 1], config))
            good.append(i)
        except NumericalBlowupError:
            continue
    failed = inc.shape[0] - len(good)
    if not recs:
        return None, np.array([], int), failed
    merged = BatchRecord(
        recs[0].times, recs[0].state_index,
        np.concatenate([r.states for r in recs]), np.concatenate([r.noise_integral for r in recs]),
        *(np.concatenate([getattr(r, f) for r in recs]) for f in
          ("v_norm", "da_norm", "dist_to_ustar", "theta_value", "energy_integral", "blowup_integral")),
        {p: np.concatenate([r.moment_integrals[p] for r in recs]) for p in recs[0].moment_integrals},
        recs[0].kappa, recs[0].levels)
    return merged, np.array(good), failed


def _theta_tau_violations(rec: BatchRecord) -> int:
    """Trajectories with theta != 1 strictly before their detected tau."""
    bad = 0
    for i in range(len(rec)):
        hit = np.nonzero(rec.dist_to_ustar[i] >= rec.kappa)[0]
        stop = hit[0] if len(hit) else rec.theta_value.shape[1]
        if np.any(rec.theta_value[i, :stop] != 1.0):
            bad += 1
    return bad


def _mean_se(x):
    x = np.asarray(x, float)
    if len(x) < 2:
        return float(np.mean(x)) if len(x) else float("nan"), None
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


def _pad_u0(U0, n):
    if isinstance(U0, SpectralVector):
        U0 = U0.coeffs
    u = np.zeros(n)
    U0 = np.asarray(U0, float)
    m = min(n, U0.shape[-1])
    u[:m] = U0[:m]
    return u


@dataclass
class EnsembleSummary:
    model_label: str
    dims: list
    trials: int
    moment_table: dict = field(default_factory=dict)
    distance_table: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    theta_violations: int = 0
    tau_counts: dict = field(default_factory=dict)
    verdict: Optional[bool] = None
    verdict_detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model_label,
            "dims": list(self.dims),
            "trials": self.trials,
            "moments": [{"statistic": s, "p": p, "n": n, "mean": m, "se": se}
                        for (s, p, n), (m, se) in sorted(self.moment_table.items(), key=str)],
            "distances": [{"n": a, "m": b, "quantiles": q}
                          for (a, b), q in self.distance_table.items()],
            "seeds": self.seeds,
            "failures": {str(k): v for k, v in self.failures.items()},
            "theta_violations": self.theta_violations,
            "tau_counts": {str(k): v for k, v in self.tau_counts.items()},
            "verdict": self.verdict,
            "verdict_detail": self.verdict_detail,
        }

    def to_json(self) -> str:
        from .io import dumps

        return dumps(self.to_dict())

    def moment_rows(self, statistic):
        for (s, p, n), (m, se) in sorted(self.moment_table.items(), key=lambda kv: (kv[0][1], kv[0][2])):
            if s == statistic:
                yield p, n, m, se


def _uniformity(summary: EnsembleSummary, p_list, dims, slack=3.0):
    lo, hi = min(dims), max(dims)
    detail, ok, undecided = {}, True, False
    for s in STATISTICS:
        for p in p_list:
            m0, se0 = summary.moment_table[(s, p, lo)]
            m1, se1 = summary.moment_table[(s, p, hi)]
            if se0 is None or se1 is None:
                detail[f"{s}|p={p}"] = {"growth": m1 - m0, "allowed": None, "pass": None}
                undecided = True
                continue
            allowed = slack * math.sqrt(se0 ** 2 + se1 ** 2)
            good = (m1 - m0) <= allowed
            ok &= good
            detail[f"{s}|p={p}"] = {"growth": m1 - m0, "allowed": allowed, "pass": bool(good)}
    return (None if undecided and ok else ok), detail


def _map_batches(fn, arglist, jobs):
    """Apply fn to each argument tuple, in order; a process pool when jobs > 1."""
    if jobs is None or jobs <= 1 or len(arglist) <= 1:
        return [fn(*a) for a in arglist]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*arglist)))


def _moment_batch(model, n, u0, cfg, seed, ids, p_list, alpha):
    inc = sample_increments(seed, cfg.K, cfg.M, cfg.dt, ids)
    rec, good, nfail = _run_quarantined(model, u0, inc, cfg)
    out = {"failed": nfail, "theta": 0, "taus": 0, "samples": {}}
    if rec is None:
        return out
    out["theta"] = _theta_tau_violations(rec)
    out["taus"] = int(np.sum(np.any(rec.dist_to_ustar >= rec.kappa, axis=1)))
    h = float(rec.times[rec.state_index[1]] - rec.times[rec.state_index[0]])
    vmax = np.max(rec.v_norm, axis=1)
    energy = rec.energy_integral[:, -1]
    D = rec.states - rec.noise_integral
    dD = np.diff(D, axis=1)
    w12 = np.sum(dD * dD, axis=(1, 2)) / h + np.sum(D[:, :-1] ** 2, axis=(1, 2)) * h
    for p in p_list:
        out["samples"][("sup_moment", p)] = vmax ** p + rec.moment_integrals[p][:, -1]
        out["samples"][("energy_moment", p)] = energy ** (p / 2)
        out["samples"][("noise_frac_norm", p)] = wap_norms(rec.noise_integral, h,
                                                           FracNormSpec(alpha, p)) ** p
        out["samples"][("drift_w12", p)] = w12
    return out


def moment_harness(model: AbstractModel, dims: Sequence[int], trials: int, p_list: Sequence[float],
                   config: SolverConfig, seed: int, U0, alpha: float = 0.25,
                   batch: int = 64, jobs: int = 1) -> EnsembleSummary:
    """Estimate the four uniform-in-n statistics for every n in ``dims``.

    Per trajectory and p:
      sup_moment       sup_t ||U||^p + int |AU|^2 ||U||^(p-2)
      energy_moment    (int |AU|^2)^(p/2)
      noise_frac_norm  |int sigma dW|^p in W^{alpha,p}([0, T]; H)
      drift_w12        |U - int sigma dW|^2 in W^{1,2}([0, T]; H)  (same for every p)
    Trial i uses noise keyed by (seed, i) in every dimension.
    """
    dims = [int(n) for n in dims]
    p_list = tuple(p_list)
    if any(n > model.declared_dim for n in dims):
        raise SpectralDomainError(f"dims exceed model dimension {model.declared_dim}")
    summary = EnsembleSummary(getattr(model, "label", type(model).__name__), dims, trials,
                              seeds={"master": int(seed), "trajectories": f"(seed, i) for i < {trials}",
                                     "generator": "numpy-philox4x64-seedseq-v1"})
    samples = {(s, p, n): [] for s in STATISTICS for p in p_list for n in dims}
    for n in dims:
        cfg = config.with_(n=n, p_list=tuple(sorted(set(p_list) | {2})))
        u0 = _pad_u0(U0, n)
        args = [(model, n, u0, cfg, seed, ids, p_list, alpha) for ids in _trial_batches(trials, batch)]
        results = _map_batches(_moment_batch, args, jobs)
        summary.failures[n] = sum(r["failed"] for r in results)
        summary.tau_counts[n] = sum(r["taus"] for r in results)
        summary.theta_violations += sum(r["theta"] for r in results)
        for r in results:
            for (stat, p), vals in r["samples"].items():
                samples[(stat, p, n)].extend(vals)
    for key, vals in samples.items():
        summary.moment_table[key] = _mean_se(vals)
    ok, detail = _uniformity(summary, p_list, dims)
    summary.verdict = None if ok is None else bool(ok)
    summary.verdict_detail = detail
    return summary


def _gk_batch(model, dims, pairs, config, seed, ids, U0):
    inc = sample_increments(seed, config.K, config.M, config.dt, ids)
    recs, goods = {}, {}
    out = {"failed": {}, "theta": 0, "dist": {}}
    for n in dims:
        rec, good, nfail = _run_quarantined(model, _pad_u0(U0, n), inc, config.with_(n=n))
        out["failed"][n] = nfail
        recs[n], goods[n] = rec, good
        if rec is not None:
            out["theta"] += _theta_tau_violations(rec)
    for a, b in pairs:
        if recs[a] is None or recs[b] is None:
            out["dist"][(a, b)] = np.array([])
            continue
        both = np.intersect1d(goods[a], goods[b])
        ra = recs[a].states[np.searchsorted(goods[a], both)]
        rb = recs[b].states[np.searchsorted(goods[b], both)]
        h = float(recs[a].times[recs[a].state_index[1]] - recs[a].times[recs[a].state_index[0]])
        out["dist"][(a, b)] = np.atleast_1d(phase_distance(ra, rb, model.basis, h))
    return out


def gk_cauchy(model: AbstractModel, dim_pairs: Sequence[tuple], trials: int, config: SolverConfig,
              seed: int, U0, batch: int = 32, jobs: int = 1) -> EnsembleSummary:
    """Same-noise distances d(U^n, U^m) for each pair; the verdict asks for
    strictly decreasing medians along the listed chain."""
    pairs = [(int(a), int(b)) for a, b in dim_pairs]
    if len(pairs) < 2:
        raise ChainTooShortError("a convergence chain needs at least two pairs")
    dims = sorted({d for pr in pairs for d in pr})
    if max(dims) > model.declared_dim:
        raise SpectralDomainError(f"dims exceed model dimension {model.declared_dim}")
    summary = EnsembleSummary(getattr(model, "label", type(model).__name__), dims, trials,
                              seeds={"master": int(seed), "trajectories": f"(seed, i) for i < {trials}",
                                     "generator": "numpy-philox4x64-seedseq-v1"})
    args = [(model, dims, pairs, config, seed, ids, U0) for ids in _trial_batches(trials, batch)]
    results = _map_batches(_gk_batch, args, jobs)
    dist = {pr: np.concatenate([r["dist"][pr] for r in results]) for pr in pairs}
    failures = {d: sum(r["failed"][d] for r in results) for d in dims}
    summary.theta_violations = sum(r["theta"] for r in results)
    medians = []
    for pr in pairs:
        q = np.quantile(dist[pr], QUANTILES) if len(dist[pr]) else [float("nan")] * 4
        summary.distance_table[pr] = {f"q{int(100 * a)}": float(v) for a, v in zip(QUANTILES, q)}
        medians.append(summary.distance_table[pr]["q50"])
    summary.failures = failures
    summary.verdict = bool(all(m1 < m0 for m0, m1 in zip(medians, medians[1:])))
    summary.verdict_detail = {"medians": medians}
    return summary


def uniqueness_check(model: AbstractModel, U0_a, U0_b, agreement_set_fraction: float, trials: int,
                     config: SolverConfig, seed: int, lipschitz_report: Optional[AssumptionReport] = None,
                     tol: float = 1e-10, twin_tol: float = 1e-8) -> dict:
    """Pairs of runs on shared noise. On the agreement set (a seeded subset of
    trials of the given fraction) both runs start from U0_a; elsewhere the
    second run starts from U0_b. Agreement-set trials also get a twin whose
    drift is summed in a different order."""
    if lipschitz_report is None or lipschitz_report.lip_F is None or lipschitz_report.lip_sigma_H is None:
        raise LipschitzUnverifiedError(
            "run verify_lipschitz for 'F_in_Lip' and 'sigma_in_Lip' first and pass the "
            "merged AssumptionReport as lipschitz_report")
    if not 0 <= agreement_set_fraction <= 1:
        raise ValueError("agreement_set_fraction must lie in [0, 1]")
    n = config.n
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 11])))
    on_set = rng.random(trials) < agreement_set_fraction
    ids = list(range(trials))
    inc = sample_increments(seed, config.K, config.M, config.dt, ids)
    ua, ub = _pad_u0(U0_a, n), _pad_u0(U0_b, n)
    start_b = np.where(on_set[:, None], ua, ub)
    run_a = run_batch(model, ua, inc, config)
    run_b = run_batch(model, start_b, inc, config)
    twin = run_batch(model, ua, inc, config.with_(drift_order="split"))
    lam = model.basis.eigenvalues[:n]

    def sup_v(x, y):
        d = x.states - y.states
        return np.sqrt(np.max(np.sum(lam * d * d, axis=-1), axis=-1))

    dab = sup_v(run_a, run_b)
    dtw = sup_v(run_a, twin)
    omega0 = dab[on_set]
    max_on = float(np.max(omega0)) if len(omega0) else 0.0
    twin_on = float(np.max(dtw[on_set])) if np.any(on_set) else 0.0
    return {
        "trials": trials,
        "agreement_trials": int(np.sum(on_set)),
        "agreement_set_fraction": agreement_set_fraction,
        "max_distance_on_agreement_set": max_on,
        "max_twin_distance": twin_on,
        "max_twin_distance_all": float(np.max(dtw)),
        "complement_distances": [float(x) for x in dab[~on_set]],
        "tolerance": tol,
        "twin_tolerance": twin_tol,
        "theta_violations": _theta_tau_violations(run_a) + _theta_tau_violations(run_b),
        "verdict": bool(max_on <= tol and twin_on <= twin_tol),
    }


# ----------------------------------------------------------------------
# stochastic integrals


def smoothing_functional(F, rho: float, dt: float) -> np.ndarray:
    """R_rho(F)(t) = (1/rho) int_0^t exp(-(t - s)/rho) F(s) ds on a uniform grid.

    F is linearly interpolated between grid points and each step is integrated
    exactly, so constant and linear inputs are reproduced to rounding. Time runs
    along axis 0."""
    if not rho > 0:
        raise SpectralDomainError("rho must be positive")
    F = np.asarray(F, dtype=np.float64)
    E = math.exp(-dt / rho)
    a = (rho / dt) * (1.0 - E)  # = (1/dt) int_0^dt exp(-s/rho) ds
    c_old = a - E
    c_new = 1.0 - a
    R = np.zeros_like(F)
    for m in range(len(F) - 1):
        R[m + 1] = E * R[m] + c_old * F[m] + c_new * F[m + 1]
    return R


class IntegrandFixture:
    """Integrands G(t, W) as (..., K, n) column arrays, W the path value at t.

    constant   G = g
    modulated  G = g (1 + 0.5 sin 2 pi t)
    adapted    G = g (1 + 0.5 tanh W_1(t))
    with g diagonal, g_kk = scale * k^-1 normalised to HS norm ``scale``."""

    KINDS = ("constant", "modulated", "adapted")

    def __init__(self, kind: str = "constant", K: int = 4, n: int = 4, scale: float = 0.1):
        if kind not in self.KINDS:
            raise ValueError(f"unknown fixture {kind!r}; choose from {self.KINDS}")
        self.kind, self.K, self.n, self.scale = kind, K, n, scale
        g = np.zeros((K, n))
        d = min(K, n)
        g[np.arange(d), np.arange(d)] = 1.0 / np.arange(1, d + 1)
        self.g = scale * g / np.sqrt(np.sum(g * g))

    def factor(self, t, W):
        W = np.asarray(W, float)
        if self.kind == "constant":
            return np.ones(W.shape[:-1])
        if self.kind == "modulated":
            return np.full(W.shape[:-1], 1.0 + 0.5 * math.sin(2 * math.pi * t))
        return 1.0 + 0.5 * np.tanh(W[..., 0])

    def __call__(self, t, W):
        return self.factor(t, W)[..., None, None] * self.g


def stochastic_integral(G: Callable, increments: np.ndarray, dt: float, G_path=None):
    """Left-point sums I_m = sum_{j<m} G(t_j, W_j) dW_j for increments (B, K, M).

    ``G_path`` optionally supplies the path argument to G (defaults to the
    cumulative sum of ``increments``). Returns (I of shape (B, M+1, n),
    hs2 of shape (B, M+1)) where hs2 holds |G(t_m)|_HS^2."""
    inc = np.asarray(increments, float)
    B, K, M = inc.shape
    W = np.zeros((B, K, M + 1))
    np.cumsum(inc, axis=2, out=W[:, :, 1:])
    Wp = W if G_path is None else G_path
    I = None
    hs2 = np.empty((B, M + 1))
    for m in range(M + 1):
        Gm = np.asarray(G(m * dt, Wp[:, :, m]), dtype=np.float64)
        Gm = np.broadcast_to(Gm, (B,) + Gm.shape[-2:])
        if I is None:
            I = np.zeros((B, M + 1, Gm.shape[-1]))
        hs2[:, m] = np.sum(Gm * Gm, axis=(-2, -1))
        if m < M:
            I[:, m + 1] = I[:, m] + np.einsum("bkn,bk->bn", Gm, inc[:, :, m])
    return I, hs2


def ito_statistics(fixture: IntegrandFixture, trials: int, seed: int, M: int = 100, T: float = 1.0,
                   batch: int = 2000) -> dict:
    """Monte Carlo check of E[int G dW] = 0 and E|int G dW|^2 = E int |G|_HS^2 dt at T."""
    dt = T / M
    finals, iso = [], []
    for ids in _trial_batches(trials, batch):
        inc = sample_increments(seed, fixture.K, M, dt, ids)
        I, hs2 = stochastic_integral(fixture, inc, dt)
        finals.append(I[:, -1])
        iso.append(np.sum(I[:, -1] ** 2, axis=-1) - np.sum(hs2[:, :-1], axis=-1) * dt)
    X = np.concatenate(finals)
    D = np.concatenate(iso)
    mean = X.mean(axis=0)
    se = X.std(axis=0, ddof=1) / math.sqrt(len(X))
    dmean, dse = float(D.mean()), float(D.std(ddof=1) / math.sqrt(len(D)))
    zero_ok = bool(np.all(np.abs(mean) <= 3 * se))
    iso_ok = abs(dmean) <= 3 * dse
    return {"fixture": fixture.kind, "trials": trials, "mean": mean.tolist(), "se": se.tolist(),
            "isometry_gap": dmean, "isometry_se": dse,
            "zero_mean_pass": zero_ok, "isometry_pass": bool(iso_ok)}


def bdg_ratio(fixture: IntegrandFixture, r: float, trials: int, seed: int, M: int = 100,
              T: float = 1.0, batch: int = 2000) -> float:
    """E sup_t |int_0^t G dW|^r / E (int_0^T |G|_HS^2 dt)^(r/2)."""
    dt = T / M
    num, den = [], []
    for ids in _trial_batches(trials, batch):
        inc = sample_increments(seed, fixture.K, M, dt, ids)
        I, hs2 = stochastic_integral(fixture, inc, dt)
        num.append(np.max(np.sum(I * I, axis=-1), axis=-1) ** (r / 2))
        den.append((np.sum(hs2[:, :-1], axis=-1) * dt) ** (r / 2))
    return float(np.mean(np.concatenate(num)) / np.mean(np.concatenate(den)))


def integral_convergence_check(G_target: IntegrandFixture, perturbation_schedule: Sequence[float],
                               noise_levels: Sequence[int], trials: int, seed: int, M: int = 1024,
                               T: float = 1.0, eps: float = 1e-2, final_max: float = 0.05,
                               batch: int = 64) -> dict:
    """Exceedance table P(|int G^d dW^l - int G dW|_{L2([0,T]; X)} > eps).

    Rows: G^d = G + d * P with P a fixed unit-HS perturbation (evaluated on the
    mollified path), ordered as given (coarse to fine). Columns: W^l the
    piecewise-linear interpolation of W through 2**level + 1 nodes. All cells
    share the same trials."""
    deltas = [float(d) for d in perturbation_schedule]
    levels = [int(lv) for lv in noise_levels]
    dt = T / M
    K, n = G_target.K, G_target.n
    P = np.zeros((K, n))
    P[0, :] = 1.0
    P[:, 0] += 1.0
    P /= np.sqrt(np.sum(P * P))
    counts = np.zeros((len(deltas), len(levels)), dtype=np.int64)
    worst = np.zeros((len(deltas), len(levels)))
    c = _trapezoid_weights(M + 1, dt)
    for ids in _trial_batches(trials, batch):
        inc = sample_increments(seed, K, M, dt, ids)
        I, _ = stochastic_integral(G_target, inc, dt)
        for j, lv in enumerate(levels):
            mol = np.array([mollify_path(NoisePath(K, M, dt, inc[b], seed, i), lv).increments
                            for b, i in enumerate(ids)])
            for i, d in enumerate(deltas):
                def Gd(t, W, d=d):
                    return G_target(t, W) + d * P
                In, _ = stochastic_integral(Gd, mol, dt)
                diff = In - I
                dist = np.sqrt(np.sum(c * np.sum(diff * diff, axis=-1), axis=-1))
                counts[i, j] += int(np.sum(dist > eps))
                worst[i, j] = max(worst[i, j], float(np.max(dist)))
    table = counts / trials
    rows_ok = bool(np.all(np.diff(table, axis=1) <= 0))
    cols_ok = bool(np.all(np.diff(table, axis=0) <= 0))
    final = float(table[-1, -1])
    return {"fixture": G_target.kind, "perturbations": deltas, "levels": levels, "trials": trials,
            "eps": eps, "M": M, "T": T, "table": table.tolist(), "max_distance": worst.tolist(),
            "monotone": rows_ok and cols_ok, "final": final,
            "verdict": bool(rows_ok and cols_ok and final < final_max)}
