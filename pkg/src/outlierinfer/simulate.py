"""Mean-shift simulations: coverage, power and conditional uniformity.

Replications are independent; each gets its own child RNG stream spawned
from (master seed, replication index), so results are identical whether
replications run sequentially or across processes.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import NumericalError, ValidationError
from .detection import detect_cooks
from .inference import (
    estimate_sigma_aug_lasso,
    group_chi2_test,
    make_contrast,
    naive_coefficient_inference,
    naive_group_f_test,
    selective_f_test,
    selective_z_inference,
    two_sided,
)
from .linalg import Dataset, fit_ols, make_dataset


@dataclass(frozen=True)
class MeanShiftSpec:
    """Population side of the mean-shift model mu = X beta* + u*."""

    X: np.ndarray
    beta_star: np.ndarray
    u_star: np.ndarray
    sigma: float

    def __post_init__(self):
        n, p = self.X.shape
        if self.beta_star.shape != (p,) or self.u_star.shape != (n,):
            raise ValidationError("beta_star / u_star shapes do not match X")
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")

    @property
    def mu(self) -> np.ndarray:
        return self.X @ self.beta_star + self.u_star

    @property
    def true_non_outliers(self) -> np.ndarray:
        return np.flatnonzero(self.u_star == 0.0)


def paper_design(n: int, p: int, seed) -> np.ndarray:
    """Intercept column plus standard-normal columns scaled to norm sqrt(n)."""
    rng = np.random.default_rng(seed)
    X = np.empty((n, p))
    X[:, 0] = 1.0
    for j in range(1, p):
        col = rng.standard_normal(n)
        X[:, j] = col * (math.sqrt(n) / np.linalg.norm(col))
    return X


def generate_mean_shift(spec: MeanShiftSpec, seed) -> Dataset:
    """One draw y = mu + sigma*eps as a Dataset (deterministic per seed)."""
    rng = np.random.default_rng(seed)
    y = spec.mu + spec.sigma * rng.standard_normal(spec.X.shape[0])
    has_icept = bool(np.all(spec.X[:, 0] == 1.0))
    return make_dataset(y, spec.X, has_intercept=has_icept)


@dataclass(frozen=True)
class SimReport:
    kind: str
    config: dict
    metrics: dict
    records: list
    seed: int

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "config": self.config,
            "metrics": self.metrics,
            "seed": self.seed,
            "records": self.records,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())
            f.write("\n")

    def write_csv(self, path) -> None:
        import csv

        if not self.records:
            with open(path, "w", newline="") as f:
                f.write("")
            return
        keys = sorted({k for r in self.records for k in r})
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=keys)
            w.writeheader()
            for r in self.records:
                w.writerow(r)


def _rate(flags) -> dict:
    flags = [bool(v) for v in flags]
    n = len(flags)
    if n == 0:
        return {"rate": math.nan, "se": math.nan, "n": 0}
    q = sum(flags) / n
    se = math.sqrt(q * (1.0 - q) / n)
    return {"rate": q, "se": se, "n": n}


# -- coverage -----------------------------------------------------------------


@dataclass(frozen=True)
class CoverageConfig:
    n: int = 100
    p: int = 11
    s: float = 4.0
    cutoff: float = 4.0
    reps: int = 500
    alpha: float = 0.05
    sigma: float = 1.0
    seed: int = 0
    threads: int = 1

    def validate(self) -> None:
        if self.reps < 100:
            raise ValidationError("coverage runs need at least 100 replications")
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if self.n <= self.p + 6:
            raise ValidationError("n too small for the outlier pattern")


def _coverage_spec(cfg: CoverageConfig) -> MeanShiftSpec:
    X = paper_design(cfg.n, cfg.p, np.random.SeedSequence(cfg.seed).spawn(1)[0])
    beta = np.ones(cfg.p)
    beta[1] = 2.0
    u = np.zeros(cfg.n)
    u[:5] = [cfg.s, cfg.s, cfg.s, -cfg.s, -cfg.s]
    return MeanShiftSpec(X=X, beta_star=beta, u_star=u, sigma=cfg.sigma)


def _coverage_rep(cfg: CoverageConfig, spec: MeanShiftSpec, rep: int, child) -> dict:
    rec = {"rep": rep, "status": "ok"}
    data = generate_mean_shift(spec, child)
    try:
        det = detect_cooks(data, cfg.cutoff)
    except ValidationError:
        rec["status"] = "excluded"
        return rec
    try:
        fit = fit_ols(data, det.non_outliers)
        sigma_est = estimate_sigma_aug_lasso(data)
        contrast = make_contrast(fit, data, sigma_est, coefficient=1)
        sel = selective_z_inference(contrast, det.event, alpha=cfg.alpha)
        naive = naive_coefficient_inference(fit, data, 1, alpha=cfg.alpha)
    except NumericalError as exc:
        rec["status"] = "failed"
        rec["error"] = str(exc)
        return rec
    beta_m = float((fit.pseudoinverse() @ spec.mu[fit.subset])[1])
    beta_s = float(spec.beta_star[1])
    rec.update(
        n_outliers=int(det.outliers.size),
        sigma_est=sigma_est,
        beta_m=beta_m,
        select_covers_beta_m=bool(sel.ci[0] <= beta_m <= sel.ci[1]),
        select_covers_beta_star=bool(sel.ci[0] <= beta_s <= sel.ci[1]),
        naive_covers_beta_m=bool(naive.ci[0] <= beta_m <= naive.ci[1]),
        naive_covers_beta_star=bool(naive.ci[0] <= beta_s <= naive.ci[1]),
        select_len=float(sel.ci[1] - sel.ci[0]),
        naive_len=float(naive.ci[1] - naive.ci[0]),
    )
    return rec


def run_coverage(cfg: CoverageConfig) -> SimReport:
    """Coverage of beta^M_1 and beta*_1 for SELECT-EST and naive intervals."""
    cfg.validate()
    spec = _coverage_spec(cfg)
    records = _run_replications(_coverage_rep, cfg, spec)
    ok = [r for r in records if r["status"] == "ok"]
    metrics = {
        "select_est_beta_m": _rate([r["select_covers_beta_m"] for r in ok]),
        "select_est_beta_star": _rate([r["select_covers_beta_star"] for r in ok]),
        "naive_beta_m": _rate([r["naive_covers_beta_m"] for r in ok]),
        "naive_beta_star": _rate([r["naive_covers_beta_star"] for r in ok]),
        "excluded": sum(r["status"] == "excluded" for r in records),
        "failed": sum(r["status"] == "failed" for r in records),
    }
    return SimReport("coverage", asdict(cfg), metrics, records, cfg.seed)


# -- power --------------------------------------------------------------------


@dataclass(frozen=True)
class PowerConfig:
    n: int = 100
    p: int = 11
    s: float = 4.0
    cutoff: float = 4.0
    reps: int = 500
    alpha: float = 0.05
    sigma: float = 1.0
    seed: int = 0
    threads: int = 1
    beta1: float = 0.0
    test: str = "coefficient"     # or "group"

    def validate(self) -> None:
        if self.reps < 1:
            raise ValidationError("power runs need at least one replication")
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if self.test not in ("coefficient", "group"):
            raise ValidationError("test must be 'coefficient' or 'group'")


def _power_spec(cfg: PowerConfig) -> MeanShiftSpec:
    X = paper_design(cfg.n, cfg.p, np.random.SeedSequence(cfg.seed).spawn(1)[0])
    if cfg.test == "coefficient":
        beta = np.ones(cfg.p)
    else:
        beta = np.zeros(cfg.p)
        beta[0] = 1.0
    beta[1] = cfg.beta1
    u = np.zeros(cfg.n)
    u[:5] = [cfg.s, cfg.s, cfg.s, -cfg.s, -cfg.s]
    return MeanShiftSpec(X=X, beta_star=beta, u_star=u, sigma=cfg.sigma)


def _power_rep(cfg: PowerConfig, spec: MeanShiftSpec, rep: int, child) -> dict:
    rec = {"rep": rep, "status": "ok"}
    data = generate_mean_shift(spec, child)
    try:
        det = detect_cooks(data, cfg.cutoff)
    except ValidationError:
        rec["status"] = "excluded"
        return rec
    try:
        fit = fit_ols(data, det.non_outliers)
        sigma_est = estimate_sigma_aug_lasso(data)
        if cfg.test == "coefficient":
            naive_p = naive_coefficient_inference(fit, data, 1, cfg.alpha).p_value
            contrast = make_contrast(fit, data, sigma_est, coefficient=1)
            est_p = selective_z_inference(contrast, det.event, cfg.alpha).p_two_sided
            exact_p = two_sided(
                selective_f_test(fit, data, [1], det.event).p_value
            )
        else:
            group = list(range(1, cfg.p))
            naive_p = naive_group_f_test(fit, data, group).p_value
            est_p = group_chi2_test(fit, data, group, det.event, sigma_est).p_value
            exact_p = selective_f_test(fit, data, group, det.event).p_value
    except NumericalError as exc:
        rec["status"] = "failed"
        rec["error"] = str(exc)
        return rec
    rec.update(naive_p=naive_p, select_est_p=est_p, select_exact_p=exact_p)
    return rec


def run_power(cfg: PowerConfig) -> SimReport:
    """Rejection rates at level alpha for naive / SELECT-EST / SELECT-EXACT."""
    cfg.validate()
    spec = _power_spec(cfg)
    records = _run_replications(_power_rep, cfg, spec)
    ok = [r for r in records if r["status"] == "ok"]
    a = cfg.alpha
    metrics = {
        "naive": _rate([r["naive_p"] <= a for r in ok]),
        "select_est": _rate([r["select_est_p"] <= a for r in ok]),
        "select_exact": _rate([r["select_exact_p"] <= a for r in ok]),
        "excluded": sum(r["status"] == "excluded" for r in records),
        "failed": sum(r["status"] == "failed" for r in records),
    }
    return SimReport("power", asdict(cfg), metrics, records, cfg.seed)


# -- conditional uniformity -----------------------------------------------------


@dataclass(frozen=True)
class UniformityConfig:
    n: int = 50
    p: int = 3
    cutoff: float = 3.0
    accepted: int = 2000
    sigma: float = 1.0
    seed: int = 0
    batch: int = 20000
    max_draws: int = 5_000_000

    def validate(self) -> None:
        if self.accepted < 10:
            raise ValidationError("need at least 10 accepted replications")
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")


def run_uniformity(cfg: UniformityConfig) -> SimReport:
    """KS uniformity of selective p-values conditional on {M_hat = [n]}.

    Samples y from the null mean (beta*_1 = 0, no true outliers), keeps
    draws whose Cook's detection flags nothing, and tests the selective
    z and F p-values for the first slope against U(0, 1); naive t
    p-values are recorded for contrast.
    """
    cfg.validate()
    root = np.random.SeedSequence(cfg.seed)
    design_seed, noise_seed = root.spawn(2)
    X = paper_design(cfg.n, cfg.p, design_seed)
    beta = np.ones(cfg.p)
    beta[1] = 0.0
    spec = MeanShiftSpec(X=X, beta_star=beta, u_star=np.zeros(cfg.n), sigma=cfg.sigma)
    mu = spec.mu

    q, _ = np.linalg.qr(X)
    n, p = cfg.n, cfg.p
    rng = np.random.default_rng(noise_seed)

    accepted_y = []
    drawn = 0
    while len(accepted_y) < cfg.accepted and drawn < cfg.max_draws:
        Y = mu[None, :] + cfg.sigma * rng.standard_normal((cfg.batch, n))
        drawn += cfg.batch
        E = Y - (Y @ q) @ q.T
        ss = np.einsum("ij,ij->i", E, E)
        sig2 = ss / (n - p)
        lev = np.sum(q * q, axis=1)
        D = E**2 / (p * sig2[:, None]) * (lev / (1.0 - lev) ** 2)[None, :]
        keep = ~np.any(D >= cfg.cutoff / n, axis=1)
        for row in Y[keep]:
            accepted_y.append(row)
            if len(accepted_y) == cfg.accepted:
                break
        if drawn >= 10 * cfg.batch and len(accepted_y) < 1e-3 * drawn:
            raise NumericalError(
                f"acceptance rate {len(accepted_y)/drawn:.2e} below 1e-3; "
                "configuration impractical for rejection sampling"
            )
    if len(accepted_y) < cfg.accepted:
        raise NumericalError(
            f"only {len(accepted_y)} draws accepted within max_draws={cfg.max_draws}"
        )

    records = []
    for i, y in enumerate(accepted_y):
        data = make_dataset(y, X, has_intercept=True)
        det = detect_cooks(data, cfg.cutoff)
        fit = fit_ols(data, det.non_outliers)
        contrast = make_contrast(fit, data, cfg.sigma, coefficient=1)
        z_p = selective_z_inference(contrast, det.event).p_value
        f_p = selective_f_test(fit, data, [1], det.event).p_value
        naive_p = naive_coefficient_inference(fit, data, 1).p_value
        records.append({"rep": i, "z_p": z_p, "f_p": f_p, "naive_p": naive_p})

    z_ks = stats.kstest([r["z_p"] for r in records], "uniform")
    f_ks = stats.kstest([r["f_p"] for r in records], "uniform")
    naive_ks = stats.kstest([r["naive_p"] for r in records], "uniform")
    metrics = {
        "acceptance_rate": len(records) / drawn,
        "draws": drawn,
        "z_ks_stat": float(z_ks.statistic),
        "z_ks_p": float(z_ks.pvalue),
        "f_ks_stat": float(f_ks.statistic),
        "f_ks_p": float(f_ks.pvalue),
        "naive_ks_stat": float(naive_ks.statistic),
        "naive_ks_p": float(naive_ks.pvalue),
    }
    return SimReport("uniformity", asdict(cfg), metrics, records, cfg.seed)


# -- replication driver ----------------------------------------------------------


def _run_replications(rep_fn, cfg, spec) -> list:
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.reps + 1)[1:]
    threads = getattr(cfg, "threads", 1) or 1
    if threads <= 1:
        return [rep_fn(cfg, spec, i, children[i]) for i in range(cfg.reps)]
    chunks = np.array_split(np.arange(cfg.reps), threads * 4)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(_rep_chunk, rep_fn, cfg, spec, chunk.tolist(), cfg.seed)
            for chunk in chunks
            if chunk.size
        ]
        records = []
        for fut in futures:
            records.extend(fut.result())
    records.sort(key=lambda r: r["rep"])
    return records


def _rep_chunk(rep_fn, cfg, spec, indices, seed):
    children = np.random.SeedSequence(seed).spawn(max(indices) + 2)[1:]
    return [rep_fn(cfg, spec, i, children[i]) for i in indices]
