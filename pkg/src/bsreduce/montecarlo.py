"""Monte-Carlo oracles: exact-step lognormal sampling and a three-factor
Vasicek/FX simulator, both on deterministic counter-based random streams."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import payoff as pl
from .errors import FactorizationFailure, InvalidInput
from .pricers import VasicekFxParams, _vasicek_b
from .problem import PSD_TOL_FACTOR, BlackScholesProblem
from .rng import stream_normals

__all__ = ["McConfig", "PriceEstimate", "mc_terminal_samples", "mc_price",
           "mc_price_vasicek_fx"]

# fixed chunk boundaries keep sums bit-identical for any worker count
_CHUNK_DOUBLES = 1 << 23


def _max_workers() -> int:
    cap = os.environ.get("BSREDUCE_THREADS")
    try:
        cap = int(cap) if cap else 1
    except ValueError:
        cap = 1
    return max(1, min(cap, os.cpu_count() or 1))


def _run_chunks(worker, chunks):
    """Evaluate worker over chunk descriptors, combining results in order."""
    n_workers = _max_workers()
    if n_workers == 1 or len(chunks) <= 1:
        return [worker(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(worker, chunks))


@dataclass(frozen=True)
class McConfig:
    """Simulation settings; results are deterministic given the seed."""

    n_paths: int
    n_steps: int = 1
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise InvalidInput("n_paths must be at least 1")
        if self.n_steps < 1:
            raise InvalidInput("n_steps must be at least 1")
        if self.antithetic and self.n_paths % 2 != 0:
            raise InvalidInput("antithetic sampling needs an even path count")


@dataclass(frozen=True)
class PriceEstimate:
    value: float
    std_error: Optional[float] = None
    grid_error: Optional[float] = None

    def __post_init__(self):
        if self.std_error is not None and self.std_error < 0:
            raise InvalidInput("std_error must be nonnegative")


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Eigen-based factor L with L L' = cov, valid for semidefinite matrices."""
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    if w.min(initial=0.0) < -PSD_TOL_FACTOR * max(np.trace(cov), 0.0):
        raise FactorizationFailure(
            f"covariance min eigenvalue {w.min():.3e} below PSD tolerance"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


def _base_normals(cfg: McConfig, path_lo: int, path_hi: int, per_path: int) -> np.ndarray:
    """Normals for paths [path_lo, path_hi), shape (n, per_path).

    With antithetic sampling path 2j+1 reuses the negated draws of path 2j;
    the stream position of a path depends only on its index.
    """
    if not cfg.antithetic:
        flat = stream_normals(cfg.seed, path_lo * per_path, (path_hi - path_lo) * per_path)
        return flat.reshape(path_hi - path_lo, per_path)
    base_lo, base_hi = path_lo // 2, (path_hi + 1) // 2
    flat = stream_normals(cfg.seed, base_lo * per_path, (base_hi - base_lo) * per_path)
    base = flat.reshape(base_hi - base_lo, per_path)
    out = np.repeat(base, 2, axis=0)
    out[1::2] *= -1.0
    return out[(path_lo - 2 * base_lo):(path_lo - 2 * base_lo) + (path_hi - path_lo)]


def _chunk_ranges(n_paths: int, per_path: int) -> list:
    chunk = max(2, (_CHUNK_DOUBLES // max(per_path, 1)) & ~1)
    return [(lo, min(lo + chunk, n_paths)) for lo in range(0, n_paths, chunk)]


def mc_terminal_samples(
    problem: BlackScholesProblem, spots: Sequence[float], cfg: McConfig
) -> np.ndarray:
    """Exact lognormal terminal samples, shape (n_paths, dim):
    S_i(T) = S_i(0) exp((r - q_i - a_ii/2) T + sqrt(T) (L z)_i)."""
    spots = np.asarray(spots, dtype=float)
    if spots.shape != (problem.dim,) or np.any(spots <= 0):
        raise InvalidInput("spots must be positive with one entry per asset")
    factor = _psd_factor(problem.cov)
    drift = (problem.rate - problem.dividends - 0.5 * np.diag(problem.cov)) * problem.maturity
    sqrt_t = math.sqrt(problem.maturity)

    def worker(rng_range):
        lo, hi = rng_range
        z = _base_normals(cfg, lo, hi, problem.dim)
        return spots[None, :] * np.exp(drift[None, :] + sqrt_t * (z @ factor.T))

    parts = _run_chunks(worker, _chunk_ranges(cfg.n_paths, problem.dim))
    return np.vstack(parts)


def _estimate(discounted: np.ndarray, antithetic: bool) -> PriceEstimate:
    if antithetic:
        discounted = 0.5 * (discounted[0::2] + discounted[1::2])
    m = discounted.size
    mean = float(np.mean(discounted))
    if m < 2:
        return PriceEstimate(mean, 0.0)
    sd = float(np.std(discounted, ddof=1))
    return PriceEstimate(mean, sd / math.sqrt(m))


def mc_price(
    problem: BlackScholesProblem, spots: Sequence[float], cfg: McConfig
) -> PriceEstimate:
    """Discounted expected payoff over exact terminal samples."""
    samples = mc_terminal_samples(problem, spots, cfg)
    payoff_vals = np.asarray(pl.eval_payoff(problem.payoff, samples.T), dtype=float)
    discounted = math.exp(-problem.rate * problem.maturity) * payoff_vals
    return _estimate(discounted, cfg.antithetic)


# ---------------------------------------------------------------------------
# three-factor Vasicek / Garman-Kohlhagen simulator


def _step_moments(p: VasicekFxParams, dt: float):
    """Exact one-step noise covariance of (r1, r2, ln F) increments and the
    OU decay/level terms."""
    s1, s2, s3 = p.sigma1, p.sigma2, p.sigma3
    c = np.empty((3, 3))
    c[0, 0] = float(s1 @ s1) * _vasicek_b(2.0 * p.a1, dt)
    c[1, 1] = float(s2 @ s2) * _vasicek_b(2.0 * p.a2, dt)
    c[2, 2] = float(s3 @ s3) * dt
    c[0, 1] = c[1, 0] = float(s1 @ s2) * _vasicek_b(p.a1 + p.a2, dt)
    c[0, 2] = c[2, 0] = float(s1 @ s3) * _vasicek_b(p.a1, dt)
    c[1, 2] = c[2, 1] = float(s2 @ s3) * _vasicek_b(p.a2, dt)
    w, v = np.linalg.eigh(c)
    factor = v * np.sqrt(np.clip(w, 0.0, None))
    decay1 = math.exp(-p.a1 * dt)
    decay2 = math.exp(-p.a2 * dt)
    level1 = p.b1 * _vasicek_b(p.a1, dt)
    # quanto-adjusted foreign drift under the domestic measure
    level2 = (p.b2 - float(s2 @ s3)) * _vasicek_b(p.a2, dt)
    return factor, decay1, decay2, level1, level2


def mc_price_vasicek_fx(
    p: VasicekFxParams, state0: Tuple[float, float, float], cfg: McConfig
) -> PriceEstimate:
    """Simulate (r1, r2, F) under the domestic risk-neutral measure and price
    the call max(F(T) - K, 0) discounted along the simulated domestic rate.

    Rates use the exact Ornstein-Uhlenbeck transition jointly with the
    log-Euler FX step; the rate integrals (FX drift and discounting) are
    accumulated by the trapezoid rule.
    """
    if cfg.n_steps < 64:
        raise InvalidInput("Vasicek FX simulation needs n_steps >= 64")
    r1_0, r2_0, f_0 = (float(x) for x in state0)
    if f_0 <= 0:
        raise InvalidInput("spot exchange rate must be positive")
    dt = p.maturity / cfg.n_steps
    factor, decay1, decay2, level1, level2 = _step_moments(p, dt)
    half_var3 = 0.5 * float(p.sigma3 @ p.sigma3) * dt
    per_path = 3 * cfg.n_steps

    def worker(rng_range):
        lo, hi = rng_range
        z = _base_normals(cfg, lo, hi, per_path).reshape(hi - lo, cfg.n_steps, 3)
        m = hi - lo
        r1 = np.full(m, r1_0)
        r2 = np.full(m, r2_0)
        log_f = np.full(m, math.log(f_0))
        disc = np.zeros(m)
        for step in range(cfg.n_steps):
            shocks = z[:, step, :] @ factor.T
            r1_new = decay1 * r1 + level1 + shocks[:, 0]
            r2_new = decay2 * r2 + level2 + shocks[:, 1]
            rate_gap = 0.5 * ((r1 + r1_new) - (r2 + r2_new)) * dt
            log_f += rate_gap - half_var3 + shocks[:, 2]
            disc += 0.5 * (r1 + r1_new) * dt
            r1, r2 = r1_new, r2_new
        payoff_vals = np.maximum(np.exp(log_f) - p.strike, 0.0)
        return np.exp(-disc) * payoff_vals

    parts = _run_chunks(worker, _chunk_ranges(cfg.n_paths, per_path))
    return _estimate(np.concatenate(parts), cfg.antithetic)
