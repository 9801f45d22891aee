"""Closed-form pricing: vanilla calls/puts, foreign-currency-strike options,
geometric-mean baskets, and FX options under two-country Vasicek rates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import payoff as pl
from .errors import InvalidInput, WeightsNotSimplex
from .problem import BlackScholesProblem, symmetric_min_eigenvalue, PSD_TOL_FACTOR

__all__ = [
    "norm_cdf",
    "bs_vanilla",
    "ForeignStrikeParams",
    "price_foreign_strike",
    "GeometricBasketParams",
    "price_geometric_basket",
    "vasicek_bond",
    "vasicek_short_rate_from_bond",
    "VasicekFxParams",
    "fx_vol_integral",
    "price_fx_option_vasicek",
    "PiecewiseLinearPayoff",
    "piecewise_linear_payoff",
    "price_reduced_closed_form",
]


def norm_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function (abs error < 1e-15)."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def bs_vanilla(
    spot: float,
    strike: float,
    vol: float,
    rate: float,
    carry_dividend: float,
    tau: float,
    kind: str = "call",
) -> float:
    """Black-Scholes price of a European call or put.

    ``carry_dividend`` is the continuous carry rate of the underlying (may be
    negative for synthetic assets).  tau = 0 or vol = 0 return the discounted
    intrinsic value on the deterministic forward.
    """
    if not (spot > 0.0 and strike > 0.0):
        raise InvalidInput("spot and strike must be positive")
    if vol < 0.0 or tau < 0.0:
        raise InvalidInput("vol and tau must be nonnegative")
    if kind not in ("call", "put"):
        raise InvalidInput(f"kind must be 'call' or 'put', got {kind!r}")
    q = carry_dividend
    sd = vol * math.sqrt(tau)
    disc_r = math.exp(-rate * tau)
    disc_q = math.exp(-q * tau)
    if sd == 0.0:
        forward = spot * math.exp((rate - q) * tau)
        intrinsic = forward - strike if kind == "call" else strike - forward
        return disc_r * max(intrinsic, 0.0)
    d1 = (math.log(spot / strike) + (rate - q + 0.5 * vol * vol) * tau) / sd
    d2 = d1 - sd
    call = spot * disc_q * norm_cdf(d1) - strike * disc_r * norm_cdf(d2)
    if kind == "call":
        return call
    return call - spot * disc_q + strike * disc_r  # put-call parity


# ---------------------------------------------------------------------------
# options with a strike in a different currency


@dataclass(frozen=True)
class ForeignStrikeParams:
    """A stock quoted in pounds with a fixed dollar strike.

    sigma_s, sigma_x are lognormal vols of the stock and the dollar/pound
    rate, rho their correlation; rate_d / rate_p the dollar and pound short
    rates; stock in pounds, fx in dollars per pound, strike_d in dollars.
    """

    sigma_s: float
    sigma_x: float
    rho: float
    rate_d: float
    rate_p: float
    stock: float
    fx: float
    strike_d: float
    maturity: float
    t: float = 0.0

    def __post_init__(self):
        if self.sigma_s < 0 or self.sigma_x < 0:
            raise InvalidInput("vols must be nonnegative")
        if not -1.0 < self.rho < 1.0:
            raise InvalidInput("correlation must lie in (-1, 1)")
        if min(self.stock, self.fx, self.strike_d) <= 0:
            raise InvalidInput("stock, fx and strike must be positive")
        if self.t > self.maturity:
            raise InvalidInput("t must not exceed maturity")

    @property
    def combined_variance(self) -> float:
        """Variance rate of the dollar-quoted stock S*X."""
        return (
            self.sigma_s**2
            + 2.0 * self.rho * self.sigma_s * self.sigma_x
            + self.sigma_x**2
        )


def price_foreign_strike(p: ForeignStrikeParams) -> Tuple[float, float]:
    """Dollar and pound prices of the call on the dollar value of the stock.

    The product S*X is a single lognormal asset with variance rate
    sigma_s^2 + 2 rho sigma_s sigma_x + sigma_x^2, so the dollar price is a
    vanilla call on S*X; the pound price is V_d / X.
    """
    tau = p.maturity - p.t
    v_d = bs_vanilla(
        p.stock * p.fx, p.strike_d, math.sqrt(p.combined_variance),
        p.rate_d, 0.0, tau, "call",
    )
    return v_d, v_d / p.fx


# ---------------------------------------------------------------------------
# geometric-mean basket


@dataclass(frozen=True)
class GeometricBasketParams:
    spots: np.ndarray
    weights: np.ndarray
    cov: np.ndarray
    dividends: np.ndarray
    rate: float
    strike: float
    maturity: float
    t: float = 0.0

    def __post_init__(self):
        spots = np.asarray(self.spots, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        div = np.asarray(self.dividends, dtype=float)
        m = spots.size
        if weights.size != m or div.size != m or cov.shape != (m, m):
            raise InvalidInput("inconsistent basket dimensions")
        if np.any(spots <= 0) or self.strike <= 0:
            raise InvalidInput("spots and strike must be positive")
        if np.any(weights < 0) or abs(float(np.sum(weights)) - 1.0) > 1e-12:
            raise WeightsNotSimplex("weights must be nonnegative and sum to 1")
        if symmetric_min_eigenvalue(cov) < -PSD_TOL_FACTOR * max(np.trace(cov), 0.0):
            raise InvalidInput("covariance must be positive semidefinite")
        if self.t > self.maturity:
            raise InvalidInput("t must not exceed maturity")
        for name, val in (("spots", spots), ("weights", weights), ("cov", cov), ("dividends", div)):
            arr = np.array(val, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def price_geometric_basket(p: GeometricBasketParams) -> float:
    """Call on the weighted geometric mean of the basket.

    The geometric mean is lognormal with variance rate
    sigma_hat^2 = w' A w and carry
    q_hat = sum (q_i + a_ii/2) w_i - sigma_hat^2 / 2, so the price is a
    vanilla call on prod S_i^{w_i}.
    """
    w = p.weights
    sig2 = float(w @ p.cov @ w)
    q_hat = float(np.sum((p.dividends + 0.5 * np.diag(p.cov)) * w)) - 0.5 * sig2
    gmean = float(np.prod(p.spots**w))
    tau = p.maturity - p.t
    return bs_vanilla(gmean, p.strike, math.sqrt(sig2), p.rate, q_hat, tau, "call")


# ---------------------------------------------------------------------------
# Vasicek bonds and the two-country FX option

_GL64 = leggauss(64)
_GL32 = leggauss(32)


def _vasicek_b(a: float, tau: float) -> float:
    x = a * tau
    if x < 1e-4:
        # series branch: avoids cancellation for tiny mean reversion
        return tau * (1.0 - x / 2.0 + x * x / 6.0 - x**3 / 24.0 + x**4 / 120.0)
    return -math.expm1(-x) / a


def _vasicek_log_a(tau: float, a: float, b_adj: float, sig2: float) -> float:
    x = a * tau
    if x >= 1e-3:
        big_b = _vasicek_b(a, tau)
        theta = b_adj / a - sig2 / (2.0 * a * a)
        return (big_b - tau) * theta - sig2 * big_b * big_b / (4.0 * a)
    # (ln A)' = sig2 B^2 / 2 - b_adj B; quadrature sidesteps the 1/a^2 cancellation
    nodes, weights = _GL32
    s = 0.5 * tau * (nodes + 1.0)
    bb = np.array([_vasicek_b(a, si) for si in s])
    integrand = 0.5 * sig2 * bb * bb - b_adj * bb
    return 0.5 * tau * float(np.sum(weights * integrand))


def vasicek_bond(
    r: float, tau: float, a: float, b: float, lam: float, sigma_len: float
) -> Tuple[float, float]:
    """Zero-coupon bond price and its exponent slope under a Vasicek rate.

    dr = (b - a r) dt + sigma dW with market price of risk lam gives
    p = A(tau) exp(-B(tau) r), B = (1 - e^{-a tau}) / a, with the drift
    risk-adjusted to b - lam * |sigma|.  Returns (p, B).
    """
    if a <= 0.0:
        raise InvalidInput("mean reversion speed must be positive")
    if tau < 0.0:
        raise InvalidInput("tau must be nonnegative")
    if sigma_len < 0.0:
        raise InvalidInput("sigma length must be nonnegative")
    big_b = _vasicek_b(a, tau)
    log_a = _vasicek_log_a(tau, a, b - lam * sigma_len, sigma_len * sigma_len)
    return math.exp(log_a - big_b * r), big_b


def vasicek_short_rate_from_bond(
    p: float, tau: float, a: float, b: float, lam: float, sigma_len: float
) -> float:
    """Invert the bond price map: r = (ln A(tau) - ln p) / B(tau)."""
    if p <= 0.0:
        raise InvalidInput("bond price must be positive")
    if tau <= 0.0:
        raise InvalidInput("tau must be positive to invert the bond map")
    if a <= 0.0:
        raise InvalidInput("mean reversion speed must be positive")
    big_b = _vasicek_b(a, tau)
    log_a = _vasicek_log_a(tau, a, b - lam * sigma_len, sigma_len * sigma_len)
    return (log_a - math.log(p)) / big_b


@dataclass(frozen=True)
class VasicekFxParams:
    """Two Vasicek short rates plus a lognormal exchange rate on a shared
    3-dimensional Brownian driver.

    b1, b2 are the short-rate drift levels in each market's own risk-neutral
    measure; under the domestic measure the foreign rate picks up the quanto
    correction -sigma2.sigma3 and the implied price of foreign market risk is
    lambda2 = -sigma2.sigma3 / |sigma2|.
    """

    a1: float
    a2: float
    b1: float
    b2: float
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray
    strike: float
    maturity: float

    def __post_init__(self):
        if self.a1 <= 0 or self.a2 <= 0:
            raise InvalidInput("mean reversion speeds must be positive")
        if self.strike <= 0 or self.maturity <= 0:
            raise InvalidInput("strike and maturity must be positive")
        for name in ("sigma1", "sigma2", "sigma3"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise InvalidInput(f"{name} must be a finite 3-vector")
            v = np.array(v)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def lambda1(self) -> float:
        return 0.0

    @property
    def lambda2(self) -> float:
        """Price of foreign market risk implied by the quanto correction."""
        n = float(np.linalg.norm(self.sigma2))
        if n == 0.0:
            return 0.0
        return -float(self.sigma2 @ self.sigma3) / n

    @property
    def gram_determinant(self) -> float:
        m = np.vstack([self.sigma1, self.sigma2, self.sigma3])
        return float(np.linalg.det(m @ m.T))

    def check_vector_independence(self, tol: float = 1e-12) -> bool:
        """Whether the three volatility vectors are linearly independent."""
        return self.gram_determinant > tol

    def domestic_bond(self, r1: float, tau: float) -> Tuple[float, float]:
        return vasicek_bond(r1, tau, self.a1, self.b1, 0.0, float(np.linalg.norm(self.sigma1)))

    def foreign_bond(self, r2: float, tau: float) -> Tuple[float, float]:
        # in the foreign market's own measure the drift level is b2: the
        # quanto correction and lambda2 * |sigma2| cancel exactly
        return vasicek_bond(r2, tau, self.a2, self.b2, 0.0, float(np.linalg.norm(self.sigma2)))


def fx_vol_integral(t: float, big_t: float, p: VasicekFxParams) -> float:
    """Integrated variance of the bond-ratio forward FX rate on [t, T]:
    integral of |B1(u,T) sigma1 - B2(u,T) sigma2 + sigma3|^2 du,
    by 64-point Gauss-Legendre quadrature."""
    if t > big_t:
        raise InvalidInput("t must not exceed T")
    if t == big_t:
        return 0.0
    nodes, weights = _GL64
    u = 0.5 * (big_t - t) * (nodes + 1.0) + t
    b1 = np.array([_vasicek_b(p.a1, big_t - ui) for ui in u])
    b2 = np.array([_vasicek_b(p.a2, big_t - ui) for ui in u])
    vec = (
        b1[:, None] * p.sigma1[None, :]
        - b2[:, None] * p.sigma2[None, :]
        + p.sigma3[None, :]
    )
    integrand = np.sum(vec * vec, axis=1)
    return 0.5 * (big_t - t) * float(np.sum(weights * integrand))


def price_fx_option_vasicek(
    p1: float, p2: float, fx: float, t: float, p: VasicekFxParams
) -> float:
    """European call on the exchange rate, struck at p.strike, quoted off the
    two zero-coupon bond prices: V = p2 F N(d1) - K p1 N(d2)."""
    if p1 <= 0.0 or p2 <= 0.0:
        raise InvalidInput("bond prices must be positive")
    if fx <= 0.0:
        raise InvalidInput("exchange rate must be positive")
    k = p.strike
    sig2 = fx_vol_integral(t, p.maturity, p)
    sig = math.sqrt(sig2)
    if sig == 0.0:
        return max(p2 * fx - k * p1, 0.0)
    d1 = (math.log(p2 * fx / (p1 * k)) + 0.5 * sig2) / sig
    d2 = d1 - sig
    value = p2 * fx * norm_cdf(d1) - k * p1 * norm_cdf(d2)
    # the same price must come out of the numeraire-reduced form: V = p1 * U(y)
    y = p2 * fx / p1
    d1_bar = (math.log(y / k) + 0.5 * sig2) / sig
    d2_bar = d1_bar - sig
    alt = p1 * (y * norm_cdf(d1_bar) - k * norm_cdf(d2_bar))
    if abs(value - alt) > 1e-14 * max(abs(value), abs(alt), 1e-300):
        raise ArithmeticError(
            f"internal identity violated: direct {value!r} vs numeraire route {alt!r}"
        )
    return value


# ---------------------------------------------------------------------------
# piecewise-linear payoff recognition for closed-form dispatch


@dataclass(frozen=True)
class PiecewiseLinearPayoff:
    """payoff(s) = slope*s + intercept + sum_i beta_i * max(s - strike_i, 0)."""

    slope: float
    intercept: float
    kinks: Tuple[Tuple[float, float], ...]  # (beta, strike), strikes ascending


def _const_value(e: pl.PayoffExpr) -> Optional[float]:
    if pl.max_symbol_index(e) >= 0:
        return None
    try:
        return float(pl.eval_payoff(e, np.array([1.0])))
    except Exception:
        return None


def _affine_1d(e: pl.PayoffExpr) -> Optional[Tuple[float, float]]:
    c = _const_value(e)
    if c is not None:
        return (0.0, c)
    if isinstance(e, pl.Symbol):
        return (1.0, 0.0) if e.index == 0 else None
    if isinstance(e, (pl.Add, pl.Sub)):
        l = _affine_1d(e.left)
        r = _affine_1d(e.right)
        if l is None or r is None:
            return None
        sign = 1.0 if isinstance(e, pl.Add) else -1.0
        return (l[0] + sign * r[0], l[1] + sign * r[1])
    if isinstance(e, pl.Neg):
        o = _affine_1d(e.operand)
        return None if o is None else (-o[0], -o[1])
    if isinstance(e, pl.Mul):
        cl = _const_value(e.left)
        cr = _const_value(e.right)
        if cl is not None:
            o = _affine_1d(e.right)
            return None if o is None else (cl * o[0], cl * o[1])
        if cr is not None:
            o = _affine_1d(e.left)
            return None if o is None else (cr * o[0], cr * o[1])
        return None
    if isinstance(e, pl.Div):
        cr = _const_value(e.right)
        if cr is None or cr == 0.0:
            return None
        o = _affine_1d(e.left)
        return None if o is None else (o[0] / cr, o[1] / cr)
    if isinstance(e, pl.PowConst):
        if e.exponent == 1.0:
            return _affine_1d(e.base)
        return None
    return None


def _upper_envelope(lines: List[Tuple[float, float]]) -> Tuple[float, float, List[Tuple[float, float]]]:
    """Decompose max of affine lines over s in (0, inf) into base + call kinks."""
    by_slope: dict = {}
    for a, b in lines:
        if a not in by_slope or b > by_slope[a]:
            by_slope[a] = b
    cand = sorted(by_slope.items())
    hull: List[Tuple[float, float]] = []

    def isect(l1, l2):
        return (l1[1] - l2[1]) / (l2[0] - l1[0])

    for line in cand:
        while hull:
            if len(hull) >= 2 and isect(hull[-1], line) <= isect(hull[-2], hull[-1]):
                hull.pop()
            elif len(hull) == 1 and line[1] >= hull[0][1]:
                # steeper line dominates everywhere it matters only if it
                # starts at least as high; otherwise both survive
                hull.pop()
            else:
                break
        hull.append(line)
    breaks = [isect(hull[i], hull[i + 1]) for i in range(len(hull) - 1)]
    # restrict to s > 0: drop pieces that end at nonpositive breakpoints
    start = 0
    while start < len(breaks) and breaks[start] <= 0.0:
        start += 1
    base = hull[start]
    kinks = [
        (hull[i + 1][0] - hull[i][0], breaks[i])
        for i in range(start, len(breaks))
    ]
    return base[0], base[1], kinks


def _decompose(e: pl.PayoffExpr):
    aff = _affine_1d(e)
    if aff is not None:
        return (aff[0], aff[1], [])
    if isinstance(e, pl.Neg):
        o = _decompose(e.operand)
        if o is None:
            return None
        return (-o[0], -o[1], [(-b, k) for b, k in o[2]])
    if isinstance(e, (pl.Add, pl.Sub)):
        l = _decompose(e.left)
        r = _decompose(e.right)
        if l is None or r is None:
            return None
        sign = 1.0 if isinstance(e, pl.Add) else -1.0
        return (
            l[0] + sign * r[0],
            l[1] + sign * r[1],
            l[2] + [(sign * b, k) for b, k in r[2]],
        )
    if isinstance(e, pl.Mul):
        for const_side, other in ((e.left, e.right), (e.right, e.left)):
            c = _const_value(const_side)
            if c is not None:
                o = _decompose(other)
                if o is None:
                    return None
                return (c * o[0], c * o[1], [(c * b, k) for b, k in o[2]])
        return None
    if isinstance(e, pl.Div):
        c = _const_value(e.right)
        if c is None or c == 0.0:
            return None
        o = _decompose(e.left)
        if o is None:
            return None
        return (o[0] / c, o[1] / c, [(b / c, k) for b, k in o[2]])
    if isinstance(e, (pl.Max, pl.Min)):
        lines = []
        for arg in e.args:
            aff = _affine_1d(arg)
            if aff is None:
                return None
            lines.append(aff)
        if isinstance(e, pl.Min):
            a, b, kinks = _upper_envelope([(-la, -lb) for la, lb in lines])
            return (-a, -b, [(-beta, k) for beta, k in kinks])
        a, b, kinks = _upper_envelope(lines)
        return (a, b, kinks)
    return None


def piecewise_linear_payoff(expr: pl.PayoffExpr) -> Optional[PiecewiseLinearPayoff]:
    """Recognize a single-asset payoff as affine plus call kinks, or None.

    The decomposition is verified numerically at sample points before being
    returned, so a positive result is safe for closed-form pricing.
    """
    if pl.max_symbol_index(expr) > 0:
        return None
    out = _decompose(expr)
    if out is None:
        return None
    slope, intercept, kinks = out
    kinks = tuple(sorted((float(b), float(k)) for b, k in kinks if b != 0.0))
    kinks = tuple((b, k) for b, k in kinks)
    # verify against direct evaluation on a scale-aware sample
    strikes = [k for _, k in kinks]
    scale = max([abs(s) for s in strikes] + [1.0])
    samples = sorted(
        {scale * f for f in (0.01, 0.25, 0.5, 0.9, 1.0, 1.1, 1.5, 2.0, 4.0, 10.0)}
        | {k * f for k in strikes for f in (0.5, 0.99, 1.0, 1.01, 2.0)}
    )
    for s in samples:
        if s <= 0:
            continue
        direct = float(pl.eval_payoff(expr, np.array([s])))
        recon = slope * s + intercept + sum(b * max(s - k, 0.0) for b, k in kinks)
        tol = 1e-9 * max(abs(direct), abs(recon), 1e-12 * scale)
        if abs(direct - recon) > tol:
            return None
    return PiecewiseLinearPayoff(float(slope), float(intercept), kinks)


def price_reduced_closed_form(problem: BlackScholesProblem, spot: float) -> Optional[float]:
    """Closed-form value of a 1-dimensional problem whose payoff is piecewise
    linear (affine plus call kinks); None when the pattern does not match."""
    if problem.dim != 1:
        return None
    decomp = piecewise_linear_payoff(problem.payoff)
    if decomp is None:
        return None
    if spot <= 0:
        raise InvalidInput("spot must be positive")
    tau = problem.maturity
    r = problem.rate
    q = float(problem.dividends[0])
    vol = math.sqrt(max(float(problem.cov[0, 0]), 0.0))
    value = (
        decomp.slope * spot * math.exp(-q * tau)
        + decomp.intercept * math.exp(-r * tau)
    )
    for beta, strike in decomp.kinks:
        value += beta * bs_vanilla(spot, strike, vol, r, q, tau, "call")
    return value
