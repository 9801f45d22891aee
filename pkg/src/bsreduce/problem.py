"""Domain types for multi-asset terminal-value pricing problems."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from . import payoff as pl
from .errors import InvalidInput, NotPSD, NotSymmetric

MAX_DIM = 16

__all__ = [
    "BlackScholesProblem",
    "MultiplicativeTransform",
    "ParabolicProblem",
    "ProductStep",
    "NumeraireStep",
    "ReductionPlan",
    "symmetric_min_eigenvalue",
    "PSD_TOL_FACTOR",
    "SYM_TOL_FACTOR",
]

# minimum eigenvalue must be >= -PSD_TOL_FACTOR * trace(A)
PSD_TOL_FACTOR = 1e-10
# asymmetry must be <= SYM_TOL_FACTOR * max|entry|
SYM_TOL_FACTOR = 1e-12


def symmetric_min_eigenvalue(m: np.ndarray, sym_tol: float = SYM_TOL_FACTOR) -> float:
    """Minimum eigenvalue of a (nearly) symmetric matrix.

    Raises NotSymmetric when the asymmetry exceeds sym_tol * max|entry|.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInput("matrix must be square")
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > sym_tol * max(scale, 1e-300):
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds {sym_tol:.1e} * max|entry|")
    sym = 0.5 * (m + m.T)
    return float(np.min(np.linalg.eigvalsh(sym)))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BlackScholesProblem:
    """A constant-coefficient lognormal terminal-value problem.

    ``cov`` is the annualized covariance matrix of log returns (1/year),
    ``rate`` the risk-free rate, ``dividends`` the per-asset carry rates and
    ``payoff`` the terminal condition over symbols S0..S(dim-1).
    """

    dim: int
    cov: np.ndarray
    rate: float
    dividends: np.ndarray
    maturity: float
    payoff: pl.PayoffExpr
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        if not 1 <= self.dim <= MAX_DIM:
            raise InvalidInput(f"dim must be in [1, {MAX_DIM}]")
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (self.dim, self.dim):
            raise InvalidInput(f"cov must be {self.dim}x{self.dim}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise NotSymmetric("covariance asymmetry exceeds 1e-12 absolute")
        min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T))))
        if min_eig < -PSD_TOL_FACTOR * max(np.trace(cov), 0.0):
            raise NotPSD(f"covariance min eigenvalue {min_eig:.3e} below tolerance")
        div = np.asarray(self.dividends, dtype=float)
        if div.shape != (self.dim,):
            raise InvalidInput(f"dividends must have length {self.dim}")
        if not np.all(np.isfinite(div)):
            raise InvalidInput("dividends must be finite")
        if not (np.isfinite(self.maturity) and self.maturity > 0):
            raise InvalidInput("maturity must be positive")
        if not np.isfinite(self.rate):
            raise InvalidInput("rate must be finite")
        if pl.max_symbol_index(self.payoff) >= self.dim:
            raise InvalidInput(
                f"payoff references S{pl.max_symbol_index(self.payoff)} but dim={self.dim}"
            )
        names = self.names or tuple(f"S{i}" for i in range(self.dim))
        if len(names) != self.dim:
            raise InvalidInput("names must match dim")
        object.__setattr__(self, "cov", _readonly(0.5 * (cov + cov.T)))
        object.__setattr__(self, "dividends", _readonly(div))
        object.__setattr__(self, "names", tuple(names))

    def payoff_text(self) -> str:
        return pl.payoff_to_string(self.payoff)


@dataclass(frozen=True)
class MultiplicativeTransform:
    """Product-variable transform z = prod_{i in group} S_i^{alpha_i}."""

    group: Tuple[int, ...]
    alphas: Tuple[float, ...]

    def __post_init__(self):
        group = tuple(int(i) for i in self.group)
        alphas = tuple(float(a) for a in self.alphas)
        if len(group) < 2:
            raise InvalidInput("group must contain at least 2 indices")
        if len(set(group)) != len(group):
            raise InvalidInput("group indices must be distinct")
        if list(group) != sorted(group):
            raise InvalidInput("group indices must be sorted")
        if min(group) < 0 or max(group) >= MAX_DIM:
            raise InvalidInput("group indices out of range")
        if len(alphas) != len(group):
            raise InvalidInput("alphas must match group length")
        if not all(np.isfinite(a) for a in alphas):
            raise InvalidInput("alphas must be finite")
        if all(a == 0.0 for a in alphas):
            raise InvalidInput("alphas must not be all zero")
        if any(abs(a) > 10.0 for a in alphas):
            warnings.warn("exponent magnitude above 10; transform is valid but "
                          "numerically aggressive", stacklevel=2)
        object.__setattr__(self, "group", group)
        object.__setattr__(self, "alphas", alphas)


@dataclass(frozen=True)
class ParabolicProblem:
    """Constant-coefficient parabolic form in log coordinates x_i = ln S_i."""

    dim: int
    diffusion: np.ndarray
    drift: np.ndarray
    discount: float
    maturity: float
    payoff: pl.PayoffExpr

    def __post_init__(self):
        diff = np.asarray(self.diffusion, dtype=float)
        if diff.shape != (self.dim, self.dim):
            raise InvalidInput(f"diffusion must be {self.dim}x{self.dim}")
        min_eig = symmetric_min_eigenvalue(diff)
        if min_eig < -PSD_TOL_FACTOR * max(np.trace(diff), 0.0):
            raise NotPSD("diffusion matrix fails PSD tolerance")
        drift = np.asarray(self.drift, dtype=float)
        if drift.shape != (self.dim,) or not np.all(np.isfinite(drift)):
            raise InvalidInput("drift must be a finite vector of length dim")
        object.__setattr__(self, "diffusion", _readonly(diff))
        object.__setattr__(self, "drift", _readonly(drift))

    def terminal_log(self, x) -> np.ndarray:
        """Terminal condition evaluated at log coordinates, shape (dim, n)."""
        return pl.eval_payoff(self.payoff, np.exp(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ProductStep:
    transform: MultiplicativeTransform

    @property
    def kind(self) -> str:
        return "product"

    @property
    def dim_drop(self) -> int:
        return len(self.transform.group) - 1


@dataclass(frozen=True)
class NumeraireStep:
    numeraire: int

    @property
    def kind(self) -> str:
        return "numeraire"

    @property
    def dim_drop(self) -> int:
        return 1


Step = Union[ProductStep, NumeraireStep]


@dataclass(frozen=True)
class ReductionPlan:
    """An ordered sequence of dimension-reducing steps with the problem state
    after each one."""

    initial: BlackScholesProblem
    steps: Tuple[Step, ...]
    states: Tuple[BlackScholesProblem, ...]

    def __post_init__(self):
        if len(self.steps) != len(self.states):
            raise InvalidInput("each step needs the resulting problem state")
        dim = self.initial.dim
        for step, state in zip(self.steps, self.states):
            dim -= step.dim_drop
            if state.dim != dim:
                raise InvalidInput(
                    f"{step.kind} step should land at dim {dim}, got {state.dim}"
                )
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def final(self) -> BlackScholesProblem:
        return self.states[-1] if self.states else self.initial

    def reduce_spots(self, spots: Sequence[float]) -> Tuple[np.ndarray, float]:
        """Map initial asset spots through the plan.

        Returns the reduced-problem spots and the value multiplier that maps
        the reduced price back to the original (1 unless a numeraire step is
        present, then the numeraire spot).
        """
        s = np.asarray(spots, dtype=float)
        if s.shape != (self.initial.dim,):
            raise InvalidInput(f"spots must have length {self.initial.dim}")
        if not np.all(s > 0):
            raise InvalidInput("spots must be strictly positive")
        multiplier = 1.0
        for step in self.steps:
            if isinstance(step, ProductStep):
                g = list(step.transform.group)
                z = float(np.prod(s[g] ** np.asarray(step.transform.alphas)))
                rest = [i for i in range(s.size) if i not in step.transform.group]
                s = np.concatenate([[z], s[rest]])
            else:
                j = step.numeraire
                multiplier *= float(s[j])
                s = np.array([s[i] / s[j] for i in range(s.size) if i != j])
        return s, multiplier
