"""Coefficient algebra for dimension-reducing variable changes.

A product group z = prod S_i^{alpha_i} collapses k assets into one while the
equation keeps its lognormal form; a numeraire change divides everything by
one asset.  Both preserve positive semidefiniteness of the covariance matrix,
which is re-checked after every step.
"""

from __future__ import annotations

from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from . import payoff as pl
from .errors import InvalidInput, NonDifferentiableKink, NotHomogeneous, NotPSD
from .problem import (
    PSD_TOL_FACTOR,
    BlackScholesProblem,
    MultiplicativeTransform,
    NumeraireStep,
    ParabolicProblem,
    ProductStep,
    ReductionPlan,
    symmetric_min_eigenvalue,
)

__all__ = [
    "assert_psd",
    "apply_pair_transform",
    "apply_group_transform",
    "apply_numeraire_change",
    "to_log_parabolic",
    "plan_reduction",
    "fold_pair_transforms",
]


def assert_psd(m) -> float:
    """Minimum eigenvalue of a symmetric matrix.

    Raises NotSymmetric when the asymmetry exceeds 1e-12 * max|entry|; the
    caller is expected to reject matrices whose minimum eigenvalue falls
    below -1e-10 * trace.
    """
    return symmetric_min_eigenvalue(m)


def _group_name(names: Sequence[str], group, alphas) -> str:
    factors = []
    for i, a in zip(group, alphas):
        if a == 0.0:
            continue
        factors.append(names[i] if a == 1.0 else f"{names[i]}^{a:g}")
    if len(factors) == 1:
        return factors[0]
    return "(" + "*".join(factors) + ")"


def _apply_product(problem: BlackScholesProblem, group, alphas,
                   probe_center=None) -> BlackScholesProblem:
    """Contract a sorted index group into one variable via the direct
    quadratic-form coefficients."""
    group = tuple(group)
    alphas = np.asarray(alphas, dtype=float)
    k = len(group)
    n_new = problem.dim - (k - 1)
    rest = [i for i in range(problem.dim) if i not in group]
    a = problem.cov
    q = problem.dividends
    r = problem.rate

    new_cov = np.empty((n_new, n_new))
    a_gg = a[np.ix_(group, group)]
    new_cov[0, 0] = float(alphas @ a_gg @ alphas)
    cross = alphas @ a[np.ix_(group, rest)] if rest else np.zeros(0)
    new_cov[0, 1:] = cross
    new_cov[1:, 0] = cross
    new_cov[1:, 1:] = a[np.ix_(rest, rest)]

    diag_g = np.diag(a)[list(group)]
    q_z = r - float(np.sum((r - q[list(group)] - 0.5 * diag_g) * alphas)) \
        - 0.5 * new_cov[0, 0]
    new_div = np.concatenate([[q_z], q[rest]])

    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (new_cov + new_cov.T))))
    if min_eig < -PSD_TOL_FACTOR * max(np.trace(new_cov), 0.0):
        raise NotPSD(
            f"transformed covariance has min eigenvalue {min_eig:.3e}; "
            "this signals numerical pathology, the transform preserves PSD exactly"
        )

    new_payoff = pl.rewrite_payoff(
        problem.payoff, MultiplicativeTransform(group, tuple(alphas)), center=probe_center
    )
    new_names = (_group_name(problem.names, group, alphas),) + tuple(problem.names[i] for i in rest)
    return BlackScholesProblem(
        dim=n_new,
        cov=new_cov,
        rate=r,
        dividends=new_div,
        maturity=problem.maturity,
        payoff=new_payoff,
        names=new_names,
    )


def apply_pair_transform(
    problem: BlackScholesProblem, i0: int, i1: int, alpha0: float, alpha1: float,
    probe_center=None,
) -> BlackScholesProblem:
    """Collapse assets i0, i1 into z = S_i0^alpha0 * S_i1^alpha1.

    The new variable takes index 0 and the untouched assets follow in
    ascending order.  Raises PayoffNotReducible when the payoff is not a
    function of z, NotPSD on numerical pathology.
    """
    if i0 == i1:
        raise InvalidInput("pair indices must differ")
    for i in (i0, i1):
        if not 0 <= i < problem.dim:
            raise InvalidInput(f"index {i} out of range for dim {problem.dim}")
    if problem.dim < 2:
        raise InvalidInput("pair transform needs dim >= 2")
    pairs = sorted(((i0, alpha0), (i1, alpha1)))
    group = (pairs[0][0], pairs[1][0])
    alphas = (pairs[0][1], pairs[1][1])
    MultiplicativeTransform(group, alphas)  # validates alphas
    return _apply_product(problem, group, alphas, probe_center)


def apply_group_transform(
    problem: BlackScholesProblem, transform: MultiplicativeTransform,
    probe_center=None,
) -> BlackScholesProblem:
    """Collapse a whole index group at once (equivalent to folding the pair
    transform left-to-right over the group)."""
    if max(transform.group) >= problem.dim:
        raise InvalidInput("group index out of range")
    return _apply_product(problem, transform.group, transform.alphas, probe_center)


def fold_pair_transforms(
    problem: BlackScholesProblem, transform: MultiplicativeTransform
) -> BlackScholesProblem:
    """Apply a group transform as iterated pair transforms.

    Reference path for the associativity property; results must agree with
    apply_group_transform to 1e-12 relative.
    """
    group = list(transform.group)
    alphas = list(transform.alphas)
    current = apply_pair_transform(problem, group[0], group[1], alphas[0], alphas[1])
    consumed = set(group[:2])
    for g, a in zip(group[2:], alphas[2:]):
        # z sits at index 0; g's current index counts untouched assets before it
        new_idx = 1 + sum(1 for i in range(g) if i not in consumed)
        current = apply_pair_transform(current, 0, new_idx, 1.0, a)
        consumed.add(g)
    return current


def apply_numeraire_change(problem: BlackScholesProblem, numeraire: int,
                           probe_center=None) -> BlackScholesProblem:
    """Divide asset prices and the option value by the numeraire asset.

    Requires the payoff to be positively homogeneous of degree 1.  The
    reduced problem has covariance a_ij - a_i0 - a_0j + a_00 (indices taken
    relative to the numeraire), the numeraire's carry rate as its risk-free
    rate, and payoff P(..., 1, ...) in the price ratios.
    """
    j = int(numeraire)
    if not 0 <= j < problem.dim:
        raise InvalidInput(f"numeraire index {j} out of range")
    if problem.dim < 2:
        raise InvalidInput("numeraire change needs dim >= 2")
    if not pl.check_homogeneity(problem.payoff, problem.dim, center=probe_center):
        raise NotHomogeneous("payoff is not positively homogeneous of degree 1")

    rest = [i for i in range(problem.dim) if i != j]
    a = problem.cov
    new_cov = (
        a[np.ix_(rest, rest)]
        - a[np.ix_(rest, [j])]
        - a[np.ix_([j], rest)]
        + a[j, j]
    )
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (new_cov + new_cov.T))))
    if min_eig < -PSD_TOL_FACTOR * max(np.trace(new_cov), 0.0):
        raise NotPSD("numeraire-reduced covariance fails PSD tolerance")

    mapping = {j: pl.Const(1.0)}
    for k, i in enumerate(rest):
        mapping[i] = pl.Symbol(k)
    new_payoff = pl.substitute_symbols(problem.payoff, mapping)
    new_names = tuple(f"{problem.names[i]}/{problem.names[j]}" for i in rest)
    # the numeraire's own carry becomes the discount rate; V = S_j * U
    return BlackScholesProblem(
        dim=problem.dim - 1,
        cov=new_cov,
        rate=float(problem.dividends[j]),
        dividends=problem.dividends[rest],
        maturity=problem.maturity,
        payoff=new_payoff,
        names=new_names,
    )


def to_log_parabolic(problem: BlackScholesProblem) -> ParabolicProblem:
    """Rewrite in log coordinates x_i = ln S_i: constant-coefficient parabolic
    form with drift r - q_i - a_ii/2 and unchanged diffusion matrix."""
    drift = problem.rate - problem.dividends - 0.5 * np.diag(problem.cov)
    return ParabolicProblem(
        dim=problem.dim,
        diffusion=problem.cov,
        drift=drift,
        discount=problem.rate,
        maturity=problem.maturity,
        payoff=problem.payoff,
    )


def plan_reduction(
    problem: BlackScholesProblem,
    spots: Optional[Sequence[float]] = None,
    tol: float = 1e-9,
    max_group: int = 4,
) -> ReductionPlan:
    """Greedy reduction plan: repeatedly absorb the first detectable product
    group (pairs first, then triples, up to ``max_group``, lowest indices
    first), then append one numeraire step if the remaining payoff is
    positively homogeneous.  Deterministic; the plan may be empty.

    When ``spots`` is given, structure probes are centered at those asset
    levels instead of s = 1, which matters for payoffs whose kinks sit far
    from unity.
    """
    steps = []
    states = []
    current = problem
    center = None if spots is None else np.asarray(spots, dtype=float)
    if center is not None and (center.shape != (problem.dim,) or np.any(center <= 0)):
        raise InvalidInput("spots must be a positive vector matching dim")
    while current.dim >= 2:
        found: Optional[pl.GroupStructure] = None
        for k in range(2, min(max_group, current.dim) + 1):
            for combo in combinations(range(current.dim), k):
                try:
                    gs = pl.detect_group_structure(current.payoff, combo, tol,
                                                   center=center)
                except NonDifferentiableKink:
                    continue
                if gs is not None:
                    found = gs
                    break
            if found is not None:
                break
        if found is None:
            break
        transform = MultiplicativeTransform(found.group, found.alphas)
        current = apply_group_transform(current, transform, probe_center=center)
        steps.append(ProductStep(transform))
        states.append(current)
        if center is not None:
            g = list(transform.group)
            z = float(np.prod(center[g] ** np.asarray(transform.alphas)))
            rest = [i for i in range(center.size) if i not in transform.group]
            center = np.concatenate([[z], center[rest]])
    if current.dim >= 2 and pl.check_homogeneity(current.payoff, current.dim,
                                                 center=center):
        current = apply_numeraire_change(current, 0, probe_center=center)
        steps.append(NumeraireStep(0))
        states.append(current)
    return ReductionPlan(initial=problem, steps=tuple(steps), states=tuple(states))
