"""Dirichlet-Multinomial empirical Bayes across players, one fit per target region.

The prior concentration alpha maximizes the pooled-data objective

    sum_j log DM(x_j; alpha)  +  eta * sum_k log alpha_k  -  nu * sum_k alpha_k

via a digamma fixed-point sweep plus a Newton step on the overall scale.
The weak Gamma penalty (eta = nu = 0.1 by default) matches the estimator
behind the published shrinkage tables; it also keeps the optimum interior
when the across-player variation is no larger than multinomial noise, in
which case the raw likelihood has no maximizer (its supremum sits at the
multinomial limit alpha -> infinity).  Set eta = nu = 0 for the pure MLE.

The posterior for each player is Dirichlet(alpha_hat + x_j); its normalized
mean gives the pseudo-fractions used by the second-stage skill fits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from . import board
from .dataio import CountTable
from .errors import FitError

ALPHA_FLOOR = 1e-6
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000
DEFAULT_ETA = 0.1
DEFAULT_NU = 0.1

# Above this total concentration the DM is numerically indistinguishable from
# a plain multinomial for our sample sizes; likelihoods that keep improving
# past it have no interior maximum (boundary degeneracy).
TOTAL_CAP = 1e4


@dataclass(frozen=True)
class AlphaVector:
    """Fitted prior concentration for one target region.

    ``boundary`` marks fits where the likelihood kept increasing toward the
    multinomial limit (total concentration capped at TOTAL_CAP); the returned
    alpha then lies on the flat ridge rather than at an interior optimum.
    """

    target: str
    alpha: np.ndarray
    iterations: int = 0
    floored: tuple[int, ...] = ()
    low_coverage: bool = False
    boundary: bool = False

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim != 1 or not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise ValueError(f"alpha must be a finite positive vector, got {alpha}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def total(self) -> float:
        return float(self.alpha.sum())


@dataclass(frozen=True)
class PseudoCounts:
    """Posterior pseudo-counts alpha_hat + x and their normalization."""

    player: str
    target: str
    values: np.ndarray
    fractions: np.ndarray = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "fractions", values / values.sum())


def _check_tables(alpha: AlphaVector | np.ndarray, tables: Sequence[CountTable]):
    vec = alpha.alpha if isinstance(alpha, AlphaVector) else np.asarray(alpha, dtype=float)
    target = alpha.target if isinstance(alpha, AlphaVector) else None
    for t in tables:
        if target is not None and t.target != target:
            raise ValueError(f"table target {t.target} does not match alpha target {target}")
        if len(t.counts) != len(vec):
            raise ValueError(f"dimension mismatch: alpha K={len(vec)}, table K={len(t.counts)}")
    return vec


def dm_log_likelihood(alpha: AlphaVector | np.ndarray, tables: Sequence[CountTable]) -> float:
    """Log-likelihood of the pooled data under Dirichlet-Multinomial(alpha)."""
    vec = _check_tables(alpha, tables)
    if np.any(vec <= 0) or not np.all(np.isfinite(vec)):
        raise ValueError("alpha components must be positive and finite")
    if not tables:
        return 0.0
    x = np.stack([t.counts for t in tables]).astype(float)
    n = x.sum(axis=1)
    a0 = vec.sum()
    ll = (gammaln(a0) - gammaln(n + a0)
          + (gammaln(x + vec) - gammaln(vec)).sum(axis=1))
    return float(ll.sum())


def moment_match_alpha(tables: Sequence[CountTable], *, total_clip=(0.5, 1e4)) -> np.ndarray:
    """Moment-matched initializer: match mean fractions, pick the concentration
    from the across-player variance of the fractions."""
    fracs = np.stack([t.counts / max(t.n, 1) for t in tables])
    mean = fracs.mean(axis=0)
    var = fracs.var(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_k = mean * (1.0 - mean) / var - 1.0
    per_k = per_k[np.isfinite(per_k) & (per_k > 0)]
    total = float(np.clip(per_k.mean() if len(per_k) else 1.0, *total_clip))
    return np.maximum(total * mean, ALPHA_FLOOR)


def dm_objective(alpha: AlphaVector | np.ndarray, tables: Sequence[CountTable],
                 eta: float = DEFAULT_ETA, nu: float = DEFAULT_NU) -> float:
    """The fit objective: DM log-likelihood plus the weak Gamma penalty."""
    vec = _check_tables(alpha, tables)
    return dm_log_likelihood(alpha, tables) + float(eta * np.log(vec).sum() - nu * vec.sum())


def _scale_step(alpha: np.ndarray, x: np.ndarray, n: np.ndarray,
                eta: float, nu: float) -> np.ndarray:
    """One guarded Newton step on log(scale) along the current alpha direction.

    The objective is often nearly flat in the overall concentration, which
    makes the plain fixed point crawl; a scale step removes that bottleneck
    and makes boundary (concentration -> infinity) cases reach the cap fast.
    """
    a0 = alpha.sum()
    k = len(alpha)
    # d/d(log s) at s=1 for alpha -> s*alpha.
    grad = (a0 * (digamma(a0) - digamma(n + a0)).sum()
            + (alpha * (digamma(x + alpha) - digamma(alpha))).sum()
            + eta * k - nu * a0)
    hess_s = (a0 ** 2 * (polygamma(1, a0) - polygamma(1, n + a0)).sum()
              + (alpha ** 2 * (polygamma(1, x + alpha) - polygamma(1, alpha))).sum()
              - nu * a0)
    hess = hess_s + grad - eta * k + nu * a0  # chain rule for phi = log s
    if hess < 0:
        step = -grad / hess
    else:
        step = math.copysign(0.5, grad)
    step = float(np.clip(step, -2.0, 2.0))
    return alpha * math.exp(step)


def fit_alpha_mle(tables: Sequence[CountTable], init: np.ndarray | None = None,
                  tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                  eta: float = DEFAULT_ETA, nu: float = DEFAULT_NU) -> AlphaVector:
    """Maximize the DM objective via the digamma fixed point.

    Each iteration runs one Newton step on the overall scale plus one
    componentwise sweep

        alpha_k <- (alpha_k * sum_j [psi(x_jk+alpha_k) - psi(alpha_k)] + eta)
                   / (sum_j [psi(n_j+A) - psi(A)] + nu),

    whose fixed points are exactly the stationary points of the objective.
    Components at or below ALPHA_FLOOR are clamped and reported in
    ``floored``.  Fits whose concentration climbs past TOTAL_CAP (possible
    only without the penalty) stop there flagged ``boundary``.  Raises
    FitError (carrying the last iterate and residual) if max_iter is
    exhausted.
    """
    if len(tables) < 2:
        raise ValueError("need at least two players to pool")
    if any(t.n == 0 for t in tables):
        raise ValueError("every table needs at least one positive count")
    x = np.stack([t.counts for t in tables]).astype(float)
    n = x.sum(axis=1)
    target = tables[0].target
    k = x.shape[1]

    alpha = np.asarray(init, dtype=float).copy() if init is not None else moment_match_alpha(tables)
    if alpha.shape != (k,) or np.any(alpha <= 0):
        raise ValueError("init must be a positive vector of matching length")

    dead = x.sum(axis=0) == 0  # likelihood term vanishes for these
    pooled_coverage = int(k - dead.sum())

    def _result(iteration: int, boundary: bool) -> AlphaVector:
        return AlphaVector(
            target=target, alpha=alpha, iterations=iteration,
            floored=tuple(int(i) for i in np.flatnonzero(alpha <= ALPHA_FLOOR)),
            low_coverage=pooled_coverage < k, boundary=boundary,
        )

    residual = np.inf
    for iteration in range(1, max_iter + 1):
        before = alpha
        alpha = _scale_step(alpha, x, n, eta, nu)
        a0 = alpha.sum()
        num = (digamma(x + alpha) - digamma(alpha)).sum(axis=0)
        den = (digamma(n + a0) - digamma(a0)).sum()
        alpha = np.maximum((alpha * num + eta) / (den + nu), ALPHA_FLOOR)
        if eta == 0.0:
            alpha = np.where(dead, ALPHA_FLOOR, alpha)
        if alpha.sum() > TOTAL_CAP:
            alpha = alpha * (TOTAL_CAP / alpha.sum())
            if eta == 0.0:
                alpha = np.where(dead, ALPHA_FLOOR, alpha)
            return _result(iteration, boundary=True)
        residual = float(np.max(np.abs(alpha - before) / np.maximum(before, ALPHA_FLOOR)))
        if residual < tol:
            return _result(iteration, boundary=False)
    raise FitError(f"alpha fit did not converge in {max_iter} iterations",
                   last=alpha, residual=residual)


def pseudo_counts(alpha_hat: AlphaVector, table: CountTable) -> PseudoCounts:
    """Posterior pseudo-counts for one player under the fitted prior."""
    vec = _check_tables(alpha_hat, [table])
    return PseudoCounts(player=table.player, target=table.target,
                        values=vec + table.counts)


def shrinkage_weight(alpha_hat: AlphaVector, table: CountTable) -> float:
    """Weight on the prior mean in the pseudo-fraction convex combination."""
    return alpha_hat.total / (alpha_hat.total + table.n)


def fit_region(tables: Sequence[CountTable], **kwargs) -> tuple[AlphaVector, list[PseudoCounts]]:
    """Fit alpha on a region's pooled tables and emit per-player pseudo-counts."""
    alpha_hat = fit_alpha_mle(tables, **kwargs)
    return alpha_hat, [pseudo_counts(alpha_hat, t) for t in tables]


def save_region(path, alpha_hat: AlphaVector, pcs: Sequence[PseudoCounts]) -> None:
    """JSON persistence of one region's prior and per-player pseudo-counts."""
    payload = {
        "target": alpha_hat.target,
        "alpha": alpha_hat.alpha.tolist(),
        "low_coverage": alpha_hat.low_coverage,
        "outcomes": list(board.outcome_set(alpha_hat.target)),
        "players": {
            pc.player: {"counts": pc.values.tolist(), "fractions": pc.fractions.tolist()}
            for pc in pcs
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2))


def load_region(path) -> tuple[AlphaVector, list[PseudoCounts]]:
    raw = json.loads(Path(path).read_text())
    alpha_hat = AlphaVector(target=raw["target"], alpha=np.asarray(raw["alpha"]),
                            low_coverage=raw.get("low_coverage", False))
    pcs = [PseudoCounts(player=name, target=raw["target"],
                        values=np.asarray(entry["counts"], dtype=float))
           for name, entry in raw["players"].items()]
    return alpha_hat, pcs
