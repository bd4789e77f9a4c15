"""Bivariate-Gaussian skill models fitted to outcome fractions by EM.

A throw aimed at a target region lands at an unobserved board position nu;
only the outcome region is recorded.  The observed-data log-likelihood per
throw is

    L(mean, Sigma) = sum_k f_k * log P(nu in R(z_k) | N2(mean, Sigma)),

with f_k the (pseudo-)fraction of throws scoring outcome z_k.  EM treats the
landing positions as missing data:

  E-step   conditional moments E[nu | z_k] and E[nu nu^T | z_k] under the
           current parameters, by quadrature over a fixed cell grid of each
           region, or by importance sampling with a uniform proposal on the
           region (weights proportional to the Gaussian density; uniform
           proposals cancel after normalization).
  M-step   mean_new = sum_k f_k E[nu|z_k] (pinned to the region center in
           unbiased mode), Sigma_new = sum_k f_k E[(mean_new - nu)(...)^T | z_k].

Grid mode is deterministic and monotone in the discretized likelihood, so it
serves as the reference mode for tests; IS mode draws its samples once per
fit from a seeded generator and reuses them across iterations, which keeps
the iteration a deterministic fixed point.

Conventions: model means are stored as offsets from the target's region
center ("mu"); all computations below run in board coordinates.  Regions are
those of the target's outcome set; for the bull'seye target the single-
segment outcomes use the full wedge (both beds), and any remaining board
area is out-of-set mass reported as ``leak``, not part of the likelihood.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import chi2

from . import board
from .board import BoardSpec, DEFAULT_BOARD
from .errors import FitError, NumericalError

EIGEN_FLOOR = 0.25          # mm^2, keeps Sigma PD under tiny coverage
REPORT_RESOLUTION = 0.5     # mm, grid used for fitted probability tables
UNBIASED = "unbiased"
INFERRED_MU = "inferred_mu"


@dataclass(frozen=True)
class GaussianSkill:
    """Fitted throw distribution for one (player, target) pair.

    ``mu`` is the mean offset in mm from the target's region center; a zero
    offset means the player is centered on the aim point.
    """

    target: str
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(2)
        sigma = np.asarray(self.sigma, dtype=float).reshape(2, 2)
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(sigma)):
            raise ValueError("mu and sigma must be finite")
        if abs(sigma[0, 1] - sigma[1, 0]) > 1e-9 * (1 + abs(sigma[0, 1])):
            raise ValueError("sigma must be symmetric")
        if np.linalg.eigvalsh(sigma).min() <= 0:
            raise ValueError("sigma must be positive definite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))

    def mean_on_board(self, spec: BoardSpec = DEFAULT_BOARD) -> np.ndarray:
        center = board.region_center(self.target, spec)
        return np.array([center.x, center.y]) + self.mu


@dataclass(frozen=True)
class FitConfig:
    mode: str = UNBIASED                 # "unbiased" | "inferred_mu"
    estep: str = "is"                    # "is" | "grid"
    m: int = 50_000                      # IS samples per outcome region
    seed: int = 0
    resolution: float = 0.5              # mm, grid-mode cell size
    tol: float = 1e-4
    ll_tol: float = 1e-10               # guards against pseudo-convergence plateaus
    max_iter: int = 20_000
    sigma_init: float = 225.0            # mm^2, isotropic start (15 mm sd)

    def __post_init__(self):
        if self.mode not in (UNBIASED, INFERRED_MU):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.estep not in ("is", "grid"):
            raise ValueError(f"unknown estep {self.estep!r}")
        if self.estep == "is" and self.m < 1000:
            raise ValueError("importance sampling needs m >= 1000")
        if self.estep == "grid" and self.resolution > 1.0:
            raise ValueError("grid E-step resolution must be <= 1 mm")


@dataclass(frozen=True)
class OutcomeMoments:
    """Conditional moments of the landing position given one outcome."""

    outcome: str
    log_mass: float                      # log P(region) estimate
    mean: np.ndarray                     # E[nu | z]
    second: np.ndarray                   # E[nu nu^T | z]
    ess: float = 0.0
    se_mean: np.ndarray | None = None    # IS-only standard errors


@dataclass(frozen=True)
class FitResult:
    model: GaussianSkill
    iterations: int
    loglik: float
    fitted: dict[str, float]             # per-outcome probabilities
    fitted_error: float                  # mean |fitted - input fraction|
    leak: float                          # out-of-set probability mass
    converged: bool
    trajectory: tuple[float, ...] = ()   # observed LL per iteration
    mode: str = UNBIASED


@lru_cache(maxsize=64)
def _region_cells(target: str, spec: BoardSpec, resolution: float):
    """Cell arrays for each outcome region of a target, Miss cut to the disk."""
    cells = []
    for outcome in board.outcome_set(target, spec):
        pts = board.cells_of(outcome, resolution, spec)
        if outcome == board.MISS:
            pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= board.BOARD_RADIUS_MM]
        cells.append(pts)
    return tuple(cells)


@lru_cache(maxsize=64)
def _region_cells_packed(target: str, spec: BoardSpec, resolution: float):
    """All region cells concatenated, with per-region slice bounds.

    One fused density evaluation per E-step is about twice as fast as one
    call per region.
    """
    cells = _region_cells(target, spec, resolution)
    bounds = np.cumsum([0] + [len(c) for c in cells])
    return np.concatenate(cells, axis=0), bounds


def _log_pdf(points: np.ndarray, mean: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    a, b, c = sigma[0, 0], sigma[0, 1], sigma[1, 1]
    det = a * c - b * b
    if det <= 0 or not np.isfinite(det):
        raise NumericalError(f"degenerate covariance {sigma!r}")
    dx = points[:, 0] - mean[0]
    dy = points[:, 1] - mean[1]
    quad = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
    return -0.5 * quad - math.log(2.0 * math.pi) - 0.5 * math.log(det)


_LOG_MASS_FLOOR = -700.0  # below exp() underflow: the region is unreachable


def _moments_from_points(outcome, points, log_w_unnorm, log_point_mass):
    """Normalized-weight moments; log_point_mass converts the sum to a probability."""
    top = float(np.max(log_w_unnorm)) if len(log_w_unnorm) else -np.inf
    if not np.isfinite(top) or top + log_point_mass < _LOG_MASS_FLOOR:
        return None
    w = np.exp(log_w_unnorm - top)
    total = float(w.sum())
    log_mass = top + math.log(total) + log_point_mass
    w /= total
    mean = w @ points
    second = (points * w[:, None]).T @ points
    ess = 1.0 / float((w ** 2).sum())
    dev = points - mean
    se = np.sqrt(np.clip((w ** 2 * dev.T ** 2).sum(axis=1), 0.0, None))
    return OutcomeMoments(outcome=outcome, log_mass=log_mass, mean=mean,
                          second=second, ess=ess, se_mean=se)


def draw_region_samples(target: str, m: int, rng: np.random.Generator,
                        spec: BoardSpec = DEFAULT_BOARD) -> dict[str, np.ndarray]:
    """Uniform samples on each outcome region (area-weighted over components)."""
    out = {}
    for outcome in board.outcome_set(target, spec):
        comps = board.region_components(outcome, spec)
        areas = np.array([0.5 * (r2 ** 2 - r1 ** 2) * (t2 - t1) for r1, r2, t1, t2 in comps])
        pick = rng.choice(len(comps), size=m, p=areas / areas.sum())
        u_r = rng.random(m)
        u_t = rng.random(m)
        r1 = np.array([comps[i][0] for i in pick])
        r2 = np.array([comps[i][1] for i in pick])
        t1 = np.array([comps[i][2] for i in pick])
        t2 = np.array([comps[i][3] for i in pick])
        r = np.sqrt(r1 ** 2 + u_r * (r2 ** 2 - r1 ** 2))
        theta = t1 + u_t * (t2 - t1)
        out[outcome] = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return out


def _e_step_board(mean, sigma, target, config, spec, needed=None, samples=None):
    """E-step in board coordinates.  ``needed`` marks outcomes whose moments
    must exist (positive fraction); others may vanish silently."""
    labels = board.outcome_set(target, spec)
    if needed is None:
        needed = [True] * len(labels)
    moments: list[OutcomeMoments | None] = []
    if config.estep == "grid":
        packed, bounds = _region_cells_packed(target, spec, config.resolution)
        log_all = _log_pdf(packed, mean, sigma)
        log_cell_area = 2.0 * math.log(config.resolution)
        for k, outcome in enumerate(labels):
            lo, hi = bounds[k], bounds[k + 1]
            mom = _moments_from_points(outcome, packed[lo:hi], log_all[lo:hi], log_cell_area)
            if mom is None and needed[k]:
                raise NumericalError(
                    f"model mass vanished on region {outcome!r} of target {target!r}")
            moments.append(mom)
        return moments
    if samples is None:
        samples = draw_region_samples(target, config.m, np.random.default_rng(config.seed), spec)
    for k, outcome in enumerate(labels):
        pts = samples[outcome]
        log_area = math.log(board.region_area(outcome, spec))
        # Uniform proposal: weights are the densities; mass = area * mean(p).
        mom = _moments_from_points(outcome, pts, _log_pdf(pts, mean, sigma),
                                   log_area - math.log(len(pts)))
        if mom is None and needed[k]:
            raise NumericalError(
                f"model mass vanished on region {outcome!r} of target {target!r}")
        moments.append(mom)
    return moments


def e_step(model_old: GaussianSkill, target: str, config: FitConfig,
           spec: BoardSpec = DEFAULT_BOARD) -> list[OutcomeMoments]:
    """Per-outcome conditional moments under the current model.

    Raises NumericalError naming the outcome if the model puts numerically
    zero mass on any region.
    """
    mean = model_old.mean_on_board(spec)
    return _e_step_board(mean, model_old.sigma, target, config, spec)


def _floor_sigma(sigma: np.ndarray) -> np.ndarray:
    sigma = 0.5 * (sigma + sigma.T)
    vals, vecs = np.linalg.eigh(sigma)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("covariance update produced non-finite eigenvalues")
    vals = np.maximum(vals, EIGEN_FLOOR)
    return (vecs * vals) @ vecs.T


def m_step(moments: Sequence[OutcomeMoments | None], fractions: np.ndarray, *,
           mode: str = INFERRED_MU, center: np.ndarray | None = None):
    """Weighted-moment parameter update, in board coordinates.

    Returns (mean_new, sigma_new).  In unbiased mode the mean is pinned to
    ``center``.  Outcomes with zero fraction may carry None moments.
    """
    fractions = np.asarray(fractions, dtype=float)
    mean_new = np.zeros(2)
    if mode == UNBIASED:
        if center is None:
            raise ValueError("unbiased mode needs the pinned center")
        mean_new = np.asarray(center, dtype=float)
    else:
        for f, mom in zip(fractions, moments):
            if f > 0:
                mean_new = mean_new + f * mom.mean
    sigma_new = np.zeros((2, 2))
    for f, mom in zip(fractions, moments):
        if f <= 0:
            continue
        sigma_new = sigma_new + f * (
            mom.second
            - np.outer(mean_new, mom.mean) - np.outer(mom.mean, mean_new)
            + np.outer(mean_new, mean_new))
    return mean_new, _floor_sigma(sigma_new)


def _loglik_from_moments(moments, fractions) -> float:
    total = 0.0
    for f, mom in zip(fractions, moments):
        if f <= 0:
            continue
        total += f * mom.log_mass
    return float(total)


def region_probabilities(model: GaussianSkill, target: str,
                         spec: BoardSpec = DEFAULT_BOARD,
                         resolution: float = REPORT_RESOLUTION) -> dict[str, float]:
    """Per-outcome region probabilities by grid quadrature."""
    mean = model.mean_on_board(spec)
    labels = board.outcome_set(target, spec)
    cells = _region_cells(target, spec, resolution)
    probs = {}
    for outcome, pts in zip(labels, cells):
        logp = _log_pdf(pts, mean, model.sigma)
        top = float(np.max(logp)) if len(logp) else -np.inf
        if not np.isfinite(top):
            probs[outcome] = 0.0
        else:
            probs[outcome] = float(math.exp(top + math.log(np.exp(logp - top).sum())
                                            + 2.0 * math.log(resolution)))
    return probs


def observed_log_likelihood(model: GaussianSkill, fractions: np.ndarray, target: str,
                            spec: BoardSpec = DEFAULT_BOARD,
                            resolution: float = REPORT_RESOLUTION) -> float:
    """Per-throw observed-data log-likelihood, by grid integration.

    A region with positive fraction but probability below 1e-300 makes the
    value -inf (a warning names the region).
    """
    fractions = np.asarray(fractions, dtype=float)
    labels = board.outcome_set(target, spec)
    if len(fractions) != len(labels):
        raise ValueError(f"need {len(labels)} fractions for target {target}")
    probs = region_probabilities(model, target, spec, resolution)
    total = 0.0
    for f, outcome in zip(fractions, labels):
        if f <= 0:
            continue
        p = probs[outcome]
        if p < 1e-300:
            warnings.warn(f"zero model mass on {outcome} with positive fraction")
            return float("-inf")
        total += f * math.log(p)
    return total


def fit(fractions: np.ndarray, target: str, config: FitConfig = FitConfig(),
        spec: BoardSpec = DEFAULT_BOARD) -> FitResult:
    """EM fit of the conditional Gaussian skill model to outcome fractions.

    Deterministic given the config (grid mode exactly; IS mode through the
    seeded, once-per-fit sample draw).  Raises FitError on non-convergence
    with the LL trajectory attached, and NumericalError("insufficient_coverage")
    when fewer than two outcomes have positive fractions.
    """
    fractions = np.asarray(fractions, dtype=float)
    labels = board.outcome_set(target, spec)
    if len(fractions) != len(labels) or np.any(fractions < 0):
        raise ValueError(f"fractions must be nonnegative with length {len(labels)}")
    if abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    if int((fractions > 0).sum()) < 2:
        raise NumericalError("insufficient_coverage: need at least two observed outcomes")

    center = np.array(board.region_center(target, spec), dtype=float)
    mean = center.copy()
    sigma = config.sigma_init * np.eye(2)
    needed = [f > 0 for f in fractions]
    samples = None
    if config.estep == "is":
        samples = draw_region_samples(target, config.m, np.random.default_rng(config.seed), spec)

    trajectory: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        moments = _e_step_board(mean, sigma, target, config, spec,
                                needed=needed, samples=samples)
        trajectory.append(_loglik_from_moments(moments, fractions))
        mean_new, sigma_new = m_step(moments, fractions, mode=config.mode, center=center)
        delta = max(
            float(np.max(np.abs(mean_new - mean) / (np.abs(mean) + 1.0))),
            float(np.max(np.abs(sigma_new - sigma) / (np.abs(sigma) + 1.0))),
        )
        mean, sigma = mean_new, sigma_new
        # EM can stall on flat plateaus long before the optimum, so require
        # the likelihood to have flattened as well.
        ll_flat = len(trajectory) >= 2 and abs(trajectory[-1] - trajectory[-2]) < config.ll_tol
        if delta < config.tol and ll_flat:
            converged = True
            break
    if not converged:
        raise FitError(f"EM did not converge in {config.max_iter} iterations for {target}",
                       trajectory=trajectory)

    final_moments = _e_step_board(mean, sigma, target, config, spec,
                                  needed=needed, samples=samples)
    loglik = _loglik_from_moments(final_moments, fractions)
    trajectory.append(loglik)

    model = GaussianSkill(target=target, mu=mean - center, sigma=sigma)
    fitted = region_probabilities(model, target, spec)
    fitted_error = float(np.mean([abs(fitted[lbl] - f) for lbl, f in zip(labels, fractions)]))
    leak = max(0.0, 1.0 - sum(fitted.values()))
    return FitResult(model=model, iterations=iterations, loglik=loglik, fitted=fitted,
                     fitted_error=fitted_error, leak=leak, converged=converged,
                     trajectory=tuple(trajectory), mode=config.mode)


def bias_magnitude(result: FitResult | GaussianSkill) -> float:
    """Distance in mm between the fitted mean and the region center."""
    model = result.model if isinstance(result, FitResult) else result
    return float(np.hypot(model.mu[0], model.mu[1]))


def confidence_ellipse(model: GaussianSkill, level: float):
    """Level-set ellipse containing the given Gaussian mass.

    Returns (center, semi_axes, angle): center is the mean offset in mm,
    semi-axes are sorted descending, angle is the major-axis direction in
    radians within (-pi/2, pi/2].
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    q = chi2.ppf(level, df=2)
    vals, vecs = np.linalg.eigh(model.sigma)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    semi = np.sqrt(q * vals)
    major = vecs[:, 0]
    angle = math.atan2(major[1], major[0])
    if angle <= -math.pi / 2:
        angle += math.pi
    elif angle > math.pi / 2:
        angle -= math.pi
    return (model.mu.copy(), semi, angle)


def save_models(path, entries: Sequence[dict]) -> None:
    """Persist fit results: [{player, target, mode, mu, sigma, loglik, meta}]."""
    payload = []
    for e in entries:
        model: GaussianSkill = e["model"]
        payload.append({
            "player": e["player"],
            "target": model.target,
            "mode": e.get("mode", UNBIASED),
            "mu": model.mu.tolist(),
            "sigma": model.sigma.tolist(),
            "loglik": e.get("loglik"),
            "meta": e.get("meta", {}),
        })
    Path(path).write_text(json.dumps(payload, indent=2))


def load_models(path) -> list[dict]:
    raw = json.loads(Path(path).read_text())
    out = []
    for e in raw:
        out.append({
            "player": e["player"],
            "mode": e.get("mode", UNBIASED),
            "loglik": e.get("loglik"),
            "meta": e.get("meta", {}),
            "model": GaussianSkill(target=e["target"], mu=np.asarray(e["mu"]),
                                   sigma=np.asarray(e["sigma"])),
        })
    return out
