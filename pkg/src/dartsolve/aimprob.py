"""Outcome distributions for aim points, and precomputed action grids.

The game solver consumes an ActionGrid: a list of aim points, each with a
full 63-outcome probability vector.  Two action sets exist:

  single  one action per targetable region center; the distribution is the
          player's pseudo-fraction vector embedded into the 63-label space
          (no Gaussian model involved).
  multi   one action per lattice point on the board; the distribution comes
          from integrating a bivariate Gaussian centered at the aim over the
          board cells, with the covariance chosen by the region-selection
          rule (the modeled region whose bed contains the aim, else the
          modeled region with the nearest center).

The four rarely targeted doubles D11/D13/D15/D17 fall back to the player's
bull's-eye model when their own model is missing or flagged.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import board
from .board import BoardSpec, DEFAULT_BOARD, OUTCOMES, OUTCOME_INDEX
from .dm import PseudoCounts
from .emfit import GaussianSkill

DB_SUBSTITUTE_REGIONS = ("D11", "D13", "D15", "D17")
MISS_INDEX = OUTCOME_INDEX[board.MISS]
GRID_FORMAT_VERSION = 1

SINGLE = "single"
MULTI = "multi"


@dataclass(frozen=True)
class ActionGrid:
    """Aim points with their outcome distributions, in a fixed order."""

    action_set: str
    aims: np.ndarray                      # (n, 2) mm
    probs: np.ndarray                     # (n, 63), rows sum to 1
    region_ids: tuple[str, ...] = ()      # model source per action
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        aims = np.asarray(self.aims, dtype=float).reshape(-1, 2)
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (len(aims), len(OUTCOMES)):
            raise ValueError(f"probs must be (n, {len(OUTCOMES)})")
        if np.any(probs < -1e-12):
            raise ValueError("negative probabilities")
        err = np.abs(probs.sum(axis=1) - 1.0).max() if len(probs) else 0.0
        if err > 1e-9:
            raise ValueError(f"distributions not normalized (max err {err:.2e})")
        object.__setattr__(self, "aims", aims)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return len(self.aims)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.action_set.encode())
        h.update(np.ascontiguousarray(self.aims).tobytes())
        h.update(np.ascontiguousarray(self.probs).tobytes())
        return h.hexdigest()[:16]


def outcome_distribution(skill: GaussianSkill, aim, spec: BoardSpec = DEFAULT_BOARD,
                         resolution: float = 1.0) -> np.ndarray:
    """63-outcome distribution for a Gaussian throw centered at the aim point.

    Cell probabilities are the density at the cell center times the cell
    area; Miss absorbs the residual so the vector sums to one exactly.
    Evaluation is restricted to a window of several standard deviations
    around the aim; scoring mass outside it is below 1e-6 and lands in Miss.
    Spreads smaller than the cell size switch to a locally refined grid,
    where the board lattice can no longer resolve the density.
    """
    aim = np.asarray(aim, dtype=float).reshape(2)
    sigma = skill.sigma
    sd = float(np.sqrt(np.linalg.eigvalsh(sigma).max()))

    if sd >= 2.0 * resolution:
        xs, ys, labels = board.lattice(spec, float(resolution))
        n = int(round(2.0 * board.BOARD_RADIUS_MM / resolution))
        half = 6.0 * sd
        lo_i = max(0, int((aim[0] - half + board.BOARD_RADIUS_MM) / resolution))
        hi_i = min(n, int((aim[0] + half + board.BOARD_RADIUS_MM) / resolution) + 1)
        lo_j = max(0, int((aim[1] - half + board.BOARD_RADIUS_MM) / resolution))
        hi_j = min(n, int((aim[1] + half + board.BOARD_RADIUS_MM) / resolution) + 1)
        cols = np.arange(lo_i, hi_i)
        rows = np.arange(lo_j, hi_j)
        idx = (rows[:, None] * n + cols[None, :]).ravel()
        px, py, plab = xs[idx], ys[idx], labels[idx]
        step = resolution
    else:
        step = max(sd / 3.0, resolution / 256.0)
        half = max(8.0 * sd, 3.0 * step)
        k = int(np.ceil(half / step))
        offs = (np.arange(-k, k + 1)) * step
        gx, gy = np.meshgrid(aim[0] + offs, aim[1] + offs, indexing="xy")
        px, py = gx.ravel(), gy.ravel()
        plab = board.score_indices(px, py, spec)

    a, b, c = sigma[0, 0], sigma[0, 1], sigma[1, 1]
    det = a * c - b * b
    dx = px - aim[0]
    dy = py - aim[1]
    dens = np.exp(-0.5 * (c * dx * dx - 2 * b * dx * dy + a * dy * dy) / det)
    dens *= step * step / (2.0 * np.pi * np.sqrt(det))

    probs = np.bincount(plab, weights=dens, minlength=len(OUTCOMES))
    probs[MISS_INDEX] = 0.0
    np.minimum(probs, 1.0, out=probs)
    probs[MISS_INDEX] = max(0.0, 1.0 - probs.sum())
    return probs / probs.sum()


def single_action_distribution(pc: PseudoCounts) -> np.ndarray:
    """Embed a pseudo-fraction vector into the 63-label outcome space."""
    probs = np.zeros(len(OUTCOMES))
    for label, f in zip(board.outcome_set(pc.target), pc.fractions):
        probs[OUTCOME_INDEX[label]] = f
    return probs


def multi_action_aims(spec: BoardSpec = DEFAULT_BOARD, resolution: float = 1.0) -> np.ndarray:
    """Lattice aim points inside the scoring disk (about 90,000 at 1 mm)."""
    xs, ys, _ = board.lattice(spec, float(resolution))
    mask = np.hypot(xs, ys) <= spec.r_double_outer
    return np.column_stack([xs[mask], ys[mask]])


def _resolve_models(models: Mapping[str, GaussianSkill], flagged=()) -> dict[str, GaussianSkill]:
    """Apply the DB fallback for the four sparse doubles."""
    resolved = {k: v for k, v in models.items() if k not in flagged}
    if "DB" in resolved:
        for region in DB_SUBSTITUTE_REGIONS:
            if region not in resolved:
                resolved[region] = GaussianSkill(
                    target=region, mu=np.zeros(2), sigma=models["DB"].sigma)
    return resolved


def _sigma_lookup(resolved: Mapping[str, GaussianSkill], spec: BoardSpec):
    """Per-aim covariance chooser implementing the region-selection rule."""
    names = sorted(resolved)
    centers = np.array([board.region_center(t, spec) for t in names])

    def choose(aim: np.ndarray) -> str:
        label = board.score_at(aim, spec)
        if label in resolved:
            return label
        d = np.hypot(centers[:, 0] - aim[0], centers[:, 1] - aim[1])
        return names[int(np.argmin(d))]

    return choose


def build_action_grid(models, action_set: str, spec: BoardSpec = DEFAULT_BOARD,
                      resolution: float = 1.0, aims: np.ndarray | None = None,
                      flagged: Sequence[str] = (), db_model: GaussianSkill | None = None,
                      require_full: bool = False) -> ActionGrid:
    """Assemble an ActionGrid for one player.

    ``models`` maps target region to PseudoCounts (single) or GaussianSkill
    (multi).  The single set takes one action per modeled region center, in
    canonical region order; the four sparse doubles, when missing from
    ``models`` or listed in ``flagged``, fall back to the bull's-eye model
    (the Gaussian ``db_model`` integrated at the double's center for the
    single set).  With ``require_full`` a region left without an action is
    an error.  The multi set defaults to the full lattice inside the
    scoring disk but accepts explicit aim points (e.g. region centers only)
    for cheaper grids.
    """
    if action_set == SINGLE:
        rows, aim_list, ids = [], [], []
        for target in board.TARGETS:
            center = board.region_center(target, spec)
            if target in models and target not in flagged:
                rows.append(single_action_distribution(models[target]))
                ids.append(target)
            elif target in DB_SUBSTITUTE_REGIONS and db_model is not None:
                rows.append(outcome_distribution(db_model, center, spec))
                ids.append(f"DB->{target}")
            elif require_full:
                raise KeyError(f"no usable model for region {target}")
            else:
                continue
            aim_list.append(center)
        if not rows:
            raise KeyError("no regions with models")
        return ActionGrid(action_set=SINGLE, aims=np.array(aim_list), probs=np.stack(rows),
                          region_ids=tuple(ids), meta={"resolution": None})

    if action_set != MULTI:
        raise ValueError(f"unknown action set {action_set!r}")
    resolved = _resolve_models(models, flagged)
    if not resolved:
        raise KeyError("multi grid needs at least one Gaussian model")
    if aims is None:
        aims = multi_action_aims(spec, resolution)
    choose = _sigma_lookup(resolved, spec)
    rows, ids = [], []
    for aim in aims:
        region = choose(aim)
        rows.append(outcome_distribution(resolved[region], aim, spec, resolution))
        ids.append(region)
    return ActionGrid(action_set=MULTI, aims=np.asarray(aims, dtype=float),
                      probs=np.stack(rows), region_ids=tuple(ids),
                      meta={"resolution": resolution})


def save_grid(grid: ActionGrid, stem) -> None:
    """Persist as little-endian float64 (.bin) plus a JSON manifest (.json).

    Layout: aims array (n x 2) followed by probs array (n x 63), row-major,
    both '<f8'.  The manifest records the format version, shapes, action set,
    region ids, and metadata.
    """
    stem = Path(stem)
    blob = np.ascontiguousarray(grid.aims, dtype="<f8").tobytes() + \
        np.ascontiguousarray(grid.probs, dtype="<f8").tobytes()
    stem.with_suffix(".bin").write_bytes(blob)
    manifest = {
        "version": GRID_FORMAT_VERSION,
        "action_set": grid.action_set,
        "n_actions": len(grid),
        "n_outcomes": len(OUTCOMES),
        "dtype": "<f8",
        "region_ids": list(grid.region_ids),
        "meta": grid.meta,
        "hash": grid.content_hash(),
    }
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=2))


def load_grid(stem) -> ActionGrid:
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    if manifest["version"] != GRID_FORMAT_VERSION:
        raise ValueError(f"unsupported grid format version {manifest['version']}")
    n = manifest["n_actions"]
    k = manifest["n_outcomes"]
    raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    aims = raw[: 2 * n].reshape(n, 2).copy()
    probs = raw[2 * n:].reshape(n, k).copy()
    grid = ActionGrid(action_set=manifest["action_set"], aims=aims, probs=probs,
                      region_ids=tuple(manifest["region_ids"]), meta=manifest["meta"])
    if grid.content_hash() != manifest["hash"]:
        raise ValueError("grid content hash mismatch")
    return grid
