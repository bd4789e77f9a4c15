"""Model store: the on-disk artifact produced by fitting and consumed by the
solver front-ends.

Layout of a store directory:

    config.json            run configuration echo (seed included)
    board.json             board geometry used for the fits
    pseudo/<target>.json   fitted prior and per-player pseudo-counts
    models.json            Gaussian skill models (player, target, mode)
    reports/               tables and figures emitted by the fit run

Action grids and leg solves are cached under DARTSOLVE_CACHE (or
<store>/cache), keyed by content hashes, so repeated solves are cheap.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from . import aimprob, board, dm, emfit, zsg
from .board import BoardSpec, DEFAULT_BOARD


class ModelStore:
    def __init__(self, root):
        self.root = Path(root)
        self.spec = DEFAULT_BOARD
        board_file = self.root / "board.json"
        if board_file.exists():
            self.spec = BoardSpec.from_json(board_file.read_text())
        self._models: dict[tuple[str, str, str], dict] = {}
        models_file = self.root / "models.json"
        if models_file.exists():
            for e in emfit.load_models(models_file):
                self._models[(e["player"], e["model"].target, e["mode"])] = e
        self._pseudo: dict[str, tuple[dm.AlphaVector, dict[str, dm.PseudoCounts]]] = {}
        pseudo_dir = self.root / "pseudo"
        if pseudo_dir.is_dir():
            for f in sorted(pseudo_dir.glob("*.json")):
                alpha, pcs = dm.load_region(f)
                self._pseudo[alpha.target] = (alpha, {pc.player: pc for pc in pcs})

    # -- queries ---------------------------------------------------------
    def players(self) -> list[str]:
        return sorted({p for p, _, _ in self._models}
                      | {p for _, by in self._pseudo.values() for p in by})

    def regions(self, player: str) -> list[str]:
        return sorted({t for p, t, _ in self._models if p == player})

    def flags(self, player: str) -> dict[str, list[str]]:
        low = [t for t, (alpha, by) in sorted(self._pseudo.items())
               if alpha.low_coverage and player in by]
        return {"low_coverage": low}

    def model(self, player: str, target: str, mode: str = emfit.UNBIASED) -> dict:
        key = (player, target, mode)
        if key not in self._models:
            raise KeyError(f"no model for {player}/{target}/{mode}")
        return self._models[key]

    def gaussians(self, player: str, mode: str = emfit.UNBIASED) -> dict[str, emfit.GaussianSkill]:
        out = {t: e["model"] for (p, t, m), e in self._models.items()
               if p == player and m == mode}
        if not out:
            raise KeyError(f"no {mode} models for player {player!r}")
        return out

    def pseudo(self, player: str) -> dict[str, dm.PseudoCounts]:
        out = {}
        for target, (_, by_player) in self._pseudo.items():
            if player in by_player:
                out[target] = by_player[player]
        return out

    def low_coverage_regions(self) -> list[str]:
        return [t for t, (alpha, _) in self._pseudo.items() if alpha.low_coverage]

    # -- grids and solves, cached ---------------------------------------
    def cache_dir(self) -> Path:
        env = os.environ.get("DARTSOLVE_CACHE")
        path = Path(env) if env else self.root / "cache"
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _models_hash(self, player: str, mode: str) -> str:
        h = hashlib.sha256()
        for (p, t, m), e in sorted(self._models.items()):
            if p == player and m == mode:
                h.update(t.encode())
                h.update(np.ascontiguousarray(e["model"].mu).tobytes())
                h.update(np.ascontiguousarray(e["model"].sigma).tobytes())
        for t, (alpha, by) in sorted(self._pseudo.items()):
            if player in by:
                h.update(np.ascontiguousarray(by[player].values).tobytes())
        return h.hexdigest()[:16]

    def action_grid(self, player: str, action_set: str, resolution: float = 1.0,
                    mode: str = emfit.UNBIASED, aims=None) -> aimprob.ActionGrid:
        tag = "centers" if aims is not None else f"{resolution}mm"
        key = f"grid_{player}_{action_set}_{tag}_{mode}_{self._models_hash(player, mode)}"
        stem = self.cache_dir() / key
        if stem.with_suffix(".json").exists():
            return aimprob.load_grid(stem)
        flagged = tuple(self.low_coverage_regions())
        if action_set == aimprob.SINGLE:
            db_entry = None
            try:
                db_entry = self.model(player, "DB", mode)["model"]
            except KeyError:
                pass
            grid = aimprob.build_action_grid(self.pseudo(player), aimprob.SINGLE,
                                             self.spec, flagged=flagged,
                                             db_model=db_entry)
        else:
            grid = aimprob.build_action_grid(self.gaussians(player, mode), aimprob.MULTI,
                                             self.spec, resolution=resolution,
                                             aims=aims, flagged=flagged)
        aimprob.save_grid(grid, stem)
        return grid

    def solve(self, player_a: str, player_b: str, actions_a: str, actions_b: str,
              tol: float = 1e-6, start: int = zsg.START_SCORE,
              resolution: float = 3.0, mode: str = emfit.UNBIASED):
        """Cached Nash solve for a player pair; returns (result, cached_flag)."""
        grid_a = self.action_grid(player_a, actions_a, resolution, mode)
        grid_b = self.action_grid(player_b, actions_b, resolution, mode)
        key = (f"solve_{grid_a.content_hash()}_{grid_b.content_hash()}"
               f"_{tol:g}_{start}")
        stem = self.cache_dir() / key
        if stem.with_suffix(".json").exists():
            return zsg.load_solve(stem, grid_a, grid_b), True
        result = zsg.solve_nash(grid_a, grid_b, tol=tol, start=start)
        zsg.save_solve(stem, result, {
            "player_a": player_a, "player_b": player_b,
            "actions_a": actions_a, "actions_b": actions_b,
        })
        return result, False

    def solve_key(self, player_a, player_b, actions_a, actions_b,
                  tol: float = 1e-6, start: int = zsg.START_SCORE,
                  resolution: float = 3.0, mode: str = emfit.UNBIASED) -> str:
        h = hashlib.sha256()
        for part in (player_a, player_b, actions_a, actions_b,
                     f"{tol:g}", str(start), f"{resolution:g}", mode,
                     self._models_hash(player_a, mode), self._models_hash(player_b, mode)):
            h.update(str(part).encode())
        return h.hexdigest()[:20]
