"""Two-player zero-sum solver for legs of 501, plus match arithmetic.

State and dynamics
------------------
A leg state is (sa, sb, t, i, u): both turn-start scores, whose turn it is,
throws left in the turn, and the score accumulated so far within the turn.
A throw scoring s with rem = own_score - u - s ends the leg iff rem == 0 by
a double; it busts (turn void, scores revert) iff rem < 2 or rem == 0
without a double; otherwise the turn continues or, after the third dart,
hands over with the thrower's score reduced.

Solution method
---------------
Values are win probabilities for the reference player A.  Turn-start states
with the same score pair couple only through zero-progress turns (busts and
three misses), so each score pair (sa, sb) is one "layer": given both
players' turn-exit distributions, the two turn-start values solve the 2x2
linear system

    V_Athrows = a + b * V_Bthrows,    V_Bthrows = c + d * V_Athrows,

where b and d are the zero-progress probabilities (b*d < 1 whenever someone
can score).  A best-response sweep fixes one player's within-turn policy
(replayed from a stored action table) and optimizes the other by policy
iteration per layer: optimize within-turn actions given the coupled value,
re-solve the 2x2 exactly, repeat until the actions are stable.  Alternating
best responses from the turn-minimizing checkout policy converges to the
equilibrium in a few rounds.

Within-turn states that can neither bust nor return to the turn start
depend only on the thrower's remaining score, not on the layer, so their
values and actions are shared across layers of a sweep; each layer then
touches only the handful of coupling-dependent states.

Scores are processed with the optimizer's score ascending in the inner
loop, so every transition lands on an already-solved entry; no transition
increases the total of the two scores.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import binom

from . import board
from .aimprob import ActionGrid
from .errors import NumericalError

MAX_DART = 60
START_SCORE = 501
PLAYER_A = "A"
PLAYER_B = "B"

# u-indexed slot layout for per-layer action tables: one slot for the
# 3-throws state, 61 for 2-throws (u = 0..60), 121 for 1-throw (u = 0..120).
SLOTS = 1 + 61 + 121
_SLOT_BASE = {3: 0, 2: 1, 1: 62}

FINISH_SCORES = tuple(list(range(2, 41, 2)) + [50])

# Epsilon cost per dart in the checkout DP: among policies with equal
# expected turns, prefer the one that checks out with fewer darts.
DART_TIEBREAK = 1e-9


@dataclass(frozen=True)
class GameState:
    """Turn-resolved leg state.  Scores are the standing scores at the start
    of the current turn; ``u`` is the thrower's running total within it."""

    sa: int
    sb: int
    turn: str
    throws_left: int
    u: int = 0

    def __post_init__(self):
        for s in (self.sa, self.sb):
            if not (s == 0 or 2 <= s <= START_SCORE):
                raise ValueError(f"score {s} outside {{0, 2..501}}")
        if self.turn not in (PLAYER_A, PLAYER_B):
            raise ValueError(f"turn must be 'A' or 'B', got {self.turn!r}")
        if self.throws_left not in (1, 2, 3):
            raise ValueError("throws_left must be 1..3")
        if not 0 <= self.u <= (3 - self.throws_left) * MAX_DART:
            raise ValueError(f"u={self.u} unreachable with {self.throws_left} throws left")

    @property
    def terminal(self) -> bool:
        return self.sa == 0 or self.sb == 0

    def thrower_score(self) -> int:
        return self.sa if self.turn == PLAYER_A else self.sb


class Transition(NamedTuple):
    state: GameState | None     # None when the leg ended
    winner: str | None
    event: str                  # "continue" | "turn_end" | "bust" | "checkout"


def turn_transition(state: GameState, outcome: str) -> Transition:
    """Apply one dart's outcome to a non-terminal state, per the leg rules."""
    if state.terminal:
        raise ValueError("cannot throw from a terminal state")
    score = board.numeric_score(outcome)
    u_new = state.u + score
    rem = state.thrower_score() - u_new
    other = PLAYER_B if state.turn == PLAYER_A else PLAYER_A

    if rem == 0 and board.is_double(outcome):
        return Transition(None, state.turn, "checkout")
    if rem < 2:
        return Transition(GameState(state.sa, state.sb, other, 3, 0), None, "bust")
    if state.throws_left > 1:
        return Transition(
            GameState(state.sa, state.sb, state.turn, state.throws_left - 1, u_new),
            None, "continue")
    if state.turn == PLAYER_A:
        nxt = GameState(rem, state.sb, other, 3, 0)
    else:
        nxt = GameState(state.sa, rem, other, 3, 0)
    return Transition(nxt, None, "turn_end")


def enumerate_transitions(state: GameState) -> dict[str, Transition]:
    """Next state for every outcome label; drives clients stepping a leg."""
    return {o: turn_transition(state, o) for o in board.OUTCOMES}


class _LayerGeom:
    """Per-(tables, own-score) index caches shared by value and exit passes."""

    __slots__ = ("rems", "idx", "valid", "fin_cols", "bust_base", "u_of", "dyn",
                 "dyn_geom")

    def __init__(self, tabs: "SolverTables", s_own: int):
        self.rems = {3: np.array([s_own])}
        for rt, u_set in ((2, tabs.u1), (1, tabs.u2)):
            rem = s_own - u_set
            self.rems[rt] = rem[rem >= 2][::-1].copy()  # ascending rem
        s_range = np.arange(MAX_DART + 1)
        self.idx = {}
        self.valid = {}
        self.fin_cols = {}
        self.bust_base = {}
        self.u_of = {}
        self.dyn = {}
        self.dyn_geom = {}

        def _level(rems):
            idx = rems[:, None] - s_range[None, :]
            valid = idx >= 2
            idx = np.where(valid, idx, 0).astype(np.int64)
            low = rems <= MAX_DART + 1
            if np.any(low):
                cols = rems[low]
                fin = np.where(cols[None, :] <= MAX_DART,
                               tabs.finish[:, np.minimum(cols, MAX_DART)], 0.0)
                bust = 1.0 - tabs.cum[:, cols - 2] - fin
            else:
                fin = bust = None
            return idx, valid, (low, fin), bust

        for rt in (1, 2, 3):
            rems = self.rems[rt]
            geom_full = _level(rems)
            self.idx[rt], self.valid[rt], self.fin_cols[rt], self.bust_base[rt] = geom_full
            self.u_of[rt] = s_own - rems
            dyn_mask = (rems <= MAX_DART + 1 + MAX_DART * (rt - 1)) | (rems == s_own)
            self.dyn[rt] = rems[dyn_mask]
            if dyn_mask.all():
                self.dyn_geom[rt] = geom_full
            else:
                self.dyn_geom[rt] = _level(self.dyn[rt])


class SolverTables:
    """Score-level probability tables derived from an ActionGrid."""

    def __init__(self, grid: ActionGrid):
        self.grid = grid
        scores = np.array([board.numeric_score(o) for o in board.OUTCOMES])
        a = len(grid)
        pmf = np.zeros((a, MAX_DART + 1))
        for k, s in enumerate(scores):
            pmf[:, s] += grid.probs[:, k]
        finish = np.zeros((a, MAX_DART + 1))
        for r in FINISH_SCORES:
            label = "DB" if r == 50 else f"D{r // 2}"
            finish[:, r] = grid.probs[:, board.OUTCOME_INDEX[label]]
        self.pmf = pmf
        self.cum = np.cumsum(pmf, axis=1)
        self.finish = finish
        self.n_actions = a
        support = np.flatnonzero(pmf.max(axis=0) > 0)
        self.u1 = support
        self.u2 = np.unique(support[:, None] + support[None, :])
        self._geom: dict[int, _LayerGeom] = {}

    def bust_prob(self, rem: int) -> np.ndarray:
        """Per-action probability of busting at a remaining score."""
        if rem > MAX_DART + 1:
            return np.zeros(self.n_actions)
        return 1.0 - self.cum[:, rem - 2] - self.finish[:, rem]

    def geom(self, s_own: int) -> _LayerGeom:
        g = self._geom.get(s_own)
        if g is None:
            g = self._geom[s_own] = _LayerGeom(self, s_own)
        return g

    def rems(self, s_own: int) -> dict[int, np.ndarray]:
        """Reachable within-turn remaining scores, by throws left."""
        return self.geom(s_own).rems


def _q_values(tabs: SolverTables, rems: np.ndarray, v_next: np.ndarray,
              x: float, win_value: float, throw_cost: float = 0.0,
              geom_rt=None) -> np.ndarray:
    """Action values for a batch of states at one throws-left level.

    v_next gives continuation values by remaining score and must already
    carry the coupled value where index s_own is reachable.  throw_cost is
    added per dart; the checkout DP uses an epsilon there so that equal
    expected-turn policies prefer the earlier checkout.  geom_rt optionally
    supplies cached (idx, valid, fin, bust) structures for the full level.
    """
    if geom_rt is None:
        idx = rems[:, None] - np.arange(MAX_DART + 1)[None, :]
        idx = np.where(idx >= 2, idx, 0)
        low = rems <= MAX_DART + 1
        fin = bust = None
        if np.any(low):
            cols = rems[low]
            fin = np.where(cols[None, :] <= MAX_DART,
                           tabs.finish[:, np.minimum(cols, MAX_DART)], 0.0)
            bust = 1.0 - tabs.cum[:, cols - 2] - fin
    else:
        idx, _, (low, fin), bust = geom_rt
    # invalid (busting) score columns are indexed to 0, where v_next is
    # guaranteed to be zero (scores below 2 are never written)
    m = v_next[idx]
    q = tabs.pmf @ m.T
    if fin is not None:
        q[:, low] += win_value * fin + x * bust
    if throw_cost:
        q += throw_cost
    return q


def _q_single(tabs: SolverTables, rem: int, v_next: np.ndarray, x: float,
              win_value: float, throw_cost: float = 0.0) -> np.ndarray:
    """Action values for one state; contiguous-slice fast path."""
    if rem > MAX_DART + 1:
        q = tabs.pmf @ v_next[rem - MAX_DART: rem + 1][::-1]
    else:
        vec = np.zeros(MAX_DART + 1)
        vec[: rem - 1] = v_next[2: rem + 1][::-1]
        q = tabs.pmf @ vec
        fin = tabs.finish[:, rem] if rem <= MAX_DART else 0.0
        q = q + win_value * fin + x * (1.0 - tabs.cum[:, rem - 2] - fin)
    if throw_cost:
        q = q + throw_cost
    return q


class _TurnDP:
    """Within-turn DP for one thrower at one layer.

    Holds dense value/action arrays indexed by remaining score.  States that
    can neither bust nor reach the turn-start coupling are layer-independent;
    when the caller passes shared arrays (filled by earlier layers of the
    same sweep) those states are copied in and only the coupling-dependent
    subset needs optimizing.
    """

    def __init__(self, tabs, s_own, shared_v, shared_a):
        self.tabs = tabs
        self.s_own = s_own
        self.geom = tabs.geom(s_own)
        self.rems = self.geom.rems
        self.v = {rt: np.zeros(s_own + 1) for rt in (1, 2, 3)}
        self.a = {rt: np.full(s_own + 1, -1, dtype=np.int64) for rt in (1, 2, 3)}
        self.prefilled = shared_v is not None
        self.dyn = self.geom.dyn
        if shared_v is not None:
            for rt in (1, 2):
                r = self.rems[rt]
                stat = r[~((r <= MAX_DART + 1 + MAX_DART * (rt - 1)) | (r == s_own))]
                if len(stat):
                    self.v[rt][stat] = shared_v[rt][stat]
                    self.a[rt][stat] = shared_a[rt][stat]

    def _level_q(self, rt, rems, v_next, x, win_value, throw_cost, full):
        if full:
            geom_rt = (self.geom.idx[rt], self.geom.valid[rt],
                       self.geom.fin_cols[rt], self.geom.bust_base[rt])
        else:
            geom_rt = self.geom.dyn_geom[rt]
        return _q_values(self.tabs, rems, v_next, x, win_value, throw_cost, geom_rt)

    def optimize(self, w, x, win_value, maximize, subset_only=False, throw_cost=0.0):
        """(Re)optimize states; with subset_only, just the coupling-dependent ones."""
        changed = False
        for rt in (1, 2, 3):
            rems = self.dyn[rt] if subset_only else self.rems[rt]
            n = len(rems)
            if n == 0:
                continue
            v_next = w if rt == 1 else self.v[rt - 1]
            if n <= 4:
                for rem in rems:
                    q = _q_single(self.tabs, int(rem), v_next, x, win_value, throw_cost)
                    a = int(q.argmax() if maximize else q.argmin())
                    if self.a[rt][rem] != a:
                        changed = True
                        self.a[rt][rem] = a
                    self.v[rt][rem] = q[a]
                continue
            full = rems is self.rems[rt] or n == len(self.rems[rt])
            q = self._level_q(rt, rems, v_next, x, win_value, throw_cost, full=full)
            acts = np.argmax(q, axis=0) if maximize else np.argmin(q, axis=0)
            vals = q[acts, np.arange(n)]
            if not changed and np.any(self.a[rt][rems] != acts):
                changed = True
            self.v[rt][rems] = vals
            self.a[rt][rems] = acts
        return changed

    def evaluate(self, w, x, win_value, actions):
        """Value the given fixed actions (policy evaluation, no argopt)."""
        for rt in (1, 2, 3):
            rems = self.rems[rt]
            if len(rems) == 0:
                continue
            v_next = w if rt == 1 else self.v[rt - 1]
            q = self._level_q(rt, rems, v_next, x, win_value, 0.0, full=True)
            self.a[rt][rems] = actions[rt][rems]
            self.v[rt][rems] = q[self.a[rt][rems], np.arange(len(rems))]


def _exit_distribution(tabs: SolverTables, s_own: int, actions: dict[int, np.ndarray],
                       geom: _LayerGeom):
    """Turn-level exit probabilities under fixed within-turn actions.

    Returns (p_finish, p_rem) with p_rem[r] the probability the turn ends
    with the thrower's standing score r; busts and zero-score turns land in
    p_rem[s_own].
    """
    cur = np.zeros(s_own + 1)
    cur[s_own] = 1.0
    p_finish = 0.0
    p_rem = np.zeros(s_own + 1)
    bustable = s_own <= 3 * MAX_DART + 1  # some state may reach rem <= 61
    for rt in (3, 2, 1):
        rems_rt = geom.rems[rt]
        q = cur[rems_rt]
        live = q > 0
        if not live.any():
            break
        acts = actions[rt][rems_rt]
        wts = tabs.pmf[acts]
        wts *= q[:, None]
        wts *= geom.valid[rt]  # keep bust mass out of the scatter bins
        if bustable:
            rems_live = rems_rt[live]
            q_live = q[live]
            a_live = acts[live]
            low = rems_live <= MAX_DART + 1
            fin = np.where(rems_live <= MAX_DART,
                           tabs.finish[a_live, np.minimum(rems_live, MAX_DART)], 0.0)
            p_finish += float(q_live @ fin)
            if low.any():
                bust = 1.0 - tabs.cum[a_live[low], rems_live[low] - 2] - fin[low]
                p_rem[s_own] += float(q_live[low] @ bust)
        flat = np.bincount(geom.idx[rt].ravel(), weights=wts.ravel(),
                           minlength=s_own + 1)[: s_own + 1]
        if rt > 1:
            cur = flat
        else:
            p_rem += flat
    return p_finish, p_rem


class StoredPolicy:
    """Within-turn actions for every layer, as produced by a sweep.

    ``table[sa, sb, slot]`` is the action index for the owner's state with
    the slot encoding (throws_left, u); -1 marks never-solved slots.
    """

    def __init__(self, side: str, grid: ActionGrid, start: int):
        self.side = side
        self.grid = grid
        self.start = start
        dtype = np.int32 if len(grid) > 32000 else np.int16
        self.table = np.full((start + 1, start + 1, SLOTS), -1, dtype=dtype)

    def store(self, sa: int, sb: int, dp: _TurnDP) -> None:
        s_own = dp.s_own
        row = self.table[sa, sb]
        for rt in (1, 2, 3):
            rems = dp.rems[rt]
            row[_SLOT_BASE[rt] + (s_own - rems)] = dp.a[rt][rems]

    def layer_actions(self, sa: int, sb: int, s_own: int,
                      geom: _LayerGeom | None = None) -> dict[int, np.ndarray]:
        """Dense rem-indexed action arrays for one layer."""
        row = self.table[sa, sb]
        out = {}
        for rt in (1, 2, 3):
            dense = np.full(s_own + 1, -1, dtype=np.int64)
            if geom is not None:
                rems = geom.rems[rt]
                dense[rems] = row[_SLOT_BASE[rt] + geom.u_of[rt]]
            else:
                u = np.arange(0, (3 - rt) * MAX_DART + 1)
                rem = s_own - u
                keep = rem >= 2
                dense[rem[keep]] = row[_SLOT_BASE[rt] + u[keep]]
            out[rt] = dense
        return out

    def action_index(self, state: GameState) -> int:
        if state.turn != self.side:
            raise ValueError(f"policy belongs to player {self.side}")
        a = int(self.table[state.sa, state.sb, _SLOT_BASE[state.throws_left] + state.u])
        if a < 0:
            raise KeyError(f"no action stored for {state}")
        return a

    def aim_point(self, state: GameState) -> np.ndarray:
        return self.grid.aims[self.action_index(state)]


class CheckoutPolicy:
    """Single-player turn-minimizing policy; opponent-blind.

    Presents the same layer interface as StoredPolicy so it can seed the
    first best-response sweep.
    """

    def __init__(self, side: str, grid: ActionGrid, start: int):
        self.side = side
        self.grid = grid
        self.start = start
        self.expected_turns = np.full(start + 1, np.nan)
        self.table = np.full((start + 1, SLOTS), -1, dtype=np.int64)

    def store(self, s_own: int, dp: _TurnDP) -> None:
        row = self.table[s_own]
        for rt in (1, 2, 3):
            rems = dp.rems[rt]
            row[_SLOT_BASE[rt] + (s_own - rems)] = dp.a[rt][rems]

    def layer_actions(self, sa: int, sb: int, s_own: int,
                      geom: _LayerGeom | None = None) -> dict[int, np.ndarray]:
        row = self.table[s_own]
        out = {}
        for rt in (1, 2, 3):
            dense = np.full(s_own + 1, -1, dtype=np.int64)
            if geom is not None:
                rems = geom.rems[rt]
                dense[rems] = row[_SLOT_BASE[rt] + geom.u_of[rt]]
            else:
                u = np.arange(0, (3 - rt) * MAX_DART + 1)
                rem = s_own - u
                keep = rem >= 2
                dense[rem[keep]] = row[_SLOT_BASE[rt] + u[keep]]
            out[rt] = dense
        return out

    def action_index(self, state: GameState) -> int:
        a = int(self.table[state.thrower_score(), _SLOT_BASE[state.throws_left] + state.u])
        if a < 0:
            raise KeyError(f"no action stored for {state}")
        return a


def _solve_layer(tabs, s_own, w, cd, win_value, maximize, dp, x0, max_rounds=60,
                 throw_cost=0.0):
    """Policy iteration for one layer's thrower against coupling X = c + d*V.

    Returns (V_own_turn, X, exits).  ``w`` is the dense hand-over value
    vector; its index s_own is managed here.  Exit distributions are only
    recomputed when the within-turn actions change.
    """
    c, d = cd
    x = x0
    first = True
    a_const = b_const = 0.0
    exits = None
    for _ in range(max_rounds):
        w[s_own] = x
        # With shared prefill only the coupling-dependent states ever change.
        changed = dp.optimize(w, x, win_value, maximize,
                              subset_only=dp.prefilled or not first,
                              throw_cost=throw_cost)
        if changed or exits is None:
            exits = _exit_distribution(tabs, s_own, dp.a, dp.geom)
            exits_f, exits_rem = exits
            a_const = exits_f * win_value + float(exits_rem[2:s_own] @ w[2:s_own])
            b_const = float(exits_rem[s_own])
        denom = 1.0 - b_const * d
        if denom <= 1e-15:
            raise NumericalError("degenerate_dynamics: both turns stall with probability 1")
        v_own = (a_const + b_const * c) / denom
        x_new = c + d * v_own
        if not first and not changed and abs(x_new - x) <= 1e-14 * (1.0 + abs(x_new)):
            return v_own, x_new, exits
        x = x_new
        first = False
    raise NumericalError(f"layer policy iteration failed to settle at score {s_own}")




def _append_shared(tabs, s_me, w_final, shared_v, shared_a, win_value,
                   maximize, throw_cost=0.0):
    """Extend the layer-independent state values after a layer is solved.

    For remaining scores above the bust range the within-turn value depends
    only on the hand-over vector, so it is defined by its own recursion:
    one-throw values from the hand-over values, two-throw values from the
    one-throw values.  Harvesting them from each layer's chain state would
    break on grids without a zero-score outcome.
    """
    if s_me <= MAX_DART + 1:
        return
    q1 = _q_single(tabs, s_me, w_final, 0.0, win_value, throw_cost)
    a1 = int(q1.argmax() if maximize else q1.argmin())
    shared_v[1][s_me] = q1[a1]
    shared_a[1][s_me] = a1
    if s_me > 2 * MAX_DART + 1:
        q2 = _q_single(tabs, s_me, shared_v[1], 0.0, win_value, throw_cost)
        a2 = int(q2.argmax() if maximize else q2.argmin())
        shared_v[2][s_me] = q2[a2]
        shared_a[2][s_me] = a2

def checkout_policy(grid: ActionGrid, start: int = START_SCORE,
                    side: str = PLAYER_A) -> CheckoutPolicy:
    """DP policy minimizing the expected number of turns to check out."""
    tabs = SolverTables(grid)
    pol = CheckoutPolicy(side, grid, start)
    v = pol.expected_turns
    v[:2] = 0.0
    shared_v = {rt: np.zeros(start + 1) for rt in (1, 2, 3)}
    shared_a = {rt: np.full(start + 1, -1, dtype=np.int64) for rt in (1, 2, 3)}
    for s in range(2, start + 1):
        dp = _TurnDP(tabs, s, shared_v, shared_a)
        w = v[: s + 1].copy()
        x0 = v[s - 1] + 1.0 if s > 2 and np.isfinite(v[s - 1]) else 1.0
        try:
            v_turn, x, _ = _solve_layer(tabs, s, w, (1.0, 1.0), 0.0, False, dp, x0,
                                        throw_cost=DART_TIEBREAK)
        except NumericalError as e:
            raise NumericalError(f"no checkout path from score {s}: {e}") from e
        v[s] = x  # = 1 + v_turn
        pol.store(s, dp)
        w[s] = x
        _append_shared(tabs, s, w, shared_v, shared_a, 0.0, False,
                       throw_cost=DART_TIEBREAK)
    return pol


@dataclass
class BestResponse:
    """One sweep's output: the optimizer's policy and both value arrays."""

    policy: StoredPolicy
    va: np.ndarray      # P(A wins), A to throw, indexed [sa, sb]
    vb: np.ndarray      # P(A wins), B to throw


def best_response(opponent, my_grid: ActionGrid, optimize: str,
                  start: int = START_SCORE, warm=None) -> BestResponse:
    """Exact best response of one player against a frozen opponent policy.

    ``opponent`` is a StoredPolicy or CheckoutPolicy for the other side.
    Solves every layer (score pair) bottom-up; within a layer the coupled
    turn-start pair is solved exactly from the 2x2 linear system.  ``warm``
    optionally carries (va, vb) from a previous sweep as starting guesses
    for the coupled values, which shortens the per-layer policy iteration.
    """
    if optimize not in (PLAYER_A, PLAYER_B):
        raise ValueError("optimize must be 'A' or 'B'")
    my_tabs = SolverTables(my_grid)
    opp_tabs = SolverTables(opponent.grid)
    va = np.zeros((start + 1, start + 1))
    vb = np.zeros((start + 1, start + 1))
    pol = StoredPolicy(optimize, my_grid, start)
    win_value = 1.0 if optimize == PLAYER_A else 0.0
    maximize = optimize == PLAYER_A

    # Checkout policies ignore the other score, so their exit distributions
    # can be reused across a whole inner loop.
    opp_blind = isinstance(opponent, CheckoutPolicy)

    # Outer loop over the opponent's score so the optimizer's hand-over
    # vector grows along the inner loop and no-bust values can be shared.
    for s_opp in range(2, start + 1):
        shared_v = {rt: np.zeros(start + 1) for rt in (1, 2, 3)}
        shared_a = {rt: np.full(start + 1, -1, dtype=np.int64) for rt in (1, 2, 3)}
        blind_exit = None
        for s_me in range(2, start + 1):
            sa, sb = (s_me, s_opp) if optimize == PLAYER_A else (s_opp, s_me)
            # Frozen side: replay its actions, get its exit distribution.
            if opp_blind and blind_exit is not None:
                opp_f, opp_rem = blind_exit
            else:
                opp_geom = opp_tabs.geom(s_opp)
                opp_actions = opponent.layer_actions(sa, sb, s_opp, opp_geom)
                opp_f, opp_rem = _exit_distribution(opp_tabs, s_opp, opp_actions, opp_geom)
                if opp_blind:
                    blind_exit = (opp_f, opp_rem)
            if optimize == PLAYER_A:
                # B's turn hands over to A-throws states at reduced B scores.
                c = float(opp_rem[2:s_opp] @ va[sa, 2:s_opp])
                d = float(opp_rem[s_opp])
                w = vb[: s_me + 1, sb].copy()
                if warm is not None:
                    x0 = warm[1][sa, sb]
                else:
                    x0 = vb[s_me - 1, sb] if s_me > 2 else 0.5
            else:
                c = opp_f * 1.0 + float(opp_rem[2:s_opp] @ vb[2:s_opp, sb])
                d = float(opp_rem[s_opp])
                w = va[sa, : s_me + 1].copy()
                if warm is not None:
                    x0 = warm[0][sa, sb]
                else:
                    x0 = va[sa, s_me - 1] if s_me > 2 else 0.5
            dp = _TurnDP(my_tabs, s_me, shared_v, shared_a)
            v_own, x, _ = _solve_layer(my_tabs, s_me, w, (c, d), win_value, maximize, dp, x0)
            if optimize == PLAYER_A:
                va[sa, sb] = v_own
                vb[sa, sb] = x
            else:
                vb[sa, sb] = v_own
                va[sa, sb] = x
            pol.store(sa, sb, dp)
            w[s_me] = x
            _append_shared(my_tabs, s_me, w, shared_v, shared_a, win_value, maximize)
    return BestResponse(policy=pol, va=va, vb=vb)


@dataclass
class NashResult:
    """Converged equilibrium: policies for both players and the value arrays."""

    policy_a: StoredPolicy
    policy_b: StoredPolicy | CheckoutPolicy
    va: np.ndarray
    vb: np.ndarray
    rounds: int
    gap_trace: tuple[float, ...]
    start: int
    tol: float

    @property
    def p_a_star(self) -> float:
        """Equilibrium P(A wins a leg) when A throws first."""
        return float(self.va[self.start, self.start])

    @property
    def p_b_star(self) -> float:
        """Equilibrium P(A wins a leg) when B throws first."""
        return float(self.vb[self.start, self.start])

    def value(self, state: GameState) -> float:
        """Win probability for A at any state under the equilibrium policies."""
        if state.terminal:
            return 1.0 if state.sa == 0 else 0.0
        if state.throws_left == 3 and state.u == 0:
            arr = self.va if state.turn == PLAYER_A else self.vb
            return float(arr[state.sa, state.sb])
        v, _ = self._turn_values(state.sa, state.sb, state.turn)
        return float(v[state.throws_left][state.thrower_score() - state.u])

    def policy(self, side: str):
        return self.policy_a if side == PLAYER_A else self.policy_b

    def _turn_values(self, sa: int, sb: int, turn: str):
        """Within-turn value arrays for a layer under the stored policies."""
        pol = self.policy(turn)
        tabs = SolverTables(pol.grid) if not hasattr(pol, "_tabs") else pol._tabs
        pol._tabs = tabs
        s_own = sa if turn == PLAYER_A else sb
        if turn == PLAYER_A:
            w = self.vb[: sa + 1, sb].copy()
            x = self.vb[sa, sb]
            win_value = 1.0
        else:
            w = self.va[sa, : sb + 1].copy()
            x = self.va[sa, sb]
            win_value = 0.0
        w[s_own] = x
        dp = _TurnDP(tabs, s_own, None, None)
        dp.evaluate(w, x, win_value, pol.layer_actions(sa, sb, s_own))
        return dp.v, (w, x, win_value, tabs)


def solve_nash(grid_a: ActionGrid, grid_b: ActionGrid, tol: float = 1e-6,
               max_rounds: int = 20, start: int = START_SCORE) -> NashResult:
    """Alternating exact best responses until the value arrays settle.

    B opens with its checkout (turn-minimizing) policy; each round is one
    best-response sweep.  Converged when a sweep moves no state value by
    more than tol.  Raises NumericalError with the gap trace on timeout.
    """
    policies = {PLAYER_A: None, PLAYER_B: checkout_policy(grid_b, start, PLAYER_B)}
    grids = {PLAYER_A: grid_a, PLAYER_B: grid_b}
    va = vb = None
    gaps: list[float] = []
    side = PLAYER_A
    for rounds in range(1, max_rounds + 1):
        other = PLAYER_B if side == PLAYER_A else PLAYER_A
        warm = None if va is None else (va, vb)
        br = best_response(policies[other], grids[side], side, start, warm=warm)
        if va is not None:
            gaps.append(float(max(np.abs(br.va - va).max(), np.abs(br.vb - vb).max())))
        va, vb = br.va, br.vb
        policies[side] = br.policy
        if gaps and gaps[-1] < tol and policies[PLAYER_A] is not None:
            return NashResult(policy_a=policies[PLAYER_A], policy_b=policies[PLAYER_B],
                              va=va, vb=vb, rounds=rounds, gap_trace=tuple(gaps),
                              start=start, tol=tol)
        side = other
    raise NumericalError(f"Nash iteration did not converge in {max_rounds} rounds; "
                         f"gap trace {gaps}")


def action_values(result: NashResult, state: GameState,
                  grid: ActionGrid | None = None) -> np.ndarray:
    """Win probability (for A) of every aim at a state, one throw lookahead,
    equilibrium play afterwards.  Defaults to the thrower's own grid."""
    if state.terminal:
        raise ValueError("terminal state has no actions")
    pol = result.policy(state.turn)
    grid = grid if grid is not None else pol.grid
    tabs = SolverTables(grid)
    v, (w, x, win_value, _) = result._turn_values(state.sa, state.sb, state.turn)
    rem = state.thrower_score() - state.u
    v_next = w if state.throws_left == 1 else v[state.throws_left - 1]
    q = _q_values(tabs, np.array([rem]), v_next, x, win_value)
    return q[:, 0]


def heatmap(result: NashResult, state: GameState, grid: ActionGrid):
    """Per-aim win probabilities for the thrower over a (multi) action grid.

    Returns (aims, values, best_index) with values oriented so that larger
    is better for the thrower.
    """
    q = action_values(result, state, grid)
    values = q if state.turn == PLAYER_A else 1.0 - q
    best = int(np.argmax(values))
    return grid.aims, values, best


def match_win_prob(p_a_star: float, p_b_star: float, legs: int) -> float:
    """P(A wins a first-to-(K+1) match of N = 2K+1 legs, A starting leg 1).

    Players alternate starting legs; p_a_star and p_b_star are A's leg-win
    probabilities in legs started by A and B respectively.  Exact binomial
    conditioning: A wins j of its K+1 starts and at least K+1-j of B's K.
    """
    if not (0.0 <= p_a_star <= 1.0 and 0.0 <= p_b_star <= 1.0):
        raise ValueError("leg win probabilities must lie in [0, 1]")
    if legs < 1 or legs % 2 == 0:
        raise ValueError("match length must be an odd positive number of legs")
    k = (legs - 1) // 2
    total = 0.0
    for j in range(1, k + 2):
        need = k + 1 - j
        p_b_at_least = 1.0 - binom.cdf(need - 1, k, p_b_star) if need > 0 else 1.0
        total += p_b_at_least * binom.pmf(j, k + 1, p_a_star)
    return float(total)


def compare_action_sets(multi_grid: ActionGrid, single_grid: ActionGrid,
                        legs: Sequence[int], tol: float = 1e-6,
                        start: int = START_SCORE) -> dict:
    """Self-match of a multi-action player against the single-action variant.

    Returns per-N win probabilities for whichever player throws first and
    the multi-player's edge (gap), all as fractions.
    """
    res = solve_nash(multi_grid, single_grid, tol=tol, start=start)
    p_multi_first = res.p_a_star
    p_multi_second = res.p_b_star
    rows = []
    for n in legs:
        multi_first = match_win_prob(p_multi_first, p_multi_second, n)
        single_first = match_win_prob(1.0 - p_multi_second, 1.0 - p_multi_first, n)
        rows.append({"legs": n, "multi_first": multi_first,
                     "single_first": single_first,
                     "gap": multi_first - single_first})
    return {"p_leg_multi_first": p_multi_first,
            "p_leg_single_first": 1.0 - p_multi_second,
            "rows": rows, "rounds": res.rounds}


def save_solve(stem, result: NashResult, key: dict) -> None:
    """Cache a solve: value arrays and policy tables plus a JSON manifest."""
    stem = Path(stem)
    np.savez_compressed(stem.with_suffix(".npz"), va=result.va, vb=result.vb,
                        policy_a=result.policy_a.table, policy_b=result.policy_b.table)
    manifest = dict(key)
    manifest.update({"rounds": result.rounds, "start": result.start, "tol": result.tol,
                     "gap_trace": list(result.gap_trace),
                     "p_a_star": result.p_a_star, "p_b_star": result.p_b_star})
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=2))


def load_solve(stem, grid_a: ActionGrid, grid_b: ActionGrid) -> NashResult:
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    data = np.load(stem.with_suffix(".npz"))
    start = manifest["start"]
    pol_a = StoredPolicy(PLAYER_A, grid_a, start)
    pol_a.table = data["policy_a"]
    pol_b = StoredPolicy(PLAYER_B, grid_b, start)
    pol_b.table = data["policy_b"]
    return NashResult(policy_a=pol_a, policy_b=pol_b, va=data["va"], vb=data["vb"],
                      rounds=manifest["rounds"], gap_trace=tuple(manifest["gap_trace"]),
                      start=start, tol=manifest["tol"])


def export_policy_json(policy, states: Sequence[GameState]) -> str:
    """JSON map from state tuples to aim coordinates for selected states."""
    entries = []
    for s in states:
        a = policy.action_index(s)
        aim = policy.grid.aims[a]
        entries.append({"state": [s.sa, s.sb, s.turn, s.throws_left, s.u],
                        "action": int(a), "aim": [float(aim[0]), float(aim[1])]})
    return json.dumps(entries, indent=2)
