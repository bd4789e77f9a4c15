"""Independent oracles for solver tests: exhaustive state enumeration,
dense absorption solves, and vectorized Monte Carlo rollouts.

Everything here works from the game rules (turn_transition) and the raw
action-grid probabilities only, never from the solver's internals, so these
are genuinely independent checks of the DP values.
"""

import numpy as np

from dartsolve import zsg
from dartsolve.board import OUTCOMES

A_WIN, B_WIN = -1, -2


def enumerate_states(grid_a, grid_b, start):
    """All reachable non-terminal states of a game truncated at ``start``."""
    tabs = {"A": zsg.SolverTables(grid_a), "B": zsg.SolverTables(grid_b)}
    states = []
    for sa in range(2, start + 1):
        for sb in range(2, start + 1):
            for t in "AB":
                s_own = sa if t == "A" else sb
                u_sets = {3: np.array([0]), 2: tabs[t].u1, 1: tabs[t].u2}
                for i, u_set in u_sets.items():
                    for u in u_set:
                        if s_own - u >= 2 and u <= (3 - i) * zsg.MAX_DART:
                            states.append(zsg.GameState(sa, sb, t, i, int(u)))
    return states


def transition_tables(result, grid_a, grid_b, states):
    """Per-state cumulative outcome probabilities and successor indices
    under the solved policies (terminals encoded as A_WIN / B_WIN)."""
    index = {s: k for k, s in enumerate(states)}
    n = len(states)
    cum = np.zeros((n, len(OUTCOMES)))
    nxt = np.zeros((n, len(OUTCOMES)), dtype=np.int64)
    for s, k in index.items():
        grid = grid_a if s.turn == "A" else grid_b
        action = result.policy(s.turn).action_index(s)
        probs = grid.probs[action]
        cum[k] = np.cumsum(probs)
        for oi, outcome in enumerate(OUTCOMES):
            if probs[oi] <= 0:
                nxt[k, oi] = A_WIN  # unreachable branch, never drawn
                continue
            tr = zsg.turn_transition(s, outcome)
            if tr.winner is not None:
                nxt[k, oi] = A_WIN if tr.winner == "A" else B_WIN
            else:
                nxt[k, oi] = index[tr.state]
    return index, cum, nxt


def absorption_values(result, grid_a, grid_b, states):
    """Dense linear solve for P(A wins) from every state under the policies."""
    index, cum, nxt = transition_tables(result, grid_a, grid_b, states)
    n = len(states)
    p = np.zeros((n, n))
    r = np.zeros(n)
    probs = np.diff(np.concatenate([np.zeros((n, 1)), cum], axis=1), axis=1)
    for k in range(n):
        for oi in range(len(OUTCOMES)):
            pr = probs[k, oi]
            if pr <= 0:
                continue
            tgt = nxt[k, oi]
            if tgt == A_WIN:
                r[k] += pr
            elif tgt != B_WIN:
                p[k, tgt] += pr
    return index, np.linalg.solve(np.eye(n) - p, r)


def rollout_win_prob(result, grid_a, grid_b, initial, trials, seed, max_steps=10_000):
    """Monte Carlo estimate of P(A wins) from ``initial`` under the policies.

    Returns (estimate, standard_error)."""
    states = enumerate_states(grid_a, grid_b, max(initial.sa, initial.sb))
    index, cum, nxt = transition_tables(result, grid_a, grid_b, states)
    rng = np.random.default_rng(seed)
    cur = np.full(trials, index[initial], dtype=np.int64)
    wins = 0
    for _ in range(max_steps):
        live = cur >= 0
        if not live.any():
            break
        ids = cur[live]
        draws = rng.random(len(ids))
        k = (draws[:, None] > cum[ids]).sum(axis=1)
        cur[live] = nxt[ids, np.minimum(k, len(OUTCOMES) - 1)]
    else:
        raise RuntimeError("rollouts did not all terminate")
    wins = int((cur == A_WIN).sum())
    p = wins / trials
    return p, np.sqrt(max(p * (1 - p), 1e-12) / trials)


def simulate_match(p_a, p_b, legs, trials, seed):
    """Alternating-leg match simulation: A starts leg 1; leg wins are
    Bernoulli with A's win probability p_a (A-started) or p_b (B-started).

    Returns (P(A wins match) estimate, standard error)."""
    rng = np.random.default_rng(seed)
    starts_a = np.arange(legs) % 2 == 0
    p_vec = np.where(starts_a, p_a, p_b)
    wins = rng.random((trials, legs)) < p_vec[None, :]
    a_match_wins = wins.sum(axis=1) >= (legs + 1) // 2
    p = a_match_wins.mean()
    return p, np.sqrt(max(p * (1 - p), 1e-12) / trials)
