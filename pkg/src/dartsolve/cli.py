"""Command-line front door: summarize, fit, solve, heatmap, serve.

Every command echoes its configuration (seed included) into its outputs so
runs are reproducible bit-for-bit.  Exit codes: 0 success, 1 usage error,
2 data validation error, 3 numerical failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, aimprob, board, dataio, dm, emfit, reports, zsg
from .board import BoardSpec, DEFAULT_BOARD
from .errors import DataValidationError, NumericalError
from .store import ModelStore

MODE_FLAGS = {"unbiased": emfit.UNBIASED, "inferred-mu": emfit.INFERRED_MU}


def _load_board(path) -> BoardSpec:
    if path is None:
        return DEFAULT_BOARD
    return BoardSpec.from_json(Path(path).read_text())


def _config_echo(**kwargs) -> dict:
    return {"tool": "dartsolve", "version": __version__, **kwargs}


@click.group()
def cli():
    """Dart skill models and leg/match strategy analysis."""


@cli.command("summarize")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--board", "board_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def cmd_summarize(data, board_path, out):
    """Success rates, expected scores, and coverage per (player, target)."""
    tables = dataio.load_dataset(data)
    rows = dataio.summarize(tables)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    header = ["player", "target", "attempts", "success_rate_pct", "expected_score", "coverage"]
    cells = [[r.player, r.target, r.attempts,
              None if r.success_rate is None else round(100 * r.success_rate, 1),
              None if r.expected_score is None else round(r.expected_score, 1),
              r.coverage] for r in rows]
    reports.write_csv(outdir / "summary.csv", header, cells)
    reports.write_json(outdir / "summary.json", {
        "config": _config_echo(command="summarize", data=str(data)),
        "rows": json.loads(dataio.summary_to_json(rows)),
    })
    (outdir / "summary.txt").write_text(reports.format_table(header, cells))
    click.echo(f"wrote {outdir / 'summary.csv'} ({len(rows)} rows)")


def _fit_one(args):
    player, target, fractions, cfg, spec = args
    try:
        return player, target, emfit.fit(fractions, target, cfg, spec), None
    except Exception as exc:  # collected; the run continues
        return player, target, None, str(exc)


@cli.command("fit")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--board", "board_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True)
@click.option("--estep", type=click.Choice(["is", "grid"]), default="is", show_default=True)
@click.option("--mode", "modes", type=click.Choice(list(MODE_FLAGS)), multiple=True,
              help="Fit mode(s); defaults to both.")
@click.option("--source", type=click.Choice(["dm", "raw"]), default="dm", show_default=True,
              help="Fit on DM pseudo-fractions or raw fractions.")
@click.option("--figures/--no-figures", default=False, show_default=True)
def cmd_fit(data, board_path, out, seed, estep, modes, source, figures):
    """Fit DM priors and Gaussian skill models; emit observed-vs-fitted and
    bias-distance reports."""
    spec = _load_board(board_path)
    tables = dataio.load_dataset(data)
    if not tables:
        raise DataValidationError("dataset is empty")
    modes = tuple(MODE_FLAGS[m] for m in (modes or ("unbiased", "inferred-mu")))
    outdir = Path(out)
    (outdir / "pseudo").mkdir(parents=True, exist_ok=True)
    (outdir / "reports" / "figures").mkdir(parents=True, exist_ok=True)
    (outdir / "board.json").write_text(spec.to_json())

    by_target: dict[str, list] = {}
    for t in tables:
        by_target.setdefault(t.target, []).append(t)

    pseudo: dict[tuple[str, str], dm.PseudoCounts] = {}
    for target, group in sorted(by_target.items()):
        alpha, pcs = dm.fit_region(group)
        dm.save_region(outdir / "pseudo" / f"{target}.json", alpha, pcs)
        for pc in pcs:
            pseudo[(pc.player, target)] = pc

    jobs = []
    for target, group in sorted(by_target.items()):
        for tab in group:
            if tab.n == 0:
                continue
            fr = (pseudo[(tab.player, target)].fractions if source == "dm"
                  else tab.fractions())
            for mode in modes:
                cfg = emfit.FitConfig(mode=mode, estep=estep, seed=seed)
                jobs.append((tab.player, target, fr, cfg, spec))

    entries, failures = [], []
    for job in jobs:
        player, target, result, error = _fit_one(job)
        mode = job[3].mode
        if error is not None:
            failures.append({"player": player, "target": target, "mode": mode,
                             "error": error})
            continue
        entries.append({"player": player, "mode": mode, "model": result.model,
                        "loglik": result.loglik,
                        "meta": {"estep": estep, "seed": seed, "source": source,
                                 "iterations": result.iterations,
                                 "fitted_error": result.fitted_error,
                                 "fitted": result.fitted, "leak": result.leak}})
    emfit.save_models(outdir / "models.json", entries)

    # observed-vs-fitted tables per (target, mode)
    for target, group in sorted(by_target.items()):
        labels = board.outcome_set(target, spec)
        for mode in modes:
            header = ["player"] + [f"{lbl}_{k}" for lbl in labels for k in ("obs", "fit")]
            rows = []
            errs = []
            for tab in group:
                ent = next((e for e in entries if e["player"] == tab.player
                            and e["mode"] == mode and e["model"].target == target), None)
                if ent is None:
                    continue
                fr = (pseudo[(tab.player, target)].fractions if source == "dm"
                      else tab.fractions())
                fitted = ent["meta"]["fitted"]
                row = [tab.player]
                for lbl, f in zip(labels, fr):
                    row += [round(100 * f, 1), round(100 * fitted[lbl], 1)]
                rows.append(row)
                errs.append([abs(fitted[lbl] - f) for lbl, f in zip(labels, fr)])
            if not rows:
                continue
            if errs:
                mean_err = np.mean(np.array(errs), axis=0)
                rows.append(["FittedError"] + [v for e in mean_err
                                               for v in (None, round(100 * e, 1))])
            stem = outdir / "reports" / f"fit_{target}_{mode}_{source}"
            reports.write_csv(stem.with_suffix(".csv"), header, rows)
            stem.with_suffix(".txt").write_text(reports.format_table(header, rows))
            if figures:
                figure_entries = [{"player": e["player"], "model": e["model"],
                                   "mode": e["mode"]}
                                  for e in entries if e["model"].target == target]
                reports.ellipse_figure(
                    figure_entries, target,
                    outdir / "reports" / "figures" / f"ce_{target}_{source}.png", spec)

    # bias distances per target (inferred-mu only)
    bias_rows = []
    for target in sorted(by_target):
        ds = [emfit.bias_magnitude(e["model"]) for e in entries
              if e["model"].target == target and e["mode"] == emfit.INFERRED_MU]
        if ds:
            bias_rows.append([target, round(float(np.mean(ds)), 2)])
    if bias_rows:
        reports.write_csv(outdir / "reports" / f"bias_distances_{source}.csv",
                          ["target", "mean_abs_mu_mm"], bias_rows)

    reports.write_json(outdir / "config.json", _config_echo(
        command="fit", data=str(data), seed=seed, estep=estep,
        modes=list(modes), source=source, failures=failures))
    click.echo(f"fitted {len(entries)} models into {outdir}"
               + (f"; {len(failures)} failures" if failures else ""))
    if failures:
        for f in failures:
            click.echo(f"  FAILED {f['player']}/{f['target']}/{f['mode']}: {f['error']}",
                       err=True)
        raise NumericalError(f"{len(failures)} fit(s) failed")


def _parse_actions(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or any(p not in (aimprob.SINGLE, aimprob.MULTI) for p in parts):
        raise click.UsageError("--actions must be single|multi, optionally one per player")
    return parts[0], parts[1]


@cli.command("solve")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.argument("player_a")
@click.argument("player_b")
@click.option("--actions", default="single", show_default=True,
              help="Action set per player: 'single', 'multi', or 'multi,single'.")
@click.option("--legs", default="1", show_default=True, help="Match lengths, e.g. 1,21,35.")
@click.option("--mode", type=click.Choice(list(MODE_FLAGS)), default="unbiased",
              show_default=True)
@click.option("--tol", default=1e-6, show_default=True)
@click.option("--resolution", default=3.0, show_default=True,
              help="Multi-grid lattice spacing in mm (1.0 is exhaustive but slow).")
@click.option("--start-score", default=zsg.START_SCORE, show_default=True)
def cmd_solve(store_path, out, player_a, player_b, actions, legs, mode, tol,
              resolution, start_score):
    """Equilibrium leg and match win probabilities for a player pair."""
    try:
        leg_list = [int(x) for x in legs.split(",") if x.strip()]
    except ValueError:
        raise click.UsageError(f"bad --legs {legs!r}")
    if any(n < 1 or n % 2 == 0 for n in leg_list):
        raise click.UsageError("--legs entries must be odd positive integers")
    act_a, act_b = _parse_actions(actions)
    store = ModelStore(store_path)
    result, cached = store.solve(player_a, player_b, act_a, act_b, tol=tol,
                                 start=start_score, resolution=resolution,
                                 mode=MODE_FLAGS[mode])
    p_a, p_b = result.p_a_star, result.p_b_star
    rows = []
    for n in leg_list:
        a_first = zsg.match_win_prob(p_a, p_b, n)
        b_first = zsg.match_win_prob(1.0 - p_b, 1.0 - p_a, n)
        rows.append([n, round(100 * a_first, 1), round(100 * b_first, 1),
                     round(100 * (a_first - (1.0 - b_first)), 1)])
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    header = ["legs", "A_first_winprob_pct", "B_first_winprob_pct", "A_edge_pct"]
    reports.write_csv(outdir / "match.csv", header, rows)
    (outdir / "match.txt").write_text(
        f"{player_a} ({act_a}) vs {player_b} ({act_b})\n"
        f"leg win prob, {player_a} first: {100*p_a:.2f}%   "
        f"{player_b} first: {100*(1-p_b):.2f}%\n\n"
        + reports.format_table(header, rows))
    reports.write_json(outdir / "match.json", {
        "config": _config_echo(command="solve", store=str(store_path),
                               player_a=player_a, player_b=player_b,
                               actions=[act_a, act_b], legs=leg_list, tol=tol,
                               resolution=resolution, start_score=start_score,
                               mode=mode, cached=cached),
        "p_a_star": p_a, "p_b_star": p_b, "rounds": result.rounds,
        "match_table": [dict(zip(header, r)) for r in rows],
    })
    click.echo(f"A-first leg win prob {100*p_a:.2f}% (rounds={result.rounds}, "
               f"cached={cached}); wrote {outdir / 'match.json'}")


def _parse_state(text: str) -> zsg.GameState:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 5:
        raise click.UsageError("--state must be sA,sB,t,i,u")
    try:
        return zsg.GameState(int(parts[0]), int(parts[1]), parts[2].upper(),
                             int(parts[3]), int(parts[4]))
    except ValueError as exc:
        raise click.UsageError(f"bad --state: {exc}")


@cli.command("heatmap")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.argument("player_a")
@click.argument("player_b")
@click.option("--state", required=True, help="sA,sB,t,i,u")
@click.option("--actions", default="multi", show_default=True)
@click.option("--mode", type=click.Choice(list(MODE_FLAGS)), default="unbiased",
              show_default=True)
@click.option("--resolution", default=3.0, show_default=True,
              help="Solve lattice spacing in mm.")
@click.option("--heatmap-resolution", default=1.0, show_default=True,
              help="Lattice spacing of the rendered heat-map in mm.")
@click.option("--tol", default=1e-6, show_default=True)
@click.option("--start-score", default=zsg.START_SCORE, show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def cmd_heatmap(store_path, out, player_a, player_b, state, actions, mode,
                resolution, heatmap_resolution, tol, start_score, figures):
    """Win probability of every aim for the thrower at a given state."""
    st = _parse_state(state)
    if st.terminal:
        raise click.UsageError("state is terminal")
    act_a, act_b = _parse_actions(actions)
    store = ModelStore(store_path)
    result, cached = store.solve(player_a, player_b, act_a, act_b, tol=tol,
                                 start=start_score, resolution=resolution,
                                 mode=MODE_FLAGS[mode])
    thrower = player_a if st.turn == zsg.PLAYER_A else player_b
    lattice = store.action_grid(thrower, aimprob.MULTI, resolution=heatmap_resolution,
                                mode=MODE_FLAGS[mode])
    aims, values, best = zsg.heatmap(result, st, lattice)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    payload = {
        "config": _config_echo(command="heatmap", store=str(store_path),
                               player_a=player_a, player_b=player_b,
                               state=[st.sa, st.sb, st.turn, st.throws_left, st.u],
                               actions=[act_a, act_b], cached=cached,
                               resolution=resolution, tol=tol,
                               start_score=start_score, mode=mode),
        "optimal_aim": [float(aims[best, 0]), float(aims[best, 1])],
        "optimal_value": float(values[best]),
        "aims": aims.round(3).tolist(),
        "values": values.round(6).tolist(),
    }
    reports.write_json(outdir / "heatmap.json", payload)
    reports.write_csv(outdir / "heatmap.csv", ["x_mm", "y_mm", "win_prob"],
                      np.column_stack([aims.round(3), values.round(6)]).tolist())
    if figures:
        reports.heatmap_figure(aims, values, outdir / "heatmap.png", store.spec,
                               best=best,
                               title=f"{thrower} to throw at {state}")
    click.echo(f"optimal aim {payload['optimal_aim']} -> "
               f"{100*payload['optimal_value']:.1f}%; wrote {outdir / 'heatmap.json'}")


@cli.command("serve")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--port", default=None, type=int, help="Defaults to $DARTSOLVE_PORT or 8000.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--start-score", default=zsg.START_SCORE, show_default=True)
def cmd_serve(store_path, port, host, start_score):
    """Serve the HTTP analysis API over a model store."""
    import os

    import uvicorn

    from .service import create_app
    if port is None:
        port = int(os.environ.get("DARTSOLVE_PORT", "8000"))
    app = create_app(ModelStore(store_path), start_score=start_score)
    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except DataValidationError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except NumericalError as exc:
        click.echo(f"numerical error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
