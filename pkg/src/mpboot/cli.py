"""Command line entry point: ``mpboot run|demo|plot|replay``."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path
import sys

import numpy as np

from .harness import io as mio
from .harness.config import ConfigError, load_config
from .harness.metrics import CURVE_COLUMNS, aggregate
from .harness.plotting import emit_plot
from .harness.run import run_study
from .planner import demo_episode
from .policy import ActionReplay
from .tasks import TASKS, make_task
from .world import initial_state, run_batch

log = logging.getLogger("mpboot")


def _seed_list(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def cmd_run(args):
    configs = load_config(args.config)
    if args.seeds:
        configs = [c.with_seeds(args.seeds) for c in configs]
    if args.out:
        configs = [c.with_out(args.out) for c in configs]
    results, curves = run_study(configs, plot=not args.no_plot)
    for label, curve in curves.items():
        norm = curve.normalized.mean(0)
        print(f"{label}: epoch 0 {norm[0]:.3f}, epoch {curve.n_epochs} {norm[-1]:.3f}")
    return 0


def cmd_demo(args):
    task = make_task(args.task)
    ep = demo_episode(task, seed=args.seed, sigma=args.sigma)
    mio.save_episode(args.out, ep, task.dt, {"task": task.task_id})
    print(f"wrote {args.out}: return {ep.ret:.3f}, final object state {ep.final_obs[task.n_act:]}")
    return 0


def read_curves(run_dir: Path):
    """Normalised per-seed curves of every condition under ``run_dir``."""
    found = {}
    for path in sorted(run_dir.glob("*/curve.csv")):
        rows = mio.read_table(path)
        if not rows or tuple(rows[0]) != CURVE_COLUMNS:
            raise ValueError(f"{path} is not a curve file")
        by_seed = {}
        for r in rows:
            by_seed.setdefault(int(r["seed"]), []).append((int(r["epoch"]), float(r["normalized_return"])))
        found[path.parent.name] = {s: np.array([v for _, v in sorted(pts)]) for s, pts in by_seed.items()}
    return found


def cmd_plot(args):
    curves = read_curves(Path(args.inp))
    if not curves:
        print(f"no */curve.csv under {args.inp}", file=sys.stderr)
        return 2
    tables = {label: aggregate(c) for label, c in curves.items()}
    out = Path(args.out)
    emit_plot(tables, out, title=args.title)
    rows = [(label, int(e), float(m), float(s), t.n) for label, t in tables.items()
            for e, m, s in zip(t.epochs, t.mean, t.stderr)]
    mio.write_table(out.with_suffix(".csv"), ("condition", "epoch", "mean", "stderr", "n_seeds"), rows)
    print(f"wrote {out} and {out.with_suffix('.csv')}")
    return 0


def replay_episode(path):
    """Re-execute a recorded episode's actions. Returns (original text, replayed text)."""
    text = Path(path).read_text()
    ep, head = mio.load_episode(path)
    if "task" not in head:
        raise ValueError(f"{path} does not name its task")
    task = make_task(head["task"])
    st = initial_state(task)
    st.q_r = ep.obs[0, : task.n_act].copy()
    st.q_o = ep.obs[0, task.n_act:].copy()
    out, _ = run_batch(task, ActionReplay(ep.actions), [ep.seed], source=ep.source, init_states=[st])
    extra = {k: v for k, v in head.items() if k not in ("source", "seed", "gamma", "dt", "final_obs")}
    return text, mio.episode_to_csv(out[0], float(head.get("dt", task.dt)), extra)


def cmd_replay(args):
    original, replayed = replay_episode(args.episode)
    if original == replayed:
        print(f"{args.episode}: replay is byte-identical")
        return 0
    a, b = original.splitlines(), replayed.splitlines()
    first = next((i for i, (x, y) in enumerate(zip(a, b)) if x != y), min(len(a), len(b)))
    print(f"{args.episode}: replay differs from line {first + 1}", file=sys.stderr)
    return 1


def build_parser():
    p = argparse.ArgumentParser(prog="mpboot", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run the conditions of an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--seeds", type=_seed_list)
    r.add_argument("--out")
    r.add_argument("--no-plot", action="store_true")
    r.set_defaults(fn=cmd_run)

    d = sub.add_parser("demo", help="write one planner demonstration as an episode file")
    d.add_argument("--task", required=True, choices=TASKS)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--sigma", type=float, default=0.01)
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_demo)

    pl = sub.add_parser("plot", help="aggregate curve files and render an SVG")
    pl.add_argument("--in", dest="inp", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--title")
    pl.set_defaults(fn=cmd_plot)

    rp = sub.add_parser("replay", help="re-execute an episode file and check it reproduces")
    rp.add_argument("--episode", required=True)
    rp.set_defaults(fn=cmd_replay)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
