"""Planning-bootstrapped learning: demos, fit, then policy search.

All seeds of a condition advance in lock step: one simulator batch per epoch
holds every seed's evaluation and training rollouts. Rows of a batch never
interact, so a seed's results are the same whichever other seeds share the
batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from ..optimize import (DapgState, Pi2CmaState, bc_fit, dapg_update, lwr_fit, npg_update,
                        update_from_samples)
from ..optimize.pi2cma import sample
from ..planner import demo_episode
from ..policy import DmpController, DmpPolicy, MlpPolicy, StackedMlpController
from ..tasks import make_task
from ..world import run_batch
from . import io as mio
from .config import HYPER, ExperimentConfig
from .metrics import CURVE_COLUMNS, LearningCurve, aggregate
from .plotting import emit_plot

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("seed", "epoch", "mean_return", "std_return", "best_return", "bc_weight")
STREAMS = ("demo", "init", "opt", "rollout")


class RunError(RuntimeError):
    pass


def seed_rng(seed: int, stream: str):
    """Independent generator for one purpose within one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return np.random.default_rng(children[STREAMS.index(stream)])


def _draw_seeds(rng, n):
    return [int(v) for v in rng.integers(0, 2 ** 62, size=n)]


def collect_demos(task, cfg: ExperimentConfig, seed: int):
    """The demonstration set for one seed (empty for random init)."""
    if cfg.init == "random":
        return []
    if cfg.init == "replay-file":
        demos = []
        for path in cfg.replay_files[: cfg.n_demos] if cfg.n_demos else cfg.replay_files:
            ep, head = mio.load_episode(path)
            if head.get("task", task.task_id) != task.task_id:
                raise RunError(f"{path} holds a {head['task']} demo, not {task.task_id}")
            if ep.obs.shape[1] != task.n_obs or ep.actions.shape[1] != task.n_act:
                raise RunError(f"{path}: episode dimensions do not match {task.task_id}")
            demos.append(ep)
        return demos
    rng = seed_rng(seed, "demo")
    demos = []
    for i, s in enumerate(_draw_seeds(rng, cfg.n_demos)):
        # demo 0 is the nominal plan, the rest are perturbed variants
        sigma = 0.0 if i == 0 else cfg.demo_sigma
        demos.append(demo_episode(task, seed=s, sigma=sigma))
    return demos


def null_dmp(task, n_basis) -> DmpPolicy:
    q0 = task.init.q_r
    return DmpPolicy(np.zeros((task.n_act, n_basis)), q0.copy(), q0.copy(), task.horizon * task.dt)


def dmp_std(cfg: ExperimentConfig, n_joints: int) -> np.ndarray:
    k = cfg.n_basis
    return np.concatenate([np.full(n_joints * k, cfg.hp("std_weights")),
                           np.full(n_joints, cfg.hp("std_goals")), [cfg.hp("std_tau")]])


def random_policy(task, cfg: ExperimentConfig, seed: int):
    rng = seed_rng(seed, "init")
    if cfg.policy == "dmp":
        tmpl = null_dmp(task, cfg.n_basis)
        std = dmp_std(cfg, task.n_act)
        return tmpl.with_params(tmpl.params() + std * rng.standard_normal(std.size))
    return MlpPolicy.init(task.n_obs, task.n_act, rng)


def initial_policy(task, cfg: ExperimentConfig, seed: int, demos):
    """Fit to the demos (LWR or BC), or draw a random policy when there are none."""
    if not demos:
        return random_policy(task, cfg, seed)
    if cfg.policy == "dmp":
        return lwr_fit(demos[0], cfg.n_basis, dt=task.dt, dof=task.n_act)
    rng = seed_rng(seed, "init")
    pol = MlpPolicy.init(task.n_obs, task.n_act, rng)
    return bc_fit(pol, demos, cfg.hp("bc_epochs"), cfg.hp("bc_lr"), rng, cfg.hp("bc_batch"))


@dataclass
class _SeedState:
    seed: int
    policy: object
    opt: object
    rng_opt: object
    rng_roll: object
    eval_seeds: list
    demos: list


@dataclass
class RunResult:
    config: ExperimentConfig
    returns: np.ndarray              # (n_seeds, epochs + 1) evaluation means
    random_floor: np.ndarray         # per seed, evaluation mean of the random initial policy
    metrics: list = field(default_factory=list)
    final_eval: dict = field(default_factory=dict)
    demos: dict = field(default_factory=dict)
    policies: dict = field(default_factory=dict)
    rollouts_per_epoch: int = 0

    def curve(self, floor=None, best=None) -> LearningCurve:
        floor = float(np.mean(self.random_floor)) if floor is None else floor
        best = float(np.max(self.returns)) if best is None else best
        return LearningCurve(self.config.seeds, self.returns, floor, best)


def _evaluate(task, cfg, policies, eval_seeds):
    """Mean evaluation return of one deterministic policy per seed."""
    n = cfg.eval_rollouts
    if cfg.policy == "dmp":
        ctl = DmpController([p for p in policies for _ in range(n)])
    else:
        ctl = StackedMlpController(policies, n)
    eps, _ = run_batch(task, ctl, [s for ss in eval_seeds for s in ss], tolerate_invalid=True)
    rets = np.array([e.ret for e in eps]).reshape(len(policies), n)
    return rets.mean(1)


def _dmp_epoch(task, cfg, states, train):
    n_eval = cfg.eval_rollouts
    pols, seeds, thetas = [], [], []
    for st in states:
        mean_pol = st.policy.with_params(st.opt.mean)
        pols += [mean_pol] * n_eval
        seeds += st.eval_seeds
        if train:
            th = sample(st.opt, st.rng_opt)
            thetas.append(th)
            pols += [st.policy.with_params(t) for t in th]
            seeds += _draw_seeds(st.rng_roll, len(th))
    eps, _ = run_batch(task, DmpController(pols), seeds, tolerate_invalid=True)
    return eps, thetas


def _mlp_epoch(task, cfg, states, train):
    n_eval = cfg.eval_rollouts
    n_train = cfg.hp("episodes") if train else 0
    seeds, noisy = [], []
    for st in states:
        seeds += st.eval_seeds + (_draw_seeds(st.rng_roll, n_train) if train else [])
        noisy += [False] * n_eval + [True] * n_train
    ctl = StackedMlpController([st.policy for st in states], n_eval + n_train)
    eps, _ = run_batch(task, ctl, seeds, stochastic=noisy, tolerate_invalid=True)
    return eps


def _init_optimizer(cfg, policy, demos):
    if cfg.optimizer == "pi2cma":
        std = dmp_std(cfg, policy.n_joints)
        return Pi2CmaState.from_std(policy.params(), std, n_samples=int(cfg.hp("n_samples")),
                                    h=cfg.hp("h"), elite_frac=cfg.hp("elite_frac"),
                                    cov_floor=cfg.hp("cov_floor"), cov_lr=cfg.hp("cov_lr"))
    if cfg.optimizer == "dapg":
        return DapgState(demos=tuple(demos), lambda0=cfg.hp("lambda0"), kappa=cfg.hp("kappa"),
                         delta=cfg.hp("delta"), cg_iters=int(cfg.hp("cg_iters")),
                         damping=cfg.hp("damping"))
    return None


def train(cfg: ExperimentConfig, write=True) -> RunResult:
    """Run every seed of one condition. Writes everything except the curve file."""
    task = make_task(cfg.task)
    if cfg.gamma != task.reward.gamma:
        task = replace(task, reward=replace(task.reward, gamma=cfg.gamma))
    n_eval, E = cfg.eval_rollouts, cfg.epochs
    states = []
    demo_sets = {}
    for seed in cfg.seeds:
        try:
            demos = collect_demos(task, cfg, seed)
            policy = initial_policy(task, cfg, seed, demos)
        except Exception as err:
            raise RunError(f"seed {seed}, before epoch 0: {err}") from err
        demo_sets[seed] = demos
        rng_roll = seed_rng(seed, "rollout")
        eval_seeds = _draw_seeds(rng_roll, n_eval)
        states.append(_SeedState(seed, policy, _init_optimizer(cfg, policy, demos),
                                 seed_rng(seed, "opt"), rng_roll, eval_seeds, demos))

    floor = _evaluate(task, cfg, [random_policy(task, cfg, st.seed) for st in states],
                      [st.eval_seeds for st in states])
    S = len(states)
    returns = np.empty((S, E + 1))
    metrics = []
    final_eval = {}
    for e in range(E + 1):
        train_now = e < E
        if cfg.policy == "dmp":
            eps, thetas = _dmp_epoch(task, cfg, states, train_now)
        else:
            eps = _mlp_epoch(task, cfg, states, train_now)
        per = len(eps) // S
        for i, st in enumerate(states):
            block = eps[i * per: (i + 1) * per]
            ev, tr = block[:n_eval], block[n_eval:]
            returns[i, e] = np.mean([x.ret for x in ev])
            if not train_now:
                final_eval[st.seed] = ev
                continue
            rets = np.array([x.ret for x in tr])
            w = 0.0
            try:
                if cfg.optimizer == "pi2cma":
                    st.opt = update_from_samples(st.opt, thetas[i], rets)
                elif cfg.optimizer == "npg":
                    st.policy = npg_update(st.policy, tr, cfg.hp("delta"), int(cfg.hp("cg_iters")),
                                           cfg.hp("damping"))
                else:
                    st.policy, w = dapg_update(st.policy, tr, st.demos, st.opt, e,
                                               return_weight=True)
            except Exception as err:
                raise RunError(f"seed {st.seed}, epoch {e}: {err}") from err
            ok = rets[np.isfinite(rets)]
            metrics.append((st.seed, e, float(np.mean(ok)) if ok.size else math.nan,
                            float(np.std(ok)) if ok.size else math.nan,
                            float(np.max(ok)) if ok.size else math.nan, float(w)))
        if e % 10 == 0 or e == E:
            log.info("%s/%s epoch %d: mean eval return %.1f", cfg.task, cfg.label, e,
                     float(np.mean(returns[:, e])))

    policies = {}
    for st in states:
        policies[st.seed] = (st.policy.with_params(st.opt.mean) if cfg.optimizer == "pi2cma"
                             else st.policy)
    per_epoch = int(cfg.hp("n_samples")) if cfg.optimizer == "pi2cma" else int(cfg.hp("episodes"))
    res = RunResult(cfg, returns, floor, metrics, final_eval, demo_sets, policies, per_epoch)
    if write:
        _write_run(task, res)
    return res


def _write_run(task, res: RunResult):
    cfg = res.config
    d = cfg.run_dir
    d.mkdir(parents=True, exist_ok=True)
    for seed, demos in res.demos.items():
        for i, ep in enumerate(demos):
            mio.save_episode(d / "demos" / f"seed{seed}_demo{i}.csv", ep, task.dt,
                             {"task": task.task_id, "demo_index": i})
    for seed, pol in res.policies.items():
        mio.save_checkpoint(d / "checkpoints" / f"seed{seed}.json", pol, task=task.task_id,
                            seed=seed, epoch=cfg.epochs, label=cfg.label)
    mio.write_table(d / "metrics.csv", METRIC_COLUMNS, res.metrics)
    n_s = task.n_obs
    rows = []
    for seed, eps in res.final_eval.items():
        for k, ep in enumerate(eps):
            rows.append((seed, k, ep.ret) + tuple(float(v) for v in ep.final_obs))
    mio.write_table(d / "final_eval.csv",
                    ("seed", "rollout", "return") + tuple(f"final_s{i}" for i in range(n_s)), rows)
    hyper = {k: cfg.hp(k) for k in HYPER[cfg.optimizer]}
    meta = {"label": cfg.label, "task": cfg.task, "policy": cfg.policy, "init": cfg.init,
            "optimizer": cfg.optimizer, "hyper": hyper, "n_demos": len(next(iter(res.demos.values()), [])),
            "epochs": cfg.epochs, "seeds": list(cfg.seeds), "gamma": cfg.gamma,
            "n_basis": cfg.n_basis if cfg.policy == "dmp" else None,
            "eval_rollouts": cfg.eval_rollouts,
            "rollouts_per_epoch": res.rollouts_per_epoch,
            "random_floor": [float(v) for v in res.random_floor],
            "demo_returns": {str(s): [ep.ret for ep in eps] for s, eps in res.demos.items()}}
    (d / "meta.json").write_text(mio.dumps_json(meta))


def write_curve(res: RunResult, floor, best):
    curve = res.curve(floor, best)
    mio.write_table(res.config.run_dir / "curve.csv", CURVE_COLUMNS, curve.rows())
    return curve


def run_ppb(config: ExperimentConfig, anchors=None) -> RunResult:
    """One condition end to end. ``anchors = (floor, best)`` fixes the normalisation;
    by default this run's own random floor and best return are used."""
    res = train(config)
    floor, best = anchors if anchors is not None else (None, None)
    write_curve(res, floor, best)
    return res


def normalization_anchors(results):
    """Random-policy epoch-0 mean maps to 0, best return seen in any condition to 1."""
    floors = np.concatenate([np.asarray(r.random_floor) for r in results])
    best = max(float(np.max(r.returns)) for r in results)
    return float(np.mean(floors)), best


def run_study(configs, plot=True):
    """Run several conditions, normalise them jointly and write the summary files."""
    configs = list(configs)
    results = {c.label: train(c) for c in configs}
    floor, best = normalization_anchors(results.values())
    curves = {label: write_curve(r, floor, best) for label, r in results.items()}
    out = configs[0].run_dir.parent
    summarize(curves, out, plot=plot, title=configs[0].task)
    return results, curves


def summarize(curves, out, plot=True, title=None):
    """Write summary.csv (and curves.svg) from per-condition learning curves."""
    tables = {}
    rows = []
    for label, curve in curves.items():
        if len(curve.seeds) < 2:
            log.warning("condition %s has a single seed; skipping aggregation", label)
            continue
        t = aggregate(curve.normalized)
        tables[label] = t
        rows += [(label, int(e), float(m), float(s), t.n)
                 for e, m, s in zip(t.epochs, t.mean, t.stderr)]
    if not tables:
        return None
    mio.write_table(out / "summary.csv", ("condition", "epoch", "mean", "stderr", "n_seeds"), rows)
    if plot:
        emit_plot(tables, out / "curves.svg", title=title)
    return tables
