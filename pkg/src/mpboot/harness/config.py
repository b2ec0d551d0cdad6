"""Experiment configuration files (TOML).

A file holds one ``[experiment]`` table with the settings every condition
shares and one or more ``[[condition]]`` tables::

    [experiment]
    task = "drawer-open"
    policy = "dmp"          # dmp | mlp
    epochs = 100
    n_seeds = 20            # or: seeds = [0, 1, 2]
    out = "runs/drawer"

    [[condition]]
    label = "planner"
    init = "planner"        # planner | random | replay-file
    demos = 1
    optimizer = "pi2cma"    # pi2cma | npg | dapg

    [condition.hyper]
    n_samples = 20

Unknown keys anywhere are errors. Paths are relative to the config file.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..tasks import TASKS


class ConfigError(ValueError):
    pass


POLICIES = ("dmp", "mlp")
INITS = ("planner", "random", "replay-file")
OPTIMIZERS = {"dmp": ("pi2cma",), "mlp": ("npg", "dapg")}

HYPER = {
    "pi2cma": {"n_samples": 20, "h": 10.0, "std_weights": 2.0, "std_goals": 0.05,
               "std_tau": 0.05, "cov_floor": 1e-6, "cov_lr": 0.2, "elite_frac": 1.0},
    "npg": {"episodes": 10, "delta": 0.05, "cg_iters": 10, "damping": 1e-4,
            "bc_epochs": 10, "bc_lr": 3e-3, "bc_batch": 64},
    "dapg": {"episodes": 10, "delta": 0.05, "cg_iters": 10, "damping": 1e-4,
             "bc_epochs": 10, "bc_lr": 3e-3, "bc_batch": 64, "lambda0": None,
             "kappa": 0.97},
}

DEFAULT_POLICY = {"drawer-open": "dmp", "door-close": "mlp", "tee-ball": "dmp"}
DEFAULT_BASIS = {"drawer-open": 32, "door-close": 32, "tee-ball": 10}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experimental condition (task x policy x initialisation x optimiser)."""
    task: str
    policy: str = "dmp"
    init: str = "planner"
    n_demos: int = 1
    epochs: int = 100
    optimizer: str = "pi2cma"
    hyper: dict = field(default_factory=dict)
    seeds: tuple = (0,)
    out: str = "runs"
    gamma: float = 1.0
    label: str = ""
    replay_files: tuple = ()
    n_basis: int = 32
    eval_rollouts: int = 5
    demo_sigma: float = 0.01

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy class {self.policy!r}")
        if self.init not in INITS:
            raise ConfigError(f"unknown init {self.init!r}; expected one of {INITS}")
        if self.optimizer not in OPTIMIZERS[self.policy]:
            raise ConfigError(f"optimizer {self.optimizer!r} does not fit a {self.policy} policy")
        if self.n_demos < 0 or (self.n_demos == 0 and self.init == "planner"):
            raise ConfigError("planner init needs at least one demonstration")
        if self.init == "replay-file" and not self.replay_files:
            raise ConfigError("init = 'replay-file' needs replay_files")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.eval_rollouts < 1:
            raise ConfigError("eval_rollouts must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        unknown = set(self.hyper) - set(HYPER[self.optimizer])
        if unknown:
            raise ConfigError(f"unknown {self.optimizer} hyperparameters: {sorted(unknown)}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "replay_files", tuple(str(p) for p in self.replay_files))
        if not self.label:
            object.__setattr__(self, "label", f"{self.init}-{self.optimizer}")

    def hp(self, key):
        return self.hyper.get(key, HYPER[self.optimizer][key])

    def with_seeds(self, seeds):
        return replace(self, seeds=tuple(seeds))

    def with_out(self, out):
        return replace(self, out=str(out))

    @property
    def run_dir(self) -> Path:
        return Path(self.out) / self.label


EXPERIMENT_KEYS = {"task", "policy", "epochs", "seeds", "n_seeds", "out", "gamma", "n_basis",
                   "eval_rollouts", "demo_sigma"}
CONDITION_KEYS = {"label", "init", "demos", "optimizer", "hyper", "replay_files", "epochs"}


def _check_keys(table, allowed, where):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def parse_config(data: dict, base_dir=".") -> list:
    """Turn a parsed TOML document into a list of ExperimentConfig."""
    _check_keys(data, {"experiment", "condition"}, "top level")
    exp = dict(data.get("experiment", {}))
    _check_keys(exp, EXPERIMENT_KEYS, "[experiment]")
    if "task" not in exp:
        raise ConfigError("[experiment] needs a task")
    task = exp["task"]
    policy = exp.get("policy", DEFAULT_POLICY.get(task, "dmp"))
    if "seeds" in exp and "n_seeds" in exp:
        raise ConfigError("give either seeds or n_seeds, not both")
    seeds = exp.get("seeds", list(range(int(exp.get("n_seeds", 20)))))
    base_dir = Path(base_dir)
    out = exp.get("out", "runs")
    out = str(out if Path(out).is_absolute() else base_dir / out)
    shared = dict(task=task, policy=policy, seeds=tuple(seeds), out=out,
                  gamma=float(exp.get("gamma", 1.0)),
                  n_basis=int(exp.get("n_basis", DEFAULT_BASIS.get(task, 32))),
                  eval_rollouts=int(exp.get("eval_rollouts", 5)),
                  demo_sigma=float(exp.get("demo_sigma", 0.01)))
    default_epochs = int(exp.get("epochs", 100 if policy == "dmp" else 150))
    conds = data.get("condition", [])
    if isinstance(conds, dict):
        conds = [conds]
    if not conds:
        raise ConfigError("need at least one [[condition]]")
    configs = []
    for i, c in enumerate(conds):
        _check_keys(c, CONDITION_KEYS, f"[[condition]] #{i + 1}")
        init = c.get("init", "planner")
        opt = c.get("optimizer", "pi2cma" if policy == "dmp" else
                    ("dapg" if init != "random" else "npg"))
        n_demos = int(c.get("demos", 0 if init == "random" else (1 if policy == "dmp" else 10)))
        replay = tuple(str(p if Path(p).is_absolute() else base_dir / p)
                       for p in c.get("replay_files", ()))
        configs.append(ExperimentConfig(
            init=init, optimizer=opt, n_demos=n_demos, hyper=dict(c.get("hyper", {})),
            epochs=int(c.get("epochs", default_epochs)), label=c.get("label", ""),
            replay_files=replay, **shared))
    labels = [c.label for c in configs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"condition labels must be unique: {labels}")
    return configs


def load_config(path) -> list:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    return parse_config(data, path.parent)


def default_study(task: str, seeds=range(20), out="runs", epochs=None) -> list:
    """The bootstrapped-versus-random comparison for one task with default settings."""
    policy = DEFAULT_POLICY[task]
    boot = "pi2cma" if policy == "dmp" else "dapg"
    rand = "pi2cma" if policy == "dmp" else "npg"
    data = {"experiment": {"task": task, "policy": policy, "seeds": list(seeds), "out": str(out)},
            "condition": [{"label": "planner", "init": "planner", "optimizer": boot},
                          {"label": "random", "init": "random", "optimizer": rand}]}
    if epochs is not None:
        data["experiment"]["epochs"] = int(epochs)
    return parse_config(data, ".")
