"""Episode CSV files and policy checkpoints.

Episode files start with ``# key=value`` header lines, followed by a CSV
table with columns ``t,s0..sk,a0..am,r``. Floats are written with ``repr`` so
a file read back reproduces the arrays bit for bit.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from ..policy import DmpPolicy, Episode, MlpPolicy


class FormatError(ValueError):
    pass


def _fmt(x) -> str:
    return repr(float(x))


def episode_to_csv(ep: Episode, dt: float, meta=None) -> str:
    """Serialise an episode; ``meta`` adds extra header fields."""
    n_s, n_a = ep.obs.shape[1], ep.actions.shape[1]
    head = {"source": ep.source, "seed": int(ep.seed), "gamma": _fmt(ep.gamma), "dt": _fmt(dt)}
    if ep.final_obs is not None:
        head["final_obs"] = " ".join(_fmt(v) for v in ep.final_obs)
    head.update(meta or {})
    buf = io.StringIO()
    for k, v in head.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"s{i}" for i in range(n_s)] + [f"a{i}" for i in range(n_a)] + ["r"])
    for k in range(len(ep)):
        w.writerow([_fmt(k * dt)] + [_fmt(v) for v in ep.obs[k]]
                   + [_fmt(v) for v in ep.actions[k]] + [_fmt(ep.rewards[k])])
    return buf.getvalue()


def save_episode(path, ep: Episode, dt: float, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(episode_to_csv(ep, dt, meta))
    return path


def load_episode(path):
    """Read an episode file. Returns ``(episode, header dict)``."""
    header = {}
    rows = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if not sep:
                raise FormatError(f"bad header line {line!r}")
            header[key] = val
        elif line.strip():
            body.append(line)
    if not body:
        raise FormatError(f"{path}: no table")
    reader = csv.reader(body)
    cols = next(reader)
    s_idx = [i for i, c in enumerate(cols) if c.startswith("s")]
    a_idx = [i for i, c in enumerate(cols) if c.startswith("a")]
    if cols[0] != "t" or cols[-1] != "r" or not s_idx or not a_idx:
        raise FormatError(f"{path}: unexpected columns {cols}")
    for row in reader:
        rows.append([float(v) for v in row])
    data = np.array(rows, dtype=float).reshape(len(rows), len(cols))
    final = header.get("final_obs")
    ep = Episode(data[:, s_idx], data[:, a_idx], data[:, -1],
                 seed=int(header.get("seed", 0)), source=header.get("source", "policy"),
                 gamma=float(header.get("gamma", 1.0)),
                 final_obs=None if final is None else np.array([float(v) for v in final.split()]))
    return ep, header


# ---------------------------------------------------------------------------
# checkpoints

def checkpoint_dict(policy, **meta) -> dict:
    if isinstance(policy, DmpPolicy):
        info = {"class": "DmpPolicy", "n_joints": policy.n_joints, "n_basis": policy.n_basis,
                "y0": [float(v) for v in policy.y0], "alpha_z": policy.alpha_z,
                "beta_z": policy.beta_z, "alpha_x": policy.alpha_x}
    elif isinstance(policy, MlpPolicy):
        info = {"class": "MlpPolicy", "shapes": [list(w.shape) for w in policy.weights]}
    else:
        raise TypeError(f"cannot checkpoint {type(policy).__name__}")
    info["params"] = [float(v) for v in policy.params()]
    info["meta"] = meta
    return info


def policy_from_checkpoint(d: dict):
    theta = np.asarray(d["params"], dtype=float)
    if d["class"] == "DmpPolicy":
        n, k = d["n_joints"], d["n_basis"]
        tmpl = DmpPolicy(np.zeros((n, k)), np.zeros(n), np.asarray(d["y0"]), 1.0,
                         d["alpha_z"], d["beta_z"], d["alpha_x"])
        return tmpl.with_params(theta)
    if d["class"] == "MlpPolicy":
        shapes = [tuple(s) for s in d["shapes"]]
        tmpl = MlpPolicy(tuple(np.zeros(s) for s in shapes), tuple(np.zeros(s[1]) for s in shapes),
                         np.zeros(shapes[-1][1]))
        return tmpl.with_params(theta)
    raise FormatError(f"unknown policy class {d['class']!r}")


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def save_checkpoint(path, policy, **meta):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(checkpoint_dict(policy, **meta)))
    return path


def load_checkpoint(path):
    return policy_from_checkpoint(json.loads(Path(path).read_text()))


def write_table(path, columns, rows):
    """Plain CSV with a header row; floats via repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows
