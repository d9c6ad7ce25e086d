"""Checkpoint container: text headers followed by raw little-endian float32.

Layout::

    INTENTRAJ-CKPT 1
    config <RunConfig echo>
    step <n>
    groups <k>
    group <name> <count>
    tensor <name> <ndim> <dims...>
    <row-major float32 bytes>
    ...

Parameters are grouped by module (``encoder.nodes``, ``intention``, ...);
optimizer moments live in the ``optimizer`` group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ConfigError, RunConfig, _coerce, config_types

MAGIC = "INTENTRAJ-CKPT"
VERSION = 1


@dataclass
class Checkpoint:
    config: RunConfig
    groups: dict[str, dict[str, np.ndarray]]
    step: int = 0
    version: int = VERSION
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)


def group_of(name: str) -> str:
    parts = name.split(".")
    return ".".join(parts[:2]) if parts[0] == "encoder" else parts[0]


def from_model(model: torch.nn.Module, cfg: RunConfig, step: int = 0,
               optimizer: torch.optim.Optimizer | None = None) -> Checkpoint:
    groups: dict[str, dict[str, np.ndarray]] = {}
    for name, t in model.state_dict().items():
        groups.setdefault(group_of(name), {})[name] = t.detach().cpu().numpy().astype(np.float32)
    opt = {}
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        for group in optimizer.param_groups:
            for p in group["params"]:
                state = optimizer.state.get(p, {})
                for key, val in state.items():
                    opt[f"{names[id(p)]}:{key}"] = torch.as_tensor(val).detach().cpu().numpy().astype(np.float32)
    return Checkpoint(cfg, groups, step, VERSION, opt)


def parse_echo(line: str) -> RunConfig:
    if not line.startswith("config "):
        raise ConfigError("missing config echo")
    kinds = config_types(RunConfig)
    vals = {}
    for item in line[len("config "):].split():
        key, value = item.split("=", 1)
        if key not in kinds:
            raise ConfigError(f"unknown config key {key!r} in checkpoint")
        vals[key] = _coerce(value, kinds[key])
    return RunConfig(**vals)


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    dims = " ".join(str(d) for d in arr.shape)
    fh.write(f"tensor {name} {arr.ndim} {dims}".rstrip().encode() + b"\n")
    fh.write(arr.tobytes())


def save(ckpt: Checkpoint, path) -> None:
    groups = dict(ckpt.groups)
    if ckpt.optimizer:
        groups["optimizer"] = ckpt.optimizer
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC} {ckpt.version}\n{ckpt.config.echo()}\nstep {ckpt.step}\n"
                 f"groups {len(groups)}\n".encode())
        for gname, tensors in groups.items():
            fh.write(f"group {gname} {len(tensors)}\n".encode())
            for name, arr in tensors.items():
                _write_tensor(fh, name, arr)


def _readline(fh) -> str:
    line = fh.readline()
    if not line:
        raise ValueError("truncated checkpoint")
    return line.decode().rstrip("\n")


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        head = _readline(fh).split()
        if len(head) != 2 or head[0] != MAGIC:
            raise ValueError(f"{path} is not a checkpoint")
        version = int(head[1])
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        cfg = parse_echo(_readline(fh))
        step = int(_readline(fh).split()[1])
        groups: dict[str, dict[str, np.ndarray]] = {}
        for _ in range(int(_readline(fh).split()[1])):
            _, gname, count = _readline(fh).split()
            tensors = {}
            for _ in range(int(count)):
                parts = _readline(fh).split()
                ndim = int(parts[2])
                shape = tuple(int(d) for d in parts[3:3 + ndim])
                n = int(np.prod(shape)) if shape else 1
                buf = fh.read(4 * n)
                if len(buf) != 4 * n:
                    raise ValueError("truncated checkpoint payload")
                tensors[parts[1]] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
            groups[gname] = tensors
    opt = groups.pop("optimizer", {})
    return Checkpoint(cfg, groups, step, version, opt)


def state_dict(ckpt: Checkpoint) -> dict[str, torch.Tensor]:
    return {name: torch.from_numpy(arr.copy()) for g in ckpt.groups.values() for name, arr in g.items()}


def restore_model(ckpt: Checkpoint):
    """Rebuild the predictor from a checkpoint; shapes are validated on load."""
    from .predictor import GoalConditionedPredictor

    model = GoalConditionedPredictor(ckpt.config)
    expected = model.state_dict()
    sd = state_dict(ckpt)
    if set(sd) != set(expected):
        raise ConfigError("checkpoint parameter names do not match the configured model")
    for name, t in sd.items():
        if tuple(t.shape) != tuple(expected[name].shape):
            raise ConfigError(f"shape mismatch for {name}: {tuple(t.shape)} vs {tuple(expected[name].shape)}")
    model.load_state_dict(sd)
    model.eval()
    return model


def restore_optimizer(ckpt: Checkpoint, model, optimizer: torch.optim.Optimizer) -> None:
    if not ckpt.optimizer:
        return
    params = dict(model.named_parameters())
    for key, arr in ckpt.optimizer.items():
        pname, skey = key.split(":", 1)
        p = params[pname]
        val = torch.from_numpy(arr.copy())
        optimizer.state[p][skey] = val.reshape(()) if skey == "step" else val
