"""JSON experiment configuration: one file fully determines a run.

Seeds are mandatory (no wall-clock seeding) so every command is a pure
function of (config, seed) to bytes on disk. Validation happens at load time
and reports the offending field by name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .diffusion import BachelierParams, LocalVolParams, TimeGrid
from .errors import ValidationError
from .payoffs import AutoCallSpec, CallSpec, CallsPutsSpec, observation_indices
from .training import TrainConfig
from .volsurface import SviParams

__all__ = ["ExperimentConfig", "load_config", "parse_config"]


@dataclass
class ExperimentConfig:
    model: object
    grid: TimeGrid
    payoff: object
    mode: str
    train: TrainConfig
    eval_paths: int
    eval_seed: int
    output_dir: str


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ValidationError(f"config: missing field {where}.{key}")
    return section[key]


def _section(data: dict, key: str) -> dict:
    value = _require(data, key, "config")
    if not isinstance(value, dict):
        raise ValidationError(f"config: {key} must be an object")
    return value


def _parse_model(section: dict):
    kind = _require(section, "type", "model")
    if kind == "bachelier":
        return BachelierParams(
            x0=float(_require(section, "x0", "model")),
            sigma=float(_require(section, "sigma", "model")),
        )
    if kind == "local_vol":
        chi = SviParams(
            a=float(_require(section, "a", "model")),
            b=float(_require(section, "b", "model")),
            rho=float(_require(section, "rho", "model")),
            m=float(_require(section, "m", "model")),
            sigma=float(_require(section, "sigma", "model")),
        )
        return LocalVolParams(x0=float(_require(section, "x0", "model")), chi=chi)
    raise ValidationError(f"model.type must be 'bachelier' or 'local_vol', got {kind!r}")


def _parse_payoff(section: dict):
    kind = _require(section, "type", "payoff")
    if kind == "call":
        return CallSpec(K=float(_require(section, "K", "payoff")))
    if kind == "calls_puts":
        return CallsPutsSpec(
            N1=float(_require(section, "N1", "payoff")),
            K1=float(_require(section, "K1", "payoff")),
            N2=float(_require(section, "N2", "payoff")),
            K2=float(_require(section, "K2", "payoff")),
        )
    if kind == "autocall":
        return AutoCallSpec(
            observation_dates=_require(section, "observation_dates", "payoff"),
            barriers=_require(section, "barriers", "payoff"),
            smoothings=_require(section, "smoothings", "payoff"),
            coupons=_require(section, "coupons", "payoff"),
            K_PDI=float(_require(section, "K_PDI", "payoff")),
            S_PDI=float(_require(section, "S_PDI", "payoff")),
        )
    raise ValidationError(
        f"payoff.type must be 'call', 'calls_puts' or 'autocall', got {kind!r}"
    )


def _parse_train(section: dict) -> TrainConfig:
    lam = _require(section, "lambda", "train")
    if lam != "auto":
        lam = float(lam)
    return TrainConfig(
        n_batches=int(_require(section, "n_batches", "train")),
        steps_per_batch=int(_require(section, "steps_per_batch", "train")),
        batch_size=int(_require(section, "batch_size", "train")),
        learning_rate=float(_require(section, "learning_rate", "train")),
        lam=lam,
        lambda_base=float(section.get("lambda_base", 1.0)),
        constraint=float(_require(section, "constraint", "train")),
        seed=int(_require(section, "seed", "train")),
    )


def parse_config(data: dict) -> ExperimentConfig:
    model = _parse_model(_section(data, "model"))
    grid_section = _section(data, "grid")
    grid = TimeGrid(
        maturity=float(_require(grid_section, "maturity", "grid")),
        n_steps=int(_require(grid_section, "n_steps", "grid")),
    )
    payoff = _parse_payoff(_section(data, "payoff"))
    if isinstance(payoff, AutoCallSpec):
        observation_indices(grid, payoff)  # referential check: dates vs grid
    drift_section = _section(data, "drift")
    mode = _require(drift_section, "mode", "drift")
    if mode not in ("full", "local"):
        raise ValidationError(f"drift.mode must be 'full' or 'local', got {mode!r}")
    train = _parse_train(_section(data, "train"))
    eval_section = _section(data, "eval")
    eval_paths = int(_require(eval_section, "n_paths", "eval"))
    if eval_paths < 1:
        raise ValidationError(f"eval.n_paths must be >= 1, got {eval_paths}")
    eval_seed = int(_require(eval_section, "seed", "eval"))
    output_dir = str(data.get("output_dir", "out"))
    return ExperimentConfig(
        model=model,
        grid=grid,
        payoff=payoff,
        mode=mode,
        train=train,
        eval_paths=eval_paths,
        eval_seed=eval_seed,
        output_dir=output_dir,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ValidationError(f"config file {path} is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return parse_config(data)
