import time

import pytest

from driftmc.diffusion import BachelierParams, LocalVolParams, TimeGrid
from driftmc.payoffs import CallSpec
from driftmc.training import TrainConfig, train
from driftmc.volsurface import SviParams


def timed_train(model, payoff, grid, mode, cfg):
    started = time.perf_counter()
    report = train(model, payoff, grid, mode, cfg)
    report.train_seconds = time.perf_counter() - started
    return report

PAPER_SVI = dict(a=0.05, b=0.15, rho=0.4, m=0.3, sigma=0.45)

# Desk-scale schedules: 400 steps of batch 256. The learning rates were picked
# once for these fixed seeds; evaluation always uses fresh substreams.
BACHELIER_TRAIN = dict(n_batches=40, steps_per_batch=10, batch_size=256,
                       learning_rate=30.0, lam=0.001, lambda_base=1.0,
                       constraint=10.0, seed=7)
LV_TRAIN = dict(n_batches=40, steps_per_batch=10, batch_size=256,
                learning_rate=0.3, lam=0.001, lambda_base=1.0,
                constraint=10.0, seed=7)


@pytest.fixture(scope="session")
def grid6():
    return TimeGrid(maturity=1.0, n_steps=6)


@pytest.fixture(scope="session")
def bachelier_model():
    return BachelierParams(x0=1.0, sigma=0.2)


@pytest.fixture(scope="session")
def paper_chi():
    return SviParams(**PAPER_SVI)


@pytest.fixture(scope="session")
def lv_model(paper_chi):
    return LocalVolParams(x0=1.0, chi=paper_chi)


@pytest.fixture(scope="session")
def call_spec():
    return CallSpec(K=1.4)


@pytest.fixture(scope="session")
def trained_bachelier_call(bachelier_model, grid6, call_spec):
    return timed_train(bachelier_model, call_spec, grid6, "full", TrainConfig(**BACHELIER_TRAIN))


@pytest.fixture(scope="session")
def trained_bachelier_call_local(bachelier_model, grid6, call_spec):
    return timed_train(bachelier_model, call_spec, grid6, "local", TrainConfig(**BACHELIER_TRAIN))


@pytest.fixture(scope="session")
def trained_lv_call(lv_model, grid6, call_spec):
    return timed_train(lv_model, call_spec, grid6, "full", TrainConfig(**LV_TRAIN))
