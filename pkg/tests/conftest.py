import numpy as np
import pytest

from mfcim.network import TrainConfig, build_model, mlp_config, train
from mfcim.refdata import (DESK_BATCH, DESK_BETA, DESK_MOMENTUM, DESK_SCHEDULE,
                           DESK_SIGMA, load_reference_data,
                           prepare_training_arrays)

TRAIN_SEED = 0


@pytest.fixture(scope="session")
def reference_data():
    """MNIST when IDX files are available, else the bundled-digits stand-in."""
    return load_reference_data()


@pytest.fixture(scope="session")
def prepared_arrays(reference_data):
    return prepare_training_arrays(reference_data)


def _train_reference(prepared, mf):
    x_tr, y_tr, x_te, y_te, _ = prepared
    model = build_model(
        mlp_config(x_tr.shape[1], 256, 10, mf=mf, beta=DESK_BETA,
                   sigma=DESK_SIGMA), seed=TRAIN_SEED)
    cfg = TrainConfig(epochs=5, batch_size=DESK_BATCH, lr=DESK_SCHEDULE[0],
                      lr_schedule=DESK_SCHEDULE, momentum=DESK_MOMENTUM,
                      seed=TRAIN_SEED)
    history = train(model, x_tr, y_tr, cfg, x_te, y_te)
    return model, history


@pytest.fixture(scope="session")
def trained_mf(prepared_arrays):
    """The 784-256-10 mf reference MLP, trained with the desk recipe."""
    return _train_reference(prepared_arrays, mf=True)


@pytest.fixture(scope="session")
def trained_conventional(prepared_arrays):
    return _train_reference(prepared_arrays, mf=False)
