import pytest

from cablekin import datagen, model


@pytest.fixture(scope="session")
def desk():
    return datagen.generate(datagen.DESK_SPEC)


@pytest.fixture(scope="session")
def desk_split(desk):
    return datagen.split(desk, 0.2, 42)


@pytest.fixture(scope="session")
def trained(desk_split):
    """Default-config network trained on the desk split, with its loss history."""
    train_set, _ = desk_split
    cfg = model.TrainConfig()
    history = []
    m = model.train(model.init_mlp(cfg.hidden_dims, cfg.seed), train_set, cfg, history)
    return m, history


@pytest.fixture(scope="session")
def linear(desk_split):
    return model.fit_linear(desk_split[0])
