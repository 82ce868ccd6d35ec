import pytest

from dpwn_trainer import train_reference


@pytest.fixture(scope="session")
def digit_ckpt():
    # 3 epochs on 800 stroke-digit images trains to ~1.0 val in ~2s
    return train_reference("synth-digits", epochs=3, seed=0,
                           train_count=800, val_count=200)


@pytest.fixture(scope="session")
def object_ckpt():
    return train_reference("synth-objects", epochs=6, seed=1,
                           train_count=1600, val_count=320)
