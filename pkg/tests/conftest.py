import hypothesis
import numpy as np
import pytest

from scenefit import character as ch
from scenefit import motion as mo
from scenefit import objects as ob

hypothesis.settings.register_profile(
    "ci", max_examples=40, deadline=None, derandomize=True)
hypothesis.settings.load_profile("ci")


@pytest.fixture(scope="session")
def model():
    return ch.default_character()


@pytest.fixture(scope="session")
def catalog():
    return ob.default_catalog()


@pytest.fixture(scope="session")
def sit_clip(model):
    return mo.synth_sit(0.45, 0.0, (0.8, 0.8, 2.0, 0.8), model=model)


@pytest.fixture(scope="session")
def sit_track(model, sit_clip):
    return mo.ReferenceTrack(model, sit_clip)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
