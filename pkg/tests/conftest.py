import random

import pytest

from helpers import fig1_route


@pytest.fixture
def fig1():
    return fig1_route()


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
