import numpy as np
import pytest

from tabletalk import worldsim as ws


@pytest.fixture
def camera():
    return ws.Camera()


@pytest.fixture
def two_object_scene():
    return ws.SceneSpec(objects=(
        ws.ObjSpec("redbar", "rect", 10, 12, 4, 2, 0, 3, (((200, 30, 30), 1.0),)),
        ws.ObjSpec("bluedot", "ellipse", 22, 8, 3, 2, 0, 2, (((30, 60, 200), 1.0),)),
    ))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def make_world(*objects, table_color=(130, 105, 80)):
    scene = ws.SceneSpec(table_color=table_color, objects=tuple(objects))
    return ws.WorldState(scene=scene)
