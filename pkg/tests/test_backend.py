import os
import subprocess
import sys

import numpy as np
import pytest

from hwflow import _pycore
from hwflow.measures import CharacteristicMeasure as M
from hwflow.seeding import stream_key

_core = pytest.importorskip("hwflow._core")

MU = M(((0.0, 0.2), (0.6, 0.3)), ((2.0, 3.0, 0.4), (0.7, 0.7, 0.1)))
TABLE = MU.sampling_table()
CK, VK, WK = (stream_key(11, t) for t in ("omega.component", "omega.value", "walker"))


def same(a, b):
    a, b = np.asarray(a), np.asarray(b)
    assert a.dtype == b.dtype and a.shape == b.shape
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("x_min,t_min", [(0, 0), (-7, 3), (-40, -5)])
def test_fill_omega_and_alpha(x_min, t_min):
    a = _pycore.fill_omega(*TABLE, CK, VK, x_min, t_min, 33, 17)
    b = np.asarray(_core.fill_omega(*TABLE, CK, VK, x_min, t_min, 33, 17))
    same(a, b)
    om = np.nan_to_num(a)
    same(_pycore.fill_alpha(om, WK, x_min, t_min), np.asarray(_core.fill_alpha(om, WK, x_min, t_min)))


def test_fill_pair():
    a = _pycore.fill_pair(WK, -5, 2, 41, 20, 0.3, 0.4)
    b = _core.fill_pair(WK, -5, 2, 41, 20, 0.3, 0.4)
    for u, v in zip(a, b):
        same(u, np.asarray(v))


@pytest.mark.parametrize("periodic", [False, True])
def test_hw_evolve(periodic):
    om = np.nan_to_num(_pycore.fill_omega(*TABLE, CK, VK, 0, 0, 40, 30))
    rho0 = np.zeros(40)
    rho0[[10, 20, 30]] = [0.2, 0.5, 0.3]
    same(_pycore.hw_evolve(om, rho0, 0, 29, periodic), np.asarray(_core.hw_evolve(om, rho0, 0, 29, periodic)))
    snaps = np.array([0, 5, 29], dtype=np.int64)
    same(_pycore.hw_evolve_hashed(*TABLE, CK, VK, 0, 0, rho0, 29, snaps, periodic),
         np.asarray(_core.hw_evolve_hashed(*TABLE, CK, VK, 0, 0, rho0, 29, snaps, periodic)))


@pytest.mark.parametrize("periodic", [False, True])
def test_reach_evolve(periodic):
    al, ar = _pycore.fill_pair(WK, 0, 0, 50, 25, 0.3, 0.35)
    occ = (np.arange(50) % 2 == 0).astype(np.uint8)
    same(_pycore.reach_evolve(al, ar, occ, 0, 24, periodic),
         np.asarray(_core.reach_evolve(al, ar, occ, 0, 24, periodic)))


def test_npoint_paths():
    keys = [np.array([stream_key(s, t) for s in range(64)], dtype=np.uint64) for t in ("c", "v", "w")]
    x0 = np.array([0, 0, 4], dtype=np.int64)
    same(_pycore.npoint_paths(*TABLE, *keys, x0, 0, 50), np.asarray(_core.npoint_paths(*TABLE, *keys, x0, 0, 50)))
    om = np.nan_to_num(_pycore.fill_omega(*TABLE, CK, VK, -60, 0, 121, 50))
    same(_pycore.npoint_paths_env(om, -60, 0, keys[2], x0, 0, 50),
         np.asarray(_core.npoint_paths_env(om, -60, 0, keys[2], x0, 0, 50)))
    same(_pycore.rightmost_walk(*TABLE, keys[0], keys[1], 0, 0, 80),
         np.asarray(_core.rightmost_walk(*TABLE, keys[0], keys[1], 0, 0, 80)))


def test_pure_fallback_env():
    code = "import hwflow; print(hwflow.BACKEND)"
    env = {**os.environ, "HWFLOW_PURE": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env.pop("HWFLOW_PURE")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == _core.BACKEND
