import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from weylwalk import zoo
from weylwalk.walk import LatticeScale


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="module")
def unit_scale():
    return LatticeScale(a=1.0, dt=1.0)


@pytest.fixture(scope="module")
def bcc_walk():
    return zoo.bb_weyl_3d()


@pytest.fixture(scope="module")
def spin1_walk():
    return zoo.spin1_3d()


@pytest.fixture(scope="module")
def dirac_walk():
    return zoo.dirac_3d(m=0.5, scale=LatticeScale(a=0.1, dt=0.1))


@pytest.fixture(scope="module")
def massless_1d_walk():
    return zoo.massless_1d()


@pytest.fixture(scope="module")
def massive_1d_walk():
    return zoo.massive_1d(m=1.0, scale=LatticeScale(a=0.1, dt=0.1))


@pytest.fixture
def walk_file(tmp_path):
    """Writes a zoo walk to a temporary weylwalk/1 file and returns its path."""
    from weylwalk.spec_io import write_walk

    def _write(name: str, m: float = 0.0, **scale) -> Path:
        path = tmp_path / f"{name}.json"
        write_walk(zoo.build(name, m, LatticeScale(**scale) if scale else None), path)
        return path

    return _write
