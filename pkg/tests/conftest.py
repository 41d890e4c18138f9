"""Shared fixtures for the acceptance suite.

The desk-scale study artifacts (pool, references, convergence results,
surface validation) take tens of minutes to build, so they are cached on
disk under `.acceptance_cache/` and reused across pytest runs.  Wall
times of the expensive builds are recorded alongside so the runtime
acceptance criteria can be asserted on cached reruns as well.
"""

import json
import time
from pathlib import Path

import pytest

from gmfrag import study
from gmfrag.study import StudyConfig

CACHE = Path(__file__).resolve().parent.parent / ".acceptance_cache"
DESK = CACHE / "desk"
TIMINGS = CACHE / "timings.json"


def _record_timing(key: str, seconds: float) -> None:
    CACHE.mkdir(parents=True, exist_ok=True)
    data = json.loads(TIMINGS.read_text()) if TIMINGS.exists() else {}
    data[key] = seconds
    TIMINGS.write_text(json.dumps(data, indent=2))


def read_timing(key: str) -> float:
    return json.loads(TIMINGS.read_text())[key]


@pytest.fixture(scope="session")
def desk_cfg() -> StudyConfig:
    return StudyConfig.profile("desk", output_dir=str(DESK), threads=4)


@pytest.fixture(scope="session")
def desk_pool(desk_cfg):
    if not (DESK / "pool.csv").exists():
        t0 = time.perf_counter()
        study.build_pool(desk_cfg, DESK)
        _record_timing("pool_build", time.perf_counter() - t0)
    return study.load_pool(DESK)


@pytest.fixture(scope="session")
def desk_reference(desk_cfg, desk_pool):
    if not (DESK / "reference.npz").exists():
        t0 = time.perf_counter()
        study.build_reference(desk_cfg, DESK)
        _record_timing("reference_build", time.perf_counter() - t0)
    return study.load_reference(DESK)


@pytest.fixture(scope="session")
def desk_convergence(desk_cfg, desk_pool, desk_reference):
    import pandas as pd

    if not (DESK / "convergence.csv").exists():
        t0 = time.perf_counter()
        study.run_convergence(desk_cfg, DESK)
        _record_timing("convergence_run", time.perf_counter() - t0)
    return pd.read_csv(DESK / "convergence.csv")


@pytest.fixture(scope="session")
def surface_model(desk_cfg, desk_pool):
    from gmfrag.spce import SpceModel

    path = DESK / "surface_spce_model.json"
    if not path.exists():
        model = study.fit_pool_model(desk_cfg, DESK, "spce", n_train=4000)
        model.to_json(path)
    return SpceModel.from_json(path)


@pytest.fixture(scope="session")
def surface_validation(desk_cfg):
    """Replication-based fragility references at the 9 validation points."""
    path = DESK / "surface_validation.json"
    if not path.exists():
        refs = []
        for ia in (0.02, 0.06, 0.1):
            for wg in (2.0, 6.0, 10.0):
                p = study.reference_surface_point(
                    desk_cfg, ia, wg, delta0=0.02, n_reps=100
                )
                refs.append({"ia": ia, "omega_g": wg, "p_ref": p})
        DESK.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(refs, indent=2))
    return json.loads(path.read_text())
