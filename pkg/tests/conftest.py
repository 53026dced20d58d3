from __future__ import annotations

import copy
import time

import pytest

from ffdrom.config import build, demo_config
from ffdrom.pipeline import cmd_offline

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
# wall time of the session-scoped offline builds, by fixture name
OFFLINE_SECONDS: dict[str, float] = {}


def small_raw(nx: int = 16, ny: int = 16, **overrides) -> dict:
    """Demo configuration on a coarser mesh, for fast pipeline tests."""
    raw = copy.deepcopy(demo_config())
    raw["mesh"].update(nx=nx, ny=ny)
    raw["timing"] = {"enabled": False, "repeats": 1}
    for key, val in overrides.items():
        if isinstance(val, dict):
            raw[key] = {**raw.get(key, {}), **val}
        else:
            raw[key] = val
    return raw


@pytest.fixture(scope="session")
def demo_cfg():
    return build(demo_config())


@pytest.fixture(scope="session")
def demo_store(tmp_path_factory, demo_cfg):
    """The 64x64 demo store (13 sampling snapshots plus baseline), built once."""
    root = tmp_path_factory.mktemp("demo") / "store"
    t0 = time.perf_counter()
    manifest, status = cmd_offline(demo_cfg, root)
    OFFLINE_SECONDS["demo"] = time.perf_counter() - t0
    assert status == "built"
    return root


@pytest.fixture(scope="session")
def small_store(tmp_path_factory):
    """16x16 store with a 3x3 grid and 2 greedy points."""
    cfg = build(small_raw(sampling={"max_new": 2}))
    root = tmp_path_factory.mktemp("small") / "store"
    cmd_offline(cfg, root)
    return root


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
