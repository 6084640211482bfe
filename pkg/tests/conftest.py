import dataclasses

import numpy as np
import pytest

from bpms.scenario import ScenarioConfig, derive_channel_params


def small_config(**kw):
    """N_B = N_U = 4, one target, eight subcarriers."""
    base = dict(n_tx_bs=4, n_rx_ue=4, n_targets=1, p_targets=((5.0, 15.0),), rcs_bp=(100.0,),
                rcs_ms=(10.0, 100.0), n_subcarriers=8, n_slots=4)
    base.update(kw)
    return ScenarioConfig(**base)


def random_psd(n, rank, rng, trace=None):
    F = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    V = F @ F.conj().T
    if trace is not None:
        V *= trace / np.real(np.trace(V))
    return V


def perturb(params, field, k, delta):
    """Copy of ``params`` with entry ``k`` of ``field`` shifted by ``delta``."""
    arr = np.array(getattr(params, field), copy=True)
    arr[k] = arr[k] + delta
    return dataclasses.replace(params, **{field: arr})


@pytest.fixture(scope="session")
def default_cfg():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def default_params(default_cfg):
    return derive_channel_params(default_cfg)


@pytest.fixture(scope="session")
def small_cfg():
    return small_config()


@pytest.fixture(scope="session")
def small_params(small_cfg):
    return derive_channel_params(small_cfg)


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion, printed after the run

ACCEPTANCE = {}


def record(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (name, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {name}: {detail}")
