import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from bdris import scenario as sc
from bdris import sca

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"


def tiny_doc():
    """K=2, N_tx=2, N_ris=4, N_sub=2, one UE per cell."""
    doc = sc.scale_config(sc.default_config_dict(), 2)
    doc["geometry"]["ue_counts_per_cell"] = [1, 1]
    doc["arrays"] = {"n_tx": 2, "ris_shape": [2, 2]}
    doc["ofdm"].update(n_sub=2, n_taps=2, cyclic_prefix=2)
    return doc


def desk_doc(p_dbm=30.0, shape=(4, 4)):
    """Two-cell desk scenario: N_tx=4, N_sub=8, L=(2,3)."""
    doc = sc.scale_config(sc.default_config_dict(), 2)
    doc["arrays"] = {"n_tx": 4, "ris_shape": list(shape)}
    doc["ofdm"].update(n_sub=8, n_taps=4, cyclic_prefix=8)
    doc["power"]["p_max_dbm"] = p_dbm
    return doc


@pytest.fixture(scope="session")
def tiny_scenario():
    return sc.build_scenario(tiny_doc(), 7)


@pytest.fixture(scope="session")
def tiny_state(tiny_scenario):
    """A generic interior iterate: perturbed precoders, random capacitances, non-identity switches."""
    rng = np.random.default_rng(1)
    st = sca.initial_state(tiny_scenario)
    return replace(
        st,
        w=st.w * (1 + 0.3 * rng.standard_normal(st.w.shape)),
        c=rng.uniform(0.5e-12, 2.5e-12, st.c.shape),
        perm=np.array([[1, 0, 3, 2], [0, 2, 1, 3]]),
    )


@pytest.fixture(scope="session")
def desk_scenario():
    return sc.build_scenario(desk_doc(), 11)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
