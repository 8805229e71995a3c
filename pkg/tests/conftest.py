from pathlib import Path

import numpy as np
import pytest

import tapflow as tf

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

BALANCED = {"a": 1.0 + 0.0j,
            "b": np.exp(-2j * np.pi / 3),
            "c": np.exp(2j * np.pi / 3)}


@pytest.fixture(scope="session")
def ieee13():
    return tf.parse_feeder((FIXTURES / "ieee13.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def tiny3():
    return tf.parse_feeder((FIXTURES / "tiny3.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def ieee13_base(ieee13):
    """Converged zero-tap solution of the IEEE-13 fixture, shared across tests."""
    ratios = tf.taps_to_ratios(ieee13, tf.zero_taps(ieee13))
    sol = tf.solve_zbus(ieee13, ratios)
    assert sol.converged
    return sol


def chain_model(loads, z_per_edge=0.02 + 0.06j, svr_kind=None, phases=("a",),
                v_min=None):
    """Single-phase chain: slack -> [optional SVR ->] bus1 -> bus2 -> ...

    ``loads`` is a list of complex consumption per non-slack bus (after the
    regulator bus when an SVR is present).
    """
    buses = [tf.BusSpec(id="sub", phases=phases, is_slack=True)]
    lines = []
    svrs = ()
    prev = "sub"
    if svr_kind is not None:
        buses.append(tf.BusSpec(id="reg", phases=phases))
        svrs = (tf.SvrSpec(from_bus="sub", to_bus="reg", kind=svr_kind, phases=phases),)
        prev = "reg"
    for k, load in enumerate(loads, start=1):
        bid = f"b{k}"
        vec = tf.PhaseVector(phases, [load] * len(phases)) if load else None
        buses.append(tf.BusSpec(id=bid, phases=phases, load=vec))
        n = len(phases)
        z = [[z_per_edge if i == j else 0.0 for j in range(n)] for i in range(n)]
        lines.append(tf.LineSpec(from_bus=prev, to_bus=bid, z=tf.PhaseMatrix(phases, z)))
        prev = bid
    config = {} if v_min is None else {"v_min": v_min}
    model = tf.FeederModel(buses=tuple(buses), lines=tuple(lines), svrs=svrs,
                           slack_voltage=tf.PhaseVector(phases, [BALANCED[p] for p in phases]),
                           config=config)
    assert not tf.validate(model)
    return model
