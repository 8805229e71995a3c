import numpy as np
import pytest

import tapflow as tf

from conftest import chain_model


def reference_solve(model, ratios, tol=1e-12, max_iter=300):
    """Power flow keeping SVR secondaries explicit: the elimination oracle.

    Unknowns are voltages at every non-slack bus plus the per-phase primary
    current of each regulator; the ideal-transformer relations enter as
    explicit constraint rows instead of being folded into Y.
    """
    coords = [(b.id, p) for b in model.buses if not b.is_slack for p in b.phases]
    row = {c: i for i, c in enumerate(coords)}
    nv = len(coords)
    jcols = [(svx, p) for svx, sv in enumerate(model.svrs) for p in sv.phases]
    jcol = {c: nv + i for i, c in enumerate(jcols)}
    n = nv + len(jcols)
    slack = model.slack.id
    vs = {p: model.slack_voltage[p] for p in model.slack_voltage.phases}

    M = np.zeros((n, n), dtype=complex)
    rhs_const = np.zeros(n, dtype=complex)

    def add(r, bus, phase, val):
        if bus == slack:
            rhs_const[r] -= val * vs[phase]
        else:
            M[r, row[(bus, phase)]] += val

    for ln in model.lines:
        zinv = np.linalg.inv(ln.z.array)
        ph = ln.z.phases
        for a, p in enumerate(ph):
            for b, q in enumerate(ph):
                if ln.from_bus != slack:
                    r = row[(ln.from_bus, p)]
                    add(r, ln.from_bus, q, zinv[a, b])
                    add(r, ln.to_bus, q, -zinv[a, b])
                r = row[(ln.to_bus, p)]
                add(r, ln.to_bus, q, zinv[a, b])
                add(r, ln.from_bus, q, -zinv[a, b])
    for bus in model.buses:
        if bus.shunt is None:
            continue
        for a, p in enumerate(bus.shunt.phases):
            for b, q in enumerate(bus.shunt.phases):
                add(row[(bus.id, p)], bus.id, q, bus.shunt.array[a, b])

    ceq = nv + 0
    for svx, sv in enumerate(model.svrs):
        for p in sv.phases:
            r_val = float(ratios[svx][p])
            a_gain = r_val if sv.kind == "B" else 1.0 / r_val
            # Primary current leaves the from-bus; A*j enters the secondary.
            if sv.from_bus != slack:
                M[row[(sv.from_bus, p)], jcol[(svx, p)]] += 1.0
            M[row[(sv.to_bus, p)], jcol[(svx, p)]] -= a_gain
            # Constraint v_from = A v_to (type-B) in the same row block as j.
            r = jcol[(svx, p)]
            add(r, sv.from_bus, p, 1.0)
            add(r, sv.to_bus, p, -a_gain)

    loads = np.zeros(n, dtype=complex)
    for b in model.buses:
        if b.load is None:
            continue
        for p in b.load.phases:
            loads[row[(b.id, p)]] = b.load[p]

    x = np.zeros(n, dtype=complex)
    for (bus, p), i in row.items():
        x[i] = vs[p]
    lu = np.linalg.inv(M)
    for _ in range(max_iter):
        rhs = rhs_const.copy()
        v = x[:nv]
        with np.errstate(all="raise"):
            rhs[:nv] += -np.conj(loads[:nv] / np.where(v == 0, 1, v))
        x_new = lu @ rhs
        if np.max(np.abs(x_new - x)) < tol:
            x = x_new
            break
        x = x_new
    voltages = {slack: model.slack_voltage}
    by_id = {b.id: b for b in model.buses}
    for bid in {c[0] for c in coords}:
        ph = by_id[bid].phases
        voltages[bid] = tf.PhaseVector(ph, [x[row[(bid, p)]] for p in ph])
    return voltages


# ---------------------------------------------------------------------------

def test_single_line_block():
    model = chain_model([0.1 + 0.05j])
    sys_ = tf.assemble(model, [])
    z = model.lines[0].z.array[0, 0]
    assert sys_.Y.shape == (1, 1)
    assert sys_.Y[0, 0] == pytest.approx(1.0 / z)
    assert sys_.Y_NS[0, 0] == pytest.approx(-1.0 / z)
    # Slack row over the full coordinates: [slack, load] columns.
    assert sys_.Y_S[0, sys_.full_index[("sub", "a")]] == pytest.approx(1.0 / z)
    assert sys_.Y_S[0, sys_.full_index[("b1", "a")]] == pytest.approx(-1.0 / z)


def test_identity_gain_matches_closed_connection(tiny3):
    """At ratio 1 the eliminated SVR behaves as a plain closed connection."""
    sys_svr = tf.assemble(tiny3, [{"a": 1.0}])
    z = tiny3.lines[0].z.array[0, 0]
    k = sys_svr.index[("load", "a")]
    assert sys_svr.Y[k, k] == pytest.approx(1.0 / z)
    assert sys_svr.Y_NS[k, 0] == pytest.approx(-1.0 / z)


def test_gain_scaling_formulas(tiny3):
    """Eliminated blocks carry 1/r and 1/r^2 exactly (type-B)."""
    r = 0.95
    sys_ = tf.assemble(tiny3, [{"a": r}])
    y = 1.0 / tiny3.lines[0].z.array[0, 0]
    k = sys_.index[("load", "a")]
    assert sys_.Y[k, k] == pytest.approx(y)
    assert sys_.Y_NS[k, 0] == pytest.approx(-y / r)
    assert sys_.Y_S[0, sys_.full_index[("sub", "a")]] == pytest.approx(y / r**2)
    assert sys_.Y_S[0, sys_.full_index[("load", "a")]] == pytest.approx(-y / r)


def test_missing_ratio_raises(tiny3):
    with pytest.raises(ValueError, match="no ratio"):
        tf.assemble(tiny3, [{}])


def test_singular_impedance_raises():
    model = chain_model([0.1])
    z = tf.PhaseMatrix("ab", [[0.02 + 0.06j, 0.02 + 0.06j],
                              [0.02 + 0.06j, 0.02 + 0.06j]])
    bad = tf.FeederModel(
        buses=(tf.BusSpec(id="sub", phases=("a", "b"), is_slack=True),
               tf.BusSpec(id="b1", phases=("a", "b"))),
        lines=(tf.LineSpec(from_bus="sub", to_bus="b1", z=z),),
        svrs=(), slack_voltage=tf.PhaseVector("ab", [1.0, 1.0]))
    with pytest.raises(ValueError, match="singular"):
        tf.assemble(bad, [])


def test_zero_row_sum_without_shunts_or_svrs(ieee13):
    """Kirchhoff consistency: Y 1 + Y_NS 1 = 0 when only lines are present."""
    stripped = tf.FeederModel(
        buses=tuple(tf.BusSpec(id=b.id, phases=b.phases, load=b.load,
                               shunt=None, is_slack=b.is_slack)
                    for b in ieee13.buses),
        lines=ieee13.lines, svrs=(),
        slack_voltage=ieee13.slack_voltage)
    # Dropping the SVR strands its secondary; reconnect RG60 with a stub line.
    stub = tf.LineSpec(from_bus="650", to_bus="RG60",
                       z=tf.PhaseMatrix("abc", np.diag([0.001 + 0.001j] * 3)))
    stripped = tf.FeederModel(buses=stripped.buses, lines=stripped.lines + (stub,),
                              svrs=(), slack_voltage=stripped.slack_voltage)
    assert not tf.validate(stripped)
    sys_ = tf.assemble(stripped, [])
    resid = sys_.Y @ np.ones(sys_.Y.shape[1]) + sys_.Y_NS @ np.ones(sys_.Y_NS.shape[1])
    assert np.max(np.abs(resid)) < 1e-9


@pytest.mark.parametrize("ratio", [0.9, 1.0, 1.05, 1.1])
def test_symmetry_for_any_ratio(ieee13, ratio):
    sys_ = tf.assemble(ieee13, [{p: ratio for p in "abc"}])
    diff = (sys_.Y - sys_.Y.T).toarray()
    assert np.max(np.abs(diff)) < 1e-10


def test_recover_secondary_identity_and_division(tiny3):
    volts = {"sub": tf.PhaseVector("a", [1.1 + 0.0j])}
    rec = tf.recover_svr_secondary(tiny3, [{"a": 1.1}], volts)
    assert rec["reg"]["a"] == pytest.approx(1.0 + 0.0j)
    rec = tf.recover_svr_secondary(tiny3, [{"a": 1.0}], volts)
    assert rec["reg"]["a"] == pytest.approx(1.1 + 0.0j)


@pytest.mark.parametrize("kind,ratios", [
    ("B", {"a": 0.95}),
    ("B", {"a": 1.0625}),
    ("A", {"a": 0.95}),
])
def test_elimination_exactness_vs_reference(kind, ratios):
    model = chain_model([0.25 + 0.1j, 0.15 + 0.05j], svr_kind=kind)
    sol = tf.solve_zbus(model, [ratios], tol=1e-12)
    assert sol.converged
    ref = reference_solve(model, [ratios])
    for bid, vec in ref.items():
        for p in vec.phases:
            assert abs(sol.voltages[bid][p] - vec[p]) < 1e-10, (bid, p)


def test_elimination_exactness_ieee13(ieee13):
    ratios = [{"a": 0.975, "b": 1.05, "c": 0.95625}]
    sol = tf.solve_zbus(ieee13, ratios, tol=1e-12)
    ref = reference_solve(ieee13, ratios)
    worst = max(abs(sol.voltages[b][p] - ref[b][p])
                for b in ref for p in ref[b].phases)
    assert worst < 1e-10


def test_matrix_market_dump(tmp_path, tiny3):
    sys_ = tf.assemble(tiny3, [{"a": 1.0}])
    path = tmp_path / "y.mtx"
    tf.write_matrix_market(sys_, path)
    head = path.read_text().splitlines()[0]
    assert head.startswith("%%MatrixMarket matrix coordinate complex")
