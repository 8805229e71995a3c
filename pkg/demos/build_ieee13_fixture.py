"""Build the IEEE 13-bus feeder fixture from the published test-feeder data.

Encoding choices (documented so the fixture is reproducible):

* Base power 5 MVA (the substation rating), base voltage 4.16 kV; every
  quantity is per-unit on that base, with the 480 V zone below the in-line
  transformer carried on its own voltage base as usual.
* The slack bus is the regulated 4.16 kV substation bus 650 at 1.0 p.u.
  balanced. The feeder-head regulator is a three-phase wye type-B SVR from
  650 to RG60, followed by the 2000 ft segment of configuration 601 to 632.
* The distributed load on 632-671 is lumped at the receiving end 671 (the
  simplest of the standard placements).
* Delta-connected loads are converted to equivalent wye constant-power loads
  exactly at nominal balanced voltage: the pair (p, q) of a delta S across
  phases p-q receives S/sqrt(3) at -30 and +30 degrees respectively.
  Constant-current and constant-impedance loads are taken at their nominal
  power (everything becomes constant power).
* Capacitors are constant admittance: 200 kvar per phase at 675, 100 kvar
  on phase c at 611.
* The in-line transformer XFM-1 (633-634) is a series impedance of
  0.011 + 0.02j on its 500 kVA rating, rescaled to the system base.
  The 671-692 switch is a short line of 0.001 + 0.001j p.u. per phase.
* The LP voltage floor ships as feeder config v_min = 0.93 (the verification
  band stays at the usual 0.9 / 1.1).

Run:  python3 demos/build_ieee13_fixture.py [--out fixtures/ieee13.json]
"""

from __future__ import annotations

import argparse
import cmath
import math
from pathlib import Path

import tapflow as tf

S_BASE_KVA = 5000.0
V_BASE_KV = 4.16
# Per-phase convention: voltages on the line-to-neutral base, powers on the
# full system base, hence Z_base = V_ln^2 / S_base  (~1.154 ohm).
Z_BASE = (V_BASE_KV / math.sqrt(3.0)) ** 2 / (S_BASE_KVA / 1000.0)   # ohms
FT_PER_MILE = 5280.0

# Overhead / underground configurations, ohms per mile, upper triangle (a,b,c).
CONFIGS = {
    601: ("abc", [
        [0.3465 + 1.0179j, 0.1560 + 0.5017j, 0.1580 + 0.4236j],
        [0.1560 + 0.5017j, 0.3375 + 1.0478j, 0.1535 + 0.3849j],
        [0.1580 + 0.4236j, 0.1535 + 0.3849j, 0.3414 + 1.0348j],
    ]),
    602: ("abc", [
        [0.7526 + 1.1814j, 0.1580 + 0.4236j, 0.1560 + 0.5017j],
        [0.1580 + 0.4236j, 0.7475 + 1.1983j, 0.1535 + 0.3849j],
        [0.1560 + 0.5017j, 0.1535 + 0.3849j, 0.7436 + 1.2112j],
    ]),
    603: ("bc", [
        [1.3294 + 1.3471j, 0.2066 + 0.4591j],
        [0.2066 + 0.4591j, 1.3238 + 1.3569j],
    ]),
    604: ("ac", [
        [1.3238 + 1.3569j, 0.2066 + 0.4591j],
        [0.2066 + 0.4591j, 1.3294 + 1.3471j],
    ]),
    605: ("c", [[1.3292 + 1.3475j]]),
    606: ("abc", [
        [0.7982 + 0.4463j, 0.3192 + 0.0328j, 0.2849 - 0.0143j],
        [0.3192 + 0.0328j, 0.7891 + 0.4041j, 0.3192 + 0.0328j],
        [0.2849 - 0.0143j, 0.3192 + 0.0328j, 0.7982 + 0.4463j],
    ]),
    607: ("a", [[1.3425 + 0.5124j]]),
}

# from, to, length_ft, config id ('xfm' and 'switch' are special).
SEGMENTS = [
    ("RG60", "632", 2000, 601),
    ("632", "633", 500, 602),
    ("633", "634", 0, "xfm"),
    ("632", "645", 500, 603),
    ("645", "646", 300, 603),
    ("632", "671", 2000, 601),
    ("671", "680", 1000, 601),
    ("671", "684", 300, 604),
    ("684", "652", 800, 607),
    ("684", "611", 300, 605),
    ("671", "692", 0, "switch"),
    ("692", "675", 500, 606),
]

# 500 kVA, R 1.1% X 2% on its own rating; nameplate base is V_ll^2 / S_rated,
# three times the per-phase system base here, hence the extra factor 3.
XFM_Z_PU = (0.011 + 0.02j) * 3.0 * (S_BASE_KVA / 500.0)
SWITCH_Z_PU = 0.001 + 0.001j

# Spot loads, kW + j kvar: (bus, connection, {phase or phase-pair: S}).
SPOT_LOADS = [
    ("634", "wye", {"a": 160 + 110j, "b": 120 + 90j, "c": 120 + 90j}),
    ("645", "wye", {"b": 170 + 125j}),
    ("646", "delta", {"bc": 230 + 132j}),
    ("652", "wye", {"a": 128 + 86j}),
    ("671", "delta", {"ab": 385 + 220j, "bc": 385 + 220j, "ca": 385 + 220j}),
    ("675", "wye", {"a": 485 + 190j, "b": 68 + 60j, "c": 290 + 212j}),
    ("692", "delta", {"ca": 170 + 151j}),
    ("611", "wye", {"c": 170 + 80j}),
    ("671", "wye", {"a": 17 + 10j, "b": 66 + 38j, "c": 117 + 68j}),   # distributed 632-671
]

CAPACITORS = {"675": {"a": 200.0, "b": 200.0, "c": 200.0}, "611": {"c": 100.0}}

BUS_PHASES = {
    "650": "abc", "RG60": "abc", "632": "abc", "633": "abc", "634": "abc",
    "645": "bc", "646": "bc", "671": "abc", "680": "abc",
    "684": "ac", "652": "a", "611": "c", "692": "abc", "675": "abc",
}


def delta_to_wye(pairs: dict, voltages: dict | None = None) -> dict:
    """Wye constant-power equivalent of a delta load.

    A delta S across phases p-q carries line current (S / v_pq)*, so the
    per-phase equivalents are s_p = S v_p / v_pq and s_q = -S v_q / v_pq,
    which sum to S exactly. Evaluated at nominal balanced voltage this is
    the usual S/sqrt(3) at -+30 degrees split; given solved voltages it
    reproduces the delta's behaviour at that operating point.
    """
    if voltages is None:
        voltages = {p: cmath.exp(1j * k * 2.0 * math.pi / 3.0)
                    for p, k in (("a", 0), ("b", -1), ("c", 1))}
    out: dict[str, complex] = {}
    for pair, s in pairs.items():
        p, q = pair[0], pair[1]
        vp, vq = voltages[p], voltages[q]
        out[p] = out.get(p, 0.0) + s * vp / (vp - vq)
        out[q] = out.get(q, 0.0) - s * vq / (vp - vq)
    return out


def line_z(config, length_ft: float) -> tuple[str, list]:
    phases, rows = CONFIGS[config]
    scale = (length_ft / FT_PER_MILE) / Z_BASE
    return phases, [[z * scale for z in row] for row in rows]


def _assemble(delta_voltages: dict | None) -> tf.FeederModel:
    loads: dict[str, dict[str, complex]] = {}
    for bus, conn, table in SPOT_LOADS:
        if conn == "delta":
            vbus = delta_voltages.get(bus) if delta_voltages else None
            per_phase = delta_to_wye(table, vbus)
        else:
            per_phase = dict(table)
        acc = loads.setdefault(bus, {})
        for p, s in per_phase.items():
            acc[p] = acc.get(p, 0.0) + s / S_BASE_KVA

    buses = []
    for bid, phases in BUS_PHASES.items():
        load = shunt = None
        if bid in loads:
            ph = [p for p in "abc" if p in loads[bid]]
            load = tf.PhaseVector(ph, [loads[bid][p] for p in ph])
        if bid in CAPACITORS:
            ph = [p for p in "abc" if p in CAPACITORS[bid]]
            b_pu = [1j * CAPACITORS[bid][p] / S_BASE_KVA for p in ph]
            shunt = tf.PhaseMatrix.diagonal(ph, b_pu)
        buses.append(tf.BusSpec(id=bid, phases=tuple(phases), load=load,
                                shunt=shunt, is_slack=(bid == "650")))

    lines = []
    for fb, tb, length, cfg in SEGMENTS:
        if cfg == "xfm":
            phases, rows = "abc", [[XFM_Z_PU if i == j else 0.0 for j in range(3)]
                                   for i in range(3)]
        elif cfg == "switch":
            phases, rows = "abc", [[SWITCH_Z_PU if i == j else 0.0 for j in range(3)]
                                   for i in range(3)]
        else:
            phases, rows = line_z(cfg, length)
        lines.append(tf.LineSpec(from_bus=fb, to_bus=tb, z=tf.PhaseMatrix(phases, rows)))

    alpha = cmath.exp(2j * math.pi / 3.0)
    model = tf.FeederModel(
        buses=tuple(buses),
        lines=tuple(lines),
        svrs=(tf.SvrSpec(from_bus="650", to_bus="RG60", kind="B", phases=("a", "b", "c")),),
        slack_voltage=tf.PhaseVector("abc", [1.0, alpha**2, alpha]),
        config={"v_min": 0.93},
    )
    violations = tf.validate(model)
    if violations:
        raise SystemExit("\n".join(str(v) for v in violations))
    return model


def build_model() -> tf.FeederModel:
    """Fix the delta-load wye equivalents at the zero-tap operating point.

    Solve the exact power flow, re-derive the per-phase equivalents at the
    solved voltages, and repeat until the conversion settles. The shipped
    wye loads then reproduce the behaviour of the true delta loads in the
    zero-tap base case (total delta power is conserved exactly throughout).
    """
    voltages: dict | None = None
    model = _assemble(voltages)
    for _ in range(30):
        sol = tf.solve_zbus(model, tf.taps_to_ratios(model, tf.zero_taps(model)))
        if not sol.converged:
            raise SystemExit("zero-tap power flow diverged during fixture construction")
        voltages = {bus: {p: sol.voltages[bus][p] for p in sol.voltages[bus].phases}
                    for bus, conn, _ in SPOT_LOADS if conn == "delta"}
        new_model = _assemble(voltages)
        drift = max(
            abs(new_model.bus(b.id).load[p] - b.load[p])
            for b in model.buses if b.load is not None
            for p in b.load.phases
        )
        model = new_model
        if drift < 1e-12:
            break
    return model


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1]
                                             / "fixtures" / "ieee13.json"))
    args = parser.parse_args()
    model = build_model()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(tf.serialize(model), encoding="utf-8")
    print(f"wrote {out} ({len(model.buses)} buses, {len(model.lines)} lines, "
          f"{len(model.svrs)} SVR)")


if __name__ == "__main__":
    main()
