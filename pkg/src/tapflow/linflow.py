"""Linearized three-phase branch-flow model in squared voltage magnitudes.

The model works with squared magnitudes v~ per (bus, phase) and complex edge
flows S~ per (edge, phase), holding three groups of quantities constant:

* per-edge rotation matrices of phase-voltage ratios (entry [p, q] is the
  to-bus phase-p voltage over the from-bus phase-q voltage),
* a real voltage-loss vector per edge,
* a complex power-loss vector per edge.

With the constants taken from an exact solution the equations reproduce that
solution's squared magnitudes and flows to machine precision; with balanced
rotation entries and zeroed loss vectors they form the classic lossless
approximation.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import PipelineError
from .network import FeederModel, PhaseMatrix, PhaseVector, tree_index
from .zbus import PowerFlowSolution

_ALPHA = np.exp(2j * np.pi / 3.0)
_BALANCED_UNIT = {"a": 1.0 + 0.0j, "b": _ALPHA**2, "c": _ALPHA}


@dataclass(frozen=True)
class LinearizationConstants:
    """Per-line-edge constants held fixed by the linear model.

    Keys are edge strings "from->to" for line edges; regulator edges carry no
    impedance and need no constants.
    """

    gamma: dict      # edge key -> PhaseMatrix of voltage ratios
    h: dict          # edge key -> PhaseVector, real voltage-loss term
    l: dict          # edge key -> PhaseVector, complex power-loss term


def constants_balanced(model: FeederModel) -> LinearizationConstants:
    """Balanced-voltage rotation entries (powers of 1|120deg), zero loss terms."""
    gamma, h, l = {}, {}, {}
    for ln in model.lines:
        ph = ln.z.phases
        u = np.array([_BALANCED_UNIT[p] for p in ph])
        gamma[f"{ln.from_bus}->{ln.to_bus}"] = PhaseMatrix(ph, np.outer(u, 1.0 / u))
        h[f"{ln.from_bus}->{ln.to_bus}"] = PhaseVector.zeros(ph)
        l[f"{ln.from_bus}->{ln.to_bus}"] = PhaseVector.zeros(ph)
    return LinearizationConstants(gamma=gamma, h=h, l=l)


def constants_from_solution(model: FeederModel, base: PowerFlowSolution) -> LinearizationConstants:
    """Constants evaluated at a converged base solution.

    Per line: with edge current i from the base voltages and I = i i*, the
    voltage-loss vector is diag(Z I Z*) (real up to round-off, asserted) and
    the power-loss vector is diag(Z I). Rotation entries are v_to[p] / v_from[q].
    """
    if not base.converged:
        raise ValueError("base power flow must be converged")
    gamma, h, l = {}, {}, {}
    for ln in model.lines:
        ph = ln.z.phases
        key = f"{ln.from_bus}->{ln.to_bus}"
        vn = np.array([base.voltages[ln.from_bus][p] for p in ph])
        vm = np.array([base.voltages[ln.to_bus][p] for p in ph])
        if np.any(vn == 0.0) or np.any(vm == 0.0):
            raise ValueError(f"zero phase voltage at an endpoint of line {key}")
        z = ln.z.array
        i_edge = np.linalg.inv(z) @ (vn - vm)
        big_i = np.outer(i_edge, np.conj(i_edge))
        h_cplx = np.diag(z @ big_i @ np.conj(z).T)
        if np.max(np.abs(h_cplx.imag)) > 1e-10:
            raise AssertionError(f"voltage-loss term not real on line {key}")
        gamma[key] = PhaseMatrix(ph, np.outer(vm, 1.0 / vn))
        h[key] = PhaseVector(ph, h_cplx.real.astype(complex))
        l[key] = PhaseVector(ph, np.diag(z @ big_i))
    return LinearizationConstants(gamma=gamma, h=h, l=l)


def linear_powerflow(model: FeederModel, constants: LinearizationConstants,
                     ratios) -> tuple[dict, dict]:
    """Solve the linear model at fixed regulator ratios.

    Returns (v_sq, flows): squared voltage magnitudes per bus (real PhaseVector)
    and complex per-phase flows per edge key, both over the relevant masks.
    Radiality is exploited with backward flow accumulation and forward voltage
    propagation, iterated to a fixed point when shunts couple the two sweeps.
    """
    idx = tree_index(model)
    by_id = {b.id: b for b in model.buses}
    slack_sq = {p: abs(model.slack_voltage[p]) ** 2 for p in model.slack_voltage.phases}

    v_sq = {b.id: {p: slack_sq[p] for p in b.phases} for b in model.buses}
    flows: dict[str, dict[str, complex]] = {}

    for sweep in range(100):
        # Backward: accumulate flows from the leaves toward the root.
        for bus_id in reversed(idx.order):
            edge = idx.parent.get(bus_id)
            if edge is None:
                continue
            if edge.kind == "svr":
                child = idx.children[bus_id][0]  # exactly one outgoing line
                child_flow = flows[child.key()]
                flows[edge.key()] = {p: child_flow.get(p, 0.0 + 0.0j) for p in edge.phases}
                continue
            ln = model.lines[edge.index]
            bus = by_id[bus_id]
            acc = {p: 0.0 + 0.0j for p in edge.phases}
            for child in idx.children[bus_id]:
                for p, val in flows[child.key()].items():
                    acc[p] += val
            if bus.load is not None:
                for p in bus.load.phases:
                    acc[p] += bus.load[p]
            if bus.shunt is not None:
                sp_ = bus.shunt.phases
                ybar = np.conj(bus.shunt.array).T
                vv = np.array([v_sq[bus_id][p] for p in sp_])
                contrib = ybar @ vv
                for k, p in enumerate(sp_):
                    acc[p] += contrib[k]
            lkey = edge.key()
            lvec = constants.l[lkey]
            for p in edge.phases:
                acc[p] += lvec[p]
            flows[lkey] = acc

        # Forward: propagate squared magnitudes from the root.
        delta = 0.0
        for bus_id in idx.order:
            edge = idx.parent.get(bus_id)
            if edge is None:
                continue
            up = v_sq[edge.from_bus]
            if edge.kind == "svr":
                sv = model.svrs[edge.index]
                for p in edge.phases:
                    r = float(ratios[edge.index][p])
                    new = up[p] / r**2 if sv.kind == "B" else up[p] * r**2
                    delta = max(delta, abs(new - v_sq[bus_id][p]))
                    v_sq[bus_id][p] = new
                continue
            key = edge.key()
            ph = edge.phases
            m_rot = constants.gamma[key].array * np.conj(model.lines[edge.index].z.array)
            s_vec = np.array([flows[key][p] for p in ph])
            drop = 2.0 * (m_rot @ s_vec).real
            hvec = constants.h[key]
            for k, p in enumerate(ph):
                new = up[p] - drop[k] - hvec[p].real
                delta = max(delta, abs(new - v_sq[bus_id][p]))
                v_sq[bus_id][p] = new
        if delta < 1e-13:
            break
    else:
        raise PipelineError("linear_powerflow", "sweep iteration did not settle")

    v_out = {bid: PhaseVector(by_id[bid].phases,
                              [complex(v_sq[bid][p]) for p in by_id[bid].phases])
             for bid in v_sq}
    f_out = {key: PhaseVector(tuple(p for p in ("a", "b", "c") if p in fl),
                              [fl[p] for p in ("a", "b", "c") if p in fl])
             for key, fl in flows.items()}
    return v_out, f_out


# ---------------------------------------------------------------------------
# Linear-vs-exact comparison report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinDiffReport:
    """Per-phase worst |sqrt(v~) - |v|| plus minimum magnitudes from both models."""

    max_diff: dict           # phase -> worst absolute magnitude difference
    min_lin: float           # min sqrt(v~) over non-slack buses/phases
    min_exact: float         # min |v| over non-slack buses/phases

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("phase,max_abs_diff,min_v_linear,min_v_exact\n")
        for p in ("a", "b", "c"):
            if p in self.max_diff:
                buf.write(f"{p},{self.max_diff[p]:.12g},,\n")
        buf.write(f"all,,{self.min_lin:.12g},{self.min_exact:.12g}\n")
        return buf.getvalue()


def lindiff(model: FeederModel, exact: PowerFlowSolution, v_sq: dict) -> LinDiffReport:
    """Compare a linear solution against an exact one over non-slack buses."""
    slack_id = model.slack.id
    max_diff: dict[str, float] = {}
    min_lin = np.inf
    min_exact = np.inf
    for b in model.buses:
        if b.id == slack_id:
            continue
        for p in b.phases:
            lin_mag = float(np.sqrt(v_sq[b.id][p].real))
            ex_mag = abs(exact.voltages[b.id][p])
            max_diff[p] = max(max_diff.get(p, 0.0), abs(lin_mag - ex_mag))
            min_lin = min(min_lin, lin_mag)
            min_exact = min(min_exact, ex_mag)
    return LinDiffReport(max_diff=max_diff, min_lin=float(min_lin), min_exact=float(min_exact))
