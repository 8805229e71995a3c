"""Sparse bus admittance assembly with ideal-regulator secondary elimination.

Coordinates are (bus, phase) pairs. Regulator secondaries are eliminated from
the retained system using the ideal two-port relations v_primary = A v_secondary,
i_primary = A^-1 i_line (type-B, diagonal real gain A), leaving a reduced Y that
couples the primary directly to the bus behind the regulator's outgoing line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .network import FeederModel, PhaseVector, tree_index


@dataclass(frozen=True)
class AdmittanceSystem:
    """Reduced admittance blocks and the coordinate bookkeeping around them.

    Y       : retained (non-slack, non-eliminated) square block
    Y_NS    : coupling of retained rows to slack columns
    Y_S     : slack-injection rows over the full coordinate set (slack included,
              eliminated secondaries included with zero weight)
    """

    Y: sp.csc_matrix
    Y_NS: sp.csc_matrix
    Y_S: sp.csc_matrix
    coords: tuple            # retained (bus, phase) in row order
    slack_coords: tuple      # slack (bus, phase) in Y_NS column order
    full_coords: tuple       # every (bus, phase) in Y_S column order
    eliminated: tuple        # bus ids removed by regulator elimination

    @property
    def index(self) -> dict:
        return {c: i for i, c in enumerate(self.coords)}

    @property
    def full_index(self) -> dict:
        return {c: i for i, c in enumerate(self.full_coords)}


def _gain_diag(svr, ratios, phases) -> np.ndarray:
    missing = [p for p in phases if p not in ratios]
    if missing:
        raise ValueError(f"svr {svr.from_bus}->{svr.to_bus}: no ratio for phase(s) {missing}")
    return np.array([float(ratios[p]) for p in phases])


def _inv(z: np.ndarray, what: str) -> np.ndarray:
    # LAPACK can return garbage instead of raising on float-singular input,
    # so verify the inverse actually inverts.
    try:
        out = np.linalg.inv(z)
    except np.linalg.LinAlgError:
        raise ValueError(f"singular impedance matrix on {what}") from None
    resid = np.max(np.abs(z @ out - np.eye(z.shape[0])))
    if not np.isfinite(resid) or resid > 1e-8:
        raise ValueError(f"singular impedance matrix on {what}")
    return out


def assemble(model: FeederModel, ratios) -> AdmittanceSystem:
    """Build the admittance blocks for a validated model at fixed regulator ratios.

    ``ratios`` is a list aligned with ``model.svrs``, each item mapping phase to
    the effective ratio. Constant-admittance shunts are folded onto the diagonal.
    """
    eliminated = tuple(sv.to_bus for sv in model.svrs)
    elim_set = set(eliminated)
    slack_id = model.slack.id

    coords = [(b.id, p) for b in model.buses if not b.is_slack and b.id not in elim_set
              for p in b.phases]
    slack_coords = [(slack_id, p) for p in model.slack.phases]
    full_coords = [(b.id, p) for b in model.buses for p in b.phases]
    row = {c: i for i, c in enumerate(coords)}
    scol = {c: i for i, c in enumerate(slack_coords)}
    fcol = {c: i for i, c in enumerate(full_coords)}

    n, ns, nf = len(coords), len(slack_coords), len(full_coords)
    yv, yi, yj = [], [], []          # retained block
    bv, bi, bj = [], [], []          # retained x slack
    sv_, si, sj = [], [], []         # slack rows x full

    def stamp(bus_r: str, bus_c: str, phases_r, phases_c, block: np.ndarray):
        for a, pr in enumerate(phases_r):
            for b, pc in enumerate(phases_c):
                val = block[a, b]
                if val == 0.0:
                    continue
                if bus_r == slack_id:
                    si.append(scol[(bus_r, pr)])
                    sj.append(fcol[(bus_c, pc)])
                    sv_.append(val)
                elif bus_c == slack_id:
                    bi.append(row[(bus_r, pr)])
                    bj.append(scol[(bus_c, pc)])
                    bv.append(val)
                else:
                    yi.append(row[(bus_r, pr)])
                    yj.append(row[(bus_c, pc)])
                    yv.append(val)

    # Lines whose from-bus is a regulator secondary are handled by elimination.
    svr_line = {}
    idx = tree_index(model)
    for svx, sv in enumerate(model.svrs):
        outs = idx.children[sv.to_bus]
        svr_line[svx] = model.lines[outs[0].index]

    for ln in model.lines:
        if ln.from_bus in elim_set:
            continue
        ph = ln.z.phases
        zinv = _inv(ln.z.array, f"line {ln.from_bus}->{ln.to_bus}")
        stamp(ln.from_bus, ln.from_bus, ph, ph, zinv)
        stamp(ln.to_bus, ln.to_bus, ph, ph, zinv)
        stamp(ln.from_bus, ln.to_bus, ph, ph, -zinv)
        stamp(ln.to_bus, ln.from_bus, ph, ph, -zinv)

    for svx, sv in enumerate(model.svrs):
        line = svr_line[svx]
        ph = line.z.phases   # current-carrying phases through the regulator
        zinv = _inv(line.z.array, f"line {line.from_bus}->{line.to_bus}")
        a = _gain_diag(sv, ratios[svx], ph)
        # Type-B: v_n = A v_n', so v_n' = A^-1 v_n. Type-A mirrors the gain.
        g = (1.0 / a) if sv.kind == "B" else a
        G = np.diag(g)
        nbus, mbus = sv.from_bus, line.to_bus
        stamp(nbus, nbus, ph, ph, G @ zinv @ G)
        stamp(nbus, mbus, ph, ph, -(G @ zinv))
        stamp(mbus, nbus, ph, ph, -(zinv @ G))
        stamp(mbus, mbus, ph, ph, zinv)

    for b in model.buses:
        if b.shunt is None:
            continue
        stamp(b.id, b.id, b.shunt.phases, b.shunt.phases, b.shunt.array)

    Y = sp.coo_matrix((yv, (yi, yj)), shape=(n, n), dtype=complex).tocsc()
    Y_NS = sp.coo_matrix((bv, (bi, bj)), shape=(n, ns), dtype=complex).tocsc()
    Y_S = sp.coo_matrix((sv_, (si, sj)), shape=(ns, nf), dtype=complex).tocsc()
    return AdmittanceSystem(
        Y=Y, Y_NS=Y_NS, Y_S=Y_S,
        coords=tuple(coords), slack_coords=tuple(slack_coords),
        full_coords=tuple(full_coords), eliminated=eliminated,
    )


def recover_svr_secondary(model: FeederModel, ratios, voltages: dict) -> dict:
    """Voltages at eliminated regulator secondaries from the retained solution.

    ``voltages`` maps bus id -> PhaseVector and must cover every regulator
    primary. Type-B: v_secondary = v_primary / r; type-A: v_secondary = r * v_primary.
    """
    out = {}
    for svx, sv in enumerate(model.svrs):
        vp = voltages[sv.from_bus]
        sec_phases = model.bus(sv.to_bus).phases
        vals = []
        for p in sec_phases:
            r = float(ratios[svx][p])
            if r == 0.0:
                raise ValueError(f"svr {sv.from_bus}->{sv.to_bus}: zero ratio on phase {p}")
            vals.append(vp[p] / r if sv.kind == "B" else vp[p] * r)
        out[sv.to_bus] = PhaseVector(sec_phases, vals)
    return out


def write_matrix_market(system: AdmittanceSystem, path) -> None:
    """Debug dump of the retained Y block in Matrix Market coordinate format."""
    from scipy.io import mmwrite

    mmwrite(str(path), system.Y.tocoo(), field="complex")
