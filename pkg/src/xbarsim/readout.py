"""Read schemes: one-cycle row readout plus the baseline single-cell,
floating-bitline, and resistive-load reads, with threshold classification
and error statistics.

Besides the one-shot operations, two session classes reuse a single sparse
factorization across many reads of the same sampled array: row reads share
one matrix for every selected row (only the right-hand side changes; sinh
devices iterate on a frozen flat-start Jacobian with true-residual
verification), and single-cell sweeps reduce to one two-terminal
effective-resistance query per cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse.linalg as spla

from .crossbar import (
    FLOATING,
    BiasConfig,
    BiasMismatch,
    Clamp,
    CrossbarSpec,
    Drive,
    Floating,
    ResistiveLoad,
    TERM_RESISTIVE,
    bank_partition,
    build_network,
    check_pattern,
    conventional_cell_bias,
    row_read_bias,
)
from .devices import LRS, CellGrid, DeviceParams, ideal_state_currents
from .solver import (
    DEFAULT_OPTIONS,
    SolverConvergenceError,
    SolverOptions,
    assemble_admittance,
    bitline_currents,
    check_grounded,
    device_incidence,
    solve,
    solve_nonlinear,
    wire_laplacian,
)

_CHORD_MAX_ITERS = 80
_BATCH_TARGET_FLOATS = 16_000_000  # ~128 MB per batched dense block


class SchemeKind(Enum):
    ROW_READOUT = "row-readout"
    CONVENTIONAL = "conventional"
    FLOATING_BITLINES = "floating-bitlines"
    RESISTIVE_LOAD = "resistive-load"


@dataclass(frozen=True)
class ReadResult:
    """Sensed values of one row read, classified against a threshold.

    ``sensed`` holds currents (unit 'A') for current-sensing schemes and
    bitline voltages (unit 'V') for the floating / resistive-load baselines.
    """

    row: int
    columns: np.ndarray
    sensed: np.ndarray
    unit: str
    threshold: float
    classified_bits: np.ndarray
    true_bits: np.ndarray

    @property
    def n_errors(self) -> int:
        return int((self.classified_bits != self.true_bits).sum())

    @property
    def error_positions(self) -> np.ndarray:
        return self.columns[self.classified_bits != self.true_bits]

    def csv_rows(self):
        """Rows of (row, col, true_bit, sensed value, read_bit)."""
        for k, col in enumerate(self.columns):
            yield (self.row, int(col), int(self.true_bits[k]),
                   float(self.sensed[k]), int(self.classified_bits[k]))


def midpoint_threshold(spec: CrossbarSpec, base: DeviceParams) -> float:
    """Geometric mean of the ideal LRS and HRS read currents at v_dd - v_b.

    The state currents sit roughly three decades apart, so the log-scale
    midpoint is the natural decision level; the arithmetic mean would sit
    next to the LRS current.
    """
    i_lrs, i_hrs = ideal_state_currents(base, spec.v_dd - spec.v_b)
    return float(np.sqrt(i_lrs * i_hrs))


def classify(values: np.ndarray, threshold: float) -> np.ndarray:
    """Threshold decision with the LRS=1 convention (value >= threshold -> 1)."""
    return (np.asarray(values) >= threshold).astype(np.int8)


def best_threshold_ber(lrs_values, hrs_values) -> tuple[float, float]:
    """Exhaustive scan of candidate thresholds minimizing the balanced error.

    Candidates are the midpoints between adjacent distinct pooled values
    plus sentinels outside the range; classification is value >= t -> LRS.
    The error is the mean of the two per-state error rates, so a biased
    stored pattern does not skew the result.
    """
    lrs = np.sort(np.asarray(lrs_values, dtype=float))
    hrs = np.sort(np.asarray(hrs_values, dtype=float))
    if lrs.size == 0 or hrs.size == 0:
        raise ValueError("both state populations must be nonempty")
    pooled = np.unique(np.concatenate([lrs, hrs]))
    mids = (pooled[:-1] + pooled[1:]) / 2.0 if pooled.size > 1 else np.empty(0)
    candidates = np.concatenate([[pooled[0] - 1.0], mids, [pooled[-1] + 1.0]])
    # error(t) = 0.5 * (P[lrs < t] + P[hrs >= t])
    miss_lrs = np.searchsorted(lrs, candidates, side="left") / lrs.size
    miss_hrs = 1.0 - np.searchsorted(hrs, candidates, side="left") / hrs.size
    ber = 0.5 * (miss_lrs + miss_hrs)
    k = int(np.argmin(ber))
    return float(candidates[k]), float(ber[k])


def split_by_state(values: np.ndarray, true_bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values)
    true_bits = np.asarray(true_bits)
    return values[true_bits == LRS], values[true_bits != LRS]


def _auto_voltage_threshold(values: np.ndarray, true_bits: np.ndarray) -> float:
    """Fallback decision level for voltage reads: best split of this read's
    own labeled values (a single open-circuit level has no per-cell ideal)."""
    lrs, hrs = split_by_state(values, true_bits)
    if lrs.size == 0:
        return float(np.max(values)) + 1.0
    if hrs.size == 0:
        return float(np.min(values)) - 1.0
    return best_threshold_ber(lrs, hrs)[0]


def _make_result(row, sensed, unit, threshold, true_bits, columns=None) -> ReadResult:
    sensed = np.asarray(sensed, dtype=float)
    if columns is None:
        columns = np.arange(sensed.size)
    if threshold is None:
        threshold = _auto_voltage_threshold(sensed, true_bits)
    return ReadResult(
        row=row,
        columns=np.asarray(columns),
        sensed=sensed,
        unit=unit,
        threshold=float(threshold),
        classified_bits=classify(sensed, threshold),
        true_bits=np.asarray(true_bits, dtype=np.int8),
    )


def read_row(
    spec: CrossbarSpec,
    cells: CellGrid,
    pattern: np.ndarray,
    i: int,
    mismatch: BiasMismatch | None = None,
    threshold: float | None = None,
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> ReadResult:
    """One-cycle row read: solve the biased network per bank and collect all
    N bitline currents.  Per-line mismatch offsets apply to every clamp of
    the affected line, so the bank solves coincide and are deduplicated."""
    pattern = check_pattern(spec, pattern)
    if threshold is None:
        threshold = midpoint_threshold(spec, cells.base)
    currents = np.empty(spec.cols)
    prev_bias = prev_currents = None
    for bank in bank_partition(spec):
        bias = row_read_bias(spec, i, mismatch)
        if bias == prev_bias:
            currents[bank.col_start:bank.col_stop] = prev_currents[bank.col_start:bank.col_stop]
            continue
        net = build_network(spec, pattern, cells, bias)
        sol = solve(net, opts)
        all_cols = bitline_currents(net, sol)
        currents[bank.col_start:bank.col_stop] = all_cols[bank.col_start:bank.col_stop]
        prev_bias, prev_currents = bias, all_cols
    return _make_result(i, currents, "A", threshold, pattern[i])


def read_cell_conventional(
    spec: CrossbarSpec,
    cells: CellGrid,
    pattern: np.ndarray,
    i: int,
    j: int,
    unselected=FLOATING,
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> float:
    """Single-cell read current (main path plus sneak paths) with the
    selected wordline driven, the selected bitline grounded, and the other
    lines terminated per ``unselected``."""
    net = build_network(spec, pattern, cells, conventional_cell_bias(spec, i, j, unselected))
    sol = solve(net, opts)
    return float(bitline_currents(net, sol, columns=[j])[0])


def _voltage_row_bias(spec: CrossbarSpec, i: int, term) -> BiasConfig:
    wordlines = tuple(
        Drive(spec.v_dd) if r == i else Clamp(spec.v_b) for r in range(spec.rows)
    )
    return BiasConfig(wordlines, tuple(term for _ in range(spec.cols)))


def read_row_floating(
    spec: CrossbarSpec,
    cells: CellGrid,
    pattern: np.ndarray,
    i: int,
    threshold: float | None = None,
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> ReadResult:
    """Row drive with open bitlines; senses the open-circuit voltage at the
    sense end of each bitline."""
    pattern = check_pattern(spec, pattern)
    net = build_network(spec, pattern, cells, _voltage_row_bias(spec, i, FLOATING))
    sol = solve(net, opts)
    sense_nodes = net.bl_nodes[spec.rows - 1, :]
    voltages = sol.node_voltages[sense_nodes]
    return _make_result(i, voltages, "V", threshold, pattern[i])


def read_row_resistive(
    spec: CrossbarSpec,
    cells: CellGrid,
    pattern: np.ndarray,
    i: int,
    r_s: float,
    to: float = 0.0,
    threshold: float | None = None,
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> ReadResult:
    """Row drive with a sense resistor r_s from each bitline to ``to``;
    senses the voltage developed across each resistor."""
    pattern = check_pattern(spec, pattern)
    net = build_network(spec, pattern, cells, _voltage_row_bias(spec, i, ResistiveLoad(r_s, to)))
    sol = solve(net, opts)
    attach = np.array([a.attach_node for a in net.bl_attach])
    voltages = sol.node_voltages[attach] - to
    return _make_result(i, voltages, "V", threshold, pattern[i])


# Factorization-reuse sessions --------------------------------------------------


def _batch_columns(n_nodes: int, requested: int) -> int:
    return max(1, min(requested, _BATCH_TARGET_FLOATS // max(n_nodes, 1)))


class RowReadSession:
    """Row readout of one sampled array with a single factorization.

    The fixed-node set of the row-read bias does not depend on the selected
    row, so for ohmic devices one LU factorization serves every row (only
    the right-hand side changes).  For sinh devices the Jacobian at the
    flat start (all lines at the hold voltage) is also row-independent; it
    is factorized once and iterated as a frozen-Jacobian Newton scheme,
    verified against the true KCL residual, with a per-row exact fallback
    if the iteration stalls.
    """

    def __init__(
        self,
        spec: CrossbarSpec,
        cells: CellGrid,
        pattern: np.ndarray,
        mismatch: BiasMismatch | None = None,
        opts: SolverOptions = DEFAULT_OPTIONS,
    ):
        self.spec = spec
        self.cells = cells
        self.pattern = check_pattern(spec, pattern)
        self.mismatch = mismatch if mismatch is not None else BiasMismatch.zeros(spec)
        self.opts = opts
        self.net = build_network(spec, self.pattern, cells, row_read_bias(spec, 0, self.mismatch))
        check_grounded(self.net)
        self._u = ~self.net.fixed_mask
        self._uidx = np.flatnonzero(self._u)
        self._fidx = np.flatnonzero(self.net.fixed_mask)
        att = lambda a: a.terminal_node if a.kind == TERM_RESISTIVE else a.attach_node
        self._wl_ctrl = np.array([att(a) for a in self.net.wl_attach])
        self._wl_ctrl_far = np.array([
            att(a) if a is not None else -1 for a in self.net.wl_attach_far
        ])
        self._bl_ctrl = np.array([att(a) for a in self.net.bl_attach])
        self._l_wire = wire_laplacian(self.net)
        self._e_dev = device_incidence(self.net)
        g0 = cells.active_conductances(self.pattern, at_voltage=0.0)
        self._G0 = assemble_admittance(self.net, g0)
        Gu = self._G0[self._u]
        self._Guf = Gu[:, self.net.fixed_mask]
        self._lu = spla.splu(Gu[:, self._u].tocsc()) if self._uidx.size else None
        if not cells.is_linear:
            self._k_act = np.where(self.pattern == LRS, cells.on_values, cells.off_values).ravel()
            self._a = cells.base.a

    def _fixed_values(self, rows, v_b: float, v_dd: float) -> np.ndarray:
        """Fixed-node voltage vector for each selected row (columns of the batch)."""
        vf = np.empty((self.net.n_nodes, len(rows)))
        wl_v = v_b + self.mismatch.wordline_dv
        bl_v = v_b + self.mismatch.bitline_dv
        far = self._wl_ctrl_far
        has_far = far >= 0
        for c, r in enumerate(rows):
            col = vf[:, c]
            col[self._wl_ctrl] = wl_v
            col[self._wl_ctrl[r]] = v_dd
            if has_far.any():
                col[far[has_far]] = wl_v[has_far]
                if has_far[r]:
                    col[far[r]] = v_dd
            col[self._bl_ctrl] = bl_v
        return vf

    def solve_rows(self, rows, v_b: float | None = None, v_dd: float | None = None) -> np.ndarray:
        """Full node-voltage matrix (n_nodes x len(rows)), one column per row read.

        ``v_b`` / ``v_dd`` override the session bias point; the factorized
        matrix does not depend on the bias values, so overrides are free.
        """
        rows = list(rows)
        v_b = self.spec.v_b if v_b is None else v_b
        v_dd = self.spec.v_dd if v_dd is None else v_dd
        V = self._fixed_values(rows, v_b, v_dd)
        if not self._uidx.size:
            return V
        if self.cells.is_linear:
            rhs = -(self._Guf @ V[self._fidx])
            X = self._lu.solve(rhs)
            V[self._uidx] = X
            best = np.abs((self._G0 @ V)[self._uidx]).max()
            for _ in range(4):
                if best == 0.0:
                    break
                R = (self._G0 @ V)[self._uidx]
                V_try = V.copy()
                V_try[self._uidx] -= self._lu.solve(R)
                res_try = np.abs((self._G0 @ V_try)[self._uidx]).max()
                if res_try >= best:
                    break
                V, best = V_try, res_try
            res = best
            if res > self.opts.abs_tol:
                raise SolverConvergenceError(
                    f"batched linear residual {res:.3e} A above tolerance",
                    residual=float(res), iterations=1,
                )
            return V
        return self._solve_rows_chord(rows, V, v_b)

    def _residual(self, V: np.ndarray) -> np.ndarray:
        dv = V[self.net.dev_a] - V[self.net.dev_b]
        i_dev = self._k_act[:, None] * np.sinh(self._a * dv)
        return (self._l_wire @ V + self._e_dev @ i_dev)[self._uidx]

    def _solve_rows_chord(self, rows, V: np.ndarray, v_b: float) -> np.ndarray:
        V[self._uidx] = v_b
        F = self._residual(V)
        active = np.arange(V.shape[1])
        last = np.inf
        for it in range(_CHORD_MAX_ITERS):
            res_cols = np.abs(F).max(axis=0) if F.size else np.zeros(len(active))
            keep = res_cols > self.opts.abs_tol
            if not keep.any():
                return V
            active = active[keep]
            F = F[:, keep]
            worst = res_cols[keep].max()
            if it > 6 and worst > 0.5 * last:
                break  # frozen-Jacobian iteration stalled; fall back per row
            last = worst
            V[np.ix_(self._uidx, active)] -= self._lu.solve(np.ascontiguousarray(F))
            Vact = V[:, active]
            dv = Vact[self.net.dev_a] - Vact[self.net.dev_b]
            i_dev = self._k_act[:, None] * np.sinh(self._a * dv)
            F = (self._l_wire @ Vact + self._e_dev @ i_dev)[self._uidx]
        for c in active:
            net = build_network(
                self.spec, self.pattern, self.cells, row_read_bias(self.spec, rows[c], self.mismatch)
            )
            V[:, c] = solve_nonlinear(net, self.opts).node_voltages
        return V

    def bitline_currents_from(self, V: np.ndarray) -> np.ndarray:
        """Per-column sense currents for each solved column of V (cols x N)."""
        if self.cells.is_linear:
            leaving = self._G0 @ V
        else:
            dv = V[self.net.dev_a] - V[self.net.dev_b]
            i_dev = self._k_act[:, None] * np.sinh(self._a * dv)
            leaving = self._l_wire @ V + self._e_dev @ i_dev
        return -leaving[self._bl_ctrl].T

    def branch_power_from(self, V: np.ndarray) -> np.ndarray:
        """Total branch dissipation of each solved column of V (watts)."""
        dv_wire = V[self.net.wire_a] - V[self.net.wire_b]
        p = (dv_wire**2 * self.net.wire_g[:, None]).sum(axis=0)
        dv = V[self.net.dev_a] - V[self.net.dev_b]
        if self.cells.is_linear:
            g_act = self.cells.active_conductances(self.pattern).ravel()
            p = p + (dv**2 * g_act[:, None]).sum(axis=0)
        else:
            i_dev = self._k_act[:, None] * np.sinh(self._a * dv)
            p = p + (dv * i_dev).sum(axis=0)
        return p

    def row_currents(self, rows) -> np.ndarray:
        rows = list(rows)
        out = np.empty((len(rows), self.spec.cols))
        step = _batch_columns(self.net.n_nodes, len(rows))
        for s in range(0, len(rows), step):
            chunk = rows[s:s + step]
            V = self.solve_rows(chunk)
            out[s:s + len(chunk)] = self.bitline_currents_from(V)
        return out

    def current_map(self) -> np.ndarray:
        """Sensed current of every cell: row i of the map is the row-i read."""
        return self.row_currents(range(self.spec.rows))

    def read_row_result(self, i: int, threshold: float | None = None) -> ReadResult:
        if threshold is None:
            threshold = midpoint_threshold(self.spec, self.cells.base)
        currents = self.row_currents([i])[0]
        return _make_result(i, currents, "A", threshold, self.pattern[i])


class ConventionalSession:
    """Batched single-cell conventional reads on one sampled linear array.

    With unselected lines floating, the read reduces to the two-terminal
    effective resistance between the driven wordline end and the grounded
    bitline end; one factorization of the (grounded) interior Laplacian
    answers every cell with a single back-substitution.  With unselected
    lines clamped, the fixed-node set is cell-independent and the same
    one-factorization / many-right-hand-sides approach applies directly.
    """

    def __init__(
        self,
        spec: CrossbarSpec,
        cells: CellGrid,
        pattern: np.ndarray,
        unselected=FLOATING,
        opts: SolverOptions = DEFAULT_OPTIONS,
    ):
        if not cells.is_linear:
            raise TypeError(
                "ConventionalSession supports linear devices; use "
                "read_cell_conventional for sinh devices"
            )
        if not isinstance(unselected, (Floating, Clamp)):
            raise TypeError("unselected termination must be Floating or Clamp")
        self.spec = spec
        self.cells = cells
        self.pattern = check_pattern(spec, pattern)
        self.unselected = unselected
        self.opts = opts
        import dataclasses

        self._floating = isinstance(unselected, Floating)
        if self._floating and spec.double_sided_clamps:
            raise ValueError(
                "ConventionalSession's effective-resistance path assumes a "
                "single-ended drive; use read_cell_conventional for "
                "double-sided specs"
            )
        base_spec = dataclasses.replace(spec, r_driver=0.0) if self._floating else spec
        bias = conventional_cell_bias(base_spec, 0, 0, unselected)
        self.net = build_network(base_spec, self.pattern, cells, bias)
        g_dev = cells.active_conductances(self.pattern)
        G = assemble_admittance(self.net, g_dev)
        self._p_nodes = self.net.wl_nodes[:, 0]
        self._q_nodes = self.net.bl_nodes[spec.rows - 1, :]
        if self._floating:
            # Ground the interior Laplacian at the last bitline's sense end;
            # queries touching the ground node drop that unit entry.
            check_grounded(self.net)
            self._ground = int(self._q_nodes[-1])
            keep = np.ones(self.net.n_nodes, dtype=bool)
            keep[self._ground] = False
            self._keep_index = np.cumsum(keep) - 1
            Ag = G[keep][:, keep].tocsc()
            self._lu = spla.splu(Ag)
            self._n_red = int(keep.sum())
        else:
            check_grounded(self.net)
            self._G = G
            self._u = ~self.net.fixed_mask
            self._uidx = np.flatnonzero(self._u)
            self._fidx = np.flatnonzero(self.net.fixed_mask)
            Gu = G[self._u]
            self._Guf = Gu[:, self.net.fixed_mask]
            self._lu = spla.splu(Gu[:, self._u].tocsc())
            att = lambda a: a.terminal_node if a.kind == TERM_RESISTIVE else a.attach_node
            self._wl_ctrl = np.array([att(a) for a in self.net.wl_attach])
            self._wl_ctrl_far = np.array([
                att(a) if a is not None else -1 for a in self.net.wl_attach_far
            ])
            self._bl_ctrl = np.array([att(a) for a in self.net.bl_attach])

    def currents(self, cells_ij) -> np.ndarray:
        """Sensed current for each (i, j) target, batched."""
        cells_ij = list(cells_ij)
        out = np.empty(len(cells_ij))
        step = _batch_columns(self.net.n_nodes, len(cells_ij))
        for s in range(0, len(cells_ij), step):
            chunk = cells_ij[s:s + step]
            out[s:s + len(chunk)] = (
                self._currents_floating(chunk) if self._floating else self._currents_clamped(chunk)
            )
        return out

    def current(self, i: int, j: int) -> float:
        return float(self.currents([(i, j)])[0])

    def _currents_floating(self, chunk) -> np.ndarray:
        B = np.zeros((self._n_red, len(chunk)))
        p_red = np.empty(len(chunk), dtype=np.int64)
        q_red = np.empty(len(chunk), dtype=np.int64)
        for c, (i, j) in enumerate(chunk):
            p = int(self._p_nodes[i])
            q = int(self._q_nodes[j])
            p_red[c] = self._keep_index[p]
            q_red[c] = self._keep_index[q] if q != self._ground else -1
            B[p_red[c], c] += 1.0
            if q_red[c] >= 0:
                B[q_red[c], c] -= 1.0
        X = self._lu.solve(B)
        cols = np.arange(len(chunk))
        r_eff = X[p_red, cols]
        has_q = q_red >= 0
        r_eff[has_q] -= X[q_red[has_q], cols[has_q]]
        return self.spec.v_dd / (r_eff + 2.0 * self.spec.r_driver)

    def _currents_clamped(self, chunk) -> np.ndarray:
        far = self._wl_ctrl_far
        has_far = far >= 0
        vf_base = np.empty(self.net.n_nodes)
        vf_base[self._wl_ctrl] = self.unselected.v
        vf_base[far[has_far]] = self.unselected.v
        vf_base[self._bl_ctrl] = self.unselected.v
        V = np.empty((self.net.n_nodes, len(chunk)))
        for c, (i, j) in enumerate(chunk):
            col = vf_base.copy()
            col[self._wl_ctrl[i]] = self.spec.v_dd
            if has_far[i]:
                col[far[i]] = self.spec.v_dd
            col[self._bl_ctrl[j]] = 0.0
            V[:, c] = col
        rhs = -(self._Guf @ V[self._fidx])
        V[self._uidx] = self._lu.solve(rhs)
        best = np.abs((self._G @ V)[self._uidx]).max()
        for _ in range(4):
            if best == 0.0:
                break
            R = (self._G @ V)[self._uidx]
            V_try = V.copy()
            V_try[self._uidx] -= self._lu.solve(R)
            res_try = np.abs((self._G @ V_try)[self._uidx]).max()
            if res_try >= best:
                break
            V, best = V_try, res_try
        leaving = self._G @ V
        out = np.empty(len(chunk))
        for c, (i, j) in enumerate(chunk):
            out[c] = -leaving[self._bl_ctrl[j], c]
        return out
