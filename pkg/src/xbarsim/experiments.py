"""Seeded campaigns that regenerate the headline results as data files:
single-cell read current CDFs, full row-readout current maps with
histograms, read-power sweeps versus array size and hold voltage, the
bias-mismatch column-width sweep, and a scheme comparison table.

Every campaign is a pure function of (configuration, master seed): trial
streams are keyed by stable indices, worker parallelism merges results by
index, and output files are byte-identical across runs and worker counts.
Output naming is ``{experiment}-{seed}.csv`` / ``.json``.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analytics, readout
from .config import RunConfig, config_echo
from .crossbar import CrossbarSpec, random_pattern
from .devices import HRS, LRS, CellGrid, VariationSpec
from .io import default_output_dir, write_csv, write_summary_json
from .readout import (
    ConventionalSession,
    RowReadSession,
    SchemeKind,
    best_threshold_ber,
    split_by_state,
)
from .solver import SolverConvergenceError


def seeded_trial_stream(master_seed: int, trial_index: int) -> np.random.Generator:
    """Deterministic, pairwise-independent stream for one trial unit."""
    return np.random.default_rng(np.random.SeedSequence((master_seed, trial_index)))


def _derived_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


@dataclass(frozen=True)
class Histogram:
    """Binned counts of one population."""

    edges: np.ndarray
    counts: np.ndarray
    tag: str

    def __post_init__(self):
        if not np.all(np.diff(self.edges) > 0):
            raise ValueError("histogram edges must be strictly increasing")
        if self.counts.size != self.edges.size - 1:
            raise ValueError("counts must have one entry per bin")

    @classmethod
    def from_values(cls, values: np.ndarray, n_bins: int, tag: str) -> "Histogram":
        values = np.asarray(values, dtype=float)
        counts, edges = np.histogram(values, bins=n_bins)
        return cls(edges=edges, counts=counts, tag=tag)


def _map_units(fn, units, workers: int) -> list:
    """Order-preserving map over independent trial units."""
    units = list(units)
    if workers <= 1 or len(units) <= 1:
        return [fn(u) for u in units]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, units))


def _ecdf(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = np.sort(np.asarray(values, dtype=float))
    return v, np.arange(1, v.size + 1) / v.size


def _out_paths(cfg: RunConfig, out_dir, name: str) -> tuple[Path, Path]:
    base = default_output_dir(out_dir if out_dir is not None else cfg.output_dir)
    seed = cfg.experiment.master_seed
    return base / f"{name}-{seed}.csv", base / f"{name}-{seed}.json"


# Conventional-read CDF ----------------------------------------------------------

def run_cdf_conventional(cfg: RunConfig, out_dir=None) -> dict:
    """Sample single-cell conventional reads over random backgrounds and emit
    the per-state current CDFs plus the best achievable threshold error."""
    exp = cfg.experiment
    spec = cfg.crossbar.to_spec()
    base = cfg.device.base_params()
    per_bg = -(-exp.sample_cells // exp.backgrounds)  # ceil division

    def one_background(t: int):
        rng = seeded_trial_stream(exp.master_seed, t)
        pattern = random_pattern(spec.rows, spec.cols, rng, exp.pattern_p)
        var = VariationSpec(cfg.variation.relative_sigma, _derived_seed(rng))
        cells = CellGrid.sample(spec.rows, spec.cols, base, var)
        n_cells = spec.rows * spec.cols
        take = min(per_bg, n_cells)
        flat = rng.choice(n_cells, size=take, replace=False)
        targets = [(int(k) // spec.cols, int(k) % spec.cols) for k in flat]
        try:
            if cells.is_linear:
                session = ConventionalSession(spec, cells, pattern)
                currents = session.currents(targets)
            else:
                currents = np.array([
                    readout.read_cell_conventional(spec, cells, pattern, i, j)
                    for i, j in targets
                ])
        except SolverConvergenceError as e:
            return t, [], str(e)
        rows = [
            (t, i, j, int(pattern[i, j]), float(c))
            for (i, j), c in zip(targets, currents)
        ]
        return t, rows, None

    results = _map_units(one_background, range(exp.backgrounds), exp.workers)
    observations, failures = [], []
    for t, rows, err in sorted(results, key=lambda r: r[0]):
        observations.extend(rows)
        if err:
            failures.append({"trial": t, "error": err})

    currents = np.array([r[4] for r in observations])
    bits = np.array([r[3] for r in observations])
    lrs, hrs = split_by_state(currents, bits)
    threshold, ber = best_threshold_ber(lrs, hrs)

    csv_path, json_path = _out_paths(cfg, out_dir, "cdf-conventional")
    write_csv(csv_path, ["trial", "row", "col", "true_bit", "current_A"], observations)
    cdf_rows = []
    for tag, vals in (("LRS", lrs), ("HRS", hrs)):
        v, p = _ecdf(vals)
        cdf_rows.extend((tag, float(x), float(q)) for x, q in zip(v, p))
    write_csv(csv_path.with_name(csv_path.stem + "-cdf.csv"),
              ["state", "current_A", "cum_prob"], cdf_rows)
    summary = {
        "experiment": "cdf-conventional",
        "seed": exp.master_seed,
        "samples": len(observations),
        "lrs_count": int(lrs.size),
        "hrs_count": int(hrs.size),
        "best_threshold_A": threshold,
        "best_ber": ber,
        "failures": failures,
        "config": config_echo(cfg),
    }
    write_summary_json(json_path, summary)
    return summary


# Row-readout current map --------------------------------------------------------

def run_row_read_map(cfg: RunConfig, out_dir=None) -> dict:
    """Read every row of one sampled array; emit the full sensed-current map,
    per-state histograms, and the separation statistics."""
    exp = cfg.experiment
    spec = cfg.crossbar.to_spec()
    base = cfg.device.base_params()
    rng = seeded_trial_stream(exp.master_seed, 0)
    pattern = random_pattern(spec.rows, spec.cols, rng, exp.pattern_p)
    var = VariationSpec(cfg.variation.relative_sigma, _derived_seed(rng))
    cells = CellGrid.sample(spec.rows, spec.cols, base, var)

    session = RowReadSession(spec, cells, pattern)
    current_map = session.current_map()
    threshold = readout.midpoint_threshold(spec, base)
    read_bits = readout.classify(current_map, threshold)
    n_errors = int((read_bits != pattern).sum())

    lrs = current_map[pattern == LRS]
    hrs = current_map[pattern == HRS]
    min_lrs = float(lrs.min()) if lrs.size else float("nan")
    max_hrs = float(hrs.max()) if hrs.size else float("nan")
    separation = min_lrs / max_hrs if hrs.size and lrs.size else float("nan")

    csv_path, json_path = _out_paths(cfg, out_dir, "row-read-map")
    ii, jj = np.divmod(np.arange(pattern.size), spec.cols)
    write_csv(
        csv_path,
        ["row", "col", "true_bit", "current_A", "read_bit"],
        zip(ii.tolist(), jj.tolist(),
            pattern.ravel().tolist(),
            [float(x) for x in current_map.ravel()],
            read_bits.ravel().tolist()),
    )
    hist_rows = []
    for tag, vals in (("LRS", lrs), ("HRS", hrs)):
        if vals.size == 0:
            continue
        h = Histogram.from_values(vals, exp.map_bins, tag)
        hist_rows.extend(
            (tag, float(h.edges[k]), float(h.edges[k + 1]), int(h.counts[k]))
            for k in range(h.counts.size)
        )
    write_csv(csv_path.with_name(csv_path.stem + "-hist.csv"),
              ["state", "bin_lo_A", "bin_hi_A", "count"], hist_rows)
    summary = {
        "experiment": "row-read-map",
        "seed": exp.master_seed,
        "device_model": cfg.device.model,
        "threshold_A": threshold,
        "errors": n_errors,
        "min_lrs_current_A": min_lrs,
        "max_hrs_current_A": max_hrs,
        "separation_ratio": separation,
        "config": config_echo(cfg),
    }
    write_summary_json(json_path, summary)
    return summary


# Power sweep ---------------------------------------------------------------------

def run_power_sweep(cfg: RunConfig, out_dir=None) -> dict:
    """Read power versus array size and hold voltage for both device models,
    as the wire-free approximation next to the network-exact value."""
    exp = cfg.experiment
    rows_out = []
    checks = {"exact_below_approx": True, "monotone_in_v_b": True}

    def one_unit(unit):
        idx, (model, size, trial) = unit
        dev_cfg = dataclasses.replace(cfg.device, model=model)
        base = dev_cfg.base_params()
        rng = seeded_trial_stream(exp.master_seed, 2000 + idx)
        spec0 = dataclasses.replace(cfg.crossbar.to_spec(), rows=size, cols=size, bank_width=None)
        pattern = random_pattern(size, size, rng, exp.pattern_p)
        var = VariationSpec(cfg.variation.relative_sigma, _derived_seed(rng))
        cells = CellGrid.sample(size, size, base, var)
        sample_rows = sorted(rng.choice(size, size=min(exp.power_rows, size), replace=False).tolist())
        session = RowReadSession(spec0, cells, pattern)
        out = []
        for v_b in exp.v_b_list:
            if not v_b < spec0.v_dd:
                continue
            spec_vb = dataclasses.replace(spec0, v_b=v_b)
            approx = [analytics.power_row_approx(spec_vb, pattern, cells, i) for i in sample_rows]
            V = session.solve_rows(sample_rows, v_b=v_b)
            exact = session.branch_power_from(V)
            array_approx = sum(
                analytics.power_row_approx(spec_vb, pattern, cells, i) for i in range(size)
            )
            for k, i in enumerate(sample_rows):
                out.append((model, size, trial, float(v_b), i,
                            float(approx[k]), float(exact[k]),
                            float(array_approx), float(size * np.mean(exact))))
        return idx, out

    units = list(enumerate(
        (model, size, t)
        for model in ("linear", "nonlinear")
        for size in exp.sizes
        for t in range(exp.trials)
    ))
    results = _map_units(one_unit, units, exp.workers)
    for _, out in sorted(results, key=lambda r: r[0]):
        rows_out.extend(out)

    by_series: dict = {}
    for model, size, trial, v_b, row, p_approx, p_exact, *_ in rows_out:
        if model == "linear" and cfg.crossbar.r_wire > 0 and p_exact >= p_approx:
            checks["exact_below_approx"] = False
        by_series.setdefault((model, size, trial, row), []).append((v_b, p_exact))
    for series in by_series.values():
        series.sort()
        powers = [p for _, p in series]
        if any(b > a for a, b in zip(powers, powers[1:])):
            checks["monotone_in_v_b"] = False

    csv_path, json_path = _out_paths(cfg, out_dir, "power-sweep")
    write_csv(
        csv_path,
        ["model", "size", "trial", "v_b_V", "row",
         "power_row_approx_W", "power_row_exact_W",
         "power_array_approx_W", "power_array_exact_est_W"],
        rows_out,
    )
    summary = {
        "experiment": "power-sweep",
        "seed": exp.master_seed,
        "sizes": list(exp.sizes),
        "v_b_list": list(exp.v_b_list),
        "trials": exp.trials,
        "checks": checks,
        "config": config_echo(cfg),
    }
    write_summary_json(json_path, summary)
    return summary


# Mismatch sweep --------------------------------------------------------------------

def run_mismatch_sweep(cfg: RunConfig, out_dir=None) -> dict:
    """Analytic versus simulated maximum column width over an offset grid."""
    exp = cfg.experiment
    spec = cfg.crossbar.to_spec()
    rows_out = []
    table = []
    for model in ("linear", "nonlinear"):
        device = dataclasses.replace(cfg.device, model=model).base_params()
        for dv in exp.delta_v_grid:
            p = analytics.MismatchParams(dv, cfg.mismatch.i_max, cfg.mismatch.i_min)
            check = analytics.mismatch_simulation_check(
                spec, p, device, trials=exp.trials, master_seed=exp.master_seed
            )
            rows_out.append((model, float(dv), check.n_max_analytic,
                             check.n_max_empirical, float(check.relative_gap)))
            table.append({
                "model": model, "delta_v_V": float(dv),
                "n_max_analytic": check.n_max_analytic,
                "n_max_empirical": check.n_max_empirical,
                "relative_gap": float(check.relative_gap),
            })
    csv_path, json_path = _out_paths(cfg, out_dir, "mismatch-sweep")
    write_csv(csv_path,
              ["model", "delta_v_V", "n_max_analytic", "n_max_empirical", "relative_gap"],
              rows_out)
    summary = {
        "experiment": "mismatch-sweep",
        "seed": exp.master_seed,
        "within_5pct": all(r["relative_gap"] <= 0.05 for r in table),
        "table": table,
        "config": config_echo(cfg),
    }
    write_summary_json(json_path, summary)
    return summary


# Scheme comparison -------------------------------------------------------------------

def _scheme_populations(scheme: str, cfg: RunConfig, spec: CrossbarSpec,
                        cells: CellGrid, pattern, rng) -> tuple[np.ndarray, np.ndarray, str]:
    exp = cfg.experiment
    rows = sorted(rng.choice(spec.rows, size=min(exp.scheme_rows, spec.rows), replace=False).tolist())
    if scheme == SchemeKind.ROW_READOUT.value:
        session = RowReadSession(spec, cells, pattern)
        values = session.row_currents(rows)
        bits = pattern[rows]
        return values.ravel(), bits.ravel(), "A"
    if scheme == SchemeKind.CONVENTIONAL.value:
        n_cells = spec.rows * spec.cols
        take = min(exp.sample_cells, 256, n_cells)
        flat = rng.choice(n_cells, size=take, replace=False)
        targets = [(int(k) // spec.cols, int(k) % spec.cols) for k in flat]
        if cells.is_linear:
            values = ConventionalSession(spec, cells, pattern).currents(targets)
        else:
            values = np.array([
                readout.read_cell_conventional(spec, cells, pattern, i, j) for i, j in targets
            ])
        bits = np.array([pattern[i, j] for i, j in targets])
        return values, bits, "A"
    if scheme == SchemeKind.FLOATING_BITLINES.value:
        reads = [readout.read_row_floating(spec, cells, pattern, i) for i in rows]
    elif scheme == SchemeKind.RESISTIVE_LOAD.value:
        reads = [readout.read_row_resistive(spec, cells, pattern, i, r_s=exp.r_s) for i in rows]
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    values = np.concatenate([r.sensed for r in reads])
    bits = np.concatenate([r.true_bits for r in reads])
    return values, bits, "V"


def run_scheme_compare(cfg: RunConfig, out_dir=None) -> dict:
    """Best-threshold error rate and state margin per scheme and array size;
    flags the first size at which each scheme stops separating the states."""
    exp = cfg.experiment
    schemes = tuple(kind.value for kind in SchemeKind)

    def one_unit(unit):
        idx, (scheme, size) = unit
        rng = seeded_trial_stream(exp.master_seed, 1000 + idx)
        spec = dataclasses.replace(cfg.crossbar.to_spec(), rows=size, cols=size, bank_width=None)
        pattern = random_pattern(size, size, rng, exp.pattern_p)
        var = VariationSpec(cfg.variation.relative_sigma, _derived_seed(rng))
        cells = CellGrid.sample(size, size, cfg.device.base_params(), var)
        try:
            values, bits, unit_name = _scheme_populations(scheme, cfg, spec, cells, pattern, rng)
            lrs, hrs = split_by_state(values, bits)
            if lrs.size == 0 or hrs.size == 0:
                return idx, (scheme, size, float("nan"), float("nan"), 0, unit_name, "empty population")
            _, ber = best_threshold_ber(lrs, hrs)
            margin = float(lrs.min() / hrs.max()) if hrs.max() > 0 else float("inf")
            return idx, (scheme, size, ber, margin, int(values.size), unit_name, "")
        except SolverConvergenceError as e:
            return idx, (scheme, size, float("nan"), float("nan"), 0, "", str(e))

    units = list(enumerate((s, n) for s in schemes for n in exp.scheme_sizes))
    results = _map_units(one_unit, units, exp.workers)
    rows_out = [r for _, r in sorted(results, key=lambda x: x[0])]

    first_failing: dict = {}
    for scheme, size, ber, *_ in rows_out:
        if np.isnan(ber) or ber > exp.ber_fail_threshold:
            if scheme not in first_failing:
                first_failing[scheme] = int(size)
    csv_path, json_path = _out_paths(cfg, out_dir, "scheme-compare")
    write_csv(csv_path,
              ["scheme", "size", "best_ber", "margin_ratio", "samples", "unit", "note"],
              rows_out)
    summary = {
        "experiment": "scheme-compare",
        "seed": exp.master_seed,
        "sizes": list(exp.scheme_sizes),
        "first_failing_size": first_failing,
        "config": config_echo(cfg),
    }
    write_summary_json(json_path, summary)
    return summary
