"""Nodal solution of biased crossbar networks.

The nodal system is assembled over all nodes, then fixed-voltage nodes are
eliminated (reduced system) so the remaining matrix is a symmetric
positive-definite conductance Laplacian.  Linear arrays use one sparse LU
factorization plus iterative refinement; sinh-device arrays use damped
Newton iteration with the differential-conductance Jacobian.  Sign
convention: device current is positive from the wordline node to the
bitline node; a node's KCL imbalance is the net current leaving it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .crossbar import TERM_FLOATING, TERM_RESISTIVE, Network


class SingularNetworkError(ValueError):
    """The network has a floating subgraph with no voltage anchor."""

    def __init__(self, message: str, component_nodes=()):
        super().__init__(message)
        self.component_nodes = tuple(component_nodes)


class SolverConvergenceError(RuntimeError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverOptions:
    abs_tol: float = 1e-12  # max node-current imbalance, amperes
    max_newton_iters: int = 50
    damping: float = 1.0  # initial Newton step scale; halved on failed steps

    def __post_init__(self):
        if not (self.abs_tol > 0):
            raise ValueError(f"abs_tol must be > 0, got {self.abs_tol}")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must be in (0, 1]")


DEFAULT_OPTIONS = SolverOptions()

_MAX_HALVINGS = 20
_REFINE_STEPS = 8


@dataclass(frozen=True)
class Solution:
    """Solved node voltages and branch currents of one network."""

    node_voltages: np.ndarray
    wire_currents: np.ndarray  # aligned with Network.wire_* arrays
    device_currents: np.ndarray  # cell-major, length M*N
    kcl_residual: float
    iterations: int

    @property
    def branch_currents(self) -> np.ndarray:
        return np.concatenate([self.wire_currents, self.device_currents])


def wire_laplacian(net: Network) -> sp.csr_matrix:
    """Conductance Laplacian of wire segments and boundary series branches."""
    a, b, g = net.wire_a, net.wire_b, net.wire_g
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([g, g, -g, -g])
    return sp.coo_matrix((vals, (rows, cols)), shape=(net.n_nodes, net.n_nodes)).tocsr()


def device_incidence(net: Network) -> sp.csr_matrix:
    """Signed node-by-device incidence: +1 at the wordline node, -1 at the bitline node."""
    nd = net.n_device_branches
    rows = np.concatenate([net.dev_a, net.dev_b])
    cols = np.concatenate([np.arange(nd), np.arange(nd)])
    vals = np.concatenate([np.ones(nd), -np.ones(nd)])
    return sp.coo_matrix((vals, (rows, cols)), shape=(net.n_nodes, nd)).tocsr()


def assemble_admittance(net: Network, device_g: np.ndarray) -> sp.csr_matrix:
    """Full nodal conductance matrix with the given per-device conductances."""
    g = np.asarray(device_g, dtype=float).ravel()
    a, b = net.dev_a, net.dev_b
    rows = np.concatenate([net.wire_a, net.wire_b, net.wire_a, net.wire_b, a, b, a, b])
    cols = np.concatenate([net.wire_a, net.wire_b, net.wire_b, net.wire_a, a, b, b, a])
    vals = np.concatenate([net.wire_g, net.wire_g, -net.wire_g, -net.wire_g, g, g, -g, -g])
    return sp.coo_matrix((vals, (rows, cols)), shape=(net.n_nodes, net.n_nodes)).tocsr()


def check_grounded(net: Network) -> None:
    """Every connected component must contain a fixed-voltage node."""
    if not net.fixed_mask.any():
        raise SingularNetworkError(
            "network has no fixed-voltage node (all lines floating)",
            component_nodes=tuple(range(min(net.n_nodes, 8))),
        )
    n = net.n_nodes
    a = np.concatenate([net.wire_a, net.dev_a])
    b = np.concatenate([net.wire_b, net.dev_b])
    adj = sp.coo_matrix((np.ones(a.size), (a, b)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    if ncomp > 1:
        anchored = np.zeros(ncomp, dtype=bool)
        anchored[labels[net.fixed_mask]] = True
        if not anchored.all():
            bad = int(np.flatnonzero(~anchored)[0])
            nodes = np.flatnonzero(labels == bad)
            names = ", ".join(net.node_name(int(k)) for k in nodes[:6])
            raise SingularNetworkError(
                f"floating subgraph with no voltage anchor: {{{names}}}"
                + ("..." if nodes.size > 6 else ""),
                component_nodes=tuple(int(k) for k in nodes),
            )


def _device_dv(net: Network, v: np.ndarray) -> np.ndarray:
    return (v[net.dev_a] - v[net.dev_b]).reshape(net.spec.rows, net.spec.cols)


def node_imbalance(net: Network, v: np.ndarray, l_wire: sp.csr_matrix | None = None,
                   e_dev: sp.csr_matrix | None = None) -> np.ndarray:
    """Net current leaving each node through wires and devices at voltages v."""
    if l_wire is None:
        l_wire = wire_laplacian(net)
    if e_dev is None:
        e_dev = device_incidence(net)
    i_dev = net.cells.currents(net.pattern, _device_dv(net, v)).ravel()
    return l_wire @ v + e_dev @ i_dev


# Residuals are evaluated in extended precision: the conductance contrast
# (wire segments vs high-resistance cells) lets float64 rounding at stiff
# nodes couple through GOhm-scale transresistances into floating-line node
# voltages; refining against a long-double residual removes that error.
_LONG = np.longdouble


def _imbalance_extended(net: Network, v: np.ndarray) -> np.ndarray:
    vl = v.astype(_LONG)
    out = np.zeros(net.n_nodes, dtype=_LONG)
    iw = net.wire_g.astype(_LONG) * (vl[net.wire_a] - vl[net.wire_b])
    np.add.at(out, net.wire_a, iw)
    np.add.at(out, net.wire_b, -iw)
    dv = (vl[net.dev_a] - vl[net.dev_b]).reshape(net.spec.rows, net.spec.cols)
    i_dev = net.cells.currents(net.pattern, dv).ravel()
    np.add.at(out, net.dev_a, i_dev)
    np.add.at(out, net.dev_b, -i_dev)
    return out


def _initial_voltages(net: Network) -> np.ndarray:
    v = np.where(net.fixed_mask, net.fixed_voltage, 0.0)
    fixed_vals = net.fixed_voltage[net.fixed_mask]
    v[~net.fixed_mask] = float(np.median(fixed_vals))
    return v


def _finish(net: Network, v: np.ndarray, residual: float, iterations: int) -> Solution:
    wire_i = net.wire_g * (v[net.wire_a] - v[net.wire_b])
    dev_i = net.cells.currents(net.pattern, _device_dv(net, v)).ravel()
    return Solution(v, wire_i, dev_i, float(residual), iterations)


def solve_linear(net: Network, opts: SolverOptions = DEFAULT_OPTIONS) -> Solution:
    """Direct sparse solve of a linear-device network."""
    if not net.cells.is_linear:
        raise TypeError("solve_linear requires linear device parameters")
    check_grounded(net)
    u = ~net.fixed_mask
    v = np.where(net.fixed_mask, net.fixed_voltage, 0.0)
    g_dev = net.cells.active_conductances(net.pattern)
    G = assemble_admittance(net, g_dev)
    if u.any():
        Gu = G[u]
        Guu = Gu[:, u].tocsc()
        rhs = -(Gu[:, net.fixed_mask] @ net.fixed_voltage[net.fixed_mask])
        lu = spla.splu(Guu)
        v[u] = lu.solve(rhs)
        v = _refine(net, v, u, lu, Guu.diagonal())
    residual = float(np.abs(_imbalance_extended(net, v)[u]).max()) if u.any() else 0.0
    if residual > opts.abs_tol:
        raise SolverConvergenceError(
            f"linear solve residual {residual:.3e} A exceeds tolerance {opts.abs_tol:.1e} A",
            residual=residual, iterations=1,
        )
    return _finish(net, v, residual, iterations=1)


def solve_nonlinear(net: Network, opts: SolverOptions = DEFAULT_OPTIONS) -> Solution:
    """Damped Newton solve of a sinh-device network.

    Unknowns start at the median fixed bias (the hold voltage for read
    configurations); steps use residual-halving damping so large initial
    sinh arguments cannot run away.
    """
    if net.cells.is_linear:
        raise TypeError("solve_nonlinear requires nonlinear device parameters")
    check_grounded(net)
    u = ~net.fixed_mask
    v = _initial_voltages(net)
    l_wire = wire_laplacian(net)
    e_dev = device_incidence(net)
    n_u = int(u.sum())

    iterations = 0
    lu = None
    f_u = node_imbalance(net, v, l_wire, e_dev)[u]
    for iterations in range(1, opts.max_newton_iters + 1):
        res = np.abs(f_u).max() if n_u else 0.0
        if res <= opts.abs_tol:
            if lu is not None:
                v = _refine(net, v, u, lu, j_diag)
            res = float(np.abs(_imbalance_extended(net, v)[u]).max()) if n_u else 0.0
            return _finish(net, v, res, iterations)
        g_dev = net.cells.conductances(net.pattern, _device_dv(net, v)).ravel()
        J = assemble_admittance(net, g_dev)
        Juu = J[u][:, u].tocsc()
        j_diag = Juu.diagonal()
        lu = spla.splu(Juu)
        delta = lu.solve(-f_u)
        norm0 = np.linalg.norm(f_u)
        alpha = opts.damping
        for _ in range(_MAX_HALVINGS + 1):
            v_try = v.copy()
            v_try[u] += alpha * delta
            f_try = node_imbalance(net, v_try, l_wire, e_dev)[u]
            if np.linalg.norm(f_try) < norm0:
                v, f_u = v_try, f_try
                break
            alpha *= 0.5
        else:
            raise SolverConvergenceError(
                f"Newton line search failed to reduce residual {norm0:.3e} A",
                residual=float(norm0), iterations=iterations,
            )
    res = float(np.abs(f_u).max()) if n_u else 0.0
    if res <= opts.abs_tol:
        return _finish(net, v, res, opts.max_newton_iters)
    raise SolverConvergenceError(
        f"Newton did not converge in {opts.max_newton_iters} iterations "
        f"(final residual {res:.3e} A)",
        residual=res, iterations=opts.max_newton_iters,
    )


def _refine(net: Network, v: np.ndarray, u: np.ndarray, lu, diag: np.ndarray) -> np.ndarray:
    """Mixed-precision iterative refinement to the rounding floor.

    Residuals are evaluated in extended precision; progress is judged by the
    size of the solved correction (a direct voltage-error gauge, sensitive
    to soft modes such as floating lines coupled only through
    high-resistance cells, which per-node residual scales cannot see).
    The iterate with the smallest correction wins; a raw residual-max rule
    would stop at the stiff wire nodes' rounding floor.
    """
    del diag  # correction-based gauge superseded the diagonal scale
    prev = np.inf
    for _ in range(_REFINE_STEPS):
        r = _imbalance_extended(net, v)[u]
        delta = lu.solve(r.astype(np.float64))
        step = np.abs(delta).max() if delta.size else 0.0
        v = v.copy()
        v[u] -= delta
        if step == 0.0 or step >= prev:
            break  # corrections reached the rounding floor
        prev = step
    return v


def solve(net: Network, opts: SolverOptions = DEFAULT_OPTIONS) -> Solution:
    """Dispatch on the device model of the network's cells."""
    return solve_linear(net, opts) if net.cells.is_linear else solve_nonlinear(net, opts)


def bitline_currents(net: Network, sol: Solution, columns=None) -> np.ndarray:
    """Current entering each bitline termination (positive into the sense node).

    ``columns`` restricts the query (needed when other bitlines float);
    querying a floating column is an error since it has no sense path.
    """
    leaving = node_imbalance(net, sol.node_voltages)
    columns = range(net.spec.cols) if columns is None else list(columns)
    out = np.empty(len(columns))
    for k, j in enumerate(columns):
        att = net.bl_attach[j]
        if att.kind == TERM_FLOATING:
            raise ValueError(f"bitline {j} is floating: no sense path to measure current")
        node = att.terminal_node if att.kind == TERM_RESISTIVE else att.attach_node
        out[k] = -leaving[node]
    return out


def wordline_source_currents(net: Network, sol: Solution) -> np.ndarray:
    """Current each wordline source delivers into the network (NaN if
    floating); both line ends are summed under double-sided clamping."""
    leaving = node_imbalance(net, sol.node_voltages)
    out = np.full(net.spec.rows, np.nan)
    for i, att in enumerate(net.wl_attach):
        if att.kind == TERM_FLOATING:
            continue
        node = att.terminal_node if att.kind == TERM_RESISTIVE else att.attach_node
        out[i] = leaving[node]
        far = net.wl_attach_far[i] if net.wl_attach_far else None
        if far is not None and far.kind != TERM_FLOATING:
            node = far.terminal_node if far.kind == TERM_RESISTIVE else far.attach_node
            out[i] += leaving[node]
    return out


def source_power(net: Network, sol: Solution) -> float:
    """Total power injected by all boundary sources (Tellegen counterpart
    of branch dissipation)."""
    leaving = node_imbalance(net, sol.node_voltages)
    fixed = np.flatnonzero(net.fixed_mask)
    return float(np.dot(sol.node_voltages[fixed], leaving[fixed]))


def dump_system(net: Network, path_prefix: str, sol: Solution | None = None) -> list[str]:
    """Debug dump of the assembled system in plain text.

    Writes ``<prefix>.admittance.mtx`` (MatrixMarket coordinate form of the
    full nodal conductance matrix, linearized at the solution for sinh
    devices), ``<prefix>.nodes.txt`` (``index name fixed voltage`` per
    line), and when a solution is given ``<prefix>.solution.txt``
    (``index voltage`` lines, then ``branch kind a b current_A`` lines).
    Returns the written paths.
    """
    from scipy.io import mmwrite

    v = sol.node_voltages if sol is not None else _initial_voltages(net)
    g_dev = net.cells.conductances(net.pattern, _device_dv(net, v)).ravel()
    paths = [f"{path_prefix}.admittance.mtx", f"{path_prefix}.nodes.txt"]
    mmwrite(paths[0], assemble_admittance(net, g_dev))
    with open(paths[1], "w") as f:
        f.write("# index name fixed voltage\n")
        for k in range(net.n_nodes):
            fx = int(net.fixed_mask[k])
            vv = net.fixed_voltage[k] if fx else float("nan")
            f.write(f"{k} {net.node_name(k)} {fx} {vv:.12g}\n")
    if sol is not None:
        p = f"{path_prefix}.solution.txt"
        paths.append(p)
        with open(p, "w") as f:
            f.write("# node index voltage_V\n")
            for k, vv in enumerate(sol.node_voltages):
                f.write(f"node {k} {vv:.12g}\n")
            f.write("# branch kind node_a node_b current_A\n")
            for k in range(net.wire_a.size):
                f.write(
                    f"branch wire {net.wire_a[k]} {net.wire_b[k]} {sol.wire_currents[k]:.12g}\n"
                )
            for k in range(net.dev_a.size):
                f.write(
                    f"branch device {net.dev_a[k]} {net.dev_b[k]} {sol.device_currents[k]:.12g}\n"
                )
    return paths
