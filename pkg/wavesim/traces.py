"""
Control basis and synthetic boundary measurements.

Control i = j * N_b + alpha is the Neumann source r(t - j dt) q_alpha(x),
j = 0..N_t-1, where q_alpha is the hat function of boundary node alpha.
Because the system is time invariant with zero initial data and dt is a
whole number of solver steps, the trace of control (j, alpha) is the trace
of (0, alpha) delayed by j * substeps samples; shift mode simulates only the
N_b base controls and derives the rest.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import structlog

from core.exceptions import InvariantError
from fem.assembly import assemble_mass, assemble_stiffness, boundary_mass
from geometry.mesh import DensityField, TriMesh, estimate_optical_radius
from utils import metrics
from wavesim.newmark import NewmarkSolver, integrate
from wavesim.ricker import RickerWavelet, ricker

logger = structlog.get_logger(__name__)

TraceMode = Literal['shift', 'direct']


@dataclass(frozen=True, eq=False)
class ControlBasis:
    """
    The indexed family of boundary controls.

    Attributes:
        wavelet: Time profile of the j = 0 controls
        offset: Delay dt between consecutive shifts
        n_t: Number of shifts, T = n_t * offset
        n_b: Number of boundary profiles
        substeps: Solver steps per offset
        weights: Optional amplitude per control, shape (N,)
    """
    wavelet: RickerWavelet
    offset: float
    n_t: int
    n_b: int
    substeps: int
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_t < 1 or self.n_b < 3 or self.substeps < 1:
            raise ValueError(f"invalid basis sizes n_t={self.n_t}, n_b={self.n_b}, substeps={self.substeps}")
        if self.wavelet.window_end > self.offset * (1.0 + 1e-9):
            raise InvariantError(
                "every control vanishes for t > T",
                f"wavelet support ends at {self.wavelet.window_end:.6g} > dt = {self.offset:.6g}",
            )
        if self.weights is not None:
            weights = np.array(self.weights, dtype=np.float64)
            if weights.shape != (self.size,):
                raise ValueError(f"weights must have shape ({self.size},), got {weights.shape}")
            weights.setflags(write=False)
            object.__setattr__(self, 'weights', weights)

    @property
    def size(self) -> int:
        return self.n_t * self.n_b

    @property
    def T(self) -> float:
        return self.n_t * self.offset

    @property
    def dt_solver(self) -> float:
        return self.offset / self.substeps

    @property
    def steps_per_horizon(self) -> int:
        return self.n_t * self.substeps

    @property
    def n_steps(self) -> int:
        """Solver steps covering [0, 2T]."""
        return 2 * self.steps_per_horizon

    def index(self, j: int, alpha: int) -> int:
        return j * self.n_b + alpha

    def unflatten(self, i: int) -> Tuple[int, int]:
        if not 0 <= i < self.size:
            raise IndexError(f"control index {i} out of range [0, {self.size})")
        return divmod(i, self.n_b)

    def weight(self, i: int) -> float:
        return 1.0 if self.weights is None else float(self.weights[i])

    def amplitudes(self, j: int, n_steps: Optional[int] = None) -> np.ndarray:
        """r((n - j * substeps) * dt_solver) for n = 0..n_steps."""
        n_steps = self.n_steps if n_steps is None else n_steps
        steps = np.arange(n_steps + 1) - j * self.substeps
        return ricker(steps * self.dt_solver, self.wavelet)

    def load_profiles(self, mesh: TriMesh) -> np.ndarray:
        """Spatial load of each hat profile at unit amplitude, shape (N_nodes, n_b)."""
        if mesh.n_boundary != self.n_b:
            raise InvariantError("one control profile per boundary node", f"{self.n_b} profiles, {mesh.n_boundary} nodes")
        profiles = np.zeros((mesh.n_nodes, self.n_b))
        profiles[mesh.boundary_ring] = boundary_mass(mesh)
        return profiles

    @classmethod
    def from_grid(cls, n_b: int, grid, weights: Optional[np.ndarray] = None) -> 'ControlBasis':
        """Build from a resolved core.config.TimeGrid."""
        return cls(
            wavelet=RickerWavelet(grid.frequency, grid.delay),
            offset=grid.dt,
            n_t=grid.n_t,
            n_b=n_b,
            substeps=grid.substeps,
            weights=weights,
        )


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """
    Boundary values of the wave driven by one control over [0, 2T].

    The samples are stored as a (possibly shared) base array delayed by
    `shift` solver steps and multiplied by `scale`.

    Attributes:
        control: Flat control index
        dt: Solver step
        base: Undelayed samples, shape (n_steps + 1, B)
        shift: Delay in solver steps
        scale: Amplitude factor
        terminal: (U(T), U_t(T)) over all nodes, only in oracle mode
    """
    control: int
    dt: float
    base: np.ndarray
    shift: int = 0
    scale: float = 1.0
    terminal: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return self.base.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def values(self) -> np.ndarray:
        """Materialized samples, shape (n_steps + 1, B)."""
        if self.shift == 0:
            out = self.base.copy()
        else:
            out = np.zeros_like(self.base)
            out[self.shift:] = self.base[:-self.shift]
        if self.scale != 1.0:
            out *= self.scale
        return out

    def at_step(self, n: int) -> np.ndarray:
        """Boundary values at solver step n."""
        if n < self.shift:
            return np.zeros(self.base.shape[1])
        return self.scale * self.base[n - self.shift]


@dataclass
class OracleData:
    """
    Interior terminal states and their Gram matrices, for verification only.

    Attributes:
        u_terminal: U^{f_i}(T) as columns, shape (N_nodes, N)
        v_terminal: U_t^{f_i}(T) as columns, shape (N_nodes, N)
        mass_gram: U(T)^T M U(T)
        stiffness_gram: U(T)^T K U(T)
        kinetic_gram: U_t(T)^T M U_t(T)
    """
    u_terminal: np.ndarray
    v_terminal: np.ndarray
    mass_gram: np.ndarray
    stiffness_gram: np.ndarray
    kinetic_gram: np.ndarray

    @classmethod
    def from_states(cls, u: np.ndarray, v: np.ndarray, mass: sp.spmatrix, stiffness: sp.spmatrix) -> 'OracleData':
        return cls(
            u_terminal=u,
            v_terminal=v,
            mass_gram=u.T @ (mass @ u),
            stiffness_gram=u.T @ (stiffness @ u),
            kinetic_gram=v.T @ (mass @ v),
        )


@dataclass
class TraceSet:
    """
    All measured traces of one experiment.

    Attributes:
        basis: Control basis the traces belong to
        traces: One BoundaryTrace per control, in flat index order
        mode: 'shift' or 'direct'
        base: Base-control samples (n_steps + 1, B, n_b) in shift mode
        energy: Energy history per simulated column, if tracked
        oracle: Interior terminal data in oracle mode
        ring_mass: Boundary mass matrix in ring coordinates, which turns a
            control profile into its load
    """
    basis: ControlBasis
    traces: List[BoundaryTrace]
    mode: TraceMode = 'shift'
    base: Optional[np.ndarray] = None
    energy: Optional[np.ndarray] = None
    oracle: Optional[OracleData] = None
    ring_mass: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.traces)

    def __getitem__(self, i: int) -> BoundaryTrace:
        return self.traces[i]

    def ring_loads(self, i: int) -> np.ndarray:
        """Ring load of control i at every solver step, shape (n_steps + 1, B)."""
        j, alpha = self.basis.unflatten(i)
        return self.basis.weight(i) * np.outer(self.basis.amplitudes(j), self.ring_mass[:, alpha])

    def terminal_values(self) -> np.ndarray:
        """Boundary values U^{f_i}(T) on the ring, one row per control, shape (N, B)."""
        n_t = self.basis.steps_per_horizon
        return np.stack([trace.at_step(n_t) for trace in self.traces])


def _column_groups(n_columns: int, jobs: int) -> List[np.ndarray]:
    return [g for g in np.array_split(np.arange(n_columns), max(1, min(jobs, n_columns))) if g.size]


def _run_groups(solver, loads_for, groups, n_steps, record, snapshot_steps, track_energy, jobs):
    def run(columns):
        return integrate(
            solver,
            lambda n: loads_for(columns, n),
            n_steps,
            record=record,
            snapshot_steps=snapshot_steps,
            track_energy=track_energy,
        )

    if jobs > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, groups))
    return [run(columns) for columns in groups]


def generate_all_traces(
    mesh: TriMesh,
    density: DensityField,
    basis: ControlBasis,
    mode: TraceMode = 'shift',
    oracle: bool = False,
    jobs: int = 1,
    track_energy: bool = False,
    mass: Optional[sp.spmatrix] = None,
    stiffness: Optional[sp.spmatrix] = None,
) -> TraceSet:
    """
    Simulate the boundary traces of every control over [0, 2T].

    Args:
        mesh: Triangulation
        density: True density
        basis: Control basis
        mode: 'shift' simulates the N_b base controls and delays them;
            'direct' simulates every control
        oracle: Keep interior terminal states and oracle Gram matrices
        jobs: Worker threads for independent simulations
        track_energy: Keep the energy history of each simulation
        mass: Precomputed M(rho)
        stiffness: Precomputed K

    Returns:
        TraceSet with one trace per control
    """
    if mode not in ('shift', 'direct'):
        raise ValueError(f"unknown trace mode: {mode}")
    mass = assemble_mass(mesh, density) if mass is None else mass
    stiffness = assemble_stiffness(mesh) if stiffness is None else stiffness

    t_star = estimate_optical_radius(mesh, density)
    if basis.T <= t_star:
        logger.warning("Time horizon does not exceed the optical radius", T=basis.T, optical_radius=t_star)

    solver = NewmarkSolver(mass, stiffness, basis.dt_solver)
    profiles = basis.load_profiles(mesh)
    record = mesh.boundary_ring
    n_steps = basis.n_steps
    horizon = basis.steps_per_horizon
    s = basis.substeps

    logger.info(
        "Generating traces",
        mode=mode,
        controls=basis.size,
        steps=n_steps,
        dt_solver=basis.dt_solver,
        oracle=oracle,
    )

    if mode == 'shift':
        amp = basis.amplitudes(0)
        snapshot_steps = [horizon - j * s for j in range(basis.n_t)] if oracle else []
        groups = _column_groups(basis.n_b, jobs)
        runs = _run_groups(
            solver,
            lambda columns, n: profiles[:, columns] * amp[n],
            groups, n_steps, record, snapshot_steps, track_energy, jobs,
        )
        base = np.concatenate([r.samples for r in runs], axis=2)
        energy = np.concatenate([r.energy for r in runs], axis=1) if track_energy else None
        metrics.simulations_total.labels(mode=mode).inc(basis.n_b)

        traces = []
        u_cols, v_cols = [], []
        for i in range(basis.size):
            j, alpha = basis.unflatten(i)
            terminal = None
            if oracle:
                group = next(g for g, cols in enumerate(groups) if alpha in cols)
                local = int(np.searchsorted(groups[group], alpha))
                u_all, v_all = runs[group].snapshots[horizon - j * s]
                w = basis.weight(i)
                terminal = (w * u_all[:, local], w * v_all[:, local])
                u_cols.append(terminal[0])
                v_cols.append(terminal[1])
            traces.append(BoundaryTrace(
                control=i,
                dt=basis.dt_solver,
                base=base[:, :, alpha],
                shift=j * s,
                scale=basis.weight(i),
                terminal=terminal,
            ))
    else:
        amplitudes = np.stack([basis.amplitudes(j) for j in range(basis.n_t)], axis=1)
        flat = np.arange(basis.size)
        j_of, alpha_of = np.divmod(flat, basis.n_b)
        weights = np.array([basis.weight(i) for i in flat])
        snapshot_steps = [horizon] if oracle else []
        groups = _column_groups(basis.size, jobs)
        runs = _run_groups(
            solver,
            lambda columns, n: profiles[:, alpha_of[columns]] * (weights[columns] * amplitudes[n, j_of[columns]]),
            groups, n_steps, record, snapshot_steps, track_energy, jobs,
        )
        samples = np.concatenate([r.samples for r in runs], axis=2)
        energy = np.concatenate([r.energy for r in runs], axis=1) if track_energy else None
        metrics.simulations_total.labels(mode=mode).inc(basis.size)
        base = None
        traces = []
        u_cols, v_cols = [], []
        if oracle:
            u_stack = np.concatenate([r.snapshots[horizon][0] for r in runs], axis=1)
            v_stack = np.concatenate([r.snapshots[horizon][1] for r in runs], axis=1)
        for i in flat:
            terminal = None
            if oracle:
                terminal = (u_stack[:, i].copy(), v_stack[:, i].copy())
                u_cols.append(terminal[0])
                v_cols.append(terminal[1])
            traces.append(BoundaryTrace(control=int(i), dt=basis.dt_solver, base=samples[:, :, i]))

    oracle_data = None
    if oracle:
        oracle_data = OracleData.from_states(np.column_stack(u_cols), np.column_stack(v_cols), mass, stiffness)

    logger.info("Traces generated", controls=len(traces), simulations=basis.n_b if mode == 'shift' else basis.size)
    return TraceSet(
        basis=basis,
        traces=traces,
        mode=mode,
        base=base,
        energy=energy,
        oracle=oracle_data,
        ring_mass=boundary_mass(mesh),
    )


def energy_drift(energy: np.ndarray, from_step: int) -> float:
    """
    Largest relative change of the energy after a given step.

    Args:
        energy: History of shape (n_steps + 1, m)
        from_step: Reference step, typically the end of the control window

    Returns:
        max over columns and later steps of |E(t) - E(t_ref)| / E(t_ref)
    """
    reference = energy[from_step]
    active = reference > 0
    if not np.any(active):
        return 0.0
    drift = np.abs(energy[from_step:, active] - reference[active]) / reference[active]
    return float(drift.max())


def trace_table(trace_set: TraceSet) -> Dict[str, np.ndarray]:
    """Long-format columns (control, step, time, node, value) for CSV dumps."""
    traces = trace_set.traces
    n_steps = traces[0].n_steps
    b = traces[0].base.shape[1]
    values = np.stack([t.values for t in traces])
    controls = np.repeat(np.arange(len(traces)), (n_steps + 1) * b)
    steps = np.tile(np.repeat(np.arange(n_steps + 1), b), len(traces))
    nodes = np.tile(np.arange(b), len(traces) * (n_steps + 1))
    return {
        'control': controls,
        'step': steps,
        'time': steps * traces[0].dt,
        'ring_node': nodes,
        'value': values.reshape(-1),
    }
