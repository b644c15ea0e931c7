"""
Average-acceleration Newmark integration of M U'' + K U = G(t), U(0) = U'(0) = 0.

With beta = 1/4 and gamma = 1/2 each step solves

    (M + h^2/4 K) U_{n+1} = (M - h^2/4 K) U_n + h M V_n + h^2/4 (G_n + G_{n+1})
    V_{n+1} = 2 (U_{n+1} - U_n) / h - V_n

so one factorization of M + h^2/4 K serves every step and every load.
Several loads are integrated together as columns of U.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import structlog

from fem.assembly import SPDFactor

logger = structlog.get_logger(__name__)

StepLoad = Callable[[int], np.ndarray]


class NewmarkSolver:
    """
    Time stepper bound to one (M, K, h) triple.

    The factorization is read-only after construction, so one solver can be
    shared by concurrent integrations.
    """

    def __init__(self, mass: sp.spmatrix, stiffness: sp.spmatrix, dt: float):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.mass = sp.csr_matrix(mass)
        self.stiffness = sp.csr_matrix(stiffness)
        self.dt = dt
        quarter = 0.25 * dt * dt
        self.quarter = quarter
        self.system = SPDFactor(self.mass + quarter * self.stiffness)
        self.explicit = sp.csr_matrix(self.mass - quarter * self.stiffness)
        logger.debug("Newmark solver ready", nodes=self.mass.shape[0], dt=dt)

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    def step(
        self,
        u: np.ndarray,
        v: np.ndarray,
        load_now: np.ndarray,
        load_next: np.ndarray,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Advance (U, V) by one step."""
        rhs = self.explicit @ u + self.dt * (self.mass @ v) + self.quarter * (load_now + load_next)
        u_next = self.system.solve(rhs)
        v_next = (2.0 / self.dt) * (u_next - u) - v
        return u_next, v_next

    def energy(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """E = 1/2 V^T M V + 1/2 U^T K U, per column."""
        return 0.5 * np.sum(v * (self.mass @ v), axis=0) + 0.5 * np.sum(u * (self.stiffness @ u), axis=0)


@dataclass
class Integration:
    """
    Output of one integration run.

    Attributes:
        samples: Recorded node values per step, shape (n_steps + 1, n_record, m)
        snapshots: Full states (U, V) at requested steps
        energy: Discrete energy per step and column, when requested
    """
    samples: np.ndarray
    snapshots: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    energy: Optional[np.ndarray] = None


def integrate(
    solver: NewmarkSolver,
    load_at: StepLoad,
    n_steps: int,
    record: Optional[np.ndarray] = None,
    snapshot_steps: Iterable[int] = (),
    track_energy: bool = False,
) -> Integration:
    """
    Integrate from zero initial data over n_steps solver steps.

    Args:
        solver: Prepared Newmark solver
        load_at: Load at step n, shape (N,) or (N, m)
        n_steps: Number of steps
        record: Node indices whose values are kept every step; None keeps all
        snapshot_steps: Steps at which full (U, V) are retained
        track_energy: Keep the energy history

    Returns:
        Integration with samples of shape (n_steps + 1, n_record, m)
    """
    first = np.asarray(load_at(0), dtype=np.float64)
    single = first.ndim == 1
    load_now = first.reshape(solver.n, -1)
    m = load_now.shape[1]
    nodes = np.arange(solver.n) if record is None else np.asarray(record)
    wanted = set(int(s) for s in snapshot_steps)

    u = np.zeros((solver.n, m))
    v = np.zeros((solver.n, m))
    samples = np.zeros((n_steps + 1, nodes.size, m))
    energy = np.zeros((n_steps + 1, m)) if track_energy else None
    snapshots: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
    if 0 in wanted:
        snapshots[0] = (u.copy(), v.copy())

    for n in range(n_steps):
        load_next = np.asarray(load_at(n + 1), dtype=np.float64).reshape(solver.n, -1)
        u, v = solver.step(u, v, load_now, load_next)
        samples[n + 1] = u[nodes]
        if energy is not None:
            energy[n + 1] = solver.energy(u, v)
        if n + 1 in wanted:
            snapshots[n + 1] = (u.copy(), v.copy())
        load_now = load_next

    if single:
        snapshots = {k: (a[:, 0], b[:, 0]) for k, (a, b) in snapshots.items()}
    return Integration(samples=samples, snapshots=snapshots, energy=energy)


def simulate(
    mass: sp.spmatrix,
    stiffness: sp.spmatrix,
    control: Callable[[float], np.ndarray],
    t_end: float,
    dt_solver: float,
    record: Optional[np.ndarray] = None,
    solver: Optional[NewmarkSolver] = None,
    snapshot_times: Iterable[float] = (),
    track_energy: bool = False,
) -> Integration:
    """
    Simulate one time-dependent load from rest.

    Args:
        mass: Mass matrix M(rho)
        stiffness: Stiffness matrix K
        control: Load vector G(t) as a function of time
        t_end: End time, an integer multiple of dt_solver
        dt_solver: Solver step
        record: Node indices to record (boundary ring for a trace); None records all nodes
        solver: Reuse an existing factorization for the same (M, K, dt_solver)
        snapshot_times: Times on the solver grid at which full states are kept
        track_energy: Keep the energy history

    Returns:
        Integration over [0, t_end]

    Raises:
        ValueError: If t_end is not on the solver grid
        FactorizationError: If M + dt^2/4 K is not positive definite
    """
    n_steps = int(round(t_end / dt_solver))
    if n_steps < 1 or abs(n_steps * dt_solver - t_end) > 1e-9 * t_end:
        raise ValueError(f"t_end = {t_end} is not a multiple of dt_solver = {dt_solver}")
    if solver is None:
        solver = NewmarkSolver(mass, stiffness, dt_solver)
    steps = [int(round(t / dt_solver)) for t in snapshot_times]
    return integrate(
        solver,
        lambda n: control(n * dt_solver),
        n_steps,
        record=record,
        snapshot_steps=steps,
        track_energy=track_energy,
    )
