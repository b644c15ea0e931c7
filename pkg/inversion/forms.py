"""
Boundary forms of the inverse problem.

The connecting, potential and kinetic forms of two controls are inner
products of the terminal waves they produce,

    C_ij = (U^i, M U^j)(T),  P_ij = (U^i, K U^j)(T),  Kin_ij = (U_t^i, M U_t^j)(T),

evaluated here from controls and boundary traces alone:

    C_ij   = int_0^T (I G^i, U^j_+) - (G^j_+, I U^i) dt
    P_ij   = int_0^T (G^i, d/dt U^j_+) + (G^j_+, d/dt U^i) dt
    Kin_ij = int_0^T (G^i, d/dt U^j_-) + (G^j_-, d/dt U^i) dt

with u_+-(t) = (u(t) +- u(2T - t)) / 2 and I the running time integral.
Loads are read on [0, T] only.

Two quadratures are provided. `trapezoid` samples the integrands at solver
nodes with centered-difference rates. `midpoint` multiplies step averages
and uses forward differences; it is the rule matching the average
acceleration update, and reproduces the discrete terminal products to
roundoff.
"""

from dataclasses import dataclass, field
from typing import Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy.integrate import cumulative_trapezoid

from core.exceptions import InvariantError
from utils import metrics
from wavesim.traces import BoundaryTrace, ControlBasis, TraceSet

logger = structlog.get_logger(__name__)

Quadrature = Literal['trapezoid', 'midpoint']
QUADRATURES = ('trapezoid', 'midpoint')


@dataclass
class FormData:
    """
    Complete data of the inverse problem.

    Attributes:
        C: Connecting form matrix, N x N
        P: Potential form matrix, N x N
        B: Terminal boundary values U^{f_i}(T) on the ring, N x B
        n_b: Boundary profiles
        n_t: Shifts
        T: Horizon
        dt_solver: Solver step of the traces
        kinetic: Kinetic form matrix (diagnostic)
        asymmetry: Relative Frobenius asymmetry of each matrix before symmetrization
        quadrature: Rule used for the time integrals
    """
    C: np.ndarray
    P: np.ndarray
    B: np.ndarray
    n_b: int
    n_t: int
    T: float
    dt_solver: float
    kinetic: Optional[np.ndarray] = None
    asymmetry: Dict[str, float] = field(default_factory=dict)
    quadrature: str = 'trapezoid'

    @property
    def size(self) -> int:
        return self.n_b * self.n_t

    def validate(self) -> None:
        n = self.size
        for name in ('C', 'P'):
            matrix = getattr(self, name)
            if matrix.shape != (n, n):
                raise InvariantError(f"{name} is N x N", f"shape {matrix.shape}, N = {n}")
            if not np.array_equal(matrix, matrix.T):
                raise InvariantError(f"{name} is symmetric")
        if self.B.shape != (n, self.n_b):
            raise InvariantError("one row of terminal values per control", f"shape {self.B.shape}")


def time_primitive(samples: np.ndarray, dt: float) -> np.ndarray:
    """
    Running integral (I x)(t) = int_0^t x(s) ds by the cumulative trapezoid rule.

    Args:
        samples: Values on a uniform grid, time along axis 0
        dt: Grid step

    Returns:
        Array of the same shape with value 0 at t = 0
    """
    return cumulative_trapezoid(np.asarray(samples, dtype=np.float64), dx=dt, axis=0, initial=0)


def _horizon_steps(n_samples: int, dt: float, T: float) -> int:
    if n_samples % 2 == 0:
        raise InvariantError("trace grid symmetric about T", f"{n_samples} samples")
    steps = (n_samples - 1) // 2
    if abs(steps * dt - T) > 1e-9 * max(T, dt):
        raise InvariantError("trace grid symmetric about T", f"midpoint at {steps * dt:.6g}, T = {T:.6g}")
    return steps


def _fold(values: np.ndarray, steps: int, sign: float) -> np.ndarray:
    return 0.5 * (values[:steps + 1] + sign * values[::-1][:steps + 1])


def _trace_samples(trace: Union[BoundaryTrace, np.ndarray], dt: Optional[float]) -> Tuple[np.ndarray, float]:
    if isinstance(trace, BoundaryTrace):
        return trace.values, trace.dt
    if dt is None:
        raise ValueError("dt is required for raw sample arrays")
    return np.asarray(trace, dtype=np.float64), dt


def plus_part(trace: Union[BoundaryTrace, np.ndarray], T: float, dt: Optional[float] = None) -> np.ndarray:
    """
    u_+(t) = (u(t) + u(2T - t)) / 2 on [0, T].

    Raises:
        InvariantError: If the samples do not cover [0, 2T] symmetrically about T
    """
    values, dt = _trace_samples(trace, dt)
    return _fold(values, _horizon_steps(values.shape[0], dt, T), 1.0)


def minus_part(trace: Union[BoundaryTrace, np.ndarray], T: float, dt: Optional[float] = None) -> np.ndarray:
    """u_-(t) = (u(t) - u(2T - t)) / 2 on [0, T]."""
    values, dt = _trace_samples(trace, dt)
    return _fold(values, _horizon_steps(values.shape[0], dt, T), -1.0)


class _Rule:
    """Time discretization of one quadrature over [0, T] with `steps` solver steps."""

    def __init__(self, quadrature: str, steps: int, dt: float):
        if quadrature not in QUADRATURES:
            raise ValueError(f"unknown quadrature: {quadrature}")
        self.quadrature = quadrature
        self.steps = steps
        self.dt = dt
        if quadrature == 'trapezoid':
            self.weights = np.full(steps + 1, dt)
            self.weights[[0, -1]] = 0.5 * dt
        else:
            self.weights = np.full(steps, dt)
        # Load half-parts on [0, T]: the reflected load vanishes before T.
        self.plus_factor = np.full(steps + 1, 0.5)
        self.plus_factor[-1] = 1.0
        self.minus_factor = np.full(steps + 1, 0.5)
        self.minus_factor[-1] = 0.0

    def sample(self, horizon_values: np.ndarray) -> np.ndarray:
        """Integrand factor from values on [0, T] (time axis 0)."""
        if self.quadrature == 'trapezoid':
            return horizon_values
        return 0.5 * (horizon_values[:-1] + horizon_values[1:])

    def rate(self, full_values: np.ndarray) -> np.ndarray:
        """Time derivative of a trace, as integrand factor on [0, T]."""
        if self.quadrature == 'trapezoid':
            return np.gradient(full_values, self.dt, axis=0, edge_order=2)[:self.steps + 1]
        return np.diff(full_values[:self.steps + 1], axis=0) / self.dt

    def part_rate(self, full_values: np.ndarray, sign: float) -> np.ndarray:
        """Time derivative of the plus (sign = 1) or minus (sign = -1) part."""
        if self.quadrature == 'trapezoid':
            return _fold(np.gradient(full_values, self.dt, axis=0, edge_order=2), self.steps, -sign)
        return np.diff(_fold(full_values, self.steps, sign), axis=0) / self.dt

    def load_part(self, horizon_loads: np.ndarray, sign: float) -> np.ndarray:
        factor = self.plus_factor if sign > 0 else self.minus_factor
        return self.sample(factor.reshape((-1,) + (1,) * (horizon_loads.ndim - 1)) * horizon_loads)


def _require_complete(basis: ControlBasis, traces: TraceSet) -> None:
    if traces.basis is not basis and (traces.basis.size != basis.size or traces.basis.n_b != basis.n_b):
        raise InvariantError("traces belong to the control basis", "basis sizes differ")
    present = {t.control for t in traces.traces if t is not None}
    for i in range(basis.size):
        if i not in present:
            raise InvariantError("all traces present", f"missing trace for control {i}")
    if traces.ring_mass is None:
        raise InvariantError("trace set carries the boundary mass matrix")


def _gram(left: np.ndarray, right: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_k w_k left[k]^T right[k] for stacks of (B, n) blocks."""
    n_left, n_right = left.shape[-1], right.shape[-1]
    weighted = left * weights[:, None, None]
    return weighted.reshape(-1, n_left).T @ right.reshape(-1, n_right)


def _general_forms(
    basis: ControlBasis,
    traces: TraceSet,
    controls: Sequence[int],
    quadrature: str,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Form matrices restricted to `controls`, from materialized traces."""
    steps = basis.steps_per_horizon
    rule = _Rule(quadrature, steps, basis.dt_solver)
    by_index = {t.control: t for t in traces.traces}
    values = np.stack([by_index[i].values for i in controls], axis=2)
    _horizon_steps(values.shape[0], basis.dt_solver, basis.T)
    loads = np.stack([traces.ring_loads(i)[:steps + 1] for i in controls], axis=2)

    w = rule.weights
    t_load = rule.sample(loads)
    t_primitive_load = rule.sample(time_primitive(loads, basis.dt_solver))
    t_plus = rule.sample(_fold(values, steps, 1.0))
    t_primitive_trace = rule.sample(time_primitive(values[:steps + 1], basis.dt_solver))
    load_plus = rule.load_part(loads, 1.0)
    load_minus = rule.load_part(loads, -1.0)
    trace_rate = rule.rate(values)

    connecting = _gram(t_primitive_load, t_plus, w) - _gram(t_primitive_trace, load_plus, w)
    potential = _gram(t_load, rule.part_rate(values, 1.0), w) + _gram(trace_rate, load_plus, w)
    kinetic = _gram(t_load, rule.part_rate(values, -1.0), w) + _gram(trace_rate, load_minus, w)
    return connecting, potential, kinetic


def _shifted(values: np.ndarray, shift: int) -> np.ndarray:
    if shift == 0:
        return values
    out = np.zeros_like(values)
    out[shift:] = values[:-shift]
    return out


def _structured_forms(basis: ControlBasis, traces: TraceSet, quadrature: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Form matrices of a shift-generated trace set.

    Every control load is a_j(t) m_alpha with m_alpha a column of the ring
    mass matrix, and every trace is a delayed base trace y_beta. All
    boundary inner products then reduce to the (B_ring x n_b x n_b) stack
    Q[p, alpha, beta] = m_alpha . y_beta(t_p) and its delays.
    """
    steps = basis.steps_per_horizon
    h = basis.dt_solver
    n_t, n_b = basis.n_t, basis.n_b
    rule = _Rule(quadrature, steps, h)
    w = rule.weights

    q = np.einsum('ra,prb->pab', traces.ring_mass, traces.base)
    amplitudes = np.stack([basis.amplitudes(j, steps) for j in range(n_t)], axis=1)

    primitive_amp = (w[:, None] * rule.sample(time_primitive(amplitudes, h))).T
    amp = (w[:, None] * rule.sample(amplitudes)).T
    amp_plus = (w[:, None] * rule.load_part(amplitudes, 1.0)).T
    amp_minus = (w[:, None] * rule.load_part(amplitudes, -1.0)).T

    connecting = np.zeros((n_t, n_b, n_t, n_b))
    potential = np.zeros_like(connecting)
    kinetic = np.zeros_like(connecting)
    for s in range(n_t):
        qs = _shifted(q, s * basis.substeps)

        # traces of shift s as second argument: C[j, a, s, b]
        plus = rule.sample(_fold(qs, steps, 1.0))
        connecting[:, :, s, :] += np.einsum('jk,kab->jab', primitive_amp, plus)
        potential[:, :, s, :] += np.einsum('jk,kab->jab', amp, rule.part_rate(qs, 1.0))
        kinetic[:, :, s, :] += np.einsum('jk,kab->jab', amp, rule.part_rate(qs, -1.0))

        # traces of shift s as first argument: C[s, a, l, b]
        primitive = rule.sample(time_primitive(qs[:steps + 1], h))
        rate = rule.rate(qs)
        connecting[s] -= np.einsum('lk,kba->alb', amp_plus, primitive)
        potential[s] += np.einsum('lk,kba->alb', amp_plus, rate)
        kinetic[s] += np.einsum('lk,kba->alb', amp_minus, rate)

    n = basis.size
    scale = np.ones(n) if basis.weights is None else basis.weights
    outer = np.outer(scale, scale)
    return (
        outer * connecting.reshape(n, n),
        outer * potential.reshape(n, n),
        outer * kinetic.reshape(n, n),
    )


def _single_entry(basis: ControlBasis, traces: TraceSet, i: int, j: int, quadrature: str, which: int) -> float:
    _require_complete(basis, traces)
    controls = [i] if i == j else [i, j]
    matrix = _general_forms(basis, traces, controls, quadrature)[which]
    return float(matrix[0, -1])


def connecting_form(basis: ControlBasis, traces: TraceSet, i: int, j: int, quadrature: Quadrature = 'trapezoid') -> float:
    """C_ij = [f_i, f_j], the M-inner product of the terminal waves, from boundary data."""
    return _single_entry(basis, traces, i, j, quadrature, 0)


def potential_form(basis: ControlBasis, traces: TraceSet, i: int, j: int, quadrature: Quadrature = 'trapezoid') -> float:
    """P_ij = [f_i, f_j]_p, the K-inner product of the terminal waves, from boundary data."""
    return _single_entry(basis, traces, i, j, quadrature, 1)


def kinetic_form(basis: ControlBasis, traces: TraceSet, i: int, j: int, quadrature: Quadrature = 'trapezoid') -> float:
    """M-inner product of the terminal velocities, from boundary data."""
    return _single_entry(basis, traces, i, j, quadrature, 2)


def asymmetry(matrix: np.ndarray) -> float:
    """||X - X^T||_F / ||X||_F, zero for the zero matrix."""
    norm = np.linalg.norm(matrix)
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(matrix - matrix.T) / norm)


def build_form_data(
    basis: ControlBasis,
    traces: TraceSet,
    quadrature: Quadrature = 'trapezoid',
    structured: Optional[bool] = None,
    symmetry_tolerance: float = 1e-8,
) -> FormData:
    """
    Compute C, P, the kinetic matrix and terminal values from boundary data.

    Args:
        basis: Control basis
        traces: Boundary traces of every control
        quadrature: 'trapezoid' or 'midpoint'
        structured: Use the shift-invariant fast path; default when the traces
            were generated by delaying base simulations
        symmetry_tolerance: Relative asymmetry above which a warning is logged

    Returns:
        FormData with exactly symmetrized matrices

    Raises:
        InvariantError: If a trace is missing
    """
    _require_complete(basis, traces)
    if structured is None:
        structured = traces.base is not None and traces.mode == 'shift'
    if structured and traces.base is None:
        raise InvariantError("structured forms need base traces", "trace set was not shift generated")

    logger.info("Building form data", controls=basis.size, quadrature=quadrature, structured=structured)
    if structured:
        connecting, potential, kinetic = _structured_forms(basis, traces, quadrature)
    else:
        connecting, potential, kinetic = _general_forms(basis, traces, range(basis.size), quadrature)

    skew = {'C': asymmetry(connecting), 'P': asymmetry(potential), 'kinetic': asymmetry(kinetic)}
    for name, value in skew.items():
        metrics.form_asymmetry.labels(form=name).set(value)
        if value > symmetry_tolerance:
            logger.warning("Form matrix asymmetry above tolerance", form=name, asymmetry=value, tolerance=symmetry_tolerance)

    connecting = 0.5 * (connecting + connecting.T)
    potential = 0.5 * (potential + potential.T)
    kinetic = 0.5 * (kinetic + kinetic.T)
    for name, matrix in (('C', connecting), ('P', potential), ('kinetic', kinetic)):
        scale = np.abs(matrix).max() if matrix.size else 0.0
        if np.diag(matrix).min(initial=0.0) < -symmetry_tolerance * scale:
            logger.warning("Negative diagonal in form matrix", form=name, minimum=float(np.diag(matrix).min()))

    data = FormData(
        C=connecting,
        P=potential,
        B=traces.terminal_values(),
        n_b=basis.n_b,
        n_t=basis.n_t,
        T=basis.T,
        dt_solver=basis.dt_solver,
        kinetic=kinetic,
        asymmetry=skew,
        quadrature=quadrature,
    )
    logger.info("Form data built", asymmetry_C=skew['C'], asymmetry_P=skew['P'])
    return data


def oracle_errors(data: FormData, mass_gram: np.ndarray, stiffness_gram: np.ndarray, kinetic_gram: np.ndarray) -> Dict[str, float]:
    """Relative Frobenius distance of each boundary-computed matrix to its interior Gram."""
    def rel(a, b):
        norm = np.linalg.norm(b)
        return float(np.linalg.norm(a - b) / norm) if norm else float(np.linalg.norm(a))

    errors = {'C': rel(data.C, mass_gram), 'P': rel(data.P, stiffness_gram)}
    if data.kinetic is not None:
        errors['kinetic'] = rel(data.kinetic, kinetic_gram)
    return errors
