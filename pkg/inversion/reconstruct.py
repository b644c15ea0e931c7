"""
Density recovery from the Gram matrix of the harmonic targets.

Once c_alpha steers the terminal wave onto phi_alpha, the connecting form
gives (phi_alpha, M(rho) phi_beta) = c_alpha^T C c_beta. The left side is
linear in the per-triangle densities, which yields the system

    sum_k rho_k phi_alpha[tri_k]^T m^k phi_beta[tri_k] = c_alpha^T C c_beta,  alpha <= beta,

solved under the a-priori box rho_min <= rho_k <= rho_max.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import structlog
from scipy.linalg import lstsq

from core.exceptions import InvariantError
from fem.assembly import local_mass_tensor
from geometry.mesh import DensityField, TriMesh, difference_operator
from inversion.control import ControlSolution
from inversion.forms import FormData
from inversion.harmonics import HarmonicBasis
from utils import metrics

logger = structlog.get_logger(__name__)

ARMIJO = 1e-4
MAX_BACKTRACKS = 60
STEP_BOUNDS = (1e-30, 1e30)
SUBSPACE_EVERY = 25


@dataclass
class ReconstructionSystem:
    """
    Linear system for the densities.

    Attributes:
        matrix: One row per pair alpha <= beta, one column per triangle
        rhs: c_alpha^T C c_beta per pair
        pairs: (alpha, beta) of every row
        difference: Triangle adjacency difference operator D
        regularization: lambda in ||A rho - b||^2 + lambda ||D rho||^2
        bounds: (rho_min, rho_max)
    """
    matrix: np.ndarray
    rhs: np.ndarray
    pairs: np.ndarray
    difference: sp.csr_matrix
    regularization: float
    bounds: Tuple[float, float]

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise InvariantError("system entries are finite")
        if self.matrix.shape[0] != self.rhs.shape[0] or self.matrix.shape[1] != self.difference.shape[1]:
            raise InvariantError("system blocks agree in size", f"A {self.matrix.shape}, b {self.rhs.shape}, D {self.difference.shape}")

    @property
    def n_triangles(self) -> int:
        return int(self.matrix.shape[1])

    def with_rhs(self, rhs: np.ndarray, bounds: Optional[Tuple[float, float]] = None,
                 regularization: Optional[float] = None) -> 'ReconstructionSystem':
        return ReconstructionSystem(
            matrix=self.matrix,
            rhs=np.asarray(rhs, dtype=np.float64),
            pairs=self.pairs,
            difference=self.difference,
            regularization=self.regularization if regularization is None else regularization,
            bounds=self.bounds if bounds is None else bounds,
        )


@dataclass
class ReconstructionResult:
    """
    Outcome of the constrained solve.

    Attributes:
        density: Estimated densities, inside the box
        residual: ||A rho - b|| / ||b||
        iterations: Accepted projected-gradient steps
        converged: Whether a stopping criterion other than the iteration cap fired
        reason: 'tolerance', 'residual', 'stalled' or 'max_iterations'
        singular_values: (largest, smallest) singular value of A
        objective: Objective after each accepted step, starting value first
        delta: Relative error against the ground truth, when scored
    """
    density: DensityField
    residual: float
    iterations: int
    converged: bool
    reason: str
    singular_values: Tuple[float, float]
    objective: List[float] = field(default_factory=list, repr=False)
    delta: Optional[float] = None

    def summary(self) -> Dict[str, object]:
        out = {
            'residual': self.residual,
            'iterations': self.iterations,
            'converged': self.converged,
            'stop_reason': self.reason,
            'sigma_max': self.singular_values[0],
            'sigma_min': self.singular_values[1],
        }
        if self.delta is not None:
            out['delta'] = self.delta
        return out


def pair_indices(n_h: int) -> np.ndarray:
    """All (alpha, beta) with alpha <= beta, row-major."""
    return np.column_stack(np.triu_indices(n_h))


def gram_matrix(mesh: TriMesh, harmonics: HarmonicBasis) -> np.ndarray:
    """Per-triangle target products G[alpha, beta, k] = phi_alpha[tri_k]^T m^k phi_beta[tri_k]."""
    local = harmonics.functions[:, mesh.triangles]
    weighted = np.einsum('akp,kpq->akq', local, local_mass_tensor(mesh))
    return np.einsum('akq,bkq->abk', weighted, local)


def default_regularization(matrix: np.ndarray, difference: sp.spmatrix, scale: float = 1e-6) -> float:
    """scale * ||A||_F^2 / ||D||_F^2."""
    d_norm = spla.norm(difference) if difference.nnz else 0.0
    if d_norm == 0.0:
        return 0.0
    return float(scale * np.linalg.norm(matrix) ** 2 / d_norm ** 2)


def assemble_density_system(
    mesh: TriMesh,
    harmonics: HarmonicBasis,
    formdata: FormData,
    controls: Sequence[ControlSolution],
    bounds: Tuple[float, float] = (0.5, 2.0),
    regularization: Optional[float] = None,
    regularization_scale: float = 1e-6,
) -> ReconstructionSystem:
    """
    Rows alpha <= beta of the density system.

    Args:
        mesh: Triangulation
        harmonics: Harmonic targets phi_alpha
        formdata: Data holding C
        controls: One solution per target, in target order
        bounds: A-priori box
        regularization: lambda; None picks the default scale
        regularization_scale: Factor of the default lambda

    Raises:
        InvariantError: On size mismatches
    """
    if harmonics.n_nodes != mesh.n_nodes:
        raise InvariantError("harmonic functions live on the mesh nodes", f"{harmonics.n_nodes} vs {mesh.n_nodes}")
    if len(controls) != harmonics.n_h:
        raise InvariantError("one control per harmonic target", f"{len(controls)} controls, {harmonics.n_h} targets")
    coefficients = np.stack([c.coefficients for c in controls])
    if coefficients.shape[1] != formdata.size:
        raise InvariantError("control coefficients match the form data", f"{coefficients.shape[1]} vs {formdata.size}")

    pairs = pair_indices(harmonics.n_h)
    products = gram_matrix(mesh, harmonics)
    matrix = products[pairs[:, 0], pairs[:, 1]]
    connecting = coefficients @ formdata.C @ coefficients.T
    rhs = connecting[pairs[:, 0], pairs[:, 1]]

    difference = difference_operator(mesh)
    if regularization is None:
        regularization = default_regularization(matrix, difference, regularization_scale)
    logger.info(
        "Density system assembled",
        rows=matrix.shape[0],
        triangles=matrix.shape[1],
        regularization=regularization,
    )
    return ReconstructionSystem(
        matrix=matrix,
        rhs=rhs,
        pairs=pairs,
        difference=difference,
        regularization=float(regularization),
        bounds=(float(bounds[0]), float(bounds[1])),
    )


class _Objective:
    """f(rho) = ||A rho - b||^2 + lambda ||D rho||^2 and its gradient."""

    def __init__(self, system: ReconstructionSystem):
        self.a = system.matrix
        self.b = system.rhs
        self.d = system.difference
        self.lam = system.regularization

    def value(self, rho: np.ndarray) -> float:
        r = self.a @ rho - self.b
        f = float(r @ r)
        if self.lam:
            dr = self.d @ rho
            f += self.lam * float(dr @ dr)
        return f

    def gradient(self, rho: np.ndarray) -> np.ndarray:
        g = self.a.T @ (self.a @ rho - self.b)
        if self.lam:
            g = g + self.lam * (self.d.T @ (self.d @ rho))
        return 2.0 * g

    def lipschitz(self) -> float:
        bound = np.linalg.norm(self.a, 2) ** 2
        if self.lam:
            bound += self.lam * spla.norm(self.d) ** 2
        return 2.0 * bound


def _free_set(rho: np.ndarray, g: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Triangles not held at a bound by the gradient."""
    return ~(((rho <= lo) & (g > 0)) | ((rho >= hi) & (g < 0)))


def _subspace_direction(system: ReconstructionSystem, rho: np.ndarray, free: np.ndarray) -> np.ndarray:
    """
    Minimum-norm least-squares correction on the free triangles.

    Solves [A_F; sqrt(lambda) D_F] d = -[A rho - b; sqrt(lambda) D rho]
    with every other triangle held where it is.
    """
    blocks = [system.matrix[:, free]]
    residual = [system.matrix @ rho - system.rhs]
    if system.regularization:
        root = np.sqrt(system.regularization)
        blocks.append(root * system.difference[:, free].toarray())
        residual.append(root * (system.difference @ rho))
    correction, *_ = lstsq(np.vstack(blocks), -np.concatenate(residual), lapack_driver='gelsd')
    direction = np.zeros_like(rho)
    direction[free] = correction
    return direction


def _refine(
    system: ReconstructionSystem,
    objective: _Objective,
    rho: np.ndarray,
    g: np.ndarray,
    f: float,
) -> Optional[Tuple[np.ndarray, float]]:
    """Projected subspace step, halved until it lowers the objective; None when none does."""
    lo, hi = system.bounds
    free = _free_set(rho, g, lo, hi)
    if not free.any():
        return None
    direction = _subspace_direction(system, rho, free)
    length = 1.0
    for _ in range(MAX_BACKTRACKS):
        candidate = np.clip(rho + length * direction, lo, hi)
        f_new = objective.value(candidate)
        if f_new < f:
            return candidate, f_new
        length *= 0.5
    return None


def solve_density(
    system: ReconstructionSystem,
    max_iterations: int = 100_000,
    tolerance: float = 1e-12,
) -> ReconstructionResult:
    """
    Minimize ||A rho - b||^2 + lambda ||D rho||^2 over the box.

    Projected gradient with Barzilai-Borwein steps and monotone
    backtracking, started at the box midpoint. Every SUBSPACE_EVERY
    steps the free triangles get an exact least-squares correction,
    which settles the ill-conditioned directions the gradient steps
    crawl along. Stops when the relative objective change falls to
    `tolerance`, when the residual reaches tolerance * ||b||, or when
    no decrease is possible.

    Raises:
        ValueError: If the box is empty
    """
    lo, hi = system.bounds
    if not lo < hi:
        raise ValueError(f"rho_min must be below rho_max, got {system.bounds}")

    objective = _Objective(system)
    rho = np.full(system.n_triangles, 0.5 * (lo + hi))
    f = objective.value(rho)
    g = objective.gradient(rho)
    lipschitz = objective.lipschitz()
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0
    floor = (tolerance * np.linalg.norm(system.rhs)) ** 2
    history = [f]
    reason = 'max_iterations'
    iterations = 0

    while iterations < max_iterations:
        if f <= floor:
            reason = 'residual'
            break
        accepted = False
        trial_step = step
        for _ in range(MAX_BACKTRACKS):
            candidate = np.clip(rho - trial_step * g, lo, hi)
            move = candidate - rho
            f_new = objective.value(candidate)
            if f_new <= f + ARMIJO * float(g @ move):
                accepted = True
                break
            trial_step *= 0.5
        if not accepted or not np.any(move):
            reason = 'stalled'
            break

        g_new = objective.gradient(candidate)
        y = g_new - g
        sy = float(move @ y)
        step = float(np.clip(float(move @ move) / sy, *STEP_BOUNDS)) if sy > 0 else STEP_BOUNDS[1]
        change = abs(f - f_new) / max(abs(f), np.finfo(float).tiny)
        rho, g, f = candidate, g_new, f_new
        history.append(f)
        iterations += 1
        if change <= tolerance:
            reason = 'tolerance'
            break
        if iterations % SUBSPACE_EVERY == 0:
            refined = _refine(system, objective, rho, g, f)
            if refined is not None:
                rho, f = refined
                g = objective.gradient(rho)
                history.append(f)

    converged = reason != 'max_iterations'
    if not converged:
        logger.warning("Density solve hit the iteration cap", iterations=iterations, objective=f)

    b_norm = np.linalg.norm(system.rhs)
    misfit = np.linalg.norm(system.matrix @ rho - system.rhs)
    residual = float(misfit / b_norm) if b_norm > 0 else float(misfit)
    singular = np.linalg.svd(system.matrix, compute_uv=False)
    metrics.reconstruction_residual.set(residual)
    metrics.reconstruction_iterations.set(iterations)
    logger.info("Density solved", iterations=iterations, reason=reason, residual=residual)

    return ReconstructionResult(
        density=DensityField(rho, (lo, hi)),
        residual=residual,
        iterations=iterations,
        converged=converged,
        reason=reason,
        singular_values=(float(singular[0]), float(singular[-1])),
        objective=history,
    )


def relative_error(
    estimate: DensityField,
    truth: DensityField,
    areas: Optional[np.ndarray] = None,
    weighted: bool = True,
) -> float:
    """
    delta = ||rho_est - rho_true|| / ||rho_true||.

    The norm is (sum_k area_k x_k^2)^(1/2); weighted=False drops the areas
    for the plain l2 norm over triangles.

    Raises:
        ValueError: If the fields differ in size, the truth has zero norm,
            or areas are missing for the weighted norm
    """
    if len(estimate) != len(truth):
        raise ValueError(f"fields differ in size: {len(estimate)} vs {len(truth)}")
    if not weighted:
        weights = np.ones(len(truth))
    elif areas is None:
        raise ValueError("area-weighted delta needs the triangle areas; pass areas or weighted=False")
    else:
        weights = np.asarray(areas, dtype=np.float64)
        if weights.shape != (len(truth),):
            raise ValueError(f"{weights.size} areas for {len(truth)} triangles")
    denominator = np.sqrt(np.sum(weights * truth.values ** 2))
    if denominator == 0.0:
        raise ValueError("ground truth has zero norm")
    diff = estimate.values - truth.values
    return float(np.sqrt(np.sum(weights * diff ** 2)) / denominator)


def oracle_rhs_error(system: ReconstructionSystem, controls: Sequence[ControlSolution], mass_gram: np.ndarray) -> float:
    """Relative distance of b to the same quadratic form evaluated with the interior Gram."""
    coefficients = np.stack([c.coefficients for c in controls])
    oracle = (coefficients @ mass_gram @ coefficients.T)[system.pairs[:, 0], system.pairs[:, 1]]
    norm = np.linalg.norm(oracle)
    return float(np.linalg.norm(system.rhs - oracle) / norm) if norm else float(np.linalg.norm(system.rhs))
