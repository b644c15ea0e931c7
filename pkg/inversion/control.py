"""
Boundary control problem: steer the terminal wave onto each harmonic target.

For target alpha the coefficients c over the control basis solve, in the
least-squares sense,

    P c = B L_alpha          (potential form matches (U^f(T), L_alpha))
    B^T c = phi_alpha        (terminal boundary values match the target)

and the normal (minimum-norm) solution is taken by truncated SVD,
optionally truncated further per target down to the fewest singular
components that still meet a residual target.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import structlog
from scipy.linalg import svd

from core.exceptions import AcceptanceError, InvariantError
from inversion.forms import FormData
from inversion.harmonics import HarmonicBasis
from utils import metrics

logger = structlog.get_logger(__name__)


@dataclass
class ControlSolution:
    """
    Control synthesized for one harmonic target.

    Attributes:
        target: Index alpha of the target (the constant is last)
        coefficients: c over the control basis
        residual: Relative l2 boundary mismatch of B^T c against phi_alpha
        phi: Boundary-computable quadratic diagnostic
        rank: Singular values retained by the truncation
        oracle_terminal_error: K-seminorm of U^f(T) - phi_alpha, oracle mode only
    """
    target: int
    coefficients: np.ndarray
    residual: float
    phi: float
    rank: int
    oracle_terminal_error: Optional[float] = None

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def report(self) -> Dict[str, object]:
        row = {
            'target': self.target,
            'residual': self.residual,
            'phi': self.phi,
            'rank': self.rank,
            'coefficient_norm': self.norm,
        }
        if self.oracle_terminal_error is not None:
            row['oracle_terminal_error'] = self.oracle_terminal_error
        return row


@dataclass
class TruncatedSVD:
    """Minimum-norm least-squares solver of a fixed matrix."""
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    rank: int
    discarded: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def factor(cls, matrix: np.ndarray, cutoff: float = 1e-10) -> 'TruncatedSVD':
        """
        Args:
            matrix: System matrix
            cutoff: Singular values below cutoff * s_max are dropped
        """
        matrix = np.asarray(matrix, dtype=np.float64)
        if not np.all(np.isfinite(matrix)):
            raise InvariantError("system entries are finite")
        u, s, vt = svd(matrix, full_matrices=False, lapack_driver='gesvd')
        rank = int(np.sum(s > cutoff * s[0])) if s.size and s[0] > 0 else 0
        return cls(u=u[:, :rank], s=s[:rank], vt=vt[:rank], rank=rank, discarded=s[rank:])

    def coordinates(self, rhs: np.ndarray) -> np.ndarray:
        """Coefficients of the solution along the retained right singular vectors."""
        return (self.u.T @ rhs) / self.s

    def solve(self, rhs: np.ndarray, rank: Optional[int] = None) -> np.ndarray:
        """
        Args:
            rhs: Right-hand side
            rank: Keep only the leading `rank` singular components; all retained by default
        """
        keep = self.rank if rank is None else min(int(rank), self.rank)
        if keep <= 0:
            return np.zeros(self.vt.shape[1])
        return self.vt[:keep].T @ self.coordinates(rhs)[:keep]

    def discrepancy_rank(
        self,
        rhs: np.ndarray,
        boundary_map: np.ndarray,
        target: np.ndarray,
        tolerance: float,
    ) -> int:
        """
        Fewest leading singular components that fit the data within `tolerance`.

        A rank k qualifies when the relative boundary residual
        ||boundary_map c_k - target|| / ||target|| is at most `tolerance` and
        the stacked residual exceeds that of the full truncation by at most
        tolerance * ||rhs||. The norm of c_k grows with k, so the first
        qualifying rank gives the smallest control. Falls back to the full
        truncation when no rank qualifies.

        Args:
            rhs: Right-hand side of the stacked system
            boundary_map: Matrix taking coefficients to boundary values (B^T)
            target: Boundary values to match
            tolerance: Relative tolerance of both tests
        """
        if self.rank == 0:
            return 0
        projections = self.u.T @ rhs
        z = projections / self.s
        partial = np.cumsum((boundary_map @ self.vt.T) * z, axis=1)
        boundary = np.linalg.norm(partial - target[:, None], axis=0) / np.linalg.norm(target)

        outside = np.linalg.norm(rhs - self.u @ projections)
        tail = np.concatenate([np.cumsum((projections ** 2)[::-1])[::-1][1:], [0.0]])
        excess = np.sqrt(outside ** 2 + tail) - outside

        qualifies = (boundary <= tolerance) & (excess <= tolerance * np.linalg.norm(rhs))
        if not qualifies.any():
            return self.rank
        return int(np.argmax(qualifies)) + 1


def solve_normal(matrix: np.ndarray, rhs: np.ndarray, cutoff: float = 1e-10) -> np.ndarray:
    """
    Normal solution: the minimum-norm minimizer of ||A c - b|| on the retained singular subspace.

    Args:
        matrix: A
        rhs: b
        cutoff: Relative singular value threshold

    Returns:
        c
    """
    return TruncatedSVD.factor(matrix, cutoff).solve(np.asarray(rhs, dtype=np.float64))


def _check_sizes(formdata: FormData, basis: HarmonicBasis, alpha: int) -> None:
    if basis.boundary_ring.size != formdata.n_b:
        raise InvariantError("harmonic basis and form data share the boundary ring",
                             f"{basis.boundary_ring.size} ring nodes vs n_b = {formdata.n_b}")
    if formdata.P.shape != (formdata.size, formdata.size) or formdata.B.shape[0] != formdata.size:
        raise InvariantError("form data sizes match the control basis")
    if not 0 <= alpha < basis.n_h:
        raise IndexError(f"target index {alpha} out of range [0, {basis.n_h})")


def _block_scales(formdata: FormData) -> Tuple[float, float]:
    first = np.linalg.norm(formdata.P, axis=1).max(initial=0.0)
    second = np.linalg.norm(formdata.B, axis=0).max(initial=0.0)
    return (first if first > 0 else 1.0), (second if second > 0 else 1.0)


def control_matrix(formdata: FormData, block_weight: float = 1.0) -> np.ndarray:
    """Stacked, row-normalized system matrix shared by all targets, shape (N + N_b, N)."""
    s1, s2 = _block_scales(formdata)
    return np.vstack([formdata.P / s1, (block_weight / s2) * formdata.B.T])


def control_rhs(formdata: FormData, basis: HarmonicBasis, alpha: int, block_weight: float = 1.0) -> np.ndarray:
    s1, s2 = _block_scales(formdata)
    first = formdata.B @ basis.ring_sources()[alpha]
    second = basis.ring_values()[alpha]
    return np.concatenate([first / s1, (block_weight / s2) * second])


def assemble_control_system(
    formdata: FormData,
    basis: HarmonicBasis,
    alpha: int,
    block_weight: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stacked least-squares system of target alpha.

    Block 1 (N rows): sum_j P_ij c_j = (B_i, L_alpha); the constant target uses L = 0.
    Block 2 (N_b rows): sum_j c_j B_j(x) = phi_alpha(x) at boundary nodes.
    Each block is scaled so its largest row norm is 1; block 2 is then
    multiplied by block_weight.

    Raises:
        InvariantError: On size mismatch between form data and basis
    """
    _check_sizes(formdata, basis, alpha)
    return control_matrix(formdata, block_weight), control_rhs(formdata, basis, alpha, block_weight)


def control_residual(c: np.ndarray, formdata: FormData, basis: HarmonicBasis, alpha: int) -> float:
    """
    ||sum_j c_j B_j - phi_alpha||_ring / ||phi_alpha||_ring.

    Raises:
        ValueError: If the target vanishes on the boundary
    """
    target = basis.ring_values()[alpha]
    denominator = np.linalg.norm(target)
    if denominator == 0.0:
        raise ValueError(f"target {alpha} vanishes on the boundary; relative residual undefined")
    return float(np.linalg.norm(formdata.B.T @ c - target) / denominator)


def phi_diagnostic(c: np.ndarray, formdata: FormData, basis: HarmonicBasis, alpha: int) -> float:
    """
    Phi_N(c) = c^T P c - 2 sum_j c_j (B_j, L_alpha) + (phi_alpha, L_alpha).

    Equals (U^f(T) - phi_alpha)^T K (U^f(T) - phi_alpha) up to data error.
    """
    source = basis.ring_sources()[alpha]
    target = basis.ring_values()[alpha]
    return float(c @ formdata.P @ c - 2.0 * c @ (formdata.B @ source) + target @ source)


def oracle_terminal_error(
    c: np.ndarray,
    u_terminal: np.ndarray,
    basis: HarmonicBasis,
    alpha: int,
    stiffness: sp.spmatrix,
) -> float:
    """||sum_j c_j U^{f_j}(T) - phi_alpha||_K over the full mesh."""
    diff = u_terminal @ c - basis.functions[alpha]
    return float(np.sqrt(max(diff @ (stiffness @ diff), 0.0)))


def solve_all_controls(
    formdata: FormData,
    basis: HarmonicBasis,
    cutoff: float = 1e-10,
    block_weight: float = 1.0,
    residual_ceiling: Optional[float] = None,
    jobs: int = 1,
    u_terminal: Optional[np.ndarray] = None,
    stiffness: Optional[sp.spmatrix] = None,
    residual_target: Optional[float] = None,
) -> List[ControlSolution]:
    """
    Solve the control problem for every harmonic target.

    Without a residual target every target gets the normal solution at
    `cutoff`. With one, each target keeps only the leading singular
    components it needs to reach the target (see
    TruncatedSVD.discrepancy_rank). The quadratic forms of the controls
    carry the roundoff of C scaled by ||c||^2, so the smaller controls
    give a more accurate density system.

    Args:
        formdata: Inverse-problem data
        basis: Harmonic targets
        cutoff: Relative singular value threshold
        block_weight: Weight of the boundary-match block
        residual_ceiling: Fail when any residual exceeds it
        jobs: Worker threads across targets
        u_terminal: Interior terminal states (oracle mode only)
        stiffness: K, needed with u_terminal
        residual_target: Relative residual each truncated control must reach

    Returns:
        One ControlSolution per target, constant target last

    Raises:
        AcceptanceError: If a residual exceeds the ceiling
    """
    _check_sizes(formdata, basis, 0)
    matrix = control_matrix(formdata, block_weight)
    solver = TruncatedSVD.factor(matrix, cutoff)
    logger.info(
        "Control system factored",
        rows=matrix.shape[0],
        columns=matrix.shape[1],
        rank=solver.rank,
        cutoff=cutoff,
        residual_target=residual_target,
    )
    targets_on_ring = basis.ring_values()

    def solve(alpha: int) -> ControlSolution:
        rhs = control_rhs(formdata, basis, alpha, block_weight)
        rank = solver.rank
        if residual_target is not None:
            rank = solver.discrepancy_rank(rhs, formdata.B.T, targets_on_ring[alpha], residual_target)
        c = solver.solve(rhs, rank)
        solution = ControlSolution(
            target=alpha,
            coefficients=c,
            residual=control_residual(c, formdata, basis, alpha),
            phi=phi_diagnostic(c, formdata, basis, alpha),
            rank=rank,
        )
        if u_terminal is not None and stiffness is not None:
            solution.oracle_terminal_error = oracle_terminal_error(c, u_terminal, basis, alpha, stiffness)
        return solution

    targets = range(basis.n_h)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            solutions = list(pool.map(solve, targets))
    else:
        solutions = [solve(alpha) for alpha in targets]

    worst = max(s.residual for s in solutions)
    metrics.control_residual_max.set(worst)
    logger.info(
        "Controls solved",
        targets=len(solutions),
        max_residual=worst,
        max_norm=max(s.norm for s in solutions),
        ranks=(min(s.rank for s in solutions), max(s.rank for s in solutions)),
    )

    if residual_ceiling is not None:
        check_residual_ceiling(solutions, residual_ceiling)
    return solutions


def check_residual_ceiling(solutions: List[ControlSolution], ceiling: float) -> None:
    """
    Raises:
        AcceptanceError: If any target residual exceeds the ceiling, with the offending rows
    """
    worst = max(s.residual for s in solutions)
    if worst > ceiling:
        report = {'max_residual': worst, 'ceiling': ceiling,
                  'targets': [s.report() for s in solutions if s.residual > ceiling]}
        raise AcceptanceError(f"control residual {worst:.3e} exceeds ceiling {ceiling:.1e}", report=report)
