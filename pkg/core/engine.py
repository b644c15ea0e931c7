"""
Pipeline engine.

Runs the reconstruction stages against one run directory. Each stage
loads its predecessors' artifacts through the ArtifactStore and writes
its own, so any stage can be rerun on its own. Only sample-gen, simulate
and score see the true density; the inversion stages work from the
boundary data in the traces dump onward.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import structlog

from connectors import reports
from connectors.artifacts import ArtifactStore
from connectors.forms_io import save_matrix
from connectors.mesh_io import load_density
from core.config import ExperimentConfig
from core.exceptions import AcceptanceError, StageInputError
from fem.assembly import assemble_mass, assemble_stiffness
from geometry.mesh import DensityField, estimate_optical_radius, generate_disk_mesh
from geometry.samples import make_sample
from inversion.control import check_residual_ceiling, solve_all_controls
from inversion.forms import build_form_data, oracle_errors
from inversion.harmonics import build_harmonic_basis
from inversion.reconstruct import assemble_density_system, oracle_rhs_error, relative_error, solve_density
from utils import metrics
from wavesim.traces import ControlBasis, energy_drift, generate_all_traces
from workflows.pipeline import STAGE_ORDER, Stage, StageRegistry

logger = structlog.get_logger(__name__)

SUMMARY_FILE = 'summary.json'
METRICS_FILE = 'metrics.prom'


class PipelineEngine:
    """Coordinates the stages of one experiment."""

    def __init__(self, config: ExperimentConfig, oracle: Optional[bool] = None, jobs: Optional[int] = None):
        """
        Initialize the engine.

        Args:
            config: Validated experiment configuration
            oracle: Override of config.oracle_mode
            jobs: Override of config.jobs
        """
        updates: Dict[str, Any] = {}
        if oracle is not None:
            updates['oracle_mode'] = oracle
        if jobs is not None:
            updates['jobs'] = jobs
        self.config = config.model_copy(update=updates)
        self.output = Path(self.config.output.dir)
        self.store = ArtifactStore(self.output, oracle_mode=self.config.oracle_mode)
        self.registry = StageRegistry()
        self._register_stages()
        metrics.run_info.info({'config_digest': self.config.digest(), 'oracle_mode': str(self.config.oracle_mode)})

        logger.info(
            "Pipeline engine initialized",
            output=str(self.output),
            oracle_mode=self.config.oracle_mode,
            jobs=self.config.jobs,
        )

    def _register_stages(self) -> None:
        for name, inputs, outputs, action in (
            ('mesh-gen', (), ('mesh',), self._mesh_gen),
            ('sample-gen', ('mesh',), ('density',), self._sample_gen),
            ('simulate', ('mesh', 'density'), ('traces', 'oracle'), self._simulate),
            ('forms', ('traces',), ('forms',), self._forms),
            ('harmonics', ('mesh',), ('harmonics',), self._harmonics),
            ('control', ('forms', 'harmonics'), ('controls',), self._control),
            ('reconstruct', ('mesh', 'harmonics', 'forms', 'controls'), ('estimate', 'reconstruction'), self._reconstruct),
            ('score', ('mesh', 'estimate', 'reconstruction', 'density'), (), self._score),
        ):
            self.registry.register(Stage(name=name, inputs=inputs, outputs=outputs, action=action))

    @property
    def box(self):
        return tuple(self.config.reconstruct.box)

    # Stages

    def _mesh_gen(self) -> Dict[str, Any]:
        cfg = self.config.mesh
        mesh = generate_disk_mesh(cfg.n_rings, cfg.n_boundary)
        stats = {
            'nodes': mesh.n_nodes,
            'triangles': mesh.n_triangles,
            'boundary': mesh.n_boundary,
            'area': float(mesh.areas.sum()),
        }
        self.store.write_mesh(mesh, stats)
        return stats

    def _sample_gen(self) -> Dict[str, Any]:
        mesh = self.store.read_mesh()
        sample = self.config.sample
        if sample.kind == 'file':
            density = load_density(sample.path, mesh=mesh, bounds=self.box)
        else:
            density = make_sample(mesh, sample.kind, sample.params, seed=self.config.seed, bounds=self.box)
        self.store.write_density(density, {'kind': sample.kind})
        return {'kind': sample.kind, 'triangles': len(density)}

    def _simulate(self) -> Dict[str, Any]:
        mesh = self.store.read_mesh()
        density = self.store.read_density(mesh, self.box)

        horizon_bound = estimate_optical_radius(mesh, DensityField.constant(mesh, self.box[1]))
        grid = self.config.time_grid(horizon_bound)
        basis = ControlBasis.from_grid(mesh.n_boundary, grid)
        optical_radius = estimate_optical_radius(mesh, density)

        mass = assemble_mass(mesh, density)
        stiffness = assemble_stiffness(mesh)
        mode = 'shift' if self.config.shift_mode else 'direct'
        trace_set = generate_all_traces(
            mesh,
            density,
            basis,
            mode=mode,
            oracle=self.config.oracle_mode,
            jobs=self.config.jobs,
            track_energy=True,
            mass=mass,
            stiffness=stiffness,
        )
        # every simulated control is silent after its own offset window
        shutoff = basis.substeps if mode == 'shift' else basis.steps_per_horizon
        warnings: List[str] = []
        if grid.T <= optical_radius:
            warnings.append(f"T = {grid.T:.6g} does not exceed the estimated optical radius {optical_radius:.6g}")

        stats = {
            'T': grid.T,
            'dt': grid.dt,
            'dt_solver': grid.dt_solver,
            'n_t': grid.n_t,
            'substeps': grid.substeps,
            'frequency': grid.frequency,
            'delay': grid.delay,
            'controls': basis.size,
            'mode': mode,
            'optical_radius': optical_radius,
            'energy_drift': energy_drift(trace_set.energy, shutoff),
            'oracle_mode': self.config.oracle_mode,
            'warnings': warnings,
        }
        self.store.write_traces(trace_set, stats)

        if self.config.output.trace_csv:
            reports.write_trace_csv(trace_set, self.output / 'traces.csv')
        if self.config.output.dump_matrices:
            save_matrix(mass, self.output / 'mass.coo', name='mass')
        return stats

    def _forms(self) -> Dict[str, Any]:
        traces = self.store.read_traces()
        cfg = self.config.forms
        data = build_form_data(
            traces.basis,
            traces,
            quadrature=cfg.quadrature,
            symmetry_tolerance=cfg.symmetry_tolerance,
        )
        stats: Dict[str, Any] = {
            'quadrature': data.quadrature,
            'size': data.size,
            'asymmetry': data.asymmetry,
            'oracle_mode': self.config.oracle_mode,
        }
        if self.config.oracle_mode:
            oracle = self.store.read_oracle()
            stats['oracle_errors'] = oracle_errors(data, oracle.mass_gram, oracle.stiffness_gram, oracle.kinetic_gram)
        self.store.write_forms(data, oracle=self.config.oracle_mode, stats=stats)
        return stats

    def _harmonics(self) -> Dict[str, Any]:
        mesh = self.store.read_mesh()
        stiffness = assemble_stiffness(mesh)
        basis = build_harmonic_basis(mesh, stiffness)
        stats = {'targets': basis.n_h}
        self.store.write_harmonics(basis, stats)
        if self.config.output.harmonics_csv:
            reports.write_harmonics_csv(mesh, basis, self.output / 'harmonics.csv')
        if self.config.output.dump_matrices:
            save_matrix(stiffness, self.output / 'stiffness.coo', name='stiffness')
        return stats

    def _control(self) -> Dict[str, Any]:
        formdata = self.store.read_forms()
        harmonics = self.store.read_harmonics()
        cfg = self.config.control
        u_terminal = stiffness = None
        if self.config.oracle_mode:
            u_terminal = self.store.read_oracle().u_terminal
            stiffness = assemble_stiffness(self.store.read_mesh())

        solutions = solve_all_controls(
            formdata,
            harmonics,
            cutoff=cfg.cutoff,
            block_weight=cfg.block_weight,
            jobs=self.config.jobs,
            u_terminal=u_terminal,
            stiffness=stiffness,
            residual_target=cfg.residual_target,
        )
        stats = {
            'targets': len(solutions),
            'rank': max(s.rank for s in solutions),
            'min_rank': min(s.rank for s in solutions),
            'max_norm': max(s.norm for s in solutions),
            'max_residual': max(s.residual for s in solutions),
            'oracle_mode': self.config.oracle_mode,
        }
        self.store.write_controls(solutions, oracle=self.config.oracle_mode, stats=stats)
        reports.write_control_report(solutions, self.output / 'controls.csv')
        if self.config.output.dump_coefficients:
            reports.write_coefficients(solutions, self.output / 'coefficients.csv')

        if cfg.residual_ceiling is not None:
            check_residual_ceiling(solutions, cfg.residual_ceiling)
        return stats

    def _reconstruct(self) -> Dict[str, Any]:
        mesh = self.store.read_mesh()
        harmonics = self.store.read_harmonics()
        formdata = self.store.read_forms()
        controls = self.store.read_controls()
        cfg = self.config.reconstruct

        system = assemble_density_system(
            mesh,
            harmonics,
            formdata,
            controls,
            bounds=self.box,
            regularization=cfg.regularization,
            regularization_scale=cfg.regularization_scale,
        )
        result = solve_density(system, max_iterations=cfg.max_iterations, tolerance=cfg.tolerance)
        summary = result.summary()
        summary['regularization'] = system.regularization
        summary['rows'] = int(system.matrix.shape[0])
        summary['oracle_mode'] = self.config.oracle_mode
        if self.config.oracle_mode:
            summary['oracle_rhs_error'] = oracle_rhs_error(system, controls, self.store.read_oracle().mass_gram)

        self.store.write_estimate(
            result.density,
            {'summary': summary, 'objective': np.asarray(result.objective)},
            oracle=self.config.oracle_mode,
        )
        return summary

    def _score(self) -> Dict[str, Any]:
        mesh = self.store.read_mesh()
        estimate = self.store.read_estimate(mesh)
        reconstruction = self.store.read_reconstruction()
        truth = None
        if self.store.exists('density'):
            truth = self.store.read_density(mesh)
        else:
            logger.warning("No ground truth; delta omitted")

        delta = None
        if truth is not None:
            delta = relative_error(estimate, truth, mesh.areas, weighted=self.config.reconstruct.weighted_delta)
            metrics.reconstruction_delta.set(delta)
        reports.write_density_csv(mesh, estimate, self.output / 'reconstruction.csv', truth)

        summary = self.build_summary(reconstruction['summary'], delta)
        reports.write_summary(summary, self.output / SUMMARY_FILE)
        return summary

    # Summary and acceptance

    def build_summary(self, reconstruction: Dict[str, Any], delta: Optional[float]) -> Dict[str, Any]:
        """Deterministic run summary assembled from the recorded stage statistics."""
        simulate = self.store.stats('traces')
        control = self.store.stats('controls')
        result = dict(reconstruction)
        if delta is not None:
            result['delta'] = delta

        acceptance: Dict[str, Any] = {}
        ceiling = self.config.control.residual_ceiling
        if ceiling is not None and 'max_residual' in control:
            acceptance['control_residual'] = {
                'value': control['max_residual'],
                'ceiling': ceiling,
                'met': control['max_residual'] <= ceiling,
            }
        delta_ceiling = self.config.reconstruct.delta_ceiling
        if delta_ceiling is not None and delta is not None:
            acceptance['delta'] = {'value': delta, 'ceiling': delta_ceiling, 'met': delta <= delta_ceiling}

        return {
            'config_digest': self.config.digest(),
            'oracle_mode': self.config.oracle_mode,
            'mesh': self.store.stats('mesh'),
            'time': {k: simulate[k] for k in ('T', 'dt', 'dt_solver', 'n_t', 'substeps', 'frequency', 'delay') if k in simulate},
            'optical_radius': simulate.get('optical_radius'),
            'energy_drift': simulate.get('energy_drift'),
            'warnings': simulate.get('warnings', []),
            'forms': self.store.stats('forms'),
            'harmonics': self.store.stats('harmonics'),
            'control': control,
            'reconstruction': result,
            'acceptance': acceptance,
            'passed': all(item['met'] for item in acceptance.values()),
        }

    @staticmethod
    def check_acceptance(summary: Dict[str, Any]) -> None:
        """
        Raises:
            AcceptanceError: If a configured ceiling is breached
        """
        breached = {k: v for k, v in summary.get('acceptance', {}).items() if not v['met']}
        if breached:
            names = ', '.join(f"{k} {v['value']:.3e} > {v['ceiling']:.1e}" for k, v in sorted(breached.items()))
            raise AcceptanceError(f"acceptance ceiling breached: {names}", report=breached)

    # Entry points

    def run_stage(self, name: str) -> Dict[str, Any]:
        """Run one stage against the run directory."""
        stage = self.registry.get(name)
        self.store.stage = name
        try:
            return stage.execute()
        finally:
            self.store.stage = None
            metrics.write_metrics(self.output / METRICS_FILE)

    def run_pipeline(self, start: Optional[str] = None) -> Dict[str, Any]:
        """
        Run every stage in order and score the result.

        A control ceiling breach does not stop the run; every ceiling is
        evaluated after the summary is written.

        Raises:
            StageError: On the first failing stage
            AcceptanceError: If a configured ceiling is breached
        """
        if start is not None and start not in STAGE_ORDER:
            raise StageInputError(f"unknown stage '{start}'")
        summary: Dict[str, Any] = {}
        for stage in self.registry.ordered(start):
            try:
                report = self.run_stage(stage.name)
            except AcceptanceError as e:
                logger.warning("Ceiling breached, continuing", stage=stage.name, error=str(e))
                continue
            if stage.name == 'score':
                summary = report
        logger.info("Pipeline completed", passed=summary.get('passed'), stats=self.registry.get_stage_stats())
        self.check_acceptance(summary)
        return summary
