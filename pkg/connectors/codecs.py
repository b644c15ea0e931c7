"""Plain-dict encodings of the pipeline's domain objects for msgpack dumps."""

from typing import Any, Dict, List

import numpy as np

from inversion.control import ControlSolution
from inversion.harmonics import HarmonicBasis
from wavesim.ricker import RickerWavelet
from wavesim.traces import BoundaryTrace, ControlBasis, OracleData, TraceSet


def encode_basis(basis: ControlBasis) -> Dict[str, Any]:
    return {
        'frequency': basis.wavelet.frequency,
        'delay': basis.wavelet.delay,
        'offset': basis.offset,
        'n_t': basis.n_t,
        'n_b': basis.n_b,
        'substeps': basis.substeps,
        'weights': basis.weights,
    }


def decode_basis(payload: Dict[str, Any]) -> ControlBasis:
    return ControlBasis(
        wavelet=RickerWavelet(payload['frequency'], payload['delay']),
        offset=payload['offset'],
        n_t=payload['n_t'],
        n_b=payload['n_b'],
        substeps=payload['substeps'],
        weights=payload.get('weights'),
    )


def encode_traces(trace_set: TraceSet) -> Dict[str, Any]:
    """
    Boundary samples only. Interior terminal states stay out of this
    payload; they travel in the separate oracle dump.
    """
    if trace_set.mode == 'shift':
        samples = trace_set.base
    else:
        samples = np.stack([t.base for t in trace_set.traces], axis=2)
    return {
        'basis': encode_basis(trace_set.basis),
        'mode': trace_set.mode,
        'samples': samples,
        'energy': trace_set.energy,
        'ring_mass': trace_set.ring_mass,
    }


def decode_traces(payload: Dict[str, Any]) -> TraceSet:
    basis = decode_basis(payload['basis'])
    samples = payload['samples']
    mode = payload['mode']
    traces = []
    for i in range(basis.size):
        if mode == 'shift':
            j, alpha = basis.unflatten(i)
            traces.append(BoundaryTrace(
                control=i,
                dt=basis.dt_solver,
                base=samples[:, :, alpha],
                shift=j * basis.substeps,
                scale=basis.weight(i),
            ))
        else:
            traces.append(BoundaryTrace(control=i, dt=basis.dt_solver, base=samples[:, :, i]))
    return TraceSet(
        basis=basis,
        traces=traces,
        mode=mode,
        base=samples if mode == 'shift' else None,
        energy=payload.get('energy'),
        ring_mass=payload['ring_mass'],
    )


def encode_oracle(oracle: OracleData) -> Dict[str, Any]:
    return {
        'u_terminal': oracle.u_terminal,
        'v_terminal': oracle.v_terminal,
        'mass_gram': oracle.mass_gram,
        'stiffness_gram': oracle.stiffness_gram,
        'kinetic_gram': oracle.kinetic_gram,
    }


def decode_oracle(payload: Dict[str, Any]) -> OracleData:
    return OracleData(
        u_terminal=payload['u_terminal'],
        v_terminal=payload['v_terminal'],
        mass_gram=payload['mass_gram'],
        stiffness_gram=payload['stiffness_gram'],
        kinetic_gram=payload['kinetic_gram'],
    )


def encode_harmonics(basis: HarmonicBasis) -> Dict[str, Any]:
    return {'sources': basis.sources, 'functions': basis.functions, 'boundary_ring': basis.boundary_ring}


def decode_harmonics(payload: Dict[str, Any]) -> HarmonicBasis:
    return HarmonicBasis(
        sources=payload['sources'],
        functions=payload['functions'],
        boundary_ring=payload['boundary_ring'],
    )


def encode_controls(solutions: List[ControlSolution]) -> Dict[str, Any]:
    return {
        'coefficients': np.stack([s.coefficients for s in solutions]),
        'rows': [
            {
                'target': s.target,
                'residual': s.residual,
                'phi': s.phi,
                'rank': s.rank,
                'oracle_terminal_error': s.oracle_terminal_error,
            }
            for s in solutions
        ],
    }


def decode_controls(payload: Dict[str, Any]) -> List[ControlSolution]:
    coefficients = payload['coefficients']
    return [
        ControlSolution(
            target=row['target'],
            coefficients=coefficients[k],
            residual=row['residual'],
            phi=row['phi'],
            rank=row['rank'],
            oracle_terminal_error=row.get('oracle_terminal_error'),
        )
        for k, row in enumerate(payload['rows'])
    ]
