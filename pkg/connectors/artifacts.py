"""
Run directory holding the artifacts passed between stages.

Every artifact has one producing stage. Binary dumps and the bcforms file
embed their provenance (producing stage, mesh hash, sha256 of each input
file); the fixed text formats are tracked in manifest.json instead. A read
checks the provenance against the files currently on disk and refuses
stale or foreign inputs, naming the stage to rerun.

Ground truth and interior fields (density, oracle) are only handed out to
stages allowed to see them; every load is recorded for auditing.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import structlog

from connectors import binary
from connectors.codecs import (
    decode_controls,
    decode_harmonics,
    decode_oracle,
    decode_traces,
    encode_controls,
    encode_harmonics,
    encode_oracle,
    encode_traces,
)
from connectors.forms_io import load_form_data, save_form_data
from connectors.mesh_io import load_density, load_mesh, save_density, save_mesh
from core.exceptions import StageInputError
from geometry.mesh import DensityField, TriMesh
from inversion.control import ControlSolution
from inversion.forms import FormData
from inversion.harmonics import HarmonicBasis
from wavesim.traces import OracleData, TraceSet

logger = structlog.get_logger(__name__)

MANIFEST = 'manifest.json'

# name -> (file name, producing stage)
ARTIFACTS: Dict[str, Tuple[str, str]] = {
    'mesh': ('mesh.bcmesh', 'mesh-gen'),
    'density': ('density.bcdensity', 'sample-gen'),
    'traces': ('traces.msgpack', 'simulate'),
    'oracle': ('oracle.msgpack', 'simulate'),
    'forms': ('forms.bcforms', 'forms'),
    'harmonics': ('harmonics.msgpack', 'harmonics'),
    'controls': ('controls.msgpack', 'control'),
    'estimate': ('estimate.bcdensity', 'reconstruct'),
    'reconstruction': ('reconstruction.msgpack', 'reconstruct'),
}

# Never hashed or loaded on behalf of inversion stages.
SEALED = frozenset({'density', 'oracle'})


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class ReadRecord:
    stage: Optional[str]
    artifact: str


class ArtifactStore:
    """
    Artifact files under one output directory.

    Args:
        root: Output directory
        oracle_mode: Allow loading the oracle dump
    """

    def __init__(self, root: Path, oracle_mode: bool = False):
        self.root = Path(root)
        self.oracle_mode = oracle_mode
        self.stage: Optional[str] = None
        self.reads: List[ReadRecord] = []

    def path(self, name: str) -> Path:
        return self.root / ARTIFACTS[name][0]

    def producer(self, name: str) -> str:
        return ARTIFACTS[name][1]

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    # Manifest

    def manifest(self) -> Dict[str, Any]:
        path = self.root / MANIFEST
        if not path.exists():
            return {}
        with open(path, 'r') as f:
            return json.load(f)

    def _record(self, name: str, provenance: Dict[str, Any], stats: Optional[Dict[str, Any]] = None) -> None:
        manifest = self.manifest()
        entry = dict(provenance)
        entry['sha256'] = file_sha256(self.path(name))
        if stats is not None:
            entry['stats'] = stats
        manifest[name] = entry
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / MANIFEST, 'w') as f:
            json.dump(manifest, f, indent=2, sort_keys=True)

    def stats(self, name: str) -> Dict[str, Any]:
        return self.manifest().get(name, {}).get('stats', {})

    def remove(self, name: str) -> None:
        """Delete an artifact and forget it in the manifest."""
        self.path(name).unlink(missing_ok=True)
        manifest = self.manifest()
        if manifest.pop(name, None) is not None:
            with open(self.root / MANIFEST, 'w') as f:
                json.dump(manifest, f, indent=2, sort_keys=True)

    # Provenance

    def provenance(self, stage: str, inputs: List[str], oracle: bool = False) -> Dict[str, Any]:
        """Provenance of an artifact produced by `stage` from the named inputs."""
        return {
            'stage': stage,
            'mesh_hash': self.current_hash('mesh'),
            'inputs': {name: self.current_hash(name) for name in sorted(inputs)},
            'oracle_mode': oracle,
        }

    def current_hash(self, name: str) -> Optional[str]:
        path = self.path(name)
        return file_sha256(path) if path.exists() else None

    def _require(self, name: str) -> Path:
        path = self.path(name)
        if not path.exists():
            raise StageInputError(f"missing {path.name} in {self.root}", producer=self.producer(name))
        self.reads.append(ReadRecord(self.stage, name))
        logger.debug("Reading artifact", artifact=name, stage=self.stage)
        return path

    def _check(self, name: str, provenance: Optional[Dict[str, Any]]) -> None:
        """Refuse an artifact whose recorded inputs differ from the files on disk."""
        if provenance is None:
            entry = self.manifest().get(name)
            if entry is None:
                logger.warning("Artifact not in manifest", artifact=name)
                return
            if entry.get('sha256') != file_sha256(self.path(name)):
                raise StageInputError(
                    f"{self.path(name).name} was modified after it was produced",
                    producer=self.producer(name),
                )
            provenance = entry

        mesh_hash = provenance.get('mesh_hash')
        current = self.current_hash('mesh') if name != 'mesh' else None
        if mesh_hash is not None and current is not None and mesh_hash != current:
            raise StageInputError(
                f"{self.path(name).name} was computed on a different mesh",
                producer=self.producer(name),
            )
        for source, recorded in provenance.get('inputs', {}).items():
            if source in SEALED or source == 'mesh':
                continue
            now = self.current_hash(source)
            if now is not None and now != recorded:
                raise StageInputError(
                    f"{self.path(name).name} is stale: {self.path(source).name} changed since it was produced",
                    producer=self.producer(name),
                )

    def _dump(self, name: str, data: Dict[str, Any], provenance: Dict[str, Any],
              stats: Optional[Dict[str, Any]] = None) -> Path:
        path = self.path(name)
        binary.dump({'provenance': provenance, 'data': data}, path)
        self._record(name, provenance, stats)
        logger.info("Artifact written", artifact=name, path=str(path))
        return path

    def _load(self, name: str) -> Dict[str, Any]:
        payload = binary.load(self._require(name))
        if not isinstance(payload, dict) or 'data' not in payload:
            raise StageInputError(f"{self.path(name).name} is not a stage dump", producer=self.producer(name))
        self._check(name, payload.get('provenance'))
        return payload['data']

    # Typed accessors

    def write_mesh(self, mesh: TriMesh, stats: Optional[Dict[str, Any]] = None) -> Path:
        save_mesh(mesh, self.path('mesh'))
        self._record('mesh', {'stage': 'mesh-gen', 'mesh_hash': None, 'inputs': {}, 'oracle_mode': False}, stats)
        return self.path('mesh')

    def read_mesh(self) -> TriMesh:
        path = self._require('mesh')
        self._check('mesh', None)
        return load_mesh(path)

    def write_density(self, density: DensityField, stats: Optional[Dict[str, Any]] = None) -> Path:
        save_density(density, self.path('density'))
        self._record('density', self.provenance('sample-gen', ['mesh']), stats)
        return self.path('density')

    def read_density(self, mesh: Optional[TriMesh] = None, bounds: Optional[Tuple[float, float]] = None) -> DensityField:
        path = self._require('density')
        self._check('density', None)
        return load_density(path, mesh=mesh, bounds=bounds)

    def write_traces(self, trace_set: TraceSet, stats: Optional[Dict[str, Any]] = None) -> Path:
        provenance = self.provenance('simulate', ['mesh', 'density'], oracle=trace_set.oracle is not None)
        path = self._dump('traces', encode_traces(trace_set), provenance, stats)
        if trace_set.oracle is not None:
            self._dump('oracle', encode_oracle(trace_set.oracle), provenance)
        else:
            self.remove('oracle')
        return path

    def read_traces(self) -> TraceSet:
        return decode_traces(self._load('traces'))

    def read_oracle(self) -> OracleData:
        """
        Raises:
            StageInputError: Outside oracle mode, or when no oracle dump exists
        """
        if not self.oracle_mode:
            raise StageInputError("oracle data is only readable in oracle mode")
        if not self.exists('oracle'):
            raise StageInputError("no oracle dump; rerun 'simulate' with --oracle", producer=None)
        return decode_oracle(self._load('oracle'))

    def write_forms(self, data: FormData, oracle: bool = False, stats: Optional[Dict[str, Any]] = None) -> Path:
        provenance = self.provenance('forms', ['traces'], oracle=oracle)
        save_form_data(data, self.path('forms'), provenance)
        self._record('forms', provenance, stats)
        return self.path('forms')

    def read_forms(self) -> FormData:
        data, provenance = load_form_data(self._require('forms'))
        self._check('forms', provenance)
        return data

    def write_harmonics(self, basis: HarmonicBasis, stats: Optional[Dict[str, Any]] = None) -> Path:
        return self._dump('harmonics', encode_harmonics(basis), self.provenance('harmonics', ['mesh']), stats)

    def read_harmonics(self) -> HarmonicBasis:
        return decode_harmonics(self._load('harmonics'))

    def write_controls(self, solutions: List[ControlSolution], oracle: bool = False,
                       stats: Optional[Dict[str, Any]] = None) -> Path:
        provenance = self.provenance('control', ['forms', 'harmonics'], oracle=oracle)
        return self._dump('controls', encode_controls(solutions), provenance, stats)

    def read_controls(self) -> List[ControlSolution]:
        return decode_controls(self._load('controls'))

    def write_estimate(self, estimate: DensityField, result: Dict[str, Any], oracle: bool = False) -> Path:
        provenance = self.provenance('reconstruct', ['mesh', 'harmonics', 'forms', 'controls'], oracle=oracle)
        save_density(estimate, self.path('estimate'))
        self._record('estimate', provenance)
        return self._dump('reconstruction', result, provenance, stats=result.get('summary'))

    def read_estimate(self, mesh: Optional[TriMesh] = None) -> DensityField:
        path = self._require('estimate')
        self._check('estimate', None)
        return load_density(path, mesh=mesh)

    def read_reconstruction(self) -> Dict[str, Any]:
        return self._load('reconstruction')
