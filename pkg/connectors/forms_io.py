"""
Text dump of the inverse-problem data and coordinate matrix dumps.

bcforms layout (whitespace separated, one record per line):

    bcforms 1
    n_b <int>
    n_t <int>
    T <float>
    dt_solver <float>
    quadrature <name>
    asymmetry <name> <float>        (repeated)
    provenance <compact json>       (optional)
    C <nnz>                         followed by nnz lines "i j value"
    P <nnz>
    kinetic <nnz>                   (optional)
    B <rows> <cols>                 followed by one line per row
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from connectors.mesh_io import _fmt, _Lines
from core.exceptions import MeshFormatError
from inversion.forms import FormData

FORMS_HEADER = 'bcforms 1'

PathLike = Union[str, Path]


def _coordinate_lines(name: str, matrix: np.ndarray) -> list:
    rows, cols = np.nonzero(matrix)
    lines = [f"{name} {rows.size}"]
    lines.extend(f"{i} {j} {_fmt(matrix[i, j])}" for i, j in zip(rows, cols))
    return lines


def _parse(lines: _Lines, token: str, kind, what: str, n: int):
    try:
        return kind(token)
    except ValueError:
        raise lines.error(f"malformed {what} '{token}'", n) from None


def _count(lines: _Lines, token: str, what: str, n: int) -> int:
    value = _parse(lines, token, int, what, n)
    if value < 0:
        raise lines.error(f"negative {what} {value}", n)
    return value


def save_form_data(data: FormData, path: PathLike, provenance: Optional[Dict[str, Any]] = None) -> None:
    """Write FormData in the bcforms format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        FORMS_HEADER,
        f"n_b {data.n_b}",
        f"n_t {data.n_t}",
        f"T {_fmt(data.T)}",
        f"dt_solver {_fmt(data.dt_solver)}",
        f"quadrature {data.quadrature}",
    ]
    lines.extend(f"asymmetry {name} {_fmt(value)}" for name, value in sorted(data.asymmetry.items()))
    if provenance is not None:
        lines.append(f"provenance {json.dumps(provenance, sort_keys=True, separators=(',', ':'))}")
    lines.extend(_coordinate_lines('C', data.C))
    lines.extend(_coordinate_lines('P', data.P))
    if data.kinetic is not None:
        lines.extend(_coordinate_lines('kinetic', data.kinetic))
    rows, cols = data.B.shape
    lines.append(f"B {rows} {cols}")
    lines.extend(' '.join(_fmt(v) for v in row) for row in data.B)
    path.write_text('\n'.join(lines) + '\n')


def load_form_data(path: PathLike) -> Tuple[FormData, Optional[Dict[str, Any]]]:
    """
    Read a bcforms file.

    Returns:
        (FormData, provenance or None)

    Raises:
        MeshFormatError: Malformed file, with the offending line
    """
    path = Path(path)
    lines = _Lines(path)
    lines.header(FORMS_HEADER)
    scalars: Dict[str, str] = {}
    asymmetry: Dict[str, float] = {}
    provenance = None
    matrices: Dict[str, np.ndarray] = {}
    terminal = None

    for key in ('n_b', 'n_t', 'T', 'dt_solver', 'quadrature'):
        n, tokens = lines.next(key)
        if len(tokens) != 2 or tokens[0] != key:
            raise lines.error(f"expected '{key} <value>'", n)
        scalars[key] = tokens[1]
    try:
        n_b, n_t = int(scalars['n_b']), int(scalars['n_t'])
        horizon, dt_solver = float(scalars['T']), float(scalars['dt_solver'])
    except ValueError as e:
        raise lines.error(f"malformed header value: {e}")
    size = n_b * n_t

    for n, tokens in lines.rest():
        name = tokens[0]
        if name == 'asymmetry' and len(tokens) == 3:
            asymmetry[tokens[1]] = _parse(lines, tokens[2], float, f"{tokens[1]} asymmetry", n)
        elif name == 'provenance' and len(tokens) == 2:
            try:
                provenance = json.loads(tokens[1])
            except json.JSONDecodeError as e:
                raise lines.error(f"malformed provenance: {e}", n)
        elif name in ('C', 'P', 'kinetic') and len(tokens) == 2:
            entries = lines.rows(_count(lines, tokens[1], f"{name} entry count", n), 3, float, f"{name} entry")
            idx = entries[:, :2].astype(np.int64)
            if entries.size and (idx.min() < 0 or idx.max() >= size):
                raise lines.error(f"{name} index outside {size} x {size}")
            matrices[name] = sp.coo_matrix((entries[:, 2], (idx[:, 0], idx[:, 1])), shape=(size, size)).toarray()
        elif name == 'B' and len(tokens) == 3:
            rows = _count(lines, tokens[1], "B row count", n)
            cols = _count(lines, tokens[2], "B column count", n)
            terminal = lines.rows(rows, cols, float, 'B row')
        else:
            raise lines.error(f"unexpected record '{' '.join(tokens)}'", n)

    for required in ('C', 'P'):
        if required not in matrices:
            raise MeshFormatError(f"missing {required} block", None, str(path))
    if terminal is None:
        raise MeshFormatError("missing B block", None, str(path))

    data = FormData(
        C=matrices['C'],
        P=matrices['P'],
        B=terminal,
        n_b=n_b,
        n_t=n_t,
        T=horizon,
        dt_solver=dt_solver,
        kinetic=matrices.get('kinetic'),
        asymmetry=asymmetry,
        quadrature=scalars['quadrature'],
    )
    data.validate()
    return data, provenance


def save_matrix(matrix: sp.spmatrix, path: PathLike, name: str = 'matrix') -> None:
    """Coordinate dump: header '<name> <rows> <cols> <nnz>' then 'i j value' lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{name} {coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    lines.extend(f"{coo.row[k]} {coo.col[k]} {_fmt(coo.data[k])}" for k in order)
    path.write_text('\n'.join(lines) + '\n')
