"""msgpack dumps with numpy array support."""

from pathlib import Path
from typing import Any, Dict, Union

import msgpack
import numpy as np
import structlog

from core.exceptions import StageInputError

logger = structlog.get_logger(__name__)

ARRAY_KEY = '__ndarray__'


def pack_array(array: np.ndarray) -> Dict[str, Any]:
    array = np.ascontiguousarray(array)
    return {ARRAY_KEY: True, 'dtype': array.dtype.str, 'shape': list(array.shape), 'data': array.tobytes()}


def unpack_array(packed: Dict[str, Any]) -> np.ndarray:
    return np.frombuffer(packed['data'], dtype=np.dtype(packed['dtype'])).reshape(packed['shape']).copy()


def _default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return pack_array(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _object_hook(obj: Dict[str, Any]) -> Any:
    if obj.get(ARRAY_KEY):
        return unpack_array(obj)
    return obj


def packb(payload: Any) -> bytes:
    return msgpack.packb(payload, default=_default, use_bin_type=True)


def unpackb(data: bytes) -> Any:
    return msgpack.unpackb(data, raw=False, object_hook=_object_hook, strict_map_key=False)


def dump(payload: Any, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(packb(payload))


def load(path: Union[str, Path]) -> Any:
    """
    Raises:
        StageInputError: If the file is not a valid dump
    """
    path = Path(path)
    with open(path, 'rb') as f:
        data = f.read()
    try:
        return unpackb(data)
    except (msgpack.exceptions.ExtraData, msgpack.exceptions.UnpackException, ValueError) as e:
        logger.warning("Failed to decode dump", path=str(path), error=str(e))
        raise StageInputError(f"corrupt dump {path}: {e}")
