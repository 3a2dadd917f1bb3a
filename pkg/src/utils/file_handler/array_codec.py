import base64
from typing import Any, Dict, List, Sequence

import numpy as np

from src.utils.errors import SchemaError
from .json_handler import decimal9


def encode_array(array: np.ndarray) -> Dict[str, Any]:
    data = np.ascontiguousarray(array, dtype="<f4")
    return {
        "shape": list(data.shape),
        "dtype": "float32",
        "data": base64.b64encode(data.tobytes(order="C")).decode("ascii"),
    }


def decode_array(payload: Dict[str, Any]) -> np.ndarray:
    try:
        if payload["dtype"] != "float32":
            raise SchemaError(f"Unsupported tensor dtype: {payload['dtype']}")
        raw = base64.b64decode(payload["data"].encode("ascii"), validate=True)
        shape = tuple(int(size) for size in payload["shape"])
        array = np.frombuffer(raw, dtype="<f4").astype(np.float32)
        return array.reshape(shape)
    except (KeyError, ValueError, TypeError) as e:
        raise SchemaError(f"Malformed tensor payload: {str(e)}") from e


def vector_to_list(vector: np.ndarray) -> List[float]:
    return [decimal9(value) for value in np.asarray(vector, dtype=np.float32).tolist()]


def list_to_vector(values: Sequence[float]) -> np.ndarray:
    try:
        return np.asarray([float(value) for value in values], dtype=np.float32)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"Vector must be a list of numbers: {str(e)}") from e
