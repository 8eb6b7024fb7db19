import dataclasses

from enum import Enum
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from kmwave_core.exceptions import KMWaveCLIError


SerializerOutput = Union[
    int, bool, float, str, bytes, None, Dict[str, "SerializerOutput"], List["SerializerOutput"]
]


def serialize(obj: object) -> SerializerOutput:
    """
    Converts Python objects into JSON-serializable data structures.

    Handles basic types (str, int, float, bool), collections (dict, list, tuple),
    numpy scalars and arrays, enumerations, paths and dataclasses.
    Dict keys must be strings.

    Args:
        obj: Any Python object to serialize

    Returns:
        SerializerOutput: A JSON-serializable structure containing:
            - Basic types (unchanged, numpy scalars converted to Python scalars)
            - Collections and arrays as lists with recursively serialized elements
            - Enumerations as their value
            - Dataclass fields keyed by field name

    Raises:
        KMWaveCLIError: If a dict contains non-string keys
    """
    if isinstance(obj, (str, bool, int, float, bytes)) and not isinstance(obj, Enum):
        return obj
    elif isinstance(obj, np.generic):
        return obj.item()
    elif isinstance(obj, np.ndarray):
        return [serialize(elem) for elem in obj.tolist()]
    elif hasattr(obj, "keys") and hasattr(obj, "values") and hasattr(obj, "items"):
        if all(map(lambda key: isinstance(key, str), obj.keys())):
            return {key: serialize(val) for key, val in obj.items()}
        else:
            raise KMWaveCLIError(
                "When trying to serialize object, received a dict-like object with a non-string key."
            )
    elif isinstance(obj, (list, tuple)):
        return [serialize(elem) for elem in obj]
    elif isinstance(obj, Enum):
        return serialize(obj.value)
    elif isinstance(obj, Path):
        return str(obj)
    elif obj is None:
        return None
    elif dataclasses.is_dataclass(obj):
        return {field.name: serialize(getattr(obj, field.name)) for field in dataclasses.fields(obj)}
    else:
        attributes = list(obj.__init__.__annotations__.keys())  # type: ignore
        return {att: serialize(getattr(obj, att)) for att in attributes if att != "return"}
