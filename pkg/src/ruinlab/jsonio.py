"""JSON emission with 17 significant digits and NaN written as null."""

from __future__ import annotations

import json
import math

import numpy as np


def _enc(x, out: list[str]) -> None:
    if x is None or x is True or x is False:
        out.append({None: "null", True: "true", False: "false"}[x])
    elif isinstance(x, (bool, np.bool_)):
        out.append("true" if x else "false")
    elif isinstance(x, (int, np.integer)):
        out.append(str(int(x)))
    elif isinstance(x, (float, np.floating)):
        v = float(x)
        out.append(format(v, ".17g") if math.isfinite(v) else "null")
    elif isinstance(x, str):
        out.append(json.dumps(x))
    elif isinstance(x, dict):
        out.append("{")
        for i, (k, v) in enumerate(x.items()):
            if i:
                out.append(", ")
            _enc(str(k), out)
            out.append(": ")
            _enc(v, out)
        out.append("}")
    elif isinstance(x, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(x):
            if i:
                out.append(", ")
            _enc(v, out)
        out.append("]")
    elif hasattr(x, "value") and isinstance(getattr(x, "value"), str):  # enums
        _enc(x.value, out)
    else:
        raise TypeError(f"cannot encode {type(x).__name__}")


def dumps(obj) -> str:
    """Serialize ``obj``; floats keep 17 significant digits so they round-trip exactly."""
    out: list[str] = []
    _enc(obj, out)
    return "".join(out)
