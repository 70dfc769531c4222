"""On-disk JSON cache of estimator results keyed by configuration hash."""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np

from .constants import EstimatorResult
from .jsonio import dumps

ENV_VAR = "RUINLAB_CACHE_DIR"
DEFAULT_DIR = ".ruinlab-cache"


def default_cache_dir() -> Path:
    return Path(os.environ.get(ENV_VAR, DEFAULT_DIR))


class ResultCache:
    """One JSON file per configuration hash.

    Per-path samples, when a result carries them, go to a ``.npy`` file next
    to the JSON so paired ratios computed from cached entries keep their
    covariance term.
    """

    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else default_cache_dir()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> EstimatorResult | None:
        p = self._path(key)
        if not p.is_file():
            return None
        with open(p, encoding="utf-8") as fh:
            d = json.load(fh)
        res = EstimatorResult.from_dict(d["result"])
        side = p.with_suffix(".npy")
        if side.is_file():
            res.samples = np.load(side, allow_pickle=False)
        res.cached = True
        res.details = {**res.details, "provenance": {"cache_file": str(p), "stored_at": d.get("stored_at")}}
        return res

    def put(self, res: EstimatorResult) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        p = self._path(res.config_hash)
        tmp = p.with_suffix(".tmp")
        body = {"stored_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()), "result": res.to_dict()}
        body["result"]["cached"] = False
        if res.samples is not None:
            side_tmp = p.with_suffix(".npy.tmp")
            with open(side_tmp, "wb") as fh:
                np.save(fh, np.asarray(res.samples, dtype=np.float64), allow_pickle=False)
            os.replace(side_tmp, p.with_suffix(".npy"))
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(dumps(body))
        os.replace(tmp, p)
        return p

    def entries(self) -> list[Path]:
        return sorted(self.root.glob("*.json")) if self.root.is_dir() else []

    def clear(self) -> int:
        files = self.entries()
        for f in files:
            f.unlink()
            f.with_suffix(".npy").unlink(missing_ok=True)
        return len(files)
