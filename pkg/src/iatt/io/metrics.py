"""Line-delimited JSON metrics logging."""

from __future__ import annotations

import json
import sys

import numpy as np


def _json_safe(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


class MetricsLogger:
    """Appends one JSON object per line; optionally echoes to stderr."""

    def __init__(self, path=None, echo: bool = False):
        self._file = open(path, "a") if path is not None else None
        self.echo = echo

    def log(self, record: dict):
        line = json.dumps(record, default=_json_safe)
        if self._file is not None:
            self._file.write(line + "\n")
            self._file.flush()
        if self.echo:
            print(line, file=sys.stderr)

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
