"""Result emission: atomic CSV/JSON writers and the run manifest.

Files are written tmp-then-rename in the target directory so interrupted
runs never leave truncated output.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

__all__ = ["atomic_write_text", "write_csv", "write_json", "Manifest", "default_output_dir"]

OUTPUT_DIR_ENV = "BKBM_OUTPUT_DIR"


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "bkbm_out")


def atomic_write_text(path: str, text: str) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: str, obj) -> str:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


@dataclass
class Manifest:
    """Self-contained record of one CLI run: enough to reproduce it."""

    subcommand: str
    version: str
    seed: int | None
    config: dict
    outputs: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    cap_exceeded: bool = False
    wall_time_s: float = 0.0
    exit_code: int = 0

    def write(self, path: str) -> str:
        return write_json(path, {
            "subcommand": self.subcommand,
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "outputs": self.outputs,
            "verdicts": self.verdicts,
            "cap_exceeded": self.cap_exceeded,
            "wall_time_s": self.wall_time_s,
            "exit_code": self.exit_code,
        })
