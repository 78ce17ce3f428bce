"""
convexpde Run Reports

A report has two parts:

- a human-readable block: command, problem, status, the summary lines of every check
  and stage, and wall-clock timings
- a machine-readable JSON block after MACHINE_MARKER: schema version, config echo, every
  check, invariance and solve report, the tail table and artifact digests

The machine block carries no timings or absolute paths and is written with sorted keys,
so seeded reruns produce byte-identical blocks.
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from convexpde.config import REPORT_SCHEMA, convexpde_VERSION
from convexpde.errors import IOFailure, SchemaMismatch

MACHINE_MARKER = "----- machine-readable block -----"


@dataclass
class RunReport:
    command: str
    problem: str
    seed: int = 0
    status: str = ""
    exit_code: int = 0
    message: str = ""
    config: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    checks: List[dict] = field(default_factory=list)
    invariance: Optional[dict] = None
    solves: List[dict] = field(default_factory=list)
    tail: Optional[dict] = None
    artifacts: Dict[str, str] = field(default_factory=dict)
    summary: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    def add_check(self, name: str, status: str, details: dict, informational: bool = False):
        self.checks.append({"name": name, "status": status, "informational": informational, **details})

    def failed_checks(self) -> List[str]:
        return [c["name"] for c in self.checks if not c["informational"] and c["status"] == "FAIL"]

    def machine_block(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "version": convexpde_VERSION,
            "command": self.command,
            "problem": self.problem,
            "seed": self.seed,
            "status": self.status,
            "exit_code": self.exit_code,
            "message": self.message,
            "config": self.config,
            "overrides": self.overrides,
            "checks": self.checks,
            "invariance": self.invariance,
            "solves": self.solves,
            "tail": self.tail,
            "artifacts": self.artifacts,
        }


def plain(value):
    """JSON-safe copy: numpy scalars and arrays unwrapped, non-finite floats as strings."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, Enum):
        return plain(value.value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def render_report(report: RunReport) -> str:
    lines = [
        "convexpde run report",
        "=" * 40,
        f"command: {report.command}",
        f"problem: {report.problem}",
        f"schema:  {REPORT_SCHEMA} (convexpde {convexpde_VERSION})",
        f"status:  {report.status} (exit {report.exit_code})",
    ]
    if report.message:
        lines.append(f"message: {report.message}")
    if report.summary:
        lines.append("")
        lines.extend(report.summary)
    if report.artifacts:
        lines.append("")
        lines.append("artifacts:")
        lines.extend(f"  {name}  sha256:{digest}" for name, digest in sorted(report.artifacts.items()))
    if report.timings:
        lines.append("")
        lines.append("timings:")
        lines.extend(f"  {name}: {seconds:.3f} s" for name, seconds in report.timings.items())
    machine = json.dumps(plain(report.machine_block()), sort_keys=True, indent=2, allow_nan=False)
    return "\n".join(lines) + "\n\n" + MACHINE_MARKER + "\n" + machine + "\n"


def emit_report(report: RunReport, path: Optional[str] = None) -> str:
    """
    Renders the report and, when a path is given, writes it atomically.

    Raises:
        IOFailure: If the report cannot be written
    """
    text = render_report(report)
    if path is None:
        return text
    try:
        with tempfile.NamedTemporaryFile("w", dir=os.path.dirname(os.path.abspath(path)),
                                         delete=False, encoding="utf-8") as tf:
            tf.write(text)
            temp_path = tf.name
        os.replace(temp_path, path)
    except Exception as e:
        raise IOFailure(f"Atomic write of report {path} failed: {e}") from e
    return text


def machine_block_text(text: str) -> str:
    """The machine-readable part of a rendered report."""
    if MACHINE_MARKER not in text:
        raise SchemaMismatch("report has no machine-readable block")
    return text.split(MACHINE_MARKER, 1)[1].strip()


def read_machine_block(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise IOFailure(f"cannot read report {path}: {e}") from e
    block = json.loads(machine_block_text(text))
    if block.get("schema") != REPORT_SCHEMA:
        raise SchemaMismatch(f"report schema {block.get('schema')!r}, expected {REPORT_SCHEMA!r}")
    return block
