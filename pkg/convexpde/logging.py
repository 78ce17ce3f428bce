import json
import logging
import os
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional

from convexpde.errors import IOFailure

logger = logging.getLogger(__name__)


class RunLog:
    """
    Append-only JSON-lines event log for convexpde runs.

    Each entry is one JSON object per line in a `.runlog` file written next to the run report.
    Entries carry no wall-clock time unless `timestamps=True`, so seeded runs produce
    byte-identical logs.

    Notes:
    - A failure to log never aborts a run; it goes to `on_log_error` or a logger warning
    - `.entries()` loads the whole log into memory
    """

    def __init__(self, log_path: str, on_log_error: Optional[Callable[[Exception], None]] = None,
                 timestamps: bool = False):
        """
        Args:
            log_path (str): File the log is appended to (created if missing).
            on_log_error (Callable[[Exception], None], optional):
                Called with the exception when an entry cannot be written.
                If not provided, a fallback logger.warning is used.
            timestamps (bool): Add an ISO-8601 UTC "at" field to every entry.
        """
        self.log_path = log_path
        self.on_log_error = on_log_error
        self.timestamps = timestamps
        self._seq = 0

        if not os.path.exists(self.log_path):
            with open(self.log_path, "w", encoding="utf-8"):
                pass
        else:
            self._seq = len(self.entries())

    def log(self, event: str, stage: str = "", meta: Optional[Dict] = None):
        """
        Records an entry.

        Args:
            event (str): Event type (e.g. "invariance", "stage", "level", "dump")
            stage (str): Where in the run it happened (e.g. "t=1,h=0.02", "level 3")
            meta (dict, optional): JSON-serializable details
        """
        entry = {"seq": self._seq, "event": event, "stage": stage, "meta": meta or {}}
        if self.timestamps:
            entry["at"] = datetime.now(timezone.utc).isoformat()

        try:
            line = json.dumps(entry, ensure_ascii=False, sort_keys=True)
            with open(self.log_path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
            self._seq += 1
        except Exception as e:
            if self.on_log_error:
                self.on_log_error(e)
            else:
                logger.warning("RunLog failed to log event %s: %s", event, e)

    def entries(self) -> List[Dict]:
        """
        Returns all entries.

        Raises:
            IOFailure: If the log cannot be read or a line is not valid JSON
        """
        entries = []
        if not os.path.exists(self.log_path):
            return entries
        try:
            with open(self.log_path, "r", encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        entries.append(json.loads(line))
        except (OSError, json.JSONDecodeError) as e:
            raise IOFailure(f"Failed to read run log {self.log_path}.") from e
        return entries

    def tail(self, n: int = 10) -> List[Dict]:
        return self.entries()[-n:]

    def export_json(self, filepath: str):
        """Writes all entries to a JSON array file."""
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(self.entries(), f, indent=2)
