"""
Artifact writers: JSON documents and CSV tables with a config echo header.

Every file is written to a temporary sibling and renamed into place, so a
reader never sees a partial artifact.
"""

import io
import json
import logging
import math
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from Utils import constants

logger = logging.getLogger(__name__)


def to_plain(value: Any) -> Any:
    """
    Convert a result tree into JSON-safe Python values.

    Non-finite floats become None, complex numbers become {"re", "im"} and
    numpy scalars/arrays become Python numbers/lists.
    """
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": to_plain(value.real), "im": to_plain(value.imag)}
    return value


class ExportService:
    """Writes run artifacts in the CLI's two formats."""

    def __init__(self, timestamp: bool = False):
        self.timestamp = timestamp

    def _generated_at(self) -> str:
        return datetime.now(timezone.utc).isoformat(timespec="seconds")

    def json_document(self, config: Dict[str, Any], result: Dict[str, Any]) -> str:
        """Serialize one artifact; identical inputs give identical text."""
        document = {
            "artifact": constants.ARTIFACT_NAME,
            "version": constants.ARTIFACT_VERSION,
            "config": to_plain(config),
            "result": to_plain(result),
        }
        if self.timestamp:
            document["generated_at"] = self._generated_at()
        return json.dumps(document, sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"

    def csv_document(self, config: Dict[str, Any], frame: pd.DataFrame,
                     columns: Optional[List[str]] = None) -> str:
        """
        Serialize a table with the two '#' header lines.

        Args:
            config: Effective configuration to echo
            frame: Table body
            columns: Column order (default: frame order); missing columns are an error

        Returns:
            CSV text
        """
        if columns is not None:
            missing = [c for c in columns if c not in frame.columns]
            if missing:
                raise KeyError(f"Table lacks columns {missing}")
            frame = frame[columns]
        config_line = json.dumps(to_plain(config), sort_keys=True, allow_nan=False, ensure_ascii=False)
        buffer = io.StringIO()
        buffer.write(f"# {constants.ARTIFACT_NAME} {constants.ARTIFACT_VERSION}\n")
        buffer.write(f"# config: {config_line}\n")
        if self.timestamp:
            buffer.write(f"# generated_at: {self._generated_at()}\n")
        frame.to_csv(buffer, index=False, float_format=constants.CSV_FLOAT_FORMAT, lineterminator="\n")
        return buffer.getvalue()

    @staticmethod
    def write_atomic(path: str, text: str) -> Path:
        """Write text to a temporary file next to path, then rename it over path."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(tmp_name, target)
        except Exception:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
        logger.info(f"✅ Wrote {target}")
        return target

    def write_csv(self, path: str, config: Dict[str, Any], frame: pd.DataFrame,
                  columns: Optional[List[str]] = None) -> Path:
        return self.write_atomic(path, self.csv_document(config, frame, columns))


# Default service instance
export_service = ExportService()
