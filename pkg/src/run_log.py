"""
Run Log - file-based operation/error logs and per-run session directories

Every CLI invocation records what it did under the results directory:

    <base_dir>/logs/operations_log.txt
    <base_dir>/logs/error_log.txt
    <base_dir>/sessions_index.json
    <base_dir>/<session_id>/          archived artifacts of one run
"""

import json
import os
import threading
from dataclasses import asdict, is_dataclass
from datetime import datetime
from typing import Any, Dict, Optional

import numpy as np


class RunLog:
    """Operation log, error log and session index for one results directory"""

    def __init__(self, base_dir: str = "sizing_results"):
        self.base_dir = base_dir
        self.logs_dir = os.path.join(base_dir, "logs")
        self.sessions_index_file = os.path.join(base_dir, "sessions_index.json")
        self.current_session_id: Optional[str] = None
        self._lock = threading.Lock()

        os.makedirs(self.logs_dir, exist_ok=True)
        self._setup_logging()
        self.sessions_index = self._load_sessions_index()

    def _setup_logging(self):
        self.log_file = os.path.join(self.logs_dir, "operations_log.txt")
        self.error_log_file = os.path.join(self.logs_dir, "error_log.txt")

        for log_file in [self.log_file, self.error_log_file]:
            if not os.path.exists(log_file):
                with open(log_file, "w", encoding="utf-8") as f:
                    f.write(f"Storage Sizing Run Log - Created {datetime.now().isoformat()}\n")
                    f.write("=" * 60 + "\n\n")

    def _load_sessions_index(self) -> Dict:
        if os.path.exists(self.sessions_index_file):
            try:
                with open(self.sessions_index_file, "r", encoding="utf-8") as f:
                    return json.load(f)
            except (json.JSONDecodeError, IOError):
                # corrupted index: start over rather than fail the run
                return {"sessions": {}, "created": datetime.now().isoformat()}
        return {"sessions": {}, "created": datetime.now().isoformat()}

    def _save_sessions_index(self):
        with open(self.sessions_index_file, "w", encoding="utf-8") as f:
            json.dump(self.sessions_index, f, indent=2, ensure_ascii=False)

    def log_operation(self, operation: str, details: str = ""):
        """Append a timestamped line to the operations log"""
        entry = f"[{datetime.now().isoformat()}] {operation}"
        if details:
            entry += f" - {details}"
        with self._lock, open(self.log_file, "a", encoding="utf-8") as f:
            f.write(entry + "\n")

    def log_error(self, error_type: str, details: str, context: Optional[Dict] = None):
        """Append a timestamped error block, truncating long context values"""
        entry = f"[{datetime.now().isoformat()}] ERROR: {error_type}\n"
        entry += f"Details: {details}\n"
        if context:
            entry += "Context:\n"
            for key, value in context.items():
                text = str(value)
                if len(text) > 1000:
                    text = text[:1000] + "... [TRUNCATED]"
                entry += f"  {key}: {text}\n"
        entry += "-" * 60 + "\n\n"
        with self._lock, open(self.error_log_file, "a", encoding="utf-8") as f:
            f.write(entry)

    def start_session(
        self,
        description: str = "",
        parameters: Optional[Dict] = None,
        session_id: Optional[str] = None,
    ) -> str:
        """Create a uniquely named session directory and register it"""
        if session_id is None:
            session_id = f"run_{datetime.now().strftime('%Y%m%d_%H%M%S')}"

        original = session_id
        counter = 1
        while session_id in self.sessions_index["sessions"]:
            session_id = f"{original}_{counter}"
            counter += 1

        session_dir = os.path.join(self.base_dir, session_id)
        os.makedirs(session_dir, exist_ok=True)

        now = datetime.now().isoformat()
        self.sessions_index["sessions"][session_id] = {
            "session_id": session_id,
            "created": now,
            "description": description,
            "parameters": to_serializable(parameters or {}),
            "status": "active",
            "directory": session_dir,
            "artifacts": [],
            "last_activity": now,
        }
        self._save_sessions_index()
        self.current_session_id = session_id
        self.log_operation("START_SESSION", f"{session_id} - {description}")
        return session_id

    def archive(self, session_id: str, name: str, text: str) -> str:
        """Store an emitted artifact in the session directory; returns its path"""
        if session_id not in self.sessions_index["sessions"]:
            raise KeyError(f"Session '{session_id}' not found")
        session = self.sessions_index["sessions"][session_id]
        path = os.path.join(session["directory"], name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        session["artifacts"].append(name)
        session["last_activity"] = datetime.now().isoformat()
        self._save_sessions_index()
        return path

    def complete_session(self, session_id: str, status: str = "completed", summary: Optional[Dict] = None):
        """Mark a session finished with a status and optional summary"""
        if session_id in self.sessions_index["sessions"]:
            session = self.sessions_index["sessions"][session_id]
            session["status"] = status
            session["completed"] = datetime.now().isoformat()
            if summary:
                session["summary"] = to_serializable(summary)
            self._save_sessions_index()


def to_serializable(data: Any) -> Any:
    """Recursively turn dataclasses, numpy values and tuples into JSON types"""
    if is_dataclass(data) and not isinstance(data, type):
        return to_serializable(asdict(data))
    if isinstance(data, dict):
        return {str(k): to_serializable(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [to_serializable(v) for v in data]
    if isinstance(data, np.ndarray):
        return to_serializable(data.tolist())
    if isinstance(data, np.generic):
        return data.item()
    if isinstance(data, complex):
        return [data.real, data.imag]
    if hasattr(data, "value") and hasattr(data, "name"):  # enums
        return data.value
    return data
