"""
Utilities shared by the CLI and the experiments:
- Console colours and logging setup.
- Output-directory preparation and the run manifest, updated through a
  retrying atomic read-modify-write (several subcommands may share one
  output directory).
- Seed streams and the worker fan-out for independent rollouts.
- Small JSON/CSV writers and display helpers.
"""

import json
import logging
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd
import psutil

MANIFEST_NAME = "manifest.json"

T = TypeVar("T")
R = TypeVar("R")


# ANSI color helpers for console output (kept short)
class Colors:
    RESET = "\033[0m"
    BOLD = "\033[1m"
    BLUE = "\033[34m"
    CYAN = "\033[36m"
    YELLOW = "\033[33m"
    RED = "\033[31m"
    BG_RED = "\033[41m"
    BG_GREEN = "\033[42m"


class ColorFormatter(logging.Formatter):
    LEVEL_COLORS = {
        logging.DEBUG: Colors.CYAN,
        logging.WARNING: Colors.YELLOW,
        logging.ERROR: Colors.RED,
        logging.CRITICAL: Colors.BG_RED,
    }

    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        color = self.LEVEL_COLORS.get(record.levelno)
        return f"{color}{text}{Colors.RESET}" if color else text


def setup_logging(level: Optional[str] = None) -> None:
    """
    Install one stream handler on the root logger. Level: argument, else
    GUIDANCE_LOG_LEVEL, else INFO. Colours only when stderr is a terminal.
    """
    level = (level or os.environ.get("GUIDANCE_LOG_LEVEL") or "INFO").upper()
    handler = logging.StreamHandler()
    fmt = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
    handler.setFormatter(ColorFormatter(fmt) if sys.stderr.isatty() else logging.Formatter(fmt))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)


def default_workers() -> int:
    env = os.environ.get("GUIDANCE_WORKERS")
    if env:
        return max(1, int(env))
    return psutil.cpu_count(logical=False) or 1


def ensure_output_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_json(path: str, payload: Dict[str, Any]) -> None:
    """Write JSON atomically (temp file in the same directory, then replace)."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def read_json(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(path: str, frame: pd.DataFrame) -> str:
    frame.to_csv(path, index=False)
    return path


# ---------- run manifest ----------

def atomic_update_manifest(
    out_dir: str,
    patch_fn: Callable[[Dict[str, Any]], Dict[str, Any]],
    max_retries: int = 5,
    backoff_factor: float = 0.02,
) -> Dict[str, Any]:
    """
    Read-modify-write of manifest.json that retries on transient errors
    (a concurrent writer replacing the file mid-read, for example).
    """
    path = os.path.join(out_dir, MANIFEST_NAME)
    last_exception = None
    for attempt in range(1, max_retries + 1):
        try:
            latest = read_json(path) if os.path.exists(path) else {"runs": []}
            new_state = patch_fn(dict(latest))
            if not isinstance(new_state, dict):
                raise ValueError("patch_fn must return dict")
            write_json(path, new_state)
            return new_state
        except (OSError, ValueError) as exc:
            last_exception = exc
            time.sleep(backoff_factor * attempt)
    raise RuntimeError(f"atomic_update_manifest failed after {max_retries} attempts: {last_exception}")


def package_versions() -> Dict[str, str]:
    import torch

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "torch": torch.__version__,
    }


def record_run(out_dir: str, entry: Dict[str, Any]) -> Dict[str, Any]:
    """Append one subcommand entry (config hash, seeds, outputs, ...) to the manifest."""
    if "timestamp" not in entry:
        entry = dict(entry)
        entry["timestamp"] = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    entry.setdefault("versions", package_versions())
    entry.setdefault("host", {"platform": platform.platform(), "physical_cpus": psutil.cpu_count(logical=False)})

    def _entry_id(e):
        return f"{e.get('command', '')}|{e.get('timestamp', '')}|{e.get('config_hash', '')}"

    def patch_fn(latest):
        runs = list(latest.get("runs", []))
        if _entry_id(entry) not in {_entry_id(e) for e in runs if isinstance(e, dict)}:
            runs.append(entry)
        latest["runs"] = runs
        return latest

    return atomic_update_manifest(out_dir, patch_fn)


# ---------- seeds and fan-out ----------

def spawn_seeds(seed: int, n: int) -> List[np.random.SeedSequence]:
    """n independent per-run seed streams derived from one master seed."""
    return np.random.SeedSequence(seed).spawn(n)


def fan_out(fn: Callable[[T], R], jobs: Sequence[T], workers: int = 1) -> List[R]:
    """
    Map fn over jobs, in a process pool when workers > 1. Results keep job
    order, so output does not depend on the worker count.
    """
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# ---------- display ----------

def display_summary(title: str, rows: Dict[str, Any]) -> None:
    """Print a small key/value block to stdout."""
    print(f"\n{'-' * 10} {Colors.BOLD}{title}{Colors.RESET} {'-' * 10}")
    for key, value in rows.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key}: {value}")
    print("-" * (22 + len(title)))


def status_banner(ok: bool, message: str) -> str:
    color = Colors.BG_GREEN if ok else Colors.BG_RED
    return f"{color}{Colors.BOLD} {'PASS' if ok else 'FAIL'} {Colors.RESET} {message}"
