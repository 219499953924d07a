import hashlib
import json
import math
from collections.abc import Iterable
from datetime import datetime
from enum import Enum
from pathlib import Path
from statistics import mean, pstdev
from typing import Any

import numpy as np
import pandas as pd

from src.config.settings import get_settings
from src.schemas.scenario import RunManifest
from src.solvers.fields import SpaceTimeField


def summarize_samples(values: Iterable[float]) -> dict[str, Any]:
    ordered = sorted(float(v) for v in values)
    n = len(ordered)
    if n == 0:
        return {"count": 0, "mean": None, "std_dev": None, "min": None, "p25": None, "p50": None, "p75": None, "max": None}
    return {
        "count": n,
        "mean": mean(ordered),
        "std_dev": pstdev(ordered) if n > 1 else 0.0,
        "min": ordered[0],
        "p25": ordered[max(0, int(0.25 * (n - 1)))],
        "p50": ordered[max(0, int(0.50 * (n - 1)))],
        "p75": ordered[max(0, int(0.75 * (n - 1)))],
        "max": ordered[-1],
    }


def _normalize(value: Any, digits: int) -> Any:
    if isinstance(value, dict):
        return {str(k): _normalize(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return [_normalize(v, digits) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        # round-trips through repr at the configured significant digits
        return float(format(value, f".{digits}g"))
    if value is None or isinstance(value, str):
        return value
    return str(value)


def dumps_report(payload: Any) -> str:
    """Deterministic JSON: sorted keys, fixed float precision, NaN/Inf as null."""
    digits = get_settings().float_digits
    return json.dumps(_normalize(payload, digits), indent=2, sort_keys=True, allow_nan=False)


def write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(payload) + "\n", encoding="utf-8")
    return path


def write_field_csv(path: Path, field: SpaceTimeField, name: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    digits = get_settings().float_digits
    field.to_frame(name).to_csv(path, index=False, float_format=f"%.{digits}g")
    return path


def write_table_csv(path: Path, rows: list[dict[str, Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    digits = get_settings().float_digits
    pd.DataFrame(rows).to_csv(path, index=False, float_format=f"%.{digits}g")
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_manifest(
    subcommand: str,
    scenario_path: Path,
    started_at: datetime,
    finished_at: datetime,
    exit_code: int,
    outputs: list[Path],
    seed: int | None = None,
    tolerances: dict[str, float] | None = None,
) -> RunManifest:
    return RunManifest(
        schema_version=get_settings().schema_version,
        subcommand=subcommand,
        scenario_path=str(scenario_path),
        scenario_sha256=sha256_file(scenario_path),
        seed=seed,
        tolerances=tolerances or {},
        started_at=started_at,
        finished_at=finished_at,
        exit_code=exit_code,
        outputs=sorted(p.name for p in outputs),
    )
