"""
Reading and writing of simulator outputs.

Outcome logs, metric tables, sweep tables, manifests and diagnostic table
dumps all go through this module so that formats stay in one place.
"""
# Standard library imports
import hashlib
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

# Third-party imports
import numpy as np
import pandas as pd
import yaml

# Application-specific imports
from config.constants import TRACE_ABSENT, TRACE_FIELD_SEPARATOR

logger = logging.getLogger(__name__)

FilePath = str
DirectoryPath = str

OUTCOME_COLUMNS = ["time_s", "user", "content", "region", "served_by", "peer"]
_OUTCOME_DTYPES = {"time_s": float, "user": np.int64, "content": np.int64, "region": np.int64,
                   "served_by": object, "peer": np.int64}
_OPTIONAL_COLUMNS = ("region", "peer")


class DataLoadError(Exception):
    """Exception raised for errors in the data loading process."""
    pass


def _ensure_parent(path: FilePath) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def _format_value(value: Any) -> str:
    if value is None or (isinstance(value, (float, np.floating)) and np.isnan(value)):
        return TRACE_ABSENT
    if isinstance(value, (int, np.integer)):
        return TRACE_ABSENT if value < 0 else str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return str(int(value)) if value.is_integer() else repr(value)
    return str(value)


def write_outcome_log(outcomes: pd.DataFrame, path: FilePath) -> None:
    """
    Write one line per request: `<time_s>,<user>,<content>,<region>,<d2d|server>,<peer|->`.

    Negative regions and missing peers are written as '-'.
    """
    _ensure_parent(path)
    frame = outcomes[OUTCOME_COLUMNS].copy()
    frame["time_s"] = frame["time_s"].map(_format_value)
    for column in _OPTIONAL_COLUMNS:
        frame[column] = frame[column].where(frame[column] >= 0).astype("Int64")
    frame.to_csv(path, sep=TRACE_FIELD_SEPARATOR, header=False, index=False,
                 na_rep=TRACE_ABSENT, lineterminator="\n")
    logger.info(f"Wrote outcome log: {path} ({len(frame)} requests)")


def _first_bad_line(mask: pd.Series) -> int:
    return int(np.flatnonzero(mask.to_numpy())[0]) + 1


def read_outcome_log(path: FilePath) -> pd.DataFrame:
    """
    Parse an outcome log written by `write_outcome_log`.

    Fields are read as text first so that '-' and a missing field stay apart;
    errors name the offending line.

    Raises:
        DataLoadError: If the file is missing or a line is malformed
    """
    try:
        raw = pd.read_csv(path, sep=TRACE_FIELD_SEPARATOR, header=None, dtype=str,
                          keep_default_na=False, skip_blank_lines=False)
    except FileNotFoundError:
        error_msg = f"Outcome log not found: {path}"
        logger.error(error_msg)
        raise DataLoadError(error_msg)
    except pd.errors.EmptyDataError:
        logger.info(f"Read outcome log: {path} (0 requests)")
        return pd.DataFrame({name: pd.Series(dtype=dtype) for name, dtype in _OUTCOME_DTYPES.items()})
    except pd.errors.ParserError as e:
        error_msg = f"Error parsing outcome log {path}: {e}"
        logger.error(error_msg)
        raise DataLoadError(error_msg)

    expected = len(OUTCOME_COLUMNS)
    if raw.shape[1] != expected:
        raise DataLoadError(f"{path}:1: expected {expected} fields, got {raw.shape[1]}")
    short = raw.isna().any(axis=1)
    if short.any():
        line = _first_bad_line(short)
        got = int(raw.iloc[line - 1].notna().sum())
        raise DataLoadError(f"{path}:{line}: expected {expected} fields, got {got}")
    raw.columns = OUTCOME_COLUMNS

    unknown = ~raw["served_by"].isin(["d2d", "server"])
    if unknown.any():
        line = _first_bad_line(unknown)
        raise DataLoadError(f"{path}:{line}: unknown server kind '{raw['served_by'].iloc[line - 1]}'")

    frame = pd.DataFrame({"served_by": raw["served_by"]})
    for column in ("time_s", "user", "content", "region", "peer"):
        text = raw[column]
        if column in _OPTIONAL_COLUMNS:
            text = text.replace(TRACE_ABSENT, "-1")
        values = pd.to_numeric(text, errors="coerce")
        invalid = values.isna()
        if column != "time_s":
            invalid |= values.notna() & (values != values.round())
        if invalid.any():
            line = _first_bad_line(invalid)
            raise DataLoadError(f"{path}:{line}: invalid {column} '{raw[column].iloc[line - 1]}'")
        frame[column] = values
    logger.info(f"Read outcome log: {path} ({len(frame)} requests)")
    return frame[OUTCOME_COLUMNS].astype(_OUTCOME_DTYPES)


def write_frame_csv(frame: pd.DataFrame, path: FilePath, float_format: Optional[str] = None) -> None:
    _ensure_parent(path)
    frame.to_csv(path, index=False, float_format=float_format)
    logger.info(f"Wrote table: {path} ({len(frame)} rows)")


def write_long_format(frame: pd.DataFrame, path: FilePath, key_columns: Sequence[str],
                      metric_columns: Sequence[str]) -> None:
    """
    Whitespace-separated `key... metric value` lines for gnuplot, one metric per line.
    """
    _ensure_parent(path)
    with open(path, 'w') as f:
        f.write("# " + " ".join(list(key_columns) + ["metric", "value"]) + "\n")
        for _, row in frame.iterrows():
            keys = " ".join(str(row[k]) for k in key_columns)
            for metric in metric_columns:
                f.write(f"{keys} {metric} {_format_value(row[metric])}\n")
    logger.info(f"Wrote long-format table: {path}")


def write_yaml(data: Dict[str, Any], path: FilePath) -> None:
    _ensure_parent(path)
    with open(path, 'w') as f:
        yaml.safe_dump(data, f, sort_keys=False, default_flow_style=False)
    logger.info(f"Wrote {path}")


def file_digest(path: FilePath) -> str:
    """sha256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def directory_digests(paths: Iterable[FilePath]) -> Dict[str, str]:
    """File name (relative to its directory) to sha256, for existing files."""
    return {os.path.basename(p): file_digest(p) for p in paths if os.path.exists(p)}


def dump_tables(tables_dir: DirectoryPath, slot: int, I: np.ndarray, P: np.ndarray,
                contents: np.ndarray, A: np.ndarray, Q: np.ndarray) -> List[FilePath]:
    """
    Write the influence, preference, popularity and mobility tables of one slot.

    I is written sparsely (nonzero entries), the other tables as wide CSVs.
    """
    os.makedirs(tables_dir, exist_ok=True)
    paths: List[FilePath] = []

    src, dst = np.nonzero(I)
    influence = pd.DataFrame({"u": src, "v": dst, "I": I[src, dst]})
    region_columns = [f"r{r}" for r in range(P.shape[1])]
    preference = pd.DataFrame(P, columns=region_columns)
    preference.insert(0, "user", np.arange(P.shape[0]))
    popularity = pd.DataFrame(A, columns=region_columns[:A.shape[1]] if A.size else region_columns)
    popularity.insert(0, "content", contents)
    mobility = pd.DataFrame(Q, columns=region_columns[:Q.shape[1]])
    mobility.insert(0, "user", np.arange(Q.shape[0]))

    for name, frame in (("influence", influence), ("preference", preference),
                        ("popularity", popularity), ("mobility", mobility)):
        path = os.path.join(tables_dir, f"{name}_slot{slot}.csv")
        frame.to_csv(path, index=False)
        paths.append(path)
    logger.info(f"Dumped model tables for slot {slot} to {tables_dir}")
    return paths
