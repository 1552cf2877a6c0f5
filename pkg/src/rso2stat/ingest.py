"""Session ingestion: CSV parsing, detection-limit flagging, pre/post split."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

DEFAULT_DETECTION_LIMIT = 15.0
CSV_HEADER = ("time_s", "rso2")


class IngestError(ValueError):
    """Raised for malformed session input.

    ``line`` is the 1-based line number in the CSV text when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StructureError(ValueError):
    """Raised when a parsed session cannot be analyzed (e.g. empty segment)."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Rso2Series:
    """Oxygenation values on a strictly increasing time grid.

    Values are stored after clamping, so ``values >= detection_limit`` always
    holds and ``censored`` marks the points sitting at the limit.
    """

    times: np.ndarray
    values: np.ndarray
    censored: np.ndarray
    detection_limit: float = DEFAULT_DETECTION_LIMIT

    def __post_init__(self):
        times = _frozen(self.times)
        values = _frozen(self.values)
        censored = np.array(self.censored, dtype=bool, copy=True)
        censored.setflags(write=False)
        if times.ndim != 1 or times.shape != values.shape or times.shape != censored.shape:
            raise ValueError("times, values and censored must be 1-D and of equal length")
        if times.size and (np.any(~np.isfinite(times)) or np.any(~np.isfinite(values))):
            raise ValueError("times and values must be finite")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if times.size and times[0] < 0:
            raise ValueError("times must be non-negative")
        if np.any(values < self.detection_limit):
            raise ValueError("values below the detection limit must be clamped first")
        if not np.array_equal(censored, values <= self.detection_limit):
            raise ValueError("censored flags must mark exactly the values at the limit")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "censored", censored)
        object.__setattr__(self, "detection_limit", float(self.detection_limit))

    @classmethod
    def from_raw(cls, times, values, detection_limit: float = DEFAULT_DETECTION_LIMIT) -> "Rso2Series":
        """Build a series from raw readings, clamping anything below the limit."""
        values = np.asarray(values, dtype=float)
        clamped = np.maximum(values, detection_limit)
        return cls(times, clamped, clamped <= detection_limit, detection_limit)

    def __len__(self) -> int:
        return self.times.size

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])


@dataclass(frozen=True)
class SessionMeta:
    subject_id: str
    transfusion_start_s: float
    transfusion_end_s: float
    detection_limit: float = DEFAULT_DETECTION_LIMIT

    def __post_init__(self):
        if not self.transfusion_end_s >= self.transfusion_start_s:
            raise StructureError("transfusion_end_s must not precede transfusion_start_s")
        if not np.isfinite(self.detection_limit) or self.detection_limit <= 0:
            raise StructureError("detection_limit must be a positive number")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "SessionMeta":
        missing = {"subject_id", "transfusion_start_s", "transfusion_end_s"} - set(data)
        if missing:
            raise StructureError(f"metadata missing keys: {sorted(missing)}")
        return cls(
            subject_id=str(data["subject_id"]),
            transfusion_start_s=float(data["transfusion_start_s"]),
            transfusion_end_s=float(data["transfusion_end_s"]),
            detection_limit=float(data.get("detection_limit", DEFAULT_DETECTION_LIMIT)),
        )

    @classmethod
    def from_json(cls, text: str) -> "SessionMeta":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise StructureError(f"metadata is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise StructureError("metadata must be a JSON object")
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "transfusion_start_s": self.transfusion_start_s,
            "transfusion_end_s": self.transfusion_end_s,
            "detection_limit": self.detection_limit,
        }


@dataclass(frozen=True)
class Session:
    subject_id: str
    pre: Rso2Series
    post: Rso2Series
    transfusion_window: tuple[float, float]
    n_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        start, end = self.transfusion_window
        if len(self.pre) == 0 or len(self.post) == 0:
            raise StructureError("both pre- and post-transfusion segments must be non-empty")
        if self.pre.times[-1] >= start:
            raise StructureError("pre-transfusion samples must precede the transfusion window")
        if self.post.times[0] <= end:
            raise StructureError("post-transfusion samples must follow the transfusion window")


def read_csv_rows(csv_text: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse ``time_s,rso2`` CSV text into sorted time and value arrays."""
    reader = csv.reader(io.StringIO(csv_text))
    rows = []
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if not header_seen:
            if tuple(cell.strip() for cell in row) != CSV_HEADER:
                raise IngestError(f"expected header 'time_s,rso2', got {','.join(row)!r}", lineno)
            header_seen = True
            continue
        if len(row) != 2:
            raise IngestError(f"expected 2 fields, got {len(row)}", lineno)
        try:
            t, y = float(row[0]), float(row[1])
        except ValueError:
            raise IngestError(f"non-numeric field in {','.join(row)!r}", lineno) from None
        if not (np.isfinite(t) and np.isfinite(y)):
            raise IngestError("non-finite value", lineno)
        if t < 0:
            raise IngestError("negative timestamp", lineno)
        rows.append((t, y, lineno))
    if not header_seen:
        raise IngestError("empty file: missing header")

    rows.sort(key=lambda r: r[0])
    for (t0, _, l0), (t1, _, l1) in zip(rows, rows[1:]):
        if t0 == t1:
            raise IngestError(f"duplicate timestamp {t1!r} (also on line {l0})", l1)
    times = np.array([r[0] for r in rows], dtype=float)
    values = np.array([r[1] for r in rows], dtype=float)
    return times, values


def parse_session(csv_text: str, meta: SessionMeta | Mapping) -> Session:
    """Parse one session file and split it around the transfusion window.

    Rows whose time falls inside ``[transfusion_start_s, transfusion_end_s]``
    are dropped; values below the detection limit are clamped to it and flagged.
    """
    if not isinstance(meta, SessionMeta):
        meta = SessionMeta.from_mapping(meta)
    times, values = read_csv_rows(csv_text)
    start, end = meta.transfusion_start_s, meta.transfusion_end_s
    pre_mask = times < start
    post_mask = times > end
    n_dropped = int(times.size - pre_mask.sum() - post_mask.sum())
    if not pre_mask.any():
        raise StructureError(f"{meta.subject_id}: no samples before the transfusion window")
    if not post_mask.any():
        raise StructureError(f"{meta.subject_id}: no samples after the transfusion window")
    limit = meta.detection_limit
    return Session(
        subject_id=meta.subject_id,
        pre=Rso2Series.from_raw(times[pre_mask], values[pre_mask], limit),
        post=Rso2Series.from_raw(times[post_mask], values[post_mask], limit),
        transfusion_window=(start, end),
        n_dropped=n_dropped,
    )


def load_session(csv_path, meta_path) -> Session:
    with open(meta_path, encoding="utf-8") as fh:
        meta = SessionMeta.from_json(fh.read())
    with open(csv_path, encoding="utf-8") as fh:
        return parse_session(fh.read(), meta)


def serialize_series(*series: Rso2Series) -> str:
    """Write series back to ``time_s,rso2`` CSV; ``repr`` keeps floats exact."""
    out = io.StringIO()
    out.write(",".join(CSV_HEADER) + "\n")
    for s in series:
        for t, y in zip(s.times, s.values):
            out.write(f"{float(t)!r},{float(y)!r}\n")
    return out.getvalue()


def serialize_session(session: Session) -> str:
    return serialize_series(session.pre, session.post)


def censoring_fraction(series: Rso2Series) -> float:
    """Fraction of points sitting at the detection limit."""
    if len(series) == 0:
        raise ValueError("censoring fraction of an empty series is undefined")
    return float(np.count_nonzero(series.censored)) / len(series)
