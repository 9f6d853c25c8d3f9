"""File-backed store of run records: learning curves plus final scores.

A store is a directory holding ``runs.jsonl`` (one record per line,
append-only) and ``index.json`` (run id -> line number, rewritten by
write-temp-then-rename). The index is a cache; the JSONL file is the truth.

Record fields, in the order they are serialized:

``run_id``            sha256 hex of the canonical ``[algo, env_id, seed, curve]``
``algo``              agent name, e.g. ``"ppo"``
``env_id``            environment id, e.g. ``"pole-v0"``
``seed``              master seed of the run
``curve``             ``[[global_step, score], ...]`` with strictly increasing steps
``final_score``       score of the last curve point
``created_at``        ISO-8601 UTC timestamp; informational only
``framework_version`` version of the package that produced the run
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .evaluation import ScoreMatrix

RUNS_FILE = "runs.jsonl"
INDEX_FILE = "index.json"
FIELDS = ("run_id", "algo", "env_id", "seed", "curve", "final_score", "created_at", "framework_version")


class HubError(Exception):
    pass


class NoStoreError(HubError):
    pass


class StoreParseError(HubError):
    def __init__(self, path, line, reason):
        self.path, self.line, self.reason = str(path), int(line), reason
        super().__init__(f"{path}: parse failure at line {line}: {reason}")


class RecordValidationError(HubError, ValueError):
    def __init__(self, field, reason):
        self.field = field
        super().__init__(f"invalid record field {field!r}: {reason}")


class ImbalanceError(HubError, ValueError):
    pass


def _version() -> str:
    from . import __version__

    return __version__


def run_id_for(algo: str, env_id: str, seed: int, curve) -> str:
    canon = [str(algo), str(env_id), int(seed), [[int(s), float(v)] for s, v in curve]]
    text = json.dumps(canon, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    algo: str
    env_id: str
    seed: int
    curve: tuple[tuple[int, float], ...]
    final_score: float
    created_at: str
    framework_version: str

    @classmethod
    def create(cls, algo, env_id, seed, curve, created_at=None, framework_version=None) -> "RunRecord":
        curve = tuple((int(s), float(v)) for s, v in curve)
        if created_at is None:
            created_at = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        bad = next((k for k, (_, v) in enumerate(curve) if not math.isfinite(v)), None)
        if bad is not None:
            raise RecordValidationError("curve", f"point {bad}: score must be a finite number")
        rec = cls(
            run_id=run_id_for(algo, env_id, seed, curve),
            algo=str(algo),
            env_id=str(env_id),
            seed=int(seed),
            curve=curve,
            final_score=curve[-1][1] if curve else math.nan,
            created_at=str(created_at),
            framework_version=framework_version if framework_version is not None else _version(),
        )
        rec.validate()
        return rec

    def validate(self) -> None:
        for name in ("algo", "env_id"):
            if not isinstance(getattr(self, name), str) or not getattr(self, name):
                raise RecordValidationError(name, "must be a nonempty string")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise RecordValidationError("seed", "must be a nonnegative integer")
        if not self.curve:
            raise RecordValidationError("curve", "must be nonempty")
        steps = [s for s, _ in self.curve]
        for k, (s, v) in enumerate(self.curve):
            if isinstance(s, bool) or not isinstance(s, int) or s < 0:
                raise RecordValidationError("curve", f"point {k}: step must be a nonnegative integer")
            if not isinstance(v, float) or not math.isfinite(v):
                raise RecordValidationError("curve", f"point {k}: score must be a finite number")
        bad = next((k for k in range(1, len(steps)) if steps[k] <= steps[k - 1]), None)
        if bad is not None:
            raise RecordValidationError("curve", f"steps must strictly increase (point {bad}: {steps[bad - 1]} -> {steps[bad]})")
        if self.final_score != self.curve[-1][1]:
            raise RecordValidationError("final_score", f"{self.final_score!r} != last curve score {self.curve[-1][1]!r}")
        expect = run_id_for(self.algo, self.env_id, self.seed, self.curve)
        if self.run_id != expect:
            raise RecordValidationError("run_id", f"does not match content hash {expect}")
        if not isinstance(self.created_at, str):
            raise RecordValidationError("created_at", "must be a string")
        if not isinstance(self.framework_version, str):
            raise RecordValidationError("framework_version", "must be a string")

    def to_json(self) -> str:
        d = {
            "run_id": self.run_id,
            "algo": self.algo,
            "env_id": self.env_id,
            "seed": self.seed,
            "curve": [[s, v] for s, v in self.curve],
            "final_score": self.final_score,
            "created_at": self.created_at,
            "framework_version": self.framework_version,
        }
        return json.dumps(d, separators=(",", ":"), allow_nan=False, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        if not isinstance(d, dict):
            raise RecordValidationError("record", "must be a JSON object")
        missing = [f for f in FIELDS if f not in d]
        if missing:
            raise RecordValidationError(missing[0], "missing")
        extra = sorted(set(d) - set(FIELDS))
        if extra:
            raise RecordValidationError(extra[0], "unknown field")
        curve = d["curve"]
        if not isinstance(curve, list) or not all(isinstance(p, list) and len(p) == 2 for p in curve):
            raise RecordValidationError("curve", "must be a list of [step, score] pairs")
        pts = []
        for k, (s, v) in enumerate(curve):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise RecordValidationError("curve", f"point {k}: score must be a number")
            pts.append((s, float(v)))
        final = d["final_score"]
        if isinstance(final, bool) or not isinstance(final, (int, float)):
            raise RecordValidationError("final_score", "must be a number")
        rec = cls(d["run_id"], d["algo"], d["env_id"], d["seed"], tuple(pts), float(final), d["created_at"],
                  d["framework_version"])
        rec.validate()
        return rec


# --------------------------------------------------------------------------
# store access


def _runs_path(store_dir) -> Path:
    return Path(store_dir) / RUNS_FILE


def _committed_text(path: Path) -> str:
    # a record is committed once its newline is on disk; a torn tail is not
    text = path.read_text(encoding="utf-8")
    cut = text.rfind("\n") + 1
    return text[:cut]


def _read_lines(store_dir) -> list[RunRecord]:
    path = _runs_path(store_dir)
    if not path.exists():
        raise NoStoreError(f"no store at {store_dir} (missing {RUNS_FILE})")
    return parse_jsonl(_committed_text(path), path)


def parse_jsonl(text: str, source="<jsonl>") -> list[RunRecord]:
    """Parse a JSONL record stream; errors name the 1-based line."""
    records = []
    for k, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StoreParseError(source, k, exc.msg) from None
        try:
            records.append(RunRecord.from_dict(d))
        except RecordValidationError as exc:
            raise StoreParseError(source, k, str(exc)) from None
    return records


def _write_index(store_dir, records) -> None:
    index = {r.run_id: i for i, r in enumerate(records)}
    store_dir = Path(store_dir)
    fd, tmp = tempfile.mkstemp(prefix=".index-", dir=store_dir)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(index, fh, sort_keys=True, separators=(",", ":"))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, store_dir / INDEX_FILE)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def init_store(store_dir) -> Path:
    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    path = _runs_path(store_dir)
    if not path.exists():
        path.touch()
        _write_index(store_dir, [])
    return store_dir


def ingest_runs(store_dir, records) -> list[str]:
    """Append records not already present; returns their run ids in order."""
    store_dir = init_store(store_dir)
    existing = _read_lines(store_dir)
    seen = {r.run_id for r in existing}
    new = []
    ids = []
    for rec in records:
        rec.validate()
        ids.append(rec.run_id)
        if rec.run_id not in seen:
            seen.add(rec.run_id)
            new.append(rec)
    if new:
        path = _runs_path(store_dir)
        committed = len(_committed_text(path).encode("utf-8"))
        if path.stat().st_size != committed:
            os.truncate(path, committed)
        with open(path, "a", encoding="utf-8") as fh:
            for rec in new:
                fh.write(rec.to_json() + "\n")
                fh.flush()
            os.fsync(fh.fileno())
        _write_index(store_dir, existing + new)
    return ids


def ingest_run(store_dir, record: RunRecord) -> str:
    return ingest_runs(store_dir, [record])[0]


def all_records(store_dir) -> list[RunRecord]:
    """Records in store (insertion) order."""
    return _read_lines(store_dir)


def query(store_dir, algo: str | None = None, env_id: str | None = None, seed: int | None = None,
          run_id: str | None = None) -> list[RunRecord]:
    """Records matching every given key, sorted by (algo, env_id, seed)."""
    out = [
        r
        for r in _read_lines(store_dir)
        if (algo is None or r.algo == algo)
        and (env_id is None or r.env_id == env_id)
        and (seed is None or r.seed == int(seed))
        and (run_id is None or r.run_id == run_id)
    ]
    return sorted(out, key=lambda r: (r.algo, r.env_id, r.seed, r.run_id))


def score_at(record: RunRecord, at_step: int | None) -> float:
    """Step-function reading of the curve: last point at or before ``at_step``."""
    if at_step is None:
        return record.final_score
    steps = np.array([s for s, _ in record.curve])
    k = int(np.searchsorted(steps, at_step, side="right")) - 1
    if k < 0:
        raise HubError(f"run {record.run_id[:12]} (seed {record.seed}) has no point at or before step {at_step}")
    return record.curve[k][1]


def to_score_matrix(store_dir, algo: str, env_ids, at_step: int | None = None,
                    normalize: dict | None = None) -> ScoreMatrix:
    """Runs x envs matrix for ``algo``; column ``e`` lists runs sorted by seed.

    ``normalize`` maps env id -> (low, high) for per-task min-max scaling.
    """
    env_ids = list(env_ids)
    if not env_ids:
        raise HubError("no env ids given")
    per_env = {e: query(store_dir, algo=algo, env_id=e) for e in env_ids}
    counts = {e: len(v) for e, v in per_env.items()}
    empty = [e for e, c in counts.items() if c == 0]
    if empty:
        raise ImbalanceError(f"no runs for algo {algo!r} on {', '.join(empty)}")
    if len(set(counts.values())) > 1:
        detail = ", ".join(f"{e}: {c}" for e, c in counts.items())
        raise ImbalanceError(f"unequal run counts for algo {algo!r} ({detail})")
    errors = []
    cols = []
    for e in env_ids:
        col = []
        for r in per_env[e]:
            try:
                col.append(score_at(r, at_step))
            except HubError as exc:
                errors.append(f"{e}: {exc}")
        cols.append(col)
    if errors:
        raise HubError("; ".join(errors))
    scores = np.array(cols, dtype=np.float64).T
    if normalize:
        for j, e in enumerate(env_ids):
            if e in normalize:
                lo, hi = normalize[e]
                if hi == lo:
                    raise HubError(f"normalization range for {e} is empty")
                scores[:, j] = (scores[:, j] - lo) / (hi - lo)
    n = scores.shape[0]
    return ScoreMatrix(scores, env_ids, [f"run{i}" for i in range(n)])


# --------------------------------------------------------------------------
# export / import


def export_jsonl(store_dir) -> str:
    return "".join(r.to_json() + "\n" for r in _read_lines(store_dir))


CSV_HEADER = ("run_id", "algo", "env_id", "seed", "step", "score")


def export_csv(store_dir) -> str:
    """Long format, one row per curve point."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in _read_lines(store_dir):
        for s, v in r.curve:
            w.writerow([r.run_id, r.algo, r.env_id, r.seed, s, repr(v)])
    return buf.getvalue()


def parse_csv(text: str, created_at=None) -> list[RunRecord]:
    """Rebuild records from the long CSV; timestamps are not carried."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise StoreParseError("<csv>", 1, f"header must be {','.join(CSV_HEADER)}")
    groups: dict[str, list] = {}
    for k, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise StoreParseError("<csv>", k, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
        rid, algo, env_id, seed, step, score = row
        try:
            groups.setdefault(rid, [algo, env_id, int(seed), []])[3].append((int(step), float(score)))
        except ValueError as exc:
            raise StoreParseError("<csv>", k, str(exc)) from None
    out = []
    for rid, (algo, env_id, seed, curve) in groups.items():
        rec = RunRecord.create(algo, env_id, seed, curve, created_at=created_at)
        if rec.run_id != rid:
            raise RecordValidationError("run_id", f"{rid} does not match content hash {rec.run_id}")
        out.append(rec)
    return out


def import_text(store_dir, text: str, fmt: str = "jsonl") -> list[str]:
    if fmt == "jsonl":
        records = parse_jsonl(text)
    elif fmt == "csv":
        records = parse_csv(text)
    else:
        raise HubError(f"unknown format {fmt!r}; valid: jsonl, csv")
    return ingest_runs(store_dir, records)


__all__ = [
    "CSV_HEADER",
    "HubError",
    "ImbalanceError",
    "NoStoreError",
    "RecordValidationError",
    "RunRecord",
    "StoreParseError",
    "all_records",
    "export_csv",
    "export_jsonl",
    "import_text",
    "ingest_run",
    "ingest_runs",
    "init_store",
    "parse_csv",
    "parse_jsonl",
    "query",
    "run_id_for",
    "score_at",
    "to_score_matrix",
]
