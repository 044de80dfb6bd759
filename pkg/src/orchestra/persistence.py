"""On-disk formats: trust snapshots (JSON), query streams (JSONL), trajectories (CSV).

Field names and ordering in all three are part of the public contract; see
README.md for the schemas.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import random
import tempfile
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    IncompatibleVersionError,
    InputDomainError,
    SnapshotFormatError,
    StreamValidationError,
)
from .query import QueryItem
from .similarity import Answer, AnswerKind
from .trust import HyperParams, TrustEntry, TrustStore, UpdateRecord

log = logging.getLogger(__name__)

FORMAT_VERSION = "1.0"
SUPPORTED_MAJOR = 1

ENTRY_FIELDS = ("agent_id", "role_id", "category_id", "pos_count", "neg_count", "ema_short", "ema_long", "score")
TRAJECTORY_FIELDS = (
    "step",
    "query_id",
    "category",
    "agent_id",
    "role_id",
    "reward_raw",
    "reward_scaled",
    "posterior_mean",
    "ema_short",
    "ema_long",
    "score",
)


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- snapshots -----------------------------------------------------------------


def snapshot_text(store: TrustStore, params: HyperParams | None = None) -> str:
    params = params or HyperParams()
    doc = {
        "format_version": FORMAT_VERSION,
        "hyperparams": params.to_dict(),
        "step": store.step,
        "category_counts": {c: store.category_counts[c] for c in sorted(store.category_counts)},
        "entries": [
            {
                "agent_id": a,
                "role_id": r,
                "category_id": c,
                "pos_count": e.pos_count,
                "neg_count": e.neg_count,
                "ema_short": e.ema_short,
                "ema_long": e.ema_long,
                "score": e.score,
            }
            for (a, r, c), e in store.items()
        ],
    }
    # json writes floats with repr(), the shortest string that round-trips.
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def save_snapshot(store: TrustStore, path: str | Path, params: HyperParams | None = None) -> None:
    with store.lock:
        text = snapshot_text(store, params)
    atomic_write(Path(path), text)


def parse_snapshot(text: str) -> tuple[TrustStore, HyperParams]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotFormatError(f"malformed snapshot: {exc.msg}", exc.lineno, exc.pos) from None
    if not isinstance(doc, dict):
        raise SnapshotFormatError("snapshot root must be an object")
    version = doc.get("format_version")
    try:
        major = int(str(version).split(".")[0])
    except ValueError:
        raise SnapshotFormatError(f"bad format_version {version!r}") from None
    if major != SUPPORTED_MAJOR:
        raise IncompatibleVersionError(f"snapshot format {version} is not supported (need {SUPPORTED_MAJOR}.x)")
    try:
        params = HyperParams.from_dict(doc["hyperparams"])
        store = TrustStore(step=int(doc["step"]))
        for cat, n in doc["category_counts"].items():
            store.category_counts[str(cat)] = int(n)
        for row in doc["entries"]:
            key = (str(row["agent_id"]), str(row["role_id"]), str(row["category_id"]))
            if key in store.entries:
                raise SnapshotFormatError(f"duplicate entry {key}")
            store.entries[key] = TrustEntry(
                pos_count=float(row["pos_count"]),
                neg_count=float(row["neg_count"]),
                ema_short=float(row["ema_short"]),
                ema_long=float(row["ema_long"]),
                score=float(row["score"]),
            )
    except (KeyError, TypeError, ValueError, InputDomainError) as exc:
        raise SnapshotFormatError(f"invalid snapshot content: {exc!r}") from None
    return store, params


def load_snapshot(path: str | Path) -> TrustStore:
    return load_snapshot_with_params(path)[0]


def load_snapshot_with_params(path: str | Path) -> tuple[TrustStore, HyperParams]:
    return parse_snapshot(Path(path).read_text(encoding="utf-8"))


# -- query streams ---------------------------------------------------------------


def query_from_record(rec: dict) -> QueryItem:
    if not isinstance(rec, dict):
        raise InputDomainError("record is not an object")
    for name in ("query_id", "text", "kind"):
        if name not in rec:
            raise InputDomainError(f"missing field {name!r}")
    kind = AnswerKind(rec["kind"])
    truth = rec.get("truth")
    return QueryItem(
        query_id=str(rec["query_id"]),
        text=str(rec["text"]),
        answer_kind=kind,
        image_ref=rec.get("image"),
        category_hint=rec.get("category"),
        options=tuple(rec["options"]) if rec.get("options") is not None else None,
        ground_truth=Answer(kind, truth) if truth is not None else None,
    )


def query_to_record(q: QueryItem) -> dict:
    rec: dict = {"query_id": q.query_id, "text": q.text, "image": q.image_ref}
    if q.category_hint is not None:
        rec["category"] = q.category_hint
    rec["kind"] = q.answer_kind.value
    if q.options is not None:
        rec["options"] = list(q.options)
    if q.ground_truth is not None:
        rec["truth"] = q.ground_truth.to_json()
    return rec


def iter_query_stream(path: str | Path, on_error: str = "abort") -> Iterator[QueryItem]:
    """Yield queries from a JSONL file in file order.

    ``on_error="skip"`` logs and drops bad lines instead of raising.
    """
    if on_error not in ("abort", "skip"):
        raise InputDomainError(f"on_error must be 'abort' or 'skip', got {on_error!r}")
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            qid = None
            try:
                rec = json.loads(line)
                qid = rec.get("query_id") if isinstance(rec, dict) else None
                item = query_from_record(rec)
            except (ValueError, InputDomainError) as exc:
                err = StreamValidationError(str(exc), lineno, None if qid is None else str(qid))
                if on_error == "abort":
                    raise err from None
                log.warning("skipping %s", err)
                continue
            yield item


def stratified_sample(items: Iterable[QueryItem], n_per_category: int, seed: int = 0) -> list[QueryItem]:
    """Pick ``n_per_category`` queries per category hint, keeping file order."""
    items = list(items)
    by_cat: dict[str, list[int]] = {}
    for i, q in enumerate(items):
        if q.category_hint is None:
            raise StreamValidationError("stratified sampling needs a category on every record", query_id=q.query_id)
        by_cat.setdefault(q.category_hint, []).append(i)
    rng = random.Random(seed)
    chosen: set[int] = set()
    for cat in sorted(by_cat):
        idx = by_cat[cat]
        if len(idx) < n_per_category:
            raise StreamValidationError(f"category {cat!r} has {len(idx)} records, need {n_per_category}")
        chosen.update(rng.sample(idx, n_per_category))
    return [items[i] for i in sorted(chosen)]


def read_query_stream(
    path: str | Path,
    n_per_category: int | None = None,
    seed: int = 0,
    on_error: str = "abort",
) -> Iterator[QueryItem]:
    stream = iter_query_stream(path, on_error)
    if n_per_category is None:
        return stream
    return iter(stratified_sample(stream, n_per_category, seed))


def write_query_stream(items: Iterable[QueryItem], path: str | Path) -> None:
    lines = [json.dumps(query_to_record(q)) for q in items]
    atomic_write(Path(path), "".join(line + "\n" for line in lines))


# -- trajectories ----------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryRow:
    step: int
    query_id: str
    category: str
    agent_id: str
    role_id: str
    reward_raw: float
    reward_scaled: float
    posterior_mean: float
    ema_short: float
    ema_long: float
    score: float

    @classmethod
    def from_update(cls, query_id: str, u: UpdateRecord) -> TrajectoryRow:
        return cls(
            u.step, query_id, u.category, u.agent_id, u.role_id,
            u.reward.raw, u.reward.scaled, u.posterior_mean,
            u.entry.ema_short, u.entry.ema_long, u.entry.score,
        )


def trajectories_text(rows: Iterable[TrajectoryRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_FIELDS)
    for r in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, f) for f in TRAJECTORY_FIELDS)])
    return buf.getvalue()


def export_trajectories(rows: Iterable[TrajectoryRow], path: str | Path) -> None:
    atomic_write(Path(path), trajectories_text(rows))


def read_trajectories(path: str | Path) -> list[TrajectoryRow]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRAJECTORY_FIELDS:
            raise InputDomainError(f"unexpected trajectory header {reader.fieldnames}")
        out = []
        for rec in reader:
            out.append(
                TrajectoryRow(
                    int(rec["step"]), rec["query_id"], rec["category"], rec["agent_id"], rec["role_id"],
                    *(float(rec[f]) for f in TRAJECTORY_FIELDS[5:]),
                )
            )
        return out
