"""Per-round telemetry and its CSV form.

``rounds.csv`` has one row per communication round with the fixed columns
``round, client_id, train_acc, test_acc, consensus_changes, pool_size,
bytes_sent``.  Per-client columns hold ``;``-joined values in client order;
floats are written with ``repr`` so the file parses back losslessly.
``wall_time`` and the consensus vector are kept in memory only, which keeps
the file byte-identical across reruns.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("round", "client_id", "train_acc", "test_acc", "consensus_changes", "pool_size", "bytes_sent")


@dataclass(frozen=True, eq=False)
class RoundRecord:
    round: int
    client_ids: tuple[int, ...]
    train_acc: tuple[float, ...]
    test_acc: tuple[float, ...]
    consensus_changes: int = 0
    pool_size: int = 0
    bytes_sent: tuple[int, ...] = ()
    wall_time: float = 0.0
    consensus: np.ndarray | None = field(default=None, repr=False)

    def same_values(self, other: RoundRecord) -> bool:
        """Equality on the serialised fields."""
        return to_row(self) == to_row(other)


def _join(values) -> str:
    return ";".join(repr(v) if isinstance(v, float) else str(v) for v in values)


def to_row(rec: RoundRecord) -> list[str]:
    return [
        str(rec.round),
        _join(rec.client_ids),
        _join(float(a) for a in rec.train_acc),
        _join(float(a) for a in rec.test_acc),
        str(rec.consensus_changes),
        str(rec.pool_size),
        _join(int(b) for b in rec.bytes_sent),
    ]


def write_rounds_csv(records, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        w.writerow(to_row(rec))


def rounds_csv_text(records) -> str:
    buf = io.StringIO()
    write_rounds_csv(records, buf)
    return buf.getvalue()


def _split(cell: str, cast):
    return tuple(cast(v) for v in cell.split(";")) if cell else ()


def read_rounds_csv(fh) -> list[RoundRecord]:
    reader = csv.reader(fh)
    header = tuple(next(reader))
    if header != CSV_COLUMNS:
        raise ValueError(f"unexpected rounds.csv header: {header}")
    out = []
    for row in reader:
        r, cid, tr, te, ch, pool, sent = row
        out.append(RoundRecord(
            round=int(r),
            client_ids=_split(cid, int),
            train_acc=_split(tr, float),
            test_acc=_split(te, float),
            consensus_changes=int(ch),
            pool_size=int(pool),
            bytes_sent=_split(sent, int),
        ))
    return out
