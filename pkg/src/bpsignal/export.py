"""CSV and JSON writers for traces and analysis results.

Every CSV starts with a ``#schema=<name>/<version>`` comment line.  Floats
are written with ``repr`` (shortest round-tripping form) so output bytes are
a pure function of the values.  Files are written atomically: to a
temporary file in the target directory, then renamed over the target.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence, Union

TRACE_SCHEMA = "bpsignal-trace/1"
STABILITY_SCHEMA = "bpsignal-stability/1"
DRIFT_SCHEMA = "bpsignal-drift/1"
SWEEP_SCHEMA = "bpsignal-sweep/1"
COMPARE_SCHEMA = "bpsignal-compare/1"


def atomic_write(path: Union[str, Path], data: Union[bytes, str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _num(v) -> str:
    v = float(v)
    return repr(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def _csv(schema: str, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> bytes:
    buf = io.StringIO()
    buf.write(f"#schema={schema}\n")
    for c in comments:
        buf.write(f"#{c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode()


def trace_csv(trace) -> bytes:
    """Long-format trace: ``record,slot,id,value``.

    ``queue`` rows give ``Q_a(t)`` at the start of every slot ``t = 0..T``
    (``t = T`` is the final state); ``phase`` and ``state`` rows give each
    junction's active phase id and traffic state id during slot ``t < T``.
    """
    def rows():
        for t in range(trace.queues.shape[0]):
            for k, a in enumerate(trace.link_ids):
                yield ("queue", t, a, _num(trace.queues[t, k]))
        for t in range(trace.horizon):
            for k, j in enumerate(trace.junction_ids):
                yield ("phase", t, j, int(trace.phases[t, k]))
            for k, j in enumerate(trace.junction_ids):
                yield ("state", t, j, int(trace.states[t, k]))
    return _csv(TRACE_SCHEMA, ("record", "slot", "id", "value"), rows())


def read_trace_csv(data: Union[bytes, str]) -> dict:
    """Parse :func:`trace_csv` output into ``{record: {(slot, id): value}}``."""
    text = data.decode() if isinstance(data, bytes) else data
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#schema="):
        raise ValueError("trace CSV must start with a #schema= line")
    if lines[0] != f"#schema={TRACE_SCHEMA}":
        raise ValueError(f"unsupported trace schema {lines[0][8:]!r}")
    out: dict = {}
    for rec, slot, ident, value in csv.reader(lines[2:]):
        out.setdefault(rec, {})[(int(slot), int(ident))] = float(value)
    return out


def stability_csv(report) -> bytes:
    n = report.per_link.shape[1]
    header = ["V", "worst"] + [f"link_{a}" for a in range(n)]
    rows = ([_num(V), _num(w)] + [_num(x) for x in per] for V, w, per in report.rows())
    return _csv(STABILITY_SCHEMA, header, rows)


def drift_csv(series) -> bytes:
    rows = []
    for k in range(len(series.drift)):
        rows.append([
            _num(series.bin_edges[k]), _num(series.bin_edges[k + 1]), int(series.counts[k]),
            _num(series.bin_centers[k]) if series.counts[k] else "",
            _num(series.drift[k]) if series.counts[k] else "",
        ])
    fit = f"fit B={_num(series.B)} eps={_num(series.eps)} knee={_num(series.knee)}"
    return _csv(DRIFT_SCHEMA, ("lo", "hi", "count", "mean_total_queue", "drift"), rows, [fit])


def sweep_csv(results) -> bytes:
    rows = []
    for r in results:
        for rho, ok in sorted(r.evaluations.items()):
            rows.append([r.controller, _num(rho), int(ok), _num(r.rho_hat), int(r.at_upper_bound)])
    return _csv(SWEEP_SCHEMA, ("controller", "rho", "passed", "rho_hat", "at_upper_bound"), rows)


def compare_csv(summary: dict) -> bytes:
    """``summary`` maps controller name to ``(link_ids, max_q, avg_q)``."""
    rows = []
    for name, (links, mx, avg) in summary.items():
        for a, m, v in zip(links, mx, avg):
            rows.append([name, a, _num(m), _num(v)])
    return _csv(COMPARE_SCHEMA, ("controller", "link", "max_queue", "avg_queue"), rows)


def json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()
