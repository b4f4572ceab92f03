"""Per-request and aggregate metrics computed from transcripts, and their CSV form."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import astuple, dataclass, fields
from typing import Any


@dataclass
class RequestMetrics:
    row: str
    scenario: str
    variant: str
    f: int
    n: int
    seed: int
    client: str
    request_id: Any
    completed: int
    latency: Any
    messages: int
    fallback: int
    view: Any


COLUMNS = [f.name for f in fields(RequestMetrics)]


@dataclass
class RunMetrics:
    requests: list[RequestMetrics]
    median_latency: float | None
    total_messages: int
    request_messages: int
    completed: int
    fallbacks: int
    view_changes: int

    def aggregate_row(self, header: dict[str, Any]) -> RequestMetrics:
        sc = header.get("scenario", {})
        return RequestMetrics(
            "aggregate",
            sc.get("name", ""),
            sc.get("variant", ""),
            sc.get("f", 0),
            header.get("n", 0),
            sc.get("seed", 0),
            "*",
            "*",
            self.completed,
            self.median_latency if self.median_latency is not None else "",
            self.total_messages,
            self.fallbacks,
            self.view_changes,
        )


def run_metrics(transcript: Any) -> RunMetrics:
    records = transcript.records if hasattr(transcript, "records") else transcript
    header = records[0] if records and records[0]["type"] == "config" else {}
    sc = header.get("scenario", {})
    faulty = set(header.get("faulty", []))
    per_request: dict[tuple[str, int], int] = {}
    total = 0
    views: set[int] = set()
    completions: dict[tuple[str, int], dict] = {}
    for r in records:
        t = r["type"]
        if t == "msg":
            total += 1
            if "key" in r:
                key = (r["key"][0], r["key"][1])
                per_request[key] = per_request.get(key, 0) + 1
        elif t == "complete":
            completions[(r["client"], r["rid"])] = r
        elif t == "install" and not (isinstance(r["node"], int) and r["node"] in faulty):
            views.add(r["view"])
    clients = header.get("clients", [])
    wanted = header.get("requests", 0)
    rows = []
    for client in clients:
        for rid in range(1, wanted + 1):
            c = completions.get((client, rid))
            rows.append(
                RequestMetrics(
                    "request",
                    sc.get("name", ""),
                    sc.get("variant", ""),
                    sc.get("f", 0),
                    header.get("n", 0),
                    sc.get("seed", 0),
                    client,
                    rid,
                    int(c is not None),
                    c["latency"] if c else "",
                    per_request.get((client, rid), 0),
                    int(bool(c and c["fallback"])),
                    c["view"] if c else "",
                )
            )
    latencies = [c["latency"] for c in completions.values()]
    return RunMetrics(
        rows,
        statistics.median(latencies) if latencies else None,
        total,
        sum(per_request.values()),
        len(completions),
        sum(1 for c in completions.values() if c["fallback"]),
        len(views),
    )


def metrics_csv(transcripts: list[Any]) -> str:
    """One row per (scenario, request) followed by one aggregate row per scenario."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    aggregates = []
    for tr in transcripts:
        m = run_metrics(tr)
        w.writerows(astuple(r) for r in m.requests)
        aggregates.append(m.aggregate_row(tr.records[0] if tr.records else {}))
    w.writerows(astuple(a) for a in aggregates)
    return buf.getvalue()
