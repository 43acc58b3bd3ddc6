"""Wall-clock comparison of the lazy structure against full recomputation per update."""
from __future__ import annotations

import time

import numpy as np

from .static import attention
from .structure import DynamicAttention
from .trace import generate

CSV_HEADER = "n,d,a,engine,op_kind,mean_ns,p50_ns,p99_ns,amortized_update_ns,query_ns"


class NaiveAttention:
    """Recomputes the whole attention output after every update; queries read it."""

    def __init__(self, Q, K, V):
        self.Q, self.K, self.V = Q.copy(), K.copy(), V.copy()
        self.B = attention(self.Q, self.K, self.V)

    def update_k(self, i, j, delta):
        self.K[i, j] += delta
        self.B = attention(self.Q, self.K, self.V)

    def update_v(self, i, j, delta):
        self.V[i, j] += delta
        self.B = attention(self.Q, self.K, self.V)

    def query(self, i, j):
        return float(self.B[i, j])

    def recompute(self):
        self.B = attention(self.Q, self.K, self.V)


def time_ops(engine, ops):
    """Per-op timings in ns, keyed by op kind."""
    timings = {"UK": [], "UV": [], "Q": [], "RC": []}
    clock = time.perf_counter_ns
    for op in ops:
        if op.kind == "UK":
            t0 = clock()
            engine.update_k(op.i, op.j, op.delta)
        elif op.kind == "UV":
            t0 = clock()
            engine.update_v(op.i, op.j, op.delta)
        elif op.kind == "Q":
            t0 = clock()
            engine.query(op.i, op.j)
        else:
            t0 = clock()
            engine.recompute()
        timings[op.kind].append(clock() - t0)
    return timings


def summarize(timings):
    updates = timings["UK"] + timings["UV"]
    amortized = float(np.mean(updates)) if updates else float("nan")
    query = float(np.mean(timings["Q"])) if timings["Q"] else float("nan")
    rows = {}
    for kind in ("UK", "UV", "Q"):
        xs = np.asarray(timings[kind], dtype=np.float64)
        if xs.size == 0:
            continue
        rows[kind] = (float(xs.mean()), float(np.percentile(xs, 50)), float(np.percentile(xs, 99)))
    return rows, amortized, query


def run_bench(n, d, a, ops=200, seed=0, mix=(0.4, 0.3, 0.3), warmup=True, instrument=False):
    """Time both engines on one generated trace.

    Returns ``(csv_rows, results)`` where ``results[engine]`` holds the amortized
    per-update and mean per-query times in ns (plus op counts for dynattn when
    ``instrument`` is set).
    """
    trace = generate(n, d, a, ops, mix=mix, seed=seed)
    Q, K, V = trace.matrices
    engines = {
        "dynattn": lambda: DynamicAttention(Q, K, V, a=a, instrument=instrument),
        "naive": lambda: NaiveAttention(Q, K, V),
    }
    lines, results = [], {}
    for name, make in engines.items():
        if warmup:
            time_ops(make(), trace.ops[: min(len(trace.ops), 20)])
        engine = make()
        rows, amortized, query = summarize(time_ops(engine, trace.ops))
        results[name] = {"amortized_update_ns": amortized, "query_ns": query}
        if instrument and name == "dynattn":
            results[name].update(engine.op_counters())
        for kind, (mean, p50, p99) in rows.items():
            lines.append(f"{n},{d},{a!r},{name},{kind},{mean:.1f},{p50:.1f},{p99:.1f},"
                         f"{amortized:.1f},{query:.1f}")
    return lines, results


def speedup(results) -> float:
    return results["naive"]["amortized_update_ns"] / results["dynattn"]["amortized_update_ns"]
