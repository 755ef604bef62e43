"""Operation-level MAC / latency accounting.

A :class:`Profiler` is installed as a thread-local observer; while one is
active, every tensor op reports its kind, its MAC count and the wall time
spent computing it.  Profiling is purely observational: it never changes
what an op computes.

MAC policy (1 MAC = one multiply-accumulate = 2 FLOPs):

========================  =======================================
op kind                   MACs recorded
========================  =======================================
matmul                    prod(leading dims) * m * k * n
mul, div, scale           output size
exp, log, tanh, sigmoid   output size
elu, relu                 output size
silu                      2 * output size (sigmoid + product)
seg_outer, seg_matvec     rows * dims of the per-row product
layer_norm                4 * output size
dropout (training)        output size
add, sub                  0 (the accumulate half of a MAC)
gather, scatter, views    0 (data movement only)
========================  =======================================

The policy is documented in docs/formats.md; comparisons against other
tools should use it, not raw FLOP counts.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass


@dataclass
class OpProfile:
    """Aggregate record for one (scope, op kind) pair."""

    kind: str
    scope: str = ""
    macs: int = 0
    seconds: float = 0.0
    count: int = 0


_tls = threading.local()


def active() -> "Profiler | None":
    """Profiler currently installed on this thread, if any."""
    return getattr(_tls, "profiler", None)


def maybe_scope(label: str):
    """Scope context on the active profiler, or a no-op without one."""
    prof = active()
    return prof.scope(label) if prof is not None else nullcontext()


class Profiler:
    """Collects per-op MAC and wall-time totals while active.

    Use as a context manager::

        with Profiler() as prof:
            forward(model, batch)
        print(prof.format_table())
    """

    def __init__(self) -> None:
        self._records: dict[tuple[str, str], OpProfile] = {}
        self._scopes: list[str] = []

    # -- observer interface (called by tensor ops) --------------------------

    def add(self, kind: str, macs: int, seconds: float = 0.0) -> None:
        scope = self._scopes[-1] if self._scopes else ""
        rec = self._records.get((scope, kind))
        if rec is None:
            rec = OpProfile(kind=kind, scope=scope)
            self._records[(scope, kind)] = rec
        rec.macs += int(macs)
        rec.seconds += seconds
        rec.count += 1

    @contextmanager
    def scope(self, label: str):
        """Attribute ops executed inside the block to `label`."""
        self._scopes.append(label)
        try:
            yield self
        finally:
            self._scopes.pop()

    # -- context manager -----------------------------------------------------

    def __enter__(self) -> "Profiler":
        if active() is not None:
            raise RuntimeError("a Profiler is already active on this thread")
        _tls.profiler = self
        return self

    def __exit__(self, *exc) -> None:
        _tls.profiler = None

    # -- queries ---------------------------------------------------------------

    def records(self) -> list[OpProfile]:
        return list(self._records.values())

    def by_kind(self) -> dict[str, OpProfile]:
        """Totals per op kind, merged across scopes."""
        out: dict[str, OpProfile] = {}
        for rec in self._records.values():
            tot = out.setdefault(rec.kind, OpProfile(kind=rec.kind))
            tot.macs += rec.macs
            tot.seconds += rec.seconds
            tot.count += rec.count
        return out

    def scope_macs(self, label: str) -> int:
        """Total MACs recorded under a scope label."""
        return sum(r.macs for (scope, _), r in self._records.items() if scope == label)

    def scope_seconds(self, label: str) -> float:
        return sum(r.seconds for (scope, _), r in self._records.items() if scope == label)

    def total_macs(self) -> int:
        return sum(r.macs for r in self._records.values())

    def total_seconds(self) -> float:
        return sum(r.seconds for r in self._records.values())

    def top_kinds(self, k: int = 3, key: str = "macs") -> list[OpProfile]:
        rows = sorted(self.by_kind().values(), key=lambda r: getattr(r, key), reverse=True)
        return rows[:k]

    def format_table(self, top: int | None = None) -> str:
        """Human-readable per-kind table, MAC-descending, top-3 starred."""
        rows = sorted(self.by_kind().values(), key=lambda r: r.macs, reverse=True)
        if top is not None:
            rows = rows[:top]
        lines = [f"{'op':<14}{'MACs':>14}{'ms':>10}{'calls':>8}"]
        for i, r in enumerate(rows):
            star = " *" if i < 3 else "  "
            lines.append(f"{r.kind:<14}{r.macs:>14,}{r.seconds * 1e3:>10.2f}{r.count:>8}{star}")
        lines.append(f"{'total':<14}{self.total_macs():>14,}{self.total_seconds() * 1e3:>10.2f}")
        return "\n".join(lines)
