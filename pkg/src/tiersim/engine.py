"""Deterministic resource-constrained schedule of pipeline stages.

Tasks are submitted in a valid topological order. Each task occupies one
resource (tensor cores, SIMD engine, ring, interface, ...) and starts when
all its dependencies finished and every earlier task on the same resource
has finished. Resources serve tasks in submission order.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Task:
    name: str
    resource: str
    duration: float
    deps: tuple[str, ...] = ()


@dataclass
class Timeline:
    start: dict[str, float] = field(default_factory=dict)
    end: dict[str, float] = field(default_factory=dict)
    resource_of: dict[str, str] = field(default_factory=dict)

    @property
    def makespan(self) -> float:
        return max(self.end.values(), default=0.0)

    def busy(self, resource: str) -> float:
        return sum(self.end[n] - self.start[n] for n, r in self.resource_of.items() if r == resource)


def schedule(tasks: list[Task]) -> Timeline:
    tl = Timeline()
    free: dict[str, float] = {}
    for t in tasks:
        if t.name in tl.end:
            raise ValueError(f"duplicate task {t.name!r}")
        if t.duration < 0:
            raise ValueError(f"negative duration for {t.name!r}")
        missing = [d for d in t.deps if d not in tl.end]
        if missing:
            raise ValueError(f"{t.name!r} depends on unscheduled {missing}")
        ready = max((tl.end[d] for d in t.deps), default=0.0)
        start = max(ready, free.get(t.resource, 0.0))
        tl.start[t.name] = start
        tl.end[t.name] = start + t.duration
        tl.resource_of[t.name] = t.resource
        free[t.resource] = start + t.duration
    return tl


def chain(tasks: list[Task]) -> list[Task]:
    """Rewrite ``tasks`` so each depends on its predecessor (no overlap)."""
    out: list[Task] = []
    prev = None
    for t in tasks:
        deps = t.deps if prev is None else tuple(dict.fromkeys(t.deps + (prev,)))
        out.append(Task(t.name, t.resource, t.duration, deps))
        prev = t.name
    return out
