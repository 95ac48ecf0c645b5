"""Energy ledger shared by every timing model (values in pJ)."""

from __future__ import annotations

from dataclasses import dataclass, fields

COMPONENTS = ("dram", "mac", "sram", "link", "sfe", "xpu", "interface")


@dataclass
class Energy:
    dram: float = 0.0
    mac: float = 0.0
    sram: float = 0.0
    link: float = 0.0
    sfe: float = 0.0
    xpu: float = 0.0
    interface: float = 0.0

    @property
    def total(self) -> float:
        return sum(getattr(self, f.name) for f in fields(self))

    def __add__(self, other: "Energy") -> "Energy":
        return Energy(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def __iadd__(self, other: "Energy") -> "Energy":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def scaled(self, k: float) -> "Energy":
        return Energy(*(getattr(self, f.name) * k for f in fields(self)))

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}
