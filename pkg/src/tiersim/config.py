"""Configuration objects, presets and the JSON config loader.

Every number the simulator uses is declared here. Config files are JSON
objects with up to four top-level sections (``system``, ``model``,
``workload``, ``sim``) plus an optional ``schema_version``. The ``system``
and ``model`` sections may name a ``preset`` whose fields are then
overridden by the remaining keys. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

SCHEMA_VERSION = 1

PRESET_DIR_ENV = "TIERSIM_PRESET_DIR"
_PACKAGED_PRESETS = Path(__file__).parent / "presets"


class ConfigError(ValueError):
    """Raised for parse errors, unknown keys and invariant violations."""

    def __init__(self, message: str, field_name: Optional[str] = None):
        self.field_name = field_name
        if field_name:
            message = f"{field_name}: {message}"
        super().__init__(message)


def _require(cond: bool, field_name: str, message: str) -> None:
    if not cond:
        raise ConfigError(message, field_name)


@dataclass(frozen=True)
class NmpSpec:
    pus_per_chip: int = 16
    pes_per_pu: int = 16
    mac_rows: int = 16
    mac_cols: int = 16
    simd_width: int = 256
    ring_link_bw: float = 128e9  # bytes/s per link
    shared_mem: int = 1_310_720  # 1.25 MB per PU
    psum_mem: int = 65_536  # per PE
    frequency: float = 1.0  # GHz
    e_mac: float = 0.604  # pJ per MAC
    # Misc energies are calibration constants: at full tensor-core rate with
    # fast-tier streaming, ring links saturated and SIMD lanes busy, logic
    # power lands on 42.67 W (39.58 W MAC + 3.09 W misc). See
    # nmp.peak_logic_power().
    e_sram_bit: float = 0.0076525  # pJ per bit moved through PE/PU SRAM
    e_link_bit: float = 0.05  # pJ per bit on a ring link
    e_sfe_op: float = 0.1  # pJ per SIMD lane-op
    router_hop_ns: float = 2.0
    packet_bytes: int = 64
    # SIMD cycles per element for special functions
    sfe_cycles_activation: int = 1
    sfe_cycles_hadamard: int = 1
    sfe_cycles_weighted_sum: int = 1
    sfe_cycles_max: int = 1
    sfe_cycles_exp: int = 4
    sfe_cycles_normalize: int = 1

    def __post_init__(self):
        for f in ("pus_per_chip", "pes_per_pu", "mac_rows", "mac_cols", "simd_width", "packet_bytes"):
            _require(getattr(self, f) >= 1, f"nmp.{f}", "must be >= 1")
        for f in ("ring_link_bw", "frequency"):
            _require(getattr(self, f) > 0, f"nmp.{f}", "must be > 0")
        for f in ("e_mac", "e_sram_bit", "e_link_bit", "e_sfe_op", "router_hop_ns"):
            _require(getattr(self, f) >= 0, f"nmp.{f}", "must be >= 0")

    @property
    def macs_per_pe(self) -> int:
        return self.mac_rows * self.mac_cols

    @property
    def total_macs(self) -> int:
        return self.pus_per_chip * self.pes_per_pu * self.macs_per_pe

    @property
    def aggregate_ring_bw(self) -> float:
        return self.pus_per_chip * self.ring_link_bw


@dataclass(frozen=True)
class BudgetParams:
    """Inputs of the power/area feasibility model (one chip)."""

    p_peak: float = 45.0  # W, logic-die cap from thermal analysis
    p_dram_peak: Optional[float] = None  # W, DRAM-die cap; None = sized for full fast-tier bandwidth
    bw_fast_tier: Optional[float] = None  # bytes/s; None = derived from the tier table
    e_b: float = 0.429  # pJ/bit
    n_mac: int = 65_536
    f_logic: float = 1.0  # GHz
    e_mac: float = 0.604  # pJ
    p_misc: float = 3.09  # W; 42.67 W logic total minus 65,536 MACs at full rate
    a_chip: float = 121.0  # mm^2
    alpha: float = 1.0
    # 76.63 mm^2 active logic = MACs + PHY + peri + misc + TSV; a_mac is back-solved
    a_mac: float = 391.9e-6  # mm^2 per MAC
    a_phy: float = 23.94
    a_peri: float = 14.80
    a_misc: float = 12.0
    a_tsv: float = 25.0  # um^2
    i_tsv: float = 0.036  # A
    tsv_redundancy: float = 2.0
    v_dram_c: float = 1.1  # V, core rail
    v_dram_p: float = 1.1  # V, peripheral rail
    v_logic: float = 0.7
    dram_core_fraction: float = 0.8  # share of p_dram on the core rail
    p_dram_c: Optional[float] = None
    p_dram_p: Optional[float] = None

    def __post_init__(self):
        for f in ("p_peak", "e_b", "f_logic", "e_mac", "a_chip", "a_tsv", "i_tsv", "tsv_redundancy"):
            _require(getattr(self, f) > 0, f"budget.{f}", "must be > 0")
        for f in ("n_mac", "p_misc", "a_mac", "a_phy", "a_peri", "a_misc"):
            _require(getattr(self, f) >= 0, f"budget.{f}", "must be >= 0")
        for f in ("v_dram_c", "v_dram_p", "v_logic"):
            _require(getattr(self, f) >= 0, f"budget.{f}", "must be >= 0")
        _require(0 < self.alpha <= 1, "budget.alpha", "must be in (0, 1]")
        _require(0 <= self.dram_core_fraction <= 1, "budget.dram_core_fraction", "must be in [0, 1]")
        if (self.p_dram_c is None) != (self.p_dram_p is None):
            raise ConfigError("p_dram_c and p_dram_p must be given together", "budget.p_dram_c")


@dataclass(frozen=True)
class XpuSpec:
    """Roofline parameters of the host-side accelerator that runs prefill."""

    name: str = "h100-class"
    count: int = 1
    peak_tflops: float = 989.0  # FP16 dense, per device
    hbm_bw: float = 3.35e12  # bytes/s per device
    power_w: float = 700.0  # active power per device
    classifier_delay_ms: float = 10.0  # host-side topic classification per request

    def __post_init__(self):
        _require(self.count >= 1, "xpu.count", "must be >= 1")
        for f in ("peak_tflops", "hbm_bw"):
            _require(getattr(self, f) > 0, f"xpu.{f}", "must be > 0")
        for f in ("power_w", "classifier_delay_ms"):
            _require(getattr(self, f) >= 0, f"xpu.{f}", "must be >= 0")


@dataclass(frozen=True)
class SystemConfig:
    num_chips: int = 1
    channels_per_chip: int = 16
    banks_per_channel: int = 16
    bank_capacity: int = 2**30  # bits
    row_buffer: int = 32 * 1024  # bits
    dram_layers: int = 1024
    num_tiers: int = 8
    energy_per_bit_dram: float = 0.429  # pJ/bit
    xpu_dram_io_bits: int = 1024
    xpu_dram_pin_rate: float = 6.4  # Gbps
    interface_pj_per_bit: float = 3.9  # pJ/bit across the interposer
    logic_frequency: float = 1.0  # GHz
    trcd: tuple[float, ...] = (2.29, 3.92, 5.99, 8.50, 11.44, 14.82, 18.63, 22.88)  # ns per tier
    trp: float = 4.77
    tras_offset: float = 27.50
    nmp: NmpSpec = field(default_factory=NmpSpec)
    budget: BudgetParams = field(default_factory=BudgetParams)
    xpu: XpuSpec = field(default_factory=XpuSpec)

    def __post_init__(self):
        for f in (
            "num_chips",
            "channels_per_chip",
            "banks_per_channel",
            "bank_capacity",
            "row_buffer",
            "dram_layers",
            "num_tiers",
            "xpu_dram_io_bits",
        ):
            _require(getattr(self, f) >= 1, f"system.{f}", "must be >= 1")
        for f in ("energy_per_bit_dram", "xpu_dram_pin_rate", "logic_frequency", "trp", "tras_offset"):
            _require(getattr(self, f) > 0, f"system.{f}", "must be > 0")
        _require(
            self.dram_layers % self.num_tiers == 0,
            "system.dram_layers",
            f"{self.dram_layers} layers not divisible by {self.num_tiers} tiers",
        )
        _require(self.row_buffer % 8 == 0, "system.row_buffer", "must be a whole number of bytes")
        _require(self.bank_capacity % self.row_buffer == 0, "system.bank_capacity", "must be a multiple of row_buffer")
        _require(len(self.trcd) == self.num_tiers, "system.trcd", f"needs {self.num_tiers} entries, got {len(self.trcd)}")
        _require(all(t > 0 for t in self.trcd), "system.trcd", "must be positive")
        _require(
            all(b > a for a, b in zip(self.trcd, self.trcd[1:])),
            "system.trcd",
            "must be strictly increasing (tier 0 fastest)",
        )
        _require(
            self.channels_per_chip == self.nmp.pus_per_chip, "system.channels_per_chip", "must equal nmp.pus_per_chip"
        )
        _require(self.banks_per_channel == self.nmp.pes_per_pu, "system.banks_per_channel", "must equal nmp.pes_per_pu")

    @property
    def banks_per_chip(self) -> int:
        return self.channels_per_chip * self.banks_per_channel

    @property
    def n_bank(self) -> int:
        return self.num_chips * self.banks_per_chip

    @property
    def row_buffer_bytes(self) -> int:
        return self.row_buffer // 8

    @property
    def rows_per_bank(self) -> int:
        return self.bank_capacity // self.row_buffer

    @property
    def chip_capacity_bytes(self) -> int:
        return self.banks_per_chip * self.bank_capacity // 8

    @property
    def total_capacity_bytes(self) -> int:
        return self.num_chips * self.chip_capacity_bytes

    @property
    def interface_bw(self) -> float:
        """xPU-DRAM interface bandwidth of one chip in bytes/s."""
        return self.xpu_dram_io_bits * self.xpu_dram_pin_rate * 1e9 / 8

    @property
    def total_pus(self) -> int:
        return self.num_chips * self.nmp.pus_per_chip


@dataclass(frozen=True)
class ModelConfig:
    name: str = "mixtral-8x7b"
    num_layers: int = 32
    experts_per_layer: int = 8
    active_experts: int = 2
    shared_experts: int = 0
    hidden_dim: int = 4096
    intermediate_dim: int = 14336
    num_q_heads: int = 32
    num_kv_heads: int = 8
    head_dim: int = 128
    vocab_size: int = 32000
    bytes_per_param: int = 2

    def __post_init__(self):
        for f in (
            "num_layers",
            "experts_per_layer",
            "active_experts",
            "hidden_dim",
            "intermediate_dim",
            "num_q_heads",
            "num_kv_heads",
            "head_dim",
            "bytes_per_param",
        ):
            _require(getattr(self, f) >= 1, f"model.{f}", "must be >= 1")
        _require(self.shared_experts >= 0, "model.shared_experts", "must be >= 0")
        _require(self.vocab_size >= 0, "model.vocab_size", "must be >= 0")
        _require(
            self.active_experts <= self.experts_per_layer,
            "model.active_experts",
            f"k={self.active_experts} exceeds K={self.experts_per_layer}",
        )
        _require(
            self.num_q_heads % self.num_kv_heads == 0,
            "model.num_kv_heads",
            "must divide num_q_heads",
        )

    @property
    def expert_bytes(self) -> int:
        """Two projection-up matrices plus one projection-down matrix."""
        h, n = self.hidden_dim, self.intermediate_dim
        return (2 * h * n + n * h) * self.bytes_per_param

    @property
    def q_per_kv(self) -> int:
        return self.num_q_heads // self.num_kv_heads

    @property
    def kv_bytes_per_token_layer(self) -> int:
        return 2 * self.num_kv_heads * self.head_dim * self.bytes_per_param

    @property
    def attn_proj_params(self) -> int:
        h = self.hidden_dim
        q = self.num_q_heads * self.head_dim
        kv = self.num_kv_heads * self.head_dim
        return h * q + 2 * h * kv + q * h

    @property
    def non_nmp_bytes(self) -> int:
        """Embedding and LM head, served by the xPU."""
        return 2 * self.vocab_size * self.hidden_dim * self.bytes_per_param

    @property
    def total_experts(self) -> int:
        return self.num_layers * (self.experts_per_layer + self.shared_experts)


@dataclass(frozen=True)
class WorkloadConfig:
    arrival_rate: float = 1.0  # requests/s
    topics: tuple[str, ...] = ("math", "cs", "science", "law", "humanity", "logic")
    topic_mix: tuple[float, ...] = (1 / 6,) * 6
    input_len: int = 512
    output_len: int = 512
    max_batch: int = 8
    ttft_slo: float = 2000.0  # ms
    classifier_accuracy: float = 0.85
    seed: int = 0

    def __post_init__(self):
        _require(self.arrival_rate >= 0, "workload.arrival_rate", "must be >= 0")
        _require(len(self.topics) >= 1, "workload.topics", "needs at least one topic")
        _require(len(set(self.topics)) == len(self.topics), "workload.topics", "duplicate topic")
        _require(len(self.topic_mix) == len(self.topics), "workload.topic_mix", "length must match topics")
        _require(all(p >= 0 for p in self.topic_mix), "workload.topic_mix", "must be non-negative")
        _require(abs(sum(self.topic_mix) - 1.0) <= 1e-9, "workload.topic_mix", "must sum to 1")
        _require(self.input_len >= 1 and self.output_len >= 1, "workload.input_len", "lengths must be >= 1")
        _require(self.max_batch >= 1, "workload.max_batch", "must be >= 1")
        _require(self.ttft_slo > 0, "workload.ttft_slo", "must be > 0")
        _require(0.0 <= self.classifier_accuracy <= 1.0, "workload.classifier_accuracy", "must be in [0, 1]")


@dataclass(frozen=True)
class SimConfig:
    policy: str = "tiering"  # or "no-tiering"
    duration: float = 60.0  # s of request arrivals
    scheduling_period_ms: float = 10.0
    kv_tier: Optional[int] = None  # None = num_tiers // 2
    expert_overlap: bool = True
    head_interleave: bool = True
    # "tier-equivalent" relabels target slots within a tier to avoid
    # moving experts whose tier does not change; "exact" realizes the
    # frequency-ordered layout row for row.
    swap_mode: str = "tier-equivalent"
    router_ns: float = 20.0  # per layer, on the xPU
    # Expert usage tables: either loaded from a file or synthesized.
    usage_table: Optional[str] = None
    hot_hit_target: Optional[float] = None  # None = plain Dirichlet tables
    usage_concentration: float = 0.5  # Dirichlet alpha for plain tables
    hot_jitter_concentration: float = 200.0  # Dirichlet alpha within hot/cold groups for targeted tables
    uniform_usage: bool = False

    def __post_init__(self):
        _require(self.policy in ("tiering", "no-tiering"), "sim.policy", f"unknown policy {self.policy!r}")
        _require(self.duration >= 0, "sim.duration", "must be >= 0")
        _require(self.scheduling_period_ms > 0, "sim.scheduling_period_ms", "must be > 0")
        _require(self.swap_mode in ("tier-equivalent", "exact"), "sim.swap_mode", f"unknown mode {self.swap_mode!r}")
        _require(self.router_ns >= 0, "sim.router_ns", "must be >= 0")
        if self.hot_hit_target is not None:
            _require(0.0 <= self.hot_hit_target <= 1.0, "sim.hot_hit_target", "must be in [0, 1]")
        _require(self.usage_concentration > 0, "sim.usage_concentration", "must be > 0")
        _require(self.hot_jitter_concentration > 0, "sim.hot_jitter_concentration", "must be > 0")


@dataclass(frozen=True)
class Config:
    system: SystemConfig = field(default_factory=SystemConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.sim.kv_tier is not None:
            _require(0 <= self.sim.kv_tier < self.system.num_tiers, "sim.kv_tier", "outside tier range")

    @property
    def kv_tier(self) -> int:
        return self.system.num_tiers // 2 if self.sim.kv_tier is None else self.sim.kv_tier


# --------------------------------------------------------------------------
# Presets
# --------------------------------------------------------------------------

_A6000 = XpuSpec(name="a6000-class", count=1, peak_tflops=155.0, hbm_bw=768e9, power_w=300.0)
_H100 = XpuSpec(name="h100-class", count=1, peak_tflops=989.0, hbm_bw=3.35e12, power_w=700.0)

SYSTEM_PRESETS: dict[str, dict[str, Any]] = {
    "stratum-s": {"num_chips": 1, "xpu": _A6000},
    "stratum-l": {"num_chips": 6, "xpu": _H100},
    # two L modules
    "stratum-xl": {"num_chips": 12, "xpu": dataclasses.replace(_H100, count=2)},
}

# Layer counts come from public model cards; they are not part of the
# evaluated hardware description and stay overridable.
MODEL_PRESETS: dict[str, dict[str, Any]] = {
    "olmoe-1b-7b": dict(
        name="olmoe-1b-7b", num_layers=16, experts_per_layer=64, active_experts=8, shared_experts=0,
        hidden_dim=2048, intermediate_dim=1024, num_q_heads=16, num_kv_heads=16, head_dim=128, vocab_size=50304,
    ),
    "mixtral-8x7b": dict(
        name="mixtral-8x7b", num_layers=32, experts_per_layer=8, active_experts=2, shared_experts=0,
        hidden_dim=4096, intermediate_dim=14336, num_q_heads=32, num_kv_heads=8, head_dim=128, vocab_size=32000,
    ),
    "llama-4-scout": dict(
        name="llama-4-scout", num_layers=48, experts_per_layer=16, active_experts=1, shared_experts=1,
        hidden_dim=5120, intermediate_dim=8192, num_q_heads=40, num_kv_heads=8, head_dim=128, vocab_size=202048,
    ),
    # dense model: one always-active expert per layer
    "qwen2.5-32b": dict(
        name="qwen2.5-32b", num_layers=64, experts_per_layer=1, active_experts=1, shared_experts=0,
        hidden_dim=5120, intermediate_dim=27648, num_q_heads=40, num_kv_heads=8, head_dim=128, vocab_size=152064,
    ),
}


def preset(name: str) -> SystemConfig:
    """Return the validated system preset ``stratum-s``, ``stratum-l`` or ``stratum-xl``."""
    key = name.strip().lower()
    if key not in SYSTEM_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(SYSTEM_PRESETS)}", "system.preset")
    return SystemConfig(**SYSTEM_PRESETS[key])


def model_preset(name: str) -> ModelConfig:
    key = name.strip().lower()
    if key not in MODEL_PRESETS:
        raise ConfigError(f"unknown model preset {name!r}; expected one of {sorted(MODEL_PRESETS)}", "model.preset")
    return ModelConfig(**MODEL_PRESETS[key])


# --------------------------------------------------------------------------
# Dict <-> dataclass conversion
# --------------------------------------------------------------------------


def _build(cls, data: dict, prefix: str, base=None):
    if not isinstance(data, dict):
        raise ConfigError("expected an object", prefix)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", prefix)
    kwargs = {}
    for key, value in data.items():
        hint = hints[key]
        sub = f"{prefix}.{key}"
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, sub, getattr(base, key) if base is not None else None)
        else:
            kwargs[key] = _coerce(hint, value, sub)
    try:
        if base is not None:
            return dataclasses.replace(base, **kwargs)
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc), prefix) from exc


def _coerce(hint, value, name):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, name)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError("expected a list", name)
        return tuple(_coerce(args[0], v, name) for v in value)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", name)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"expected an integer, got {value!r}", name)
        return int(value)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", name)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", name)
        return value
    return value


def to_dict(obj) -> dict:
    """Serialize a config dataclass tree to plain JSON-compatible values."""
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            value = to_dict(value)
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def _wrap_invariant(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_from_dict(data: dict) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("top-level config must be an object")
    allowed = {"schema_version", "system", "model", "workload", "sim"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", "config")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}", "schema_version")

    sys_data = dict(data.get("system", {}))
    sys_base = preset(sys_data.pop("preset")) if "preset" in sys_data else SystemConfig()
    system = _wrap_invariant(_build, SystemConfig, sys_data, "system", sys_base)

    model_data = dict(data.get("model", {}))
    model_base = model_preset(model_data.pop("preset")) if "preset" in model_data else ModelConfig()
    model = _wrap_invariant(_build, ModelConfig, model_data, "model", model_base)

    workload = _wrap_invariant(_build, WorkloadConfig, data.get("workload", {}), "workload", WorkloadConfig())
    sim = _wrap_invariant(_build, SimConfig, data.get("sim", {}), "sim", SimConfig())
    return Config(system=system, model=model, workload=workload, sim=sim)


def config_to_dict(cfg: Config) -> dict:
    return {"schema_version": SCHEMA_VERSION, **to_dict(cfg)}


def dumps(cfg: Config) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` overrides to a raw config dict.

    Values are parsed as JSON when possible (numbers, booleans, lists) and
    fall back to plain strings.
    """
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override inside non-object {p!r}", key)
        node[parts[-1]] = value
    return data


def resolve_path(path: str | os.PathLike) -> Path:
    """Find a config file as given, else under the preset directory."""
    p = Path(path)
    if p.exists():
        return p
    roots = []
    if os.environ.get(PRESET_DIR_ENV):
        roots.append(Path(os.environ[PRESET_DIR_ENV]))
    roots.append(_PACKAGED_PRESETS)
    for root in roots:
        for cand in (root / p, root / p.name):
            if cand.exists():
                return cand
    raise ConfigError(f"config file not found: {path}")


def read_config_dict(path: str | os.PathLike) -> dict:
    p = resolve_path(path)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error in {p}: {exc}") from exc


def load_config(path: str | os.PathLike, overrides: Optional[list[str]] = None) -> Config:
    """Load, override and validate a JSON config file."""
    data = read_config_dict(path)
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


__all__ = [
    "BudgetParams",
    "Config",
    "ConfigError",
    "ModelConfig",
    "NmpSpec",
    "SimConfig",
    "SystemConfig",
    "WorkloadConfig",
    "XpuSpec",
    "apply_overrides",
    "ceil_div",
    "config_from_dict",
    "config_to_dict",
    "dumps",
    "load_config",
    "model_preset",
    "preset",
]
