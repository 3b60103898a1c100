"""Trace-driven latency simulation of mixed CPU-GPU expert serving.

Per expert invocation the simulator picks the cheapest of: already resident
on the accelerator (planned placement), present in the transfer cache,
transferring the weights then running on the accelerator, or computing on
the host. The transfer-vs-host comparison follows the batch-size crossover:
host time grows as n_inputs * latency_cpu while the transfer route pays a
one-off weight copy plus n_inputs * latency_gpu. Exact ties go to the host,
so the transfer route is chosen only when strictly cheaper.

Prefill is batched: all prefill tokens share one pass, and each layer makes
one decision per unique expert selected anywhere in the batch, with
n_inputs equal to the prefill token count. Decode runs token by token with
n_inputs = 1.

Cost model files are JSON with the keys latency_cpu_ms, latency_gpu_ms,
expert_bytes, pcie_bw_bytes_per_ms, activation_return_ms (optional, default
0) and cache_capacity (optional, default 0).
"""

from __future__ import annotations

import json
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .placement import PlacementPlan, evaluate_plan
from .trace import PHASE_PREFILL, Trace

# Returned by critical_batch when the host wins at every batch size.
UNBOUNDED = math.inf

KIND_RESIDENT = "gpu_resident_hit"
KIND_CACHE = "cache_hit"
KIND_CPU = "cpu_compute"
KIND_TRANSFER = "transfer_then_gpu"
DECISION_KINDS = (KIND_RESIDENT, KIND_CACHE, KIND_CPU, KIND_TRANSFER)

FORMAT_TEXT = "text"
FORMAT_CSV = "csv"
FORMAT_PLOTDATA = "plotdata"
REPORT_FORMATS = (FORMAT_TEXT, FORMAT_CSV, FORMAT_PLOTDATA)

_CSV_HEADER = "layer,hit_rate,latency_ms,std,gap,transfer_fraction"


@dataclass
class CostModel:
    """Per-expert serving costs. Latencies are ms per token per expert;
    ``latency_cpu_ms`` may be infinite to rule the host out entirely."""

    latency_cpu_ms: float
    latency_gpu_ms: float
    expert_bytes: float
    pcie_bw_bytes_per_ms: float
    activation_return_ms: float = 0.0

    def __post_init__(self):
        for name in ("latency_cpu_ms", "latency_gpu_ms", "activation_return_ms"):
            v = getattr(self, name)
            if math.isnan(v) or v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if math.isnan(self.expert_bytes) or self.expert_bytes < 0:
            raise ValueError(f"expert_bytes must be >= 0, got {self.expert_bytes}")
        if (
            math.isnan(self.pcie_bw_bytes_per_ms)
            or self.pcie_bw_bytes_per_ms <= 0
            or math.isinf(self.pcie_bw_bytes_per_ms)
        ):
            raise ValueError(
                f"pcie_bw_bytes_per_ms must be positive and finite, "
                f"got {self.pcie_bw_bytes_per_ms}"
            )
        if self.latency_cpu_ms < self.latency_gpu_ms:
            warnings.warn(
                "latency_cpu_ms is below latency_gpu_ms; the host will win "
                "every comparison",
                UserWarning,
                stacklevel=2,
            )

    @property
    def transfer_ms(self) -> float:
        return self.expert_bytes / self.pcie_bw_bytes_per_ms


@dataclass(frozen=True)
class Decision:
    kind: str
    latency_ms: float


class LruCache:
    """Fixed-capacity cache of (layer, expert) keys with least-recently-used
    eviction. Capacity 0 is a legal no-op cache."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError(f"capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self._order: OrderedDict = OrderedDict()

    def __contains__(self, key) -> bool:
        return key in self._order

    def __len__(self) -> int:
        return len(self._order)

    def touch(self, key) -> None:
        """Refresh recency of a present key."""
        self._order.move_to_end(key)

    def insert(self, key):
        """Insert or refresh a key; returns the evicted key or None.

        A present key only has its recency refreshed. An absent key evicts
        the least recently used entry when the cache is full. With capacity
        0 nothing is ever stored.
        """
        if self.capacity == 0:
            return None
        if key in self._order:
            self._order.move_to_end(key)
            return None
        evicted = None
        if len(self._order) >= self.capacity:
            evicted, _ = self._order.popitem(last=False)
        self._order[key] = True
        return evicted

    def residents(self) -> list:
        """Keys from least to most recently used."""
        return list(self._order.keys())


def cache_insert(cache: LruCache, key):
    """Module-level alias of LruCache.insert."""
    return cache.insert(key)


def critical_batch(cost: CostModel) -> float:
    """Smallest batch size at which the transfer route strictly beats the
    host: the least integer n with n * latency_cpu > T_e + n * latency_gpu.

    Returns UNBOUNDED (infinity) when latency_cpu <= latency_gpu, since the
    host then wins or ties at every batch size.
    """
    if cost.latency_cpu_ms <= cost.latency_gpu_ms:
        return UNBOUNDED
    gap = cost.latency_cpu_ms - cost.latency_gpu_ms
    return math.floor(cost.transfer_ms / gap) + 1


def decide(
    expert: int,
    layer: int,
    n_inputs: int,
    plan: PlacementPlan,
    cache: LruCache,
    cost: CostModel,
) -> Decision:
    """Route one expert invocation and account its latency.

    Precedence: planned residency, then cache residency (refreshing
    recency), then the cost comparison. The comparison is strict,
    n * latency_cpu > T_e + n * latency_gpu, so ties stay on the host; a
    transfer inserts the expert into the cache, evicting the least recently
    used entry if needed. Host latency is charged as
    n * latency_cpu + activation_return_ms.
    """
    if n_inputs < 1:
        raise ValueError(f"n_inputs must be >= 1, got {n_inputs}")
    if plan.is_resident(layer, expert):
        return Decision(KIND_RESIDENT, n_inputs * cost.latency_gpu_ms)
    key = (layer, expert)
    if key in cache:
        cache.touch(key)
        return Decision(KIND_CACHE, n_inputs * cost.latency_gpu_ms)
    t_transfer = cost.transfer_ms + n_inputs * cost.latency_gpu_ms
    if n_inputs * cost.latency_cpu_ms > t_transfer:
        cache.insert(key)
        return Decision(KIND_TRANSFER, t_transfer)
    return Decision(
        KIND_CPU, n_inputs * cost.latency_cpu_ms + cost.activation_return_ms
    )


@dataclass
class SimReport:
    """Everything the simulator measured for one trace and plan."""

    layers: int
    n_prefill_tokens: int
    n_decode_tokens: int
    per_layer_hit_rate: np.ndarray  # static plan residency, both phases
    prefill_hit_rate: np.ndarray
    decode_hit_rate: np.ndarray
    mean_hit_rate: float
    std_hit_rate: float
    gap_hit_rate: float
    decisions: dict[str, int] = field(default_factory=dict)
    cache_hits: int = 0
    cache_hit_rate: float = 0.0
    total_latency_ms: float = 0.0
    prefill_latency_ms: float = 0.0
    decode_token_latency_ms: list[float] = field(default_factory=list)
    per_layer_latency_ms: np.ndarray = field(
        default_factory=lambda: np.zeros(0)
    )
    per_layer_latency_std: float = 0.0
    transfer_ms_total: float = 0.0
    transfer_fraction: float = 0.0


def _phase_hit_rates(plan: PlacementPlan, trace: Trace, phase: str) -> np.ndarray:
    hits = np.zeros(trace.layers, dtype=np.int64)
    count = 0
    for ev in trace.events:
        if ev.phase != phase:
            continue
        count += 1
        for layer, sel in enumerate(ev.path):
            for e in sel:
                if e in plan.residents[layer]:
                    hits[layer] += 1
    denom = trace.top_k * count
    if denom == 0:
        return np.zeros(trace.layers, dtype=np.float64)
    return hits / float(denom)


def simulate(
    trace: Trace, plan: PlacementPlan, cost: CostModel, cache_capacity: int = 0
) -> SimReport:
    """Replay a trace against a placement plan under a cost model.

    The transfer cache is keyed by (layer, expert) and shared across the
    whole run. Decision counts, latency totals and the static hit-rate
    summary all land in the returned report.
    """
    if plan.layers != trace.layers:
        raise ValueError(
            f"plan has {plan.layers} layers but trace has {trace.layers}"
        )
    cache = LruCache(cache_capacity)
    decisions = {kind: 0 for kind in DECISION_KINDS}
    per_layer_latency = np.zeros(trace.layers, dtype=np.float64)
    total = 0.0
    transfer_total = 0.0
    prefill_latency = 0.0
    decode_latencies: list[float] = []

    prefill_events = [ev for ev in trace.events if ev.phase == PHASE_PREFILL]
    decode_events = [ev for ev in trace.events if ev.phase != PHASE_PREFILL]

    def run(expert: int, layer: int, n: int) -> float:
        nonlocal total, transfer_total
        d = decide(expert, layer, n, plan, cache, cost)
        decisions[d.kind] += 1
        per_layer_latency[layer] += d.latency_ms
        total += d.latency_ms
        if d.kind == KIND_TRANSFER:
            transfer_total += cost.transfer_ms
        return d.latency_ms

    n_pre = len(prefill_events)
    if n_pre:
        for layer in range(trace.layers):
            selected = sorted({e for ev in prefill_events for e in ev.path[layer]})
            for expert in selected:
                prefill_latency += run(expert, layer, n_pre)

    for ev in decode_events:
        token_latency = 0.0
        for layer, sel in enumerate(ev.path):
            for expert in sel:
                token_latency += run(expert, layer, 1)
        decode_latencies.append(token_latency)

    combined = evaluate_plan(plan, trace)
    n_decisions = sum(decisions.values())
    return SimReport(
        layers=trace.layers,
        n_prefill_tokens=n_pre,
        n_decode_tokens=len(decode_events),
        per_layer_hit_rate=combined.per_layer,
        prefill_hit_rate=_phase_hit_rates(plan, trace, PHASE_PREFILL),
        decode_hit_rate=_phase_hit_rates(plan, trace, "decode"),
        mean_hit_rate=combined.mean,
        std_hit_rate=combined.std,
        gap_hit_rate=combined.gap,
        decisions=decisions,
        cache_hits=decisions[KIND_CACHE],
        cache_hit_rate=(decisions[KIND_CACHE] / n_decisions) if n_decisions else 0.0,
        total_latency_ms=total,
        prefill_latency_ms=prefill_latency,
        decode_token_latency_ms=decode_latencies,
        per_layer_latency_ms=per_layer_latency,
        per_layer_latency_std=float(per_layer_latency.std())
        if trace.layers
        else 0.0,
        transfer_ms_total=transfer_total,
        transfer_fraction=(transfer_total / total) if total > 0 else 0.0,
    )


def render_report(report: SimReport, fmt: str, label: str | None = None) -> str:
    """Render a report as human text, a CSV table, or a plot-data series.

    The CSV has one row per layer (first three columns) plus a summary row
    carrying the mean hit rate, total latency, hit-rate std, max-min gap
    and transfer fraction. Floats are written with repr so parsing the text
    back recovers identical values.
    """
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"unknown report format {fmt!r}")
    if fmt == FORMAT_CSV:
        lines = [_CSV_HEADER]
        for layer in range(report.layers):
            lines.append(
                f"{layer},{float(report.per_layer_hit_rate[layer])!r},"
                f"{float(report.per_layer_latency_ms[layer])!r},,,"
            )
        lines.append(
            f"summary,{report.mean_hit_rate!r},{report.total_latency_ms!r},"
            f"{report.std_hit_rate!r},{report.gap_hit_rate!r},"
            f"{report.transfer_fraction!r}"
        )
        return "\n".join(lines) + "\n"
    if fmt == FORMAT_PLOTDATA:
        series = label or "hit_rate"
        lines = [f"# series={series}", "layer,hit_rate"]
        for layer in range(report.layers):
            lines.append(f"{layer},{float(report.per_layer_hit_rate[layer])!r}")
        return "\n".join(lines) + "\n"

    decisions = " ".join(
        f"{kind}={report.decisions.get(kind, 0)}" for kind in DECISION_KINDS
    )
    lines = [
        f"tokens: prefill={report.n_prefill_tokens} decode={report.n_decode_tokens}",
        f"hit rate: mean={report.mean_hit_rate:.4f} std={report.std_hit_rate:.4f} "
        f"gap={report.gap_hit_rate:.4f}",
        f"decisions: {decisions}",
        f"cache: hits={report.cache_hits} rate={report.cache_hit_rate:.4f}",
        f"latency_ms: total={report.total_latency_ms:.4f} "
        f"prefill={report.prefill_latency_ms:.4f}",
        f"transfer: total_ms={report.transfer_ms_total:.4f} "
        f"fraction={report.transfer_fraction:.6f}",
        f"per_layer_latency_std: {report.per_layer_latency_std:.4f}",
    ]
    if label:
        lines.insert(0, f"report: {label}")
    return "\n".join(lines) + "\n"


def write_cost_model(path, cost: CostModel, cache_capacity: int = 0) -> None:
    doc = {
        "latency_cpu_ms": cost.latency_cpu_ms,
        "latency_gpu_ms": cost.latency_gpu_ms,
        "expert_bytes": cost.expert_bytes,
        "pcie_bw_bytes_per_ms": cost.pcie_bw_bytes_per_ms,
        "activation_return_ms": cost.activation_return_ms,
        "cache_capacity": cache_capacity,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_cost_model(path) -> tuple[CostModel, int]:
    """Read a cost model file; returns (cost, cache_capacity)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: bad cost model JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: cost model must be a JSON object")
    required = (
        "latency_cpu_ms",
        "latency_gpu_ms",
        "expert_bytes",
        "pcie_bw_bytes_per_ms",
    )
    missing = [k for k in required if k not in doc]
    if missing:
        raise FormatError(f"{path}: missing cost keys {missing}")
    known = set(required) | {"activation_return_ms", "cache_capacity"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise FormatError(f"{path}: unknown cost keys {unknown}")
    try:
        cost = CostModel(
            latency_cpu_ms=float(doc["latency_cpu_ms"]),
            latency_gpu_ms=float(doc["latency_gpu_ms"]),
            expert_bytes=float(doc["expert_bytes"]),
            pcie_bw_bytes_per_ms=float(doc["pcie_bw_bytes_per_ms"]),
            activation_return_ms=float(doc.get("activation_return_ms", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    capacity = doc.get("cache_capacity", 0)
    if not isinstance(capacity, int) or capacity < 0:
        raise FormatError(f"{path}: cache_capacity must be a non-negative integer")
    return cost, capacity
