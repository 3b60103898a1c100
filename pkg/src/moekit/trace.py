"""Synthetic expert-routing traces and their statistics.

A trace is a sequence of routing events for one request: every event names,
for each model layer, the set of experts the router picked (always exactly
top_k distinct ids per layer). Prefill events come first, then decode
events. The generator superimposes a single seeded hot path on per-layer
Zipf-distributed picks, with an independent rank-to-expert shuffle per layer
so the hot experts differ across layers.

On-disk grammar (one event per line, ids ascending within a layer group)::

    trace layers=<L> experts=<E> top_k=<K>
    <token_index> <prefill|decode> <e,e|e,e|...>

The path field joins per-layer groups with ``|`` and ids within a group
with ``,``; it must contain exactly L groups of K distinct ids below E.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

PHASE_PREFILL = "prefill"
PHASE_DECODE = "decode"
PHASES = (PHASE_PREFILL, PHASE_DECODE)

Path = tuple[tuple[int, ...], ...]

_HEADER_RE = re.compile(
    r"^trace layers=(\d+) experts=(\d+) top_k=(\d+)\s*$"
)


@dataclass(frozen=True)
class RoutingEvent:
    token_index: int
    phase: str
    path: Path  # per-layer ascending expert ids, len == layers


@dataclass
class Trace:
    layers: int
    experts_per_layer: int
    top_k: int
    events: list[RoutingEvent] = field(default_factory=list)

    def validate(self) -> None:
        if self.layers < 0 or self.experts_per_layer < 0:
            raise ValueError("layers and experts_per_layer must be >= 0")
        if not 0 <= self.top_k <= self.experts_per_layer:
            raise ValueError(
                f"top_k {self.top_k} must be within [0, {self.experts_per_layer}]"
            )
        seen_decode = False
        for ev in self.events:
            if ev.phase not in PHASES:
                raise ValueError(f"unknown phase {ev.phase!r}")
            if ev.phase == PHASE_DECODE:
                seen_decode = True
            elif seen_decode:
                raise ValueError("prefill event after a decode event")
            if ev.token_index < 0:
                raise ValueError(f"negative token index {ev.token_index}")
            if len(ev.path) != self.layers:
                raise ValueError(
                    f"event {ev.token_index}: path has {len(ev.path)} layers, "
                    f"expected {self.layers}"
                )
            for layer, sel in enumerate(ev.path):
                if len(sel) != self.top_k or len(set(sel)) != self.top_k:
                    raise ValueError(
                        f"event {ev.token_index} layer {layer}: expected "
                        f"{self.top_k} distinct experts, got {sel}"
                    )
                if list(sel) != sorted(sel):
                    raise ValueError(
                        f"event {ev.token_index} layer {layer}: ids not ascending"
                    )
                if sel and (sel[0] < 0 or sel[-1] >= self.experts_per_layer):
                    raise ValueError(
                        f"event {ev.token_index} layer {layer}: id out of range"
                    )

    @property
    def n_prefill(self) -> int:
        return sum(1 for ev in self.events if ev.phase == PHASE_PREFILL)

    @property
    def n_decode(self) -> int:
        return sum(1 for ev in self.events if ev.phase == PHASE_DECODE)


@dataclass(frozen=True)
class GenConfig:
    """Generator settings. The reference shape is 32 layers of 8 experts
    with top-2 routing."""

    layers: int = 32
    experts_per_layer: int = 8
    top_k: int = 2
    n_prefill_tokens: int = 0
    n_decode_tokens: int = 0
    hot_path_prob: float = 0.0
    zipf_s: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if not 1 <= self.top_k <= self.experts_per_layer:
            raise ValueError(
                f"top_k {self.top_k} must be within [1, {self.experts_per_layer}]"
            )
        if not 0.0 <= self.hot_path_prob <= 1.0:
            raise ValueError(f"hot_path_prob must be in [0, 1], got {self.hot_path_prob}")
        if self.zipf_s < 0.0:
            raise ValueError(f"zipf_s must be >= 0, got {self.zipf_s}")
        if self.n_prefill_tokens < 0 or self.n_decode_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass
class PathStats:
    """Full cross-layer path table, ordered by descending count with ties
    broken lexicographically."""

    entries: list[tuple[Path, int]]
    layers: int
    experts_per_layer: int
    top_k: int

    @property
    def total(self) -> int:
        return sum(count for _, count in self.entries)


@dataclass
class ExpertFreq:
    """Per-layer expert activation counts, shape (layers, experts)."""

    counts: np.ndarray
    top_k: int

    @property
    def layers(self) -> int:
        return self.counts.shape[0]

    @property
    def experts_per_layer(self) -> int:
        return self.counts.shape[1]


def generate_trace(cfg: GenConfig) -> Trace:
    """Draw a synthetic trace. Identical configs yield identical traces.

    Each token takes the hot path with probability hot_path_prob; otherwise
    every layer independently picks top_k experts without replacement with
    probabilities proportional to 1/(rank+1)**zipf_s, mapped through that
    layer's fixed rank-to-expert shuffle. zipf_s = 0 is uniform.
    """
    rng = np.random.default_rng(cfg.seed)
    n_experts = cfg.experts_per_layer
    hot: Path = tuple(
        tuple(sorted(rng.choice(n_experts, size=cfg.top_k, replace=False).tolist()))
        for _ in range(cfg.layers)
    )
    shuffles = [rng.permutation(n_experts) for _ in range(cfg.layers)]

    weights = 1.0 / (np.arange(n_experts) + 1.0) ** cfg.zipf_s
    log_p = np.log(weights / weights.sum())

    total = cfg.n_prefill_tokens + cfg.n_decode_tokens
    hot_mask = rng.random(total) < cfg.hot_path_prob if total else np.zeros(0, bool)

    # Per layer, draw every token's top_k ranks at once: adding Gumbel noise
    # to log-probabilities and keeping the k largest keys is equivalent to
    # sequential sampling without replacement.
    picks: list[np.ndarray] = []
    for layer in range(cfg.layers):
        keys = log_p[None, :] + rng.gumbel(size=(total, n_experts))
        ranks = np.argpartition(-keys, cfg.top_k - 1, axis=1)[:, : cfg.top_k]
        picks.append(np.sort(shuffles[layer][ranks], axis=1))

    events: list[RoutingEvent] = []
    for t in range(total):
        if hot_mask[t]:
            path = hot
        else:
            path = tuple(
                tuple(int(e) for e in picks[layer][t]) for layer in range(cfg.layers)
            )
        phase = PHASE_PREFILL if t < cfg.n_prefill_tokens else PHASE_DECODE
        events.append(RoutingEvent(t, phase, path))

    trace = Trace(cfg.layers, n_experts, cfg.top_k, events)
    trace.validate()
    return trace


def path_stats(trace: Trace) -> PathStats:
    """Count occurrences of each full cross-layer path."""
    if not trace.events:
        raise ValueError("cannot compute path statistics of an empty trace")
    counter: Counter[Path] = Counter(ev.path for ev in trace.events)
    entries = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    return PathStats(entries, trace.layers, trace.experts_per_layer, trace.top_k)


def expert_freq(trace: Trace) -> ExpertFreq:
    """Per-layer activation counts; each event adds top_k counts per layer."""
    if not trace.events:
        raise ValueError("cannot compute expert frequencies of an empty trace")
    counts = np.zeros((trace.layers, trace.experts_per_layer), dtype=np.int64)
    for ev in trace.events:
        for layer, sel in enumerate(ev.path):
            for e in sel:
                counts[layer, e] += 1
    return ExpertFreq(counts, trace.top_k)


def format_path(path: Path) -> str:
    return "|".join(",".join(str(e) for e in sel) for sel in path)


def parse_path(text: str, layers: int, experts: int, top_k: int) -> Path:
    groups = text.split("|")
    if len(groups) != layers:
        raise FormatError(f"path has {len(groups)} layer groups, expected {layers}")
    path = []
    for layer, group in enumerate(groups):
        try:
            ids = tuple(int(part) for part in group.split(",")) if group else ()
        except ValueError as exc:
            raise FormatError(f"layer {layer}: bad expert id in {group!r}") from exc
        if len(ids) != top_k or len(set(ids)) != top_k:
            raise FormatError(
                f"layer {layer}: expected {top_k} distinct ids, got {group!r}"
            )
        if list(ids) != sorted(ids):
            raise FormatError(f"layer {layer}: ids must be ascending, got {group!r}")
        if ids and (ids[0] < 0 or ids[-1] >= experts):
            raise FormatError(f"layer {layer}: id out of range in {group!r}")
        path.append(ids)
    return tuple(path)


def write_trace(path, trace: Trace) -> None:
    trace.validate()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"trace layers={trace.layers} experts={trace.experts_per_layer} "
            f"top_k={trace.top_k}\n"
        )
        for ev in trace.events:
            fh.write(f"{ev.token_index} {ev.phase} {format_path(ev.path)}\n")


def read_trace(path) -> Trace:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        m = _HEADER_RE.match(header)
        if not m:
            raise FormatError(f"{path}: bad trace header {header!r}")
        layers, experts, top_k = map(int, m.groups())
        events: list[RoutingEvent] = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields")
            idx_text, phase, path_text = parts
            try:
                token_index = int(idx_text)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad token index") from exc
            if phase not in PHASES:
                raise FormatError(f"{path}:{lineno}: unknown phase {phase!r}")
            events.append(
                RoutingEvent(
                    token_index,
                    phase,
                    parse_path(path_text, layers, experts, top_k),
                )
            )
    trace = Trace(layers, experts, top_k, events)
    try:
        trace.validate()
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return trace
