"""Static expert residency planning and plan evaluation.

A plan names, for each layer, the expert ids that live on the accelerator.
Three strategies are provided:

* ``frequency``: globally most-activated experts, regardless of layer,
* ``path``: whole cross-layer paths by descending path frequency, never
  splitting a path,
* ``two_stage``: per-layer fill from the most frequent paths, then a
  per-layer frequency supplement, yielding an exactly uniform per-layer
  resident count.

On-disk plan format::

    plan strategy=<name> budget=<n> layers=<L>
    <layer>: <comma separated ids, ascending; empty allowed>
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .trace import ExpertFreq, PathStats, Trace

STRATEGY_FREQUENCY = "frequency"
STRATEGY_PATH = "path"
STRATEGY_TWO_STAGE = "two_stage"
STRATEGIES = (STRATEGY_FREQUENCY, STRATEGY_PATH, STRATEGY_TWO_STAGE)

_PLAN_HEADER_RE = re.compile(r"^plan strategy=(\S+) budget=(\d+) layers=(\d+)\s*$")


@dataclass(frozen=True)
class PlacementPlan:
    residents: tuple[frozenset[int], ...]  # one id set per layer
    budget: int
    strategy: str

    @property
    def layers(self) -> int:
        return len(self.residents)

    @property
    def total_residents(self) -> int:
        return sum(len(r) for r in self.residents)

    def is_resident(self, layer: int, expert: int) -> bool:
        return expert in self.residents[layer]


@dataclass
class PlanReport:
    """Per-layer hit rates of a plan against a trace, with the summary
    statistics used throughout: mean, population standard deviation, and the
    max-min gap across layers."""

    per_layer: np.ndarray
    mean: float
    std: float
    gap: float


def _check_budget(budget: int, layers: int, experts: int) -> None:
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    if budget > layers * experts:
        raise ValueError(
            f"budget {budget} exceeds total expert count {layers * experts}"
        )


def plan_frequency(freq: ExpertFreq, budget: int) -> PlacementPlan:
    """Take the globally most frequent (layer, expert) pairs.

    Ordering is by descending count, then ascending layer, then ascending
    expert id, so equal counts resolve deterministically.
    """
    _check_budget(budget, freq.layers, freq.experts_per_layer)
    triples = [
        (-int(freq.counts[layer, expert]), layer, expert)
        for layer in range(freq.layers)
        for expert in range(freq.experts_per_layer)
    ]
    triples.sort()
    residents: list[set[int]] = [set() for _ in range(freq.layers)]
    for _, layer, expert in triples[:budget]:
        residents[layer].add(expert)
    return PlacementPlan(
        tuple(frozenset(r) for r in residents), budget, STRATEGY_FREQUENCY
    )


def plan_path(stats: PathStats, budget: int) -> PlacementPlan:
    """Admit whole paths by descending frequency until the next one no
    longer fits.

    A path's cost is the number of its (layer, expert) members not already
    resident; paths are never split, so planning stops at the first path
    that would overflow the budget and any remaining budget is left unused.
    """
    _check_budget(budget, stats.layers, stats.experts_per_layer)
    residents: list[set[int]] = [set() for _ in range(stats.layers)]
    used = 0
    for path, _count in stats.entries:
        new = [
            (layer, e)
            for layer, sel in enumerate(path)
            for e in sel
            if e not in residents[layer]
        ]
        if used + len(new) > budget:
            break
        for layer, e in new:
            residents[layer].add(e)
        used += len(new)
    return PlacementPlan(
        tuple(frozenset(r) for r in residents), budget, STRATEGY_PATH
    )


def plan_two_stage(
    stats: PathStats,
    freq: ExpertFreq,
    top_k_per_layer: int,
    supplement_k_per_layer: int,
) -> PlacementPlan:
    """Per-layer path fill followed by a per-layer frequency supplement.

    Stage 1 walks paths by descending frequency and, at every layer that is
    not yet at top_k_per_layer residents, admits that path's experts there
    (ascending id within the selection); layers fill independently. Stage 2
    tops every layer up to top_k_per_layer + supplement_k_per_layer with its
    most frequent non-resident experts (ties to the lower id). The resident
    count is exactly uniform across layers.
    """
    if stats.layers != freq.layers or stats.experts_per_layer != freq.experts_per_layer:
        raise ValueError("path statistics and frequency table disagree on shape")
    if top_k_per_layer < 0 or supplement_k_per_layer < 0:
        raise ValueError("per-layer counts must be >= 0")
    per_layer = top_k_per_layer + supplement_k_per_layer
    if per_layer > freq.experts_per_layer:
        raise ValueError(
            f"{per_layer} residents per layer exceeds {freq.experts_per_layer} experts"
        )

    residents: list[set[int]] = [set() for _ in range(stats.layers)]
    for path, _count in stats.entries:
        if all(len(r) >= top_k_per_layer for r in residents):
            break
        for layer, sel in enumerate(path):
            r = residents[layer]
            for e in sorted(sel):
                if len(r) >= top_k_per_layer:
                    break
                r.add(e)

    for layer in range(stats.layers):
        r = residents[layer]
        order = sorted(
            range(freq.experts_per_layer),
            key=lambda e: (-int(freq.counts[layer, e]), e),
        )
        for e in order:
            if len(r) >= per_layer:
                break
            r.add(e)

    return PlacementPlan(
        tuple(frozenset(r) for r in residents),
        per_layer * stats.layers,
        STRATEGY_TWO_STAGE,
    )


def evaluate_plan(plan: PlacementPlan, trace: Trace) -> PlanReport:
    """Static per-layer hit rates: resident activations over top_k * events.

    Only plan residency counts as a hit here; the runtime cache is the
    simulator's concern. A trace with no events reports all-zero rates.
    """
    if plan.layers != trace.layers:
        raise ValueError(
            f"plan has {plan.layers} layers but trace has {trace.layers}"
        )
    for layer, r in enumerate(plan.residents):
        if r and (min(r) < 0 or max(r) >= trace.experts_per_layer):
            raise ValueError(f"plan layer {layer} names an out-of-range expert")
    hits = np.zeros(plan.layers, dtype=np.int64)
    for ev in trace.events:
        for layer, sel in enumerate(ev.path):
            for e in sel:
                if e in plan.residents[layer]:
                    hits[layer] += 1
    denom = trace.top_k * len(trace.events)
    if denom == 0 or plan.layers == 0:
        per_layer = np.zeros(plan.layers, dtype=np.float64)
        return PlanReport(per_layer, 0.0, 0.0, 0.0)
    per_layer = hits / float(denom)
    return PlanReport(
        per_layer,
        float(per_layer.mean()),
        float(per_layer.std()),
        float(per_layer.max() - per_layer.min()),
    )


def write_plan(path, plan: PlacementPlan) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"plan strategy={plan.strategy} budget={plan.budget} "
            f"layers={plan.layers}\n"
        )
        for layer, r in enumerate(plan.residents):
            ids = ",".join(str(e) for e in sorted(r))
            fh.write(f"{layer}: {ids}\n")


def read_plan(path) -> PlacementPlan:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        m = _PLAN_HEADER_RE.match(header)
        if not m:
            raise FormatError(f"{path}: bad plan header {header!r}")
        strategy, budget, layers = m.group(1), int(m.group(2)), int(m.group(3))
        residents: list[frozenset[int]] = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            m2 = re.match(r"^(\d+):\s*(.*)$", line)
            if not m2:
                raise FormatError(f"{path}:{lineno}: bad plan line {line!r}")
            layer = int(m2.group(1))
            if layer != len(residents):
                raise FormatError(
                    f"{path}:{lineno}: layer {layer} out of order"
                )
            ids_text = m2.group(2).strip()
            try:
                ids = (
                    frozenset(int(p) for p in ids_text.split(","))
                    if ids_text
                    else frozenset()
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad expert id") from exc
            residents.append(ids)
    if len(residents) != layers:
        raise FormatError(
            f"{path}: header says {layers} layers, found {len(residents)}"
        )
    return PlacementPlan(tuple(residents), budget, strategy)
