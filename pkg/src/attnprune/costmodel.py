"""Analytic FLOPs ledger for a U-Net-style denoiser under token pruning.

Counting conventions
--------------------
* ``batch`` counts generated images. Every per-operation constant already
  covers the classifier-free-guidance pair (conditional + unconditional
  forward pass) run for each image, which is also why the self-attention
  matrix-multiply term carries a factor 4: two forwards times two
  matrix-matrix products.
* Within a non-exempt attention block, a single pruning layer sits after
  the first attention layer: layer 1 runs at the full token count, layers
  2..N_a at the retained count. By default pruning happens after that
  first layer's feed-forward; ``prune_before_ff`` moves it earlier so the
  feed-forward already runs on retained tokens.
* ResNet blocks and samplers always run at full resolution (tokens are
  recovered before them). Two 3x3 convolutions per ResNet block plus a
  1x1 skip when the channel count changes; time embeddings, norms, and
  the latent in/out convolutions are sub-percent and ignored.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources

from .errors import (
    ResolutionIncompatibleError,
    TargetAboveFullCostError,
    TargetBelowFloorError,
    TopologyError,
    UnknownBlockError,
)
from .masks import retained_count
from .schedule import StepSchedule

LATENT_DOWNSCALE = 8  # pixels per latent token along each axis

CATEGORIES = (
    "self_attention",
    "cross_attention",
    "feed_forward",
    "projections",
    "resnet",
    "sampler",
)


@dataclass(frozen=True)
class StageSpec:
    id: str
    kind: str  # down | mid | up
    channels: int
    spatial_divisor: int
    resnet_blocks: int
    attention_blocks: int
    attention_layers_per_block: int
    has_sampler: bool

    def __post_init__(self):
        if self.kind not in ("down", "mid", "up"):
            raise TopologyError(f"bad stage kind {self.kind!r}")
        if self.channels <= 0 or self.resnet_blocks < 0:
            raise TopologyError(f"bad stage spec for {self.id}")
        d = self.spatial_divisor
        if d < 1 or d & (d - 1):
            raise TopologyError(f"spatial divisor of {self.id} must be a power of two")
        if self.attention_blocks < 0 or self.attention_layers_per_block < 0:
            raise TopologyError(f"bad attention spec for {self.id}")
        if self.attention_blocks and not self.attention_layers_per_block:
            raise TopologyError(f"{self.id} has attention blocks but zero layers")


@dataclass(frozen=True)
class UNetTopology:
    name: str
    stages: tuple[StageSpec, ...]
    text_tokens: int
    context_width: int
    latent_base: tuple[int, int]
    latent_channels: int
    head_dim: int

    def __post_init__(self):
        downs = sum(1 for s in self.stages if s.kind == "down")
        ups = sum(1 for s in self.stages if s.kind == "up")
        if downs != ups:
            raise TopologyError(f"{downs} down stages vs {ups} up stages")
        if self.text_tokens <= 0 or self.context_width <= 0 or self.head_dim <= 0:
            raise TopologyError("context/head parameters must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "UNetTopology":
        counters = {"down": 0, "mid": 0, "up": 0}
        stages = []
        for raw in doc["stages"]:
            kind = raw["kind"]
            if kind not in counters:
                raise TopologyError(f"bad stage kind {kind!r}")
            stage_id = "mid" if kind == "mid" else f"{kind}{counters[kind]}"
            counters[kind] += 1
            stages.append(
                StageSpec(
                    id=stage_id,
                    kind=kind,
                    channels=int(raw["channels"]),
                    spatial_divisor=int(raw["spatial_divisor"]),
                    resnet_blocks=int(raw["resnet_blocks"]),
                    attention_blocks=int(raw["attention_blocks"]),
                    attention_layers_per_block=int(raw["attention_layers_per_block"]),
                    has_sampler=bool(raw["has_sampler"]),
                )
            )
        return cls(
            name=str(doc.get("name", "unnamed")),
            stages=tuple(stages),
            text_tokens=int(doc["context"]["text_tokens"]),
            context_width=int(doc["context"]["context_width"]),
            latent_base=(
                int(doc["latent"]["base_height"]),
                int(doc["latent"]["base_width"]),
            ),
            latent_channels=int(doc["latent"]["in_channels"]),
            head_dim=int(doc.get("head_dim", 64)),
        )

    @classmethod
    def from_json(cls, text: str) -> "UNetTopology":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "UNetTopology":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def attention_block_ids(self) -> list[str]:
        return [
            f"{s.id}.attn{i}"
            for s in self.stages
            for i in range(s.attention_blocks)
        ]

    def check_resolution(self, resolution: int) -> None:
        deepest = max(s.spatial_divisor for s in self.stages)
        grain = LATENT_DOWNSCALE * deepest
        if resolution <= 0 or resolution % grain:
            raise ResolutionIncompatibleError(
                f"resolution {resolution} must be a positive multiple of {grain}"
            )

    def tokens_at(self, stage: StageSpec, resolution: int) -> int:
        side = resolution // LATENT_DOWNSCALE // stage.spatial_divisor
        return side * side


def default_topology() -> UNetTopology:
    """The bundled SD-XL-class backbone description."""
    text = (
        resources.files("attnprune")
        .joinpath("topologies/sdxl_base.json")
        .read_text(encoding="utf-8")
    )
    return UNetTopology.from_json(text)


@dataclass(frozen=True)
class LedgerEntry:
    block_id: str
    category: str
    flops: int


@dataclass(frozen=True)
class FlopsLedger:
    entries: tuple[LedgerEntry, ...]

    def category_totals(self) -> dict[str, int]:
        totals = {c: 0 for c in CATEGORIES}
        for e in self.entries:
            totals[e.category] += e.flops
        return totals

    def grand_total(self) -> int:
        return sum(e.flops for e in self.entries)

    def to_json(self) -> str:
        return json.dumps(
            {
                "entries": [
                    {"block": e.block_id, "category": e.category, "flops": e.flops}
                    for e in self.entries
                ],
                "category_totals": self.category_totals(),
                "grand_total": self.grand_total(),
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["block_id", "category", "flops"])
        for e in self.entries:
            writer.writerow([e.block_id, e.category, e.flops])
        return buf.getvalue()


def calibration_flops(batch: int, layers: int, tokens: int, channels: int) -> int:
    """Self-attention matrix-multiply cost of one attention block.

    Exactly ``4 * batch * layers * tokens**2 * channels`` in integer
    arithmetic: the term per-layer FLOPs counters miss.
    """
    if min(batch, layers, tokens, channels) < 0:
        raise TopologyError("calibration inputs must be non-negative")
    return 4 * batch * layers * tokens * tokens * channels


def attention_layer_flops(
    channels: int,
    tokens: int,
    text_tokens: int,
    context_width: int,
    batch: int,
    ff_tokens: int | None = None,
) -> dict[str, int]:
    """Cost of one attention layer (self + cross + feed-forward) by category.

    ``ff_tokens`` lets the pruning layer run its feed-forward on fewer
    tokens than its attention (the prune-before-feed-forward variant).
    """
    if min(channels, tokens, text_tokens, context_width, batch) < 1:
        raise TopologyError("attention layer inputs must be >= 1")
    n_f = tokens if ff_tokens is None else ff_tokens
    c2 = channels * channels
    return {
        "self_attention": 8 * batch * tokens * c2 + 4 * batch * tokens * tokens * channels,
        "cross_attention": (
            4 * batch * tokens * c2
            + 4 * batch * text_tokens * context_width * channels
            + 4 * batch * tokens * text_tokens * channels
        ),
        "feed_forward": 24 * batch * n_f * c2,
    }


def _conv3x3(c_in: int, c_out: int, hw: int, batch: int) -> int:
    return 2 * 9 * c_in * c_out * hw * batch


def _resnet_flops(c_in: int, c_out: int, hw: int, batch: int) -> int:
    cost = _conv3x3(c_in, c_out, hw, batch) + _conv3x3(c_out, c_out, hw, batch)
    if c_in != c_out:
        cost += 2 * c_in * c_out * hw * batch  # 1x1 skip projection
    return cost


def step_flops(
    topology: UNetTopology,
    exempt,
    ratio: float,
    resolution: int,
    *,
    prune_before_ff: bool = False,
    batch: int = 1,
) -> FlopsLedger:
    """Ledger of one denoising step under the given exempt set and ratio."""
    topology.check_resolution(resolution)
    exempt = frozenset(exempt)
    known = frozenset(topology.attention_block_ids())
    for block_id in exempt:
        if block_id not in known:
            raise UnknownBlockError(block_id)
    entries: list[LedgerEntry] = []
    prev_channels = topology.stages[0].channels
    for stage in topology.stages:
        tokens = topology.tokens_at(stage, resolution)
        for r in range(stage.resnet_blocks):
            c_in = prev_channels if r == 0 else stage.channels
            entries.append(
                LedgerEntry(
                    f"{stage.id}.res{r}",
                    "resnet",
                    _resnet_flops(c_in, stage.channels, tokens, batch),
                )
            )
        for b in range(stage.attention_blocks):
            block_id = f"{stage.id}.attn{b}"
            kept = (
                tokens
                if block_id in exempt
                else retained_count(tokens, ratio)
            )
            totals = {"self_attention": 0, "cross_attention": 0, "feed_forward": 0}
            for layer in range(stage.attention_layers_per_block):
                layer_tokens = tokens if layer == 0 else kept
                ff = kept if layer == 0 and prune_before_ff else layer_tokens
                layer_cost = attention_layer_flops(
                    stage.channels,
                    layer_tokens,
                    topology.text_tokens,
                    topology.context_width,
                    batch,
                    ff_tokens=ff,
                )
                for cat, flops in layer_cost.items():
                    totals[cat] += flops
            for cat in ("self_attention", "cross_attention", "feed_forward"):
                entries.append(LedgerEntry(block_id, cat, totals[cat]))
            proj = 2 * batch * tokens * stage.channels**2
            proj += 2 * batch * kept * stage.channels**2
            entries.append(LedgerEntry(block_id, "projections", proj))
        if stage.has_sampler:
            if stage.kind == "down":
                hw_out = tokens // 4
            else:
                hw_out = tokens * 4
            entries.append(
                LedgerEntry(
                    f"{stage.id}.sampler",
                    "sampler",
                    _conv3x3(stage.channels, stage.channels, hw_out, batch),
                )
            )
        prev_channels = stage.channels
    return FlopsLedger(tuple(entries))


def full_model_flops(topology: UNetTopology, resolution: int, *, batch: int = 1) -> int:
    """Grand total of an unpruned step."""
    return step_flops(topology, frozenset(), 0.0, resolution, batch=batch).grand_total()


def schedule_average_flops(
    topology: UNetTopology,
    schedule: StepSchedule,
    resolution: int,
    *,
    ratio: float | None = None,
    prune_before_ff: bool = False,
    batch: int = 1,
) -> float:
    """Arithmetic mean of step totals over the whole schedule.

    ``ratio`` overrides every step's recorded ratio (used by the budget
    solver to re-evaluate one schedule shape at many ratios).
    """
    cache: dict[tuple[frozenset[str], float], int] = {}
    total = 0
    for config in schedule.per_step:
        step_ratio = config.ratio if ratio is None else ratio
        key = (config.exempt, step_ratio)
        if key not in cache:
            cache[key] = step_flops(
                topology,
                config.exempt,
                step_ratio,
                resolution,
                prune_before_ff=prune_before_ff,
                batch=batch,
            ).grand_total()
        total += cache[key]
    return total / schedule.total_steps


@dataclass(frozen=True)
class SolveResult:
    ratio: float
    achieved: float
    full: float

    @property
    def saving(self) -> float:
        return 1.0 - self.achieved / self.full


# The per-step cost is a step function of the ratio (token counts are
# integers), so bisection targets the jump nearest the budget; one-token
# jumps are far below the 0.5% budget tolerance on realistic topologies.
_MAX_RATIO = 1.0 - 2.0**-40


def solve_ratio(
    topology: UNetTopology,
    schedule: StepSchedule,
    target_flops: float,
    resolution: int,
    *,
    prune_before_ff: bool = False,
    batch: int = 1,
    iterations: int = 60,
) -> SolveResult:
    """Find the pruning ratio whose schedule average meets ``target_flops``."""

    def avg(r: float) -> float:
        return schedule_average_flops(
            topology,
            schedule,
            resolution,
            ratio=r,
            prune_before_ff=prune_before_ff,
            batch=batch,
        )

    full = avg(0.0)
    if target_flops >= full:
        if target_flops > full * (1 + 1e-12):
            raise TargetAboveFullCostError(
                f"target {target_flops:.4g} exceeds full-model average {full:.4g}"
            )
        return SolveResult(0.0, full, full)
    floor = avg(_MAX_RATIO)
    if target_flops < floor:
        raise TargetBelowFloorError(
            f"target {target_flops:.4g} below achievable floor {floor:.4g}"
        )
    lo, hi = 0.0, _MAX_RATIO  # avg(lo) >= target >= avg(hi)
    best = min(
        (SolveResult(0.0, full, full), SolveResult(_MAX_RATIO, floor, full)),
        key=lambda s: abs(s.achieved - target_flops),
    )
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        value = avg(mid)
        candidate = SolveResult(mid, value, full)
        if abs(value - target_flops) < abs(best.achieved - target_flops):
            best = candidate
        if value >= target_flops:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return best
