"""End-to-end pipeline simulation and recovery benchmarking.

Each simulated step runs the full per-block cycle on synthetic data:
synthesize per-head attention, score tokens, build and apply the mask,
recover before the (simulated) convolution, and measure the L2 error of
the recovered rows against the unpruned features. FLOPs per step come
from the analytic cost model on the real topology, so the numeric path
stays desk-sized while the ledger reflects the full backbone.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .costmodel import (
    UNetTopology,
    default_topology,
    full_model_flops,
    solve_ratio,
    step_flops,
)
from .errors import ConfigError
from .maps import FeatureMap, average_heads, map_variance, validate_attention
from .masks import PruneMask, apply_mask, build_mask, retained_count
from .pagerank import Mapper, ScoringOptions, SelfIdentity, score_stack
from .recovery import (
    recover_bicubic,
    recover_direct_copy,
    recover_similarity_copy,
    recover_zero_pad,
)
from .schedule import SkipPolicy, StepSchedule, build_schedule
from .synth import substream, synth_attention, synth_features

RECOVERY_METHODS = ("simcopy", "zeropad", "bicubic", "directcopy")


def mapper_from_spec(spec: dict[str, Any]) -> Mapper:
    from . import pagerank

    kind = spec.get("kind", "self")
    try:
        if kind in ("self", "self_identity"):
            return pagerank.SelfIdentity()
        if kind == "entropy":
            return pagerank.Entropy()
        if kind in ("hardclip", "hard_clip"):
            return pagerank.HardClip(float(spec.get("eta", 0.2)))
        if kind in ("softclip", "soft_clip"):
            return pagerank.SoftClip(float(spec.get("eta", 0.2)))
        if kind == "power":
            beta = spec.get("beta")
            return pagerank.Power(
                float(spec.get("alpha", 5.0)), None if beta is None else float(beta)
            )
    except ValueError as exc:
        raise ConfigError(f"bad mapper parameters: {exc}") from exc
    raise ConfigError(f"unknown mapper kind {kind!r}")


@dataclass(frozen=True)
class SimulationConfig:
    seed: int
    topology_path: str | None = None
    resolution: int = 1024
    total_steps: int = 50
    tau: int = 15
    policy: str = "FL"
    include_mid: bool = False
    invert_schedule: bool = False
    ratio: float | None = None
    target_tflops: float | None = None
    mapper: dict[str, Any] = field(default_factory=lambda: {"kind": "self"})
    recovery: str = "simcopy"
    grid: int = 16
    heads: int = 4
    channels: int = 8
    concentration: float | tuple[float, float] = 4.0
    prune_before_ff: bool = False
    always_exempt: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.ratio is None) == (self.target_tflops is None):
            raise ConfigError("set exactly one of ratio / target_tflops")
        if self.recovery not in RECOVERY_METHODS:
            raise ConfigError(f"unknown recovery method {self.recovery!r}")
        if self.grid < 2 or self.heads < 1 or self.channels < 1:
            raise ConfigError("grid/heads/channels too small")

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SimulationConfig":
        if "seed" not in doc:
            raise ConfigError("config needs an explicit seed")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        if isinstance(doc.get("concentration"), list):
            doc["concentration"] = tuple(doc["concentration"])
        if "always_exempt" in doc:
            doc["always_exempt"] = tuple(doc["always_exempt"])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "SimulationConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def as_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "seed": self.seed,
            "topology_path": self.topology_path,
            "resolution": self.resolution,
            "total_steps": self.total_steps,
            "tau": self.tau,
            "policy": self.policy,
            "include_mid": self.include_mid,
            "invert_schedule": self.invert_schedule,
            "ratio": self.ratio,
            "target_tflops": self.target_tflops,
            "mapper": dict(self.mapper),
            "recovery": self.recovery,
            "grid": self.grid,
            "heads": self.heads,
            "channels": self.channels,
            "concentration": list(self.concentration)
            if isinstance(self.concentration, tuple)
            else self.concentration,
            "prune_before_ff": self.prune_before_ff,
            "always_exempt": list(self.always_exempt),
        }
        return doc


@dataclass(frozen=True)
class StepRecord:
    step: int
    exempt: tuple[str, ...]
    retained: dict[str, int]
    flops: int
    variance: float
    recovery_l2: float


@dataclass(frozen=True)
class SimulationReport:
    config: SimulationConfig
    ratio: float
    full_step_flops: int
    steps: tuple[StepRecord, ...]
    wall_seconds: float  # not serialized; reports must be byte-reproducible

    @property
    def average_flops(self) -> float:
        return sum(r.flops for r in self.steps) / len(self.steps)

    @property
    def saving_vs_full(self) -> float:
        return 1.0 - self.average_flops / self.full_step_flops

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config.as_dict(),
                "ratio": self.ratio,
                "full_step_flops": self.full_step_flops,
                "average_flops": self.average_flops,
                "saving_vs_full": self.saving_vs_full,
                "steps": [
                    {
                        "step": r.step,
                        "exempt": list(r.exempt),
                        "retained": r.retained,
                        "flops": r.flops,
                        "variance": r.variance,
                        "recovery_l2": r.recovery_l2,
                    }
                    for r in self.steps
                ],
            },
            indent=2,
        )


def _concentration_at(config: SimulationConfig, step: int) -> float:
    c = config.concentration
    if isinstance(c, tuple):
        lo, hi = c
        if config.total_steps == 1:
            return float(hi)
        return float(lo + (hi - lo) * step / (config.total_steps - 1))
    return float(c)


def _recover(method: str, pruned, mask, attn_avg, cached) -> FeatureMap:
    if method == "simcopy":
        return recover_similarity_copy(pruned, mask, attn_avg)
    if method == "zeropad":
        return recover_zero_pad(pruned, mask)
    if method == "bicubic":
        return recover_bicubic(pruned, mask)
    return recover_direct_copy(pruned, mask, cached)


def _pruned_l2(recovered: FeatureMap, original: FeatureMap, mask: PruneMask) -> float:
    missing = mask.pruned
    if not missing.size:
        return 0.0
    diff = recovered.values[missing] - original.values[missing]
    return float(np.sqrt((diff * diff).sum()))


def load_topology(path: str | None) -> UNetTopology:
    return default_topology() if path in (None, "", "default") else UNetTopology.load(path)


def resolve_schedule(
    config: SimulationConfig, topology: UNetTopology
) -> tuple[StepSchedule, float]:
    """Build the step schedule, solving the budget for a ratio if needed."""
    policy = SkipPolicy.from_code(config.policy, config.include_mid)
    template = build_schedule(
        config.total_steps,
        config.tau,
        policy,
        topology,
        0.0,
        invert=config.invert_schedule,
        always_exempt=config.always_exempt,
    )
    if config.ratio is not None:
        ratio = config.ratio
    else:
        ratio = solve_ratio(
            topology,
            template,
            config.target_tflops * 1e12,
            config.resolution,
            prune_before_ff=config.prune_before_ff,
        ).ratio
    return (
        build_schedule(
            config.total_steps,
            config.tau,
            policy,
            topology,
            ratio,
            invert=config.invert_schedule,
            always_exempt=config.always_exempt,
        ),
        ratio,
    )


def run_simulation(config: SimulationConfig) -> SimulationReport:
    started = time.perf_counter()
    topology = load_topology(config.topology_path)
    schedule, ratio = resolve_schedule(config, topology)
    mapper = mapper_from_spec(config.mapper)
    options = ScoringOptions()
    block_ids = topology.attention_block_ids()
    block_tokens = {
        f"{s.id}.attn{i}": topology.tokens_at(s, config.resolution)
        for s in topology.stages
        for i in range(s.attention_blocks)
    }
    flops_cache: dict[frozenset, int] = {}
    records = []
    n = config.grid * config.grid
    for step, step_config in enumerate(schedule.per_step):
        if step_config.exempt not in flops_cache:
            flops_cache[step_config.exempt] = step_flops(
                topology,
                step_config.exempt,
                ratio,
                config.resolution,
                prune_before_ff=config.prune_before_ff,
            ).grand_total()
        concentration = _concentration_at(config, step)
        variances = []
        errors = []
        retained = {}
        for idx, block_id in enumerate(block_ids):
            attn_seed, feat_seed = substream(config.seed, step, idx).spawn(2)
            stack = synth_attention(n, config.heads, concentration, attn_seed)
            avg = average_heads(stack)
            variances.append(map_variance(avg))
            exempt = block_id in step_config.exempt
            retained[block_id] = (
                block_tokens[block_id]
                if exempt
                else retained_count(block_tokens[block_id], ratio)
            )
            if exempt:
                errors.append(0.0)
                continue
            # The block input (what direct copy would fall back to) and the
            # residual the attention layers add on top of it.
            cached_seed, update_seed = feat_seed.spawn(2)
            cached = synth_features(config.grid, config.grid, config.channels, cached_seed)
            update = synth_features(config.grid, config.grid, config.channels, update_seed)
            features = FeatureMap(config.grid, config.grid, cached.values + update.values)
            scores = score_stack(list(stack.heads), mapper, options)
            mask = build_mask(scores, ratio)
            pruned = apply_mask(features, mask)
            recovered = _recover(config.recovery, pruned, mask, avg, cached)
            errors.append(_pruned_l2(recovered, features, mask))
        records.append(
            StepRecord(
                step=step,
                exempt=tuple(sorted(step_config.exempt)),
                retained=retained,
                flops=flops_cache[step_config.exempt],
                variance=float(np.mean(variances)),
                recovery_l2=float(np.mean(errors)),
            )
        )
    return SimulationReport(
        config=config,
        ratio=ratio,
        full_step_flops=full_model_flops(topology, config.resolution),
        steps=tuple(records),
        wall_seconds=time.perf_counter() - started,
    )


# --- recovery benchmark fixtures ---------------------------------------


def _random_fixture(grid: int, channels: int, heads: int, ratio: float, seed):
    cached_seed, update_seed, attn_seed = seed.spawn(3)
    cached = synth_features(grid, grid, channels, cached_seed)
    update = synth_features(grid, grid, channels, update_seed)
    features = FeatureMap(grid, grid, cached.values + update.values)
    stack = synth_attention(grid * grid, heads, 4.0, attn_seed)
    avg = average_heads(stack)
    scores = score_stack(list(stack.heads))
    mask = build_mask(scores, ratio)
    return features, mask, avg, cached


def _duplicate_fixture(grid: int, channels: int, ratio: float, seed):
    """Every pruned token has an exact twin among the retained tokens and the
    averaged attention column points at it, so similarity copy is lossless."""
    n = grid * grid
    rng = np.random.Generator(np.random.Philox(seed))
    k = retained_count(n, ratio)
    retained = np.sort(rng.permutation(n)[:k])
    mask = PruneMask(n, retained, ratio)
    missing = mask.pruned
    # Round-robin twin assignment keeps any one source row's attention mass
    # bounded, so its dominant entries survive row normalization.
    twins = retained[np.arange(missing.size) % k]
    values = rng.standard_normal((n, channels))
    values[missing] = values[twins]
    weights = rng.uniform(0.1, 1.0, (n, n))
    weights[twins, missing] = 50.0
    amap = validate_attention(weights / weights.sum(axis=1, keepdims=True))
    features = FeatureMap(grid, grid, values)
    cached = FeatureMap(grid, grid, rng.standard_normal((n, channels)))
    received = amap.entries[np.ix_(retained, missing)]
    assert np.array_equal(retained[np.argmax(received, axis=0)], twins)
    return features, mask, amap, cached


def _isolated_fixture(grid: int, channels: int, seed):
    """Retain only a 2x2 corner: almost every pruned token sits in a sea of
    pruned tokens, where interpolation collapses to (near) zero fill."""
    n = grid * grid
    retained = np.asarray([0, 1, grid, grid + 1])
    ratio = 1.0 - len(retained) / n
    mask = PruneMask(n, retained, ratio)
    rng = np.random.Generator(np.random.Philox(seed))
    values = 1.0 + 0.25 * rng.standard_normal((n, channels))
    cached = FeatureMap(grid, grid, rng.standard_normal((n, channels)))
    stack = synth_attention(n, 2, 2.0, seed.spawn(1)[0])
    return FeatureMap(grid, grid, values), mask, average_heads(stack), cached


def recovery_benchmark(
    grid: int = 16,
    channels: int = 8,
    heads: int = 4,
    ratio: float = 0.6,
    seed: int = 0,
    random_fixtures: int = 5,
) -> list[dict[str, Any]]:
    """Compare all recovery methods on shared fixtures; returns table rows.

    Structural guarantees are asserted: similarity copy is exact on the
    duplicate fixture (and never worse than zero padding there), and on the
    isolated-region fixture bicubic degenerates to within 10% of zero
    padding.
    """
    fixtures: list[tuple[str, FeatureMap, PruneMask, Any, FeatureMap]] = []
    identity = _random_fixture(grid, channels, heads, 0.0, substream(seed, 900))
    fixtures.append(("identity", *identity))
    for i in range(random_fixtures):
        fixture = _random_fixture(grid, channels, heads, ratio, substream(seed, 100 + i))
        fixtures.append((f"random-{i}", *fixture))
    fixtures.append(
        ("duplicate", *_duplicate_fixture(grid, channels, ratio, substream(seed, 200)))
    )
    fixtures.append(("isolated", *_isolated_fixture(grid, channels, substream(seed, 300))))

    rows = []
    by_key: dict[tuple[str, str], float] = {}
    for name, features, mask, avg, cached in fixtures:
        pruned = apply_mask(features, mask)
        for method in RECOVERY_METHODS:
            recovered = _recover(method, pruned, mask, avg, cached)
            err = _pruned_l2(recovered, features, mask)
            by_key[(name, method)] = err
            rows.append({"fixture": name, "method": method, "l2_error": err})
    assert by_key[("duplicate", "simcopy")] == 0.0
    assert by_key[("duplicate", "zeropad")] > 0.0
    assert by_key[("duplicate", "simcopy")] <= by_key[("duplicate", "zeropad")]
    zp, bc = by_key[("isolated", "zeropad")], by_key[("isolated", "bicubic")]
    assert abs(bc - zp) <= 0.10 * zp
    for method in RECOVERY_METHODS:
        assert by_key[("identity", method)] == 0.0
    return rows
