"""Training-free attention-map token pruning toolkit.

Scores tokens by power-iterating importance over attention maps, prunes
the low scorers with deterministic top-k masks, reconstructs complete
grids before convolutions (similarity copy plus baselines), plans
per-denoising-step prune-less schedules, and prices everything with an
analytic U-Net FLOPs ledger and budget solver.
"""

__version__ = "0.1.0"

# Protocol tag for foreign-language bridges; bump on any change to the
# CLI surface, file formats, or error codes.
ABI_VERSION = 1

from .costmodel import (  # noqa: E402
    CATEGORIES,
    FlopsLedger,
    LedgerEntry,
    SolveResult,
    StageSpec,
    UNetTopology,
    attention_layer_flops,
    calibration_flops,
    default_topology,
    full_model_flops,
    schedule_average_flops,
    solve_ratio,
    step_flops,
)
from .errors import PruneToolError, ValidationError  # noqa: E402
from .maps import (  # noqa: E402
    AttentionMap,
    FeatureMap,
    HeadStack,
    average_heads,
    map_variance,
    stack_heads,
    validate_attention,
)
from .masks import (  # noqa: E402
    PruneMask,
    apply_mask,
    build_mask,
    random_mask,
    retained_count,
)
from .pagerank import (  # noqa: E402
    Entropy,
    HardClip,
    ImportanceScores,
    Power,
    ScoreResult,
    ScoringOptions,
    SelfIdentity,
    SoftClip,
    aggregate_heads_rms,
    map_key_to_query,
    pagerank_scores,
    score_stack,
)
from .recovery import (  # noqa: E402
    recover_bicubic,
    recover_direct_copy,
    recover_similarity_copy,
    recover_zero_pad,
)
from .schedule import (  # noqa: E402
    Pick,
    SkipPolicy,
    StepConfig,
    StepSchedule,
    build_schedule,
    recommend_tau,
    resolve_policy,
)
from .simulate import (  # noqa: E402
    SimulationConfig,
    SimulationReport,
    recovery_benchmark,
    run_simulation,
)
from .synth import substream, synth_attention, synth_features  # noqa: E402
