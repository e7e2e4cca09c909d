"""steertab: a steerable, dual-rate tabletop manipulation stack.

A planar pick-and-place simulator, a structured spatial chain-of-thought
codec, a rule-based reasoner, a flow-matching action head trained from
scratch on numpy, a dual-rate runtime that accepts operator guidance
mid-episode, plus data generation, a shift-suite benchmark, and a live
WebSocket gateway.
"""

from .codec import (
    COORD_SCALE,
    CotParseError,
    CotRangeError,
    CotSemanticError,
    CotSyntaxError,
    CotValidationError,
    ImageBox,
    ImagePoint,
    ObjectRef,
    StructuredCot,
    box_iou,
    dequantize_coord,
    parse_cot,
    quantize_coord,
    serialize_cot,
    snap_cot,
)
from .guide import (
    BoxPrior,
    GuidanceEvent,
    PointPrior,
    PriorValidationError,
    SpatialPrior,
    TracePrior,
    make_eval_trace,
    resample_trace,
    validate_prior,
)
from .sim import (
    Observation,
    PerturbationConfig,
    SceneState,
    TaskSpec,
    check_success,
    expert_policy,
    observe,
    reset,
    rollout_expert,
    step,
)
from .reasoner import ReasoningMemory, ablate_cot, encode_memory, ground, plan
from .flow import (
    ActionChunk,
    FlowModel,
    TrainConfig,
    featurize,
    fm_loss_and_grad,
    load_model,
    sample_chunk,
    save_model,
    train,
)
from .runtime import (
    EpisodeEngine,
    EpisodeTrace,
    Policy,
    RuntimeConfig,
    StaleEpisodeError,
    effective_tick,
    run_episode,
    staleness_report,
)
from .datagen import RecipeConfig, build_dataset, collect_trajectories
from .bench import Report, SuiteConfig, emit_report, failure_recovery, run_suite
from .gateway import GatewayConfig, create_app

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
