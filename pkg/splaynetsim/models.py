# file with pydantic models
import enum
import math
from typing import Any, Dict, List, Literal, Optional, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from splaynetsim.const import (
    ARRIVAL_ALL_AT_ONCE,
    ARRIVAL_POISSON,
    BASE_TIMEOUT,
    DEFAULT_ALPHA,
    DEFAULT_SEED,
    TERMINATION_COMPLETED,
    TIMEOUT_FACTOR,
    WORKLOAD_KINDS,
    WORKLOAD_PRODUCT,
    WORKLOAD_TRACE,
    WORKLOAD_UNIFORM,
    WORKLOAD_ZIPF,
)


class RotationKind(str, enum.Enum):
    """
    Local restructuring step that moves a node one or two levels up
    """

    ZIG = "zig"
    ZIG_ZIG = "zig-zig"
    ZIG_ZAG = "zig-zag"

    @property
    def cost(self) -> int:
        """
        Cyber-dollars charged for the rotation
        """
        return 1 if self is RotationKind.ZIG else 2

    @property
    def is_double(self) -> bool:
        return self is not RotationKind.ZIG


class LinkUpdate(BaseModel):
    """
    One link of one node that changed during a rotation
    """

    node: int
    field: Literal["parent", "left", "right"]
    old: Optional[int] = None
    new: Optional[int] = None

    model_config = ConfigDict(frozen=True)


class RotationEffect(BaseModel):
    """
    Result of planning or applying a rotation
    """

    kind: RotationKind
    moved_up: int
    participants: List[int]
    top: Optional[int] = None
    displaced: List[LinkUpdate] = []
    carried_children: Set[int] = set()
    abandoned_children: Set[int] = set()
    locked_set: Set[int] = set()

    @property
    def displaced_nodes(self) -> Set[int]:
        return {update.node for update in self.displaced}


class InvariantReport(BaseModel):
    """
    Outcome of a structural check of the tree
    """

    ok: bool = True
    violation: Optional[str] = None
    nodes: List[int] = []


class BufferEntry(BaseModel):
    """
    Rotation request as it is stored in node buffers.
    Identity is (level1, round, super_round); attempt changes when a request is regenerated.
    """

    super_round: int = 0
    round: int = 0
    level1: int
    level2: Optional[int] = None
    level3: Optional[int] = None
    splay_peer: int
    attempt: int = 0

    model_config = ConfigDict(frozen=True)

    @property
    def key(self) -> Tuple[int, int, int]:
        return self.level1, self.round, self.super_round

    @property
    def request_key(self) -> Tuple[int, int, int, int]:
        """
        Key of one concrete attempt of the request
        """
        return self.level1, self.round, self.super_round, self.attempt

    def references(self, node: int) -> bool:
        return node in (self.level1, self.level2, self.level3)


class BaseMessage(BaseModel):
    """
    Message sent between tree neighbors
    """

    sender: int = Field(alias="from")
    receiver: int = Field(alias="to")

    model_config = ConfigDict(populate_by_name=True, frozen=True)


class BetaRequest(BaseMessage):
    kind: Literal["beta-request"] = "beta-request"
    entry: BufferEntry


class BetaAck(BaseMessage):
    kind: Literal["beta-ack"] = "beta-ack"
    entry: BufferEntry


class LockRequest(BaseMessage):
    kind: Literal["lock-request"] = "lock-request"
    entry: BufferEntry


class LockAck(BaseMessage):
    kind: Literal["lock-ack"] = "lock-ack"
    entry: BufferEntry


class LinkChange(BaseMessage):
    kind: Literal["link-change"] = "link-change"
    relationship: Literal["parent", "left", "right"] = "parent"
    old: Optional[int] = None
    new: Optional[int] = None


class BufferChange(BaseMessage):
    kind: Literal["buffer-change"] = "buffer-change"
    entries: List[BufferEntry] = []
    completed: Optional[BufferEntry] = None


class SplayRequestMessage(BaseMessage):
    kind: Literal["splay-request"] = "splay-request"
    splay_id: int
    src: int
    dst: int
    super_round: int = 0


class SplayComplete(BaseMessage):
    kind: Literal["splay-complete"] = "splay-complete"
    splay_id: int


class SplayRequestSpec(BaseModel):
    """
    One communication request of a workload
    """

    src: int
    dst: int
    arrival_slot: int = 0

    @model_validator(mode="after")
    def endpoints_should_differ(self):
        if self.src == self.dst:
            raise ValueError(f"source and destination are equal: {self.src}")
        if self.arrival_slot < 0:
            raise ValueError("arrival slot must be non-negative")
        return self


class RequestSet(BaseModel):
    """
    Ordered collection of splay requests with empirical endpoint frequencies
    """

    requests: List[SplayRequestSpec] = []
    source_frequencies: Dict[int, float] = {}
    destination_frequencies: Dict[int, float] = {}

    @property
    def m(self) -> int:
        return len(self.requests)

    @model_validator(mode="after")
    def fill_frequencies(self):
        if self.requests and not self.source_frequencies:
            m = len(self.requests)
            sources: Dict[int, float] = {}
            destinations: Dict[int, float] = {}
            for request in self.requests:
                sources[request.src] = sources.get(request.src, 0) + 1 / m
                destinations[request.dst] = destinations.get(request.dst, 0) + 1 / m
            self.source_frequencies = sources
            self.destination_frequencies = destinations
        return self


class WorkloadSpec(BaseModel):
    """
    Workload description: kind, size and distribution parameters
    """

    kind: str = WORKLOAD_UNIFORM
    m: int = 1
    alpha: float = DEFAULT_ALPHA
    path: Optional[str] = None
    source_weights: Optional[Dict[int, float]] = None
    destination_weights: Optional[Dict[int, float]] = None
    arrival: Literal["all-at-once", "poisson"] = ARRIVAL_ALL_AT_ONCE
    rate: float = 1.0

    model_config = ConfigDict(validate_assignment=True)

    @field_validator("kind")
    def kind_should_be_known(cls, v):
        if v not in WORKLOAD_KINDS:
            raise ValueError(f"unknown workload kind '{v}', expected one of {WORKLOAD_KINDS}")
        return v

    @field_validator("m")
    def m_should_be_positive(cls, v):
        if v < 1:
            raise ValueError("m must be at least 1")
        return v

    @field_validator("alpha", "rate")
    def should_be_positive(cls, v):
        if v <= 0:
            raise ValueError("value must be positive")
        return v

    @model_validator(mode="after")
    def path_should_be_set(self):
        if self.kind == WORKLOAD_TRACE and not self.path:
            raise ValueError("trace workload requires a path")
        if (
            self.kind == WORKLOAD_PRODUCT
            and not self.path
            and not (self.source_weights and self.destination_weights)
        ):
            raise ValueError("product workload requires a weight file or both weight maps")
        return self

    @property
    def label(self) -> str:
        if self.kind == WORKLOAD_ZIPF:
            return f"{WORKLOAD_ZIPF}:{self.alpha:g}"
        if self.path:
            return f"{self.kind}:{self.path}"
        return self.kind

    @property
    def poisson(self) -> bool:
        return self.arrival == ARRIVAL_POISSON


class DetectorFlags(BaseModel):
    """
    Runtime invariant detectors switched on for a run
    """

    deadlock: bool = True
    loop: bool = True
    buffer: bool = True
    invariants: bool = True
    stall: bool = True
    locality: bool = True
    stride: int = 1

    @field_validator("stride")
    def stride_should_be_positive(cls, v):
        if v < 1:
            raise ValueError("detector stride must be at least 1")
        return v


class SimConfig(BaseModel):
    """
    Configuration of one simulator run
    """

    n: int
    seed: int = DEFAULT_SEED
    workload: WorkloadSpec = WorkloadSpec()
    max_timeslots: Optional[int] = None
    detectors: DetectorFlags = DetectorFlags()
    lockstep_rounds: bool = False
    super_rounds: int = 1
    log_events: bool = False

    @field_validator("n")
    def n_should_be_positive(cls, v):
        if v < 1:
            raise ValueError("n must be at least 1")
        return v

    @field_validator("max_timeslots")
    def max_timeslots_should_be_positive(cls, v):
        if v is not None and v <= 0:
            raise ValueError("max_timeslots must be positive")
        return v

    @field_validator("super_rounds")
    def super_rounds_should_be_positive(cls, v):
        if v < 1:
            raise ValueError("super_rounds must be at least 1")
        return v

    @property
    def timeout(self) -> int:
        """
        Slot budget of the run: explicit value or the default that scales with n and m
        """
        if self.max_timeslots is not None:
            return self.max_timeslots
        m = self.workload.m * self.super_rounds
        log_n = max(1, math.ceil(math.log2(max(self.n, 2))))
        log_m = max(1, math.ceil(math.log2(m + 1)))
        return BASE_TIMEOUT + TIMEOUT_FACTOR * m * log_n * log_m


class RotationRecord(BaseModel):
    """
    Ledger entry of one committed rotation
    """

    requester: int
    splay_id: Optional[int] = None
    kind: RotationKind
    super_round: int = 0
    round: int = 0
    request_slot: int
    commit_slot: int
    release_slot: Optional[int] = None
    delta: float = 0.0
    bound: float = 0.0
    bound_ok: bool = True
    distance_before: Optional[int] = None
    distance_after: Optional[int] = None

    @property
    def cost(self) -> int:
        return self.kind.cost

    @property
    def latency(self) -> Optional[int]:
        """
        Time-slots from request generation to the release of the last lock, inclusive
        """
        if self.release_slot is None:
            return None
        return self.release_slot - self.request_slot + 1


class SplayRecord(BaseModel):
    """
    Ledger entry of one splay request
    """

    splay_id: int
    src: int
    dst: int
    super_round: int = 0
    arrival_slot: int = 0
    start_slot: Optional[int] = None
    completed_slot: Optional[int] = None
    initial_distance: Optional[int] = None
    max_distance: int = 0
    final_distance: Optional[int] = None
    rotations_src: int = 0
    rotations_dst: int = 0
    cost: int = 0

    @property
    def rotations(self) -> int:
        return self.rotations_src + self.rotations_dst

    @property
    def completed(self) -> bool:
        return self.completed_slot is not None

    @property
    def queueing_delay(self) -> Optional[int]:
        if self.start_slot is None:
            return None
        return self.start_slot - self.arrival_slot


class CostLedger(BaseModel):
    """
    Per-run accounting of rotations and splays
    """

    rotations: List[RotationRecord] = []
    splays: List[SplayRecord] = []

    @property
    def total_rotations(self) -> int:
        return len(self.rotations)

    @property
    def cyber_dollars(self) -> int:
        return sum(record.cost for record in self.rotations)

    @property
    def max_splay_cost(self) -> int:
        return max((splay.rotations for splay in self.splays), default=0)


class RotationBoundCheck(BaseModel):
    """
    Comparison of a rotation's rank change against its amortized bound
    """

    ok: bool
    delta: float
    bound: float


class SplayCostCheck(BaseModel):
    """
    Comparison of the rotations of a splay against half its maximum distance plus two
    """

    ok: bool
    rotations: int
    bound: float


class RunResult(BaseModel):
    """
    Everything a finished run leaves behind.
    tree and initial_tree hold topology.Tree objects; log holds a simulator.EventLog.
    """

    config: SimConfig
    requests: List[RequestSet] = []
    ledger: CostLedger = CostLedger()
    tree: Any = None
    initial_tree: Any = None
    log: Any = None
    termination: str = TERMINATION_COMPLETED
    diagnostic: Optional[str] = None
    timeslots: int = 0
    max_buffer: int = 0

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def m(self) -> int:
        return sum(request_set.m for request_set in self.requests)


class RunReport(BaseModel):
    """
    Per-run summary emitted by sweeps
    """

    n: int
    m: int
    workload: str
    seed: Optional[int] = None
    rotations: float
    rounds: float
    timeslots: float
    H_src: float
    H_dst: float
    D: float
    rot_per_m: float
    rounds_per_m: float
    slots_per_m: float
    rot_per_m_log_n: float
    rot_per_entropy: float
    slots_per_m_log_n_log_m: float
    agg: Optional[str] = None
    cyber_dollars: float = 0
    queueing_delay: float = 0.0
    round_length_mean: float = 0.0
    round_length_p95: float = 0.0
    round_length_max: float = 0.0
    total_rank_variation: float = 0.0
    sum_delta: float = 0.0
    amortized_total: float = 0.0
    rotation_bound_violations: int = 0
    splay_bound_violations: int = 0
    max_buffer: int = 0
    termination: str = TERMINATION_COMPLETED
    diagnostic: Optional[str] = None


class OracleResult(BaseModel):
    """
    Result of an oracle splay: final links, rotation trace and cost
    """

    links: Dict[int, Tuple[Optional[int], Optional[int], Optional[int]]]
    root: int
    trace: List[Tuple[int, RotationKind]] = []
    cost: int = 0
    rounds: int = 0


class VerifyReport(BaseModel):
    """
    Outcome of an oracle equivalence suite
    """

    n: int
    checked: int = 0
    mismatches: List[Tuple[int, int]] = []
    diagnostics: List[str] = []

    @property
    def ok(self) -> bool:
        return not self.mismatches


class ExperimentSpec(BaseModel):
    """
    Sweep over tree sizes and seeds for one workload
    """

    nodes: List[int]
    seeds: List[int] = [DEFAULT_SEED]
    workload: WorkloadSpec = WorkloadSpec()
    requests_frac: Optional[float] = None
    lockstep_rounds: bool = False
    super_rounds: int = 1
    max_timeslots: Optional[int] = None
    detectors: DetectorFlags = DetectorFlags()
    log_events: bool = False

    @field_validator("nodes", "seeds")
    def should_not_be_empty(cls, v):
        if not v:
            raise ValueError("list must not be empty")
        return v

    @field_validator("requests_frac")
    def frac_should_be_positive(cls, v):
        if v is not None and v <= 0:
            raise ValueError("requests fraction must be positive")
        return v

    def requests_for(self, n: int) -> int:
        """
        Requests per run for a tree of n nodes: the fraction of n when set, else workload.m
        """
        if self.requests_frac is None:
            return self.workload.m
        return max(1, round(self.requests_frac * n))
