import logging
from collections import defaultdict
from typing import Dict, Iterator, List, NamedTuple, Optional, Set, Tuple, Union

import networkx as nx

from splaynetsim.const import (
    EVENT_ABORT,
    EVENT_COMMIT,
    EVENT_DETECTOR,
    EVENT_LOG_HEADER,
    LOOP_WINDOW,
    PKG_NAME,
    STALL_WINDOW,
    TERMINATION_COMPLETED,
    TERMINATION_DETECTOR,
    TERMINATION_TIMEOUT,
)
from splaynetsim.exceptions import (
    BufferOverflowError,
    DetectorFiredError,
    ProtocolError,
    RotationError,
    SplayRequestError,
    TreeStructureError,
)
from splaynetsim.models import (
    BaseMessage,
    BufferEntry,
    CostLedger,
    RequestSet,
    RotationKind,
    RotationRecord,
    RunResult,
    SimConfig,
    SplayRecord,
    SplayRequestMessage,
)
from splaynetsim.modules import protocol, rotation
from splaynetsim.modules.analysis import check_rotation_bound, snapshot_ranks
from splaynetsim.modules.protocol import NodeState, ProtocolContext
from splaynetsim.modules.topology import (
    Tree,
    build_balanced_tree,
    check_invariants,
    distance,
    is_in_subtree,
)
from splaynetsim.modules.workload import generate

_LOGGER = logging.getLogger(PKG_NAME)


class EventRecord(NamedTuple):
    slot: int
    node: int
    event: str
    detail: str

    def to_line(self) -> str:
        return f"{self.slot},{self.node},{self.event},{self.detail}"


class EventLog:
    """
    Append-only log of protocol events, one `slot,node,event,detail` line each
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._records: List[EventRecord] = []

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self._records)

    def append(self, slot: int, node: int, event: str, detail: str = "") -> None:
        if self.enabled:
            self._records.append(EventRecord(slot, node, event, detail))

    def at(self, slot: int) -> List[EventRecord]:
        return [record for record in self._records if record.slot == slot]

    def of(self, event: str, node: Optional[int] = None) -> List[EventRecord]:
        return [
            record
            for record in self._records
            if record.event == event and (node is None or record.node == node)
        ]

    def to_lines(self) -> List[str]:
        return [record.to_line() for record in self._records]

    def write(self, path: str) -> None:
        with open(path, "w") as log_file:
            log_file.write(EVENT_LOG_HEADER + "\n")
            for line in self.to_lines():
                log_file.write(line + "\n")


class _Request:
    """
    Scheduler-side record of one rotation request attempt and the chain learned so far
    """

    __slots__ = (
        "entry",
        "splay_id",
        "kind",
        "v",
        "w",
        "top",
        "top_known",
        "request_slot",
        "holders",
        "buffered_at",
        "record",
    )

    def __init__(self, entry: BufferEntry, splay_id: Optional[int], request_slot: int):
        self.entry = entry
        self.splay_id = splay_id
        self.kind: Optional[RotationKind] = None
        self.v = entry.level2
        self.w: Optional[int] = None
        self.top: Optional[int] = None
        self.top_known = False
        self.request_slot = request_slot
        self.holders: Set[int] = set()
        self.buffered_at: Set[int] = set()
        self.record: Optional[RotationRecord] = None

    @property
    def requester(self) -> int:
        return self.entry.level1


class _Splay:
    __slots__ = ("record", "no_progress")

    def __init__(self, record: SplayRecord):
        self.record = record
        self.no_progress = 0

    @property
    def active(self) -> bool:
        return self.record.start_slot is not None and self.record.completed_slot is None


class Simulator(ProtocolContext):
    """
    Deterministic slot-by-slot scheduler of the concurrent splay protocol.

    Every slot: release and admit splays, deliver the messages sent in the previous slot, run
    node handlers in ascending id order, commit ready rotations in ascending requester order,
    abort requests the commits made stale, then run the detectors.
    """

    def __init__(
        self,
        config: SimConfig,
        requests: Union[RequestSet, List[RequestSet], None] = None,
        tree: Optional[Tree] = None,
    ):
        """
        :param config: run configuration
        :param requests: request set(s), one per super-round [Default: generated from config]
        :param tree: initial tree [Default: balanced tree over 1..n]
        """
        self.config = config
        self.tree = tree if tree is not None else build_balanced_tree(config.n)
        self.initial_tree = self.tree.copy()
        self.states: Dict[int, NodeState] = {x: NodeState(x, self.tree) for x in self.tree.ids}

        if requests is None:
            requests = [
                generate(
                    config.workload,
                    self.tree.n,
                    config.seed if r == 0 else [config.seed, r],
                    self.tree.ids,
                )
                for r in range(config.super_rounds)
            ]
        elif isinstance(requests, RequestSet):
            requests = [requests]
        for request_set in requests:
            for request in request_set.requests:
                if request.src not in self.tree or request.dst not in self.tree:
                    raise SplayRequestError(f"Unknown endpoint in {request.src}->{request.dst}")
        self.batches: List[RequestSet] = list(requests)

        self.log = EventLog(enabled=config.log_events)
        self.ledger = CostLedger()
        self.slot = 0
        self.max_buffer = 0
        self.termination = TERMINATION_COMPLETED
        self.diagnostic: Optional[str] = None

        self._inbox: List[BaseMessage] = []
        self._outbox: List[BaseMessage] = []
        self._splays: Dict[int, _Splay] = {}
        self._queue: List[_Splay] = []
        self._next_batch = 0
        self._busy: Dict[int, int] = {}
        self._requests: Dict[Tuple[int, int, int], _Request] = {}
        self._releasing: Dict[Tuple[int, int, int, int], _Request] = {}
        self._commit_ready: List[BufferEntry] = []
        self._attempts: Dict[int, int] = defaultdict(int)
        self._round_started: Dict[Tuple[int, int, int], int] = {}
        self._watch: Set[int] = set()
        self._locked = 0
        self._barrier_open = True
        self._round_start = 0
        self._last_commit = 0
        self._live_since: Optional[int] = None

    # ProtocolContext

    def is_live(self, entry: BufferEntry) -> bool:
        request = self._requests.get(entry.key)
        return request is not None and request.entry.attempt == entry.attempt

    def may_generate(self, node_id: int) -> bool:
        return not self.config.lockstep_rounds or self._barrier_open

    def may_grant_top(self, node_id: int) -> bool:
        # requests of a round reach their tops within three slots of the barrier
        return not self.config.lockstep_rounds or self.slot >= self._round_start + 3

    def record(self, node_id: int, event: str, detail: str = "") -> None:
        self.log.append(self.slot, node_id, event, detail)

    def next_attempt(self, node_id: int) -> int:
        attempt = self._attempts[node_id]
        self._attempts[node_id] += 1
        return attempt

    def register_request(self, entry: BufferEntry) -> None:
        if entry.key in self._requests:
            raise ProtocolError(f"Node {entry.level1} already has a live request {entry.key}")
        if not self._requests:
            self._live_since = self.slot
        state = self.states[entry.level1]
        splay_id = state.active_splay.splay_id if state.active_splay else None
        request_slot = self._round_started.setdefault(entry.key, self.slot)
        self._requests[entry.key] = _Request(entry, splay_id, request_slot)

    def note_route(
        self,
        entry: BufferEntry,
        kind: Optional[RotationKind] = None,
        w: Optional[int] = None,
        top: Optional[int] = None,
        top_known: bool = False,
    ) -> None:
        request = self._requests[entry.key]
        request.entry = entry
        if kind is not None:
            request.kind = kind
        if w is not None:
            request.w = w
        if top_known:
            request.top = top
            request.top_known = True

    def buffered(self, entry: BufferEntry, node_id: int) -> None:
        request = self._requests.get(entry.key)
        if request is not None:
            request.buffered_at.add(node_id)

    def hold(self, entry: BufferEntry, node_id: int) -> None:
        self._requests[entry.key].holders.add(node_id)
        self._locked += 1

    def request_commit(self, entry: BufferEntry) -> None:
        self._commit_ready.append(entry)

    def released(self, entry: BufferEntry, node_id: int) -> None:
        request = self._releasing.get(entry.request_key)
        if request is None:
            raise ProtocolError(f"Node {node_id} released unknown request {entry.key}")
        request.holders.discard(node_id)
        self._locked -= 1
        if not request.holders:
            request.record.release_slot = self.slot
            del self._releasing[entry.request_key]

    def splay_accepted(self, splay_id: int, node_id: int) -> None:
        self._watch.add(node_id)

    def splay_finished(self, splay_id: int, node_id: int) -> None:
        splay = self._splays[splay_id]
        splay.record.completed_slot = self.slot
        splay.record.final_distance = distance(self.tree, splay.record.src, splay.record.dst)
        if self._busy.get(node_id) == splay_id:
            del self._busy[node_id]
        _LOGGER.debug(f"Splay {splay_id} completed at slot {self.slot}")

    def splay_closed(self, splay_id: int, node_id: int) -> None:
        if self._busy.get(node_id) == splay_id:
            del self._busy[node_id]

    # public helpers

    def watch(self, *node_ids: int) -> None:
        self._watch.update(node_ids)

    @property
    def live_requests(self) -> List[BufferEntry]:
        return [request.entry for request in self._requests.values()]

    @property
    def locked_nodes(self) -> int:
        return self._locked

    def splay_record(self, splay_id: int) -> SplayRecord:
        return self._splays[splay_id].record

    # scheduling

    def _release_batches(self) -> None:
        while self._next_batch < len(self.batches):
            if self._next_batch > 0 and any(
                not splay.record.completed
                for splay in self._splays.values()
                if splay.record.super_round == self._next_batch - 1
            ):
                return None
            batch = self._next_batch
            for request in self.batches[batch].requests:
                splay_id = len(self._splays)
                record = SplayRecord(
                    splay_id=splay_id,
                    src=request.src,
                    dst=request.dst,
                    super_round=batch,
                    arrival_slot=self.slot + request.arrival_slot,
                )
                splay = _Splay(record)
                self._splays[splay_id] = splay
                self._queue.append(splay)
                self.ledger.splays.append(record)
            self._next_batch += 1
            _LOGGER.debug(f"Released super-round {batch} at slot {self.slot}")
        return None

    def _admit(self) -> None:
        """
        Start queued splays whose endpoints are idle; a node serves queued splays in order
        """
        claimed: Set[int] = set()
        waiting = []
        for splay in self._queue:
            record = splay.record
            if record.arrival_slot > self.slot:
                waiting.append(splay)
                continue
            endpoints = (record.src, record.dst)
            if any(x in self._busy or x in claimed for x in endpoints):
                claimed.update(endpoints)
                waiting.append(splay)
                continue
            self._busy[record.src] = record.splay_id
            self._busy[record.dst] = record.splay_id
            record.start_slot = self.slot
            record.initial_distance = distance(self.tree, record.src, record.dst)
            record.max_distance = record.initial_distance
            self._watch.add(record.src)
            for message in protocol.start_splay(
                self.states[record.src], record.dst, record.splay_id, self, record.super_round
            ):
                self._send(message)
        self._queue = waiting

    def _update_barrier(self) -> None:
        if not self.config.lockstep_rounds:
            return None
        in_flight = any(
            isinstance(message, SplayRequestMessage) and message.receiver != message.dst
            for message in self._inbox
        ) or any(isinstance(message, SplayRequestMessage) for message in self._outbox)
        self._barrier_open = not self._requests and self._locked == 0 and not in_flight
        if self._barrier_open:
            self._round_start = self.slot
        return None

    def _send(self, message: BaseMessage) -> None:
        if self.config.detectors.locality and message.receiver not in self.tree.neighbors(
            message.sender
        ):
            raise ProtocolError(
                f"{message.kind} from {message.sender} to non-neighbor {message.receiver}"
            )
        self._outbox.append(message)

    def step(self) -> None:
        """
        Advance the simulation by one slot
        """
        self._release_batches()
        self._inbox, self._outbox = self._outbox, []
        self._admit()
        self._update_barrier()

        deliveries: Dict[int, List[BaseMessage]] = defaultdict(list)
        for message in self._inbox:
            deliveries[message.receiver].append(message)
        for node_id in sorted(set(deliveries) | self._watch):
            state = self.states[node_id]
            for message in protocol.step(state, deliveries.get(node_id, []), self):
                self._send(message)
            if state.needs_attention:
                self._watch.add(node_id)
            else:
                self._watch.discard(node_id)

        self._commit_phase()
        self._after_slot()
        self.slot += 1

    # commits

    def _still_valid(self, request: _Request) -> bool:
        """
        Check that the rotation a request asks for is still the one its requester would choose
        in the current tree
        """
        t = self.tree
        u, v = request.requester, request.v
        if t.parent(u) != v:
            return False
        splay = self._splays.get(request.splay_id)
        if splay is not None and not splay.active:
            return False
        peer = request.entry.splay_peer
        if peer is not None:
            if peer == v or is_in_subtree(t, u, peer):
                return False
        above = t.parent(v)
        if request.kind is not None:
            zig = above is None or above == peer or is_in_subtree(t, v, peer)
            if zig != (request.kind is RotationKind.ZIG):
                return False
            if not zig and request.w != above:
                return False
        elif request.w is not None and above != request.w:
            return False
        if request.top_known:
            child = request.w if request.w is not None else v
            if t.parent(child) != request.top:
                return False
        return True

    def _commit_phase(self) -> bool:
        if not self._commit_ready:
            return False
        ready = sorted(self._commit_ready, key=lambda entry: entry.level1)
        self._commit_ready = []
        ready_keys = {entry.key for entry in ready}
        for entry in ready:
            ready_keys.discard(entry.key)
            request = self._requests.get(entry.key)
            if request is not None and not self._still_valid(request):
                _LOGGER.warning(
                    f"Slot {self.slot}: request {entry.key} of node {entry.level1} went stale "
                    f"before its commit"
                )
                self._abort(request)
                continue
            self._commit(entry)
            for request in list(self._requests.values()):
                if request.entry.key not in ready_keys and not self._still_valid(request):
                    self._abort(request)
        for splay in self._splays.values():
            if splay.active:
                splay.record.max_distance = max(
                    splay.record.max_distance,
                    distance(self.tree, splay.record.src, splay.record.dst),
                )
        if self.config.detectors.invariants:
            report = check_invariants(self.tree)
            if not report.ok:
                raise DetectorFiredError(f"tree invariant '{report.violation}' at {report.nodes}")
        return True

    def _commit(self, entry: BufferEntry) -> None:
        request = self._requests.get(entry.key)
        if request is None or request.entry.attempt != entry.attempt:
            raise ProtocolError(f"Commit of unknown request {entry.key}")
        if request.kind is None or not self._still_valid(request):
            raise ProtocolError(f"Request {entry.key} went stale before its commit")
        u, kind = request.requester, request.kind
        participants = [x for x in (u, request.v, request.w) if x is not None]
        splay = self._splays.get(request.splay_id)
        distance_before = (
            distance(self.tree, splay.record.src, splay.record.dst) if splay else None
        )

        before = snapshot_ranks(self.tree, participants)
        effect = rotation.apply(self.tree, u, kind)
        after = snapshot_ranks(self.tree, participants)
        bound = check_rotation_bound(before, after, u, kind)
        if not bound.ok:
            _LOGGER.warning(
                f"Rank bound violated by {kind.value} of {u}: {bound.delta} > {bound.bound}"
            )
        for node_id in effect.locked_set:
            self.states[node_id].sync_links(self.tree)

        messages = protocol.complete_rotation(self.states[u], entry, effect, self)
        messages.extend(protocol.notify_link_changes(effect, self.tree))
        request.holders.discard(u)
        self._locked -= 1
        del self._requests[entry.key]
        self._round_started.pop(entry.key, None)
        for node_id in request.buffered_at - request.holders - {u}:
            self.states[node_id].buffer.remove_completed(*entry.key)
        self._live_since = self.slot if self._requests else None

        distance_after = distance(self.tree, splay.record.src, splay.record.dst) if splay else None
        record = RotationRecord(
            requester=u,
            splay_id=request.splay_id,
            kind=kind,
            super_round=entry.super_round,
            round=entry.round,
            request_slot=request.request_slot,
            commit_slot=self.slot,
            delta=bound.delta,
            bound=bound.bound,
            bound_ok=bound.ok,
            distance_before=distance_before,
            distance_after=distance_after,
        )
        request.record = record
        self.ledger.rotations.append(record)
        if request.holders:
            self._releasing[entry.request_key] = request
        else:
            record.release_slot = self.slot
        self._last_commit = self.slot
        self.record(u, EVENT_COMMIT, f"kind={kind.value};top={effect.top};r={entry.round}")
        _LOGGER.debug(f"Slot {self.slot}: node {u} committed {kind.value}, top: {effect.top}")

        for message in messages:
            self._send(message)
        self._watch.add(u)
        if splay is not None:
            splay.record.cost += kind.cost
            if u == splay.record.src:
                splay.record.rotations_src += 1
            else:
                splay.record.rotations_dst += 1
            peer = splay.record.dst if u == splay.record.src else splay.record.src
            above_peer = is_in_subtree(self.tree, u, peer)
            self.note_progress(request.splay_id, distance_before, distance_after, above_peer)

    def _abort(self, request: _Request) -> None:
        entry = request.entry
        for node_id in request.holders:
            if self.states[node_id].locked_by == entry.request_key:
                self._locked -= 1
        for node_id in request.holders | request.buffered_at | {request.requester}:
            self.states[node_id].forget(entry)
        del self._requests[entry.key]
        if not self._requests:
            self._live_since = None
        self._watch.add(request.requester)
        self.record(request.requester, EVENT_ABORT, f"r={entry.round};a={entry.attempt}")
        _LOGGER.debug(f"Slot {self.slot}: aborted request {entry.key} attempt {entry.attempt}")

    # detectors

    def note_progress(
        self, splay_id: int, before: int, after: int, above_peer: bool = False
    ) -> None:
        """
        Count consecutive commits of a splay that neither brought its endpoints closer nor put
        the committing endpoint above its peer

        :param splay_id: splay the commit belongs to
        :param before: endpoint distance before the commit
        :param after: endpoint distance after the commit
        :param above_peer: whether the committing endpoint is now an ancestor of its peer
        """
        splay = self._splays[splay_id]
        if after < before or above_peer:
            splay.no_progress = 0
            return None
        splay.no_progress += 1
        if self.config.detectors.loop:
            stuck = self.detect_loop()
            if stuck is not None:
                raise DetectorFiredError(
                    f"loop: splay {stuck[0]} made no progress in {stuck[1]} rotations"
                )
        return None

    def detect_loop(self) -> Optional[Tuple[int, int]]:
        """
        Find an active splay whose last LOOP_WINDOW commits made no progress

        :return: (splay id, commits without progress), or None
        """
        for splay_id, splay in sorted(self._splays.items()):
            if splay.active and splay.no_progress >= LOOP_WINDOW:
                return splay_id, splay.no_progress
        return None

    def _involved_nodes(self) -> Set[int]:
        nodes = set(self._watch)
        for request in list(self._requests.values()) + list(self._releasing.values()):
            nodes |= request.buffered_at | request.holders
        return nodes

    def _live_key(self, request_key: Tuple[int, int, int, int]) -> bool:
        request = self._requests.get(request_key[:3])
        return request is not None and request.entry.attempt == request_key[3]

    def detect_deadlock(self) -> Optional[List[tuple]]:
        """
        Build the wait-for graph between live request attempts and look for a cycle.

        A request waits for the live holder of a lock it needs, and a request parked at its top
        waits for the request at the head of the top's buffer. Committed holders release
        without waiting on anybody and add no edges.

        :return: cycle edges between request keys, or None when the graph is acyclic
        """
        graph = nx.DiGraph()
        for node_id in sorted(self._involved_nodes()):
            state = self.states[node_id]
            waiting = [e for e, _ in state.awaiting_lock.values() if self.is_live(e)]
            parked = [e for e, _ in state.awaiting_grant.values() if self.is_live(e)]
            if state.locked_by is not None:
                holder = state.locked_by
                if not self._live_key(holder):
                    continue
                for entry in waiting + parked:
                    if entry.request_key != holder:
                        graph.add_edge(entry.request_key, holder)
                continue
            head = state.buffer.head()
            if head is None or not self.is_live(head):
                continue
            for entry in parked:
                if entry.key != head.key:
                    graph.add_edge(entry.request_key, head.request_key)
        try:
            return nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            return None

    def detect_buffer_inconsistency(self) -> Optional[Tuple[tuple, tuple, int, int]]:
        """
        Find two live requests stored in opposite order by two buffers.

        :return: (first key, second key, owner with the first order, owner with the reverse)
        """
        seen: Dict[Tuple[tuple, tuple], int] = {}
        for node_id in sorted(self._involved_nodes()):
            keys = [e.key for e in self.states[node_id].buffer if self.is_live(e)]
            for index, a in enumerate(keys):
                for b in keys[index + 1 :]:
                    if (b, a) in seen:
                        return b, a, seen[(b, a)], node_id
                    seen.setdefault((a, b), node_id)
        return None

    def _after_slot(self) -> None:
        nodes = self._involved_nodes()
        for node_id in nodes:
            live = sum(1 for entry in self.states[node_id].buffer if self.is_live(entry))
            self.max_buffer = max(self.max_buffer, live)

        detectors = self.config.detectors
        if self.slot % detectors.stride:
            return None
        if detectors.buffer:
            conflict = self.detect_buffer_inconsistency()
            if conflict is not None:
                raise DetectorFiredError(f"buffer inconsistency: {conflict}")
        if detectors.deadlock:
            cycle = self.detect_deadlock()
            if cycle is not None:
                raise DetectorFiredError(f"deadlock: wait-for cycle {cycle}")
        if detectors.stall and self._requests:
            since = max(self._last_commit, self._live_since or 0)
            if self.slot - since > STALL_WINDOW:
                raise DetectorFiredError(
                    f"stall: no commit for {self.slot - since} slots with live requests"
                )
        return None

    # run

    def done(self) -> bool:
        return (
            self._next_batch >= len(self.batches)
            and not self._queue
            and all(splay.record.completed for splay in self._splays.values())
            and not self._outbox
            and self._locked == 0
            and not self._requests
        )

    def run(self) -> RunResult:
        """
        Step until every splay completed, the slot budget ran out or a detector fired
        """
        timeout = self.config.timeout
        _LOGGER.info(
            f"Starting run: n={self.tree.n}, requests={sum(b.m for b in self.batches)}, "
            f"workload='{self.config.workload.label}', seed={self.config.seed}"
        )
        try:
            while not self.done():
                if self.slot >= timeout:
                    self.termination = TERMINATION_TIMEOUT
                    self.diagnostic = f"not finished within {timeout} slots"
                    break
                self.step()
        except (
            DetectorFiredError,
            ProtocolError,
            BufferOverflowError,
            RotationError,
            TreeStructureError,
        ) as err:
            self.termination = TERMINATION_DETECTOR
            self.diagnostic = str(err)
            self.log.append(self.slot, -1, EVENT_DETECTOR, self.diagnostic.replace(",", ";"))
            _LOGGER.error(f"Run stopped at slot {self.slot}: {err}")

        if self.termination == TERMINATION_TIMEOUT:
            _LOGGER.warning(f"Run timed out: {self.diagnostic}")
        _LOGGER.info(
            f"Run finished: {self.termination} after {self.slot} slots, "
            f"{self.ledger.total_rotations} rotations"
        )
        return RunResult(
            config=self.config,
            requests=self.batches,
            ledger=self.ledger,
            tree=self.tree,
            initial_tree=self.initial_tree,
            log=self.log,
            termination=self.termination,
            diagnostic=self.diagnostic,
            timeslots=self.slot,
            max_buffer=self.max_buffer,
        )


def run(
    config: SimConfig,
    requests: Union[RequestSet, List[RequestSet], None] = None,
    tree: Optional[Tree] = None,
) -> RunResult:
    """
    Run the concurrent protocol.

    :param config: run configuration
    :param requests: request set(s) [Default: generated from the workload of the config]
    :param tree: initial tree [Default: balanced tree]
    :return: run result with ledger, final tree and event log
    """
    return Simulator(config, requests=requests, tree=tree).run()
