import enum
import logging
from typing import Dict, List, Optional, Set, Tuple

from splaynetsim.const import (
    EVENT_BETA_FORWARD,
    EVENT_BETA_REQUEST,
    EVENT_BUFFER_CHANGE,
    EVENT_DROP,
    EVENT_FREE,
    EVENT_LCA_WAIT,
    EVENT_LINK_CHANGE,
    EVENT_LOCK_ACK,
    EVENT_LOCK_REQUEST,
    EVENT_RESUME,
    EVENT_SPLAY_ACCEPT,
    EVENT_SPLAY_COMPLETE,
    EVENT_SPLAY_FORWARD,
    EVENT_SPLAY_ISSUE,
    PKG_NAME,
)
from splaynetsim.exceptions import ProtocolError, SplayRequestError
from splaynetsim.models import (
    BaseMessage,
    BetaAck,
    BetaRequest,
    BufferChange,
    BufferEntry,
    LinkChange,
    LockAck,
    LockRequest,
    RotationEffect,
    RotationKind,
    SplayComplete,
    SplayRequestMessage,
)
from splaynetsim.modules.buffer import Buffer, priority_key
from splaynetsim.modules.topology import Tree

_LOGGER = logging.getLogger(PKG_NAME)

RequestKey = Tuple[int, int, int, int]


class SplayRole(str, enum.Enum):
    SOURCE = "source"
    DESTINATION = "destination"


class Decision(str, enum.Enum):
    """
    What an endpoint does with its splay in the current slot
    """

    COMPLETE = "complete"
    WAIT_CHILD = "wait-child"
    WAIT_LCA = "wait-lca"
    GENERATE = "generate"


class ActiveSplay:
    __slots__ = ("splay_id", "peer", "role", "super_round", "waiting_as_lca")

    def __init__(self, splay_id: int, peer: int, role: SplayRole, super_round: int = 0):
        self.splay_id = splay_id
        self.peer = peer
        self.role = role
        self.super_round = super_round
        self.waiting_as_lca = False

    def __repr__(self):
        return f"ActiveSplay(id={self.splay_id}, peer={self.peer}, role={self.role.value})"


class ProtocolContext:
    """
    Services the scheduler offers to node handlers during one slot. Handlers read and write
    only their own NodeState and talk to the outside world through this object.
    """

    slot: int = 0

    def is_live(self, entry: BufferEntry) -> bool:
        raise NotImplementedError

    def may_generate(self, node_id: int) -> bool:
        raise NotImplementedError

    def may_grant_top(self, node_id: int) -> bool:
        raise NotImplementedError

    def record(self, node_id: int, event: str, detail: str = "") -> None:
        raise NotImplementedError

    def register_request(self, entry: BufferEntry) -> None:
        raise NotImplementedError

    def next_attempt(self, node_id: int) -> int:
        raise NotImplementedError

    def note_route(
        self,
        entry: BufferEntry,
        kind: Optional[RotationKind] = None,
        w: Optional[int] = None,
        top: Optional[int] = None,
        top_known: bool = False,
    ) -> None:
        raise NotImplementedError

    def buffered(self, entry: BufferEntry, node_id: int) -> None:
        raise NotImplementedError

    def hold(self, entry: BufferEntry, node_id: int) -> None:
        raise NotImplementedError

    def request_commit(self, entry: BufferEntry) -> None:
        raise NotImplementedError

    def released(self, entry: BufferEntry, node_id: int) -> None:
        raise NotImplementedError

    def splay_accepted(self, splay_id: int, node_id: int) -> None:
        raise NotImplementedError

    def splay_finished(self, splay_id: int, node_id: int) -> None:
        raise NotImplementedError

    def splay_closed(self, splay_id: int, node_id: int) -> None:
        raise NotImplementedError


class NodeState:
    """
    Local state of one node: its view of the links around it, its lock, its buffer and the
    bookkeeping of the requests that pass through it.
    """

    def __init__(self, node_id: int, tree: Tree):
        self.id = node_id
        self.parent: Optional[int] = None
        self.left: Optional[int] = None
        self.right: Optional[int] = None
        self.lo = node_id
        self.hi = node_id
        self.sync_links(tree)

        self.buffer = Buffer(node_id)
        self.locked_by: Optional[RequestKey] = None
        self.round = 0
        self.active_splay: Optional[ActiveSplay] = None
        self.closed_splays: Set[int] = set()
        self.pending_rotation: Optional[BufferEntry] = None
        self.commit_ready: Optional[BufferEntry] = None
        # requests waiting for this node's grant as their top: key -> (entry, ack receiver)
        self.awaiting_grant: Dict[RequestKey, Tuple[BufferEntry, int]] = {}
        # acks that arrived while locked: key -> (entry, next node down or None at the requester)
        self.awaiting_lock: Dict[RequestKey, Tuple[BufferEntry, Optional[int]]] = {}

    def __repr__(self):
        return (
            f"NodeState(id={self.id}, parent={self.parent}, left={self.left}, "
            f"right={self.right}, locked_by={self.locked_by})"
        )

    def sync_links(self, tree: Tree) -> None:
        node = tree.node(self.id)
        self.parent, self.left, self.right = node.parent, node.left, node.right
        self.lo, self.hi = node.lo, node.hi

    @property
    def super_round(self) -> int:
        return self.active_splay.super_round if self.active_splay else 0

    @property
    def is_locked(self) -> bool:
        return self.locked_by is not None

    @property
    def needs_attention(self) -> bool:
        """
        Whether the node has to run its handler even without incoming messages
        """
        return bool(self.active_splay or self.awaiting_grant or self.awaiting_lock)

    def is_in_subtree(self, target: int) -> bool:
        return self.lo <= target <= self.hi

    def is_child(self, target: int) -> bool:
        return target is not None and target in (self.left, self.right)

    def next_hop(self, target: int) -> Optional[int]:
        """
        Interval routing: descend when the target is in the own subtree, climb otherwise
        """
        if target == self.id:
            return None
        if self.is_in_subtree(target):
            return self.left if target < self.id else self.right
        return self.parent

    def lock(self, entry: BufferEntry) -> None:
        if self.locked_by is not None:
            raise ProtocolError(f"Node {self.id} is already locked by {self.locked_by}")
        self.locked_by = entry.request_key

    def unlock(self) -> None:
        self.locked_by = None

    def forget(self, entry: BufferEntry) -> None:
        """
        Drop every trace of a request attempt from the node
        """
        self.awaiting_grant.pop(entry.request_key, None)
        self.awaiting_lock.pop(entry.request_key, None)
        self.buffer.remove_completed(*entry.key)
        if self.locked_by == entry.request_key:
            self.unlock()
        if self.commit_ready is not None and self.commit_ready.request_key == entry.request_key:
            self.commit_ready = None
        if (
            self.pending_rotation is not None
            and self.pending_rotation.request_key == entry.request_key
        ):
            self.pending_rotation = None


def rotation_kind_of(entry: BufferEntry) -> RotationKind:
    """
    Rotation kind implied by the chain an entry carries; sidedness follows from the ids
    """
    if entry.level3 is None:
        return RotationKind.ZIG
    u, v, w = entry.level1, entry.level2, entry.level3
    if (u < v) == (v < w):
        return RotationKind.ZIG_ZIG
    return RotationKind.ZIG_ZAG


def _detail(entry: BufferEntry) -> str:
    return f"u={entry.level1};r={entry.round};sr={entry.super_round};a={entry.attempt}"


def _drop(state: NodeState, message: BaseMessage, ctx: ProtocolContext, reason: str) -> list:
    ctx.record(state.id, EVENT_DROP, f"{message.kind};from={message.sender};{reason}")
    _LOGGER.debug(f"Node {state.id} dropped {message.kind} from {message.sender}: {reason}")
    return []


def start_splay(
    state: NodeState, dst: int, splay_id: int, ctx: ProtocolContext, super_round: int = 0
) -> List[BaseMessage]:
    """
    Turn the node into the source endpoint of a splay and route the request to dst.

    :param state: source node state
    :param dst: destination node id
    :param splay_id: id of the splay
    :param ctx: slot context
    :param super_round: batch the splay belongs to
    :return: messages to send
    """
    if dst == state.id:
        raise SplayRequestError(f"Node {dst} cannot splay towards itself")
    if state.active_splay is not None:
        raise SplayRequestError(f"Node {state.id} already serves splay {state.active_splay}")
    state.active_splay = ActiveSplay(splay_id, dst, SplayRole.SOURCE, super_round)
    ctx.record(state.id, EVENT_SPLAY_ISSUE, f"splay={splay_id};dst={dst}")
    if dst in (state.parent, state.left, state.right):
        state.active_splay = None
        ctx.splay_finished(splay_id, state.id)
        ctx.record(state.id, EVENT_SPLAY_COMPLETE, f"splay={splay_id};adjacent")
        return [SplayComplete(sender=state.id, receiver=dst, splay_id=splay_id)]
    return [
        SplayRequestMessage(
            sender=state.id,
            receiver=state.next_hop(dst),
            splay_id=splay_id,
            src=state.id,
            dst=dst,
            super_round=super_round,
        )
    ]


def handle_splay_request(
    state: NodeState, message: SplayRequestMessage, ctx: ProtocolContext
) -> List[BaseMessage]:
    if message.dst != state.id:
        ctx.record(state.id, EVENT_SPLAY_FORWARD, f"splay={message.splay_id}")
        forwarded = message.model_copy(
            update={"sender": state.id, "receiver": state.next_hop(message.dst)}
        )
        return [forwarded]
    if message.splay_id in state.closed_splays:
        return _drop(state, message, ctx, "splay already closed")
    if state.active_splay is not None:
        raise ProtocolError(
            f"Node {state.id} got splay {message.splay_id} while serving {state.active_splay}"
        )
    state.active_splay = ActiveSplay(
        message.splay_id, message.src, SplayRole.DESTINATION, message.super_round
    )
    ctx.splay_accepted(message.splay_id, state.id)
    ctx.record(state.id, EVENT_SPLAY_ACCEPT, f"splay={message.splay_id};src={message.src}")
    return []


def handle_splay_complete(
    state: NodeState, message: SplayComplete, ctx: ProtocolContext
) -> List[BaseMessage]:
    active = state.active_splay
    if active is not None and active.splay_id == message.splay_id:
        state.active_splay = None
    else:
        state.closed_splays.add(message.splay_id)
    ctx.splay_closed(message.splay_id, state.id)
    ctx.record(state.id, EVENT_SPLAY_COMPLETE, f"splay={message.splay_id};child")
    return []


def lca_wait_check(state: NodeState) -> Decision:
    """
    Decide what the endpoint does next: finish (peer is its child), wait for its parent to
    finish (peer is its parent), wait as the LCA (peer is below it) or rotate.
    """
    peer = state.active_splay.peer
    if state.is_child(peer):
        return Decision.COMPLETE
    if state.parent == peer:
        return Decision.WAIT_CHILD
    if state.is_in_subtree(peer):
        return Decision.WAIT_LCA
    return Decision.GENERATE


def generate_rotation(state: NodeState, ctx: ProtocolContext) -> List[BaseMessage]:
    """
    Issue a rotation request for the node's current round and send it to the parent
    """
    if state.parent is None:
        raise ProtocolError(f"Root {state.id} cannot request a rotation")
    entry = BufferEntry(
        super_round=state.super_round,
        round=state.round,
        level1=state.id,
        level2=state.parent,
        splay_peer=state.active_splay.peer,
        attempt=ctx.next_attempt(state.id),
    )
    ctx.register_request(entry)
    state.buffer.insert(entry)
    ctx.buffered(entry, state.id)
    state.pending_rotation = entry
    ctx.record(state.id, EVENT_BETA_REQUEST, _detail(entry))
    return [BetaRequest(sender=state.id, receiver=state.parent, entry=entry)]


def _send_lock_request_or_wait(
    state: NodeState, entry: BufferEntry, grant_to: int, ctx: ProtocolContext
) -> List[BaseMessage]:
    if state.parent is None:
        state.awaiting_grant[entry.request_key] = (entry, grant_to)
        return []
    ctx.record(state.id, EVENT_LOCK_REQUEST, _detail(entry))
    return [LockRequest(sender=state.id, receiver=state.parent, entry=entry)]


def handle_beta_request(
    state: NodeState, message: BetaRequest, ctx: ProtocolContext
) -> List[BaseMessage]:
    """
    Second level decides between a zig and a double rotation; third level names the top.
    A chain node without a parent is its own top and waits for its own grant.
    """
    entry = message.entry
    if not ctx.is_live(entry):
        return _drop(state, message, ctx, "stale request")

    if entry.level2 == state.id:
        peer = entry.splay_peer
        if state.parent is None or state.parent == peer or state.is_in_subtree(peer):
            state.buffer.insert(entry)
            ctx.buffered(entry, state.id)
            ctx.note_route(entry, kind=RotationKind.ZIG, top=state.parent, top_known=True)
            return _send_lock_request_or_wait(state, entry, entry.level1, ctx)
        forwarded = entry.model_copy(update={"level3": state.parent})
        state.buffer.insert(forwarded)
        ctx.buffered(forwarded, state.id)
        ctx.note_route(forwarded, kind=rotation_kind_of(forwarded), w=state.parent)
        ctx.record(state.id, EVENT_BETA_FORWARD, _detail(forwarded))
        return [BetaRequest(sender=state.id, receiver=state.parent, entry=forwarded)]

    if entry.level3 == state.id:
        state.buffer.insert(entry)
        ctx.buffered(entry, state.id)
        ctx.note_route(entry, top=state.parent, top_known=True)
        return _send_lock_request_or_wait(state, entry, entry.level2, ctx)

    raise ProtocolError(f"Node {state.id} is not on the chain of request {entry.key}")


def handle_lock(state: NodeState, message, ctx: ProtocolContext) -> List[BaseMessage]:
    """
    A lock request parks at the top until it heads the top's buffer; a lock ack parks at a
    chain node until the node is free to lock.
    """
    entry = message.entry
    if not ctx.is_live(entry):
        return _drop(state, message, ctx, "stale request")
    if isinstance(message, LockRequest):
        state.buffer.insert(entry)
        ctx.buffered(entry, state.id)
        state.awaiting_grant[entry.request_key] = (entry, message.sender)
        return []
    if entry.level1 == state.id:
        next_down = None
    elif entry.level3 == state.id:
        next_down = entry.level2
    elif entry.level2 == state.id:
        next_down = entry.level1
    else:
        raise ProtocolError(f"Node {state.id} got a lock ack for foreign request {entry.key}")
    state.awaiting_lock[entry.request_key] = (entry, next_down)
    return []


def try_grants(state: NodeState, ctx: ProtocolContext) -> List[BaseMessage]:
    """
    Lock the node for at most one request: pending acks first, then the buffer head among the
    requests waiting for this node as their top.
    """
    for table in (state.awaiting_lock, state.awaiting_grant):
        for key in [k for k, (entry, _) in table.items() if not ctx.is_live(entry)]:
            del table[key]
    if state.is_locked:
        return []

    if state.awaiting_lock:
        entry, next_down = min(
            state.awaiting_lock.values(), key=lambda item: priority_key(state.id, item[0])
        )
        del state.awaiting_lock[entry.request_key]
        state.lock(entry)
        ctx.hold(entry, state.id)
        if next_down is None:
            state.commit_ready = entry
            ctx.request_commit(entry)
            return []
        ctx.record(state.id, EVENT_LOCK_ACK, _detail(entry))
        return [LockAck(sender=state.id, receiver=next_down, entry=entry)]

    if state.awaiting_grant and ctx.may_grant_top(state.id):
        head = state.buffer.head()
        if head is None:
            return []
        for key, (entry, grant_to) in state.awaiting_grant.items():
            if entry.key == head.key:
                del state.awaiting_grant[key]
                state.lock(entry)
                ctx.hold(entry, state.id)
                ctx.record(state.id, EVENT_LOCK_ACK, _detail(entry))
                return [LockAck(sender=state.id, receiver=grant_to, entry=entry)]
    return []


def _free(state: NodeState, entry: BufferEntry, ctx: ProtocolContext) -> None:
    state.unlock()
    state.buffer.remove_completed(*entry.key)
    ctx.released(entry, state.id)
    ctx.record(state.id, EVENT_FREE, _detail(entry))


def handle_beta_ack(state: NodeState, message: BetaAck, ctx: ProtocolContext) -> List[BaseMessage]:
    entry = message.entry
    if state.locked_by != entry.request_key:
        return _drop(state, message, ctx, "not locked by this request")
    _free(state, entry, ctx)
    if rotation_kind_of(entry) is RotationKind.ZIG_ZIG and state.id == entry.level2:
        return [BetaAck(sender=state.id, receiver=entry.level3, entry=entry)]
    return []


def handle_buffer_change(
    state: NodeState, message: BufferChange, ctx: ProtocolContext
) -> List[BaseMessage]:
    if message.completed is not None:
        if state.locked_by == message.completed.request_key:
            _free(state, message.completed, ctx)
        else:
            _drop(state, message, ctx, "not locked by completed request")
    imported = [e for e in message.entries if ctx.is_live(e) and e.references(state.id)]
    state.buffer.reconcile_on_link_change(None, message.sender, imported)
    for entry in imported:
        ctx.buffered(entry, state.id)
    if message.completed is None:
        ctx.record(state.id, EVENT_BUFFER_CHANGE, f"from={message.sender};n={len(imported)}")
    return []


def handle_link_change(
    state: NodeState, message: LinkChange, ctx: ProtocolContext
) -> List[BaseMessage]:
    """
    A bystander learns its new parent, drops requests that named the old one and shares the
    requests that involve the new one
    """
    old = state.parent
    state.parent = message.new
    state.buffer.reconcile_on_link_change(old, message.new, [])
    ctx.record(state.id, EVENT_LINK_CHANGE, f"old={old};new={message.new}")
    shared = [e for e in state.buffer if ctx.is_live(e) and e.references(message.new)]
    return [BufferChange(sender=state.id, receiver=message.new, entries=shared)]


def complete_rotation(
    state: NodeState, entry: BufferEntry, effect: RotationEffect, ctx: ProtocolContext
) -> List[BaseMessage]:
    """
    Requester side of a commit: release the own lock, close the round and start the release
    wave (beta-ack down the chain, buffer-change to the top).

    :param state: requester state, links already synchronized with the rotated tree
    :param entry: committed request
    :param effect: rotation effect
    :param ctx: slot context
    :return: messages to send
    """
    state.unlock()
    state.commit_ready = None
    state.pending_rotation = None
    state.buffer.remove_completed(*entry.key)
    state.round += 1
    messages: List[BaseMessage] = [BetaAck(sender=state.id, receiver=entry.level2, entry=entry)]
    if effect.kind is RotationKind.ZIG_ZAG:
        messages.append(BetaAck(sender=state.id, receiver=entry.level3, entry=entry))
    if effect.top is not None:
        messages.append(BufferChange(sender=state.id, receiver=effect.top, completed=entry))
    return messages


def notify_link_changes(effect: RotationEffect, tree: Tree) -> List[BaseMessage]:
    """
    Link-change messages from the new parent of every bystander the rotation moved
    """
    messages = []
    parent_updates = {
        update.node: update
        for update in effect.displaced
        if update.field == "parent" and update.node not in effect.locked_set
    }
    for node_id in sorted(parent_updates):
        update = parent_updates[node_id]
        messages.append(
            LinkChange(
                sender=update.new,
                receiver=node_id,
                relationship="parent",
                old=update.old,
                new=update.new,
            )
        )
    return messages


_HANDLERS = {
    "splay-request": handle_splay_request,
    "splay-complete": handle_splay_complete,
    "beta-request": handle_beta_request,
    "beta-ack": handle_beta_ack,
    "lock-request": handle_lock,
    "lock-ack": handle_lock,
    "link-change": handle_link_change,
    "buffer-change": handle_buffer_change,
}


def _decide(state: NodeState, ctx: ProtocolContext) -> List[BaseMessage]:
    active = state.active_splay
    if active is None or state.pending_rotation is not None or state.is_locked:
        return []
    decision = lca_wait_check(state)
    if decision is Decision.COMPLETE:
        state.active_splay = None
        ctx.splay_finished(active.splay_id, state.id)
        ctx.record(state.id, EVENT_SPLAY_COMPLETE, f"splay={active.splay_id};parent")
        return [SplayComplete(sender=state.id, receiver=active.peer, splay_id=active.splay_id)]
    if decision is Decision.WAIT_LCA:
        if not active.waiting_as_lca:
            active.waiting_as_lca = True
            ctx.record(state.id, EVENT_LCA_WAIT, f"splay={active.splay_id}")
        return []
    if decision is Decision.WAIT_CHILD:
        return []
    if active.waiting_as_lca:
        active.waiting_as_lca = False
        ctx.record(state.id, EVENT_RESUME, f"splay={active.splay_id}")
    if not ctx.may_generate(state.id):
        return []
    return generate_rotation(state, ctx)


def step(state: NodeState, inbox: List[BaseMessage], ctx: ProtocolContext) -> List[BaseMessage]:
    """
    Run one node for one slot: forget entries of finished requests, apply link changes, process
    the rest of the inbox in arrival order, grant at most one lock, then move the node's splay
    forward.

    :param state: node state
    :param inbox: messages delivered in this slot
    :param ctx: slot context
    :return: messages to deliver in the next slot
    """
    outbox: List[BaseMessage] = []
    state.buffer.discard([e for e in state.buffer if not ctx.is_live(e)])
    for message in sorted(inbox, key=lambda m: m.kind != "link-change"):
        outbox.extend(_HANDLERS[message.kind](state, message, ctx))
    outbox.extend(try_grants(state, ctx))
    outbox.extend(_decide(state, ctx))
    return outbox
