import logging
from typing import Dict, List, Optional, Set, Tuple

from splaynetsim.const import PKG_NAME
from splaynetsim.exceptions import RotationError
from splaynetsim.models import LinkUpdate, RotationEffect, RotationKind
from splaynetsim.modules.topology import Tree

_LOGGER = logging.getLogger(PKG_NAME)

_PARENT, _LEFT, _RIGHT = 0, 1, 2
_FIELDS = ("parent", "left", "right")


class _LinkDraft:
    """
    Copy-on-read scratch space holding the new links of the nodes a rotation touches
    """

    def __init__(self, tree: Tree):
        self._tree = tree
        self.links: Dict[int, List[Optional[int]]] = {}

    def __getitem__(self, node_id: int) -> List[Optional[int]]:
        if node_id not in self.links:
            node = self._tree.node(node_id)
            self.links[node_id] = [node.parent, node.left, node.right]
        return self.links[node_id]

    def set_parent(self, child: Optional[int], parent: int) -> None:
        if child is not None:
            self[child][_PARENT] = parent

    def hand_off(self, u: int, old_child: int, top: Optional[int]) -> None:
        """
        Attach u to the node that used to hold old_child
        """
        self[u][_PARENT] = top
        if top is None:
            return None
        top_links = self[top]
        if top_links[_LEFT] == old_child:
            top_links[_LEFT] = u
        elif top_links[_RIGHT] == old_child:
            top_links[_RIGHT] = u
        else:
            raise RotationError(f"node {old_child} is not a child of {top}")
        return None


def _chain(t: Tree, u: int, kind: RotationKind) -> Tuple[int, Optional[int], Optional[int]]:
    v = t.node(u).parent
    if v is None:
        raise RotationError("cannot rotate root")
    w = t.node(v).parent
    if not kind.is_double:
        return v, None, w
    if w is None:
        raise RotationError(f"kind mismatch: {kind.value} needs a grandparent of {u}")
    same_side = (u < v) == (v < w)
    if same_side != (kind is RotationKind.ZIG_ZIG):
        raise RotationError(f"kind mismatch: {kind.value} for node {u}")
    return v, w, t.node(w).parent


def _draft(t: Tree, u: int, kind: RotationKind) -> Tuple[_LinkDraft, List[int], Optional[int]]:
    v, w, top = _chain(t, u, kind)
    draft = _LinkDraft(t)

    if kind is RotationKind.ZIG:
        if u < v:
            inner = draft[u][_RIGHT]
            draft[v][_LEFT] = inner
            draft[u][_RIGHT] = v
        else:
            inner = draft[u][_LEFT]
            draft[v][_RIGHT] = inner
            draft[u][_LEFT] = v
        draft.set_parent(inner, v)
        draft[v][_PARENT] = u
        draft.hand_off(u, v, top)
        return draft, [u, v], top

    if kind is RotationKind.ZIG_ZIG:
        if u < v:
            v_inner = draft[v][_RIGHT]
            draft[w][_LEFT] = v_inner
            draft[v][_RIGHT] = w
            u_inner = draft[u][_RIGHT]
            draft[v][_LEFT] = u_inner
            draft[u][_RIGHT] = v
        else:
            v_inner = draft[v][_LEFT]
            draft[w][_RIGHT] = v_inner
            draft[v][_LEFT] = w
            u_inner = draft[u][_LEFT]
            draft[v][_RIGHT] = u_inner
            draft[u][_LEFT] = v
        draft.set_parent(v_inner, w)
        draft.set_parent(u_inner, v)
        draft[w][_PARENT] = v
        draft[v][_PARENT] = u
        draft.hand_off(u, w, top)
        return draft, [u, v, w], top

    u_left, u_right = draft[u][_LEFT], draft[u][_RIGHT]
    if u < w:
        draft[v][_RIGHT] = u_left
        draft.set_parent(u_left, v)
        draft[w][_LEFT] = u_right
        draft.set_parent(u_right, w)
        draft[u][_LEFT] = v
        draft[u][_RIGHT] = w
    else:
        draft[w][_RIGHT] = u_left
        draft.set_parent(u_left, w)
        draft[v][_LEFT] = u_right
        draft.set_parent(u_right, v)
        draft[u][_LEFT] = w
        draft[u][_RIGHT] = v
    draft[v][_PARENT] = u
    draft[w][_PARENT] = u
    draft.hand_off(u, w, top)
    return draft, [u, v, w], top


def _effect(
    t: Tree, u: int, kind: RotationKind, draft: _LinkDraft, participants: List[int], top
) -> RotationEffect:
    displaced = []
    for node_id in sorted(draft.links):
        node = t.node(node_id)
        before = (node.parent, node.left, node.right)
        for index, field in enumerate(_FIELDS):
            if before[index] != draft.links[node_id][index]:
                displaced.append(
                    LinkUpdate(
                        node=node_id,
                        field=field,
                        old=before[index],
                        new=draft.links[node_id][index],
                    )
                )
    old_children = set(t.children(u))
    new_children = {c for c in draft.links[u][_LEFT : _RIGHT + 1] if c is not None}
    locked = set(participants)
    if top is not None:
        locked.add(top)
    return RotationEffect(
        kind=kind,
        moved_up=u,
        participants=participants,
        top=top,
        displaced=displaced,
        carried_children=old_children & new_children,
        abandoned_children=old_children - new_children,
        locked_set=locked,
    )


def classify(t: Tree, u: int, stop_at: int) -> RotationKind:
    """
    Pick the rotation that moves u toward stop_at.

    :param t: tree
    :param u: node that moves up
    :param stop_at: proper ancestor of u that u replaces at the end of its ascent
    :return: zig when u's parent is stop_at, otherwise zig-zig for same-side children and
        zig-zag for opposite sides
    """
    v = t.node(u).parent
    if v is None:
        raise RotationError("cannot rotate root")
    if stop_at not in t.ancestors(u):
        raise RotationError(f"node {stop_at} is not an ancestor of {u}")
    if v == stop_at:
        return RotationKind.ZIG
    w = t.node(v).parent
    if (u < v) == (v < w):
        return RotationKind.ZIG_ZIG
    return RotationKind.ZIG_ZAG


def locked_set(t: Tree, u: int, kind: RotationKind) -> Set[int]:
    """
    Nodes whose links a rotation of u changes: the rotating nodes and the node above them
    """
    v, w, top = _chain(t, u, kind)
    return {x for x in (u, v, w, top) if x is not None}


def plan(t: Tree, u: int, kind: RotationKind) -> RotationEffect:
    """
    Compute what apply would do without touching the tree
    """
    draft, participants, top = _draft(t, u, kind)
    return _effect(t, u, kind, draft, participants, top)


def apply(t: Tree, u: int, kind: RotationKind) -> RotationEffect:
    """
    Rotate u up by one (zig) or two (zig-zig, zig-zag) levels.

    Writes the new links of every touched node, makes u the root when it replaces the old root
    and recomputes the intervals of the rotating nodes bottom-up.

    :param t: tree to mutate
    :param u: node that moves up
    :param kind: rotation kind, must match the shape around u
    :return: effect listing every changed link
    """
    draft, participants, top = _draft(t, u, kind)
    effect = _effect(t, u, kind, draft, participants, top)
    for node_id, (parent, left, right) in draft.links.items():
        node = t.node(node_id)
        node.parent, node.left, node.right = parent, left, right
    if top is None:
        t.root = u
    # bottom-up: u is last
    for node_id in reversed(participants):
        t.recompute_interval(node_id)
    _LOGGER.debug(f"Applied {kind.value} at node {u}, participants: {participants}, top: {top}")
    return effect


def notify_targets(effect: RotationEffect) -> Set[int]:
    """
    Nodes outside the locked set whose links changed: they learn their new parent by a
    link-change message
    """
    return effect.displaced_nodes - effect.locked_set
