import logging
from typing import Dict, List, NamedTuple, Optional, Tuple

from splaynetsim.const import PKG_NAME
from splaynetsim.exceptions import SplayRequestError
from splaynetsim.models import BufferEntry, OracleResult, RequestSet, RotationKind
from splaynetsim.modules import rotation
from splaynetsim.modules.buffer import priority_key
from splaynetsim.modules.topology import Tree, is_in_subtree, lca

_LOGGER = logging.getLogger(PKG_NAME)


class _Plan(NamedTuple):
    u: int
    peer: int
    kind: RotationKind
    v: int
    w: Optional[int]
    top: Optional[int]

    @property
    def grantor(self) -> int:
        """
        Node whose buffer decides when the plan gets its first lock
        """
        if self.top is not None:
            return self.top
        return self.w if self.w is not None else self.v


def _check_pair(t: Tree, s: int, d: int) -> None:
    if s == d:
        raise SplayRequestError(f"Source and destination are equal: {s}")
    t.node(s)
    t.node(d)


def _adjacent(t: Tree, a: int, b: int) -> bool:
    return t.parent(a) == b or t.parent(b) == a


def _child_towards(t: Tree, ancestor: int, target: int) -> int:
    return t.left(ancestor) if target < ancestor else t.right(ancestor)


def _climb(t: Tree, u: int, stop_at: int, trace: List[Tuple[int, RotationKind]]) -> None:
    """
    Rotate u up until it takes the place of its ancestor stop_at
    """
    while stop_at in t.ancestors(u):
        kind = rotation.classify(t, u, stop_at)
        rotation.apply(t, u, kind)
        trace.append((u, kind))


def _result(t: Tree, trace: List[Tuple[int, RotationKind]], rounds: int) -> OracleResult:
    return OracleResult(
        links=t.links(),
        root=t.root,
        trace=trace,
        cost=sum(kind.cost for _, kind in trace),
        rounds=rounds,
    )


def sequential_splay(t: Tree, s: int, d: int) -> OracleResult:
    """
    Non-concurrent splay: s climbs to the lowest common ancestor of the pair, then d climbs
    until it is a child of s. Rotates t in place.

    :param t: tree
    :param s: source
    :param d: destination
    :return: final links, rotation trace and cost
    """
    _check_pair(t, s, d)
    trace: List[Tuple[int, RotationKind]] = []
    common = lca(t, s, d)
    if common == d:
        # d stays where it is and s climbs right below it
        _climb(t, s, _child_towards(t, d, s), trace)
    else:
        if common != s:
            _climb(t, s, common, trace)
        if t.parent(d) != s:
            _climb(t, d, _child_towards(t, s, d), trace)
    return _result(t, trace, len(trace))


def _plan(t: Tree, e: int, peer: int) -> Optional[_Plan]:
    v = t.parent(e)
    if v == peer or is_in_subtree(t, e, peer):
        return None
    above = t.parent(v)
    if above is None or above == peer or is_in_subtree(t, v, peer):
        return _Plan(e, peer, RotationKind.ZIG, v, None, above)
    kind = RotationKind.ZIG_ZIG if (e < v) == (v < above) else RotationKind.ZIG_ZAG
    return _Plan(e, peer, kind, v, above, t.parent(above))


def _still_valid(t: Tree, plan: _Plan) -> bool:
    return _plan(t, plan.u, plan.peer) == plan


def parallel_reference_splay(t: Tree, s: int, d: int) -> OracleResult:
    """
    Serialized parallel splay of one pair with no other traffic. In every logical round each
    endpoint that is neither the ancestor nor the child of its peer plans one rotation from
    the state at the start of the round. Plans are applied s first; when both plans wait for
    the same top, the top's buffer priority decides. A plan that the earlier rotation made
    stale is dropped for the round. Rotates t in place.

    :param t: tree
    :param s: source
    :param d: destination
    :return: final links, rotation trace, cost and the number of logical rounds
    """
    _check_pair(t, s, d)
    trace: List[Tuple[int, RotationKind]] = []
    committed: Dict[int, int] = {s: 0, d: 0}
    rounds = 0
    while not _adjacent(t, s, d):
        plans = [p for p in (_plan(t, s, d), _plan(t, d, s)) if p is not None]
        if not plans:
            raise SplayRequestError(f"No endpoint of {s}->{d} can rotate")
        if len(plans) == 2 and plans[0].grantor == plans[1].grantor:
            owner = plans[0].grantor
            plans.sort(
                key=lambda p: priority_key(
                    owner,
                    BufferEntry(
                        round=committed[p.u],
                        level1=p.u,
                        level2=p.v,
                        level3=p.w,
                        splay_peer=p.peer,
                    ),
                )
            )
        for plan in plans:
            if not _still_valid(t, plan):
                _LOGGER.debug(f"Round {rounds}: plan of {plan.u} dropped, tree changed under it")
                continue
            rotation.apply(t, plan.u, plan.kind)
            trace.append((plan.u, plan.kind))
            committed[plan.u] += 1
        rounds += 1
    return _result(t, trace, rounds)


class SequentialSplayNet:
    """
    Tree that serves requests one after the other with the sequential splay, keeping the
    same counters as a concurrent run's cost ledger
    """

    def __init__(self, tree: Tree):
        self.tree = tree
        self.rotations = 0
        self.cyber_dollars = 0
        self.splays = 0
        self.max_splay_cost = 0

    def splay(self, s: int, d: int) -> OracleResult:
        result = sequential_splay(self.tree, s, d)
        self.rotations += len(result.trace)
        self.cyber_dollars += result.cost
        self.splays += 1
        self.max_splay_cost = max(self.max_splay_cost, len(result.trace))
        return result

    def serve(self, requests: RequestSet) -> int:
        """
        Serve a request set in order.

        :param requests: requests to serve
        :return: cyber-dollars spent on this request set
        """
        before = self.cyber_dollars
        for request in requests.requests:
            self.splay(request.src, request.dst)
        _LOGGER.debug(f"Served {requests.m} requests sequentially, {self.rotations} rotations")
        return self.cyber_dollars - before


class SplayNetOracle:
    """
    Class that runs the reference splays on copies of a tree
    """

    def sequential(self, t: Tree, s: int, d: int) -> OracleResult:
        return sequential_splay(t.copy(), s, d)

    def parallel(self, t: Tree, s: int, d: int) -> OracleResult:
        return parallel_reference_splay(t.copy(), s, d)

    def serve(self, t: Tree, requests: RequestSet) -> SequentialSplayNet:
        net = SequentialSplayNet(t.copy())
        net.serve(requests)
        return net
