import logging
import math
from typing import Dict, Iterable, List, Optional

import numpy as np

from splaynetsim.const import BOUND_EPSILON, PKG_NAME, TERMINATION_COMPLETED
from splaynetsim.exceptions import AnalysisError
from splaynetsim.models import (
    CostLedger,
    RotationBoundCheck,
    RotationKind,
    RunReport,
    RunResult,
    SplayCostCheck,
)
from splaynetsim.modules.topology import Tree
from splaynetsim.modules.workload import empirical_entropy, merge_request_sets

_LOGGER = logging.getLogger(PKG_NAME)


def subtree_sizes(t: Tree) -> Dict[int, int]:
    """
    Exact subtree sizes by a bottom-up count over the links
    """
    sizes = {}
    stack = [(t.root, False)]
    while stack:
        node_id, expanded = stack.pop()
        children = t.children(node_id)
        if expanded:
            sizes[node_id] = 1 + sum(sizes[child] for child in children)
            continue
        stack.append((node_id, True))
        stack.extend((child, False) for child in children)
    return sizes


def snapshot_ranks(t: Tree, nodes: Optional[Iterable[int]] = None) -> Dict[int, float]:
    """
    Ranks (log2 of subtree size) of the given nodes, or of every node when nodes is None.

    :param t: tree
    :param nodes: nodes to snapshot [Default: all, counted bottom-up]
    :return: node id -> rank
    """
    if nodes is None:
        return {node_id: math.log2(size) for node_id, size in subtree_sizes(t).items()}
    return {node_id: math.log2(t.subtree_size(node_id)) for node_id in nodes}


def total_rank(t: Tree) -> float:
    return math.fsum(snapshot_ranks(t).values())


def rotation_delta(
    before: Dict[int, float], after: Dict[int, float], u: int, kind: RotationKind
) -> float:
    """
    Rank variation of one rotation of u, from snapshots taken right before and after it
    """
    if set(before) != set(after):
        raise AnalysisError("Snapshots cover different nodes")
    if u not in before:
        raise AnalysisError(f"Node {u} is missing from the snapshots")
    changed = [node_id for node_id in before if before[node_id] != after[node_id]]
    allowed = 3 if kind.is_double else 2
    if len(changed) > allowed:
        raise AnalysisError(
            f"{len(changed)} ranks changed, a {kind.value} changes at most {allowed}: {changed}"
        )
    return math.fsum(after.values()) - math.fsum(before.values())


def check_rotation_bound(
    before: Dict[int, float], after: Dict[int, float], u: int, kind: RotationKind
) -> RotationBoundCheck:
    """
    Check delta <= 3 (r'(u) - r(u)), minus 2 for double rotations
    """
    delta = rotation_delta(before, after, u, kind)
    bound = 3 * (after[u] - before[u])
    if kind.is_double:
        bound -= 2
    return RotationBoundCheck(ok=delta <= bound + BOUND_EPSILON, delta=delta, bound=bound)


def splay_cost(ledger: CostLedger, splay_id: int) -> SplayCostCheck:
    """
    Rotations committed by both endpoints of a splay against half its maximum distance plus two
    """
    for splay in ledger.splays:
        if splay.splay_id == splay_id:
            bound = splay.max_distance / 2 + 2
            return SplayCostCheck(
                ok=splay.rotations <= bound, rotations=splay.rotations, bound=bound
            )
    raise AnalysisError(f"Splay {splay_id} is not in the ledger")


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def summarize(run: RunResult) -> RunReport:
    """
    Summarize a run: totals, per-request ratios, entropies and round lengths.

    :param run: finished (or aborted) run
    :return: report; runs that did not complete carry their termination and diagnostic
    """
    n = run.config.n
    m = run.m
    ledger = run.ledger
    rotations = ledger.total_rotations
    # a round ends with the commit of its rotation
    rounds = rotations
    merged = merge_request_sets(run.requests)
    h_src, h_dst = empirical_entropy(merged) if merged.requests else (0.0, 0.0)
    log_n = math.log2(n) if n > 1 else 1.0

    round_lengths = np.array(
        [record.commit_slot - record.request_slot for record in ledger.rotations], dtype=float
    )
    delays = [s.queueing_delay for s in ledger.splays if s.queueing_delay is not None]
    rotation_violations = sum(1 for record in ledger.rotations if not record.bound_ok)
    splay_violations = sum(
        1
        for splay in ledger.splays
        if splay.completed and not splay_cost(ledger, splay.splay_id).ok
    )
    variation = 0.0
    if run.tree is not None and run.initial_tree is not None:
        variation = total_rank(run.tree) - total_rank(run.initial_tree)

    sum_delta = math.fsum(record.delta for record in ledger.rotations)

    if run.termination != TERMINATION_COMPLETED:
        _LOGGER.warning(f"Summarizing a partial run: {run.termination} ({run.diagnostic})")

    return RunReport(
        n=n,
        m=m,
        workload=run.config.workload.label,
        seed=run.config.seed,
        rotations=rotations,
        rounds=rounds,
        timeslots=run.timeslots,
        H_src=h_src,
        H_dst=h_dst,
        D=ledger.max_splay_cost,
        rot_per_m=_ratio(rotations, m),
        rounds_per_m=_ratio(rounds, m),
        slots_per_m=_ratio(run.timeslots, m),
        rot_per_m_log_n=_ratio(rotations, m * log_n),
        rot_per_entropy=_ratio(rotations, m * (h_src + h_dst) + 1),
        slots_per_m_log_n_log_m=_ratio(run.timeslots, m * log_n * math.log2(m + 1)),
        cyber_dollars=ledger.cyber_dollars,
        queueing_delay=float(np.mean(delays)) if delays else 0.0,
        round_length_mean=float(round_lengths.mean()) if round_lengths.size else 0.0,
        round_length_p95=float(np.percentile(round_lengths, 95)) if round_lengths.size else 0.0,
        round_length_max=float(round_lengths.max()) if round_lengths.size else 0.0,
        total_rank_variation=variation,
        sum_delta=sum_delta,
        amortized_total=ledger.cyber_dollars + sum_delta,
        rotation_bound_violations=rotation_violations,
        splay_bound_violations=splay_violations,
        max_buffer=run.max_buffer,
        termination=run.termination,
        diagnostic=run.diagnostic,
    )


class SplayNetAnalysis:
    """
    Class that groups the post-run analysis routines: rank snapshots, bounds and reports
    """

    def summarize(self, run: RunResult) -> RunReport:
        return summarize(run)

    def summarize_all(self, runs: List[RunResult]) -> List[RunReport]:
        return [summarize(run) for run in runs]

    def snapshot_ranks(self, t: Tree, nodes: Optional[Iterable[int]] = None) -> Dict[int, float]:
        return snapshot_ranks(t, nodes)

    def total_rank(self, t: Tree) -> float:
        return total_rank(t)

    def splay_cost(self, ledger: CostLedger, splay_id: int) -> SplayCostCheck:
        return splay_cost(ledger, splay_id)

    def amortized_total(self, run: RunResult) -> float:
        """
        Total cyber-dollars plus the total rank variation of the run
        """
        return run.ledger.cyber_dollars + math.fsum(r.delta for r in run.ledger.rotations)
