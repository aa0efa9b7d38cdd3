import logging
import math
from collections import Counter
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from splaynetsim.const import (
    AGG_MEAN,
    CSV_COLUMNS,
    PKG_NAME,
    TERMINATION_COMPLETED,
    WORKLOAD_UNIFORM,
)
from splaynetsim.exceptions import AnalysisError
from splaynetsim.models import (
    DetectorFlags,
    ExperimentSpec,
    RequestSet,
    RunReport,
    SimConfig,
    SplayRequestSpec,
    VerifyReport,
    WorkloadSpec,
)
from splaynetsim.modules.analysis import summarize
from splaynetsim.modules.oracle import parallel_reference_splay
from splaynetsim.modules.simulator import run
from splaynetsim.modules.topology import build_balanced_tree

_LOGGER = logging.getLogger(PKG_NAME)

# numeric CSV columns averaged by aggregate rows
_MEAN_COLUMNS = [c for c in CSV_COLUMNS if c not in ("n", "m", "workload", "seed", "agg")]


def cell_config(spec: ExperimentSpec, n: int, seed: int) -> SimConfig:
    workload = spec.workload.model_copy(update={"m": spec.requests_for(n)})
    return SimConfig(
        n=n,
        seed=seed,
        workload=workload,
        max_timeslots=spec.max_timeslots,
        detectors=spec.detectors,
        lockstep_rounds=spec.lockstep_rounds,
        super_rounds=spec.super_rounds,
        log_events=spec.log_events,
    )


def run_sweep(spec: ExperimentSpec) -> List[RunReport]:
    """
    Run every (n, seed) cell of a sweep, one run per cell.

    :param spec: sweep description
    :return: one report per run, in nodes-major order
    """
    reports = []
    for n in spec.nodes:
        for seed in spec.seeds:
            report = summarize(run(cell_config(spec, n, seed)))
            _LOGGER.info(
                f"Cell n={n}, seed={seed}: {report.rotations:g} rotations, "
                f"{report.timeslots:g} slots, {report.termination}"
            )
            reports.append(report)
    return reports


def aggregate(reports: List[RunReport]) -> RunReport:
    """
    Mean row over the runs of one cell, flagged with agg=mean
    """
    if not reports:
        raise AnalysisError("Cannot aggregate an empty list of reports")
    first = reports[0]
    means = {
        column: float(np.mean([getattr(report, column) for report in reports]))
        for column in _MEAN_COLUMNS
    }
    terminations = {report.termination for report in reports}
    return RunReport(
        n=first.n,
        m=first.m,
        workload=first.workload,
        seed=None,
        agg=AGG_MEAN,
        termination=terminations.pop() if len(terminations) == 1 else "mixed",
        **means,
    )


def with_aggregates(reports: List[RunReport]) -> List[RunReport]:
    """
    Reports grouped by (n, m, workload) in first-seen order, each group with more than one run
    followed by its mean row
    """
    groups: Dict[Tuple[int, int, str], List[RunReport]] = {}
    for report in reports:
        groups.setdefault((report.n, report.m, report.workload), []).append(report)
    rows = []
    for group in groups.values():
        rows.extend(group)
        if len(group) > 1:
            rows.append(aggregate(group))
    return rows


def _pairs(n: int, exhaustive_pairs: bool, samples: int, seed: int) -> Iterable[Tuple[int, int]]:
    if exhaustive_pairs:
        return [(s, d) for s in range(1, n + 1) for d in range(1, n + 1) if s != d]
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < samples:
        s, d = (int(x) for x in rng.integers(1, n + 1, size=2))
        if s != d:
            pairs.append((s, d))
    return pairs


def verify_pair(
    n: int, s: int, d: int, detectors: Optional[DetectorFlags] = None
) -> Optional[str]:
    """
    Run one splay through the concurrent protocol in lockstep mode and compare it with the
    serialized reference splay on the balanced tree.

    :return: None when both agree, otherwise a diagnostic
    """
    tree = build_balanced_tree(n)
    expected = parallel_reference_splay(tree.copy(), s, d)
    config = SimConfig(
        n=n,
        workload=WorkloadSpec(kind=WORKLOAD_UNIFORM, m=1),
        lockstep_rounds=True,
        detectors=detectors or DetectorFlags(),
    )
    requests = RequestSet(requests=[SplayRequestSpec(src=s, dst=d)])
    result = run(config, requests=requests, tree=tree)
    if result.termination != TERMINATION_COMPLETED:
        return f"{s}->{d}: run ended with {result.termination} ({result.diagnostic})"
    if result.tree.links() != expected.links:
        return f"{s}->{d}: final topology differs"
    if result.ledger.cyber_dollars != expected.cost:
        return f"{s}->{d}: cost {result.ledger.cyber_dollars} != {expected.cost}"
    committed = Counter((r.requester, r.kind) for r in result.ledger.rotations)
    if committed != Counter(expected.trace):
        return f"{s}->{d}: rotation multiset differs"
    return None


def verify_oracle(
    n: int,
    exhaustive_pairs: bool = True,
    samples: int = 1000,
    seed: int = 0,
    detectors: Optional[DetectorFlags] = None,
) -> VerifyReport:
    """
    Single-splay equivalence suite between the concurrent protocol and the reference splay.

    :param n: tree size
    :param exhaustive_pairs: check every ordered pair
    :param samples: number of random pairs when not exhaustive
    :param seed: seed of the pair sampler
    :param detectors: detectors of the concurrent runs
    :return: number of checked pairs and the mismatching ones
    """
    report = VerifyReport(n=n)
    for s, d in _pairs(n, exhaustive_pairs, samples, seed):
        diagnostic = verify_pair(n, s, d, detectors)
        report.checked += 1
        if diagnostic is not None:
            report.mismatches.append((s, d))
            report.diagnostics.append(diagnostic)
            _LOGGER.warning(f"Oracle mismatch: {diagnostic}")
    _LOGGER.info(f"Verified {report.checked} pairs at n={n}: {len(report.mismatches)} mismatches")
    return report


def scaling_fit(
    reports: List[RunReport], x: str = "n", y: str = "rot_per_m"
) -> Tuple[float, float]:
    """
    Least-squares line of a report column against log2 of n or m, over single-run rows.

    :param reports: run reports
    :param x: 'n' or 'm'
    :param y: report column to regress
    :return: (slope, intercept)
    """
    if x not in ("n", "m"):
        raise AnalysisError(f"Scaling is fitted against 'n' or 'm', got '{x}'")
    rows = [report for report in reports if report.agg is None]
    xs = np.array([math.log2(getattr(report, x)) for report in rows], dtype=float)
    ys = np.array([getattr(report, y) for report in rows], dtype=float)
    if np.unique(xs).size < 2:
        raise AnalysisError("A scaling fit needs at least two distinct sizes")
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(slope), float(intercept)
