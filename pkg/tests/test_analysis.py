import math

import pytest

from splaynetsim.const import TERMINATION_COMPLETED, TERMINATION_TIMEOUT
from splaynetsim.exceptions import AnalysisError
from splaynetsim.models import CostLedger, RotationKind, SplayRecord
from splaynetsim.modules.analysis import (
    SplayNetAnalysis,
    check_rotation_bound,
    rotation_delta,
    snapshot_ranks,
    splay_cost,
    summarize,
    total_rank,
)
from splaynetsim.modules.rotation import apply
from splaynetsim.modules.simulator import run
from splaynetsim.modules.topology import build_balanced_tree

from .utils import requests_of, sim_config


class TestRanks:
    def test_total_rank_balanced(self, tree7):
        assert math.isclose(total_rank(tree7), math.log2(7) + 2 * math.log2(3))
        assert total_rank(tree7) == pytest.approx(5.977, abs=1e-3)

    def test_total_rank_path(self, path4):
        assert total_rank(path4) == pytest.approx(4.585, abs=1e-3)

    def test_snapshot_of_selected_nodes(self, tree7):
        ranks = snapshot_ranks(tree7, [4, 2])
        assert ranks == {4: math.log2(7), 2: math.log2(3)}

    def test_snapshots_agree(self, tree15):
        apply(tree15, 3, RotationKind.ZIG_ZAG)
        full = snapshot_ranks(tree15)
        assert snapshot_ranks(tree15, full.keys()) == pytest.approx(full)


class TestRotationBound:
    """
    Test the rank variation of single rotations
    """

    def test_zig_on_two_nodes(self):
        tree = build_balanced_tree(2)
        before = snapshot_ranks(tree)
        apply(tree, 1, RotationKind.ZIG)
        after = snapshot_ranks(tree)
        assert rotation_delta(before, after, 1, RotationKind.ZIG) == 0.0
        check = check_rotation_bound(before, after, 1, RotationKind.ZIG)
        assert check.ok
        assert check.bound == 3.0

    def test_zig_zig_bound(self, tree7):
        nodes = [1, 2, 4]
        before = snapshot_ranks(tree7, nodes)
        apply(tree7, 1, RotationKind.ZIG_ZIG)
        after = snapshot_ranks(tree7, nodes)
        check = check_rotation_bound(before, after, 1, RotationKind.ZIG_ZIG)
        assert check.ok
        assert check.bound == pytest.approx(3 * math.log2(7) - 2)
        assert check.delta == pytest.approx(
            math.log2(7) + math.log2(6) + math.log2(5) - math.log2(7) - math.log2(3)
        )

    def test_different_nodes(self):
        with pytest.raises(AnalysisError, match="different nodes"):
            rotation_delta({1: 0.0}, {2: 0.0}, 1, RotationKind.ZIG)

    def test_missing_mover(self):
        with pytest.raises(AnalysisError, match="missing"):
            rotation_delta({2: 0.0}, {2: 1.0}, 1, RotationKind.ZIG)

    def test_too_many_changes(self):
        before = {1: 0.0, 2: 0.0, 3: 0.0}
        after = {1: 1.0, 2: 1.0, 3: 1.0}
        with pytest.raises(AnalysisError, match="at most 2"):
            rotation_delta(before, after, 1, RotationKind.ZIG)
        assert rotation_delta(before, after, 1, RotationKind.ZIG_ZIG) == 3.0


class TestSplayCost:
    @pytest.mark.parametrize(
        "rotations_src, rotations_dst, max_distance, ok",
        [
            [2, 1, 2, True],
            [3, 1, 2, False],
            [2, 0, 0, True],
            [3, 2, 6, True],
        ],
    )
    def test_splay_cost(self, rotations_src, rotations_dst, max_distance, ok):
        record = SplayRecord(
            splay_id=0,
            src=1,
            dst=2,
            rotations_src=rotations_src,
            rotations_dst=rotations_dst,
            max_distance=max_distance,
        )
        check = splay_cost(CostLedger(splays=[record]), 0)
        assert check.ok is ok
        assert check.rotations == rotations_src + rotations_dst
        assert check.bound == max_distance / 2 + 2

    def test_counts_rotations_not_cyber_dollars(self):
        # two double rotations and a zig cost 5 cyber-dollars but only 3 rotations
        record = SplayRecord(
            splay_id=0, src=63, dst=59, rotations_src=2, rotations_dst=1, cost=5, max_distance=4
        )
        ledger = CostLedger(splays=[record])
        check = splay_cost(ledger, 0)
        assert check.ok
        assert check.bound == 4.0
        assert ledger.max_splay_cost == 3

    def test_unknown_splay(self):
        with pytest.raises(AnalysisError):
            splay_cost(CostLedger(), 3)


class TestSummarize:
    """
    Test run reports
    """

    def test_single_zig(self):
        report = summarize(run(sim_config(7), requests_of((1, 4))))
        assert report.n == 7
        assert report.m == 1
        assert report.workload == "uniform"
        assert report.rotations == 1
        assert report.rounds == 1
        assert report.cyber_dollars == 1
        assert report.rot_per_m == 1
        assert report.D == 1
        assert report.H_src == 0.0
        assert report.termination == TERMINATION_COMPLETED
        assert report.rotation_bound_violations == 0
        assert report.splay_bound_violations == 0
        assert report.round_length_max == report.round_length_mean

    def test_rank_variation_matches_deltas(self):
        result = run(sim_config(15, m=1), requests_of((1, 8), (15, 9), (3, 12)))
        report = summarize(result)
        assert report.total_rank_variation == pytest.approx(report.sum_delta)
        assert report.amortized_total == pytest.approx(report.cyber_dollars + report.sum_delta)
        assert SplayNetAnalysis().amortized_total(result) == pytest.approx(report.amortized_total)

    def test_partial_run(self):
        report = summarize(run(sim_config(7, max_timeslots=1), requests_of((1, 4))))
        assert report.termination == TERMINATION_TIMEOUT
        assert report.rotations == 0
        assert report.rot_per_entropy == 0.0

    def test_summarize_all(self):
        results = [run(sim_config(7), requests_of((1, 4))) for _ in range(2)]
        reports = SplayNetAnalysis().summarize_all(results)
        assert reports[0] == reports[1]
