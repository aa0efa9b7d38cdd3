import math

import pytest

from splaynetsim.const import AGG_MEAN, TERMINATION_COMPLETED
from splaynetsim.exceptions import AnalysisError
from splaynetsim.models import ExperimentSpec, WorkloadSpec
from splaynetsim.modules.experiment import (
    aggregate,
    cell_config,
    run_sweep,
    scaling_fit,
    with_aggregates,
)

from .utils import make_report


class TestSweep:
    """
    Test sweeps over tree sizes and seeds
    """

    def test_cell_config_uses_fraction(self):
        spec = ExperimentSpec(
            nodes=[64], workload=WorkloadSpec(kind="zipf", alpha=1.5), requests_frac=0.25
        )
        config = cell_config(spec, 64, seed=3)
        assert config.workload.m == 16
        assert config.workload.alpha == 1.5
        assert config.seed == 3

    @pytest.mark.parametrize(
        "frac, n, m",
        [
            [None, 64, 5],
            [0.25, 8, 2],
            [0.01, 8, 1],
        ],
    )
    def test_requests_for(self, frac, n, m):
        spec = ExperimentSpec(
            nodes=[n], workload=WorkloadSpec(kind="uniform", m=5), requests_frac=frac
        )
        assert spec.requests_for(n) == m

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"nodes": []},
            {"nodes": [7], "seeds": []},
            {"nodes": [7], "requests_frac": 0.0},
        ],
    )
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentSpec(**kwargs)

    def test_run_sweep(self):
        spec = ExperimentSpec(
            nodes=[7, 15], seeds=[1, 2], workload=WorkloadSpec(kind="uniform", m=2)
        )
        reports = run_sweep(spec)
        assert [(r.n, r.seed) for r in reports] == [(7, 1), (7, 2), (15, 1), (15, 2)]
        assert all(r.termination == TERMINATION_COMPLETED for r in reports)
        assert all(r.m == 2 for r in reports)


class TestAggregates:
    def test_aggregate(self):
        row = aggregate([make_report(seed=0, rotations=2.0), make_report(seed=1, rotations=4.0)])
        assert row.agg == AGG_MEAN
        assert row.seed is None
        assert row.rotations == 3.0
        assert row.timeslots == 20.0
        assert row.termination == TERMINATION_COMPLETED

    def test_mixed_termination(self):
        reports = [make_report(seed=0), make_report(seed=1)]
        reports[1] = reports[1].model_copy(update={"termination": "timeout"})
        assert aggregate(reports).termination == "mixed"

    def test_empty(self):
        with pytest.raises(AnalysisError):
            aggregate([])

    def test_with_aggregates(self):
        reports = [
            make_report(n=7, seed=0),
            make_report(n=7, seed=1),
            make_report(n=15, seed=0),
        ]
        rows = with_aggregates(reports)
        assert [(r.n, r.agg) for r in rows] == [(7, None), (7, None), (7, AGG_MEAN), (15, None)]


class TestScalingFit:
    def test_log_slope(self):
        reports = [
            make_report(n=8, rotations=3.0),
            make_report(n=16, rotations=4.0),
            make_report(n=32, rotations=5.0),
        ]
        slope, intercept = scaling_fit(reports)
        assert slope == pytest.approx(1.0)
        assert intercept == pytest.approx(0.0, abs=1e-9)

    def test_aggregate_rows_are_ignored(self):
        reports = [make_report(n=8, rotations=3.0), make_report(n=16, rotations=4.0)]
        rows = reports + [aggregate(reports)]
        assert scaling_fit(rows) == pytest.approx(scaling_fit(reports))

    def test_needs_two_sizes(self):
        with pytest.raises(AnalysisError, match="two distinct"):
            scaling_fit([make_report(n=8), make_report(n=8, seed=1)])

    def test_unknown_axis(self):
        with pytest.raises(AnalysisError):
            scaling_fit([make_report()], x="seed")


@pytest.mark.slow
class TestScalingBehaviour:
    """
    Test the cost trends of concurrent runs at reduced scale
    """

    def test_rotations_grow_with_log_n(self):
        spec = ExperimentSpec(
            nodes=[64, 128, 256, 512],
            seeds=list(range(5)),
            workload=WorkloadSpec(kind="uniform"),
            requests_frac=0.25,
        )
        reports = run_sweep(spec)
        assert all(r.termination == TERMINATION_COMPLETED for r in reports)
        slope, _ = scaling_fit(reports)
        assert slope > 0
        per_log_n = [row.rot_per_m_log_n for row in with_aggregates(reports) if row.agg]
        assert max(per_log_n) < 2 * min(per_log_n)

    def test_skewed_demand_costs_less(self):
        means = []
        for workload in (
            WorkloadSpec(kind="zipf", m=64, alpha=1.6),
            WorkloadSpec(kind="zipf", m=64, alpha=1.2),
            WorkloadSpec(kind="uniform", m=64),
        ):
            spec = ExperimentSpec(nodes=[256], seeds=list(range(8)), workload=workload)
            means.append(aggregate(run_sweep(spec)).rot_per_m)
        assert means[0] < means[1] < means[2]

    def test_round_length_grows_with_log_m(self):
        ratios = []
        for m in (8, 32, 128):
            spec = ExperimentSpec(
                nodes=[256], seeds=list(range(4)), workload=WorkloadSpec(kind="uniform", m=m)
            )
            row = aggregate(run_sweep(spec))
            ratios.append(row.round_length_p95 / math.log2(m))
        assert max(ratios) < 3 * min(ratios)
