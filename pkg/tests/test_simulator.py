import pytest

from splaynetsim.const import (
    BUFFER_CAPACITY,
    EVENT_ABORT,
    EVENT_COMMIT,
    EVENT_LOG_HEADER,
    EVENT_SPLAY_COMPLETE,
    TERMINATION_COMPLETED,
    TERMINATION_DETECTOR,
    TERMINATION_TIMEOUT,
)
from splaynetsim.cli import format_csv
from splaynetsim.exceptions import DetectorFiredError, ProtocolError, SplayRequestError
from splaynetsim.models import BufferEntry, RequestSet, RotationKind, SimConfig, WorkloadSpec
from splaynetsim.modules.analysis import summarize
from splaynetsim.modules.simulator import EventLog, Simulator, run
from splaynetsim.modules.topology import build_balanced_tree, check_invariants
from splaynetsim.splaynetsim import SplayNetAgent

from .utils import requests_of, sim_config


class TestSingleSplay:
    """
    Test lone splays whose timing is fully determined
    """

    def test_adjacent_endpoints(self):
        result = run(sim_config(7), requests_of((2, 3)))
        assert result.termination == TERMINATION_COMPLETED
        assert result.ledger.total_rotations == 0
        [splay] = result.ledger.splays
        assert splay.completed_slot == 0
        assert splay.final_distance == 1

    def test_zig_below_top(self):
        result = run(sim_config(7), requests_of((1, 4)))
        [record] = result.ledger.rotations
        assert record.kind is RotationKind.ZIG
        assert record.requester == 1
        assert record.latency == 6
        assert result.tree.parent(1) == 4
        assert result.ledger.splays[0].cost == 1
        assert result.ledger.splays[0].rotations == 1

    def test_zig_zig_below_top(self):
        result = run(sim_config(15), requests_of((1, 8)))
        [record] = result.ledger.rotations
        assert record.kind is RotationKind.ZIG_ZIG
        assert record.latency == 9
        assert record.distance_before == 3
        assert record.distance_after == 1
        assert record.bound_ok

    def test_both_endpoints_rotate(self):
        result = run(sim_config(7), requests_of((1, 3)))
        assert result.termination == TERMINATION_COMPLETED
        assert [r.kind for r in result.ledger.rotations] == [RotationKind.ZIG, RotationKind.ZIG]
        assert {r.requester for r in result.ledger.rotations} == {1, 3}
        [splay] = result.ledger.splays
        assert splay.cost == 2
        assert splay.rotations == 2
        assert splay.final_distance == 1
        assert splay.initial_distance == 2

    def test_event_log(self, tmp_path):
        result = run(sim_config(7), requests_of((1, 4)))
        assert len(result.log.of(EVENT_COMMIT)) == 1
        assert result.log.of(EVENT_SPLAY_COMPLETE)
        path = tmp_path / "events.log"
        result.log.write(str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == EVENT_LOG_HEADER
        assert len(lines) == len(result.log) + 1

    def test_disabled_log_stays_empty(self):
        log = EventLog(enabled=False)
        log.append(0, 1, EVENT_COMMIT)
        assert len(log) == 0


class TestRuns:
    @pytest.mark.parametrize("lockstep", [False, True])
    def test_completion(self, lockstep):
        config = SimConfig(
            n=15,
            seed=3,
            workload=WorkloadSpec(kind="uniform", m=3),
            lockstep_rounds=lockstep,
        )
        result = run(config)
        assert result.termination == TERMINATION_COMPLETED
        assert all(splay.completed for splay in result.ledger.splays)
        assert all(splay.final_distance == 1 for splay in result.ledger.splays)
        assert check_invariants(result.tree).ok
        assert result.tree.inorder() == list(range(1, 16))
        assert all(record.release_slot is not None for record in result.ledger.rotations)

    def test_deterministic(self):
        config = SimConfig(n=15, seed=11, workload=WorkloadSpec(kind="uniform", m=3))
        first, second = run(config), run(config)
        assert first.ledger == second.ledger
        assert first.tree.links() == second.tree.links()
        assert first.timeslots == second.timeslots

    def test_super_rounds_run_in_order(self):
        result = run(sim_config(7), [requests_of((1, 4)), requests_of((7, 4))])
        assert result.termination == TERMINATION_COMPLETED
        first, second = result.ledger.splays
        assert second.super_round == 1
        assert second.start_slot >= first.completed_slot

    def test_timeout(self):
        result = run(sim_config(7, max_timeslots=2), requests_of((1, 4)))
        assert result.termination == TERMINATION_TIMEOUT
        assert result.timeslots == 2
        assert "2 slots" in result.diagnostic

    def test_unknown_endpoint(self):
        with pytest.raises(SplayRequestError):
            Simulator(sim_config(7), requests_of((1, 9)))

    def test_custom_tree(self, path4):
        links = path4.links()
        result = run(sim_config(4), requests_of((1, 4)), tree=path4)
        assert result.termination == TERMINATION_COMPLETED
        assert result.initial_tree.links() == links
        assert [r.kind for r in result.ledger.rotations] == [RotationKind.ZIG_ZIG]
        assert result.tree.parent(1) == 4


class TestDetectors:
    """
    Test detectors on injected faults
    """

    @staticmethod
    def _two_requests(sim):
        a = BufferEntry(level1=1, level2=2, splay_peer=5)
        b = BufferEntry(level1=3, level2=4, splay_peer=6)
        sim.register_request(a)
        sim.register_request(b)
        return a, b

    def test_deadlock(self):
        sim = Simulator(sim_config(7), requests=RequestSet())
        a, b = self._two_requests(sim)
        sim.states[2].lock(b)
        sim.hold(b, 2)
        sim.states[2].awaiting_lock[a.request_key] = (a, 1)
        sim.states[4].lock(a)
        sim.hold(a, 4)
        sim.states[4].awaiting_lock[b.request_key] = (b, 3)
        sim.watch(2, 4)

        cycle = sim.detect_deadlock()
        assert {edge[0] for edge in cycle} == {a.request_key, b.request_key}
        with pytest.raises(DetectorFiredError, match="deadlock"):
            sim.step()

    def test_deadlock_ends_run(self):
        sim = Simulator(sim_config(7), requests=RequestSet())
        a, b = self._two_requests(sim)
        sim.states[2].lock(b)
        sim.hold(b, 2)
        sim.states[2].awaiting_lock[a.request_key] = (a, 1)
        sim.states[4].lock(a)
        sim.hold(a, 4)
        sim.states[4].awaiting_lock[b.request_key] = (b, 3)
        sim.watch(2, 4)
        result = sim.run()
        assert result.termination == TERMINATION_DETECTOR
        assert "deadlock" in result.diagnostic

    def test_no_deadlock_on_idle_tree(self):
        sim = Simulator(sim_config(7), requests=RequestSet())
        self._two_requests(sim)
        assert sim.detect_deadlock() is None

    def test_buffer_inconsistency(self):
        sim = Simulator(sim_config(7), requests=RequestSet())
        a = BufferEntry(level1=1, level2=2, splay_peer=5)
        b = BufferEntry(level1=6, level2=4, splay_peer=1)
        sim.register_request(a)
        sim.register_request(b)
        for node_id in (2, 6):
            sim.states[node_id].buffer.insert(a)
            sim.states[node_id].buffer.insert(b)
            sim.buffered(a, node_id)
            sim.buffered(b, node_id)
        assert sim.detect_buffer_inconsistency() == (a.key, b.key, 2, 6)
        with pytest.raises(DetectorFiredError, match="buffer inconsistency"):
            sim.step()

    def test_loop(self):
        sim = Simulator(sim_config(7), requests_of((1, 3)))
        sim.step()
        assert sim.detect_loop() is None
        for _ in range(3):
            sim.note_progress(0, 2, 2)
        sim.note_progress(0, 2, 1)
        for _ in range(3):
            sim.note_progress(0, 1, 1)
        with pytest.raises(DetectorFiredError, match="loop"):
            sim.note_progress(0, 1, 2)

    def test_taking_the_ancestor_position_is_progress(self):
        sim = Simulator(sim_config(7), requests_of((1, 3)))
        sim.step()
        for _ in range(10):
            sim.note_progress(0, 2, 2, above_peer=True)
        assert sim.detect_loop() is None

    def test_release_of_unknown_request(self):
        sim = Simulator(sim_config(7), requests=RequestSet())
        with pytest.raises(ProtocolError):
            sim.released(BufferEntry(level1=1, level2=2, splay_peer=3), 2)

    def test_strict_agent_run(self, mocker):
        mocker.patch.object(
            Simulator, "detect_deadlock", return_value=[((1, 0, 0, 0), (3, 0, 0, 0))]
        )
        agent = SplayNetAgent()
        with pytest.raises(DetectorFiredError):
            agent.run(sim_config(7), requests_of((1, 4)), strict=True)
        result = agent.run(sim_config(7), requests_of((1, 4)))
        assert result.termination == TERMINATION_DETECTOR

    def test_detectors_off(self, mocker):
        mocker.patch.object(
            Simulator, "detect_deadlock", return_value=[((1, 0, 0, 0), (3, 0, 0, 0))]
        )
        config = sim_config(7)
        config.detectors.deadlock = False
        result = run(config, requests_of((1, 4)))
        assert result.termination == TERMINATION_COMPLETED

    def test_balanced_start_is_recorded(self):
        result = run(sim_config(7), requests_of((1, 4)))
        assert result.initial_tree.links() == build_balanced_tree(7).links()


class TestCommitValidity:
    """
    Test that stale requests are aborted instead of committed
    """

    @staticmethod
    def _routed(sim, kind, w=None, top=None):
        entry = BufferEntry(level1=1, level2=2, splay_peer=7)
        if w is not None:
            entry = entry.model_copy(update={"level3": w})
        sim.register_request(entry)
        sim.note_route(entry, kind=kind, w=w, top=top, top_known=True)
        return entry

    def test_current_double_rotation_is_valid(self):
        sim = Simulator(sim_config(7), requests=RequestSet())
        self._routed(sim, RotationKind.ZIG_ZIG, w=4)
        [request] = sim._requests.values()
        assert sim._still_valid(request)

    def test_kind_must_match_the_peer(self):
        sim = Simulator(sim_config(7), requests=RequestSet())
        # 7 sits outside the subtree of 2 and 4 is not 7, so a zig is the wrong choice
        self._routed(sim, RotationKind.ZIG, top=4)
        [request] = sim._requests.values()
        assert not sim._still_valid(request)

    def test_stale_ready_request_is_aborted(self):
        sim = Simulator(sim_config(7), requests=RequestSet())
        entry = self._routed(sim, RotationKind.ZIG, top=4)
        sim.request_commit(entry)
        sim.step()
        assert sim.live_requests == []
        assert sim.ledger.total_rotations == 0
        assert len(sim.log.of(EVENT_ABORT, 1)) == 1
        assert sim.tree.links() == build_balanced_tree(7).links()

    def test_top_must_stay_in_place(self):
        sim = Simulator(sim_config(7), requests=RequestSet())
        self._routed(sim, RotationKind.ZIG_ZIG, w=4)
        [request] = sim._requests.values()
        request.top, request.top_known = 6, True
        assert not sim._still_valid(request)


def _randomized(n, m, seed, kind="uniform", alpha=1.2):
    return SimConfig(
        n=n,
        seed=seed,
        workload=WorkloadSpec(kind=kind, m=m, alpha=alpha),
        log_events=True,
    )


@pytest.mark.slow
class TestRandomizedRuns:
    """
    Test concurrent runs on generated workloads with every detector on
    """

    @staticmethod
    def _check(result):
        assert result.termination == TERMINATION_COMPLETED, result.diagnostic
        assert result.max_buffer <= BUFFER_CAPACITY
        assert all(splay.final_distance == 1 for splay in result.ledger.splays)
        assert all(record.bound_ok for record in result.ledger.rotations)
        assert check_invariants(result.tree).ok
        assert result.tree.inorder() == list(range(1, result.config.n + 1))

    @pytest.mark.parametrize("seed", range(20))
    def test_n128_m32(self, seed):
        self._check(run(_randomized(128, 32, seed)))

    @pytest.mark.parametrize(
        "n, m, kind, seed",
        [
            [15, 8, "uniform", 1],
            [63, 40, "zipf", 2],
            [100, 64, "uniform", 3],
            [256, 128, "zipf", 4],
            [512, 64, "uniform", 5],
            [512, 256, "zipf", 6],
        ],
    )
    def test_mixed_workloads(self, n, m, kind, seed):
        self._check(run(_randomized(n, m, seed, kind=kind)))

    @pytest.mark.parametrize("lockstep", [False, True])
    def test_replays_are_identical(self, lockstep):
        config = _randomized(64, 32, seed=9).model_copy(update={"lockstep_rounds": lockstep})
        results = [run(config) for _ in range(3)]
        logs = {"\n".join(result.log.to_lines()) for result in results}
        rows = {format_csv([summarize(result)]) for result in results}
        assert len(logs) == 1
        assert len(rows) == 1

    @pytest.mark.parametrize("n", [15, 63])
    def test_lone_splays_respect_their_cost_bound(self, n):
        for s in range(1, n + 1):
            for d in range(1, n + 1):
                if s == d:
                    continue
                result = run(sim_config(n), requests_of((s, d)))
                report = summarize(result)
                assert report.termination == TERMINATION_COMPLETED, (s, d)
                assert report.splay_bound_violations == 0, (s, d)
