from typing import List, Optional, Union

from splaynetsim.const import DEFAULT_DSN, TERMINATION_DETECTOR
from splaynetsim.db_utils import BaseEngine
from splaynetsim.exceptions import DetectorFiredError
from splaynetsim.models import (
    DetectorFlags,
    ExperimentSpec,
    RequestSet,
    RunReport,
    RunResult,
    SimConfig,
    VerifyReport,
)
from splaynetsim.modules.analysis import SplayNetAnalysis
from splaynetsim.modules.experiment import run_sweep, verify_oracle
from splaynetsim.modules.oracle import SplayNetOracle
from splaynetsim.modules.results import SplayNetResults
from splaynetsim.modules.simulator import Simulator
from splaynetsim.modules.topology import Tree
from splaynetsim.modules.workload import SplayNetWorkload


class SplayNetAgent(object):
    def __init__(self, dsn: str = DEFAULT_DSN, echo: bool = False):
        """
        Initialize the simulator agent and its result store.

        :param dsn: SQLAlchemy URL of the result store [Default: in-memory SQLite]
            (e.g. 'sqlite:///results.db')
        :param echo: log every SQL statement
        """
        db_engine = BaseEngine(dsn=dsn, echo=echo)

        self.db_engine = db_engine
        self._sa_engine = db_engine.engine

        self._workload = SplayNetWorkload()
        self._analysis = SplayNetAnalysis()
        self._oracle = SplayNetOracle()
        self._results = SplayNetResults(db_engine)

    @property
    def workload(self) -> SplayNetWorkload:
        return self._workload

    @property
    def analysis(self) -> SplayNetAnalysis:
        return self._analysis

    @property
    def oracle(self) -> SplayNetOracle:
        return self._oracle

    @property
    def results(self) -> SplayNetResults:
        return self._results

    def run(
        self,
        config: SimConfig,
        requests: Union[RequestSet, List[RequestSet], None] = None,
        tree: Optional[Tree] = None,
        strict: bool = False,
    ) -> RunResult:
        """
        Run the concurrent protocol once.

        :param config: run configuration
        :param requests: request set(s) [Default: generated from the config's workload]
        :param tree: initial tree [Default: balanced tree over 1..n]
        :param strict: raise DetectorFiredError when a detector ended the run
        :return: run result
        """
        result = Simulator(config, requests=requests, tree=tree).run()
        if strict and result.termination == TERMINATION_DETECTOR:
            raise DetectorFiredError(result.diagnostic)
        return result

    def sweep(self, spec: ExperimentSpec, store: bool = False) -> List[RunReport]:
        """
        Run a sweep and optionally keep its reports in the result store.

        :param spec: sweep description
        :param store: add the reports to the result store
        :return: one report per run
        """
        reports = run_sweep(spec)
        if store:
            self._results.add_many(reports)
        return reports

    def verify(
        self,
        n: int,
        exhaustive_pairs: bool = True,
        samples: int = 1000,
        seed: int = 0,
        detectors: Optional[DetectorFlags] = None,
    ) -> VerifyReport:
        return verify_oracle(n, exhaustive_pairs, samples, seed, detectors)

    def __str__(self):
        return f"SplayNet agent with result store: '{self._sa_engine.url}'"

    @property
    def connection(self):
        return self._sa_engine
