import os
import warnings
from typing import Optional

from dotenv import load_dotenv
from sqlalchemy.exc import OperationalError

from splaynetsim import SplayNetAgent
from splaynetsim.const import DEFAULT_DSN, TEST_DSN_KEY
from splaynetsim.exceptions import ResultStoreError
from splaynetsim.models import (
    DetectorFlags,
    RequestSet,
    RunReport,
    SimConfig,
    SplayRequestSpec,
    WorkloadSpec,
)

load_dotenv()

DSN = os.getenv(TEST_DSN_KEY, DEFAULT_DSN)

TESTS_PATH = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
    "tests",
)

DATA_PATH = os.path.join(
    TESTS_PATH,
    "data",
)


def get_path_to_data_file(file_name: str) -> str:
    """
    Get path to a file in tests/data
    """
    return os.path.join(DATA_PATH, file_name)


def requests_of(*pairs, arrival_slot: int = 0) -> RequestSet:
    """
    Request set from (src, dst) pairs, all arriving at the same slot
    """
    return RequestSet(
        requests=[SplayRequestSpec(src=s, dst=d, arrival_slot=arrival_slot) for s, d in pairs]
    )


def sim_config(n: int, m: int = 1, lockstep: bool = False, **kwargs) -> SimConfig:
    return SimConfig(
        n=n,
        workload=WorkloadSpec(kind="uniform", m=m),
        lockstep_rounds=lockstep,
        log_events=True,
        detectors=DetectorFlags(),
        **kwargs,
    )


def make_report(
    n: int = 7,
    m: int = 1,
    workload: str = "uniform",
    seed: Optional[int] = 0,
    rotations: float = 2.0,
    timeslots: float = 20.0,
) -> RunReport:
    """
    Run report with placeholder metrics
    """
    return RunReport(
        n=n,
        m=m,
        workload=workload,
        seed=seed,
        rotations=rotations,
        rounds=rotations,
        timeslots=timeslots,
        H_src=0.0,
        H_dst=0.0,
        D=rotations,
        rot_per_m=rotations / m,
        rounds_per_m=rotations / m,
        slots_per_m=timeslots / m,
        rot_per_m_log_n=1.0,
        rot_per_entropy=rotations / (m + 1),
        slots_per_m_log_n_log_m=1.0,
    )


class SplayNetAgentContextManager:
    """
    Class with context manager to connect to the result store. Adds reports and drops
    everything from the store upon exit.
    """

    def __init__(self, url: str = DSN, add_data: bool = False, echo: bool = False):
        """
        :param url: database url e.g. "sqlite:///results.db"
        :param add_data: add sample reports to the store
        """
        self.url = url
        self._agent = None
        self._echo = echo
        self.add_data = add_data

    def __enter__(self):
        self._agent = SplayNetAgent(dsn=self.url, echo=self._echo)
        self.db_engine = self._agent.db_engine
        self.db_engine.create_schema()
        if self.add_data:
            self._insert_data()
        return self._agent

    def __exit__(self, exc_type, exc_value, exc_traceback):
        self.db_engine.delete_schema()

    def _insert_data(self):
        self._agent.results.add_many(
            [
                make_report(n=7, seed=0),
                make_report(n=7, seed=1, rotations=4.0),
                make_report(n=15, seed=0, workload="zipf:1.2", rotations=6.0),
            ]
        )

    @property
    def agent(self) -> SplayNetAgent:
        return self._agent

    def db_setup(self):
        # Check if the store is reachable
        try:
            SplayNetAgent(dsn=self.url)
        except (OperationalError, ResultStoreError):
            warnings.warn(
                UserWarning(f"Skipping tests, because the result store is not reachable: {self.url}")
            )
            return False
        return True
