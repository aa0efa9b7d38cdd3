import logging
from typing import Iterable, List, Optional

from sqlalchemy import delete, func, select
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import Session

from splaynetsim.const import CSV_COLUMNS, PKG_NAME
from splaynetsim.db_utils import BaseEngine, Runs
from splaynetsim.exceptions import ResultStoreError
from splaynetsim.models import RunReport

_LOGGER = logging.getLogger(PKG_NAME)


class SplayNetResults:
    """
    Class that represents stored run reports in the result store.

    While using this class, user can add, retrieve and delete run reports
    """

    def __init__(self, db_engine: BaseEngine):
        """
        :param db_engine: BaseEngine object with sa engine
        """
        self._sa_engine = db_engine.engine
        self._db_engine = db_engine

    def add(self, report: RunReport) -> int:
        """
        Store one run report

        :param report: run report
        :return: id of the stored row
        """
        return self.add_many([report])[0]

    def add_many(self, reports: Iterable[RunReport]) -> List[int]:
        """
        Store run reports in one transaction

        :param reports: run reports
        :return: ids of the stored rows, in input order
        """
        rows = [
            Runs(
                **{column: getattr(report, column) for column in CSV_COLUMNS},
                termination=report.termination,
                report=report.model_dump(mode="json"),
            )
            for report in reports
        ]
        try:
            with Session(self._sa_engine) as session:
                session.add_all(rows)
                session.commit()
                ids = [row.id for row in rows]
        except SQLAlchemyError as err:
            raise ResultStoreError(f"Could not store run reports: {err}")
        _LOGGER.info(f"Stored {len(ids)} run reports")
        return ids

    def get(self, n: Optional[int] = None, workload: Optional[str] = None) -> List[RunReport]:
        """
        Get stored run reports, oldest first

        :param n: only reports of this tree size
        :param workload: only reports of this workload label (e.g. 'zipf:1.2')
        :return: run reports
        """
        statement = select(Runs.report).order_by(Runs.id)
        if n is not None:
            statement = statement.where(Runs.n == n)
        if workload is not None:
            statement = statement.where(Runs.workload == workload)
        with Session(self._sa_engine) as session:
            results = session.scalars(statement).all()
        return [RunReport(**report) for report in results]

    def count(self) -> int:
        with Session(self._sa_engine) as session:
            return session.scalar(select(func.count(Runs.id)))

    def delete_all(self) -> None:
        """
        Delete every stored run report

        :return: None
        """
        with Session(self._sa_engine) as session:
            session.execute(delete(Runs))
            session.commit()
        _LOGGER.info("Deleted all run reports")
