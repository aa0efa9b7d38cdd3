import datetime
import logging
from typing import Optional

from sqlalchemy import JSON, TIMESTAMP, Result, Select, event, select
from sqlalchemy.engine import create_engine
from sqlalchemy.exc import OperationalError, ProgrammingError
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column

from splaynetsim.const import DEFAULT_DSN, PKG_NAME
from splaynetsim.exceptions import ResultStoreError

_LOGGER = logging.getLogger(PKG_NAME)


class Base(DeclarativeBase):
    type_annotation_map = {datetime.datetime: TIMESTAMP(timezone=True)}


@event.listens_for(Base.metadata, "after_create")
def receive_after_create(target, connection, tables, **kw):
    """
    listen for the 'after_create' event
    """
    if tables:
        _LOGGER.info("A table was created")
    else:
        _LOGGER.info("A table was not created")


def deliver_submission_date(context):
    return datetime.datetime.now(datetime.timezone.utc)


class Runs(Base):
    """
    Runs table representation in the database: one row per run report
    """

    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(primary_key=True)
    n: Mapped[int]
    m: Mapped[int]
    workload: Mapped[str]
    seed: Mapped[Optional[int]]
    rotations: Mapped[float]
    rounds: Mapped[float]
    timeslots: Mapped[float]
    H_src: Mapped[float]
    H_dst: Mapped[float]
    D: Mapped[float]
    rot_per_m: Mapped[float]
    rounds_per_m: Mapped[float]
    slots_per_m: Mapped[float]
    rot_per_m_log_n: Mapped[float]
    rot_per_entropy: Mapped[float]
    slots_per_m_log_n_log_m: Mapped[float]
    agg: Mapped[Optional[str]]
    termination: Mapped[str]
    report: Mapped[dict] = mapped_column(JSON)
    submission_date: Mapped[datetime.datetime] = mapped_column(default=deliver_submission_date)


class BaseEngine:
    """
    A class with base methods, that are used in several classes. e.g. session_execute
    """

    def __init__(self, *, dsn: str = DEFAULT_DSN, echo: bool = False):
        """
        Initialize connection to the result store.

        :param dsn: SQLAlchemy database URL [Default: in-memory SQLite]
            (e.g. 'sqlite:///results.db')
        :param echo: log every statement
        """
        self._engine = create_engine(dsn, echo=echo)
        try:
            self.create_schema(self._engine)
        except (ProgrammingError, OperationalError) as err:
            raise ResultStoreError(str(err))
        self.check_db_connection()

    def create_schema(self, engine=None):
        """
        Create sql schema in the database.

        :param engine: sqlalchemy engine [Default: None]
        :return: None
        """
        if not engine:
            engine = self._engine
        Base.metadata.create_all(engine)
        return None

    def session_execute(self, statement: Select) -> Result:
        """
        Execute statement using sqlalchemy statement

        :param statement: SQL query or a SQL expression that is constructed using
            SQLAlchemy's SQL expression language
        :return: query result represented with declarative base
        """
        _LOGGER.debug(f"Executing statement: {statement}")
        with Session(self._engine) as session:
            query_result = session.execute(statement)

        return query_result

    @property
    def engine(self):
        return self._engine

    def check_db_connection(self):
        try:
            self.session_execute(select(Runs).limit(1))
        except (ProgrammingError, OperationalError) as err:
            raise ResultStoreError(str(err))

    def delete_schema(self, engine=None) -> None:
        """
        Delete sql schema in the database.

        :param engine: sqlalchemy engine [Default: None]
        :return: None
        """
        if not engine:
            engine = self._engine
        Base.metadata.drop_all(engine)
        return None
