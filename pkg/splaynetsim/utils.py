from typing import List, Optional, Union

from ubiquerg import expandpath

from splaynetsim.const import (
    ARRIVAL_ALL_AT_ONCE,
    DEFAULT_ALPHA,
    WORKLOAD_PRODUCT,
    WORKLOAD_TRACE,
    WORKLOAD_UNIFORM,
    WORKLOAD_ZIPF,
)
from splaynetsim.exceptions import WorkloadError
from splaynetsim.models import WorkloadSpec


def parse_workload(
    text: str, m: int = 1, arrival: str = ARRIVAL_ALL_AT_ONCE, rate: float = 1.0
) -> WorkloadSpec:
    """
    Convert a workload flag to a workload description

    :param text: 'uniform', 'zipf', 'zipf:<alpha>', 'product:<file>' or 'trace:<file>'
    :param m: number of requests
    :param arrival: arrival process
    :param rate: poisson arrival rate per slot
    :return: workload description
    """
    kind, _, argument = text.partition(":")
    if kind == WORKLOAD_UNIFORM and not argument:
        return WorkloadSpec(kind=kind, m=m, arrival=arrival, rate=rate)
    if kind == WORKLOAD_ZIPF:
        try:
            alpha = float(argument) if argument else DEFAULT_ALPHA
        except ValueError:
            raise WorkloadError(f"Invalid zipf exponent in '{text}'")
        return WorkloadSpec(kind=kind, m=m, alpha=alpha, arrival=arrival, rate=rate)
    if kind in (WORKLOAD_PRODUCT, WORKLOAD_TRACE) and argument:
        return WorkloadSpec(kind=kind, m=m, path=expandpath(argument), arrival=arrival, rate=rate)
    raise WorkloadError(f"Unknown workload: '{text}'")


def parse_int_list(value: Union[str, List[int], None]) -> List[int]:
    """
    Convert '64,128,256' (or a list) to a list of ints
    """
    if value is None:
        return []
    if isinstance(value, list):
        return [int(item) for item in value]
    return [int(item) for item in value.split(",") if item.strip()]


def parse_seeds(value: Optional[str]) -> List[int]:
    """
    Convert a seed flag to a list of seeds.

    :param value: single seed '7', list '1,2,5' or inclusive range '1..20'
    :return: list of seeds
    """
    if not value:
        return []
    if ".." in value:
        first, _, last = value.partition("..")
        first, last = int(first), int(last)
        if last < first:
            raise ValueError(f"Empty seed range: '{value}'")
        return list(range(first, last + 1))
    return parse_int_list(value)
