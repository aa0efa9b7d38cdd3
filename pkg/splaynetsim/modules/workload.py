import logging
import re
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from ubiquerg import expandpath

from splaynetsim.const import (
    PKG_NAME,
    WORKLOAD_PRODUCT,
    WORKLOAD_TRACE,
    WORKLOAD_UNIFORM,
    WORKLOAD_ZIPF,
)
from splaynetsim.exceptions import TraceFormatError, WorkloadError
from splaynetsim.models import RequestSet, SplayRequestSpec, WorkloadSpec

_LOGGER = logging.getLogger(PKG_NAME)

Seed = Union[int, Sequence[int]]

_SEPARATOR = re.compile(r"[,\s]+")
# rejection sampling of src != dst gives up after this many redraws
_MAX_REDRAWS = 1000


def bounded_zipf_weights(n: int, alpha: float) -> np.ndarray:
    """
    Probabilities of ranks 1..n proportional to rank^-alpha
    """
    ranks = np.arange(1, n + 1, dtype=float)
    weights = ranks ** (-alpha)
    weights /= weights.sum()
    return weights


def _redraw_collisions(
    rng: np.random.Generator, src: np.ndarray, dst: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    collisions = np.flatnonzero(src == dst)
    for _ in range(_MAX_REDRAWS):
        if collisions.size == 0:
            return dst
        dst[collisions] = rng.choice(weights.size, size=collisions.size, p=weights)
        collisions = collisions[src[collisions] == dst[collisions]]
    raise WorkloadError("Could not draw a destination different from the source")


def _arrivals(spec: WorkloadSpec, rng: np.random.Generator, m: int) -> np.ndarray:
    if not spec.poisson:
        return np.zeros(m, dtype=int)
    gaps = rng.exponential(1.0 / spec.rate, size=m)
    return np.floor(np.cumsum(gaps)).astype(int)


def read_weight_file(path: str) -> Tuple[Dict[int, float], Dict[int, float]]:
    """
    Read per-node weights for product workloads.

    :param path: file with rows `id,source_weight,dest_weight`; '#' starts a comment
    :return: (source weights, destination weights)
    """
    sources, destinations = {}, {}
    with open(expandpath(path), "r") as weight_file:
        for line_number, line in enumerate(weight_file, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = _SEPARATOR.split(line)
            if len(fields) != 3:
                raise TraceFormatError(line_number, f"Expected 3 fields, got {len(fields)}")
            try:
                node_id = int(fields[0])
                sources[node_id] = float(fields[1])
                destinations[node_id] = float(fields[2])
            except ValueError as err:
                raise TraceFormatError(line_number, str(err))
    return sources, destinations


def _weight_vector(weights: Dict[int, float], ids: List[int]) -> np.ndarray:
    unknown = set(weights) - set(ids)
    if unknown:
        raise WorkloadError(f"Weights given for unknown nodes: {sorted(unknown)}")
    vector = np.array([weights.get(node_id, 0.0) for node_id in ids], dtype=float)
    if (vector < 0).any() or vector.sum() <= 0:
        raise WorkloadError("Weights must be non-negative and not all zero")
    return vector / vector.sum()


def generate(
    spec: WorkloadSpec, n: int, seed: Seed, ids: Optional[Sequence[int]] = None
) -> RequestSet:
    """
    Draw a request set.

    :param spec: workload description
    :param n: number of nodes
    :param seed: seed of the generator (an int or a sequence of ints)
    :param ids: node ids [Default: 1..n]
    :return: requests in issue order with their empirical frequencies
    """
    if n < 2:
        raise WorkloadError(f"A workload needs at least 2 nodes, got {n}")
    ids = list(ids) if ids is not None else list(range(1, n + 1))
    if spec.kind == WORKLOAD_TRACE:
        return load_trace(spec.path, ids=ids)

    rng = np.random.default_rng(seed)
    m = spec.m
    if spec.kind == WORKLOAD_UNIFORM:
        src = rng.integers(0, n, size=m)
        dst = (src + rng.integers(1, n, size=m)) % n
    elif spec.kind == WORKLOAD_ZIPF:
        weights = bounded_zipf_weights(n, spec.alpha)
        ranked = rng.permutation(n)
        src = rng.choice(n, size=m, p=weights)
        dst = _redraw_collisions(rng, src, rng.choice(n, size=m, p=weights), weights)
        src, dst = ranked[src], ranked[dst]
    elif spec.kind == WORKLOAD_PRODUCT:
        if spec.source_weights and spec.destination_weights:
            source_weights, destination_weights = spec.source_weights, spec.destination_weights
        else:
            source_weights, destination_weights = read_weight_file(spec.path)
        src_p = _weight_vector(source_weights, ids)
        dst_p = _weight_vector(destination_weights, ids)
        src = rng.choice(n, size=m, p=src_p)
        dst = _redraw_collisions(rng, src, rng.choice(n, size=m, p=dst_p), dst_p)
    else:
        raise WorkloadError(f"Unknown workload kind: {spec.kind}")

    arrivals = _arrivals(spec, rng, m)
    requests = [
        SplayRequestSpec(src=ids[s], dst=ids[d], arrival_slot=int(a))
        for s, d, a in zip(src, dst, arrivals)
    ]
    _LOGGER.debug(f"Generated {m} requests of workload '{spec.label}' over {n} nodes")
    return RequestSet(requests=requests)


def load_trace(
    path: str, n: Optional[int] = None, ids: Optional[Sequence[int]] = None
) -> RequestSet:
    """
    Read a request trace with rows `src,dst[,arrival_slot]`; blank lines and '#' comments are
    skipped.

    :param path: trace file
    :param n: number of nodes, ids must lie in 1..n
    :param ids: explicit node ids (takes precedence over n)
    :return: requests in file order
    """
    with open(expandpath(path), "r") as trace_file:
        return parse_trace(trace_file, n=n, ids=ids)


def parse_trace(
    lines: Iterable[str], n: Optional[int] = None, ids: Optional[Sequence[int]] = None
) -> RequestSet:
    known = set(ids) if ids is not None else (set(range(1, n + 1)) if n else None)
    requests = []
    for line_number, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = _SEPARATOR.split(line)
        if len(fields) not in (2, 3):
            raise TraceFormatError(line_number, f"Expected 2 or 3 fields, got {len(fields)}")
        try:
            values = [int(field) for field in fields]
        except ValueError:
            raise TraceFormatError(line_number, f"Non-integer field in '{line}'")
        src, dst = values[0], values[1]
        arrival = values[2] if len(values) == 3 else 0
        if src == dst:
            raise TraceFormatError(line_number, f"Source equals destination ({src})")
        if arrival < 0:
            raise TraceFormatError(line_number, "Negative arrival slot")
        if known is not None and (src not in known or dst not in known):
            raise TraceFormatError(line_number, f"Unknown node id in '{line}'")
        requests.append(SplayRequestSpec(src=src, dst=dst, arrival_slot=arrival))
    return RequestSet(requests=requests)


def empirical_entropy(rs: RequestSet) -> Tuple[float, float]:
    """
    Shannon entropies (bits) of the empirical source and destination distributions
    """

    def _entropy(frequencies: Dict[int, float]) -> float:
        p = np.array(list(frequencies.values()), dtype=float)
        p = p[p > 0]
        if p.size == 0:
            return 0.0
        p /= p.sum()
        return float(-(p * np.log2(p)).sum()) + 0.0

    return _entropy(rs.source_frequencies), _entropy(rs.destination_frequencies)


def merge_request_sets(request_sets: Iterable[RequestSet]) -> RequestSet:
    requests = [request for rs in request_sets for request in rs.requests]
    return RequestSet(requests=requests)


class SplayNetWorkload:
    """
    Class that generates, loads and describes request sets
    """

    def generate(
        self, spec: WorkloadSpec, n: int, seed: Seed, ids: Optional[Sequence[int]] = None
    ) -> RequestSet:
        return generate(spec, n, seed, ids)

    def load_trace(self, path: str, n: Optional[int] = None) -> RequestSet:
        return load_trace(path, n=n)

    def entropy(self, rs: RequestSet) -> Tuple[float, float]:
        return empirical_entropy(rs)
