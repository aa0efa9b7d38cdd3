import functools
import logging
from typing import Iterable, Iterator, List, Optional, Tuple

from splaynetsim.const import BUFFER_CAPACITY, PKG_NAME
from splaynetsim.exceptions import BufferOverflowError
from splaynetsim.models import BufferEntry

_LOGGER = logging.getLogger(PKG_NAME)


def hierarchy_rank(owner: int, entry: BufferEntry) -> int:
    """
    Number of hops from the requester up to owner, read off the chain the entry carries. An
    owner outside the chain is the top of the rotation, one level above the chain.
    """
    chain = [x for x in (entry.level1, entry.level2, entry.level3) if x is not None]
    if owner in chain:
        return chain.index(owner)
    return len(chain)


def priority_key(owner: int, entry: BufferEntry) -> Tuple[int, int, int, int]:
    return (
        entry.super_round,
        entry.round,
        hierarchy_rank(owner, entry),
        entry.level1,
    )


def compare(owner: int, a: BufferEntry, b: BufferEntry) -> int:
    """
    Priority order of two entries in the buffer of owner: lower super-round first, then lower
    round, then the requester nearer below owner, then the smaller requester id.

    :return: -1 when a goes first, 1 when b goes first, 0 for the same request
    """
    key_a = priority_key(owner, a)
    key_b = priority_key(owner, b)
    if key_a < key_b:
        return -1
    if key_a > key_b:
        return 1
    return 0


class Buffer:
    """
    Bounded, priority-ordered queue of rotation requests held by one node
    """

    def __init__(self, owner: int, capacity: int = BUFFER_CAPACITY):
        self.owner = owner
        self.capacity = capacity
        self._entries: List[BufferEntry] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[BufferEntry]:
        return iter(list(self._entries))

    def __contains__(self, key) -> bool:
        return self.find(key) is not None

    def __repr__(self):
        return f"Buffer(owner={self.owner}, entries={[e.key for e in self._entries]})"

    @property
    def entries(self) -> Tuple[BufferEntry, ...]:
        return tuple(self._entries)

    def find(self, key) -> Optional[BufferEntry]:
        for entry in self._entries:
            if entry.key == key:
                return entry
        return None

    def head(self) -> Optional[BufferEntry]:
        return self._entries[0] if self._entries else None

    def resort(self) -> "Buffer":
        self._entries.sort(key=functools.cmp_to_key(functools.partial(compare, self.owner)))
        return self

    def insert(self, entry: BufferEntry) -> "Buffer":
        """
        Insert an entry and restore priority order. An entry with the same identity is
        replaced in place.

        :param entry: request to store
        :return: this buffer
        """
        for index, existing in enumerate(self._entries):
            if existing.key == entry.key:
                self._entries[index] = entry
                return self.resort()
        if len(self._entries) >= self.capacity:
            raise BufferOverflowError(
                f"Node {self.owner} already holds {len(self._entries)} entries"
            )
        self._entries.append(entry)
        return self.resort()

    def remove_completed(self, level1: int, round: int, super_round: int) -> "Buffer":
        self._entries = [e for e in self._entries if e.key != (level1, round, super_round)]
        return self

    def discard(self, entries: Iterable[BufferEntry]) -> "Buffer":
        keys = {entry.key for entry in entries}
        self._entries = [e for e in self._entries if e.key not in keys]
        return self

    def reconcile_on_link_change(
        self,
        old_neighbor: Optional[int],
        new_neighbor: Optional[int],
        imported: Iterable[BufferEntry],
    ) -> "Buffer":
        """
        Drop entries that reference a neighbor the owner lost and merge entries shared by the
        neighbor it gained.

        :param old_neighbor: neighbor replaced by the link change, if any
        :param new_neighbor: neighbor gained by the link change, if any
        :param imported: entries received from the new neighbor
        :return: this buffer
        """
        if old_neighbor is not None and old_neighbor != new_neighbor:
            before = len(self._entries)
            self._entries = [e for e in self._entries if not e.references(old_neighbor)]
            if len(self._entries) != before:
                _LOGGER.debug(
                    f"Node {self.owner} dropped {before - len(self._entries)} entries of "
                    f"node {old_neighbor}"
                )
        for entry in imported:
            self.insert(entry)
        return self.resort()
