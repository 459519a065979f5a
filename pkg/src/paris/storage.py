"""Per-partition multi-version store: version chains, snapshot reads, GC."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .clocks import Timestamp, TxId, VersionStamp


class RoutingFault(Exception):
    """A key was handed to a partition that does not own it."""


class ProtocolFault(Exception):
    """An impossible-by-design protocol state was observed; fail fast."""


@dataclass(frozen=True)
class Version:
    """One immutable version of one key."""

    key: bytes
    value: bytes
    ut: Timestamp
    tx: TxId
    sr: int

    @property
    def stamp(self) -> VersionStamp:
        return VersionStamp(self.ut, self.tx, self.sr)


class Storage:
    """Key -> version chain, each chain sorted descending by version stamp.

    Reads dominate, and the freshest-visible query scans from the newest
    entry, so descending order keeps both lookups a single bisection.
    """

    def __init__(self, owns: Optional[Callable[[bytes], bool]] = None):
        self._chains: dict[bytes, list[Version]] = {}
        self._owns = owns

    def _check_owned(self, key: bytes) -> None:
        if self._owns is not None and not self._owns(key):
            raise RoutingFault(f"key {key!r} not owned by this partition")

    def put_version(self, key: bytes, value: bytes, ut: Timestamp, tx: TxId, sr: int) -> None:
        """Insert a version; idempotent when the exact version already exists."""
        self._check_owned(key)
        version = Version(key, value, ut, tx, sr)
        chain = self._chains.setdefault(key, [])
        idx = self._descending_index(chain, version.stamp)
        if idx < len(chain) and chain[idx].stamp == version.stamp:
            if chain[idx].value != value:
                raise ProtocolFault(f"conflicting values for version {version.stamp} of {key!r}")
            return
        chain.insert(idx, version)

    def read_visible(self, key: bytes, snapshot: Timestamp) -> Optional[Version]:
        """Freshest version with ut <= snapshot, or None if none qualifies."""
        self._check_owned(key)
        chain = self._chains.get(key)
        if not chain:
            return None
        idx = self._first_at_or_below(chain, snapshot)
        if idx == len(chain):
            return None
        return chain[idx]

    def collect_garbage(self, s_old: Timestamp) -> int:
        """Drop versions older than the newest one at or below s_old.

        Keeps every version with ut > s_old plus the single newest version
        with ut <= s_old, so read_visible(k, s) is unchanged for all s >= s_old.
        Returns the number of versions removed.
        """
        removed = 0
        for key, chain in self._chains.items():
            idx = self._first_at_or_below(chain, s_old)
            if idx < len(chain) - 1:
                removed += len(chain) - idx - 1
                del chain[idx + 1 :]
        return removed

    def keys(self) -> list[bytes]:
        return list(self._chains.keys())

    def chain(self, key: bytes) -> list[Version]:
        return list(self._chains.get(key, ()))

    def version_count(self) -> int:
        return sum(len(c) for c in self._chains.values())

    @staticmethod
    def _descending_index(chain: list[Version], stamp: VersionStamp) -> int:
        """Insertion point for stamp in a descending chain (bigger stamps first)."""
        lo, hi = 0, len(chain)
        while lo < hi:
            mid = (lo + hi) // 2
            if chain[mid].stamp > stamp:
                lo = mid + 1
            else:
                hi = mid
        return lo

    @staticmethod
    def _first_at_or_below(chain: list[Version], snapshot: Timestamp) -> int:
        """Index of the first entry with ut <= snapshot in a descending chain.

        Entries with ut <= snapshot form a suffix because ut leads the stamp
        order, so the first of them carries the maximal visible stamp.
        """
        lo, hi = 0, len(chain)
        while lo < hi:
            mid = (lo + hi) // 2
            if chain[mid].ut > snapshot:
                lo = mid + 1
            else:
                hi = mid
        return lo
