"""Raw NOR / NAND flash chip models with program/erase legality and wear counters."""
from __future__ import annotations

from collections import Counter
from contextlib import contextmanager
from enum import Enum

import numpy as np


class FlashKind(str, Enum):
    NOR = "nor"
    NAND = "nand"


class FlashError(RuntimeError):
    """Illegal device operation (program without erase, out of range)."""


class FlashDevice:
    """A flash chip: program granularity is a page, erase granularity a block.

    A page can be programmed once after an erase; programming it again
    raises :class:`FlashError`. NAND pages carry a spare (out-of-band) area
    programmed together with the page. With ``retain_data=False`` the chip
    keeps only its state and counters, which is enough for wear accounting
    over long simulated runs.

    Every program and erase is tallied under the current operation tag (see
    :meth:`tagged`), so callers can attribute wear to operation classes.
    """

    def __init__(self, kind: FlashKind, capacity: int, page_size: int, block_size: int,
                 spare_size: int = 0, retain_data: bool = True):
        if capacity <= 0 or page_size <= 0 or block_size <= 0:
            raise ValueError("capacity, page_size and block_size must be positive")
        if block_size % page_size or capacity % block_size:
            raise ValueError("page size must divide block size and block size must divide capacity")
        self.kind = FlashKind(kind)
        self.capacity = capacity
        self.page_size = page_size
        self.block_size = block_size
        self.spare_size = spare_size
        self.retain_data = retain_data
        self.pages_per_block = block_size // page_size
        self.num_pages = capacity // page_size
        self.num_blocks = capacity // block_size
        self._data = bytearray(b"\xff") * capacity if retain_data else None
        self._spare = bytearray(b"\xff") * (self.num_pages * spare_size) if retain_data else None
        self.programmed = np.zeros(self.num_pages, dtype=bool)
        self.write_counts = np.zeros(self.num_pages, dtype=np.uint32)
        self.erase_counts = np.zeros(self.num_blocks, dtype=np.uint32)
        self.erases_by_tag: Counter[str] = Counter()
        self.programs_by_tag: Counter[str] = Counter()
        self.tag = "other"

    @contextmanager
    def tagged(self, tag: str):
        previous, self.tag = self.tag, tag
        try:
            yield self
        finally:
            self.tag = previous

    @property
    def total_erases(self) -> int:
        return int(self.erase_counts.sum())

    @property
    def total_page_writes(self) -> int:
        return int(self.write_counts.sum())

    def erase(self, block: int) -> None:
        if not 0 <= block < self.num_blocks:
            raise FlashError(f"{self.kind.value}: block {block} out of range")
        self.erase_blocks(block, 1)

    def erase_blocks(self, first: int, count: int) -> None:
        if count <= 0:
            return
        if first < 0 or first + count > self.num_blocks:
            raise FlashError(f"{self.kind.value}: blocks {first}..{first + count - 1} out of range")
        p0, p1 = first * self.pages_per_block, (first + count) * self.pages_per_block
        if self._data is not None:
            self._data[p0 * self.page_size:p1 * self.page_size] = b"\xff" * ((p1 - p0) * self.page_size)
            if self.spare_size:
                self._spare[p0 * self.spare_size:p1 * self.spare_size] = b"\xff" * ((p1 - p0) * self.spare_size)
        self.programmed[p0:p1] = False
        self.erase_counts[first:first + count] += 1
        self.erases_by_tag[self.tag] += count

    def program(self, page: int, data: bytes, spare: bytes = b"") -> None:
        self.program_span(page, data, [spare] if spare else None)

    def program_span(self, first_page: int, data: bytes, spares=None) -> None:
        """Program consecutive pages starting at ``first_page``.

        ``data`` may end mid-page; the remainder of that page stays 0xFF.
        ``spares`` is an optional per-page list of spare-area bytes.
        """
        if not data:
            return
        n = -(-len(data) // self.page_size)
        if first_page < 0 or first_page + n > self.num_pages:
            raise FlashError(f"{self.kind.value}: pages {first_page}..{first_page + n - 1} out of range")
        if self.programmed[first_page:first_page + n].any():
            bad = first_page + int(np.flatnonzero(self.programmed[first_page:first_page + n])[0])
            raise FlashError(f"{self.kind.value}: page {bad} programmed twice without erase")
        if self._data is not None:
            off = first_page * self.page_size
            self._data[off:off + len(data)] = data
            if spares:
                if len(spares) != n:
                    raise ValueError("one spare entry per page required")
                for i, sp in enumerate(spares):
                    if len(sp) > self.spare_size:
                        raise FlashError("spare data larger than spare area")
                    so = (first_page + i) * self.spare_size
                    self._spare[so:so + len(sp)] = sp
        self.programmed[first_page:first_page + n] = True
        self.write_counts[first_page:first_page + n] += 1
        self.programs_by_tag[self.tag] += n

    def _need_data(self):
        if self._data is None:
            raise FlashError(f"{self.kind.value}: device was created without data retention")

    def read(self, offset: int, length: int) -> bytes:
        self._need_data()
        if offset < 0 or offset + length > self.capacity:
            raise FlashError(f"{self.kind.value}: read {offset}+{length} out of range")
        return bytes(self._data[offset:offset + length])

    def read_spare(self, page: int) -> bytes:
        self._need_data()
        so = page * self.spare_size
        return bytes(self._spare[so:so + self.spare_size])

    def dump(self) -> bytes:
        """Raw image; NAND pages are interleaved with their spare areas."""
        self._need_data()
        if not self.spare_size:
            return bytes(self._data)
        pages = np.frombuffer(bytes(self._data), dtype=np.uint8).reshape(self.num_pages, self.page_size)
        spare = np.frombuffer(bytes(self._spare), dtype=np.uint8).reshape(self.num_pages, self.spare_size)
        return np.hstack([pages, spare]).tobytes()

    @property
    def raw_size(self) -> int:
        return self.num_pages * (self.page_size + self.spare_size)
