"""Split-device FAT16 translation layer.

The FAT, boot sector and root directory live in a reserved window on the
NOR chip; the rest of the NOR is filled with opaque runtime bytes. Data
clusters live on NAND. Files are pre-allocated: name, creation time and
size are written once at creation and appends program NAND pages only.

NAND pages are programmed whole. Appends are buffered per open file until
a page fills; :meth:`FlashImage.close_file` programs the final partial
page. Each programmed data page records its valid byte count in its spare
area so the extractor can find where a file's data ends without the FAT
ever being touched by a write.
"""
from __future__ import annotations

import struct
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .device import FlashDevice, FlashError, FlashKind
from .fat16 import (
    DIR_ENTRY, FAT_EOC, FAT_MEDIA, SECTOR, SPARE_MAGIC, FtlGeometry, encode_boot_sector,
    encode_dir_entry, split_83,
)


class FtlError(RuntimeError):
    """File-level failure: no space, duplicate name, overflow, closed file."""


@dataclass
class FileEntry:
    name: str
    created_t: float
    size: int
    start_cluster: int
    write_cursor: int = 0
    closed: bool = False
    slot: int = field(default=-1, repr=False)

    @property
    def remaining(self) -> int:
        return self.size - self.write_cursor


@dataclass(frozen=True)
class WearReport:
    nand_erases_from_fat_ops: int
    nand_erases_total: int
    nor_erases_total: int
    nand_page_writes: int
    nor_page_writes: int
    nand_writes_from_fat_ops: int
    nor_writes_from_fat_ops: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    def as_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.as_dict().items())


METADATA_TAGS = ("format", "create", "metadata")


def _spare_for(valid: int) -> bytes:
    return struct.pack("<BH", SPARE_MAGIC, valid)


class FlashImage:
    """A NOR + NAND pair hosting one FAT16 volume. Single writer."""

    def __init__(self, geometry: FtlGeometry = FtlGeometry(), retain_data: bool = True,
                 runtime_seed: int = 0x5EED):
        geometry.validate()
        self.geometry = g = geometry
        self.nor = FlashDevice(FlashKind.NOR, g.nor_capacity, g.nor_page_size, g.nor_block_size)
        self.nand = FlashDevice(FlashKind.NAND, g.nand_capacity, g.nand_page_size, g.nand_block_size,
                                spare_size=g.nand_spare_size, retain_data=retain_data)
        self._fill_runtime_data(runtime_seed)
        self.fat = np.zeros(g.cluster_count + 2, dtype=np.uint16)
        self.entries: list[FileEntry] = []
        self._used = 0
        self._buffers: dict[str, bytearray] = {}
        self._pages_done: dict[str, int] = {}

    # -- layout -----------------------------------------------------------

    def _fill_runtime_data(self, seed: int) -> None:
        lo, hi = self.geometry.fat_region
        rng = np.random.default_rng(seed)
        page = self.nor.page_size
        with self.nor.tagged("runtime"):
            for a, b in ((0, lo), (hi, self.nor.capacity)):
                if b > a:
                    self.nor.program_span(a // page, rng.integers(0, 256, b - a, dtype=np.uint8).tobytes())

    @contextmanager
    def _op(self, tag: str):
        with self.nor.tagged(tag), self.nand.tagged(tag):
            yield

    def _rewrite_nor(self, updates: list[tuple[int, bytes]]) -> None:
        """Apply byte updates inside the FAT region: read, erase and reprogram affected NOR blocks."""
        nor, bsize = self.nor, self.nor.block_size
        blocks = sorted({off // bsize + k for off, data in updates
                         for k in range((off % bsize + len(data) - 1) // bsize + 1)})
        lo, hi = self.geometry.fat_region
        for b in blocks:
            start = b * bsize
            if not lo <= start < hi:
                raise FlashError("metadata update escaped the FAT region")
            content = bytearray(nor.read(start, bsize))
            for off, data in updates:
                a, z = max(off, start), min(off + len(data), start + bsize)
                if a < z:
                    content[a - start:z - start] = data[a - off:z - off]
            nor.erase(b)
            for p in range(nor.pages_per_block):
                chunk = bytes(content[p * nor.page_size:(p + 1) * nor.page_size])
                if chunk.count(0xFF) != len(chunk):
                    nor.program(start // nor.page_size + p, chunk)

    def format(self) -> "FlashImage":
        g = self.geometry
        self.fat[:] = 0
        self.fat[0], self.fat[1] = FAT_MEDIA, FAT_EOC
        self._used = 0
        self.entries = []
        self._buffers.clear()
        self._pages_done.clear()
        lo, hi = g.fat_region
        volume = bytearray(b"\xff") * (hi - lo)
        meta = bytearray(g.metadata_bytes)
        meta[:SECTOR] = encode_boot_sector(g)
        fat_bytes = self.fat.astype("<u2").tobytes()
        meta[SECTOR:SECTOR + len(fat_bytes)] = fat_bytes
        volume[:len(meta)] = meta
        with self._op("format"):
            self.nand.erase_blocks(0, self.nand.num_blocks)
            self._rewrite_nor([(lo, bytes(volume))])
        return self

    # -- files ------------------------------------------------------------

    def free_clusters(self) -> int:
        return self.geometry.cluster_count - self._used

    def _find_run(self, n: int) -> int:
        free = self.fat[2:] == 0
        if n > len(free):
            return -1
        c = np.concatenate([[0], np.cumsum(free, dtype=np.int64)])
        ok = np.flatnonzero(c[n:] - c[:-n] == n)
        return int(ok[0]) + 2 if len(ok) else -1

    def create_file(self, name: str, size: int, created_t: float) -> FileEntry:
        g = self.geometry
        split_83(name)
        if size <= 0:
            raise FtlError("pre-allocated size must be positive")
        if any(e.name == name.upper() for e in self.entries):
            raise FtlError(f"file {name!r} already exists")
        if len(self.entries) >= g.root_entries:
            raise FtlError("root directory is full")
        n = -(-size // g.cluster_size)
        start = self._find_run(n)
        if start < 0:
            raise FtlError(f"no contiguous run of {n} free clusters for {name!r}")
        self.fat[start:start + n - 1] = np.arange(start + 1, start + n, dtype=np.uint16)
        self.fat[start + n - 1] = FAT_EOC
        slot = len(self.entries)
        entry = FileEntry(name.upper(), float(created_t), int(size), start, slot=slot)
        dirent = encode_dir_entry(entry.name, entry.created_t, start, entry.size)
        fat_chunk = self.fat[start:start + n].astype("<u2").tobytes()
        with self._op("create"):
            self._rewrite_nor([(g.fat_start + 2 * start, fat_chunk),
                               (g.root_start + DIR_ENTRY * slot, dirent)])
        self._used += n
        self.entries.append(entry)
        self._buffers[entry.name] = bytearray()
        self._pages_done[entry.name] = 0
        return entry

    def _first_page(self, entry: FileEntry) -> int:
        return (entry.start_cluster - 2) * self.geometry.cluster_size // self.nand.page_size

    def append(self, entry: FileEntry, data: bytes) -> int:
        if entry.closed:
            raise FtlError(f"{entry.name} is closed")
        if entry.write_cursor + len(data) > entry.size:
            raise FtlError(f"append of {len(data)} bytes overflows {entry.name} "
                           f"({entry.write_cursor}/{entry.size} used)")
        if not data:
            return entry.write_cursor
        buf = self._buffers[entry.name]
        buf += data
        entry.write_cursor += len(data)
        page = self.nand.page_size
        full = len(buf) // page
        if full:
            done = self._pages_done[entry.name]
            spare = _spare_for(page)
            # hot path: tag directly instead of through _op
            nand, prev = self.nand, self.nand.tag
            nand.tag = "data"
            try:
                nand.program_span(self._first_page(entry) + done, bytes(buf[:full * page]), [spare] * full)
            finally:
                nand.tag = prev
            del buf[:full * page]
            self._pages_done[entry.name] = done + full
        return entry.write_cursor

    def close_file(self, entry: FileEntry) -> None:
        if entry.closed:
            return
        buf = self._buffers[entry.name]
        if buf:
            with self._op("data"):
                self.nand.program_span(self._first_page(entry) + self._pages_done[entry.name], bytes(buf),
                                       [_spare_for(len(buf))])
            self._pages_done[entry.name] += 1
            buf.clear()
        entry.closed = True

    def close_all(self) -> None:
        for e in self.entries:
            self.close_file(e)

    def get(self, name: str) -> FileEntry:
        for e in self.entries:
            if e.name == name.upper():
                return e
        raise KeyError(name)

    # -- reporting / dumps --------------------------------------------------

    def wear_report(self) -> WearReport:
        return WearReport(
            nand_erases_from_fat_ops=sum(self.nand.erases_by_tag[t] for t in ("create", "metadata")),
            nand_erases_total=self.nand.total_erases,
            nor_erases_total=self.nor.total_erases,
            nand_page_writes=self.nand.total_page_writes,
            nor_page_writes=self.nor.total_page_writes,
            nand_writes_from_fat_ops=sum(self.nand.programs_by_tag[t] for t in ("create", "metadata")),
            nor_writes_from_fat_ops=sum(self.nor.programs_by_tag[t] for t in ("create", "metadata")),
        )

    def used_fraction(self) -> float:
        total = self.geometry.cluster_count
        return (total - self.free_clusters()) / total

    def dump_nor(self) -> bytes:
        return self.nor.dump()

    def dump_nand(self) -> bytes:
        return self.nand.dump()

    def save(self, prefix) -> tuple[str, str]:
        nor_path, nand_path = f"{prefix}.nor", f"{prefix}.nand"
        with open(nor_path, "wb") as fh:
            fh.write(self.dump_nor())
        with open(nand_path, "wb") as fh:
            fh.write(self.dump_nand())
        return nor_path, nand_path


def format(geometry: FtlGeometry = FtlGeometry(), retain_data: bool = True, runtime_seed: int = 0x5EED) -> FlashImage:
    """Create a fresh NOR+NAND pair and lay down an empty volume."""
    return FlashImage(geometry, retain_data=retain_data, runtime_seed=runtime_seed).format()
