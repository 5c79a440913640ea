"""Host-side extraction of raw NOR/NAND dumps into files and CSVs."""
from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass

from . import records
from .fat16 import (
    DIR_ENTRY, FAT_EOC, OEM_NAME, SECTOR, SPARE_MAGIC, FtlGeometry, decode_boot_sector, decode_dir_entry,
)
from .ftl import FileEntry


class FtlParseError(ValueError):
    """Raw images could not be mounted. ``offset`` is the NOR/NAND byte offset at fault, if known."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        where = f" at offset 0x{offset:x}" if offset is not None else ""
        super().__init__(f"{message}{where}")


@dataclass
class ExtractedFile:
    entry: FileEntry
    data: bytes


def locate_volume(raw_nor: bytes) -> tuple[int, FtlGeometry]:
    """Scan sector-aligned NOR offsets for the volume's boot sector."""
    candidates = []
    pos = raw_nor.find(OEM_NAME, 3)
    while pos != -1:
        if (pos - 3) % SECTOR == 0:
            candidates.append(pos - 3)
        pos = raw_nor.find(OEM_NAME, pos + 1)
    if not candidates:
        raise FtlParseError("no FAT16 boot sector signature found in NOR image")
    errors = []
    for off in candidates:
        try:
            g = decode_boot_sector(raw_nor[off:off + SECTOR])
        except ValueError as exc:
            errors.append((off, str(exc)))
            continue
        if g.fat_offset != off:
            errors.append((off, "boot sector does not sit at its recorded offset"))
            continue
        return off, g
    off, why = errors[0]
    raise FtlParseError(f"corrupted boot sector ({why})", off)


def mount_and_extract(raw_nor: bytes, raw_nand: bytes) -> list[ExtractedFile]:
    off, g = locate_volume(raw_nor)
    if len(raw_nor) != g.nor_capacity:
        raise FtlParseError(f"NOR image is {len(raw_nor)} bytes, volume expects {g.nor_capacity}", off)
    page, spare = g.nand_page_size, g.nand_spare_size
    stride = page + spare
    expected_nand = (g.nand_capacity // page) * stride
    if len(raw_nand) != expected_nand:
        raise FtlParseError(f"NAND image is {len(raw_nand)} bytes, volume expects {expected_nand}", 0)

    fat_raw = raw_nor[g.fat_start:g.fat_start + (g.cluster_count + 2) * 2]
    fat = struct.unpack(f"<{g.cluster_count + 2}H", fat_raw)
    if fat[0] & 0xFF00 != 0xFF00 or fat[1] != FAT_EOC:
        raise FtlParseError("FAT reserved entries are corrupt", g.fat_start)

    out = []
    for slot in range(g.root_entries):
        pos = g.root_start + slot * DIR_ENTRY
        raw = raw_nor[pos:pos + DIR_ENTRY]
        if raw[0] == 0:
            break
        try:
            dec = decode_dir_entry(raw)
        except (ValueError, UnicodeDecodeError) as exc:
            raise FtlParseError(f"unreadable directory entry ({exc})", pos) from None
        if dec is None:
            continue
        name, created_t, start, size = dec
        n = -(-size // g.cluster_size)
        chain = [start]
        while len(chain) < n + 1:
            nxt = fat[chain[-1]] if 2 <= chain[-1] < len(fat) else 0
            if nxt == FAT_EOC:
                break
            if not 2 <= nxt < len(fat):
                raise FtlParseError(f"broken cluster chain for {name}", g.fat_start + 2 * chain[-1])
            chain.append(nxt)
        if len(chain) != n or chain != list(range(start, start + n)):
            raise FtlParseError(f"cluster chain for {name} is not {n} contiguous clusters",
                                g.fat_start + 2 * start)
        data = bytearray()
        first_page = (start - 2) * g.cluster_size // page
        for p in range(first_page, first_page + n * g.cluster_size // page):
            sp = raw_nand[p * stride + page:p * stride + page + 3]
            if sp[0] != SPARE_MAGIC:
                break
            (valid,) = struct.unpack_from("<H", sp, 1)
            if not 0 < valid <= page:
                raise FtlParseError(f"bad spare record in {name}", p * stride + page)
            data += raw_nand[p * stride:p * stride + valid]
            if valid < page:
                break
        if len(data) > size:
            raise FtlParseError(f"{name} holds more data than its pre-allocated size", first_page * stride)
        entry = FileEntry(name, created_t, size, start, write_cursor=len(data), closed=True, slot=slot)
        out.append(ExtractedFile(entry, bytes(data)))
    return out


def write_extraction(files: list[ExtractedFile], out_dir) -> list[str]:
    """Write each file's bytes plus a decoded CSV (IMU/PPG layouts; hex otherwise)."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for f in files:
        base = os.path.join(out_dir, f.entry.name.replace(".", "_"))
        with open(base + ".bin", "wb") as fh:
            fh.write(f.data)
        with open(base + ".csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            kind = records.kind_for_name(f.entry.name)
            if kind is None:
                w.writerow(["offset", "hex"])
                for i in range(0, len(f.data), 32):
                    w.writerow([i, f.data[i:i + 32].hex()])
            else:
                w.writerow(records.csv_header(kind))
                for row in records.decode_rows(kind, f.data, f.entry.created_t):
                    w.writerow(row)
        written += [base + ".bin", base + ".csv"]
    return written


def extract_files(nor_path, nand_path, out_dir) -> list[ExtractedFile]:
    with open(nor_path, "rb") as fh:
        raw_nor = fh.read()
    with open(nand_path, "rb") as fh:
        raw_nand = fh.read()
    files = mount_and_extract(raw_nor, raw_nand)
    write_extraction(files, out_dir)
    return files
