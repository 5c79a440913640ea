"""On-media FAT16 structures: geometry, boot sector, directory entries, timestamps."""
from __future__ import annotations

import struct
import zlib
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

KiB = 1024
MiB = 1024 * KiB
GiB = 1024 * MiB

SECTOR = 512
DIR_ENTRY = 32
FAT16_MAX_CLUSTERS = 65524
FAT_EOC = 0xFFFF
FAT_MEDIA = 0xFFF8
OEM_NAME = b"MPFTL1.0"
DESCRIPTOR_MAGIC = b"MPFTLDSC"
DESCRIPTOR_OFFSET = 62
SPARE_MAGIC = 0xA5


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class FtlGeometry:
    """Split-device layout: FAT volume metadata on NOR, data clusters on NAND.

    Defaults are desk scale. Page/block sizes follow the parts named for the
    wristband: 256 B NOR pages with 4 KiB sectors, 4 KiB NAND pages with
    256 B spare and 64 pages per block.
    """

    nor_capacity: int = 1 * MiB
    nand_capacity: int = 16 * MiB
    cluster_size: int = 4 * KiB
    fat_offset: int = 256 * KiB
    nor_page_size: int = 256
    nor_block_size: int = 4 * KiB
    nand_page_size: int = 4 * KiB
    nand_pages_per_block: int = 64
    nand_spare_size: int = 256
    root_entries: int = 512

    @property
    def nand_block_size(self) -> int:
        return self.nand_page_size * self.nand_pages_per_block

    @property
    def sectors_per_cluster(self) -> int:
        return self.cluster_size // SECTOR

    @property
    def cluster_count(self) -> int:
        return self.nand_capacity // self.cluster_size

    @property
    def fat_sectors(self) -> int:
        return -(-((self.cluster_count + 2) * 2) // SECTOR)

    @property
    def root_sectors(self) -> int:
        return self.root_entries * DIR_ENTRY // SECTOR

    @property
    def metadata_bytes(self) -> int:
        """Boot sector + FAT + root directory, as laid out on NOR."""
        return (1 + self.fat_sectors + self.root_sectors) * SECTOR

    @property
    def fat_region(self) -> tuple[int, int]:
        """NOR byte range reserved for the volume metadata, rounded to erase blocks."""
        size = -(-self.metadata_bytes // self.nor_block_size) * self.nor_block_size
        return self.fat_offset, self.fat_offset + size

    @property
    def fat_start(self) -> int:
        return self.fat_offset + SECTOR

    @property
    def root_start(self) -> int:
        return self.fat_start + self.fat_sectors * SECTOR

    @property
    def total_sectors(self) -> int:
        return 1 + self.fat_sectors + self.root_sectors + self.cluster_count * self.sectors_per_cluster

    def validate(self) -> None:
        if self.nand_capacity <= 0 or self.cluster_count < 1:
            raise GeometryError("NAND data region cannot host a single cluster")
        if self.cluster_size % SECTOR or not 1 <= self.sectors_per_cluster <= 128:
            raise GeometryError("cluster size must be 1..128 sectors of 512 bytes")
        if self.cluster_size % self.nand_page_size:
            raise GeometryError("cluster size must be a whole number of NAND pages")
        if self.nand_capacity % self.nand_block_size or self.nand_capacity % self.cluster_size:
            raise GeometryError("NAND capacity must be a whole number of blocks and clusters")
        if self.cluster_count > FAT16_MAX_CLUSTERS:
            raise GeometryError(
                f"{self.cluster_count} clusters exceed the FAT16 limit of {FAT16_MAX_CLUSTERS}; "
                "use a larger cluster size or a smaller NAND data region")
        if self.nor_capacity % self.nor_block_size or self.nor_block_size % self.nor_page_size:
            raise GeometryError("NOR capacity, block and page sizes are inconsistent")
        if self.fat_offset % self.nor_block_size:
            raise GeometryError("fat_offset must be aligned to a NOR erase block")
        lo, hi = self.fat_region
        if lo < 0 or hi > self.nor_capacity:
            raise GeometryError("FAT region does not fit on the NOR device")
        if self.root_entries * DIR_ENTRY % SECTOR:
            raise GeometryError("root directory must fill whole sectors")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict | None) -> "FtlGeometry":
        doc = dict(doc or {})
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise GeometryError(f"unknown geometry fields: {sorted(unknown)}")
        return cls(**{k: int(v) for k, v in doc.items()})


_DESC = struct.Struct("<8sIQIHIHHHI")


def encode_boot_sector(g: FtlGeometry, serial: int = 0x4D50_0001) -> bytes:
    bs = bytearray(SECTOR)
    bs[0:3] = b"\xeb\x3c\x90"
    bs[3:11] = OEM_NAME
    total = g.total_sectors
    struct.pack_into("<HBHBHHBHHHII", bs, 11,
                     SECTOR, g.sectors_per_cluster, 1, 1, g.root_entries,
                     total if total < 0x10000 else 0, 0xF8, g.fat_sectors, 32, 64, 0,
                     total if total >= 0x10000 else 0)
    struct.pack_into("<BBBI11s8s", bs, 36, 0x80, 0, 0x29, serial, b"MOTIONPI   ", b"FAT16   ")
    desc = _DESC.pack(DESCRIPTOR_MAGIC, g.nor_capacity, g.nand_capacity, g.fat_offset, g.nor_page_size,
                      g.nor_block_size, g.nand_page_size, g.nand_pages_per_block, g.nand_spare_size,
                      g.cluster_size)
    bs[DESCRIPTOR_OFFSET:DESCRIPTOR_OFFSET + len(desc)] = desc
    struct.pack_into("<I", bs, DESCRIPTOR_OFFSET + len(desc), zlib.crc32(desc))
    bs[510:512] = b"\x55\xaa"
    return bytes(bs)


def decode_boot_sector(bs: bytes) -> FtlGeometry:
    """Recover the geometry from a boot sector; raises ValueError on any inconsistency."""
    if len(bs) < SECTOR:
        raise ValueError("boot sector truncated")
    if bs[510:512] != b"\x55\xaa":
        raise ValueError("missing 0x55AA boot signature")
    if bs[54:62] != b"FAT16   ":
        raise ValueError("file system type is not FAT16")
    desc = bs[DESCRIPTOR_OFFSET:DESCRIPTOR_OFFSET + _DESC.size]
    (crc,) = struct.unpack_from("<I", bs, DESCRIPTOR_OFFSET + _DESC.size)
    if zlib.crc32(desc) != crc:
        raise ValueError("FTL descriptor checksum mismatch")
    fields = _DESC.unpack(desc)
    if fields[0] != DESCRIPTOR_MAGIC:
        raise ValueError("FTL descriptor magic missing")
    g = FtlGeometry(nor_capacity=fields[1], nand_capacity=fields[2], fat_offset=fields[3],
                    nor_page_size=fields[4], nor_block_size=fields[5], nand_page_size=fields[6],
                    nand_pages_per_block=fields[7], nand_spare_size=fields[8], cluster_size=fields[9])
    (bps, spc, reserved, nfats, root_entries, total16, _media, fat_sectors) = struct.unpack_from("<HBHBHHBH", bs, 11)
    (total32,) = struct.unpack_from("<I", bs, 32)
    g = FtlGeometry(**{**g.to_dict(), "root_entries": root_entries})
    g.validate()
    if (bps, spc, reserved, nfats, fat_sectors) != (SECTOR, g.sectors_per_cluster, 1, 1, g.fat_sectors):
        raise ValueError("BIOS parameter block disagrees with the FTL descriptor")
    if (total16 or total32) != g.total_sectors:
        raise ValueError("total sector count disagrees with the FTL descriptor")
    return g


_FAT_EPOCH = datetime(1980, 1, 1, tzinfo=timezone.utc).timestamp()


def encode_fat_time(t: float) -> tuple[int, int, int]:
    """UTC seconds -> (tenths byte, time word, date word); 10 ms resolution."""
    if t < _FAT_EPOCH:
        raise ValueError("FAT timestamps start at 1980-01-01")
    cs = int(round(t * 100))
    whole, rem_cs = divmod(cs, 200)
    dt = datetime.fromtimestamp(whole * 2, tz=timezone.utc)
    if dt.year > 2107:
        raise ValueError("FAT timestamps end in 2107")
    time_word = (dt.hour << 11) | (dt.minute << 5) | (dt.second // 2)
    date_word = ((dt.year - 1980) << 9) | (dt.month << 5) | dt.day
    return rem_cs, time_word, date_word


def decode_fat_time(tenths: int, time_word: int, date_word: int) -> float:
    year = 1980 + (date_word >> 9)
    month = (date_word >> 5) & 0xF
    day = date_word & 0x1F
    dt = datetime(year, month, day, time_word >> 11, (time_word >> 5) & 0x3F, (time_word & 0x1F) * 2,
                  tzinfo=timezone.utc)
    return round(dt.timestamp() + tenths / 100.0, 2)


def split_83(name: str) -> tuple[bytes, bytes]:
    base, dot, ext = name.upper().partition(".")
    if not base or len(base) > 8 or len(ext) > 3 or (dot and not ext):
        raise ValueError(f"{name!r} is not a valid 8.3 name")
    allowed = set("ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-~!#$%&'@^`{}()")
    if not set(base + ext) <= allowed:
        raise ValueError(f"{name!r} contains characters not allowed in 8.3 names")
    return base.encode().ljust(8), ext.encode().ljust(3)


def join_83(raw_name: bytes, raw_ext: bytes) -> str:
    base = raw_name.decode("ascii").rstrip()
    ext = raw_ext.decode("ascii").rstrip()
    return f"{base}.{ext}" if ext else base


_DIRENT = struct.Struct("<8s3sBBBHHHHHHHI")


def encode_dir_entry(name: str, created_t: float, start_cluster: int, size: int) -> bytes:
    base, ext = split_83(name)
    tenths, tw, dw = encode_fat_time(created_t)
    return _DIRENT.pack(base, ext, 0x20, 0, tenths, tw, dw, dw, 0, tw, dw, start_cluster, size)


def decode_dir_entry(raw: bytes):
    """Returns None for free/end slots, else (name, created_t, start_cluster, size)."""
    if raw[0] in (0x00, 0xE5):
        return None
    (base, ext, attr, _nt, tenths, tw, dw, _acc, hi, _wt, _wd, cluster, size) = _DIRENT.unpack(raw)
    if attr & 0x18:
        return None
    return join_83(base, ext), decode_fat_time(tenths, tw, dw), cluster | (hi << 16), size
