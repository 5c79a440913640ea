"""Simulated NOR/NAND flash with a split-device FAT16 translation layer."""
from .device import FlashDevice, FlashError, FlashKind
from .extract import ExtractedFile, FtlParseError, extract_files, mount_and_extract, write_extraction
from .fat16 import GiB, KiB, MiB, FtlGeometry, GeometryError
from .ftl import FileEntry, FlashImage, FtlError, WearReport, format

__all__ = [
    "FlashDevice", "FlashError", "FlashKind", "ExtractedFile", "FtlParseError", "extract_files",
    "mount_and_extract", "write_extraction", "GiB", "KiB", "MiB", "FtlGeometry", "GeometryError",
    "FileEntry", "FlashImage", "FtlError", "WearReport", "format",
]
