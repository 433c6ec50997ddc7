"""Discovery, decoding, and labeling of source glyph scans.

A corpus is a directory tree of 128x128 binary character images (PNG, or a
raw 2048-byte packed-bit sidecar format), arranged in class subdirectories
the way the second-edition SD19 release arranges them: directory names are
the hexadecimal ASCII code of the class character (``4a`` -> 'J').

Which directory holds which class is data, not code: a plain-text layout
manifest maps directory patterns to (class, partition hint), so synthetic
test corpora and the real release go through the same scanner.
"""

from __future__ import annotations

import fnmatch
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .errors import DecodeError, FormatError, LayoutError

SOURCE_SIDE = 128
RAW_BYTES = SOURCE_SIDE * SOURCE_SIDE // 8  # packed-bit plane, row-major, MSB first

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

PARTITION_HINTS = ("census_train", "student_test", "unknown")

# Class codes: 0-9 digits, 10-35 uppercase, 36-61 lowercase.
CLASS_CHARS = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"
CLASS_COUNT = len(CLASS_CHARS)


def code_to_char(code: int) -> str:
    """Class code 0..61 -> the character it denotes."""
    if not 0 <= code < CLASS_COUNT:
        raise ValueError(f"class code {code} outside [0, {CLASS_COUNT})")
    return CLASS_CHARS[code]


def char_to_code(char: str) -> int:
    """Character -> class code 0..61."""
    idx = CLASS_CHARS.find(char)
    if idx < 0:
        raise ValueError(f"{char!r} is not a corpus class character")
    return idx


def hex_to_code(hex_name: str) -> int:
    """Hexadecimal ASCII code (e.g. '4a') -> class code."""
    try:
        char = chr(int(hex_name, 16))
    except ValueError:
        raise ValueError(f"{hex_name!r} is not a hexadecimal character code") from None
    return char_to_code(char)


def code_to_hex(code: int) -> str:
    """Class code -> lowercase hexadecimal ASCII code ('J' -> '4a')."""
    return f"{ord(code_to_char(code)):02x}"


@dataclass
class RawGlyph:
    """A labeled 128x128 binary source image with provenance metadata."""

    pixels: np.ndarray  # (128, 128) uint8 in {0, 1}; 1 = ink
    label: int  # 0..61
    partition_hint: str  # census_train | student_test | unknown
    source_id: str


@dataclass
class ErrorLedger:
    """Collects skipped-file records so a large run can survive isolated damage."""

    entries: list[dict] = field(default_factory=list)

    def record(self, source: str, reason: str) -> None:
        self.entries.append({"source": source, "reason": reason})

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class LayoutRule:
    pattern: str  # fnmatch pattern against the directory path relative to root
    label: int
    partition_hint: str


@dataclass
class Layout:
    """Maps corpus subdirectories to classes and partition hints.

    ``invert`` declares the source polarity: set it when scans store dark ink
    on a light background (as SD19 does), so that decoded grids use ink=1.
    """

    rules: list[LayoutRule]
    invert: bool = False

    def classify(self, rel_dir: str) -> LayoutRule:
        for rule in self.rules:
            if fnmatch.fnmatch(rel_dir, rule.pattern):
                return rule
        raise LayoutError(f"directory {rel_dir!r} matches no layout pattern")


def parse_layout(text: str) -> Layout:
    """Parse a layout manifest.

    Line format: ``pattern = class_hex, partition`` with ``#`` comments; an
    ``option invert = on|off`` line sets the ink polarity flag.
    """
    rules: list[LayoutRule] = []
    invert = False
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("option"):
            _, _, option = line.partition(" ")
            key, _, value = option.partition("=")
            key = key.strip().lower()
            value = value.strip().lower()
            if key != "invert":
                raise LayoutError(f"line {lineno}: unknown option {key!r}")
            if value not in ("on", "off", "true", "false"):
                raise LayoutError(f"line {lineno}: invert must be on/off, got {value!r}")
            invert = value in ("on", "true")
            continue
        pattern, sep, rhs = line.partition("=")
        if not sep:
            raise LayoutError(f"line {lineno}: expected 'pattern = class_hex, partition'")
        parts = [p.strip() for p in rhs.split(",")]
        if len(parts) != 2:
            raise LayoutError(f"line {lineno}: expected 'class_hex, partition'")
        class_hex, partition = parts
        if partition not in PARTITION_HINTS:
            raise LayoutError(f"line {lineno}: unknown partition hint {partition!r}")
        try:
            label = hex_to_code(class_hex)
        except ValueError as exc:
            raise LayoutError(f"line {lineno}: {exc}") from None
        rules.append(LayoutRule(pattern=pattern.strip(), label=label, partition_hint=partition))
    return Layout(rules=rules, invert=invert)


def default_sd19_layout() -> Layout:
    """Layout for the second-edition SD19 by_class tree.

    ``<hex>/train_*`` holds the release's suggested training images and
    ``<hex>/hsf_*`` its per-form partitions; which forms came from census
    employees versus students is not recoverable from directory names alone,
    so those are hinted ``unknown``.
    """
    rules = []
    for code in range(CLASS_COUNT):
        hx = code_to_hex(code)
        rules.append(LayoutRule(f"*{hx}/train_{hx}", code, "census_train"))
        rules.append(LayoutRule(f"*{hx}/hsf_*", code, "unknown"))
        rules.append(LayoutRule(f"*{hx}", code, "unknown"))
    return Layout(rules=rules, invert=True)


def decode_image(data: bytes, invert: bool = False, name: str = "<bytes>") -> np.ndarray:
    """Decode one source image to a (128, 128) uint8 grid in {0, 1}, 1 = ink.

    The format is auto-detected by signature: PNG, else the raw 2048-byte
    packed-bit plane. For grayscale PNG sources a pixel is foreground when its
    value is >= 128; ``invert`` flips polarity so dark-on-light scans decode
    to ink=1. Wrong dimensions are a hard error naming the file; undecodable
    streams raise DecodeError so the scanner can ledger and skip them.
    """
    if data[: len(PNG_SIGNATURE)] == PNG_SIGNATURE:
        try:
            with Image.open(io.BytesIO(data)) as img:
                gray = img.convert("L")
                arr = np.asarray(gray, dtype=np.uint8)
        except Exception as exc:
            raise DecodeError(f"{name}: undecodable PNG stream: {exc}") from exc
        if arr.shape != (SOURCE_SIDE, SOURCE_SIDE):
            raise FormatError(
                f"{name}: expected {SOURCE_SIDE}x{SOURCE_SIDE} image, got {arr.shape[0]}x{arr.shape[1]}"
            )
        grid = (arr >= 128).astype(np.uint8)
    elif len(data) == RAW_BYTES:
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        grid = bits.reshape(SOURCE_SIDE, SOURCE_SIDE)
    else:
        raise DecodeError(f"{name}: not a PNG and not a {RAW_BYTES}-byte raw plane ({len(data)} bytes)")
    if invert:
        grid = (1 - grid).astype(np.uint8)
    return grid


def encode_raw(grid: np.ndarray) -> bytes:
    """Pack a (128, 128) binary grid into the raw sidecar format (MSB-first bits)."""
    arr = np.asarray(grid, dtype=np.uint8)
    if arr.shape != (SOURCE_SIDE, SOURCE_SIDE):
        raise FormatError(f"expected {SOURCE_SIDE}x{SOURCE_SIDE} grid, got {arr.shape}")
    return np.packbits(arr.reshape(-1)).tobytes()


IMAGE_SUFFIXES = (".png", ".raw", ".bin")


def scan_corpus(root, layout: Layout, ledger: ErrorLedger | None = None) -> Iterator[RawGlyph]:
    """Yield every decodable glyph under ``root`` exactly once, in path order.

    The walk is deterministic (lexicographic by relative path), so two runs
    over the same tree yield identical sequences. Unreadable or undecodable
    files are recorded in ``ledger`` and skipped; a directory that matches no
    layout pattern is a hard error.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root {root} does not exist")
    files = sorted(
        (p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    for path in files:
        rel = path.relative_to(root)
        rel_dir = rel.parent.as_posix()
        rule = layout.classify(rel_dir)
        try:
            data = path.read_bytes()
            grid = decode_image(data, invert=layout.invert, name=str(rel))
        except (OSError, DecodeError) as exc:
            if ledger is not None:
                ledger.record(str(rel), str(exc))
            continue
        yield RawGlyph(
            pixels=grid,
            label=rule.label,
            partition_hint=rule.partition_hint,
            source_id=rel.as_posix(),
        )
