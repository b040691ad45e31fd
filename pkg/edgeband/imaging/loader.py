"""
Image ingestion - PGM (P2/P5, 8-bit) and headerless CSV matrices

PGM intensities are divided by maxval so they land in [0, 1]. CSV values are
kept as written, which lets a saved grid be read back bit for bit. In both
formats the first matrix axis (rows) is the x coordinate.
"""
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np

from edgeband.exceptions import ImageParseError
from edgeband.imaging.image_model import ImageGrid
from shared.utils.logging import get_logger

logger = get_logger(__name__)

PathLike = Union[str, os.PathLike]
ImageFormat = Literal["pgm", "pgm_ascii", "pgm_binary", "csv"]

_WHITESPACE = b" \t\r\n\x0b\x0c"


class _PGMTokenizer:
    """Header tokenizer that skips '#' comments and tracks byte offsets"""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def _skip(self) -> None:
        data = self.data
        while self.pos < len(data):
            c = data[self.pos:self.pos + 1]
            if c in (b" ", b"\t", b"\r", b"\n", b"\x0b", b"\x0c"):
                self.pos += 1
            elif c == b"#":
                while self.pos < len(data) and data[self.pos:self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            else:
                break

    def next_token(self, what: str) -> Tuple[bytes, int]:
        self._skip()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos] not in _WHITESPACE and self.data[self.pos:self.pos + 1] != b"#":
            self.pos += 1
        if start == self.pos:
            raise ImageParseError(f"unexpected end of file while reading {what}", self.path, start)
        return self.data[start:self.pos], start

    def next_int(self, what: str) -> int:
        token, offset = self.next_token(what)
        try:
            return int(token)
        except ValueError:
            raise ImageParseError(f"invalid {what} {token!r}", self.path, offset) from None


def _parse_pgm(data: bytes, path: str, expect: Optional[str]) -> np.ndarray:
    tok = _PGMTokenizer(data, path)
    magic, offset = tok.next_token("magic number")
    if magic not in (b"P2", b"P5"):
        raise ImageParseError(f"unsupported magic number {magic!r} (expected P2 or P5)", path, offset)
    if expect == "pgm_ascii" and magic != b"P2" or expect == "pgm_binary" and magic != b"P5":
        raise ImageParseError(f"magic number {magic.decode()} does not match format {expect}", path, offset)

    width = tok.next_int("width")
    height = tok.next_int("height")
    max_offset = tok.pos
    maxval = tok.next_int("maxval")
    if width < 2 or height < 2:
        raise ImageParseError(f"inconsistent dimensions {width}x{height}", path, max_offset)
    if not 1 <= maxval <= 255:
        raise ImageParseError(f"unsupported maxval {maxval} (8-bit only)", path, max_offset)

    count = width * height
    if magic == b"P5":
        start = tok.pos + 1  # single whitespace byte after maxval
        raw = data[start:start + count]
        if len(raw) != count:
            raise ImageParseError(f"expected {count} pixel bytes, found {len(raw)}", path, start + len(raw))
        pixels = np.frombuffer(raw, dtype=np.uint8).astype(float)
        offsets = start + np.arange(count)
    else:
        values: List[int] = []
        starts: List[int] = []
        for _ in range(count):
            token, token_offset = tok.next_token("pixel value")
            try:
                values.append(int(token))
            except ValueError:
                raise ImageParseError(f"invalid pixel value {token!r}", path, token_offset) from None
            starts.append(token_offset)
        pixels = np.asarray(values, dtype=float)
        offsets = np.asarray(starts)
    over = np.nonzero(pixels > maxval)[0]
    if over.size:
        k = int(over[0])
        raise ImageParseError(f"pixel value {int(pixels[k])} exceeds maxval {maxval}", path, int(offsets[k]))

    # raster row index is the x coordinate
    return pixels.reshape(height, width) / maxval


def _parse_csv(data: bytes, path: str) -> np.ndarray:
    rows: List[List[float]] = []
    offset = 0
    width = None
    for line in data.splitlines(keepends=True):
        stripped = line.strip()
        if stripped:
            cells = stripped.split(b",")
            try:
                row = [float(c) for c in cells]
            except ValueError:
                raise ImageParseError(f"non-numeric value in row {len(rows) + 1}", path, offset) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ImageParseError(
                    f"row {len(rows) + 1} has {len(row)} values, expected {width}", path, offset
                )
            rows.append(row)
        offset += len(line)
    if len(rows) < 2 or (width or 0) < 2:
        raise ImageParseError("CSV image needs at least 2 rows and 2 columns", path, offset)
    return np.asarray(rows, dtype=float)


def load_image(path: PathLike, fmt: Optional[ImageFormat] = None) -> ImageGrid:
    """Read an image file into an ImageGrid; format defaults to the file suffix."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input image not found: {path}")
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "pgm"

    data = path.read_bytes()
    if fmt == "csv":
        values = _parse_csv(data, str(path))
    elif fmt in ("pgm", "pgm_ascii", "pgm_binary"):
        values = _parse_pgm(data, str(path), None if fmt == "pgm" else fmt)
    else:
        raise ImageParseError(f"unsupported format {fmt!r}", str(path), None)

    try:
        grid = ImageGrid(values=values, source=str(path))
    except ValueError as e:
        raise ImageParseError(str(e), str(path), None) from e
    if not grid.is_square:
        logger.warning(
            f"Non-square image {grid.n1}x{grid.n2} from {path}; "
            f"per-axis coordinates with effective n={grid.n:.1f}"
        )
    logger.info(f"Loaded {fmt} image {path} ({grid.n1}x{grid.n2})")
    return grid


def save_csv(grid: ImageGrid, path: PathLike) -> Path:
    """Write the grid as a headerless CSV with round-trip precision."""
    path = Path(path)
    np.savetxt(path, grid.values, delimiter=",", fmt="%.17g")
    return path


def save_pgm(grid: ImageGrid, path: PathLike, binary: bool = True) -> Path:
    """Write an 8-bit PGM, clipping values to [0, 1] first."""
    path = Path(path)
    raster = np.clip(np.rint(np.clip(grid.values, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    height, width = raster.shape
    header = f"{'P5' if binary else 'P2'}\n{width} {height}\n255\n".encode()
    with open(path, "wb") as f:
        f.write(header)
        if binary:
            f.write(raster.tobytes())
        else:
            for row in raster:
                f.write((" ".join(str(int(v)) for v in row) + "\n").encode())
    return path
