"""Target figure: bitmap loading, topology checks and robot capacity.

Cells are indexed ``(col, row)``; cell ``(c, r)`` covers the half-open box
``[ox + c*s, ox + (c+1)*s) x [oy + r*s, oy + (r+1)*s)`` where ``(ox, oy)`` is
the shape origin and ``s`` the cell size. The first text row of a file is
row 0, i.e. the lowest row in world coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EmptyShape, MalformedInput

SQRT3_2 = math.sqrt(3.0) / 2.0

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True, eq=False)
class GridShape:
    width: int
    height: int
    cell_size: float
    occupied: np.ndarray  # bool, shape (height, width), indexed [row, col]
    origin: tuple[float, float] = (0.0, 0.0)
    _sites: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        occ = np.asarray(self.occupied, dtype=bool)
        if occ.shape != (self.height, self.width):
            raise MalformedInput(f"occupancy shape {occ.shape} != ({self.height}, {self.width})")
        if self.width < 1 or self.height < 1 or not occ.any():
            raise EmptyShape("shape has no occupied cells")
        if not self.cell_size > 0:
            raise MalformedInput("cell_size must be positive")
        occ = occ.copy()
        occ.flags.writeable = False
        object.__setattr__(self, "occupied", occ)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def cells(self) -> list[tuple[int, int]]:
        """Occupied cells as ``(col, row)`` pairs in row-major order."""
        rows, cols = np.nonzero(self.occupied)
        return [(int(c), int(r)) for r, c in zip(rows, cols)]

    @property
    def extent(self) -> tuple[float, float, float, float]:
        ox, oy = self.origin
        return ox, oy, ox + self.width * self.cell_size, oy + self.height * self.cell_size

    def translated(self, origin) -> GridShape:
        return GridShape(self.width, self.height, self.cell_size, self.occupied, tuple(origin))

    def to_ascii(self) -> str:
        return "\n".join("".join("#" if v else "." for v in row) for row in self.occupied) + "\n"


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("#", 1)[0] for line in text.splitlines())


def _parse_p1(text: str) -> np.ndarray:
    body = _strip_comments(text).strip()
    if not body.startswith("P1"):
        raise MalformedInput("P1 header missing")
    rest = body[2:]
    if rest and not rest[0].isspace():
        raise MalformedInput(f"bad magic number {body[:3]!r}")
    tokens = rest.split()
    if len(tokens) < 2:
        raise MalformedInput("P1 dimensions missing")
    try:
        width, height = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise MalformedInput(f"bad P1 dimensions {tokens[:2]!r}") from None
    if width < 0 or height < 0:
        raise MalformedInput("negative P1 dimensions")
    pixels = "".join(tokens[2:])
    bad = set(pixels) - {"0", "1"}
    if bad:
        raise MalformedInput(f"non-binary cell values {sorted(bad)!r}")
    if len(pixels) != width * height:
        raise MalformedInput(f"expected {width * height} cells, found {len(pixels)}")
    if width * height == 0:
        raise EmptyShape("0x0 bitmap")
    return np.array([c == "1" for c in pixels], dtype=bool).reshape(height, width)


def _parse_ascii(text: str) -> np.ndarray:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise EmptyShape("empty grid")
    rows = [line.rstrip("\r") for line in lines]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise MalformedInput(f"ragged rows, widths {sorted(widths)}")
    bad = set("".join(rows)) - {"#", "."}
    if bad:
        raise MalformedInput(f"non-binary cell characters {sorted(bad)!r}")
    return np.array([[c == "#" for c in r] for r in rows], dtype=bool)


def load_shape(text: str, cell_size: float = 1.0, origin=(0.0, 0.0)) -> GridShape:
    """Parse a P1 portable bitmap or a '#'/'.' ASCII grid.

    The format is picked from the first non-whitespace character: ``P`` means
    P1, anything else is treated as an ASCII grid.
    """
    stripped = text.lstrip()
    if stripped.startswith("P"):
        occ = _parse_p1(stripped)
    else:
        occ = _parse_ascii(text)
    if not occ.any():
        raise EmptyShape("no occupied cells")
    h, w = occ.shape
    return GridShape(w, h, float(cell_size), occ, tuple(origin))


def load_shape_file(path, cell_size: float = 1.0, origin=(0.0, 0.0)) -> GridShape:
    with open(path) as fh:
        return load_shape(fh.read(), cell_size, origin)


def count_holes(shape: GridShape) -> int:
    """Number of 8-connected empty regions that do not touch the grid border."""
    empty = ~shape.occupied
    labels, n = ndimage.label(empty, structure=_EIGHT)
    if n == 0:
        return 0
    border = np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
    touching = set(np.unique(border[border > 0]).tolist())
    return n - len(touching)


def is_connected(shape: GridShape) -> bool:
    _, n = ndimage.label(shape.occupied, structure=_FOUR)
    return n == 1


def contains(shape: GridShape, p) -> bool:
    ox, oy = shape.origin
    col = math.floor((p[0] - ox) / shape.cell_size)
    row = math.floor((p[1] - oy) / shape.cell_size)
    if not (0 <= col < shape.width and 0 <= row < shape.height):
        return False
    return bool(shape.occupied[row, col])


def _disc_inside(shape: GridShape, cx: float, cy: float, r: float) -> bool:
    ox, oy = shape.origin
    s = shape.cell_size
    eps = 1e-9 * max(r, s)
    x0, y0, x1, y1 = shape.extent
    if cx - r < x0 - eps or cx + r > x1 + eps or cy - r < y0 - eps or cy + r > y1 + eps:
        return False
    c_lo = max(0, math.floor((cx - r - ox) / s))
    c_hi = min(shape.width - 1, math.floor((cx + r - ox) / s))
    r_lo = max(0, math.floor((cy - r - oy) / s))
    r_hi = min(shape.height - 1, math.floor((cy + r - oy) / s))
    for row in range(r_lo, r_hi + 1):
        for col in range(c_lo, c_hi + 1):
            if shape.occupied[row, col]:
                continue
            # distance from the disc center to the empty cell box
            bx0, by0 = ox + col * s, oy + row * s
            dx = max(bx0 - cx, 0.0, cx - (bx0 + s))
            dy = max(by0 - cy, 0.0, cy - (by0 + s))
            if math.hypot(dx, dy) < r - eps:
                return False
    return True


def hex_sites(shape: GridShape, robot_diameter: float) -> np.ndarray:
    """Centers of the hex-lattice sites counted by :func:`capacity`.

    The lattice has pitch ``robot_diameter``, passes through the shape origin
    and has rows parallel to the x axis; odd rows are shifted by half a pitch.
    Sites are returned sorted by row then x.
    """
    if robot_diameter <= 0:
        raise ValueError("robot_diameter must be positive")
    key = float(robot_diameter)
    cached = shape._sites.get(key)
    if cached is not None:
        return cached
    p = robot_diameter
    r = p / 2.0
    dy = p * SQRT3_2
    ox, oy = shape.origin
    x0, y0, x1, y1 = shape.extent
    sites = []
    for j in range(0, int(math.floor((y1 - oy) / dy)) + 2):
        y = oy + j * dy
        shift = 0.5 * (j % 2)
        for i in range(-1, int(math.floor((x1 - ox) / p)) + 2):
            x = ox + (i + shift) * p
            if contains(shape, (x, y)) and _disc_inside(shape, x, y, r):
                sites.append((x, y))
    out = np.array(sites, dtype=float).reshape(-1, 2)
    out.flags.writeable = False
    shape._sites[key] = out
    return out


def capacity(shape: GridShape, robot_diameter: float) -> int:
    return len(hex_sites(shape, robot_diameter))
