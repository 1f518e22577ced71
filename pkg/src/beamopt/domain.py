"""Beam grids, beam pairs, power maps and dataset IO.

The canonical on-disk layout is a directory holding ``manifest.json`` plus
one CSV per location with header ``tx_angle_deg,rx_angle_deg,power_db``.
Raw third-party layouts are read through a :class:`FormatSpec`.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

MANIFEST_NAME = "manifest.json"
CSV_HEADER = ("tx_angle_deg", "rx_angle_deg", "power_db")
_ANGLE_TOL = 1e-6


class DatasetError(ValueError):
    """Raised when a dataset is incomplete, duplicated or unparseable."""


class BeamPair(NamedTuple):
    tx_index: int
    rx_index: int


class ProbePhase(str, enum.Enum):
    INIT = "init"
    BO = "bo"
    REFINE = "refine"


@dataclass(frozen=True)
class ProbeRecord:
    step: int
    pair: BeamPair
    power_db: float
    phase: ProbePhase


def _uniform_axis(angles: Sequence[float], name: str) -> tuple[float, ...]:
    a = tuple(float(x) for x in angles)
    if not a:
        raise ValueError(f"{name} must contain at least one angle")
    if any(not math.isfinite(x) for x in a):
        raise ValueError(f"{name} contains non-finite angles")
    if len(a) > 1:
        steps = np.diff(a)
        if np.any(steps <= 0):
            raise ValueError(f"{name} must be strictly increasing")
        if np.max(np.abs(steps - steps[0])) > 1e-9:
            raise ValueError(f"{name} must be uniformly spaced")
    return a


@dataclass(frozen=True)
class BeamGrid:
    """Discrete AoD/AoA lattice.

    Cells are addressed row-major: flat index ``tx_index * n_rx + rx_index``.
    """

    tx_angles_deg: tuple[float, ...]
    rx_angles_deg: tuple[float, ...]
    tx_wraps: bool = False
    rx_wraps: bool = True

    def __post_init__(self):
        object.__setattr__(self, "tx_angles_deg", _uniform_axis(self.tx_angles_deg, "tx_angles_deg"))
        object.__setattr__(self, "rx_angles_deg", _uniform_axis(self.rx_angles_deg, "rx_angles_deg"))

    @classmethod
    def default(cls) -> "BeamGrid":
        """19 TX beams over -45..45 deg and 36 RX directions over -180..170 deg."""
        return cls(
            tx_angles_deg=tuple(float(a) for a in range(-45, 46, 5)),
            rx_angles_deg=tuple(float(a) for a in range(-180, 180, 10)),
            tx_wraps=False,
            rx_wraps=True,
        )

    @classmethod
    def from_ranges(cls, tx_start, tx_step, n_tx, rx_start, rx_step, n_rx, tx_wraps=False, rx_wraps=True):
        return cls(
            tuple(tx_start + i * tx_step for i in range(n_tx)),
            tuple(rx_start + j * rx_step for j in range(n_rx)),
            tx_wraps,
            rx_wraps,
        )

    @property
    def n_tx(self) -> int:
        return len(self.tx_angles_deg)

    @property
    def n_rx(self) -> int:
        return len(self.rx_angles_deg)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_tx, self.n_rx)

    @property
    def size(self) -> int:
        return self.n_tx * self.n_rx

    @property
    def tx_step_deg(self) -> float:
        return self.tx_angles_deg[1] - self.tx_angles_deg[0] if self.n_tx > 1 else 0.0

    @property
    def rx_step_deg(self) -> float:
        return self.rx_angles_deg[1] - self.rx_angles_deg[0] if self.n_rx > 1 else 0.0

    def pairs(self) -> list[BeamPair]:
        """All cells in lexicographic (tx, rx) order."""
        return [BeamPair(i, j) for i in range(self.n_tx) for j in range(self.n_rx)]

    def flat(self, pair: BeamPair) -> int:
        self.check(pair)
        return pair[0] * self.n_rx + pair[1]

    def unflat(self, k: int) -> BeamPair:
        if not 0 <= k < self.size:
            raise IndexError(f"flat index {k} outside grid of {self.size} cells")
        return BeamPair(int(k // self.n_rx), int(k % self.n_rx))

    def check(self, pair: BeamPair) -> None:
        i, j = pair
        if not (0 <= i < self.n_tx and 0 <= j < self.n_rx):
            raise IndexError(f"beam pair {tuple(pair)} outside grid {self.shape}")

    def to_dict(self) -> dict:
        return {
            "tx_angles_deg": list(self.tx_angles_deg),
            "rx_angles_deg": list(self.rx_angles_deg),
            "tx_wraps": self.tx_wraps,
            "rx_wraps": self.rx_wraps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BeamGrid":
        return cls(
            tuple(d["tx_angles_deg"]),
            tuple(d["rx_angles_deg"]),
            bool(d.get("tx_wraps", False)),
            bool(d.get("rx_wraps", True)),
        )


def wrap_deg(a: float) -> float:
    """Map an angle to [-180, 180)."""
    return (a + 180.0) % 360.0 - 180.0


def angle_of(grid: BeamGrid, pair: BeamPair) -> tuple[float, float]:
    grid.check(pair)
    return grid.tx_angles_deg[pair[0]], grid.rx_angles_deg[pair[1]]


def _axis_index(angles: tuple[float, ...], a: float, wraps: bool) -> int | None:
    arr = np.asarray(angles)
    if wraps:
        d = np.abs([wrap_deg(a - x) for x in arr])
    else:
        d = np.abs(arr - a)
    k = int(np.argmin(d))
    return k if d[k] <= _ANGLE_TOL else None


def index_of(grid: BeamGrid, tx_deg: float, rx_deg: float) -> BeamPair:
    """Inverse of :func:`angle_of`; wrapped axes accept any equivalent angle."""
    i = _axis_index(grid.tx_angles_deg, tx_deg, grid.tx_wraps)
    j = _axis_index(grid.rx_angles_deg, rx_deg, grid.rx_wraps)
    if i is None or j is None:
        raise IndexError(f"angles ({tx_deg}, {rx_deg}) are not on the grid")
    return BeamPair(i, j)


@dataclass(frozen=True, eq=False)
class PowerMap:
    """One location's full relative-power field in dB, shape ``grid.shape``."""

    location_id: str
    grid: BeamGrid
    power_db: np.ndarray

    def __post_init__(self):
        p = np.array(self.power_db, dtype=float)
        if p.shape != self.grid.shape:
            raise ValueError(f"power_db shape {p.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(p)):
            i, j = np.argwhere(~np.isfinite(p))[0]
            raise ValueError(f"{self.location_id}: non-finite power at cell ({i}, {j})")
        p.setflags(write=False)
        object.__setattr__(self, "power_db", p)

    def __eq__(self, other):
        if not isinstance(other, PowerMap):
            return NotImplemented
        return (
            self.location_id == other.location_id
            and self.grid == other.grid
            and np.array_equal(self.power_db, other.power_db)
        )

    def __getitem__(self, pair: BeamPair) -> float:
        self.grid.check(pair)
        return float(self.power_db[pair[0], pair[1]])


def true_optimum(pmap: PowerMap) -> tuple[BeamPair, float]:
    """Exhaustive-search optimum; np.argmax already returns the first
    maximum in row-major order, which is the lexicographic tie-break."""
    k = int(np.argmax(pmap.power_db))
    pair = pmap.grid.unflat(k)
    return pair, float(pmap.power_db[pair])


# ---------------------------------------------------------------------------
# Dataset IO
# ---------------------------------------------------------------------------


@dataclass
class FormatSpec:
    """Describes how to read a raw beam-sweep layout.

    Each matched file becomes one or more locations. If ``location_column``
    is set, rows are grouped by that column; otherwise the location id is
    taken from the file name via ``location_pattern`` (first group) or the
    file stem.
    """

    tx_column: str = "tx_angle_deg"
    rx_column: str = "rx_angle_deg"
    power_column: str = "power_db"
    location_column: str | None = None
    file_glob: str = "*.csv"
    location_pattern: str | None = None
    delimiter: str = ","
    power_unit: str = "db"  # "db" or "linear"
    tx_scale: float = 1.0
    rx_scale: float = 1.0
    grid: BeamGrid = field(default_factory=BeamGrid.default)

    @classmethod
    def from_json(cls, path: str | Path) -> "FormatSpec":
        d = json.loads(Path(path).read_text())
        grid = BeamGrid.from_dict(d.pop("grid")) if "grid" in d else BeamGrid.default()
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown format_spec keys: {sorted(unknown)}")
        return cls(grid=grid, **d)


def _assemble(location: str, grid: BeamGrid, rows: Iterable[tuple[int, float, float, float]]) -> PowerMap:
    """Build a PowerMap from (line, tx_deg, rx_deg, power_db) rows, checking
    that every cell appears exactly once."""
    p = np.full(grid.shape, np.nan)
    seen = np.zeros(grid.shape, dtype=bool)
    for line, tx, rx, val in rows:
        try:
            i, j = index_of(grid, tx, rx)
        except IndexError:
            raise DatasetError(f"{location}: line {line}: angles ({tx}, {rx}) not on grid") from None
        if seen[i, j]:
            raise DatasetError(f"{location}: duplicate cell (tx={tx}, rx={rx}) at line {line}")
        if not math.isfinite(val):
            raise DatasetError(f"{location}: non-finite power at cell (tx={tx}, rx={rx}), line {line}")
        seen[i, j] = True
        p[i, j] = val
    if not seen.all():
        missing = [angle_of(grid, BeamPair(int(i), int(j))) for i, j in np.argwhere(~seen)]
        shown = ", ".join(f"(tx={a}, rx={b})" for a, b in missing[:10])
        more = f" and {len(missing) - 10} more" if len(missing) > 10 else ""
        raise DatasetError(f"{location}: {len(missing)} missing cell(s): {shown}{more}")
    return PowerMap(location, grid, p)


def _parse_float(text: str, location: str, line: int, col: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise DatasetError(f"{location}: line {line}: cannot parse {col}={text!r}") from None


def _read_canonical_csv(path: Path, location: str, grid: BeamGrid) -> PowerMap:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DatasetError(f"{location}: bad header in {path.name}: {header}")
        rows = []
        for n, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DatasetError(f"{location}: line {n}: expected 3 fields, got {len(row)}")
            tx, rx, val = (_parse_float(row[k], location, n, CSV_HEADER[k]) for k in range(3))
            rows.append((n, tx, rx, val))
    return _assemble(location, grid, rows)


def _read_raw(path: Path, spec: FormatSpec) -> dict[str, list]:
    groups: dict[str, list] = {}
    default_loc = path.stem
    if spec.location_pattern:
        m = re.search(spec.location_pattern, path.name)
        if m:
            default_loc = m.group(1) if m.groups() else m.group(0)
    with path.open(newline="") as fh:
        reader = csv.DictReader((ln for ln in fh if not ln.startswith("#")), delimiter=spec.delimiter)
        cols = [spec.tx_column, spec.rx_column, spec.power_column]
        if spec.location_column:
            cols.append(spec.location_column)
        missing = [c for c in cols if c not in (reader.fieldnames or [])]
        if missing:
            raise DatasetError(f"{path.name}: missing column(s) {missing}")
        for n, row in enumerate(reader, start=2):
            loc = row[spec.location_column].strip() if spec.location_column else default_loc
            tx = _parse_float(row[spec.tx_column], loc, n, spec.tx_column) * spec.tx_scale
            rx = _parse_float(row[spec.rx_column], loc, n, spec.rx_column) * spec.rx_scale
            val = _parse_float(row[spec.power_column], loc, n, spec.power_column)
            if spec.power_unit == "linear":
                val = 10.0 * math.log10(val) if val > 0 else -math.inf
            elif spec.power_unit != "db":
                raise ValueError(f"unknown power_unit {spec.power_unit!r}")
            groups.setdefault(loc, []).append((n, tx, rx, val))
    return groups


def load_dataset(path: str | Path, format_spec: FormatSpec | None = None) -> list[PowerMap]:
    """Load power maps.

    Without ``format_spec`` the path must be a canonical dataset directory
    (containing ``manifest.json``) or a single canonical CSV file, read on
    the default grid with the file stem as location id. With a spec, every
    file matching
    ``format_spec.file_glob`` under ``path`` (or ``path`` itself if it is a
    file) is parsed as a raw layout.
    """
    path = Path(path)
    if format_spec is None and path.is_file():
        return [_read_canonical_csv(path, path.stem, BeamGrid.default())]
    if format_spec is None:
        manifest_path = path / MANIFEST_NAME
        if not manifest_path.is_file():
            raise DatasetError(f"no {MANIFEST_NAME} in {path}")
        try:
            manifest = json.loads(manifest_path.read_text())
            grid = BeamGrid.from_dict(manifest["grid"])
            locations = list(manifest["locations"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"invalid manifest {manifest_path}: {exc}") from None
        maps = []
        for loc in locations:
            f = path / f"{loc}.csv"
            if not f.is_file():
                raise DatasetError(f"{loc}: data file {f.name} not found")
            maps.append(_read_canonical_csv(f, loc, grid))
        return maps

    files = [path] if path.is_file() else sorted(path.glob(format_spec.file_glob))
    if not files:
        raise DatasetError(f"no files matching {format_spec.file_glob!r} in {path}")
    groups: dict[str, list] = {}
    for f in files:
        for loc, rows in _read_raw(f, format_spec).items():
            groups.setdefault(loc, []).extend(rows)
    return [_assemble(loc, format_spec.grid, groups[loc]) for loc in sorted(groups)]


def save_dataset(maps: Sequence[PowerMap], path: str | Path) -> None:
    """Write maps in the canonical layout; powers with 6 decimals."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    grids = {m.grid for m in maps}
    if len(grids) > 1:
        raise ValueError("all maps in a dataset must share one grid")
    ids = [m.location_id for m in maps]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate location ids")
    grid = grids.pop() if grids else BeamGrid.default()
    for m in maps:
        with (path / f"{m.location_id}.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for i, tx in enumerate(grid.tx_angles_deg):
                for j, rx in enumerate(grid.rx_angles_deg):
                    w.writerow((repr(tx), repr(rx), f"{m.power_db[i, j]:.6f}"))
    manifest = {"grid": grid.to_dict(), "locations": ids}
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")


def rounded(pmap: PowerMap, decimals: int = 6) -> PowerMap:
    """The map as it reads back after a save/load cycle."""
    vals = np.array([[float(f"{v:.{decimals}f}") for v in row] for row in pmap.power_db])
    return PowerMap(pmap.location_id, pmap.grid, vals)
