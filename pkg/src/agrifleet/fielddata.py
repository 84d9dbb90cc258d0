"""Server-side data pipeline: geotagged record ingest, pluggable
classification, vegetation index math and the per-cell heatmap the farm
manager sees.

The bundled classifiers are an oracle (returns scenario ground truth) and a
seeded noisy oracle; real models plug in behind the same two-method surface.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .geo import GeoPoint, LocalPoint, project

_LABELS_BY_NAME: dict[str, "ClassLabel"] = {}


class FieldDataError(ValueError):
    pass


class DegenerateSpectrum(FieldDataError):
    pass


class ClassifierUnavailable(FieldDataError):
    pass


class ClassLabel(IntEnum):
    SOIL = 0
    CROP = 1
    GRASS = 2
    BROADLEAF_WEED = 3

    @property
    def label(self) -> str:
        return _LABEL_NAMES[self]

    @classmethod
    def from_name(cls, name: str) -> "ClassLabel":
        try:
            return _LABELS_BY_NAME[name.lower()]
        except KeyError as exc:
            raise FieldDataError(f"unknown class label: {name!r}") from exc


_LABEL_NAMES = {
    ClassLabel.SOIL: "soil",
    ClassLabel.CROP: "crop",
    ClassLabel.GRASS: "grass",
    ClassLabel.BROADLEAF_WEED: "broadleaf_weed",
}
_LABELS_BY_NAME.update({name: label for label, name in _LABEL_NAMES.items()})

# Synthetic (red, nir) reflectance anchors per class; jitter is added at
# capture time. Chosen so NDVI separates the classes cleanly.
CLASS_SPECTRA: dict[ClassLabel, tuple[float, float]] = {
    ClassLabel.SOIL: (0.30, 0.35),
    ClassLabel.CROP: (0.08, 0.55),
    ClassLabel.GRASS: (0.12, 0.45),
    ClassLabel.BROADLEAF_WEED: (0.18, 0.40),
}


def sample_spectrum(
    label: ClassLabel, rng: random.Random, jitter: float = 0.02
) -> tuple[float, float]:
    red, nir = CLASS_SPECTRA[label]
    if jitter > 0:
        red += rng.uniform(-jitter, jitter)
        nir += rng.uniform(-jitter, jitter)
    return min(1.0, max(0.0, red)), min(1.0, max(0.0, nir))


@dataclass(frozen=True)
class ImageRecord:
    record_id: str
    uav_id: int
    position: GeoPoint
    tick: int
    red: float
    nir: float
    true_class: ClassLabel

    def __post_init__(self) -> None:
        if not 0.0 <= self.red <= 1.0 or not 0.0 <= self.nir <= 1.0:
            raise FieldDataError("reflectance values must be in [0, 1]")

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "uav_id": self.uav_id,
            "position": {"lat": self.position.lat, "lon": self.position.lon},
            "timestamp": self.tick,
            "payload": {"red": self.red, "nir": self.nir, "true_class": self.true_class.label},
        }

    @classmethod
    def from_json(cls, d: dict) -> "ImageRecord":
        return cls(
            record_id=d["record_id"],
            uav_id=d["uav_id"],
            position=GeoPoint(d["position"]["lat"], d["position"]["lon"]),
            tick=d["timestamp"],
            red=d["payload"]["red"],
            nir=d["payload"]["nir"],
            true_class=ClassLabel.from_name(d["payload"]["true_class"]),
        )


def ndvi(record: ImageRecord) -> float:
    """(NIR - Red) / (NIR + Red), in [-1, 1]."""
    total = record.nir + record.red
    if total <= 0.0:
        raise DegenerateSpectrum("nir + red must be positive")
    return (record.nir - record.red) / total


class Classifier(Protocol):
    name: str

    def classify(self, record: ImageRecord) -> tuple[ClassLabel, float]: ...


class OracleClassifier:
    """Returns the scenario ground-truth label with full confidence."""

    name = "oracle"

    def classify(self, record: ImageRecord) -> tuple[ClassLabel, float]:
        return record.true_class, 1.0


class NoisyOracleClassifier:
    """Oracle that flips each label to a uniformly chosen wrong class with
    seeded probability epsilon; accuracy converges to 1 - epsilon."""

    name = "noisy_oracle"

    def __init__(self, epsilon: float, seed: int = 0):
        if not 0.0 <= epsilon <= 1.0:
            raise FieldDataError("epsilon must be in [0, 1]")
        self.epsilon = epsilon
        self.rng = random.Random(seed)

    def classify(self, record: ImageRecord) -> tuple[ClassLabel, float]:
        truth = record.true_class
        if self.epsilon > 0.0 and self.rng.random() < self.epsilon:
            wrong = [label for label in ClassLabel if label is not truth]
            return self.rng.choice(wrong), 1.0 - self.epsilon
        return truth, 1.0 - self.epsilon


def make_classifier(name: str, epsilon: float = 0.0, seed: int = 0) -> Classifier:
    if name == "oracle":
        return OracleClassifier()
    if name == "noisy_oracle":
        return NoisyOracleClassifier(epsilon, seed)
    raise ClassifierUnavailable(f"no classifier named {name!r}")


class RecordStore:
    """Append-only record log with an in-memory id index.

    Ingest is idempotent per record id and per manifest; re-playing a
    manifest is logged and ignored.
    """

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path is not None else None
        self._records: list[ImageRecord] = []
        self._ids: set[str] = set()
        self._manifests: set[str] = set()
        self.duplicate_manifests: list[str] = []
        if self.path is not None and self.path.exists():
            with self.path.open() as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._remember(ImageRecord.from_json(json.loads(line)))

    def _remember(self, record: ImageRecord) -> bool:
        if record.record_id in self._ids:
            return False
        self._ids.add(record.record_id)
        self._records.append(record)
        return True

    def ingest(self, manifest_id: str, records: Sequence[dict | ImageRecord]) -> int:
        """Persist new records from a verified offload; returns how many were
        stored (duplicates by id are skipped)."""
        if manifest_id in self._manifests:
            self.duplicate_manifests.append(manifest_id)
            return 0
        self._manifests.add(manifest_id)
        stored = 0
        new_lines = []
        for item in records:
            record = item if isinstance(item, ImageRecord) else ImageRecord.from_json(item)
            if self._remember(record):
                stored += 1
                new_lines.append(json.dumps(record.to_json(), sort_keys=True))
        if self.path is not None and new_lines:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as fh:
                for line in new_lines:
                    fh.write(line + "\n")
        return stored

    @property
    def records(self) -> list[ImageRecord]:
        return list(self._records)

    def __len__(self) -> int:
        return len(self._records)


@dataclass(frozen=True)
class GridSpec:
    origin: GeoPoint  # geographic anchor of cell (0, 0)'s southwest corner
    cell_size_m: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.cell_size_m <= 0 or self.width < 1 or self.height < 1:
            raise FieldDataError("grid must have positive cell size and dimensions")


@dataclass
class HeatmapCell:
    counts: dict[ClassLabel, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def majority(self) -> Optional[tuple[ClassLabel, float]]:
        if not self.counts:
            return None
        # ties resolve to the lower enum index
        label = min(self.counts, key=lambda lbl: (-self.counts[lbl], int(lbl)))
        return label, self.counts[label] / self.total


@dataclass
class HeatmapGrid:
    spec: GridSpec
    cells: list[list[HeatmapCell]]  # [row][col]
    out_of_grid: int = 0

    @property
    def binned(self) -> int:
        return sum(cell.total for row in self.cells for cell in row)

    def to_json(self) -> dict:
        rows = []
        for row in self.cells:
            out_row = []
            for cell in row:
                top = cell.majority()
                if top is None:
                    out_row.append([None, 0.0])
                else:
                    out_row.append([top[0].label, top[1]])
            rows.append(out_row)
        return {
            "origin": {"lat": self.spec.origin.lat, "lon": self.spec.origin.lon},
            "cell_size_m": self.spec.cell_size_m,
            "width": self.spec.width,
            "height": self.spec.height,
            "rows": rows,
            "out_of_grid": self.out_of_grid,
        }


def build_heatmap(
    records: Sequence[ImageRecord], spec: GridSpec, classifier: Classifier
) -> HeatmapGrid:
    """Bin records by position and reduce each cell to its majority label.

    Cells without captures stay NoData; records outside the grid are counted,
    never dropped silently.
    """
    grid = HeatmapGrid(
        spec=spec,
        cells=[[HeatmapCell() for _ in range(spec.width)] for _ in range(spec.height)],
    )
    for record in records:
        local = project(spec.origin, record.position)
        col = math.floor(local.x / spec.cell_size_m)
        row = math.floor(local.y / spec.cell_size_m)
        if not (0 <= col < spec.width and 0 <= row < spec.height):
            grid.out_of_grid += 1
            continue
        label, _conf = classifier.classify(record)
        cell = grid.cells[row][col]
        cell.counts[label] = cell.counts.get(label, 0) + 1
    return grid


def cell_center(spec: GridSpec, row: int, col: int) -> LocalPoint:
    return LocalPoint((col + 0.5) * spec.cell_size_m, (row + 0.5) * spec.cell_size_m)
