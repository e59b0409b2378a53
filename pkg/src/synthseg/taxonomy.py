"""Label taxonomies, remap tables between them, and class histograms.

Built-ins: ``carla12``, ``kitti19`` (Cityscapes-style ids), ``semantic3d8`` and
the ``common4`` evaluation target. Id 0 is "unlabelled" everywhere. Any source
class without an explicit mapping sinks to unlabelled.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from synthseg.pcdcore import PointCloud, as_rgb

UNLABELLED = 0


class TaxonomyError(ValueError):
    pass


class MissingLabelsError(TaxonomyError):
    pass


class TaxonomyMismatchError(TaxonomyError):
    pass


def _norm(name: str) -> str:
    return name.lower().replace("-", "").replace("_", "").replace(" ", "")


@dataclass(frozen=True)
class ClassInfo:
    id: int
    name: str
    color: tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class Taxonomy:
    name: str
    classes: tuple[ClassInfo, ...]

    def __post_init__(self):
        if not self.classes:
            raise TaxonomyError("taxonomy needs at least the unlabelled class")
        ids = [c.id for c in self.classes]
        if ids != list(range(len(ids))):
            raise TaxonomyError(f"{self.name}: class ids must be contiguous from 0, got {ids}")
        if _norm(self.classes[0].name) not in ("unlabelled", "unlabeled"):
            raise TaxonomyError(f"{self.name}: id 0 must be 'unlabelled'")
        colors = [c.color for c in self.classes]
        if len(set(colors)) != len(colors):
            raise TaxonomyError(f"{self.name}: palette colors must be unique")
        keys = [_norm(c.name) for c in self.classes]
        if len(set(keys)) != len(keys):
            raise TaxonomyError(f"{self.name}: class names must be unique")

    @classmethod
    def from_entries(cls, name: str, entries: Sequence[tuple[str, Sequence[int]]]) -> "Taxonomy":
        return cls(name, tuple(ClassInfo(i, n, as_rgb(c)) for i, (n, c) in enumerate(entries)))

    def __len__(self) -> int:
        return len(self.classes)

    def __eq__(self, other):
        return isinstance(other, Taxonomy) and (self.name, self.classes) == (other.name, other.classes)

    def __hash__(self):
        return hash((self.name, self.classes))

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.classes]

    def id_of(self, name: str) -> int:
        """Case- and punctuation-insensitive lookup ("Side-walk" == "sidewalk")."""
        key = _norm(name)
        for c in self.classes:
            if _norm(c.name) == key:
                return c.id
        raise TaxonomyError(f"no class named '{name}' in {self.name}")

    def palette(self) -> np.ndarray:
        return np.array([c.color for c in self.classes], dtype=np.uint8)

    def to_text(self) -> str:
        return "".join(f"{c.id}\t{c.name}\t{c.color[0]},{c.color[1]},{c.color[2]}\n"
                       for c in self.classes)

    @classmethod
    def from_text(cls, name: str, text: str) -> "Taxonomy":
        classes = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise TaxonomyError(f"line {lineno}: expected 'id<TAB>name<TAB>r,g,b'")
            try:
                cid = int(parts[0])
                rgb = as_rgb([int(v) for v in parts[2].split(",")])
            except ValueError as e:
                raise TaxonomyError(f"line {lineno}: {e}") from None
            classes.append(ClassInfo(cid, parts[1], rgb))
        return cls(name, tuple(classes))


@dataclass(frozen=True, eq=False)
class RemapTable:
    source: Taxonomy
    target: Taxonomy
    mapping: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.uint16).reshape(-1)
        if m.shape != (len(self.source),):
            raise TaxonomyError("mapping must cover every source id")
        if m[UNLABELLED] != UNLABELLED:
            raise TaxonomyError("unlabelled must map to unlabelled")
        if m.size and int(m.max()) >= len(self.target):
            raise TaxonomyError("mapping targets an id outside the target taxonomy")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mapping", m)

    @classmethod
    def from_pairs(cls, source: Taxonomy, target: Taxonomy,
                   pairs: Mapping[str, str]) -> "RemapTable":
        """Build a table from source-name -> target-name pairs; the rest map to 0."""
        m = np.zeros(len(source), dtype=np.uint16)
        for s, t in pairs.items():
            m[source.id_of(s)] = target.id_of(t)
        return cls(source, target, m)

    @classmethod
    def identity(cls, taxonomy: Taxonomy) -> "RemapTable":
        return cls(taxonomy, taxonomy, np.arange(len(taxonomy), dtype=np.uint16))

    def __call__(self, labels: np.ndarray) -> np.ndarray:
        return self.mapping[np.asarray(labels, dtype=np.intp)]

    def to_text(self) -> str:
        return "".join(f"{s}\t{int(t)}\n" for s, t in enumerate(self.mapping))

    @classmethod
    def from_text(cls, source: Taxonomy, target: Taxonomy, text: str) -> "RemapTable":
        m = np.zeros(len(source), dtype=np.int64)
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TaxonomyError(f"line {lineno}: expected 'source_id<TAB>target_id'")
            s, t = int(parts[0]), int(parts[1])
            if not 0 <= s < len(source) or not 0 <= t < len(target):
                raise TaxonomyError(f"line {lineno}: id out of range")
            m[s] = t
        return cls(source, target, m)


@dataclass(frozen=True, eq=False)
class ClassHistogram:
    taxonomy: Taxonomy
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def format_table(self) -> str:
        width = max(len(n) for n in self.taxonomy.names)
        total = max(self.total, 1)
        rows = [f"{'id':>3}  {'class':<{width}}  {'points':>12}  {'share':>7}"]
        for c in self.taxonomy.classes:
            n = int(self.counts[c.id])
            rows.append(f"{c.id:>3}  {c.name:<{width}}  {n:>12d}  {100.0 * n / total:>6.2f}%")
        return "\n".join(rows)


# The class lists and palettes below follow the published color definitions:
# CARLA ids keep the simulator's ordering; KITTI uses Cityscapes train ids shifted by one.
_CARLA12 = [
    ("unlabelled", (0, 0, 0)),
    ("Building", (70, 70, 70)),
    ("Fence", (190, 153, 153)),
    ("Other", (72, 0, 90)),
    ("Pedestrian", (220, 20, 60)),
    ("Pole", (153, 153, 153)),
    ("Road-line", (157, 234, 50)),
    ("Road", (128, 64, 128)),
    ("Sidewalk", (244, 35, 232)),
    ("Vegetation", (107, 142, 35)),
    ("Car", (0, 0, 255)),
    ("Wall", (102, 102, 156)),
    ("Traffic-sign", (220, 220, 0)),
]

_KITTI19 = [
    ("unlabelled", (0, 0, 0)),
    ("Road", (128, 64, 128)),
    ("Sidewalk", (244, 35, 232)),
    ("Building", (70, 70, 70)),
    ("Wall", (102, 102, 156)),
    ("Fence", (190, 153, 153)),
    ("Pole", (153, 153, 153)),
    ("Traffic-light", (250, 170, 30)),
    ("Traffic-sign", (220, 220, 0)),
    ("Vegetation", (107, 142, 35)),
    ("Terrain", (152, 251, 152)),
    ("Sky", (70, 130, 180)),
    ("Person", (220, 20, 60)),
    ("Rider", (255, 0, 0)),
    ("Car", (0, 0, 142)),
    ("Truck", (0, 0, 70)),
    ("Bus", (0, 60, 100)),
    ("Train", (0, 80, 100)),
    ("Motorcycle", (0, 0, 230)),
    ("Bicycle", (119, 11, 32)),
]

_SEMANTIC3D8 = [
    ("unlabelled", (0, 0, 0)),
    ("Man-made Terrain", (0, 0, 255)),
    ("Natural Terrain", (128, 0, 0)),
    ("High-vegetation", (255, 0, 255)),
    ("Low-vegetation", (0, 128, 0)),
    ("Building", (255, 0, 0)),
    ("Hard-scape", (128, 0, 128)),
    ("Scanning Artefacts", (0, 0, 128)),
    ("Car", (128, 128, 0)),
]

_COMMON4 = [
    ("unlabelled", (0, 0, 0)),
    ("Building", (70, 70, 70)),
    ("Road", (128, 64, 128)),
    ("Car", (0, 0, 255)),
    ("Vegetation", (107, 142, 35)),
]


@lru_cache(maxsize=None)
def _builtin() -> dict[str, Taxonomy]:
    return {
        "carla12": Taxonomy.from_entries("carla12", _CARLA12),
        "kitti19": Taxonomy.from_entries("kitti19", _KITTI19),
        "semantic3d8": Taxonomy.from_entries("semantic3d8", _SEMANTIC3D8),
        "common4": Taxonomy.from_entries("common4", _COMMON4),
    }


def builtin_taxonomies() -> dict[str, Taxonomy]:
    return dict(_builtin())


@lru_cache(maxsize=None)
def _remaps() -> dict[tuple[str, str], RemapTable]:
    t = _builtin()
    common = {
        ("semantic3d8", "common4"): {
            "Building": "Building",
            "Man-made Terrain": "Road",
            "Car": "Car",
            "High-vegetation": "Vegetation",
            "Low-vegetation": "Vegetation",
        },
        ("carla12", "common4"): {
            "Building": "Building",
            "Road": "Road",
            "Road-line": "Road",
            "Car": "Car",
            "Vegetation": "Vegetation",
        },
        ("kitti19", "common4"): {
            "Building": "Building",
            "Road": "Road",
            "Car": "Car",
            "Motorcycle": "Car",
            "Bus": "Car",
            "Bicycle": "Car",
            "Vegetation": "Vegetation",
        },
        # Terrain, Sky, Rider, Truck, Bus, Motorcycle, Bicycle and Train sink to 0.
        ("kitti19", "carla12"): {
            "Road": "Road",
            "Sidewalk": "Sidewalk",
            "Building": "Building",
            "Wall": "Wall",
            "Fence": "Fence",
            "Pole": "Pole",
            "Traffic-light": "Other",
            "Traffic-sign": "Traffic-sign",
            "Vegetation": "Vegetation",
            "Person": "Pedestrian",
            "Car": "Car",
        },
    }
    return {k: RemapTable.from_pairs(t[k[0]], t[k[1]], pairs) for k, pairs in common.items()}


def builtin_remaps() -> dict[tuple[str, str], RemapTable]:
    return dict(_remaps())


def get_taxonomy(name_or_path: str) -> Taxonomy:
    """Resolve a built-in taxonomy name or load a custom one from a text file."""
    tax = _builtin().get(name_or_path.lower())
    if tax is not None:
        return tax
    path = Path(name_or_path)
    if path.is_file():
        return Taxonomy.from_text(path.stem, path.read_text())
    raise TaxonomyError(f"unknown taxonomy '{name_or_path}'")


def get_remap(source: Taxonomy, target: Taxonomy) -> RemapTable:
    if source == target:
        return RemapTable.identity(source)
    table = _remaps().get((source.name, target.name))
    if table is None:
        raise TaxonomyError(f"no built-in remap {source.name} -> {target.name}")
    return table


def remap_cloud(cloud: PointCloud, table: RemapTable) -> PointCloud:
    if cloud.labels is None:
        raise MissingLabelsError("cloud has no labels to remap")
    if cloud.taxonomy is not None and cloud.taxonomy != table.source:
        raise TaxonomyMismatchError(
            f"cloud taxonomy {cloud.taxonomy.name} != table source {table.source.name}")
    if len(cloud) and int(cloud.labels.max()) >= len(table.source):
        raise TaxonomyError("cloud label outside the table's source taxonomy")
    return cloud.with_(labels=table(cloud.labels), taxonomy=table.target)


def histogram(clouds: Iterable[PointCloud], taxonomy: Taxonomy | None = None) -> ClassHistogram:
    """Per-class point counts over labeled clouds sharing one taxonomy.

    An empty input needs ``taxonomy`` to know the class count.
    """
    counts = None
    for cloud in clouds:
        if cloud.labels is None:
            raise MissingLabelsError("histogram needs labeled clouds")
        tax = cloud.taxonomy
        if tax is None:
            raise TaxonomyMismatchError("cloud does not declare a taxonomy")
        if taxonomy is None:
            taxonomy = tax
        elif tax != taxonomy:
            raise TaxonomyMismatchError(f"mixed taxonomies: {taxonomy.name} and {tax.name}")
        if counts is None:
            counts = np.zeros(len(taxonomy), dtype=np.int64)
        counts += np.bincount(cloud.labels, minlength=len(taxonomy))[:len(taxonomy)]
    if taxonomy is None:
        raise TaxonomyError("empty input: pass taxonomy= to size the histogram")
    if counts is None:
        counts = np.zeros(len(taxonomy), dtype=np.int64)
    return ClassHistogram(taxonomy, counts)


def paint_by_label(cloud: PointCloud) -> PointCloud:
    """Replace colors with the taxonomy palette color of each point's label."""
    if cloud.labels is None:
        raise MissingLabelsError("cloud has no labels to paint")
    if cloud.taxonomy is None:
        raise TaxonomyError("cloud does not declare a taxonomy")
    return cloud.with_(colors=cloud.taxonomy.palette()[cloud.labels])
