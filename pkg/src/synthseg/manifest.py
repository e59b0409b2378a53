"""Dataset manifest: the small RAM-resident index of frames on disk.

One frame per line, tab separated::

    frame_id  ply_path  depth_path  semantic_path  color_path  point_count  taxonomy

Paths are relative to the manifest's directory; ``-`` marks an absent file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

from synthseg.io import atomic_write

ABSENT = "-"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    frame_id: str
    ply: str
    depth: str = ABSENT
    semantic: str = ABSENT
    color: str = ABSENT
    point_count: int = 0
    taxonomy: str = "carla12"

    def to_line(self) -> str:
        return "\t".join([self.frame_id, self.ply, self.depth, self.semantic, self.color,
                          str(self.point_count), self.taxonomy])

    @classmethod
    def from_line(cls, line: str, lineno: int = 0) -> "ManifestEntry":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 7:
            raise ManifestError(f"line {lineno}: expected 7 tab-separated fields, got {len(parts)}")
        try:
            count = int(parts[5])
        except ValueError:
            raise ManifestError(f"line {lineno}: bad point count '{parts[5]}'") from None
        if count < 0:
            raise ManifestError(f"line {lineno}: negative point count")
        return cls(parts[0], parts[1], parts[2], parts[3], parts[4], count, parts[6])


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    root: Path = Path(".")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def __getitem__(self, i) -> ManifestEntry:
        return self.entries[i]

    def resolve(self, rel: str) -> Optional[Path]:
        if rel == ABSENT:
            return None
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def subset(self, frame_ids: Sequence[str]) -> "DatasetManifest":
        by_id = {e.frame_id: e for e in self.entries}
        return DatasetManifest(tuple(by_id[f] for f in frame_ids), self.root)

    def missing_files(self) -> list[Path]:
        missing = []
        for e in self.entries:
            for rel in (e.ply, e.depth, e.semantic, e.color):
                p = self.resolve(rel)
                if p is not None and not p.is_file():
                    missing.append(p)
        return missing

    def to_text(self) -> str:
        return "".join(e.to_line() + "\n" for e in self.entries)

    def rebased(self, new_root: Path) -> "DatasetManifest":
        """Same frames with paths rewritten relative to ``new_root``."""
        new_root = Path(new_root)
        out = []
        for e in self.entries:
            fields = {}
            for name in ("ply", "depth", "semantic", "color"):
                p = self.resolve(getattr(e, name))
                fields[name] = ABSENT if p is None else os.path.relpath(p.resolve(), new_root.resolve())
            out.append(replace(e, **fields))
        return DatasetManifest(tuple(out), new_root)


def parse_manifest(text: str, root: Path = Path(".")) -> DatasetManifest:
    entries = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        e = ManifestEntry.from_line(line, lineno)
        if e.frame_id in seen:
            raise ManifestError(f"line {lineno}: duplicate frame id '{e.frame_id}'")
        seen.add(e.frame_id)
        entries.append(e)
    return DatasetManifest(tuple(entries), Path(root))


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    return parse_manifest(path.read_text(), path.parent)


def write_manifest(manifest: DatasetManifest, path) -> DatasetManifest:
    """Write ``manifest`` to ``path`` with paths relative to the file's directory."""
    path = Path(path)
    rebased = manifest.rebased(path.parent)
    atomic_write(path, rebased.to_text().encode())
    return rebased
