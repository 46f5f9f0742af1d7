"""Crop-serving contract plus the file-backed provider.

Core never decodes whole-slide pyramids. Crops are pre-extracted PNG files in
``crops/{slide_id}/{x}_{y}_{w}_{h}.png`` under a data directory; anything that
streams pixels from a live tile source is an adapter behind ``CropProvider``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from PIL import Image

from .geometry import Box
from .logs import SlideMeta

MANIFEST_NAME = "manifest.json"


class CropMissing(KeyError):
    def __init__(self, slide_id: str, box: Box):
        self.slide_id = slide_id
        self.box = box
        super().__init__(f"no crop for slide {slide_id!r} at {box.to_json()}")


@dataclass(frozen=True)
class ImageRef:
    """Opaque handle to one served image; equal hash means equal pixels."""

    path: str
    width: int
    height: int
    content_hash: str

    def to_json(self) -> dict:
        return {
            "path": self.path,
            "width": self.width,
            "height": self.height,
            "content_hash": self.content_hash,
        }


@dataclass(frozen=True)
class CropRequest:
    slide_id: str
    box: Box
    target_px: int = 1024

    def __post_init__(self) -> None:
        if self.target_px <= 0:
            raise ValueError(f"target_px must be > 0, got {self.target_px}")


def crop_relpath(slide_id: str, box: Box) -> str:
    x, y, w, h = (int(round(v)) for v in (box.x, box.y, box.w, box.h))
    return f"crops/{slide_id}/{x}_{y}_{w}_{h}.png"


def thumbnail_request(slide: SlideMeta, target_px: int = 1024) -> CropRequest:
    return CropRequest(slide.slide_id, Box(0, 0, slide.width_px, slide.height_px), target_px)


class CropProvider(Protocol):
    def get_crop(self, req: CropRequest) -> ImageRef: ...


class FileCropProvider:
    """Serves pre-extracted crops from a data directory, hashing file content."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._cache: dict[str, ImageRef] = {}
        manifest = self.root / MANIFEST_NAME
        if manifest.is_file():
            for rel, entry in json.loads(manifest.read_text()).get("crops", {}).items():
                self._cache[rel] = ImageRef(
                    path=rel,
                    width=int(entry["width"]),
                    height=int(entry["height"]),
                    content_hash=entry["content_hash"],
                )

    def get_crop(self, req: CropRequest) -> ImageRef:
        rel = crop_relpath(req.slide_id, req.box)
        if rel in self._cache:
            return self._cache[rel]
        path = self.root / rel
        if not path.is_file():
            raise CropMissing(req.slide_id, req.box)
        data = path.read_bytes()
        with Image.open(path) as img:
            width, height = img.size
        ref = ImageRef(
            path=rel, width=width, height=height, content_hash=hashlib.sha256(data).hexdigest()
        )
        self._cache[rel] = ref
        return ref


def index_data_dir(root: str | Path) -> Path:
    """Write the manifest for every crop under ``root``; returns the manifest path."""
    root = Path(root)
    entries = {}
    for path in sorted((root / "crops").glob("*/*.png")):
        rel = str(path.relative_to(root))
        with Image.open(path) as img:
            width, height = img.size
        entries[rel] = {
            "width": width,
            "height": height,
            "content_hash": hashlib.sha256(path.read_bytes()).hexdigest(),
        }
    manifest = root / MANIFEST_NAME
    manifest.write_text(json.dumps({"crops": entries}, indent=2, sort_keys=True))
    return manifest


class StubCropProvider:
    """Deterministic provider for tests and dry runs: no pixels, stable hashes."""

    def get_crop(self, req: CropRequest) -> ImageRef:
        rel = crop_relpath(req.slide_id, req.box)
        digest = hashlib.sha256(f"{rel}@{req.target_px}".encode()).hexdigest()
        return ImageRef(path=rel, width=req.target_px, height=req.target_px, content_hash=digest)
