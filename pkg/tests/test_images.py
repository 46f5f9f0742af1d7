import pytest
from PIL import Image

from slidetrace.geometry import Box
from slidetrace.images import (
    CropMissing,
    CropRequest,
    FileCropProvider,
    StubCropProvider,
    crop_relpath,
    index_data_dir,
    thumbnail_request,
)
from slidetrace.logs import SlideMeta


@pytest.fixture
def data_dir(tmp_path):
    crop_dir = tmp_path / "crops" / "S1"
    crop_dir.mkdir(parents=True)
    Image.new("RGB", (1024, 1024), (200, 180, 210)).save(crop_dir / "100_200_1024_1024.png")
    return tmp_path


def test_relpath_layout():
    assert crop_relpath("S1", Box(100.4, 200.0, 1024, 1024)) == "crops/S1/100_200_1024_1024.png"


def test_existing_crop_served_with_hash(data_dir):
    provider = FileCropProvider(data_dir)
    ref = provider.get_crop(CropRequest("S1", Box(100, 200, 1024, 1024)))
    assert ref.width == ref.height == 1024
    assert len(ref.content_hash) == 64
    assert ref.path == "crops/S1/100_200_1024_1024.png"


def test_unknown_slide_raises(data_dir):
    provider = FileCropProvider(data_dir)
    with pytest.raises(CropMissing):
        provider.get_crop(CropRequest("nope", Box(0, 0, 10, 10)))


def test_repeat_request_identical_hash(data_dir):
    provider = FileCropProvider(data_dir)
    req = CropRequest("S1", Box(100, 200, 1024, 1024))
    assert provider.get_crop(req) == provider.get_crop(req)


def test_manifest_index_roundtrip(data_dir):
    index_data_dir(data_dir)
    fresh = FileCropProvider(data_dir)
    ref = fresh.get_crop(CropRequest("S1", Box(100, 200, 1024, 1024)))
    direct = FileCropProvider(data_dir.parent / data_dir.name)
    assert ref == direct.get_crop(CropRequest("S1", Box(100, 200, 1024, 1024)))


def test_stub_provider_deterministic():
    stub = StubCropProvider()
    req = CropRequest("S1", Box(0, 0, 512, 512), target_px=1024)
    a, b = stub.get_crop(req), stub.get_crop(req)
    assert a == b
    other = stub.get_crop(CropRequest("S1", Box(1, 0, 512, 512), target_px=1024))
    assert other.content_hash != a.content_hash


def test_thumbnail_request_covers_slide():
    slide = SlideMeta("S1", 20000, 10000, 40.0)
    req = thumbnail_request(slide)
    assert req.box == Box(0, 0, 20000, 10000)
    assert req.target_px == 1024
