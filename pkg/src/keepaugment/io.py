"""File formats: raw float tensors, binary PPM, CIFAR-10 binary records,
dataset directories, model directories and JSON run configs.

Raw tensor layout (little-endian throughout)::

    b"KAT1" | uint32 H | uint32 W | uint32 C | H*W*C float32, row-major, channel fastest
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import AugmentConfig
from .nn import ToyNet
from .tensor import ContractError, as_generator, check_image

RAW_MAGIC = b"KAT1"
_RAW_HEADER = struct.Struct("<4sIII")
CIFAR_RECORD = 1 + 3 * 32 * 32
DATASET_INDEX = "records.json"
MODEL_INDEX = "model.json"


class FormatError(ValueError):
    """Malformed file contents; ``offset`` is the byte position, when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


# -- raw tensors ----------------------------------------------------------------


def encode_raw(array):
    arr = np.asarray(array)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ContractError(f"raw tensors are 3-D, got shape {arr.shape}")
    arr = arr.astype("<f4")
    if not np.all(np.isfinite(arr)):
        raise ContractError("raw tensors must be finite")
    return _RAW_HEADER.pack(RAW_MAGIC, *arr.shape) + arr.tobytes(order="C")


def decode_raw(data):
    if len(data) < _RAW_HEADER.size:
        raise FormatError("truncated raw tensor header", len(data))
    magic, h, w, c = _RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    expected = _RAW_HEADER.size + 4 * h * w * c
    if len(data) != expected:
        raise FormatError(f"payload is {len(data)} bytes, expected {expected}", min(len(data), expected))
    arr = np.frombuffer(data, dtype="<f4", offset=_RAW_HEADER.size).reshape(h, w, c)
    if not np.all(np.isfinite(arr)):
        raise FormatError("raw tensor contains non-finite values", _RAW_HEADER.size)
    return arr.astype(np.float32)


def write_raw(path, array):
    Path(path).write_bytes(encode_raw(array))


def read_raw(path):
    """Return the stored ``(H, W, C)`` float32 array."""
    return decode_raw(Path(path).read_bytes())


# -- PPM ------------------------------------------------------------------------


def quantize(image):
    """Map [0, 1] floats to 0..255 rounding half up."""
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_ppm(image):
    image = check_image(image)
    if image.shape[2] == 1:
        image = np.repeat(image, 3, axis=2)
    if image.shape[2] != 3:
        raise ContractError(f"PPM needs 1 or 3 channels, got {image.shape[2]}")
    h, w = image.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + quantize(image).tobytes()


def _ppm_tokens(data, count):
    # Reads `count` whitespace-separated header tokens, skipping '#' comments.
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError("truncated PPM header", pos)
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append((data[start:pos], start))
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after PPM header", pos)
    return tokens, pos + 1


def decode_ppm(data):
    tokens, start = _ppm_tokens(data, 4)
    (magic, _), *fields = tokens
    if magic != b"P6":
        raise FormatError(f"not a binary PPM (magic {magic!r})", 0)
    values = []
    for tok, offset in fields:
        if not tok.isdigit():
            raise FormatError(f"expected an integer, got {tok!r}", offset)
        values.append(int(tok))
    w, h, maxval = values
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}", fields[2][1])
    if w < 1 or h < 1:
        raise FormatError(f"invalid size {w}x{h}", fields[0][1])
    need = 3 * w * h
    if len(data) - start < need:
        raise FormatError(f"truncated payload: {len(data) - start} of {need} bytes", len(data))
    raster = np.frombuffer(data, dtype=np.uint8, count=need, offset=start)
    return raster.reshape(h, w, 3).astype(np.float64) / 255.0


def write_ppm(path, image):
    Path(path).write_bytes(encode_ppm(image))


def read_ppm(path):
    return decode_ppm(Path(path).read_bytes())


def read_image(path):
    """Load a ``.ppm`` or raw tensor file as a float64 image."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        return read_ppm(path)
    return check_image(read_raw(path))


# -- datasets ---------------------------------------------------------------------


@dataclass
class DatasetRecord:
    image: np.ndarray
    label: int
    meta: dict = field(default_factory=dict)


def stack_records(records):
    """``(images, labels)`` arrays from a list of records."""
    images = np.stack([r.image for r in records])
    labels = np.array([r.label for r in records], dtype=np.int64)
    return images, labels


def decode_cifar10(data):
    if len(data) % CIFAR_RECORD:
        raise FormatError(
            f"CIFAR-10 file size {len(data)} is not a multiple of {CIFAR_RECORD}",
            len(data) - len(data) % CIFAR_RECORD,
        )
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    images = raw[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).astype(np.float64) / 255.0
    return [DatasetRecord(img, int(lbl)) for img, lbl in zip(images, raw[:, 0])]


def encode_cifar10(records):
    chunks = []
    for rec in records:
        image = check_image(rec.image)
        if image.shape != (32, 32, 3) or not 0 <= rec.label <= 255:
            raise ContractError("CIFAR-10 records hold 32x32x3 images and byte labels")
        chunks.append(bytes([rec.label]) + quantize(image).transpose(2, 0, 1).tobytes())
    return b"".join(chunks)


def read_cifar10(path):
    """Records of a CIFAR-10 binary batch file, in file order."""
    return decode_cifar10(Path(path).read_bytes())


def make_synthetic(n, size=16, rng=0, channels=3, patch=4):
    """Two-class toy set: class 1 carries one bright ``patch x patch`` square.

    Backgrounds are uniform noise in [0, 0.2]; patch pixels are uniform in
    [0.9, 1.0].  ``meta["patch"]`` holds the patch's ``[top, left]``.
    """
    if size < 8:
        raise ContractError(f"synthetic images need size >= 8, got {size}")
    gen = as_generator(rng)
    labels = gen.permutation(np.arange(n) % 2)
    records = []
    for label in labels:
        image = gen.uniform(0.0, 0.2, size=(size, size, channels))
        meta = {}
        if label == 1:
            top, left = (int(v) for v in gen.integers(0, size - patch + 1, size=2))
            image[top : top + patch, left : left + patch] = gen.uniform(
                0.9, 1.0, size=(patch, patch, channels)
            )
            meta["patch"] = [top, left]
        records.append(DatasetRecord(image, int(label), meta))
    return records


def write_dataset(directory, records, extra=None):
    """Write ``records`` as ``<dir>/<index:06d>.kat`` files plus ``records.json``.

    ``extra`` optionally supplies one dict per record merged into its index
    entry (used for augmentation sidecars).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, rec in enumerate(records):
        name = f"{i:06d}.kat"
        write_raw(directory / name, rec.image)
        entry = {"image": name, "label": rec.label}
        entry.update(rec.meta)
        if extra is not None:
            entry.update(extra[i])
        entries.append(entry)
    payload = {"format": "keepaugment-dataset", "version": 1, "records": entries}
    (directory / DATASET_INDEX).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def read_dataset(path):
    """Load a dataset directory or a CIFAR-10 binary file."""
    path = Path(path)
    if path.is_file():
        return read_cifar10(path)
    index = path / DATASET_INDEX
    if not index.exists():
        raise FileNotFoundError(f"{path} is neither a CIFAR-10 file nor a dataset directory")
    payload = json.loads(index.read_text())
    records = []
    for entry in payload["records"]:
        meta = {k: v for k, v in entry.items() if k not in ("image", "label")}
        image = check_image(read_raw(path / entry["image"]))
        records.append(DatasetRecord(image, int(entry["label"]), meta))
    return records


# -- models -------------------------------------------------------------------------


def save_model(directory, net, extra=None):
    """One raw tensor file per parameter plus ``model.json`` with shapes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = {}
    for name, value in net.parameters().items():
        fname = f"{name}.kat"
        write_raw(directory / fname, value.reshape(-1, 1, 1))
        params[name] = {"file": fname, "shape": list(value.shape)}
    manifest = {"format": "keepaugment-toynet", "version": 1, "config": net.config(), "parameters": params}
    if extra:
        manifest.update(extra)
    (directory / MODEL_INDEX).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_model(directory):
    directory = Path(directory)
    index = directory / MODEL_INDEX
    if not index.exists():
        raise FileNotFoundError(f"no {MODEL_INDEX} in {directory}")
    manifest = json.loads(index.read_text())
    cfg = manifest["config"]
    net = ToyNet(
        cfg["input_shape"],
        cfg["n_classes"],
        channels=cfg["channels"],
        early_head=cfg["early_head"],
        activation=cfg["activation"],
        rng=0,
    )
    params = {
        name: read_raw(directory / spec["file"]).reshape(spec["shape"]).astype(np.float64)
        for name, spec in manifest["parameters"].items()
    }
    return net.set_parameters(params)


# -- configs ----------------------------------------------------------------------


def read_config(path):
    return AugmentConfig.from_dict(json.loads(Path(path).read_text()))


def write_config(path, cfg):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
