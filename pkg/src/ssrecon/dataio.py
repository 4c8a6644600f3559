"""KSRD binary blobs, scan datasets with JSON manifests, checkpoints and PGM export.

KSRD layout (all little-endian)::

    bytes 0-3    magic b"KSRD"
    u32          version (1)
    u32          dtype code: 1 complex (float64 re/im pairs), 2 float64,
                 3 uint8, 4 int64
    u32          ndims
    u64 x ndims  dims, row-major
    payload      prod(dims) elements

Dataset layout::

    <dir>/manifest.json
    <dir>/scan_<k>/{kspace,mask,split,sens,ref}.ksrd
"""

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .phantom import make_coilmaps, make_phantom, simulate_acquisition
from .sampling import GAUSSIAN, SamplingMask, SplitSpec, derive_seed, make_omega_mask, split_omega

MAGIC = b"KSRD"
VERSION = 1
_DTYPES = {
    1: np.dtype("<c16"),
    2: np.dtype("<f8"),
    3: np.dtype("u1"),
    4: np.dtype("<i8"),
}
_CODES = {np.dtype(np.complex128): 1, np.dtype(np.float64): 2, np.dtype(np.uint8): 3, np.dtype(np.int64): 4}


def encode_blob(array):
    array = np.asarray(array)
    if array.dtype == np.bool_:
        array = array.astype(np.uint8)
    code = _CODES.get(array.dtype)
    if code is None:
        raise FormatError(f"unsupported dtype {array.dtype}")
    header = MAGIC + struct.pack("<III", VERSION, code, array.ndim)
    header += struct.pack(f"<{array.ndim}Q", *array.shape)
    return header + np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes()


def _need(buf, offset, n, what):
    if len(buf) < offset + n:
        raise FormatError(
            f"truncated KSRD data at byte offset {offset}: {what} needs {n} bytes, "
            f"{max(len(buf) - offset, 0)} available"
        )


def decode_blob(buf):
    _need(buf, 0, 16, "header")
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r} at byte offset 0, expected {MAGIC!r}")
    version, code, ndims = struct.unpack_from("<III", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at byte offset 4")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code} at byte offset 8")
    _need(buf, 16, 8 * ndims, "dims")
    dims = struct.unpack_from(f"<{ndims}Q", buf, 16)
    offset = 16 + 8 * ndims
    dtype = _DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64))
    _need(buf, offset, count * dtype.itemsize, "payload")
    if len(buf) != offset + count * dtype.itemsize:
        raise FormatError(f"{len(buf) - offset - count * dtype.itemsize} trailing bytes at byte offset "
                          f"{offset + count * dtype.itemsize}")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(dims)
    return data.astype(dtype.newbyteorder("="))


def write_blob(path, array):
    Path(path).write_bytes(encode_blob(array))


def read_blob(path):
    return decode_blob(Path(path).read_bytes())


def blob_dims(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        _need(head, 0, 16, "header")
        if head[:4] != MAGIC:
            raise FormatError(f"bad magic {head[:4]!r} at byte offset 0 in {path}")
        ndims = struct.unpack_from("<I", head, 12)[0]
        raw = fh.read(8 * ndims)
    _need(head + raw, 16, 8 * ndims, "dims")
    return list(struct.unpack(f"<{ndims}Q", raw))


@dataclass(eq=False)
class Scan:
    scan_id: str
    kspace: np.ndarray
    mask: SamplingMask
    sens: np.ndarray
    split: SplitSpec | None = None
    ref_image: np.ndarray | None = None
    noise_sigma: float = 0.0
    subset: str = "train"

    def __post_init__(self):
        shape = self.mask.shape
        if self.sens.shape[1:] != shape or self.kspace.shape != self.sens.shape:
            raise ShapeError(f"scan {self.scan_id}: inconsistent shapes "
                             f"{self.kspace.shape}, {self.sens.shape}, mask {shape}")
        if np.any(self.kspace[:, ~self.mask.picked] != 0):
            raise ShapeError(f"scan {self.scan_id}: k-space has samples outside the mask")
        if self.split is not None and not (
            np.array_equal(self.split.theta | self.split.lam, self.mask.picked)
            and not np.any(self.split.theta & self.split.lam)
        ):
            raise ShapeError(f"scan {self.scan_id}: split does not partition the mask")
        if self.ref_image is not None and self.ref_image.shape != shape:
            raise ShapeError(f"scan {self.scan_id}: reference image shape mismatch")

    def with_split(self, split):
        return Scan(self.scan_id, self.kspace, self.mask, self.sens, split, self.ref_image,
                    self.noise_sigma, self.subset)


@dataclass(frozen=True)
class CohortConfig:
    scans: int = 30
    test_scans: int = 10
    size: int = 64
    coils: int = 4
    noise_sigma: float = 0.01
    accel: int = 4
    acs: int = 8
    rho: float = 0.4
    scheme: str = GAUSSIAN
    seed: int = 0


def generate_scan(k, cfg, subset="train"):
    """Scan ``k`` of a cohort; every random choice is seeded from ``(cfg.seed, k)``."""
    n = cfg.size
    x = make_phantom(n, n, derive_seed(cfg.seed, k, 1))
    sens = make_coilmaps(n, n, cfg.coils, derive_seed(cfg.seed, k, 2))
    mask = make_omega_mask(n, n, cfg.accel, cfg.acs)
    y = simulate_acquisition(x, sens, mask, cfg.noise_sigma, derive_seed(cfg.seed, k, 3))
    split = split_omega(mask, cfg.rho, cfg.scheme, derive_seed(cfg.seed, k, 4))
    return Scan(f"scan_{k:03d}", y, mask, sens, split, x, cfg.noise_sigma, subset)


def generate_cohort(cfg):
    """The last ``cfg.test_scans`` scans form the test subset."""
    if cfg.test_scans < 0 or cfg.test_scans > cfg.scans:
        raise ShapeError(f"test_scans must be in [0, {cfg.scans}], got {cfg.test_scans}")
    n_train = cfg.scans - cfg.test_scans
    return [generate_scan(k, cfg, "train" if k < n_train else "test") for k in range(cfg.scans)]


def _file_entry(path, rel):
    return {"path": rel, "dims": blob_dims(path)}


def save_dataset(root, scans, name=None, seed=None, generator=None):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for scan in scans:
        sdir = root / scan.scan_id
        sdir.mkdir(exist_ok=True)
        files = {
            "kspace": scan.kspace,
            "mask": scan.mask.picked,
            "sens": scan.sens,
        }
        if scan.split is not None:
            files["split"] = scan.split.codes()
        if scan.ref_image is not None:
            files["ref"] = scan.ref_image
        refs = {}
        for key, arr in files.items():
            path = sdir / f"{key}.ksrd"
            write_blob(path, arr)
            refs[key] = _file_entry(path, f"{scan.scan_id}/{key}.ksrd")
        entries.append({
            "scan_id": scan.scan_id,
            "subset": scan.subset,
            "shape": list(scan.kspace.shape),
            "noise_sigma": scan.noise_sigma,
            "mask": {"accel": scan.mask.accel, "acs_cols": None if scan.mask.acs_cols is None else list(scan.mask.acs_cols)},
            "split": None if scan.split is None else {
                "rho": scan.split.rho, "scheme": scan.split.scheme, "seed": scan.split.seed},
            "files": refs,
        })
    manifest = {
        "format": "ssrecon-dataset",
        "version": 1,
        "name": name or root.name,
        "seed": seed,
        "scan_count": len(entries),
        "generator": generator or {},
        "scans": entries,
    }
    write_json(root / "manifest.json", manifest)
    return manifest


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_dataset(root, subset=None):
    """Load scans listed in ``<root>/manifest.json``, checking shapes against blob headers."""
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest at {manifest_path}")
    manifest = read_json(manifest_path)
    scans = []
    for entry in manifest["scans"]:
        if subset is not None and entry.get("subset") != subset:
            continue
        arrays = {}
        for key, ref in entry["files"].items():
            path = root / ref["path"]
            if not path.exists():
                raise FileNotFoundError(f"manifest references missing file {path}")
            arr = read_blob(path)
            if list(arr.shape) != ref["dims"]:
                raise FormatError(f"{path}: header dims {list(arr.shape)} disagree with manifest {ref['dims']}")
            arrays[key] = arr
        m = entry["mask"]
        mask = SamplingMask(arrays["mask"].astype(bool), m["accel"],
                            None if m["acs_cols"] is None else tuple(m["acs_cols"]))
        split = None
        if entry.get("split") is not None and "split" in arrays:
            s = entry["split"]
            split = SplitSpec.from_codes(arrays["split"], s["rho"], s["scheme"], s["seed"])
        scans.append(Scan(entry["scan_id"], arrays["kspace"], mask, arrays["sens"], split,
                          arrays.get("ref"), entry.get("noise_sigma", 0.0), entry.get("subset", "train")))
    return manifest, scans


def update_splits(root, scans):
    """Rewrite split blobs and manifest entries for ``scans`` in an existing dataset."""
    root = Path(root)
    manifest = read_json(root / "manifest.json")
    by_id = {s.scan_id: s for s in scans}
    for entry in manifest["scans"]:
        scan = by_id.get(entry["scan_id"])
        if scan is None or scan.split is None:
            continue
        path = root / scan.scan_id / "split.ksrd"
        write_blob(path, scan.split.codes())
        entry["files"]["split"] = _file_entry(path, f"{scan.scan_id}/split.ksrd")
        entry["split"] = {"rho": scan.split.rho, "scheme": scan.split.scheme, "seed": scan.split.seed}
    write_json(root / "manifest.json", manifest)
    return manifest


def save_params(root, params, meta=None):
    """Checkpoint directory with ``params.ksrd`` and ``model.json``."""
    from dataclasses import asdict

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_blob(root / "params.ksrd", params.theta)
    doc = {"net_config": asdict(params.cfg), "param_count": int(params.theta.size), "mu": params.mu}
    doc.update(meta or {})
    write_json(root / "model.json", doc)


def load_params(root):
    from .network import NetConfig, NetworkParams

    root = Path(root)
    doc = read_json(root / "model.json")
    cfg = NetConfig(**doc["net_config"])
    theta = read_blob(root / "params.ksrd")
    return NetworkParams(cfg, theta), doc


def pgm_bytes(image):
    """8-bit binary PGM (P5) of ``|image|``, min-max normalized."""
    mag = np.abs(np.asarray(image)).astype(np.float64)
    if mag.ndim != 2:
        raise ShapeError(f"PGM export needs a 2-D image, got {mag.shape}")
    lo, hi = mag.min(), mag.max()
    scaled = np.zeros_like(mag) if hi <= lo else (mag - lo) / (hi - lo)
    pixels = np.floor(scaled * 255.0 + 0.5).astype(np.uint8)
    rows, cols = mag.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pixels.tobytes()


def write_pgm(path, image):
    Path(path).write_bytes(pgm_bytes(image))


def read_pgm(path):
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5" or len(parts) < 4:
        raise FormatError(f"{path} is not a binary PGM")
    cols, rows = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
