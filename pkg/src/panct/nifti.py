"""NIfTI-1 volume and label-mask ingestion.

Implements a self-contained reader and a minimal writer for the NIfTI-1
container: a 348-byte binary header, a 4-byte extender, and a voxel payload,
optionally wrapped in a gzip stream. Only the header fields this pipeline
needs are interpreted; the rest are carried opaquely.

Layout notes:
  * The payload is stored in Fortran order: x (column) varies fastest,
    then y (row), then z (axial slice).
  * Axial slice access returns 2D arrays indexed [row, column] == [y, x],
    the usual image convention.
  * Orientation codes (qform/sform) are recorded but never used to reorder
    voxels; slice index is the raw z index.
"""

from __future__ import annotations

import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import PanctError

log = logging.getLogger(__name__)

HEADER_SIZE = 348
# header + 4-byte extender; the smallest legal payload offset for "n+1" files
DEFAULT_VOX_OFFSET = 352

MAGIC_SINGLE = b"n+1\0"
MAGIC_PAIR = b"ni1\0"
NIFTI2_HEADER_SIZE = 540

# datatype code -> numpy dtype (byte order applied at read time)
SUPPORTED_DTYPES = {
    2: "u1",    # uint8
    4: "i2",    # int16
    8: "i4",    # int32
    16: "f4",   # float32
    64: "f8",   # float64
    256: "i1",  # int8
    512: "u2",  # uint16
    768: "u4",  # uint32
}
DTYPE_CODES = {np.dtype(v): k for k, v in SUPPORTED_DTYPES.items()}


class MalformedHeaderError(PanctError):
    """Header is not a decodable NIfTI-1 header."""


class UnsupportedDatatypeError(PanctError):
    """Datatype code outside the supported scalar set."""


class TruncatedDataError(PanctError):
    """Voxel payload is shorter than the header dimensions imply."""


class DimsMismatchError(PanctError):
    """Volume and mask grids disagree in shape."""


@dataclass(frozen=True)
class VoxelVolume:
    """Decoded CT volume with header scaling already applied."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    intensities: np.ndarray  # shape dims, Fortran semantics (x, y, z)
    source_path: str
    volume_name: str
    orientation_codes: tuple[int, int] = (0, 0)  # (qform_code, sform_code), recorded only

    @property
    def slice_count(self) -> int:
        return self.dims[2]

    def axial_slice(self, z: int) -> np.ndarray:
        """2D intensity slice at raw z index, indexed [y, x]."""
        return self.intensities[:, :, z].T


@dataclass(frozen=True)
class LabelMask:
    """Decoded label grid plus the organ-name -> code mapping it was loaded with."""

    dims: tuple[int, int, int]
    labels: np.ndarray  # shape dims, small non-negative integers
    label_map: dict[str, int]
    source_path: str = ""
    volume_name: str = ""
    distinct_codes: tuple[int, ...] = ()
    unknown_codes: tuple[int, ...] = ()

    @property
    def slice_count(self) -> int:
        return self.dims[2]

    def axial_slice(self, z: int) -> np.ndarray:
        """2D label slice at raw z index, indexed [y, x]."""
        return self.labels[:, :, z].T


@dataclass(frozen=True)
class PairedVolume:
    """A volume and its mask, dims-checked, with synchronized axial access."""

    volume: VoxelVolume
    mask: LabelMask

    @property
    def slice_count(self) -> int:
        return self.volume.slice_count

    @property
    def width(self) -> int:
        return self.volume.dims[0]

    @property
    def height(self) -> int:
        return self.volume.dims[1]

    def axial_pair(self, z: int) -> tuple[np.ndarray, np.ndarray]:
        return self.volume.axial_slice(z), self.mask.axial_slice(z)


@dataclass
class _Header:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    datatype: int
    itemsize: int
    vox_offset: int
    scl_slope: float
    scl_inter: float
    qform_code: int
    sform_code: int
    byte_order: str


def _open_maybe_gzip(path: Path) -> BinaryIO:
    raw = open(path, "rb")
    head = raw.read(2)
    raw.seek(0)
    if head == b"\x1f\x8b":
        return gzip.open(raw, "rb")  # type: ignore[return-value]
    return raw


def _read_exact(stream: BinaryIO, n: int, chunk_size: int) -> bytes:
    """Read exactly n bytes in bounded chunks; short reads raise TruncatedDataError."""
    buf = bytearray()
    while len(buf) < n:
        piece = stream.read(min(chunk_size, n - len(buf)))
        if not piece:
            raise TruncatedDataError(f"payload ended after {len(buf)} of {n} bytes")
        buf.extend(piece)
    return bytes(buf)


def _parse_header(header: bytes, source: str) -> _Header:
    if len(header) < HEADER_SIZE:
        raise MalformedHeaderError(f"{source}: file shorter than the {HEADER_SIZE}-byte header")

    magic = header[344:348]
    for order in ("<", ">"):
        sizeof_hdr = struct.unpack(order + "i", header[:4])[0]
        if sizeof_hdr == NIFTI2_HEADER_SIZE:
            raise MalformedHeaderError(f"{source}: NIfTI-2 header detected; only NIfTI-1 is supported")
    if magic not in (MAGIC_SINGLE, MAGIC_PAIR):
        raise MalformedHeaderError(f"{source}: bad magic {magic!r}")

    byte_order = None
    for order in ("<", ">"):
        dim0 = struct.unpack(order + "h", header[40:42])[0]
        if 1 <= dim0 <= 7:
            byte_order = order
            break
    if byte_order is None:
        raise MalformedHeaderError(f"{source}: dim[0] invalid under either byte order")

    sizeof_hdr = struct.unpack(byte_order + "i", header[:4])[0]
    if sizeof_hdr != HEADER_SIZE:
        raise MalformedHeaderError(f"{source}: sizeof_hdr is {sizeof_hdr}, expected {HEADER_SIZE}")

    dim = struct.unpack(byte_order + "8h", header[40:56])
    ndim = dim[0]
    if ndim < 3:
        # promote 1D/2D data to a single-slice volume
        shape = tuple(dim[1 : ndim + 1]) + (1,) * (3 - ndim)
    else:
        shape = tuple(dim[1:4])
        if any(d > 1 for d in dim[4 : ndim + 1]):
            raise MalformedHeaderError(f"{source}: {ndim}-dimensional data is not a scalar volume")
    if any(d < 1 for d in shape):
        raise MalformedHeaderError(f"{source}: non-positive dimension in {shape}")

    datatype, bitpix = struct.unpack(byte_order + "2h", header[70:74])
    if datatype not in SUPPORTED_DTYPES:
        raise UnsupportedDatatypeError(f"{source}: datatype code {datatype} unsupported")
    itemsize = np.dtype(SUPPORTED_DTYPES[datatype]).itemsize
    if bitpix != itemsize * 8:
        raise MalformedHeaderError(f"{source}: bitpix {bitpix} inconsistent with datatype {datatype}")

    pixdim = struct.unpack(byte_order + "8f", header[76:108])
    vox_offset_f = struct.unpack(byte_order + "f", header[108:112])[0]
    scl_slope, scl_inter = struct.unpack(byte_order + "2f", header[112:120])
    qform_code, sform_code = struct.unpack(byte_order + "2h", header[252:256])

    vox_offset = int(vox_offset_f)
    if magic == MAGIC_SINGLE and vox_offset < HEADER_SIZE:
        raise MalformedHeaderError(f"{source}: vox_offset {vox_offset} overlaps the header")

    return _Header(
        dims=shape,  # type: ignore[arg-type]
        spacing=(float(pixdim[1]), float(pixdim[2]), float(pixdim[3])),
        datatype=datatype,
        itemsize=itemsize,
        vox_offset=vox_offset,
        scl_slope=float(scl_slope),
        scl_inter=float(scl_inter),
        qform_code=qform_code,
        sform_code=sform_code,
        byte_order=byte_order,
    )


def _read_grid(path: Path, chunk_size: int) -> tuple[_Header, np.ndarray]:
    path = Path(path)
    with _open_maybe_gzip(path) as stream:
        header_bytes = stream.read(HEADER_SIZE)
        hdr = _parse_header(header_bytes, str(path))
        if hdr.vox_offset == 0 and header_bytes[344:348] == MAGIC_PAIR:
            raise MalformedHeaderError(f"{path}: detached .hdr/.img pairs are not supported")
        skip = hdr.vox_offset - HEADER_SIZE
        if skip:
            _read_exact(stream, skip, chunk_size)
        nx, ny, nz = hdr.dims
        payload = _read_exact(stream, nx * ny * nz * hdr.itemsize, chunk_size)
    dtype = np.dtype(hdr.byte_order + SUPPORTED_DTYPES[hdr.datatype])
    grid = np.frombuffer(payload, dtype=dtype).reshape(hdr.dims, order="F")
    return hdr, grid


def volume_name_of(path: str | Path) -> str:
    return Path(path).name


def volume_stem(name: str) -> str:
    """Volume file name without .nii/.nii.gz suffixes."""
    stem = name
    for suffix in (".gz", ".nii"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    return stem


def load_volume(path: str | Path, chunk_size: int = 1 << 20) -> VoxelVolume:
    """Decode a NIfTI-1 CT volume, applying header slope/intercept scaling.

    Scaling is applied exactly once: intensities = raw * slope + intercept
    when slope is nonzero, raw values otherwise.
    """
    hdr, grid = _read_grid(Path(path), chunk_size)
    if hdr.scl_slope != 0.0 and not (hdr.scl_slope == 1.0 and hdr.scl_inter == 0.0):
        grid = grid.astype(np.float64) * hdr.scl_slope + hdr.scl_inter
    if not np.isfinite(grid).all():
        raise MalformedHeaderError(f"{path}: non-finite intensities after scaling")
    grid = np.asarray(grid)
    grid.flags.writeable = False
    return VoxelVolume(
        dims=hdr.dims,
        spacing=hdr.spacing,
        intensities=grid,
        source_path=str(path),
        volume_name=volume_name_of(path),
        orientation_codes=(hdr.qform_code, hdr.sform_code),
    )


def load_mask(path: str | Path, label_map: dict[str, int], chunk_size: int = 1 << 20) -> LabelMask:
    """Decode a NIfTI-1 label mask and report the distinct codes found.

    Header scaling is ignored: the payload already carries label codes.
    Nonzero codes missing from label_map are surfaced as unknown_codes and
    logged, not raised.
    """
    hdr, grid = _read_grid(Path(path), chunk_size)
    if np.issubdtype(grid.dtype, np.floating):
        rounded = np.rint(grid)
        if not np.array_equal(rounded, grid):
            raise UnsupportedDatatypeError(f"{path}: float mask payload is not integer-valued")
        grid = rounded.astype(np.int64)
    else:
        grid = grid.astype(np.int64)
    if grid.min() < 0:
        raise UnsupportedDatatypeError(f"{path}: negative label codes")
    grid.flags.writeable = False

    distinct = tuple(int(c) for c in np.unique(grid))
    known = set(label_map.values()) | {0}
    unknown = tuple(c for c in distinct if c not in known)
    if unknown:
        log.warning("%s: unknown label codes %s not in %s", path, unknown, sorted(label_map))
    return LabelMask(
        dims=hdr.dims,
        labels=grid,
        label_map=dict(label_map),
        source_path=str(path),
        volume_name=volume_name_of(path),
        distinct_codes=distinct,
        unknown_codes=unknown,
    )


def pair(volume: VoxelVolume, mask: LabelMask) -> PairedVolume:
    """Bind a volume to its mask; dims must match exactly."""
    if volume.dims != mask.dims:
        raise DimsMismatchError(f"volume {volume.dims} vs mask {mask.dims}")
    return PairedVolume(volume=volume, mask=mask)


def write_nifti1(
    path: str | Path,
    grid: np.ndarray,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
    scl_slope: float = 0.0,
    scl_inter: float = 0.0,
) -> Path:
    """Write a minimal valid single-file NIfTI-1 volume (gzipped iff path ends .gz).

    The grid dtype must be one of the supported scalar types; it is stored
    little-endian at vox_offset 352 with an all-zero extender.
    """
    path = Path(path)
    grid = np.asarray(grid)
    if grid.ndim != 3:
        raise ValueError(f"expected a 3D grid, got shape {grid.shape}")
    dtype = grid.dtype.newbyteorder("=")
    if np.dtype(dtype) not in DTYPE_CODES:
        raise ValueError(f"dtype {grid.dtype} has no NIfTI-1 code in the supported set")
    code = DTYPE_CODES[np.dtype(dtype)]

    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    struct.pack_into("<8h", header, 40, 3, grid.shape[0], grid.shape[1], grid.shape[2], 1, 1, 1, 1)
    struct.pack_into("<2h", header, 70, code, np.dtype(dtype).itemsize * 8)
    struct.pack_into("<8f", header, 76, 1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0)
    struct.pack_into("<f", header, 108, float(DEFAULT_VOX_OFFSET))
    struct.pack_into("<2f", header, 112, scl_slope, scl_inter)
    header[344:348] = MAGIC_SINGLE

    blob = bytes(header) + b"\0\0\0\0" + np.ascontiguousarray(grid, dtype=dtype).tobytes(order="F")
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.name.endswith(".gz"):
        # fixed mtime keeps rewrites byte-identical
        with gzip.GzipFile(path, "wb", mtime=0) as f:
            f.write(blob)
    else:
        path.write_bytes(blob)
    return path
