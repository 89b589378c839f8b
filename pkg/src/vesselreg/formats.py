"""On-disk formats: BVOL volumes, PGM images with spacing sidecars, key=value records.

BVOL (binary vessel volume)
    A text header followed by raw voxel bytes::

        BVOL1
        dims = nx ny nz
        spacing = sx sy sz
        end

    after the ``end`` line come exactly nx*ny*nz bytes, one voxel each with
    value 0 or 1, x varying fastest, then y, then z. Voxels are single bytes
    so no byte order applies; multi-byte values elsewhere in the package are
    written in the format's own stated order.

Gray images
    Portable graymaps (P5), 8-bit (maxval 255) or 16-bit (maxval 65535,
    big-endian per the netpbm standard). Intensities normalize to [0, 1] as
    value/maxval at load. A text sidecar ``<image>.meta`` carries the
    spacing: ``spacing_mm = <float>``.

Key = value records
    One ``key = value`` pair per line, ``#`` starts a comment. Pose records
    use keys tx_mm, ty_mm, rz_deg, ry_deg. DSA sequence metadata uses
    pixel_spacing_mm, magnification, rot_z_deg, rot_y_deg.

All writes go through a temp file plus rename, so partially written files
never appear under the final name.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .geometry import BinaryVolume, GrayImage, Pose
from .preprocess import DsaSequence, min_ip_pixels

BVOL_MAGIC = b"BVOL1"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------- key=value


def parse_keyvalue(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def format_keyvalue(pairs: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in pairs.items())


def read_keyvalue(path) -> dict[str, str]:
    return parse_keyvalue(Path(path).read_text())


def write_keyvalue(path, pairs: dict) -> None:
    atomic_write_text(path, format_keyvalue(pairs))


# ---------------------------------------------------------------- poses


def pose_to_pairs(p: Pose) -> dict[str, str]:
    return {
        "tx_mm": repr(p.t_x),
        "ty_mm": repr(p.t_y),
        "rz_deg": repr(p.r_z),
        "ry_deg": repr(p.r_y),
    }


def pose_from_pairs(pairs: dict[str, str]) -> Pose:
    return Pose(
        float(pairs["tx_mm"]),
        float(pairs["ty_mm"]),
        float(pairs["rz_deg"]),
        float(pairs["ry_deg"]),
    )


def write_pose(path, p: Pose) -> None:
    write_keyvalue(path, pose_to_pairs(p))


def read_pose(path) -> Pose:
    return pose_from_pairs(read_keyvalue(path))


# ---------------------------------------------------------------- BVOL


def write_bvol(path, v: BinaryVolume) -> None:
    nx, ny, nz = v.dims
    sx, sy, sz = v.spacing
    header = (
        BVOL_MAGIC
        + f"\ndims = {nx} {ny} {nz}\nspacing = {sx!r} {sy!r} {sz!r}\nend\n".encode("ascii")
    )
    # transpose so x varies fastest in the C-order byte stream
    payload = v.voxels.transpose(2, 1, 0).tobytes()
    atomic_write_bytes(path, header + payload)


def read_bvol(path) -> BinaryVolume:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0 or raw[:nl] != BVOL_MAGIC:
        raise ValueError(f"{path}: not a BVOL file")
    rest = raw[nl + 1:]
    header_lines = []
    offset = 0
    while True:
        nl = rest.find(b"\n", offset)
        if nl < 0:
            raise ValueError(f"{path}: truncated BVOL header")
        line = rest[offset:nl].decode("ascii")
        offset = nl + 1
        if line == "end":
            break
        header_lines.append(line)
    fields = parse_keyvalue("\n".join(header_lines))
    dims = tuple(int(x) for x in fields["dims"].split())
    spacing = tuple(float(x) for x in fields["spacing"].split())
    n = dims[0] * dims[1] * dims[2]
    payload = rest[offset:offset + n]
    if len(payload) != n:
        raise ValueError(f"{path}: expected {n} voxel bytes, got {len(payload)}")
    voxels = np.frombuffer(payload, dtype=np.uint8).reshape(dims[2], dims[1], dims[0])
    return BinaryVolume(voxels.transpose(2, 1, 0), spacing)


# ---------------------------------------------------------------- PGM


def write_pgm(path, img: GrayImage, maxval: int = 65535) -> None:
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    pix = np.clip(img.pixels, 0.0, 1.0)
    quant = np.rint(pix * maxval)
    # pixels[x, y] -> PGM raster rows are y
    rows = quant.T
    if maxval == 255:
        data = rows.astype(np.uint8).tobytes()
    else:
        data = rows.astype(">u2").tobytes()
    w, h = img.dims
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    atomic_write_bytes(path, header + data)
    write_keyvalue(str(path) + ".meta", {"spacing_mm": repr(img.spacing)})


def _read_pgm_tokens(raw: bytes, count: int):
    """First `count` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(raw):
            raise ValueError("truncated PGM header")
        c = raw[i:i + 1]
        if c == b"#":
            i = raw.find(b"\n", i)
            if i < 0:
                raise ValueError("truncated PGM comment")
            i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j:j + 1].isspace():
                j += 1
            tokens.append(raw[i:j])
            i = j
    return tokens, i + 1  # single whitespace after maxval precedes the raster


def read_pgm(path, spacing: float | None = None) -> GrayImage:
    raw = Path(path).read_bytes()
    tokens, offset = _read_pgm_tokens(raw, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: only binary (P5) graymaps are supported")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval not in (255, 65535):
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    dtype = np.uint8 if maxval == 255 else np.dtype(">u2")
    n = w * h * dtype.itemsize if maxval == 65535 else w * h
    payload = raw[offset:offset + n]
    if len(payload) != n:
        raise ValueError(f"{path}: expected {n} raster bytes, got {len(payload)}")
    rows = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    pix = rows.T.astype(np.float64) / maxval
    if spacing is None:
        meta_path = Path(str(path) + ".meta")
        if meta_path.exists():
            spacing = float(read_keyvalue(meta_path)["spacing_mm"])
        else:
            spacing = 1.0
    return GrayImage(pix, spacing)


# ---------------------------------------------------------------- DSA sequences


def read_sequence_meta(path) -> dict[str, str]:
    return read_keyvalue(path)


def load_dsa_sequence(directory) -> DsaSequence:
    """Load a directory of PGM frames plus a ``sequence.meta`` sidecar.

    Frames are ordered by filename. The sidecar must define pixel_spacing_mm
    and magnification; rot_z_deg / rot_y_deg are optional gantry angles.
    """
    directory = Path(directory)
    meta = read_keyvalue(directory / "sequence.meta")
    pixel_spacing = float(meta["pixel_spacing_mm"])
    frame_paths = sorted(directory.glob("*.pgm"))
    if not frame_paths:
        raise FileNotFoundError(f"no .pgm frames in {directory}")
    frames = [read_pgm(p, spacing=pixel_spacing) for p in frame_paths]
    gantry = None
    if "rot_z_deg" in meta and "rot_y_deg" in meta:
        gantry = (float(meta["rot_z_deg"]), float(meta["rot_y_deg"]))
    return DsaSequence(
        frames=frames,
        pixel_spacing=pixel_spacing,
        magnification=float(meta["magnification"]),
        gantry=gantry,
    )


def min_ip_from_paths(paths, spacing: float) -> GrayImage:
    """Streaming temporal minimum over PGM frames, one frame in memory at a time."""
    return GrayImage(min_ip_pixels(read_pgm(p, spacing=spacing).pixels for p in paths), spacing)
