"""Image data pipeline: synthetic generation, bicubic resampling, patches,
augmentation, PSNR and PNM file I/O.

Images are float arrays in [0, 1] shaped (3, H, W).  The synthetic generator
stands in for a photographic training set at desk scale: oriented sinusoids,
gradients and sharp-edged rectangles give the images recoverable
high-frequency content.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError, RangeError, ShapeError

BICUBIC_A = -0.5


@dataclass(frozen=True)
class ImagePair:
    hr: np.ndarray
    lr: np.ndarray
    tag: str


# ---------------------------------------------------------------------------
# bicubic resampling

def _bicubic_kernel(u: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    u = np.abs(u)
    u2, u3 = u * u, u * u * u
    near = (a + 2) * u3 - (a + 3) * u2 + 1
    far = a * u3 - 5 * a * u2 + 8 * a * u - 4 * a
    return np.where(u <= 1, near, np.where(u < 2, far, 0.0))


def downsample_taps(s: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer tap offsets and weights for s-fold bicubic decimation.

    Output sample i sits at input position i*s + (s-1)/2; the kernel is the
    bicubic widened by s, so its taps sum to 1 at every phase.
    """
    c = (s - 1) / 2.0
    lo = int(np.ceil(c - 2 * s + 1e-9))
    hi = int(np.floor(c + 2 * s - 1e-9))
    offsets = np.arange(lo, hi + 1)
    weights = _bicubic_kernel((offsets - c) / s) / s
    return offsets, weights


def _filter_decimate_axis(x: np.ndarray, s: int, axis: int) -> np.ndarray:
    offsets, weights = downsample_taps(s)
    pad_l = int(-offsets[0])
    pad_r = int(offsets[-1] - (s - 1))
    pad = [(0, 0)] * x.ndim
    pad[axis] = (pad_l, max(0, pad_r))
    xp = np.pad(x, pad, mode="symmetric")
    n_out = x.shape[axis] // s
    acc = np.zeros(x.shape[:axis] + (n_out,) + x.shape[axis + 1:], dtype=np.float64)
    for off, w in zip(offsets, weights):
        start = off + pad_l
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(start, start + n_out * s, s)
        acc += w * xp[tuple(idx)]
    return acc


def downsample_bicubic(hr: np.ndarray, s: int) -> np.ndarray:
    """Separable bicubic (a = -0.5) anti-aliased filter plus s-fold decimation."""
    if s == 1:
        return np.asarray(hr, dtype=np.float64).copy()
    hr = np.asarray(hr, dtype=np.float64)
    if hr.shape[-1] % s or hr.shape[-2] % s:
        raise ShapeError(f"spatial dims {hr.shape[-2:]} not divisible by scale {s}")
    out = _filter_decimate_axis(hr, s, hr.ndim - 2)
    out = _filter_decimate_axis(out, s, out.ndim - 1)
    return np.clip(out, 0.0, 1.0)


def _upsample_axis(x: np.ndarray, s: int, axis: int) -> np.ndarray:
    n_in = x.shape[axis]
    pad = [(0, 0)] * x.ndim
    pad[axis] = (2, 2)
    xp = np.pad(x, pad, mode="symmetric")
    out_shape = list(x.shape)
    out_shape[axis] = n_in * s
    out = np.zeros(out_shape, dtype=np.float64)
    for r in range(s):
        f = (r + 0.5) / s - 0.5
        base = int(np.floor(f))
        taps = [(base + m, _bicubic_kernel(np.asarray(f - (base + m))).item())
                for m in range(-1, 3)]
        acc = None
        for off, w in taps:
            idx = [slice(None)] * x.ndim
            idx[axis] = slice(2 + off, 2 + off + n_in)
            term = w * xp[tuple(idx)]
            acc = term if acc is None else acc + term
        dest = [slice(None)] * x.ndim
        dest[axis] = slice(r, None, s)
        out[tuple(dest)] = acc
    return out


def upsample_bicubic(lr: np.ndarray, s: int) -> np.ndarray:
    """Bicubic interpolation to s times the spatial size (the classic baseline)."""
    if s == 1:
        return np.asarray(lr, dtype=np.float64).copy()
    lr = np.asarray(lr, dtype=np.float64)
    out = _upsample_axis(lr, s, lr.ndim - 2)
    out = _upsample_axis(out, s, out.ndim - 1)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# synthetic images

def synth_generate(count: int, size: int, seed: int) -> list[np.ndarray]:
    """Deterministic procedural RGB images with sharp edges and texture."""
    rng = np.random.default_rng(seed)
    images = []
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    for _ in range(count):
        img = np.empty((3, size, size), dtype=np.float64)
        # smooth base gradient per channel
        theta = rng.uniform(0, 2 * np.pi)
        ramp = (np.cos(theta) * xx + np.sin(theta) * yy) / max(1, size - 1)
        for ch in range(3):
            lo, hi = sorted(rng.uniform(0.15, 0.85, size=2))
            img[ch] = lo + (hi - lo) * ramp
        # oriented sinusoids, biased toward high spatial frequency
        for _ in range(rng.integers(2, 5)):
            theta = rng.uniform(0, 2 * np.pi)
            freq = rng.uniform(0.4, 1.2)  # rad / pixel
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.1, 0.25)
            wave = amp * np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
            img += wave * rng.uniform(0.5, 1.0, size=(3, 1, 1))
        # sharp-edged rectangles
        for _ in range(rng.integers(3, 7)):
            h = int(rng.integers(max(2, size // 8), max(3, size // 2)))
            w = int(rng.integers(max(2, size // 8), max(3, size // 2)))
            top = int(rng.integers(0, size - h + 1))
            left = int(rng.integers(0, size - w + 1))
            color = rng.uniform(0, 1, size=3)
            img[:, top:top + h, left:left + w] = color[:, None, None]
        images.append(np.clip(img, 0.0, 1.0))
    return images


def make_pairs(images, scale: int, tag_prefix: str = "synthetic") -> list[ImagePair]:
    return [
        ImagePair(hr=hr, lr=downsample_bicubic(hr, scale), tag=f"{tag_prefix}:{i}")
        for i, hr in enumerate(images)
    ]


# ---------------------------------------------------------------------------
# patches and augmentation

def extract_patches(pairs: list[ImagePair], patch: int, count: int, seed: int):
    """Aligned random (lr, hr) patch pairs; HR origin is scale * LR origin."""
    if not pairs:
        raise DataError("no image pairs to extract patches from")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        pair = pairs[rng.integers(len(pairs))]
        lh, lw = pair.lr.shape[-2:]
        if patch > lh or patch > lw:
            raise RangeError(f"patch {patch} larger than LR image {lh}x{lw}")
        s = pair.hr.shape[-1] // pair.lr.shape[-1]
        top = int(rng.integers(0, lh - patch + 1))
        left = int(rng.integers(0, lw - patch + 1))
        lr = pair.lr[:, top:top + patch, left:left + patch]
        hr = pair.hr[:, s * top:s * (top + patch), s * left:s * (left + patch)]
        out.append((lr, hr))
    return out


def dihedral_transform(img: np.ndarray, rot: int, flip: bool) -> np.ndarray:
    if rot and img.shape[-1] != img.shape[-2]:
        raise ShapeError("rotation requires square patches")
    out = img
    if flip:
        out = out[..., ::-1]
    if rot:
        out = np.rot90(out, k=rot, axes=(-2, -1))
    return np.ascontiguousarray(out)


def augment(lr: np.ndarray, hr: np.ndarray, rng: np.random.Generator):
    """Apply one random element of the 8-element dihedral group to both images."""
    rot = int(rng.integers(4))
    flip = bool(rng.integers(2))
    return dihedral_transform(lr, rot, flip), dihedral_transform(hr, rot, flip)


# ---------------------------------------------------------------------------
# metrics

PSNR_CAP_DB = 100.0
_BT601 = np.asarray([0.299, 0.587, 0.114])


def luma(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB image with channels on axis -3."""
    if img.shape[-3] != 3:
        raise ShapeError(f"expected 3 channels on axis -3, got shape {img.shape}")
    return np.tensordot(_BT601, img, axes=([0], [-3]))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Y-channel PSNR in dB for images in [0, 1]; identical inputs cap at 100."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((luma(a) - luma(b)) ** 2))
    if mse <= 0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


# ---------------------------------------------------------------------------
# PNM (binary PGM / PPM) I/O

def store_pnm(path, img: np.ndarray):
    """Write an 8-bit binary PPM (3, H, W) or PGM (H, W) from [0, 1] floats."""
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[0] == 3:
        magic, payload = b"P6", np.moveaxis(img, 0, -1)
    elif img.ndim == 2:
        magic, payload = b"P5", img
    else:
        raise ShapeError(f"cannot store image of shape {img.shape} as PNM")
    data = np.clip(np.rint(payload * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape[0], data.shape[1]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


def _read_token(fh) -> bytes:
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise FormatError("unexpected end of PNM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def load_pnm(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) into [0, 1] floats."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic not in (b"P5", b"P6"):
            raise FormatError(f"{path}: unsupported PNM magic {magic!r} (binary P5/P6 only)")
        w = int(_read_token(fh))
        h = int(_read_token(fh))
        maxval = int(_read_token(fh))
        if maxval != 255:
            raise FormatError(f"{path}: only 8-bit PNM supported, maxval={maxval}")
        channels = 3 if magic == b"P6" else 1
        raw = fh.read(w * h * channels)
        if len(raw) != w * h * channels:
            raise FormatError(f"{path}: truncated pixel data")
    arr = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    if magic == b"P6":
        return np.moveaxis(arr.reshape(h, w, 3), -1, 0)
    return arr.reshape(h, w)


# ---------------------------------------------------------------------------
# dataset sources

def load_directory(root, scale: int) -> list[ImagePair]:
    """Load `hr/*.ppm` (and .pgm promoted to RGB) from a dataset directory."""
    hr_dir = os.path.join(root, "hr")
    if not os.path.isdir(hr_dir):
        raise DataError(f"dataset directory {root!r} has no hr/ subdirectory")
    pairs = []
    for name in sorted(os.listdir(hr_dir)):
        if not name.endswith((".ppm", ".pgm")):
            continue
        path = os.path.join(hr_dir, name)
        img = load_pnm(path)
        if img.ndim == 2:
            img = np.stack([img] * 3)
        hgt, wid = img.shape[-2:]
        img = img[:, :hgt - hgt % scale, :wid - wid % scale]
        pairs.append(ImagePair(hr=img, lr=downsample_bicubic(img, scale), tag=path))
    if not pairs:
        raise DataError(f"no PNM images found under {hr_dir!r}")
    return pairs


def write_manifest(root, pairs: list[ImagePair], scale: int, split: str):
    manifest = {
        "scale": scale,
        "split": split,
        "files": [p.tag for p in pairs],
    }
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def resolve_source(source: str, scale: int, count: int = 24, size: int = 64) -> list[ImagePair]:
    """Parse a CLI data source: ``synthetic:<seed>`` or ``dir:<path>``."""
    kind, _, arg = source.partition(":")
    if kind == "synthetic":
        seed = int(arg) if arg else 0
        return make_pairs(synth_generate(count, size, seed), scale)
    if kind == "dir":
        if not arg or not os.path.isdir(arg):
            raise DataError(f"data directory {arg!r} does not exist (--data dir:<path>)")
        return load_directory(arg, scale)
    raise DataError(f"unknown data source {source!r}; use synthetic:<seed> or dir:<path>")
