"""Corpus ingestion: manifests, dynamic-range normalization, resampling.

Images are decoded from grayscale PNG/PGM/JPEG (color inputs are reduced to
Rec. 601 luminance), renormalized so the full dynamic range maps onto
[0, 255], and resampled to a fixed square analysis resolution. Downsampling
uses exact area (box) averaging; upsampling falls back to bilinear with a
warning. All per-image operations are pure, so corpora can be processed
concurrently.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

DEFAULT_SIDE = 256

_REC601 = np.array([0.299, 0.587, 0.114])


class CorpusLoadError(RuntimeError):
    """Raised when a manifest entry cannot be read or decoded."""


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int | None = None
    labeler_a: str = ""
    labeler_b: str = ""


@dataclass
class CorpusManifest:
    corpus_id: str
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError(f"manifest {self.corpus_id!r} has duplicate paths")


def read_manifest(path: str | Path, corpus_id: str | None = None) -> CorpusManifest:
    """Parse a UTF-8 CSV manifest with header path,label,labeler_a,labeler_b."""
    path = Path(path)
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "path" not in reader.fieldnames:
            raise CorpusLoadError(f"{path}: manifest missing 'path' column")
        for row in reader:
            label_s = (row.get("label") or "").strip()
            if label_s == "":
                label = None
            elif label_s in ("0", "1"):
                label = int(label_s)
            else:
                raise CorpusLoadError(f"{path}: label must be 0 or 1, got {label_s!r}")
            entries.append(
                ManifestEntry(
                    path=row["path"],
                    label=label,
                    labeler_a=(row.get("labeler_a") or "").strip(),
                    labeler_b=(row.get("labeler_b") or "").strip(),
                )
            )
    return CorpusManifest(corpus_id=corpus_id or path.stem, entries=entries)


def load_image(path: str | Path) -> np.ndarray:
    """Decode one image to a 2D float array (luminance for color inputs)."""
    try:
        with Image.open(path) as im:
            if im.mode in ("RGB", "RGBA", "P", "CMYK"):
                arr = np.asarray(im.convert("RGB"), dtype=float) @ _REC601
            else:
                arr = np.asarray(im, dtype=float)
    except FileNotFoundError:
        raise CorpusLoadError(f"cannot read image: {path}") from None
    except Exception as exc:
        raise CorpusLoadError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim != 2:
        raise CorpusLoadError(f"{path}: expected a 2D grayscale image, got shape {arr.shape}")
    if arr.size == 0:
        raise CorpusLoadError(f"{path}: empty image")
    return arr


def normalize_dynamic_range(img: np.ndarray) -> np.ndarray:
    """Map the pixel range onto [0, 255]: subtract min, rescale, truncate.

    A constant image has no range to stretch; it maps to all zeros and a
    RuntimeWarning is emitted instead of aborting the corpus run.
    """
    a = np.asarray(img, dtype=float)
    if a.size == 0:
        raise ValueError("empty image")
    lo = a.min()
    hi = a.max()
    if hi == lo:
        warnings.warn("degenerate dynamic range (constant image); output is all zeros", RuntimeWarning)
        return np.zeros_like(a)
    # Multiply before dividing so exact-integer results stay exact.
    return np.floor((a - lo) * 255.0 / (hi - lo))


def _area_weights(src: int, dst: int) -> np.ndarray:
    """Row-stochastic matrix averaging src cells into dst equal-width cells."""
    w = np.zeros((dst, src))
    scale = src / dst
    for k in range(dst):
        lo = k * scale
        hi = (k + 1) * scale
        i0 = int(np.floor(lo))
        i1 = min(int(np.ceil(hi)), src)
        for i in range(i0, i1):
            w[k, i] = min(hi, i + 1) - max(lo, i)
    return w / scale


def _linear_weights(src: int, dst: int) -> np.ndarray:
    """Bilinear interpolation matrix with pixel-center alignment."""
    w = np.zeros((dst, src))
    pos = (np.arange(dst) + 0.5) * src / dst - 0.5
    pos = np.clip(pos, 0.0, src - 1.0)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, src - 1)
    frac = pos - i0
    for k in range(dst):
        w[k, i0[k]] += 1.0 - frac[k]
        w[k, i1[k]] += frac[k]
    return w


def resample_image(img: np.ndarray, side: int = DEFAULT_SIDE) -> np.ndarray:
    """Resample to side x side: box averaging down, bilinear up (with warning)."""
    if side < 2:
        raise ValueError("side must be >= 2")
    a = np.asarray(img, dtype=float)
    h, w = a.shape
    if h == side and w == side:
        return a.copy()
    if side > h or side > w:
        warnings.warn(f"upsampling {h}x{w} -> {side}x{side} (bilinear)", RuntimeWarning)
        wr = _linear_weights(h, side)
        wc = _linear_weights(w, side)
    else:
        wr = _area_weights(h, side)
        wc = _area_weights(w, side)
    return wr @ a @ wc.T


def _jpeg95_roundtrip(img: np.ndarray) -> np.ndarray:
    """Re-encode an 8-bit image through JPEG quality 95 and decode it back."""
    pil = Image.fromarray(np.clip(img, 0, 255).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    pil.save(buf, format="JPEG", quality=95)
    buf.seek(0)
    with Image.open(buf) as back:
        return np.asarray(back, dtype=float)


def prepare_image(
    img: np.ndarray,
    side: int = DEFAULT_SIDE,
    jpeg95: bool = False,
    quantize8: bool = False,
) -> np.ndarray:
    """Normalize then resample a decoded image; optional storage emulation.

    quantize8 truncates the result to 8-bit integers; jpeg95 additionally
    round-trips through JPEG at quality 95 (implies 8-bit quantization).
    """
    out = resample_image(normalize_dynamic_range(img), side)
    if jpeg95:
        out = _jpeg95_roundtrip(out)
    elif quantize8:
        out = np.floor(np.clip(out, 0, 255))
    return out


def load_corpus(
    manifest: CorpusManifest,
    side: int = DEFAULT_SIDE,
    jpeg95: bool = False,
    quantize8: bool = False,
    skip_bad: bool = False,
) -> tuple[list[np.ndarray], list[ManifestEntry], list[str]]:
    """Load every manifest entry, normalized and resampled, in manifest order.

    Returns (images, entries-kept, error-messages). Without skip_bad the
    first unreadable entry raises CorpusLoadError naming its path.
    """
    images, kept, errors = [], [], []
    for entry in manifest.entries:
        try:
            raw = load_image(entry.path)
            images.append(prepare_image(raw, side=side, jpeg95=jpeg95, quantize8=quantize8))
            kept.append(entry)
        except CorpusLoadError as exc:
            if not skip_bad:
                raise
            errors.append(str(exc))
    return images, kept, errors
