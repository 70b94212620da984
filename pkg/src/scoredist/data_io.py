"""Dataset ingestion, train/test splitting, and synthetic data generation.

Two on-disk label formats, both whitespace-delimited ASCII with one record
per line and `#` comment lines:

  counts file:  <id> <c1> ... <c10>     nonnegative integer rating counts,
                                        normalized onto the 1..10 scale
  mos file:     <id> <mean> <std>       moment pairs, expanded to full
                                        distributions by max-entropy fitting

Images referenced by id resolve inside an images directory as binary PGM
(P5) or PPM (P6) files. A *dataset directory* bundles one labels file
(`labels_counts.txt` or `labels_mos.txt`) with an `images/` subdirectory;
`generate_synthetic` plus `save_dataset_dir` produce that layout and
`load_dataset_dir` reads it back bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .distributions import BucketScale, ScoreDistribution, ava_scale
from .errors import DataError, InfeasibleMomentsError
from .images import ImageTensor, bilinear_resize, read_image, write_image
from .maxent import MomentTarget, fit_maxent
from .tuner import add_awgn, denoise

SOURCE_TAGS = ("native_counts", "maxent_fitted", "synthetic")

# Level-to-moment map for the synthetic distortion dataset: means run
# linearly from 8.0 (mildest) down to 2.0 (worst); extreme levels carry a
# wider std than mid levels, echoing how extreme ratings spread more.
SYNTH_MEAN_BEST = 8.0
SYNTH_MEAN_WORST = 2.0
SYNTH_STD_MID = 1.0
SYNTH_STD_EXTREME = 1.4


@dataclass(frozen=True)
class DatasetRecord:
    """One example: an image (by path or in memory) and its ground truth."""

    image_ref: str | ImageTensor
    gt: ScoreDistribution
    source_tag: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source_tag not in SOURCE_TAGS:
            raise ValueError(f"source_tag must be one of {SOURCE_TAGS}")

    def record_id(self) -> str:
        if isinstance(self.image_ref, str):
            return self.meta.get("id", self.image_ref)
        return self.meta.get("id", "<embedded>")


@dataclass(frozen=True)
class SplitSpec:
    """Seeded train/test partition with a test fraction."""

    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.test_fraction < 1.0):
            raise ValueError("test_fraction must lie strictly between 0 and 1")


def load_record_image(record: DatasetRecord) -> ImageTensor:
    """Pixels for a record, reading from disk when referenced by path."""
    if isinstance(record.image_ref, ImageTensor):
        return record.image_ref
    return read_image(record.image_ref)


def _data_lines(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, stripped.split()


def _resolve_image(images_dir: Path, image_id: str, path: Path, lineno: int) -> str:
    for candidate in (image_id, image_id + ".pgm", image_id + ".ppm"):
        p = images_dir / candidate
        if p.is_file():
            return str(p)
    raise DataError(f"{path}:{lineno}: no image for id {image_id!r} under {images_dir}")


def load_counts_file(path: str | Path, images_dir: str | Path | None = None) -> list[DatasetRecord]:
    """Read rating-count rows onto the 1..10 scale.

    Each row is an image id followed by 10 nonnegative integer counts.
    Rows whose counts sum to zero are rejected with their line number, as
    are malformed fields. When `images_dir` is given, every id must
    resolve to an image file there.
    """
    path = Path(path)
    scale = ava_scale()
    n = len(scale)
    records = []
    for lineno, fields in _data_lines(path):
        if len(fields) != 1 + n:
            raise DataError(
                f"{path}:{lineno}: expected id plus {n} counts, got {len(fields)} fields"
            )
        image_id = fields[0]
        counts = []
        for col, tok in enumerate(fields[1:], start=2):
            try:
                value = int(tok)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: field {col}: {tok!r} is not an integer count"
                ) from None
            if value < 0:
                raise DataError(f"{path}:{lineno}: field {col}: negative count {value}")
            counts.append(value)
        total = sum(counts)
        if total == 0:
            raise DataError(f"{path}:{lineno}: zero-count row for id {image_id!r}")
        ref: str = image_id
        if images_dir is not None:
            ref = _resolve_image(Path(images_dir), image_id, path, lineno)
        records.append(
            DatasetRecord(
                image_ref=ref,
                gt=ScoreDistribution.from_counts(scale, counts),
                source_tag="native_counts",
                meta={"id": image_id, "count_total": total},
            )
        )
    return records


def save_counts_file(records: Sequence[DatasetRecord], path: str | Path) -> None:
    """Write records back as integer count rows.

    Counts are the record mass scaled by its remembered `count_total`
    (default 100), so a loaded counts file round-trips exactly.
    """
    lines = []
    for rec in records:
        total = int(rec.meta.get("count_total", 100))
        counts = [int(round(m * total)) for m in rec.gt.mass]
        lines.append(" ".join([rec.record_id(), *map(str, counts)]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_mos_file(
    path: str | Path,
    scale: BucketScale,
    images_dir: str | Path | None = None,
    rescale_from: tuple[float, float] | None = None,
) -> list[DatasetRecord]:
    """Read (id, mean, std) rows and fit each to a full distribution.

    `rescale_from=(lo, hi)` affinely maps source moments onto the target
    scale range first (for sources that publish scores on a wider range).
    Rows whose moments no distribution on the scale can attain are
    rejected with their line number.
    """
    path = Path(path)
    records = []
    for lineno, fields in _data_lines(path):
        if len(fields) != 3:
            raise DataError(f"{path}:{lineno}: expected 'id mean std', got {len(fields)} fields")
        image_id = fields[0]
        try:
            mean, std = float(fields[1]), float(fields[2])
        except ValueError:
            raise DataError(f"{path}:{lineno}: mean/std must be decimal numbers") from None
        if rescale_from is not None:
            lo, hi = rescale_from
            if hi <= lo:
                raise ValueError("rescale_from must be an increasing (lo, hi) pair")
            span = (scale.values[-1] - scale.values[0]) / (hi - lo)
            mean = scale.values[0] + (mean - lo) * span
            std = std * span
        try:
            solution = fit_maxent(MomentTarget(mean, std, scale))
        except (InfeasibleMomentsError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: id {image_id!r}: {exc}") from exc
        ref: str = image_id
        if images_dir is not None:
            ref = _resolve_image(Path(images_dir), image_id, path, lineno)
        records.append(
            DatasetRecord(
                image_ref=ref,
                gt=solution.dist,
                source_tag="maxent_fitted",
                meta={"id": image_id, "mos_mean": mean, "mos_std": std},
            )
        )
    return records


def save_mos_file(records: Sequence[DatasetRecord], path: str | Path) -> None:
    """Write (id, mean, std) rows, preferring remembered targets.

    Records loaded or generated from moment pairs carry them in meta;
    otherwise the distribution's own moments are written. Floats use
    shortest round-trip formatting, so reloading reproduces identical
    moments and, through the deterministic fit, identical distributions.
    """
    lines = []
    for rec in records:
        mean = rec.meta.get("mos_mean", rec.gt.mean())
        std = rec.meta.get("mos_std", rec.gt.std_dev())
        lines.append(f"{rec.record_id()} {mean!r} {std!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def split(
    records: Sequence[DatasetRecord], spec: SplitSpec
) -> tuple[list[DatasetRecord], list[DatasetRecord]]:
    """Disjoint, exhaustive, seeded train/test partition.

    Test size is round(n * test_fraction) (half away from zero). The same
    spec on the same records always produces the same partition.
    """
    n = len(records)
    if n < 2:
        raise ValueError("need at least 2 records to split")
    n_test = int(n * spec.test_fraction + 0.5)
    order = np.random.default_rng(spec.seed).permutation(n)
    test = [records[i] for i in order[:n_test]]
    train = [records[i] for i in order[n_test:]]
    return train, test


def synth_level_moments(level: int, levels: int) -> tuple[float, float]:
    """Target (mean, std) for a distortion level in 1..levels."""
    frac = (level - 1) / (levels - 1)
    mean = SYNTH_MEAN_BEST + (SYNTH_MEAN_WORST - SYNTH_MEAN_BEST) * frac
    std = SYNTH_STD_EXTREME if level in (1, levels) else SYNTH_STD_MID
    return mean, std


def _base_image(rng: np.random.Generator, size: int) -> ImageTensor:
    """Random smooth gradient plus a few noisy texture patches."""
    coarse = rng.uniform(0.2, 0.8, size=(5, 5, 1))
    img = bilinear_resize(ImageTensor(5, 5, 1, coarse), size, size)
    data = img.data.copy()
    for _ in range(int(rng.integers(2, 5))):
        ph = int(rng.integers(size // 8, size // 2))
        pw = int(rng.integers(size // 8, size // 2))
        top = int(rng.integers(0, size - ph + 1))
        left = int(rng.integers(0, size - pw + 1))
        data[top : top + ph, left : left + pw, 0] += rng.normal(0.0, 0.12, size=(ph, pw))
    return ImageTensor(size, size, 1, np.clip(data, 0.0, 1.0))


def generate_synthetic(
    n_base: int, levels: int, seed: int, size: int = 48
) -> list[DatasetRecord]:
    """Procedural distortion dataset: n_base images at `levels` severities.

    Each base image is degraded with progressively stronger blur plus
    noise; ground truth comes from `synth_level_moments` fitted to full
    distributions, so within a base image higher levels have strictly
    lower means. Bit-identical for a fixed seed.
    """
    if levels < 2:
        raise ValueError("need at least 2 distortion levels")
    if n_base < 1:
        raise ValueError("need at least 1 base image")
    rng = np.random.default_rng(seed)
    scale = ava_scale()
    gt_by_level = {}
    for level in range(1, levels + 1):
        mean, std = synth_level_moments(level, levels)
        gt_by_level[level] = fit_maxent(MomentTarget(mean, std, scale)).dist
    records = []
    for b in range(n_base):
        base = _base_image(rng, size)
        for level in range(1, levels + 1):
            frac = (level - 1) / (levels - 1)
            blur_sigma = 2.0 * frac
            noise_sigma = 2.0 + 28.0 * frac
            img = denoise(base, blur_sigma) if blur_sigma > 0 else base
            img = add_awgn(img, noise_sigma, seed=int(rng.integers(2**31)))
            mean, std = synth_level_moments(level, levels)
            records.append(
                DatasetRecord(
                    image_ref=img,
                    gt=gt_by_level[level],
                    source_tag="synthetic",
                    meta={
                        "id": f"b{b:04d}_l{level}",
                        "base": b,
                        "level": level,
                        "mos_mean": mean,
                        "mos_std": std,
                    },
                )
            )
    return records


def save_dataset_dir(records: Sequence[DatasetRecord], out_dir: str | Path) -> Path:
    """Write records as a dataset directory (images/ plus labels_mos.txt)."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    for rec in records:
        img = load_record_image(rec)
        suffix = ".pgm" if img.channels == 1 else ".ppm"
        write_image(img, images_dir / (rec.record_id() + suffix))
    save_mos_file(records, out_dir / "labels_mos.txt")
    return out_dir


def load_dataset_dir(
    dir_path: str | Path, scale: BucketScale | None = None
) -> list[DatasetRecord]:
    """Read a dataset directory written by `save_dataset_dir`.

    Counts labels always live on the 1..10 scale; mos labels default to it
    unless a scale is passed.
    """
    dir_path = Path(dir_path)
    images_dir = dir_path / "images"
    counts = dir_path / "labels_counts.txt"
    mos = dir_path / "labels_mos.txt"
    if counts.is_file():
        return load_counts_file(counts, images_dir=images_dir)
    if mos.is_file():
        return load_mos_file(mos, scale or ava_scale(), images_dir=images_dir)
    raise DataError(f"{dir_path}: no labels_counts.txt or labels_mos.txt found")
