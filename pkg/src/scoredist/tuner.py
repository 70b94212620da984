"""Score-driven grid search over enhancement-operator parameters.

An enhancement operator (a denoiser, a tone mapper) exposes a few knobs;
the tuner applies the operator at every setting of a parameter grid,
scores each candidate with a quality model by averaging the predicted
mean score over random crops, and returns the argmax setting. Crop
offsets are shared across settings so candidates are compared on
identical views and the argmax is deterministic.

The operators here are simple stand-ins with the parameter surfaces that
matter for tuning: additive white Gaussian noise (for building test
inputs), separable Gaussian smoothing with one spatial parameter, and a
detail / shadow / brightness tone adjustment.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import convolve1d

from .distributions import ScoreDistribution
from .images import ImageTensor, random_crop

Scorer = Callable[[ImageTensor], ScoreDistribution]


def add_awgn(img: ImageTensor, sigma: float, seed: int) -> ImageTensor:
    """Add white Gaussian noise with std `sigma` in 8-bit units, clamped.

    Per-pixel independent draws with std sigma/255 in [0, 1] units;
    deterministic for a fixed seed.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    noisy = img.data + rng.normal(0.0, sigma / 255.0, size=img.data.shape)
    return ImageTensor(img.height, img.width, img.channels, np.clip(noisy, 0.0, 1.0))


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def denoise(img: ImageTensor, spatial_sigma: float) -> ImageTensor:
    """Separable Gaussian smoothing with kernel std `spatial_sigma` pixels.

    The kernel is truncated at 3 sigma and renormalized, so constant
    images pass through unchanged; sigma 0 is the identity. Smoothing is
    an average of [0, 1] values, so the final clip only guards float
    round-off.
    """
    if spatial_sigma < 0:
        raise ValueError("spatial_sigma must be nonnegative")
    if spatial_sigma == 0.0:
        return img
    kernel = _gaussian_kernel(spatial_sigma)
    out = convolve1d(img.data, kernel, axis=0, mode="reflect")
    out = convolve1d(out, kernel, axis=1, mode="reflect")
    return ImageTensor(img.height, img.width, img.channels, np.clip(out, 0.0, 1.0))


# Smoothing scale used by the detail (unsharp) stage of tone_adjust.
DETAIL_BASE_SIGMA = 2.0


def tone_adjust(img: ImageTensor, detail: float, shadow: float, brightness: float) -> ImageTensor:
    """Detail boost, shadow lift, and brightness offset, in that order.

    detail >= 0 scales an unsharp boost img + detail * (img - smoothed);
    shadow in [-1, 1] applies a gamma-style curve below mid-gray (positive
    lifts, negative deepens); brightness in [-1, 1] is an additive offset.
    All-zero parameters are the identity; output is clamped to [0, 1].
    """
    if detail < 0:
        raise ValueError("detail must be nonnegative")
    if not (-1.0 <= shadow <= 1.0):
        raise ValueError("shadow must lie in [-1, 1]")
    if not (-1.0 <= brightness <= 1.0):
        raise ValueError("brightness must lie in [-1, 1]")
    out = img.data
    if detail > 0:
        base = denoise(img, DETAIL_BASE_SIGMA).data
        out = np.clip(out + detail * (out - base), 0.0, 1.0)
    if shadow != 0.0:
        gamma = 1.0 - 0.75 * shadow
        weight = np.clip(1.0 - out / 0.5, 0.0, 1.0)  # 1 at black, 0 from mid-gray up
        lifted = 0.5 * np.power(np.clip(out, 0.0, 1.0) / 0.5, gamma)
        out = (1.0 - weight) * out + weight * lifted
    if brightness != 0.0:
        out = out + brightness
    return ImageTensor(img.height, img.width, img.channels, np.clip(out, 0.0, 1.0))


@dataclass(frozen=True)
class OperatorGrid:
    """Named operator plus ordered value lists for each parameter axis.

    Settings enumerate in row-major order over the axes: the last axis
    varies fastest. Tie-breaking in `tune` relies on this order.
    """

    name: str
    axes: tuple[tuple[str, tuple[float, ...]], ...]

    def __post_init__(self):
        axes = tuple(
            (str(pname), tuple(float(v) for v in values)) for pname, values in self.axes
        )
        object.__setattr__(self, "axes", axes)
        if not axes:
            raise ValueError("grid needs at least one axis")
        for pname, values in axes:
            if len(values) < 1:
                raise ValueError(f"axis {pname!r} has no values")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError(f"axis {pname!r} values must be strictly increasing")

    def total(self) -> int:
        out = 1
        for _, values in self.axes:
            out *= len(values)
        return out

    def settings(self):
        """Yield one {param: value} dict per grid point, row-major."""
        names = [pname for pname, _ in self.axes]
        for combo in itertools.product(*(values for _, values in self.axes)):
            yield dict(zip(names, combo))


def default_denoise_grid() -> OperatorGrid:
    """Spatial sigma swept from 0.25 to 10.0 in steps of 0.25 (40 settings)."""
    values = tuple(round(0.25 * i, 10) for i in range(1, 41))
    return OperatorGrid("denoise", (("spatial_sigma", values),))


def default_tone_grid() -> OperatorGrid:
    """6 detail x 11 shadow x 11 brightness levels; 726 settings total."""
    detail = tuple(round(0.4 * i, 10) for i in range(6))
    shadow = tuple(round(-0.5 + 0.1 * i, 10) for i in range(11))
    brightness = tuple(round(-0.25 + 0.05 * i, 10) for i in range(11))
    return OperatorGrid(
        "tone", (("detail", detail), ("shadow", shadow), ("brightness", brightness))
    )


def apply_operator(name: str, img: ImageTensor, setting: dict) -> ImageTensor:
    if name == "denoise":
        return denoise(img, **setting)
    if name == "tone":
        return tone_adjust(img, **setting)
    raise ValueError(f"unknown operator {name!r}")


@dataclass(frozen=True)
class TuneProtocol:
    """How candidates are scored: crop count and size, seed, and the scorer."""

    scorer: Scorer
    crop_size: int
    n_crops: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_crops < 1:
            raise ValueError("n_crops must be positive")
        if self.crop_size < 1:
            raise ValueError("crop_size must be positive")


def crop_averaged_score(img: ImageTensor, protocol: TuneProtocol) -> float:
    """Predicted mean score averaged over seeded random crops.

    Offsets derive only from the protocol seed, so calling this with the
    same protocol on images of equal size samples identical crop windows.
    """
    if protocol.crop_size > img.height or protocol.crop_size > img.width:
        raise ValueError(
            f"crop size {protocol.crop_size} exceeds image {img.height}x{img.width}"
        )
    rng = np.random.default_rng(protocol.seed)
    total = 0.0
    for _ in range(protocol.n_crops):
        view = random_crop(img, protocol.crop_size, rng)
        total += protocol.scorer(view).mean()
    return total / protocol.n_crops


@dataclass(frozen=True)
class TuneResult:
    """Grid-search outcome: per-setting scores and the (tie-broken) argmax."""

    operator: str
    best_setting: dict
    best_score: float
    score_table: tuple[tuple[dict, float], ...]

    def to_text(self) -> str:
        names = list(self.best_setting.keys())
        header = "  ".join(f"{n:>14}" for n in names) + "  " + f"{'score':>12}"
        lines = [f"operator: {self.operator}", header]
        for setting, score in self.score_table:
            row = "  ".join(f"{setting[n]:>14.6g}" for n in names)
            lines.append(f"{row}  {score:>12.6f}")
        best = ", ".join(f"{n}={self.best_setting[n]:.6g}" for n in names)
        lines.append(f"best: {best}  score={self.best_score:.6f}")
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {
            "operator": self.operator,
            "best_setting": self.best_setting,
            "best_score": round(self.best_score, 6),
            "score_table": [
                {"setting": setting, "score": round(score, 6)}
                for setting, score in self.score_table
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


class OperatorFailure(RuntimeError):
    """An operator raised at one grid setting; carries the setting."""

    def __init__(self, setting: dict, cause: Exception):
        super().__init__(f"operator failed at setting {setting}: {cause}")
        self.setting = setting


def tune(img: ImageTensor, grid: OperatorGrid, protocol: TuneProtocol) -> TuneResult:
    """Apply the operator at every grid setting and return the argmax.

    All candidates are scored on crops at identical offsets (the protocol
    seed is reused per setting). Ties keep the earliest setting in
    enumeration order.
    """
    best_setting = None
    best_score = -math.inf
    table: list[tuple[dict, float]] = []
    for setting in grid.settings():
        try:
            candidate = apply_operator(grid.name, img, setting)
        except Exception as exc:
            raise OperatorFailure(setting, exc) from exc
        score = crop_averaged_score(candidate, protocol)
        table.append((setting, score))
        if score > best_score:
            best_score = score
            best_setting = setting
    return TuneResult(grid.name, best_setting, best_score, tuple(table))
