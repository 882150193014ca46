"""Measurement model ``T = S @ P + n`` with seeded Gaussian noise.

SNR convention: ``snr_db = 10 log10(pixel_power / sigma**2)`` where
``pixel_power`` is the mean squared pixel value of the object and
``sigma**2`` the per-measurement noise variance. ``+inf`` means noiseless;
``-inf`` means the signal is lost entirely: the output is zero-mean
Gaussian noise with standard deviation ``max(std(T), sqrt(pixel_power))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .provenance import strip_header
from .rng import generator
from .sensing import SensingMatrix


@dataclass(frozen=True, eq=False)
class Image:
    pixels: np.ndarray
    label: str | None = None

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError("image pixels must be 2-D")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def p(self) -> int:
        return self.pixels.shape[0]

    @property
    def q(self) -> int:
        return self.pixels.shape[1]

    @property
    def n(self) -> int:
        return self.pixels.size

    def flat(self) -> np.ndarray:
        return self.pixels.ravel()

    @classmethod
    def from_flat(cls, values, p: int, q: int, label=None) -> "Image":
        return cls(np.asarray(values, dtype=np.float64).reshape(p, q), label)


@dataclass(frozen=True, eq=False)
class MeasurementVector:
    values: np.ndarray
    snr_db: float | None = None
    seed: int | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    seed: int

    def __post_init__(self):
        if math.isnan(self.snr_db):
            raise ValueError("snr_db must not be NaN")


def measure(s: SensingMatrix, img: Image) -> MeasurementVector:
    if s.cols != img.n:
        raise ValueError(f"sensing matrix has {s.cols} columns, image has {img.n} pixels")
    return MeasurementVector(s.as_float() @ img.flat())


def pixel_power(img: Image) -> float:
    return float(np.mean(img.pixels**2))


def noise_sigma(snr_db: float, power: float) -> float:
    return math.sqrt(power * 10.0 ** (-snr_db / 10.0))


def add_noise(t: MeasurementVector, spec: NoiseSpec, pixel_power: float) -> MeasurementVector:
    """Add i.i.d. N(0, pixel_power * 10**(-snr_db/10)) to every measurement.

    The noise for a given ``(seed, L)`` is fixed: it is the first ``L``
    draws of a Philox stream keyed by ``seed``.
    """
    if not pixel_power > 0:
        raise ValueError(f"pixel_power must be positive, got {pixel_power}")
    if spec.snr_db == math.inf:
        return MeasurementVector(t.values, spec.snr_db, spec.seed)
    z = generator(spec.seed).standard_normal(len(t))
    if spec.snr_db == -math.inf:
        # no signal survives: report noise alone at the signal's own scale
        scale = max(float(np.std(t.values)), math.sqrt(pixel_power))
        return MeasurementVector(scale * z, spec.snr_db, spec.seed)
    return MeasurementVector(t.values + noise_sigma(spec.snr_db, pixel_power) * z, spec.snr_db, spec.seed)


def save_measurements(t: MeasurementVector, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# L={len(t)} snr_db={t.snr_db} seed={t.seed}\n")
        fh.write("value\n")
        for v in t.values:
            fh.write(f"{float(v)!r}\n")


def load_measurements(path) -> MeasurementVector:
    lines = strip_header(Path(path).read_text().splitlines())
    meta = dict(tok.split("=", 1) for tok in lines[0].lstrip("# ").split())
    vals = [float(x) for x in lines[2:] if x.strip()]
    if len(vals) != int(meta["L"]):
        raise ValueError("measurement file length does not match header")
    snr = None if meta["snr_db"] == "None" else float(meta["snr_db"])
    seed = None if meta["seed"] == "None" else int(meta["seed"])
    return MeasurementVector(np.array(vals), snr, seed)
