"""Periodized orthogonal Daubechies-4 wavelet transform.

The 8-tap db4 pair gives an orthonormal multi-level decomposition:
coefficient energy equals signal energy and reconstruction is exact to
float precision. Periodization keeps every level critically sampled,
which requires the input length to be divisible by 2**levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# db4 scaling filter (reconstruction lowpass); sums to sqrt(2), unit energy.
_DB4 = np.array(
    [
        0.23037781330885523,
        0.7148465705525415,
        0.6308807679295904,
        -0.027983769416983849,
        -0.18703481171888114,
        0.030841381835986965,
        0.032883011666982945,
        -0.010597401784997278,
    ]
)

REC_LO = _DB4
REC_HI = np.array([(-1) ** n * _DB4[len(_DB4) - 1 - n] for n in range(len(_DB4))])
DEC_LO = REC_LO[::-1].copy()
DEC_HI = REC_HI[::-1].copy()


@dataclass
class WaveletPyramid:
    """Multi-level db4 coefficients; details[0] is the finest level."""

    approx: np.ndarray
    details: list[np.ndarray]
    wavelet: str = "db4"
    boundary: str = "periodization"

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def signal_length(self) -> int:
        return 2 * len(self.details[0])

    def energy(self) -> float:
        total = float(np.sum(self.approx**2))
        for d in self.details:
            total += float(np.sum(d**2))
        return total


def _analysis_step(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(x)
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(DEC_LO))[None, :]) % n
    windows = x[idx]
    return windows @ DEC_LO, windows @ DEC_HI


def _synthesis_step(approx: np.ndarray, detail: np.ndarray) -> np.ndarray:
    n = 2 * len(approx)
    idx = (2 * np.arange(len(approx))[:, None] + np.arange(len(REC_LO))[None, :]) % n
    out = np.zeros(n, dtype=np.float64)
    np.add.at(out, idx, approx[:, None] * DEC_LO[None, :])
    np.add.at(out, idx, detail[:, None] * DEC_HI[None, :])
    return out


def dwt_decompose(x: np.ndarray, levels: int) -> WaveletPyramid:
    """Cascade of db4 analysis filtering with dyadic downsampling."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("dwt_decompose expects a 1-D signal")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if len(x) < 2**levels or len(x) % (2**levels):
        raise ValueError(
            f"signal length {len(x)} must be a positive multiple of 2**{levels} "
            "for periodized decomposition"
        )
    details: list[np.ndarray] = []
    approx = x
    for _ in range(levels):
        approx, detail = _analysis_step(approx)
        details.append(detail)
    return WaveletPyramid(approx=approx, details=details)


def dwt_reconstruct(p: WaveletPyramid) -> np.ndarray:
    """Invert :func:`dwt_decompose` exactly (orthogonal transform)."""
    if p.levels < 1:
        raise ValueError("pyramid has no levels")
    approx = np.asarray(p.approx, dtype=np.float64)
    for detail in reversed(p.details):
        detail = np.asarray(detail, dtype=np.float64)
        if len(detail) != len(approx):
            raise ValueError("pyramid level lengths are inconsistent")
        approx = _synthesis_step(approx, detail)
    return approx


def level_band_hz(level: int, sample_rate_hz: float) -> tuple[float, float]:
    """Nominal frequency band of detail level j: [fs/2^(j+1), fs/2^j]."""
    return sample_rate_hz / 2 ** (level + 1), sample_rate_hz / 2**level
