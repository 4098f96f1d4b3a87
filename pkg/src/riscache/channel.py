"""Random RIS channels and cascaded path coefficients.

Channels are drawn i.i.d. circularly-symmetric complex Gaussian with unit
variance using numpy's ``default_rng`` (PCG64 bit generator). Ports to other
languages can match the statistics but not the bit stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of the transmitter->RIS and RIS->receiver channels.

    Attributes:
        h_T: ``(G, L)`` complex matrix; column ``j`` is antenna ``j``'s channel to the RIS.
        h_R: ``(G, K)`` complex matrix; column ``k`` is the RIS channel to user ``k``.
        seed: seed the realization was drawn with (``None`` for hand-built channels).
    """

    h_T: np.ndarray
    h_R: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        h_T = np.array(self.h_T, dtype=complex)
        h_R = np.array(self.h_R, dtype=complex)
        if h_T.ndim != 2 or h_R.ndim != 2:
            raise ValueError("h_T and h_R must be 2-D matrices")
        if h_T.shape[0] != h_R.shape[0]:
            raise ValueError(
                f"h_T has {h_T.shape[0]} RIS rows but h_R has {h_R.shape[0]}"
            )
        if not (np.all(np.isfinite(h_T)) and np.all(np.isfinite(h_R))):
            raise ValueError("channel entries must be finite")
        h_T.flags.writeable = False
        h_R.flags.writeable = False
        object.__setattr__(self, "h_T", h_T)
        object.__setattr__(self, "h_R", h_R)

    @property
    def G(self) -> int:
        return self.h_T.shape[0]

    @property
    def L(self) -> int:
        return self.h_T.shape[1]

    @property
    def K(self) -> int:
        return self.h_R.shape[1]

    def effective_matrix(self, v: np.ndarray) -> np.ndarray:
        """``(K, L)`` matrix of effective gains ``a_{k,j}^T v`` for every path."""
        v = _check_phase_length(self, v)
        return (self.h_R * v[:, None]).T @ self.h_T

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "K": self.K,
            "G": self.G,
            "seed": self.seed,
            "h_T": _complex_to_pairs(self.h_T),
            "h_R": _complex_to_pairs(self.h_R),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelRealization":
        L, K, G = int(data["L"]), int(data["K"]), int(data["G"])
        h_T = _pairs_to_complex(data["h_T"], G, L, "h_T")
        h_R = _pairs_to_complex(data["h_R"], G, K, "h_R")
        seed = data.get("seed")
        return cls(h_T, h_R, None if seed is None else int(seed))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ChannelRealization":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CascadeVector:
    k: int
    j: int
    a: np.ndarray


def _complex_to_pairs(mat: np.ndarray) -> list[list[float]]:
    # column-major: all of column 0 first, then column 1, ...
    flat = mat.flatten(order="F")
    return [[float(z.real), float(z.imag)] for z in flat]


def _pairs_to_complex(pairs, rows: int, cols: int, name: str) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.shape != (rows * cols, 2):
        raise ValueError(
            f"{name}: expected {rows * cols} [re, im] pairs, got shape {arr.shape}"
        )
    return (arr[:, 0] + 1j * arr[:, 1]).reshape((rows, cols), order="F")


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples: real and imaginary parts each N(0, 1/2)."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def draw_channel(L: int, K: int, G: int, seed: int) -> ChannelRealization:
    """Draw ``h_T`` (G x L) then ``h_R`` (G x K) from ``default_rng(seed)``."""
    for name, val in (("L", L), ("K", K), ("G", G)):
        if int(val) < 1:
            raise ValueError(f"{name} must be >= 1, got {val}")
    rng = np.random.default_rng(seed)
    h_T = complex_gaussian(rng, (G, L))
    h_R = complex_gaussian(rng, (G, K))
    return ChannelRealization(h_T, h_R, int(seed))


def cascade_vector(ch: ChannelRealization, k: int, j: int) -> CascadeVector:
    """Element-wise product of antenna ``j``'s and user ``k``'s RIS channels."""
    if not 0 <= k < ch.K:
        raise IndexError(f"user index k={k} out of range [0, {ch.K})")
    if not 0 <= j < ch.L:
        raise IndexError(f"antenna index j={j} out of range [0, {ch.L})")
    return CascadeVector(k, j, ch.h_T[:, j] * ch.h_R[:, k])


def _check_phase_length(ch: ChannelRealization, v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.shape != (ch.G,):
        raise ValueError(f"phase vector has shape {v.shape}, expected ({ch.G},)")
    return v


def effective_gain(ch: ChannelRealization, v, k: int, j: int) -> complex:
    """Plain (unconjugated) transpose ``a_{k,j}^T v``."""
    v = _check_phase_length(ch, v)
    return complex(cascade_vector(ch, k, j).a @ v)
