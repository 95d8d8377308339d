"""Truncated Fourier representation of vector fields on the unit 3-torus.

Conventions used throughout the package:

* fields are complex vector fields ``b(x) = sum_j exp(2 pi i j . x) bhat(j)``
  with integer wavevectors ``j`` and unit periods in all three directions,
* coefficients are stored densely on the cube ``|j|_inf <= N`` in an array of
  shape ``(2N+1, 2N+1, 2N+1, 3)``, axis order (x, y, z), with array index
  ``i`` along each axis standing for wavenumber ``i - N``,
* a field is real-valued iff ``bhat(-j) == conj(bhat(j))`` for every ``j``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

__all__ = [
    "WaveVector",
    "FourierField",
    "SignedPermutation",
    "zero_field",
    "single_mode_field",
    "sine_seed",
    "field_from_modes",
    "solenoidal_project",
    "translate_field",
    "rotate_field",
    "to_physical",
    "from_physical",
    "field_to_json_dict",
    "field_from_json_dict",
    "save_field",
    "load_field",
]

UNIT_WAVEVECTORS: tuple["WaveVector", ...]


class WaveVector(NamedTuple):
    """Integer wavevector on the dual lattice of the unit torus."""

    kx: int
    ky: int
    kz: int

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.int64)

    def norm_sq(self) -> int:
        return self.kx * self.kx + self.ky * self.ky + self.kz * self.kz

    def inf_norm(self) -> int:
        return max(abs(self.kx), abs(self.ky), abs(self.kz))

    def __neg__(self) -> "WaveVector":
        return WaveVector(-self.kx, -self.ky, -self.kz)


UNIT_WAVEVECTORS = (
    WaveVector(1, 0, 0),
    WaveVector(-1, 0, 0),
    WaveVector(0, 1, 0),
    WaveVector(0, -1, 0),
    WaveVector(0, 0, 1),
    WaveVector(0, 0, -1),
)

E_X = WaveVector(1, 0, 0)
E_Y = WaveVector(0, 1, 0)
E_Z = WaveVector(0, 0, 1)


@dataclass(frozen=True)
class FourierField:
    """Vector field truncated to the wavevector cube ``|k|_inf <= N``.

    ``coeffs`` has shape ``(2N+1, 2N+1, 2N+1, 3)`` and dtype complex128.
    Instances are treated as immutable values; operations return new fields.
    """

    N: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        n = 2 * self.N + 1
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.coeffs.shape != (n, n, n, 3):
            raise ValueError(
                f"coefficient array shape {self.coeffs.shape} does not match N={self.N}"
            )
        if self.coeffs.dtype != np.complex128:
            raise ValueError(f"coefficients must be complex128, got {self.coeffs.dtype}")

    # -- indexing ---------------------------------------------------------

    def index_of(self, k: WaveVector) -> tuple[int, int, int]:
        if k.inf_norm() > self.N:
            raise IndexError(f"wavevector {k} outside cube |k|_inf <= {self.N}")
        return (k.kx + self.N, k.ky + self.N, k.kz + self.N)

    def coefficient(self, k: WaveVector) -> np.ndarray:
        """Coefficient vector bhat(k), zero when k lies outside the cube."""
        if k.inf_norm() > self.N:
            return np.zeros(3, dtype=np.complex128)
        return self.coeffs[self.index_of(k)].copy()

    # -- norms and diagnostics -------------------------------------------

    def l2_norm_sq(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def l2_norm(self) -> float:
        return float(np.sqrt(self.l2_norm_sq()))

    def h1_seminorm_sq(self) -> float:
        k2 = _norm_sq_grid(self.N)
        return float(4.0 * np.pi**2 * np.sum(k2 * np.sum(np.abs(self.coeffs) ** 2, axis=-1)))

    def h1_seminorm(self) -> float:
        return float(np.sqrt(self.h1_seminorm_sq()))

    def mean_coefficient(self) -> np.ndarray:
        return self.coefficient(WaveVector(0, 0, 0))

    def max_divergence(self) -> float:
        """max over k of |k . bhat(k)|, zero for solenoidal fields."""
        kx, ky, kz = _wavenumber_grids(self.N)
        div = (
            kx[:, None, None] * self.coeffs[..., 0]
            + ky[None, :, None] * self.coeffs[..., 1]
            + kz[None, None, :] * self.coeffs[..., 2]
        )
        return float(np.max(np.abs(div)))

    def reality_defect(self) -> float:
        """max over k of |bhat(-k) - conj(bhat(k))|."""
        flipped = self.coeffs[::-1, ::-1, ::-1, :]
        return float(np.max(np.abs(flipped - np.conj(self.coeffs))))

    def support_box(self) -> tuple[int, int, int, int, int, int]:
        """Inclusive index bounds (lo0, hi0, lo1, hi1, lo2, hi2) of nonzero data."""
        mask = np.any(self.coeffs != 0, axis=-1)
        if not mask.any():
            c = self.N
            return (c, c, c, c, c, c)
        idx = np.nonzero(mask)
        return (
            int(idx[0].min()), int(idx[0].max()),
            int(idx[1].min()), int(idx[1].max()),
            int(idx[2].min()), int(idx[2].max()),
        )


def _wavenumber_grids(N: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = np.arange(-N, N + 1, dtype=np.float64)
    return k, k, k


_NORM_SQ_CACHE: dict[int, np.ndarray] = {}


def _norm_sq_grid(N: int) -> np.ndarray:
    """|k|^2 on the cube, cached per N."""
    got = _NORM_SQ_CACHE.get(N)
    if got is None:
        k = np.arange(-N, N + 1, dtype=np.float64)
        got = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
        _NORM_SQ_CACHE[N] = got
    return got


def norm_sq_grid(N: int) -> np.ndarray:
    """Public read-only view of the cached |k|^2 grid."""
    return _norm_sq_grid(N)


# -- constructors ----------------------------------------------------------


def zero_field(N: int) -> FourierField:
    n = 2 * N + 1
    return FourierField(N, np.zeros((n, n, n, 3), dtype=np.complex128))


def single_mode_field(N: int, k: WaveVector, amplitude: Iterable[complex]) -> FourierField:
    field = zero_field(N)
    field.coeffs[field.index_of(k)] = np.asarray(tuple(amplitude), dtype=np.complex128)
    return field


def field_from_modes(N: int, modes: Mapping[WaveVector, Iterable[complex]]) -> FourierField:
    field = zero_field(N)
    for k, amp in modes.items():
        field.coeffs[field.index_of(k)] = np.asarray(tuple(amp), dtype=np.complex128)
    return field


def sine_seed(N: int) -> FourierField:
    """Default seed field sin(2 pi x) e_z, mean-free and solenoidal.

    Expansion: bhat(e_x) = (0, 0, -i/2), bhat(-e_x) = (0, 0, i/2).
    """
    return field_from_modes(
        N,
        {
            WaveVector(1, 0, 0): (0.0, 0.0, -0.5j),
            WaveVector(-1, 0, 0): (0.0, 0.0, 0.5j),
        },
    )


# -- pointwise operations --------------------------------------------------


def solenoidal_project(field: FourierField) -> FourierField:
    """Remove the component of bhat(k) parallel to k for every k != 0."""
    N = field.N
    k = np.arange(-N, N + 1, dtype=np.float64)
    kvec = np.stack(
        np.meshgrid(k, k, k, indexing="ij"), axis=-1
    )  # (n, n, n, 3)
    k2 = np.sum(kvec**2, axis=-1)
    k2safe = np.where(k2 == 0, 1.0, k2)
    dot = np.sum(kvec * field.coeffs, axis=-1)
    out = field.coeffs - (dot / k2safe)[..., None] * kvec
    center = (N, N, N)
    out[center] = field.coeffs[center]
    return FourierField(N, out)


def translate_field(field: FourierField, y: Iterable[float]) -> FourierField:
    """Translate by y on the torus: bhat(k) -> exp(-2 pi i k . y) bhat(k)."""
    yv = np.asarray(tuple(y), dtype=np.float64)
    N = field.N
    k = np.arange(-N, N + 1, dtype=np.float64)
    phase = np.exp(
        -2j
        * np.pi
        * (
            k[:, None, None] * yv[0]
            + k[None, :, None] * yv[1]
            + k[None, None, :] * yv[2]
        )
    )
    return FourierField(N, field.coeffs * phase[..., None])


# -- signed permutations ---------------------------------------------------


@dataclass(frozen=True)
class SignedPermutation:
    """Orthogonal map permuting coordinate axes with sign flips.

    ``matrix`` is the 3x3 integer matrix Q with exactly one entry of +-1 per
    row and column. Wavevectors map as k -> Q k and amplitude vectors as
    a -> Q a, which is the Fourier image of b(x) -> Q b(Q^T x).
    """

    matrix: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=np.int64)
        if m.shape != (3, 3):
            raise ValueError("signed permutation needs a 3x3 matrix")
        if not np.array_equal(np.abs(m) @ np.ones(3, dtype=np.int64), np.ones(3, dtype=np.int64)):
            raise ValueError("each row must contain exactly one +-1 entry")
        if not np.array_equal(np.ones(3, dtype=np.int64) @ np.abs(m), np.ones(3, dtype=np.int64)):
            raise ValueError("each column must contain exactly one +-1 entry")

    @staticmethod
    def identity() -> "SignedPermutation":
        return SignedPermutation(((1, 0, 0), (0, 1, 0), (0, 0, 1)))

    def as_array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64)

    def inverse(self) -> "SignedPermutation":
        m = self.as_array().T
        return SignedPermutation(tuple(tuple(int(v) for v in row) for row in m))

    def apply_wavevector(self, k: WaveVector) -> WaveVector:
        v = self.as_array() @ k.as_array()
        return WaveVector(int(v[0]), int(v[1]), int(v[2]))

    def apply_vector(self, a: np.ndarray) -> np.ndarray:
        return self.as_array().astype(np.float64) @ np.asarray(a)

    def apply_point(self, y: Iterable[float]) -> np.ndarray:
        return self.as_array().astype(np.float64) @ np.asarray(tuple(y), dtype=np.float64)

    @staticmethod
    def rotation_to_z(k: WaveVector) -> "SignedPermutation":
        """Deterministic signed permutation sending the signed unit vector k to e_z."""
        arr = k.as_array()
        if sorted(np.abs(arr)) != [0, 0, 1]:
            raise ValueError(f"rotation_to_z needs a signed unit wavevector, got {k}")
        axis = int(np.argmax(np.abs(arr)))
        sign = int(arr[axis])
        return SignedPermutation.axis_to_z(axis, sign)

    @staticmethod
    def axis_to_z(axis: int, sign: int) -> "SignedPermutation":
        """Map sign*e_axis to e_z; remaining axes fill x, y rows in index order."""
        if axis not in (0, 1, 2) or sign not in (-1, 1):
            raise ValueError(f"bad axis/sign {axis}/{sign}")
        rows = []
        for other in (0, 1, 2):
            if other != axis:
                row = [0, 0, 0]
                row[other] = 1
                rows.append(tuple(row))
        zrow = [0, 0, 0]
        zrow[axis] = sign
        rows.append(tuple(zrow))
        return SignedPermutation(tuple(rows))


def rotate_field(field: FourierField, perm: SignedPermutation) -> FourierField:
    """Apply b -> Q b(Q^T x); coefficients move as bhat'(Q k) = Q bhat(k)."""
    m = perm.as_array()
    # column index of the +-1 in each row, and its sign
    src_axis = np.argmax(np.abs(m), axis=1)
    signs = m[np.arange(3), src_axis]
    # axis a of the output draws from axis src_axis[a] of the input
    out = np.transpose(field.coeffs, axes=(*src_axis, 3))
    for a in range(3):
        if signs[a] < 0:
            out = np.flip(out, axis=a)
    mixed = np.empty_like(out)
    for a in range(3):
        mixed[..., a] = signs[a] * out[..., src_axis[a]]
    return FourierField(field.N, np.ascontiguousarray(mixed))


# -- physical-space transforms ---------------------------------------------


def to_physical(field: FourierField, M: int) -> np.ndarray:
    """Sample b on the uniform M^3 grid x = n/M. Requires M >= 2N+1.

    Returns a complex array of shape (M, M, M, 3); take the real part for
    real-valued fields.
    """
    N = field.N
    if M < 2 * N + 1:
        raise ValueError(f"grid M={M} aliases the cube |k|_inf <= {N}; need M >= {2 * N + 1}")
    spec = np.zeros((M, M, M, 3), dtype=np.complex128)
    idx = (np.arange(-N, N + 1) % M)
    spec[np.ix_(idx, idx, idx)] = field.coeffs
    return np.fft.ifftn(spec, axes=(0, 1, 2)) * M**3


def from_physical(values: np.ndarray, N: int) -> FourierField:
    """Recover cube coefficients from samples on the uniform M^3 grid."""
    M = values.shape[0]
    if values.shape != (M, M, M, 3):
        raise ValueError(f"expected (M, M, M, 3) samples, got {values.shape}")
    if M < 2 * N + 1:
        raise ValueError(f"grid M={M} cannot resolve the cube |k|_inf <= {N}")
    spec = np.fft.fftn(np.asarray(values, dtype=np.complex128), axes=(0, 1, 2)) / M**3
    idx = (np.arange(-N, N + 1) % M)
    return FourierField(N, np.ascontiguousarray(spec[np.ix_(idx, idx, idx)]))


# -- serialization ----------------------------------------------------------


def field_to_json_dict(field: FourierField) -> dict:
    """JSON object {"N": N, "entries": [{"k": [...], "re": [...], "im": [...]}]}.

    Only nonzero coefficients are stored; floats round-trip exactly.
    """
    entries = []
    mask = np.any(field.coeffs != 0, axis=-1)
    for i0, i1, i2 in zip(*np.nonzero(mask)):
        c = field.coeffs[i0, i1, i2]
        entries.append(
            {
                "k": [int(i0) - field.N, int(i1) - field.N, int(i2) - field.N],
                "re": [float(v) for v in c.real],
                "im": [float(v) for v in c.imag],
            }
        )
    return {"N": field.N, "entries": entries}


def field_from_json_dict(obj: dict) -> FourierField:
    field = zero_field(int(obj["N"]))
    for entry in obj["entries"]:
        k = WaveVector(*(int(v) for v in entry["k"]))
        re = np.asarray(entry["re"], dtype=np.float64)
        im = np.asarray(entry["im"], dtype=np.float64)
        field.coeffs[field.index_of(k)] = re + 1j * im
    return field


def save_field(field: FourierField, path) -> None:
    with open(path, "w") as fh:
        json.dump(field_to_json_dict(field), fh, sort_keys=True)
        fh.write("\n")


def load_field(path) -> FourierField:
    with open(path) as fh:
        return field_from_json_dict(json.load(fh))
