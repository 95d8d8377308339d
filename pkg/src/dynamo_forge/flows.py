"""Time-dependent incompressible flows built from finitely many Fourier modes.

A flow is a real vector field

    u(t, x) = sum_q g_q(t) exp(2 pi i m_q . x) A_q

with integer wavevectors ``m_q``, constant complex amplitudes ``A_q`` obeying
``m_q . A_q = 0`` (incompressibility, bilinear dot), and scalar envelopes
``g_q``. Modes come in conjugate pairs ``(-m, conj(A))`` sharing an envelope so
``u`` is real-valued. Time is organized into consecutive segments; every
envelope is supported inside its segment's window.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import quad

from .spectral import E_X, E_Z, SignedPermutation, WaveVector

__all__ = [
    "BUMP_SUPPORT",
    "bump_normalization",
    "bump_value",
    "bump_peak",
    "Envelope",
    "FlowMode",
    "FlowSegment",
    "TimeFlow",
    "shear_flow_x",
    "shear_flow_y",
    "control_block",
    "piecewise_shear_x",
    "idle_flow",
    "translate_flow",
    "rotate_flow",
    "shift_time",
    "concat_flows",
    "TransferPlan",
    "mode_transfer_flow",
    "segment_sup_velocity",
    "flow_sup_velocity",
    "gradient_sup_values",
    "hessian_sup_values",
    "flow_to_json_dict",
    "flow_from_json_dict",
    "save_flow",
    "load_flow",
]

# the smooth bump is supported on an interval of this length
BUMP_SUPPORT = 0.5

_BUMP_NORM: float | None = None


def _raw_bump(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    inside = (t > 0.0) & (t < BUMP_SUPPORT)
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (ti * (BUMP_SUPPORT - ti)))
    return out


def bump_normalization() -> float:
    """Constant c making the bump integrate to one over its support.

    Computed once by adaptive quadrature on the raw profile.
    """
    global _BUMP_NORM
    if _BUMP_NORM is None:
        raw, err = quad(
            lambda t: math.exp(-1.0 / (t * (BUMP_SUPPORT - t))),
            0.0,
            BUMP_SUPPORT,
            epsabs=1e-14,
            epsrel=1e-13,
            limit=400,
        )
        if err > 1e-9 * raw:
            raise RuntimeError(f"bump normalization quadrature too loose: {err}")
        _BUMP_NORM = 1.0 / raw
    return _BUMP_NORM


def bump_value(t) -> np.ndarray:
    """Normalized bump: positive on (0, 1/2), zero elsewhere, unit integral."""
    return bump_normalization() * _raw_bump(t)


def bump_peak() -> float:
    """Maximum of the normalized bump, attained at the midpoint."""
    return bump_normalization() * math.exp(-16.0)


def _simpson_average(fn, a: float, b: float, panels: int) -> float:
    """Composite Simpson estimate of (1/(b-a)) int_a^b fn."""
    x = np.linspace(a, b, 2 * panels + 1)
    y = fn(x)
    w = np.ones(2 * panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    h = (b - a) / (2 * panels)
    return float(np.dot(w, y) * h / 3.0 / (b - a))


@dataclass(frozen=True)
class Envelope:
    """Scalar envelope g(t): a placed bump or a constant window.

    ``kind`` is "bump" (level * normalized bump started at ``start``) or
    "const" (value ``level`` on [start, stop)).
    """

    kind: str
    start: float
    stop: float
    level: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("bump", "const"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if not self.stop > self.start:
            raise ValueError("envelope window must have positive length")
        if self.kind == "bump" and abs((self.stop - self.start) - BUMP_SUPPORT) > 1e-12:
            raise ValueError("bump envelope window must have length BUMP_SUPPORT")

    def values(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=np.float64)
        if self.kind == "bump":
            return self.level * bump_value(ts - self.start)
        out = np.zeros_like(ts)
        out[(ts >= self.start) & (ts < self.stop)] = self.level
        return out

    def max_abs(self) -> float:
        if self.kind == "bump":
            return abs(self.level) * bump_peak()
        return abs(self.level)

    def average_over(self, a: float, b: float, panels: int = 8) -> float:
        """(1/(b-a)) int_a^b g(t) dt; exact for "const", Simpson for "bump"."""
        if not b > a:
            raise ValueError("need b > a")
        lo, hi = max(a, self.start), min(b, self.stop)
        if hi <= lo:
            return 0.0
        if self.kind == "const":
            return self.level * (hi - lo) / (b - a)
        return _simpson_average(self.values, lo, hi, panels) * (hi - lo) / (b - a)

    def abs_average_over(self, a: float, b: float, panels: int = 8) -> float:
        if self.kind == "const" or self.level >= 0:
            return abs(self.average_over(a, b, panels))
        return abs(self.level) * abs(
            Envelope(self.kind, self.start, self.stop, 1.0).average_over(a, b, panels)
        )

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "start": self.start, "stop": self.stop, "level": self.level}

    @staticmethod
    def from_json_dict(obj: dict) -> "Envelope":
        return Envelope(str(obj["kind"]), float(obj["start"]), float(obj["stop"]), float(obj["level"]))


def step_averages(env: Envelope, edges: np.ndarray, panels: int = 8) -> np.ndarray:
    """Averages of g over each interval [edges[i], edges[i+1]], vectorized.

    Exact for "const"; composite Simpson on the clipped window for "bump".
    """
    a = np.asarray(edges[:-1], dtype=np.float64)
    b = np.asarray(edges[1:], dtype=np.float64)
    lo = np.maximum(a, env.start)
    hi = np.minimum(b, env.stop)
    lens = np.maximum(hi - lo, 0.0)
    out = np.zeros_like(a)
    if env.kind == "const":
        return env.level * lens / (b - a)
    act = lens > 0.0
    if not act.any():
        return out
    m = 2 * panels + 1
    nodes = np.linspace(0.0, 1.0, m)
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    xs = lo[act, None] + lens[act, None] * nodes[None, :]
    integrals = (env.values(xs) @ w) * lens[act] / (2 * panels) / 3.0
    out[act] = integrals / (b[act] - a[act])
    return out


_DIV_TOL = 1e-10


@dataclass(frozen=True)
class FlowMode:
    """One Fourier mode of a flow: wavevector, complex amplitude, envelope."""

    k: WaveVector
    amplitude: tuple[complex, complex, complex]
    envelope: Envelope

    def __post_init__(self) -> None:
        amp = self.amp_array()
        norm = float(np.linalg.norm(amp))
        if norm == 0.0:
            raise ValueError("flow mode amplitude must be nonzero")
        div = abs(sum(ki * ai for ki, ai in zip(self.k, self.amplitude)))
        if div > _DIV_TOL * max(1.0, norm):
            raise ValueError(f"mode {self.k} violates k . A = 0: |k.A| = {div:.3e}")

    def amp_array(self) -> np.ndarray:
        return np.asarray(self.amplitude, dtype=np.complex128)

    def amp_norm(self) -> float:
        return float(np.linalg.norm(self.amp_array()))

    def k_norm(self) -> float:
        return math.sqrt(float(self.k.norm_sq()))


@dataclass(frozen=True)
class FlowSegment:
    """Flow modes active on the time window [t0, t1]."""

    t0: float
    t1: float
    modes: tuple[FlowMode, ...] = ()

    def __post_init__(self) -> None:
        if not self.t1 > self.t0:
            raise ValueError("segment must have positive duration")
        for m in self.modes:
            if m.envelope.start < self.t0 - 1e-9 or m.envelope.stop > self.t1 + 1e-9:
                raise ValueError(
                    f"envelope window [{m.envelope.start}, {m.envelope.stop}] leaves "
                    f"segment [{self.t0}, {self.t1}]"
                )

    def duration(self) -> float:
        return self.t1 - self.t0

    def reality_defect(self) -> float:
        """Max amplitude mismatch between a mode and its conjugate partner."""
        groups: dict[tuple, np.ndarray] = {}
        for m in self.modes:
            key = (m.envelope, m.k)
            groups[key] = groups.get(key, np.zeros(3, dtype=np.complex128)) + m.amp_array()
        worst = 0.0
        for (env, k), amp in groups.items():
            partner = groups.get((env, -k), np.zeros(3, dtype=np.complex128))
            worst = max(worst, float(np.max(np.abs(partner - np.conj(amp)))))
        return worst


@dataclass(frozen=True)
class TimeFlow:
    """Consecutive flow segments; together they define u on [t0, t1]."""

    segments: tuple[FlowSegment, ...]

    def __post_init__(self) -> None:
        for a, b in zip(self.segments, self.segments[1:]):
            if b.t0 < a.t1 - 1e-9:
                raise ValueError(f"segments overlap at t = {b.t0}")
            if b.t0 < a.t0:
                raise ValueError("segments must be sorted by start time")

    @property
    def t0(self) -> float:
        return self.segments[0].t0 if self.segments else 0.0

    @property
    def t1(self) -> float:
        return self.segments[-1].t1 if self.segments else 0.0

    def duration(self) -> float:
        return self.t1 - self.t0

    def reality_defect(self) -> float:
        return max((s.reality_defect() for s in self.segments), default=0.0)

    def max_mode_inf_norm(self) -> int:
        return max((m.k.inf_norm() for s in self.segments for m in s.modes), default=0)


# -- canonical flows ---------------------------------------------------------


def _conjugate_pair(k: WaveVector, amp: Sequence[complex], env: Envelope) -> tuple[FlowMode, FlowMode]:
    a = tuple(complex(v) for v in amp)
    return (
        FlowMode(k, a, env),
        FlowMode(-k, tuple(complex(v).conjugate() for v in a), env),
    )


def _two_phase_shear(axis_k: WaveVector, lam: float, t0: float, kind: str) -> TimeFlow:
    """Cos-driven shear for half a unit, then sin-driven shear into z.

    Phase one: lam * g(t - t0) * cos(2 pi x_axis) e_push with e_push the unit
    vector the cosine shear pushes along. Phase two:
    (1/4) * g(t - t0 - 1/2) * sin(2 pi x_axis) e_z.
    """
    push = (0.0, lam / 2.0, 0.0) if axis_k == E_X else (lam / 2.0, 0.0, 0.0)
    if kind == "bump":
        env1 = Envelope("bump", t0, t0 + 0.5, 1.0)
        env2 = Envelope("bump", t0 + 0.5, t0 + 1.0, 1.0)
    else:
        env1 = Envelope("const", t0, t0 + 0.5, 2.0)
        env2 = Envelope("const", t0 + 0.5, t0 + 1.0, 2.0)
    seg1 = FlowSegment(t0, t0 + 0.5, _conjugate_pair(axis_k, push, env1))
    # sin(2 pi s) = -(i/2) exp(2 pi i s) + (i/2) exp(-2 pi i s)
    seg2 = FlowSegment(t0 + 0.5, t0 + 1.0, _conjugate_pair(axis_k, (0.0, 0.0, -0.125j), env2))
    return TimeFlow((seg1, seg2))


def shear_flow_x(lam: float, t0: float = 0.0) -> TimeFlow:
    """Unit-duration block: cos(2 pi x) shear along y, then sin(2 pi x) shear along z."""
    return _two_phase_shear(E_X, lam, t0, "bump")


def shear_flow_y(lam: float, t0: float = 0.0) -> TimeFlow:
    """Unit-duration block: cos(2 pi y) shear along x, then sin(2 pi y) shear along z."""
    return _two_phase_shear(WaveVector(0, 1, 0), lam, t0, "bump")


def piecewise_shear_x(lam: float, t0: float = 0.0) -> TimeFlow:
    """Piecewise-constant variant of shear_flow_x with matching phase integrals."""
    return _two_phase_shear(E_X, lam, t0, "const")


def control_block(lam: float, t0: float = 0.0) -> TimeFlow:
    """Two-unit control block: x-shear at strength lam, then y-shear at -lam."""
    return concat_flows(shear_flow_x(lam, t0), shear_flow_y(-lam, t0 + 1.0))


def idle_flow(t0: float, duration: float = 1.0) -> TimeFlow:
    """Zero velocity for the given window; evolution is pure diffusion."""
    return TimeFlow((FlowSegment(t0, t0 + duration, ()),))


# -- transformations ---------------------------------------------------------


def translate_flow(flow: TimeFlow, y: Iterable[float]) -> TimeFlow:
    """Replace u(t, x) by u(t, x - y): amplitudes pick up exp(-2 pi i k . y)."""
    yv = tuple(float(v) for v in y)
    segs = []
    for s in flow.segments:
        modes = []
        for m in s.modes:
            phase = complex(np.exp(-2j * np.pi * sum(ki * yi for ki, yi in zip(m.k, yv))))
            modes.append(FlowMode(m.k, tuple(phase * a for a in m.amplitude), m.envelope))
        segs.append(FlowSegment(s.t0, s.t1, tuple(modes)))
    return TimeFlow(tuple(segs))


def rotate_flow(flow: TimeFlow, perm: SignedPermutation) -> TimeFlow:
    """Replace u by Q u(t, Q^T x): modes map as (k, A) -> (Q k, Q A)."""
    segs = []
    for s in flow.segments:
        modes = []
        for m in s.modes:
            qa = perm.apply_vector(m.amp_array())
            modes.append(
                FlowMode(perm.apply_wavevector(m.k), tuple(complex(v) for v in qa), m.envelope)
            )
        segs.append(FlowSegment(s.t0, s.t1, tuple(modes)))
    return TimeFlow(tuple(segs))


def shift_time(flow: TimeFlow, dt: float) -> TimeFlow:
    segs = []
    for s in flow.segments:
        modes = tuple(
            FlowMode(
                m.k,
                m.amplitude,
                Envelope(m.envelope.kind, m.envelope.start + dt, m.envelope.stop + dt, m.envelope.level),
            )
            for m in s.modes
        )
        segs.append(FlowSegment(s.t0 + dt, s.t1 + dt, modes))
    return TimeFlow(tuple(segs))


def concat_flows(*flows: TimeFlow) -> TimeFlow:
    segs: list[FlowSegment] = []
    for f in flows:
        segs.extend(f.segments)
    segs.sort(key=lambda s: s.t0)
    return TimeFlow(tuple(segs))


# -- single-pair transfer flow ------------------------------------------------


@dataclass(frozen=True)
class TransferPlan:
    """Construction record for a transfer flow aimed at a unit wavevector."""

    source_mode: WaveVector
    target_mode: WaveVector
    rotation: SignedPermutation
    eps: float
    v: tuple[complex, complex, complex]
    mu: tuple[complex, complex, complex]
    predictor: float

    def to_json_dict(self) -> dict:
        return {
            "source_mode": list(self.source_mode),
            "target_mode": list(self.target_mode),
            "rotation": [list(r) for r in self.rotation.matrix],
            "eps": self.eps,
            "v_re": [v.real for v in self.v],
            "v_im": [v.imag for v in self.v],
            "mu_re": [m.real for m in self.mu],
            "mu_im": [m.imag for m in self.mu],
            "predictor": self.predictor,
        }


def _bilinear_dot(a: np.ndarray, b: np.ndarray) -> complex:
    return complex(np.sum(np.asarray(a) * np.asarray(b)))


def _complex_cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.cross(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))


def rotation_for_transfer(j: WaveVector, w: np.ndarray) -> SignedPermutation:
    """Signed permutation moving the dominant axis of w to z.

    When j is a signed unit vector its own axis is excluded, which guarantees
    the rotated source stays away from e_z; solenoidality (j . w = 0) puts all
    of w on the remaining axes in that case.
    """
    absw = np.abs(np.asarray(w, dtype=np.complex128))
    arr = j.as_array()
    if sorted(np.abs(arr)) == [0, 0, 1]:
        blocked = int(np.argmax(np.abs(arr)))
        masked = absw.copy()
        masked[blocked] = -1.0
        axis = int(np.argmax(masked))
    else:
        axis = int(np.argmax(absw))
    return SignedPermutation.axis_to_z(axis, 1)


def mode_transfer_flow(
    j: WaveVector, w: np.ndarray, eps: float, t0: float = 0.0
) -> tuple[TimeFlow, TransferPlan]:
    """Single-pair flow moving coefficient mass from mode j onto a unit mode.

    ``w`` is the field coefficient at ``j`` (nonzero, j . w = 0). The flow is a
    conjugate mode pair at wavevectors +-(e_z - j'), built in a rotated frame
    where the dominant component of w points along z, then rotated back. The
    amplitude direction mu is chosen orthogonal (bilinear) to e_z - j' so the
    pair is incompressible, and generically couples j to the target.
    """
    w = np.asarray(w, dtype=np.complex128)
    if j == WaveVector(0, 0, 0):
        raise ValueError("transfer needs a nonzero source wavevector")
    wnorm = float(np.linalg.norm(w))
    if wnorm == 0.0:
        raise ValueError("transfer needs a nonzero source coefficient")

    perm = rotation_for_transfer(j, w)
    jp = perm.apply_wavevector(j)
    wp = perm.apply_vector(w)
    if jp == E_Z:
        raise RuntimeError("rotated source coincides with the target mode")
    p = np.array([0, 0, 1], dtype=np.int64) - jp.as_array()

    v0 = _complex_cross(wp, np.array([0.0, 0.0, 1.0]))
    if float(np.linalg.norm(v0)) <= 1e-12 * wnorm:
        v = np.array([1.0, 0.0, 0.0], dtype=np.complex128)
    else:
        v = v0 / np.linalg.norm(v0)
    mu = v - (_bilinear_dot(v, p) / float(p @ p)) * p

    env = Envelope("bump", t0, t0 + BUMP_SUPPORT, 1.0)
    kp = WaveVector(int(p[0]), int(p[1]), int(p[2]))
    modes = _conjugate_pair(kp, tuple(eps * mu), env)
    canonical = TimeFlow((FlowSegment(t0, t0 + BUMP_SUPPORT, modes),))
    flow = rotate_flow(canonical, perm.inverse())

    # first-order coupling size at zero diffusivity, used only for reporting
    predictor = float(2.0 * np.pi * eps * abs(wp[2] * _bilinear_dot(v, mu)))
    plan = TransferPlan(
        source_mode=j,
        target_mode=perm.inverse().apply_wavevector(E_Z),
        rotation=perm,
        eps=eps,
        v=tuple(complex(x) for x in v),
        mu=tuple(complex(x) for x in mu),
        predictor=predictor,
    )
    return flow, plan


# -- norm bookkeeping ---------------------------------------------------------


def segment_sup_velocity(segment: FlowSegment) -> float:
    """Upper bound for sup_x |u| on the segment: sum of peak mode magnitudes."""
    return float(sum(m.envelope.max_abs() * m.amp_norm() for m in segment.modes))


def flow_sup_velocity(flow: TimeFlow) -> float:
    return max((segment_sup_velocity(s) for s in flow.segments), default=0.0)


def gradient_sup_values(flow: TimeFlow, ts) -> np.ndarray:
    """Pointwise bound for |grad u(t)|_2: sum of 2 pi |m| |A| |g(t)|."""
    ts = np.asarray(ts, dtype=np.float64)
    out = np.zeros_like(ts)
    for s in flow.segments:
        for m in s.modes:
            out += 2.0 * np.pi * m.k_norm() * m.amp_norm() * np.abs(m.envelope.values(ts))
    return out


def hessian_sup_values(flow: TimeFlow, ts) -> np.ndarray:
    """Pointwise bound for |grad^2 u(t)|: sum of (2 pi |m|)^2 |A| |g(t)|."""
    ts = np.asarray(ts, dtype=np.float64)
    out = np.zeros_like(ts)
    for s in flow.segments:
        for m in s.modes:
            out += (2.0 * np.pi * m.k_norm()) ** 2 * m.amp_norm() * np.abs(m.envelope.values(ts))
    return out


# -- serialization ------------------------------------------------------------


def flow_to_json_dict(flow: TimeFlow) -> dict:
    segs = []
    for s in flow.segments:
        segs.append(
            {
                "t0": s.t0,
                "t1": s.t1,
                "modes": [
                    {
                        "k": list(m.k),
                        "amp_re": [a.real for a in m.amplitude],
                        "amp_im": [a.imag for a in m.amplitude],
                        "env": m.envelope.to_json_dict(),
                    }
                    for m in s.modes
                ],
            }
        )
    return {"segments": segs}


def flow_from_json_dict(obj: dict) -> TimeFlow:
    segs = []
    for s in obj["segments"]:
        modes = []
        for m in s["modes"]:
            amp = tuple(
                complex(re, im) for re, im in zip(m["amp_re"], m["amp_im"])
            )
            modes.append(
                FlowMode(WaveVector(*(int(v) for v in m["k"])), amp, Envelope.from_json_dict(m["env"]))
            )
        segs.append(FlowSegment(float(s["t0"]), float(s["t1"]), tuple(modes)))
    return TimeFlow(tuple(segs))


def save_flow(flow: TimeFlow, path) -> None:
    with open(path, "w") as fh:
        json.dump(flow_to_json_dict(flow), fh, sort_keys=True)
        fh.write("\n")


def load_flow(path) -> TimeFlow:
    with open(path) as fh:
        return flow_from_json_dict(json.load(fh))
