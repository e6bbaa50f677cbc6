"""Electric-field sensing: dipole forward models, receiver chain, inversion.

Geometry
--------
The sender is a vertical dipole: two electrodes ``electrode_separation``
apart, carrying charges +/- C * a_o * sin(wt). The receiver has four vertical
electrode pairs placed at +s x, +s y, -s x and -s y around its center; each
pair measures the potential difference between its upper and lower
electrode. Pair ``i`` reports amplitude ``a_(i+1)``, so with the sender at
bearing ``alpha`` and distance ``r`` the approximate model reads

    a1 = A / (r - s cos a)^2      a2 = A / (r - s sin a)^2
    a3 = A / (r + s cos a)^2      a4 = A / (r + s sin a)^2

where ``A`` lumps the output amplitude and the medium factor F(w). ``A``
cancels in :func:`localize`.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _pykernels, kernels
from .core import Bearing, Vec3, as_seed, make_rng
from .errors import (
    ClippedSignalWarning,
    DegenerateQuad,
    InsufficientSamples,
    OutOfModel,
    SingularPoint,
)

EPSILON_0 = 8.8541878128e-12  # F/m
WATER_EPSILON_R = 80.0
DEFAULT_FREQUENCY = 2.5e3  # Hz
DEGENERACY_TOL = 1e-6
COPLANAR_TOL = 1e-6  # m
_SINGULAR_EPS = 1e-12  # m


@dataclass(frozen=True)
class DipoleSender:
    position: Vec3
    electrode_separation: float = 0.1  # m, vertical
    amplitude: float = 1.65  # a_o, V
    omega: float = 2 * math.pi * DEFAULT_FREQUENCY  # rad/s
    capacitance: float = 1e-12  # F
    epsilon_0: float = EPSILON_0
    epsilon_r: float = WATER_EPSILON_R
    polarity: int = 1  # +1: positive charge on the upper electrode

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("output amplitude must be positive")
        if not self.omega > 0:
            raise ValueError("angular frequency must be positive")
        if not self.electrode_separation > 0:
            raise ValueError("electrode separation must be positive")
        if self.polarity not in (1, -1):
            raise ValueError("polarity must be +1 or -1")

    @property
    def electrodes(self) -> tuple[Vec3, Vec3]:
        """(upper, lower) electrode positions."""
        h = Vec3(0.0, 0.0, self.electrode_separation / 2)
        return self.position + h, self.position - h

    @property
    def coulomb_scale(self) -> float:
        """C / (4 pi eps0 eps_r): charge per volt over the medium factor."""
        return self.capacitance / (4 * math.pi * self.epsilon_0 * self.epsilon_r)

    def charge(self, t: float) -> float:
        """Charge on the upper electrode at time ``t``."""
        return self.polarity * self.capacitance * self.amplitude * math.sin(self.omega * t)

    def with_amplitude(self, amplitude: float) -> DipoleSender:
        return replace(self, amplitude=amplitude)


def _charges(sender: DipoleSender, t: float):
    top, bottom = sender.electrodes
    q = sender.charge(t)
    return ((top, q), (bottom, -q))


def _check_not_singular(sender: DipoleSender, p: Vec3):
    for e in sender.electrodes:
        if (p - e).norm() < _SINGULAR_EPS:
            raise SingularPoint(f"point {p} coincides with a sender electrode")


def dipole_field(sender: DipoleSender, p: Vec3, t: float) -> np.ndarray:
    """Field vector in V/m at ``p``: superposition of two point-charge fields."""
    _check_not_singular(sender, p)
    k = 1.0 / (4 * math.pi * sender.epsilon_0 * sender.epsilon_r)
    e = np.zeros(3)
    for pos, q in _charges(sender, t):
        rv = (p - pos).as_array()
        r = np.linalg.norm(rv)
        e += k * q * rv / r**3
    return e


def dipole_potential(sender: DipoleSender, p: Vec3, t: float) -> float:
    """Electric potential in volts at ``p``."""
    _check_not_singular(sender, p)
    k = 1.0 / (4 * math.pi * sender.epsilon_0 * sender.epsilon_r)
    return sum(k * q / (p - pos).norm() for pos, q in _charges(sender, t))


@dataclass(frozen=True)
class ReceiverArray:
    """Four vertical electrode pairs in a cross, plus the signal chain.

    ``adc_bits=None`` models an ideal converter (no rounding, no clipping).
    The converter spans ``[-full_scale, full_scale]``.
    """

    position: Vec3
    half_spacing: float = 0.05  # s, m
    pair_separation: float = 0.1  # m, vertical extent of each pair
    gain: float = 1000.0
    adc_bits: int | None = 14
    full_scale: float = 1.65  # V
    sample_rate: float = 10e3  # Hz

    def __post_init__(self):
        if not self.half_spacing > 0:
            raise ValueError("half spacing must be positive")
        if not self.gain > 0:
            raise ValueError("gain must be positive")
        if not self.pair_separation > 0:
            raise ValueError("pair separation must be positive")
        if self.adc_bits is not None and self.adc_bits < 1:
            raise ValueError("adc_bits must be positive or None")

    @property
    def offsets(self) -> tuple[Vec3, Vec3, Vec3, Vec3]:
        s = self.half_spacing
        return (Vec3(s, 0, 0), Vec3(0, s, 0), Vec3(-s, 0, 0), Vec3(0, -s, 0))

    @property
    def electrode_pairs(self) -> list[tuple[Vec3, Vec3]]:
        h = Vec3(0.0, 0.0, self.pair_separation / 2)
        return [(self.position + o + h, self.position + o - h) for o in self.offsets]

    @property
    def quantization_step(self) -> float:
        if self.adc_bits is None:
            return 0.0
        return 2.0 * self.full_scale / 2**self.adc_bits

    @property
    def clip_limit(self) -> float:
        return math.inf if self.adc_bits is None else self.full_scale


@dataclass(frozen=True)
class AmplitudeQuad:
    a1: float
    a2: float
    a3: float
    a4: float

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "a4"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v!r}")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.a4])

    @classmethod
    def from_array(cls, values) -> AmplitudeQuad:
        return cls(*(float(v) for v in values))

    def scaled(self, k: float) -> AmplitudeQuad:
        return AmplitudeQuad(self.a1 * k, self.a2 * k, self.a3 * k, self.a4 * k)


class Quality(str, enum.Enum):
    WELL_CONDITIONED = "WellConditioned"
    NEAR_AXIS = "NearAxis"
    OUT_OF_MODEL = "OutOfModel"


@dataclass(frozen=True)
class LocalizationResult:
    r: float
    alpha: Bearing | None
    u1: float
    u2: float
    quality: Quality

    def __post_init__(self):
        if self.quality is not Quality.OUT_OF_MODEL and not self.r > 0:
            raise ValueError("distance must be positive for an in-model result")


def inverse_square_amplitudes(A: float, r: float, alpha: float, s: float) -> AmplitudeQuad:
    """Approximate inverse-square amplitudes at the four electrode pairs.

    ``alpha`` is in degrees.
    """
    if not r > s:
        raise OutOfModel(f"approximate model needs r > s (r={r}, s={s})")
    c = math.cos(math.radians(alpha))
    sn = math.sin(math.radians(alpha))
    return AmplitudeQuad(
        A / (r - s * c) ** 2,
        A / (r - s * sn) ** 2,
        A / (r + s * c) ** 2,
        A / (r + s * sn) ** 2,
    )


def inverse_square_amplitudes_array(A, r, alpha_rad, s) -> np.ndarray:
    """Vectorized :func:`inverse_square_amplitudes` with ``alpha`` in radians; shape (N, 4)."""
    r = np.asarray(r, dtype=np.float64)
    c = np.cos(alpha_rad)
    sn = np.sin(alpha_rad)
    return np.stack([A / (r - s * c) ** 2, A / (r - s * sn) ** 2, A / (r + s * c) ** 2, A / (r + s * sn) ** 2], axis=-1)


def pair_potential_differences(
    sources: np.ndarray,
    electrode_separation: float,
    half_spacing: float,
    pair_separation: float,
) -> np.ndarray:
    """Unit-charge potential differences for a batch of sender positions.

    ``sources`` holds sender centers relative to the receiver center, shape
    (N, 3). Returns (N, 4) values of ``sum_q sign_q (1/|top - q| - 1/|bottom - q|)``.
    """
    src = np.asarray(sources, dtype=np.float64).reshape(-1, 3)
    s = half_spacing
    offsets = np.array([[s, 0, 0], [0, s, 0], [-s, 0, 0], [0, -s, 0]], dtype=np.float64)
    hz = np.array([0.0, 0.0, pair_separation / 2])
    qz = np.array([0.0, 0.0, electrode_separation / 2])
    out = np.zeros((src.shape[0], 4))
    for sign, q in ((1.0, src + qz), (-1.0, src - qz)):
        for esign, e in ((1.0, offsets + hz), (-1.0, offsets - hz)):
            d = np.linalg.norm(e[None, :, :] - q[:, None, :], axis=-1)
            if np.any(d < _SINGULAR_EPS):
                raise SingularPoint("a receiver electrode coincides with a sender electrode")
            out += sign * esign / d
    return out


def exact_amplitudes(sender: DipoleSender, rx: ReceiverArray) -> AmplitudeQuad:
    """Differential-potential amplitudes from the exact two-charge field.

    Every potential oscillates as sin(wt), so the amplitude over one period
    is the magnitude of the time-independent coefficient.
    """
    rel = (sender.position - rx.position).as_array()[None, :]
    diff = pair_potential_differences(rel, sender.electrode_separation, rx.half_spacing, rx.pair_separation)[0]
    return AmplitudeQuad.from_array(np.abs(sender.coulomb_scale * sender.amplitude * diff))


def in_model(sender: DipoleSender, rx: ReceiverArray, tol: float = COPLANAR_TOL) -> bool:
    """True when sender and receiver share a horizontal plane."""
    return abs(sender.position.z - rx.position.z) <= tol


def _u(sq: float) -> float:
    return math.inf if sq == 1.0 else (sq + 1.0) / (sq - 1.0)


def localize(quad: AmplitudeQuad, s: float, tol: float = DEGENERACY_TOL) -> LocalizationResult:
    """Closed-form bearing and distance from four amplitudes.

    The bearing uses the two-argument arctangent so the quadrant follows the
    signs of ``a1 - a3`` and ``a2 - a4``. Distance is taken from whichever of
    the two pairs is more unbalanced.
    """
    a = quad.as_array()
    if np.any(a <= 0):
        raise ValueError("all amplitudes must be positive")
    sq1 = math.sqrt(quad.a1 / quad.a3)
    sq2 = math.sqrt(quad.a2 / quad.a4)
    d1, d2 = abs(sq1 - 1.0), abs(sq2 - 1.0)
    if d1 < tol and d2 < tol:
        raise DegenerateQuad("sender is equidistant from all electrodes")
    # v = 1/u = s*cos(a)/r (resp. sin); finite even when a ratio is exactly 1
    v1 = (sq1 - 1.0) / (sq1 + 1.0)
    v2 = (sq2 - 1.0) / (sq2 + 1.0)
    alpha = math.atan2(v2, v1)
    u1, u2 = _u(sq1), _u(sq2)
    r = s * math.cos(alpha) / v1 if d1 >= d2 else s * math.sin(alpha) / v2
    quality = Quality.NEAR_AXIS if (d1 < tol or d2 < tol) else Quality.WELL_CONDITIONED
    return LocalizationResult(r=r, alpha=Bearing.from_radians(alpha), u1=u1, u2=u2, quality=quality)


def localize_scene(sender: DipoleSender, rx: ReceiverArray) -> LocalizationResult:
    """Localize from exact amplitudes, flagging scenes outside the model."""
    quad = exact_amplitudes(sender, rx)
    if in_model(sender, rx):
        return localize(quad, rx.half_spacing)
    try:
        res = localize(quad, rx.half_spacing)
    except DegenerateQuad:
        return LocalizationResult(math.nan, None, math.inf, math.inf, Quality.OUT_OF_MODEL)
    return LocalizationResult(res.r, res.alpha, res.u1, res.u2, Quality.OUT_OF_MODEL)


@dataclass(frozen=True)
class ReceiverStreams:
    samples: np.ndarray  # (4, n), volts after gain and conversion
    sample_rate: float
    clipped: tuple[bool, bool, bool, bool]

    @property
    def n(self) -> int:
        return self.samples.shape[1]


def sample_receiver(
    quad: AmplitudeQuad,
    omega: float,
    rx: ReceiverArray,
    duration: float,
    noise_sigma: float,
    seed,
    phase: float = 0.0,
    dc_offset: float = 0.0,
) -> ReceiverStreams:
    """Digitize the four electrode-pair signals.

    Per stream: ``a_i sin(w t + phase) + noise + dc_offset`` is DC-blocked,
    amplified by ``rx.gain`` and converted by the ADC. Noise is white Gaussian
    on the electrode voltage, before gain. Clipping is reported through
    ``ClippedSignalWarning`` and the ``clipped`` flags.
    """
    if duration < 2 * (2 * math.pi / omega):
        raise ValueError("duration must cover at least two periods")
    n = int(round(duration * rx.sample_rate))
    rng = make_rng(as_seed(seed))
    noise = rng.standard_normal((4, n)) if noise_sigma else None
    y, clipped = _pykernels.chain_streams(
        quad.as_array(),
        np.full(4, phase),
        noise,
        float(noise_sigma),
        omega,
        rx.sample_rate,
        n,
        rx.gain,
        rx.quantization_step,
        rx.clip_limit,
        offsets=np.full(4, dc_offset) if dc_offset else None,
    )
    flags = tuple(bool(c) for c in clipped)
    if any(flags):
        warnings.warn(
            f"amplified signal exceeds full scale on pairs {[i + 1 for i, c in enumerate(flags) if c]}",
            ClippedSignalWarning,
            stacklevel=2,
        )
    return ReceiverStreams(y, rx.sample_rate, flags)


def estimate_amplitude(stream, omega: float, sample_rate: float) -> float:
    """Lock-in amplitude ``2 sqrt(I^2 + Q^2) / n`` of a known-frequency sinus."""
    x = np.asarray(stream, dtype=np.float64).ravel()
    if x.size == 0 or x.size / sample_rate < 2 * (2 * math.pi / omega) * (1 - 1e-9):
        raise InsufficientSamples(f"{x.size} samples span less than two periods")
    return float(kernels.lockin_amplitudes(x[None, :], omega, sample_rate)[0])


def estimate_quad(streams: ReceiverStreams, omega: float, gain: float = 1.0) -> AmplitudeQuad:
    """Amplitudes of all four streams, divided by ``gain``."""
    amps = kernels.lockin_amplitudes(streams.samples, omega, streams.sample_rate) / gain
    return AmplitudeQuad.from_array(amps)


@dataclass(frozen=True)
class FieldMessage:
    bits: tuple[int, ...]
    symbol_rate: float  # Hz

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0 or 1")
        if not self.symbol_rate > 0:
            raise ValueError("symbol rate must be positive")


def _samples_per_symbol(symbol_rate: float, sample_rate: float) -> int:
    if symbol_rate > sample_rate / 10:
        raise ValueError("symbol rate must not exceed a tenth of the sample rate")
    return int(round(sample_rate / symbol_rate))


def encode_field_message(msg: FieldMessage, sender: DipoleSender, sample_rate: float = 10e3) -> np.ndarray:
    """On-off keyed output amplitude per sample: a_o for a 1, zero for a 0."""
    sps = _samples_per_symbol(msg.symbol_rate, sample_rate)
    return np.repeat(np.asarray(msg.bits, dtype=np.float64) * sender.amplitude, sps)


def modulate_envelope(
    envelope,
    omega: float,
    sample_rate: float,
    coupling: float = 1.0,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    phase: float = 0.0,
) -> np.ndarray:
    """Received waveform for an amplitude envelope: ``coupling * env * sin(wt)`` plus noise."""
    env = np.asarray(envelope, dtype=np.float64)
    t = np.arange(env.size) / sample_rate
    x = coupling * env * np.sin(omega * t + phase)
    if noise_sigma:
        if rng is None:
            raise ValueError("a generator is required when noise_sigma > 0")
        x = x + noise_sigma * rng.standard_normal(env.size)
    return x


def decode_field_message(stream, omega: float, sample_rate: float, symbol_rate: float, threshold: float) -> list[int]:
    """Slice a symbol-aligned stream and threshold each symbol's amplitude."""
    x = np.asarray(stream, dtype=np.float64)
    sps = _samples_per_symbol(symbol_rate, sample_rate)
    n_sym = x.size // sps
    if n_sym == 0:
        return []
    chunks = x[: n_sym * sps].reshape(n_sym, sps)
    if sps / sample_rate < 2 * (2 * math.pi / omega) * (1 - 1e-9):
        raise InsufficientSamples("each symbol must span at least two carrier periods")
    amps = kernels.lockin_amplitudes(chunks, omega, sample_rate)
    return [int(a >= threshold) for a in amps]


@dataclass
class QuadBatch:
    """Batch localization output (angles in degrees)."""

    alpha_deg: np.ndarray
    r: np.ndarray
    code: np.ndarray = field(repr=False)


def localize_many(quads, s: float, tol: float = DEGENERACY_TOL, backend: str | None = None) -> QuadBatch:
    impl = kernels.get_backend(backend) if backend else kernels
    alpha, r, code = impl.localize_batch(np.asarray(quads, dtype=np.float64).reshape(-1, 4), s, tol)
    return QuadBatch(np.degrees(alpha), r, code)
