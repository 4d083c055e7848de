"""Polarization-space-time clutter scenario construction, compound-Gaussian
sample generation, and dataset file I/O.

Scenario: a uniform linear array of `n_sensors` elements, `n_pulses` pulses
per burst, and `n_pol` polarization channels observes a ridge of clutter
patches.  Patch i at azimuth phi_i contributes a rank-one term
eps_i * a_i a_i^H to the space-time factor, with a_i the Kronecker product
of temporal and spatial steering vectors; the polarization factor couples
the HH/VV channels through a correlation coefficient and relative powers.

A sample is y = sqrt(tau) * u + n in matrix form (n_pol x n_st): tau is a
unit-mean gamma texture, u sums per-patch polarization draws against the
conjugated steering rows, and n is white noise set by the clutter-to-noise
ratio.  Under this construction the covariance of vec(Y) is exactly
kron(Rst.T, Rp), the operator convention fixed in `matcore`.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DatasetFormatError, DimensionMismatchError
from .matcore import KroneckerCov

DEFAULT_N_PATCHES = 181
# Relative diagonal loading applied to the patch-sum space-time factor so the
# stored ground truth is safely positive definite.
RST_FLOOR_REL = 1e-6


@dataclass(frozen=True)
class RadarParams:
    """Radar/platform geometry. Lengths in meters, rates in Hz, speed in m/s."""

    wavelength: float = 0.25
    prf: float = 2000.0
    velocity: float = 125.0
    spacing: float = 0.125
    n_sensors: int = 1
    n_pulses: int = 8
    n_pol: int = 3

    def __post_init__(self):
        for name in ("wavelength", "prf", "velocity", "spacing"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_sensors < 1 or self.n_pulses < 1:
            raise ConfigError("n_sensors and n_pulses must be >= 1")
        if self.n_pol not in (1, 3):
            raise ConfigError("n_pol must be 1 or 3")

    @property
    def n_st(self):
        return self.n_sensors * self.n_pulses

    def doppler_freq(self, azimuth):
        """Normalized Doppler of a patch at the given azimuth (rad)."""
        return (2.0 * self.velocity / (self.wavelength * self.prf)) * math.cos(azimuth)

    def spatial_freq(self, azimuth):
        """Normalized spatial frequency of a patch at the given azimuth (rad)."""
        return (self.spacing / self.wavelength) * math.cos(azimuth)


@dataclass(frozen=True)
class PolarizationParams:
    """HH/VV correlation `rho`, VV/HH power ratio `gamma`, HV/HH ratio `delta`."""

    rho: complex = 0.89
    gamma: float = 0.61
    delta: float = 0.16

    def __post_init__(self):
        if abs(self.rho) >= 1.0:
            raise ConfigError("|rho| must be < 1 for a positive-definite polarization factor")
        if self.gamma <= 0 or self.delta <= 0:
            raise ConfigError("gamma and delta must be positive")


@dataclass(frozen=True)
class ClutterPatch:
    azimuth: float
    power: float = 1.0

    def __post_init__(self):
        if self.power < 0:
            raise ConfigError("patch power must be nonnegative")


@dataclass(frozen=True)
class TextureModel:
    """Gamma texture with unit mean: shape `nu`, scale 1/`nu`."""

    nu: float = 1.0
    family: str = "gamma"

    def __post_init__(self):
        if self.family != "gamma":
            raise ConfigError(f"unsupported texture family {self.family!r}")
        if self.nu <= 0:
            raise ConfigError("texture shape nu must be positive")


@dataclass(frozen=True)
class SceneConfig:
    radar: RadarParams = RadarParams()
    pol: PolarizationParams = PolarizationParams()
    texture: TextureModel = TextureModel()
    cnr_db: float | None = 30.0
    n_samples: int = 8
    seed: int = 0
    n_patches: int = DEFAULT_N_PATCHES
    patches: tuple[ClutterPatch, ...] | None = None

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if self.cnr_db is not None and not math.isfinite(self.cnr_db):
            raise ConfigError("cnr_db must be finite (None disables noise)")
        if self.patches is None and self.n_patches < 1:
            raise ConfigError("n_patches must be >= 1")

    def with_samples(self, n_samples, seed=None):
        return replace(self, n_samples=n_samples, seed=self.seed if seed is None else seed)


@dataclass(frozen=True)
class SampleSet:
    """L data matrices of shape (n_p, n_st), stacked along axis 0."""

    data: np.ndarray
    truth: KroneckerCov | None = None
    noise_power: float | None = None

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.complex128))
        if data.ndim != 3:
            raise DimensionMismatchError(f"sample data must be (L, n_p, n_st), got {data.shape}")
        # degenerate rows/columns break every normalized estimator downstream
        if np.any(np.all(data == 0, axis=2)) or np.any(np.all(data == 0, axis=1)):
            raise DimensionMismatchError("a sample has an all-zero row or column")
        object.__setattr__(self, "data", data)
        if self.truth is not None and (
            self.truth.n_p != data.shape[1] or self.truth.n_st != data.shape[2]
        ):
            raise DimensionMismatchError("ground-truth dimensions do not match the data")

    @property
    def n_samples(self):
        return self.data.shape[0]

    @property
    def n_p(self):
        return self.data.shape[1]

    @property
    def n_st(self):
        return self.data.shape[2]

    @property
    def n(self):
        return self.n_p * self.n_st

    def vecs(self):
        """(L, N) array of column-stacked sample vectors."""
        return self.data.transpose(0, 2, 1).reshape(self.n_samples, self.n)


def temporal_steering(f_d, n_pulses):
    """[1, e^{j2 pi f_d}, ..., e^{j2 pi (n-1) f_d}]."""
    return np.exp(2j * np.pi * f_d * np.arange(n_pulses))


def spatial_steering(f_s, n_sensors):
    return np.exp(2j * np.pi * f_s * np.arange(n_sensors))


def space_time_steering(f_d, f_s, radar):
    """Temporal kron spatial steering vector of length n_st."""
    return np.kron(temporal_steering(f_d, radar.n_pulses),
                   spatial_steering(f_s, radar.n_sensors))


def build_Rp(pol):
    """3x3 polarization covariance from the channel correlation parameters."""
    r = complex(pol.rho)
    g = pol.gamma
    sg = math.sqrt(g)
    return np.array(
        [
            [1.0, r * sg, 0.0],
            [np.conj(r) * sg, g, 0.0],
            [0.0, 0.0, pol.delta],
        ],
        dtype=np.complex128,
    )


def default_patches(n_patches=DEFAULT_N_PATCHES):
    """Dense clutter ridge: azimuths uniform over [-90, 90] deg, equal power.

    Powers are normalized so the resulting space-time factor has trace n_st.
    """
    az = np.linspace(-np.pi / 2, np.pi / 2, n_patches)
    return tuple(ClutterPatch(azimuth=float(a), power=1.0 / n_patches) for a in az)


def scene_patches(cfg):
    return cfg.patches if cfg.patches is not None else default_patches(cfg.n_patches)


def build_Rst(patches, radar, floor_rel=RST_FLOOR_REL):
    """Space-time factor: sum of eps_i a_i a_i^H over patches, plus a small
    trace-relative diagonal floor so the result is positive definite."""
    patches = tuple(patches)
    if not patches:
        raise ConfigError("at least one clutter patch is required")
    if all(p.power == 0 for p in patches):
        raise ConfigError("at least one clutter patch must have positive power")
    n_st = radar.n_st
    steer = np.empty((len(patches), n_st), dtype=np.complex128)
    eps = np.empty(len(patches))
    for i, patch in enumerate(patches):
        steer[i] = space_time_steering(
            radar.doppler_freq(patch.azimuth), radar.spatial_freq(patch.azimuth), radar
        )
        eps[i] = patch.power
    rst = np.einsum("i,ij,ik->jk", eps, steer, steer.conj(), optimize=True)
    rst = 0.5 * (rst + rst.conj().T)
    if floor_rel:
        rst = rst + (floor_rel * np.trace(rst).real / n_st) * np.eye(n_st)
    return rst


def scene_truth(cfg):
    """Ground-truth factor pair of a scene (clutter only, no noise term)."""
    rst = build_Rst(scene_patches(cfg), cfg.radar)
    if cfg.radar.n_pol == 3:
        rp = build_Rp(cfg.pol)
    else:
        rp = np.eye(1, dtype=np.complex128)
    return KroneckerCov(rst, rp)


def noise_variance(cfg, truth=None):
    """Per-entry white noise variance from CNR = total clutter / total noise."""
    if cfg.cnr_db is None:
        return 0.0
    truth = truth if truth is not None else scene_truth(cfg)
    cnr = 10.0 ** (cfg.cnr_db / 10.0)
    return truth.trace() / (truth.n * cnr)


def _substream(seed, kind):
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(kind,)))
    )


def _draw_textures(cfg):
    rng = _substream(cfg.seed, 0)
    return rng.gamma(cfg.texture.nu, 1.0 / cfg.texture.nu, size=cfg.n_samples)


def _complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def generate_sample_set(cfg):
    """Draw a compound-Gaussian sample set with its ground truth attached.

    Per sample: a gamma texture, one polarization draw per clutter patch
    combined against the conjugated patch steering rows, and white noise at
    the configured CNR.  Draws come from three counter-based substreams of
    the scene seed (texture / speckle / noise), so a (config, seed) pair
    reproduces the set bit for bit.
    """
    radar = cfg.radar
    patches = scene_patches(cfg)
    truth = scene_truth(cfg)
    n_c = len(patches)
    n_p, n_st, n_l = radar.n_pol, radar.n_st, cfg.n_samples

    tau = _draw_textures(cfg)
    spk = _substream(cfg.seed, 1)
    g = _complex_normal(spk, (n_l, n_c, n_p))
    f_p = np.linalg.cholesky(truth.p)
    eps = np.sqrt(np.array([p.power for p in patches]))
    # per-patch polarization vectors: sqrt(eps_i) * F_p @ g
    pol_draws = (g @ f_p.T) * eps[None, :, None]
    steer = np.empty((n_c, n_st), dtype=np.complex128)
    for i, patch in enumerate(patches):
        steer[i] = space_time_steering(
            radar.doppler_freq(patch.azimuth), radar.spatial_freq(patch.azimuth), radar
        )
    clutter = np.einsum("lcp,cs->lps", pol_draws, steer.conj(), optimize=True)
    y = np.sqrt(tau)[:, None, None] * clutter

    sigma2 = noise_variance(cfg, truth)
    if sigma2 > 0.0:
        noise = _substream(cfg.seed, 2)
        y = y + np.sqrt(sigma2) * _complex_normal(noise, y.shape)

    return SampleSet(data=y, truth=truth, noise_power=sigma2)


# ---------------------------------------------------------------------------
# Dataset file format (KSAMP v1)
#
# One ASCII header line:  KSAMP v1 Np=<int> Nst=<int> L=<int> truth=yes|no
# followed by a little-endian float64 payload: for each sample, the
# column-stacked complex entries as (re, im) pairs; when truth=yes, the
# space-time factor then the polarization factor row-major as (re, im)
# pairs, then a single float64 noise power.
# ---------------------------------------------------------------------------

_MAGIC = "KSAMP"
_VERSION = "v1"


def _complex_to_pairs(z):
    out = np.empty(z.size * 2)
    out[0::2] = z.real.reshape(-1)
    out[1::2] = z.imag.reshape(-1)
    return out


def _pairs_to_complex(buf):
    return buf[0::2] + 1j * buf[1::2]


def write_sample_set(path, samples):
    """Write a SampleSet to a KSAMP v1 file (lossless round trip)."""
    has_truth = samples.truth is not None
    header = (
        f"{_MAGIC} {_VERSION} Np={samples.n_p} Nst={samples.n_st} "
        f"L={samples.n_samples} truth={'yes' if has_truth else 'no'}\n"
    )
    payload = [_complex_to_pairs(samples.vecs())]
    if has_truth:
        payload.append(_complex_to_pairs(samples.truth.st))
        payload.append(_complex_to_pairs(samples.truth.p))
        payload.append(np.array([samples.noise_power if samples.noise_power else 0.0]))
    blob = np.concatenate(payload).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(blob.tobytes())


def _parse_header(line):
    tokens = line.split()
    if len(tokens) < 5 or tokens[0] != _MAGIC or tokens[1] != _VERSION:
        raise DatasetFormatError(
            f"not a {_MAGIC} {_VERSION} header: {line[:60]!r}", line=1
        )
    fields = {}
    for tok in tokens[2:]:
        if "=" not in tok:
            raise DatasetFormatError(f"malformed header token {tok!r}", line=1)
        key, val = tok.split("=", 1)
        fields[key] = val
    try:
        n_p = int(fields["Np"])
        n_st = int(fields["Nst"])
        n_l = int(fields["L"])
    except (KeyError, ValueError) as exc:
        raise DatasetFormatError(f"bad header dimensions: {exc}", line=1) from None
    truth_tok = fields.get("truth", "no")
    if truth_tok not in ("yes", "no"):
        raise DatasetFormatError(f"truth field must be yes|no, got {truth_tok!r}", line=1)
    if n_p < 1 or n_st < 1 or n_l < 1:
        raise DatasetFormatError("header dimensions must be positive", line=1)
    return n_p, n_st, n_l, truth_tok == "yes"


def read_sample_set(path):
    """Read a KSAMP v1 file back into a SampleSet."""
    with open(path, "rb") as fh:
        raw = fh.readline(4096)
        if not raw or not raw.endswith(b"\n"):
            raise DatasetFormatError("missing or unterminated header line", line=1)
        try:
            header = raw.decode("ascii").rstrip("\n")
        except UnicodeDecodeError:
            raise DatasetFormatError("header is not ASCII", line=1) from None
        n_p, n_st, n_l, has_truth = _parse_header(header)
        offset = len(raw)
        blob = fh.read()
    n = n_p * n_st
    want = 2 * n_l * n
    if has_truth:
        want += 2 * (n_st * n_st + n_p * n_p) + 1
    buf = np.frombuffer(blob, dtype="<f8")
    if buf.size != want:
        raise DatasetFormatError(
            f"payload holds {buf.size} float64 values, expected {want}",
            offset=offset + min(buf.size, want) * 8,
        )
    pos = 2 * n_l * n
    z = _pairs_to_complex(buf[:pos])
    data = z.reshape(n_l, n_st, n_p).transpose(0, 2, 1)
    truth = None
    noise_power = None
    if has_truth:
        m = 2 * n_st * n_st
        rst = _pairs_to_complex(buf[pos:pos + m]).reshape(n_st, n_st)
        pos += m
        m = 2 * n_p * n_p
        rp = _pairs_to_complex(buf[pos:pos + m]).reshape(n_p, n_p)
        pos += m
        truth = KroneckerCov(rst, rp)
        noise_power = float(buf[pos])
    return SampleSet(data=data, truth=truth, noise_power=noise_power)
