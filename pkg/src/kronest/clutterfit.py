"""Empirical amplitude density estimation and moment-based fitting of
Rayleigh (Gaussian speckle), Weibull, K and inverse-Gamma compound-Gaussian
amplitude families, with a mean-square fitting-error figure.

Amplitude parameterizations (r >= 0):

    gaussian  p(r) = (2 r / s2) exp(-r^2 / s2)                params: sigma2
    weibull   p(r) = (k/lam) (r/lam)^(k-1) exp(-(r/lam)^k)    params: shape, scale
    k         p(r) = 4 c^(nu+1) r^nu K_{nu-1}(2 c r) / G(nu)  params: nu, scale
    igcg      p(r) = 2 a r / lam (1 + r^2/lam)^-(a+1)         params: shape, scale

The K and igcg shapes come from the intensity kurtosis m4/m2^2, which is
2(1 + 1/nu) for K and 2(a-1)/(a-2) for the inverse-Gamma texture; ratios
at or below the Gaussian value of 2 are reported as the unbounded-shape
(Gaussian-limit) member of the family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import ConfigError, DimensionMismatchError

FAMILIES = ("gaussian", "weibull", "k", "igcg")
MIN_SAMPLES = 100
DEFAULT_BINS = 100


@dataclass(frozen=True)
class AmplitudeHistogram:
    edges: np.ndarray
    density: np.ndarray
    count: int

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self):
        return np.diff(self.edges)


@dataclass(frozen=True)
class FitResult:
    family: str
    params: dict
    error: float = math.nan
    converged: bool = True
    gaussian_limit: bool = False


def empirical_pdf(amplitudes, bins=DEFAULT_BINS):
    """Normalized density histogram over uniform bins on [0, max]."""
    x = np.asarray(amplitudes, dtype=float).ravel()
    if x.size == 0:
        raise ConfigError("no amplitude samples")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ConfigError("amplitudes must be finite and nonnegative")
    top = float(x.max())
    if top <= 0:
        raise ConfigError("all amplitudes are zero")
    edges = np.linspace(0.0, top * (1.0 + 1e-9), bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    density = counts / (x.size * np.diff(edges))
    return AmplitudeHistogram(edges=edges, density=density, count=x.size)


def _moments_from_hist(hist):
    c, w, d = hist.centers, hist.widths, hist.density
    m1 = float(np.sum(c * d * w))
    m2 = float(np.sum(c**2 * d * w))
    m4 = float(np.sum(c**4 * d * w))
    return m1, m2, m4


def _log_kv(order, x):
    """log K_order(x) for positive x; exponent-scaled with a small-argument
    fallback where the scaled value overflows."""
    with np.errstate(over="ignore"):
        kve = special.kve(order, x)
    out = np.where(kve > 0, np.log(np.where(kve > 0, kve, 1.0)) - x, -np.inf)
    blown = ~np.isfinite(kve)
    if np.any(blown):
        ao = abs(order)
        out = np.where(
            blown,
            math.log(0.5) + special.gammaln(ao) + ao * (np.log(2.0) - np.log(x)),
            out,
        )
    return out


def pdf_eval(family, params, r):
    """Density of a fitted family on a grid of nonnegative amplitudes."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ConfigError("amplitudes must be nonnegative")
    if family == "gaussian":
        s2 = params["sigma2"]
        return 2.0 * r / s2 * np.exp(-(r**2) / s2)
    if family == "weibull":
        k, lam = params["shape"], params["scale"]
        z = r / lam
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (k / lam) * z ** (k - 1.0) * np.exp(-(z**k))
        return np.where(r > 0, out, 0.0 if k > 1 else out)
    if family == "k":
        nu, c = params["nu"], params.get("scale")
        if not math.isfinite(nu):
            return pdf_eval("gaussian", {"sigma2": params["sigma2"]}, r)
        out = np.zeros_like(r)
        pos = r > 0
        rp = r[pos]
        log_p = (
            math.log(4.0)
            + (nu + 1.0) * math.log(c)
            + nu * np.log(rp)
            + _log_kv(nu - 1.0, 2.0 * c * rp)
            - special.gammaln(nu)
        )
        out[pos] = np.exp(log_p)
        return out
    if family == "igcg":
        a = params["shape"]
        if not math.isfinite(a):
            return pdf_eval("gaussian", {"sigma2": params["sigma2"]}, r)
        lam = params["scale"]
        return 2.0 * a * r / lam * (1.0 + r**2 / lam) ** (-(a + 1.0))
    raise ConfigError(f"unknown family {family!r}")


def _weibull_moment_ratio(k):
    return math.exp(special.gammaln(1.0 + 2.0 / k) - 2.0 * special.gammaln(1.0 + 1.0 / k))


def fit_family(amplitudes, family, bins=DEFAULT_BINS):
    """Moment-based fit of one family; the returned error is the mean square
    gap between the empirical density and the fitted density at bin centers."""
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}; choose from {FAMILIES}")
    if isinstance(amplitudes, AmplitudeHistogram):
        hist = amplitudes
        m1, m2, m4 = _moments_from_hist(hist)
        count = hist.count
    else:
        x = np.asarray(amplitudes, dtype=float).ravel()
        count = x.size
        if count >= MIN_SAMPLES:
            hist = empirical_pdf(x, bins)
            m1 = float(np.mean(x))
            m2 = float(np.mean(x**2))
            m4 = float(np.mean(x**4))
    if count < MIN_SAMPLES:
        raise ConfigError(f"need at least {MIN_SAMPLES} samples to fit, got {count}")
    if m2 <= 0:
        raise ConfigError("amplitude second moment is zero")

    converged = True
    gaussian_limit = False
    if family == "gaussian":
        params = {"sigma2": m2}
    elif family == "weibull":
        target = m2 / m1**2
        lo, hi = 0.05, 200.0
        if target <= _weibull_moment_ratio(hi):
            k, converged = hi, False
        elif target >= _weibull_moment_ratio(lo):
            k, converged = lo, False
        else:
            k = optimize.brentq(lambda v: _weibull_moment_ratio(v) - target, lo, hi)
        params = {"shape": k, "scale": m1 / math.exp(special.gammaln(1.0 + 1.0 / k))}
    elif family == "k":
        ratio = m4 / m2**2
        if ratio <= 2.0:
            params = {"nu": math.inf, "sigma2": m2}
            gaussian_limit = True
        else:
            nu = 2.0 / (ratio - 2.0)
            params = {"nu": nu, "scale": math.sqrt(nu / m2)}
    else:  # igcg
        ratio = m4 / m2**2
        if ratio <= 2.0:
            params = {"shape": math.inf, "sigma2": m2}
            gaussian_limit = True
        else:
            a = 2.0 + 2.0 / (ratio - 2.0)
            params = {"shape": a, "scale": m2 * (a - 1.0)}

    fitted = pdf_eval(family, params, hist.centers)
    error = float(np.mean((hist.density - fitted) ** 2))
    return FitResult(family=family, params=params, error=error,
                     converged=converged, gaussian_limit=gaussian_limit)


def fitting_error(hist, fit):
    """Mean over bins of the squared empirical-vs-fitted density gap."""
    fitted = pdf_eval(fit.family, fit.params, hist.centers)
    return float(np.mean((hist.density - fitted) ** 2))


def fit_all(amplitudes, families=FAMILIES, bins=DEFAULT_BINS):
    return [fit_family(amplitudes, fam, bins) for fam in families]


def load_amplitudes(path):
    """Amplitudes from a CSV file (one value per line) or the magnitudes of
    a KSAMP dataset's entries."""
    with open(path, "rb") as fh:
        head = fh.read(5)
    if head == b"KSAMP":
        from .cluttergen import read_sample_set

        return np.abs(read_sample_set(path).data).ravel()
    values = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: not a number: {line!r}") from None
    return np.asarray(values)
