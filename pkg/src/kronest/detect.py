"""Normalized matched filter detection: test statistic, Monte-Carlo
threshold calibration for a target false-alarm rate, target injection and
probability-of-detection sweeps.

The estimator under test is passed as a callable mapping a SampleSet of
secondary data to either a factor pair or a full covariance matrix; each
trial draws fresh secondary data plus one cell-under-test sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cluttergen import SceneConfig, generate_sample_set, space_time_steering
from .errors import ConfigError, DegenerateSampleError
from .matcore import KroneckerCov, bilinear_form, quad_form, vec
from .metrics import _pinv_hermitian


@dataclass(frozen=True)
class TargetSignature:
    """Target steering in matrix form: polarization vector times the
    conjugate-transposed space-time steering vector."""

    doppler: float = 0.25
    azimuth: float = 0.0
    elevation: float = math.radians(3.6)
    pol: tuple = (1.0, 0.0, 0.0)

    def matrix(self, radar):
        """(n_pol, n_st) signature matrix for the given radar geometry."""
        p = np.asarray(self.pol, dtype=np.complex128)
        if p.size != radar.n_pol or not np.any(p):
            raise ConfigError(
                f"polarization vector must be nonzero with {radar.n_pol} entries"
            )
        f_s = (radar.spacing / radar.wavelength) * math.cos(self.azimuth) * math.cos(
            self.elevation
        )
        a = space_time_steering(self.doppler, f_s, radar)
        return np.outer(p, a.conj())


@dataclass(frozen=True)
class DetectionThreshold:
    value: float
    pfa_target: float
    trials: int
    seed: int
    unstable: bool = False


def nmf_statistic(s_mat, y_mat, est):
    """|B(S, Y)|^2 / (B(S, S) B(Y, Y)) in [0, 1]; scale-free in Y and in
    the covariance estimate."""
    s_mat = np.asarray(s_mat, dtype=np.complex128)
    y_mat = np.asarray(y_mat, dtype=np.complex128)
    if isinstance(est, KroneckerCov):
        cross = bilinear_form(s_mat, y_mat, est)
        b_ss = quad_form(s_mat, est)
        b_yy = quad_form(y_mat, est)
    else:
        m = _pinv_hermitian(np.asarray(est))
        s_vec, y_vec = vec(s_mat), vec(y_mat)
        ms = m @ s_vec
        cross = np.vdot(ms, y_vec)
        b_ss = np.vdot(s_vec, ms).real
        b_yy = np.vdot(y_vec, m @ y_vec).real
    if b_yy <= 0.0:
        raise DegenerateSampleError("test cell has zero energy under the estimate")
    return float((cross.real ** 2 + cross.imag ** 2) / (b_ss * b_yy))


def nmf_batch(s_mat, y_batch, est):
    """Vectorized statistic over a stack of test cells against one estimate."""
    y_batch = np.asarray(y_batch, dtype=np.complex128)
    if isinstance(est, KroneckerCov):
        m_p = np.linalg.inv(est.p)
        m_st = np.linalg.inv(est.st)
        ws = m_p @ s_mat @ m_st  # Rp^{-1} S Rst^{-1}
        cross = np.einsum("pi,lpi->l", ws.conj(), y_batch)
        b_ss = np.einsum("pi,pi->", s_mat.conj(), ws).real
        b_yy = np.einsum("lpi,pq,lqj,ji->l", y_batch.conj(), m_p, y_batch, m_st,
                         optimize=True).real
    else:
        m = _pinv_hermitian(np.asarray(est))
        s_vec = vec(s_mat)
        v = y_batch.transpose(0, 2, 1).reshape(y_batch.shape[0], -1)
        ms = m @ s_vec
        cross = v @ ms.conj()
        b_ss = np.vdot(s_vec, ms).real
        b_yy = np.einsum("li,ij,lj->l", v.conj(), m, v).real
    if np.any(b_yy <= 0.0):
        raise DegenerateSampleError("a test cell has zero energy under the estimate")
    return (cross.real ** 2 + cross.imag ** 2) / (b_ss * b_yy)


def inject_target(y_mat, s_mat, alpha):
    """Additive target return with complex amplitude alpha."""
    return y_mat + alpha * s_mat


def amplitude_for_scr(scr_db, s_mat, clutter_trace, mean_texture=1.0):
    """|alpha| such that per-element target power over per-element clutter
    power equals the requested ratio."""
    s_norm2 = np.vdot(s_mat, s_mat).real
    if s_norm2 <= 0.0:
        raise ConfigError("signature matrix must be nonzero")
    scr = 10.0 ** (scr_db / 10.0)
    return math.sqrt(scr * clutter_trace * mean_texture / s_norm2)


def _trial_seeds(seed, n, stream):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return [int(v) for v in ss.generate_state(n, dtype=np.uint64)]


def _h0_statistics(scene, estimator, s_mat, trials, seed, reuse_cm):
    n_l = scene.n_samples
    if reuse_cm:
        fit_set = generate_sample_set(replace(scene, seed=_trial_seeds(seed, 1, 10)[0]))
        est = estimator(fit_set)
        cuts = generate_sample_set(
            replace(scene, seed=_trial_seeds(seed, 1, 11)[0], n_samples=max(trials, 2))
        )
        return np.asarray(nmf_batch(s_mat, cuts.data[:trials], est))
    lams = np.empty(trials)
    for t, child in enumerate(_trial_seeds(seed, trials, 12)):
        ss = generate_sample_set(replace(scene, seed=child, n_samples=n_l + 1))
        from .cluttergen import SampleSet

        secondary = SampleSet(ss.data[:n_l], truth=ss.truth, noise_power=ss.noise_power)
        est = estimator(secondary)
        lams[t] = nmf_statistic(s_mat, ss.data[n_l], est)
    return lams


def calibrate_threshold(pfa, scene, estimator, target=TargetSignature(), trials=None,
                        seed=0, reuse_cm=False):
    """Empirical (1 - pfa) quantile of the statistic under target-free trials.

    Each trial draws fresh secondary data, fits the estimator, draws a fresh
    test cell and scores it; `reuse_cm` amortizes one fit across all trials.
    """
    if pfa <= 0.0:
        raise ConfigError("pfa must be positive")
    if pfa >= 1.0:
        return DetectionThreshold(0.0, pfa, 0, seed)
    if trials is None:
        trials = math.ceil(100.0 / pfa)
    unstable = trials < 10.0 / pfa
    s_mat = target.matrix(scene.radar)
    lams = _h0_statistics(scene, estimator, s_mat, trials, seed, reuse_cm)
    value = float(np.quantile(lams, 1.0 - pfa))
    return DetectionThreshold(value, pfa, trials, seed, unstable=unstable)


def measure_pfa(threshold, scene, estimator, target=TargetSignature(), trials=10000,
                seed=1, reuse_cm=False):
    """Observed false-alarm rate of a calibrated threshold on fresh trials."""
    s_mat = target.matrix(scene.radar)
    lams = _h0_statistics(scene, estimator, s_mat, trials, seed, reuse_cm)
    return float(np.mean(lams > threshold.value))


def pd_curve(scr_db_list, scene, estimator, threshold, target=TargetSignature(),
             trials=1000, seed=2, reuse_cm=False):
    """Detection fraction per signal-to-clutter ratio.

    The injected amplitude is set from the scene's ground-truth clutter
    power; the target phase is uniform per trial.

    Returns a list of (scr_db, trials, detections, pd) tuples.
    """
    from .cluttergen import SampleSet, scene_truth

    n_l = scene.n_samples
    s_mat = target.matrix(scene.radar)
    clutter_trace = scene_truth(scene).trace()
    phase_rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(13,)))
    )
    out = []
    for pt, scr_db in enumerate(scr_db_list):
        amp = amplitude_for_scr(scr_db, s_mat, clutter_trace)
        phases = phase_rng.uniform(0.0, 2.0 * np.pi, size=trials)
        hits = 0
        if reuse_cm:
            fit_set = generate_sample_set(
                replace(scene, seed=_trial_seeds(seed, 1, 20 + pt)[0])
            )
            est = estimator(fit_set)
            cuts = generate_sample_set(
                replace(scene, seed=_trial_seeds(seed, 1, 40 + pt)[0],
                        n_samples=max(trials, 2))
            )
            alphas = amp * np.exp(1j * phases)
            with_target = cuts.data[:trials] + alphas[:, None, None] * s_mat
            lams = nmf_batch(s_mat, with_target, est)
            hits = int(np.sum(lams > threshold.value))
        else:
            for t, child in enumerate(_trial_seeds(seed + pt + 1, trials, 21)):
                ss = generate_sample_set(replace(scene, seed=child, n_samples=n_l + 1))
                secondary = SampleSet(ss.data[:n_l], truth=ss.truth,
                                      noise_power=ss.noise_power)
                est = estimator(secondary)
                cut = inject_target(ss.data[n_l], s_mat, amp * np.exp(1j * phases[t]))
                if nmf_statistic(s_mat, cut, est) > threshold.value:
                    hits += 1
        out.append((float(scr_db), trials, hits, hits / trials))
    return out
