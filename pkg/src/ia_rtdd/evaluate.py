"""Achievable-rate evaluation, Monte-Carlo SNR sweeps, and baselines.

Rates follow the standard aligned-MIMO form
``log2 det(I + C_desire (I + C_intra + C_inter)^-1)`` evaluated as a
log-determinant difference of two identity-plus-PSD matrices, which avoids
any explicit inverse.  The sweep reruns the full beamformer pipeline per
grid point and trial with fixed random substreams, so results are
bit-reproducible for a given seed; means are ordered folds over ascending
trial index.
"""

import math
from dataclasses import dataclass

import numpy as np

from .beamform import PowerProfile, construct_beamformers, _guarded_pinv
from .errors import NumericalError, SingularSystemError
from .model import RngStream, sample_channels, validate_config

_LN2 = math.log(2.0)


def snr_to_power(snr_db):
    return 10.0 ** (snr_db / 10.0)


def power_profile_for_snr(config, snr_db):
    """Sweep power convention: the downlink BS budget equals the SNR and is
    split equally over its K users; every uplink user transmits at the SNR."""
    p = snr_to_power(snr_db)
    return PowerProfile((p / config.num_alpha,) * config.num_alpha,
                        (p,) * config.num_beta)


@dataclass(frozen=True)
class RateBreakdown:
    per_alpha: tuple
    per_beta: tuple

    @property
    def total(self):
        return sum(self.per_alpha) + sum(self.per_beta)


def _herm(a):
    return 0.5 * (a + a.conj().T)


def _log2_det_ratio(c_desire, c_interf):
    """log2 det(I + C_d (I + C_i)^-1) for Hermitian PSD C_d, C_i."""
    d = c_desire.shape[0]
    eye = np.eye(d)
    base = _herm(eye + c_interf)
    full = _herm(base + c_desire)
    sign_f, ld_f = np.linalg.slogdet(full)
    sign_b, ld_b = np.linalg.slogdet(base)
    val = (ld_f - ld_b) / _LN2
    if sign_f <= 0 or sign_b <= 0 or not np.isfinite(val):
        raise NumericalError(
            f"rate evaluation produced a non-finite value (interference "
            f"condition number {np.linalg.cond(base):.3e})")
    return max(0.0, val)


def _outer(mat, weight):
    return weight * (mat @ mat.conj().T)


def user_rate_alpha(channels, bf, powers, k):
    """Achievable rate of downlink user k in bits per channel use."""
    u = bf.u_alpha[k]
    d = u.shape[1]
    if d == 0:
        return 0.0
    uh = u.conj().T @ channels.h_alpha[k]
    c_desire = _outer(uh @ bf.v_alpha[k], powers.p_alpha[k] / d)
    c_interf = np.zeros((d, d), dtype=np.complex128)
    for i, v in enumerate(bf.v_alpha):
        di = v.shape[1]
        if i == k or di == 0:
            continue
        c_interf += _outer(uh @ v, powers.p_alpha[i] / di)
    for l, v in enumerate(bf.v_beta):
        dl = v.shape[1]
        if dl == 0:
            continue
        c_interf += _outer(u.conj().T @ channels.g_cross[k][l] @ v,
                           powers.p_beta[l] / dl)
    return _log2_det_ratio(c_desire, c_interf)


def user_rate_beta(channels, bf, powers, l):
    """Achievable rate of uplink user l in bits per channel use."""
    u = bf.u_beta[l]
    d = u.shape[1]
    if d == 0:
        return 0.0
    c_desire = _outer(u.conj().T @ channels.h_beta[l] @ bf.v_beta[l],
                      powers.p_beta[l] / d)
    c_interf = np.zeros((d, d), dtype=np.complex128)
    for j, v in enumerate(bf.v_beta):
        dj = v.shape[1]
        if j == l or dj == 0:
            continue
        c_interf += _outer(u.conj().T @ channels.h_beta[j] @ v,
                           powers.p_beta[j] / dj)
    ug = u.conj().T @ channels.g_bs
    for i, v in enumerate(bf.v_alpha):
        di = v.shape[1]
        if di == 0:
            continue
        c_interf += _outer(ug @ v, powers.p_alpha[i] / di)
    return _log2_det_ratio(c_desire, c_interf)


def sum_rate(channels, bf, powers):
    per_alpha = tuple(user_rate_alpha(channels, bf, powers, k)
                      for k in range(len(bf.u_alpha)))
    per_beta = tuple(user_rate_beta(channels, bf, powers, l)
                     for l in range(len(bf.u_beta)))
    return RateBreakdown(per_alpha, per_beta)


def baseline_point_to_point(snr_db):
    """Capacity of a single-antenna point-to-point link at this SNR."""
    return math.log2(1.0 + snr_to_power(snr_db))


def _round_robin_streams(caps, total):
    out = [0] * len(caps)
    while total > 0:
        moved = False
        for i in range(len(caps)):
            if total == 0:
                break
            if out[i] < caps[i]:
                out[i] += 1
                total -= 1
                moved = True
        if not moved:
            break
    return out


def _zf_downlink_rate(h_list, m_antennas, power_total):
    """Zero-forcing sum rate of the downlink cell running alone."""
    caps = [h.shape[0] for h in h_list]
    streams = _round_robin_streams(caps, min(m_antennas, sum(caps)))
    active = [k for k, s in enumerate(streams) if s > 0]
    if not active:
        return 0.0
    p_user = power_total / len(active)
    filters = {}
    rows = []
    for k in active:
        u, _, _ = np.linalg.svd(h_list[k])
        filters[k] = u[:, :streams[k]]
        rows.append(filters[k].conj().T @ h_list[k])
    pre = _guarded_pinv(np.vstack(rows), "single-cell downlink")
    pre = pre / np.linalg.norm(pre, axis=0)[None, :]
    cols = {}
    c = 0
    for k in active:
        cols[k] = pre[:, c:c + streams[k]]
        c += streams[k]
    total = 0.0
    for k in active:
        eff = filters[k].conj().T @ h_list[k]
        c_desire = _outer(eff @ cols[k], p_user / streams[k])
        c_interf = np.zeros((streams[k], streams[k]), dtype=np.complex128)
        for i in active:
            if i != k:
                c_interf += _outer(eff @ cols[i], p_user / streams[i])
        total += _log2_det_ratio(c_desire, c_interf)
    return total


def _zf_uplink_rate(h_list, m_antennas, power_per_user):
    """Zero-forcing sum rate of the uplink cell running alone."""
    caps = [h.shape[1] for h in h_list]
    streams = _round_robin_streams(caps, min(m_antennas, sum(caps)))
    active = [l for l, s in enumerate(streams) if s > 0]
    if not active:
        return 0.0
    pre = {}
    blocks = []
    for l in active:
        _, _, vh = np.linalg.svd(h_list[l])
        pre[l] = vh.conj().T[:, :streams[l]]
        blocks.append(h_list[l] @ pre[l])
    p_up = _guarded_pinv(np.hstack(blocks), "single-cell uplink")
    post = {}
    r = 0
    for l in active:
        blk = p_up[r:r + streams[l], :].conj().T
        post[l] = blk / np.linalg.norm(blk, axis=0)[None, :]
        r += streams[l]
    total = 0.0
    for l in active:
        c_desire = _outer(post[l].conj().T @ h_list[l] @ pre[l],
                          power_per_user / streams[l])
        c_interf = np.zeros((streams[l], streams[l]), dtype=np.complex128)
        for j in active:
            if j != l:
                c_interf += _outer(post[l].conj().T @ h_list[j] @ pre[j],
                                   power_per_user / streams[j])
        total += _log2_det_ratio(c_desire, c_interf)
    return total


def baseline_single_cell(config, snr_db, trials, seed):
    """Mean sum rate of the better cell running alone with zero-forcing.

    Streams are split round-robin up to each user's antenna count; the
    downlink splits the SNR budget over its active users while every uplink
    user transmits at the SNR, matching the sweep's power convention.
    """
    power = snr_to_power(snr_db)
    sum_alpha = 0.0
    sum_beta = 0.0
    for t in range(trials):
        channels = sample_channels(config, RngStream(seed, t))
        sum_alpha += _zf_downlink_rate(list(channels.h_alpha), config.m_alpha, power)
        sum_beta += _zf_uplink_rate(list(channels.h_beta), config.m_beta, power)
    return max(sum_alpha / trials, sum_beta / trials)


@dataclass(frozen=True)
class SweepResult:
    """Mean rates over a Monte-Carlo SNR sweep, one row per grid point."""

    snr_db: tuple
    mean_sum_rate: tuple
    mean_alpha: tuple
    mean_beta: tuple
    baseline_single_cell: tuple
    baseline_p2p: tuple
    trials_ok: tuple
    trials_failed: tuple
    trials: int
    seed: int

    def write_csv(self, fh, float_fmt="%.9g"):
        k_users = len(self.mean_alpha[0]) if self.mean_alpha else 0
        l_users = len(self.mean_beta[0]) if self.mean_beta else 0
        header = ["snr_db", "mean_sum_rate"]
        header += [f"mean_rate_alpha_{k + 1}" for k in range(k_users)]
        header += [f"mean_rate_beta_{l + 1}" for l in range(l_users)]
        header += ["baseline_single_cell", "baseline_p2p", "trials_ok",
                   "trials_failed"]
        fh.write(",".join(header) + "\n")
        for i in range(len(self.snr_db)):
            row = [float_fmt % self.snr_db[i], float_fmt % self.mean_sum_rate[i]]
            row += [float_fmt % v for v in self.mean_alpha[i]]
            row += [float_fmt % v for v in self.mean_beta[i]]
            row += [float_fmt % self.baseline_single_cell[i],
                    float_fmt % self.baseline_p2p[i],
                    str(self.trials_ok[i]), str(self.trials_failed[i])]
            fh.write(",".join(row) + "\n")

    def to_dict(self):
        return {
            "seed": self.seed,
            "trials": self.trials,
            "rows": [
                {
                    "snr_db": self.snr_db[i],
                    "mean_sum_rate": self.mean_sum_rate[i],
                    "mean_rate_alpha": list(self.mean_alpha[i]),
                    "mean_rate_beta": list(self.mean_beta[i]),
                    "baseline_single_cell": self.baseline_single_cell[i],
                    "baseline_p2p": self.baseline_p2p[i],
                    "trials_ok": self.trials_ok[i],
                    "trials_failed": self.trials_failed[i],
                }
                for i in range(len(self.snr_db))
            ],
        }


def monte_carlo_sweep(config, dof, snr_grid_db, trials, opts=None, seed=0):
    """Run the full pipeline per grid point and trial and average the rates.

    Channels for trial t come from substream t of the seed and the filter
    initialization from substream trials + t, so reruns with the same seed
    are bit-identical.  Trials that raise a singular-system or numerical
    error are dropped from the means and counted per grid point; a grid
    point only fails when every trial failed (mean reported as NaN).
    """
    validate_config(config, dof)
    K, L = config.num_alpha, config.num_beta
    grid = [float(s) for s in snr_grid_db]
    rows = {"sum": [], "alpha": [], "beta": [], "single": [], "p2p": [],
            "ok": [], "failed": []}
    for snr_db in grid:
        powers = power_profile_for_snr(config, snr_db)
        acc_alpha = np.zeros(K)
        acc_beta = np.zeros(L)
        ok = 0
        failed = 0
        for t in range(trials):
            channels = sample_channels(config, RngStream(seed, t))
            try:
                bf, _ = construct_beamformers(channels, dof, powers, opts,
                                              rng=RngStream(seed, trials + t))
                rates = sum_rate(channels, bf, powers)
            except (SingularSystemError, NumericalError):
                failed += 1
                continue
            acc_alpha += np.asarray(rates.per_alpha)
            acc_beta += np.asarray(rates.per_beta)
            ok += 1
        if ok:
            mean_alpha = acc_alpha / ok
            mean_beta = acc_beta / ok
            mean_sum = float(mean_alpha.sum() + mean_beta.sum())
        else:
            mean_alpha = np.full(K, np.nan)
            mean_beta = np.full(L, np.nan)
            mean_sum = float("nan")
        rows["sum"].append(mean_sum)
        rows["alpha"].append(tuple(mean_alpha))
        rows["beta"].append(tuple(mean_beta))
        rows["single"].append(baseline_single_cell(config, snr_db, trials, seed))
        rows["p2p"].append(baseline_point_to_point(snr_db))
        rows["ok"].append(ok)
        rows["failed"].append(failed)
    return SweepResult(
        snr_db=tuple(grid),
        mean_sum_rate=tuple(rows["sum"]),
        mean_alpha=tuple(rows["alpha"]),
        mean_beta=tuple(rows["beta"]),
        baseline_single_cell=tuple(rows["single"]),
        baseline_p2p=tuple(rows["p2p"]),
        trials_ok=tuple(rows["ok"]),
        trials_failed=tuple(rows["failed"]),
        trials=trials,
        seed=seed,
    )
