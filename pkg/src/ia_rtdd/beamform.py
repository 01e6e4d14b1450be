"""Construction of aligning precoders and postcoders.

Stage 1 drives the cross-link interference seen by the downlink users to
zero by alternating minimization (`iterate_alignment`): the uplink transmit
filters and downlink receive filters are re-pointed, in turn, at the
eigenvectors of their interference covariance with the smallest eigenvalues.
Stage 2 (`zero_force_step2`) then zero-forces the remaining couplings
(intra-cell interference in both cells and the BS-to-BS link) through
pseudo-inverses of stacked effective channels.  `residual_report` measures
how well a finished beamformer set satisfies every alignment condition.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, SingularSystemError
from .model import NetworkConfig, RngStream, complex_gaussian, validate_config

COND_LIMIT = 1e12
_PHASE_TOL = 1e-12


@dataclass(frozen=True)
class PowerProfile:
    """Per-user transmit powers, linear scale."""

    p_alpha: tuple
    p_beta: tuple

    def __post_init__(self):
        object.__setattr__(self, "p_alpha", tuple(float(p) for p in self.p_alpha))
        object.__setattr__(self, "p_beta", tuple(float(p) for p in self.p_beta))
        if any(p < 0 for p in self.p_alpha) or any(p < 0 for p in self.p_beta):
            raise ConfigError("transmit powers must be >= 0")

    @property
    def total_alpha(self):
        return sum(self.p_alpha)


@dataclass(frozen=True)
class IterationOptions:
    max_iters: int = 5000
    leakage_stop: float = 1e-10
    record_trace: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.leakage_stop > 0:
            raise ConfigError("leakage_stop must be > 0")


@dataclass(frozen=True)
class LeakageTrace:
    """Total and per-user leakage power after each iteration."""

    totals: np.ndarray
    per_user: np.ndarray
    converged: bool

    @property
    def iterations(self):
        return len(self.totals)

    @property
    def final(self):
        return float(self.totals[-1])

    def write_csv(self, fh, float_fmt="%.9g"):
        k_users = self.per_user.shape[1]
        header = ["iteration", "total_leakage"]
        header += [f"leakage_alpha_{k + 1}" for k in range(k_users)]
        fh.write(",".join(header) + "\n")
        for i in range(len(self.totals)):
            row = [str(i + 1), float_fmt % self.totals[i]]
            row += [float_fmt % v for v in self.per_user[i]]
            fh.write(",".join(row) + "\n")


@dataclass(frozen=True)
class BeamformerSet:
    """Receive filters U and transmit filters V for every user.

    * ``u_alpha[k]``: N_alpha_k x d_alpha_k, ``v_alpha[k]``: M_alpha x d_alpha_k
    * ``u_beta[l]``: M_beta x d_beta_l,      ``v_beta[l]``: N_beta_l x d_beta_l

    After `normalize` every column has unit norm.
    """

    u_alpha: tuple
    v_alpha: tuple
    u_beta: tuple
    v_beta: tuple


def _fix_column_phases(mat):
    """Rotate each column so its first non-negligible entry is real positive."""
    out = np.array(mat, dtype=np.complex128, copy=True)
    for c in range(out.shape[1]):
        col = out[:, c]
        mags = np.abs(col)
        lead = np.flatnonzero(mags > _PHASE_TOL * mags.max())
        if lead.size:
            j = lead[0]
            out[:, c] = col * (np.conj(col[j]) / mags[j])
    return out


def init_postcoders(config, dof, rng):
    """Haar-random orthonormal initial receive filters, one per downlink user."""
    validate_config(config, dof)
    g = rng.generator()
    out = []
    for n, d in zip(config.n_alpha, dof.d_alpha):
        if d == 0:
            out.append(np.zeros((n, 0), dtype=np.complex128))
            continue
        a = complex_gaussian(g, n, d)
        q, r = np.linalg.qr(a)
        diag = np.diag(r).copy()
        diag[diag == 0] = 1.0
        out.append(q * (diag / np.abs(diag))[None, :])
    return tuple(out)


def covariance_tx(channels, u_alpha, powers, l):
    """Interference covariance at uplink user l through the reciprocal cross links."""
    nb = channels.g_cross[0][l].shape[1]
    cov = np.zeros((nb, nb), dtype=np.complex128)
    for k, u in enumerate(u_alpha):
        d = u.shape[1]
        if d == 0:
            continue
        t = channels.g_cross[k][l].conj().T @ u
        cov += (powers.p_alpha[k] / d) * (t @ t.conj().T)
    return 0.5 * (cov + cov.conj().T)


def covariance_rx(channels, v_beta, powers, k):
    """Interference covariance at downlink user k from the uplink transmitters."""
    na = channels.g_cross[k][0].shape[0]
    cov = np.zeros((na, na), dtype=np.complex128)
    for l, v in enumerate(v_beta):
        d = v.shape[1]
        if d == 0:
            continue
        t = channels.g_cross[k][l] @ v
        cov += (powers.p_beta[l] / d) * (t @ t.conj().T)
    return 0.5 * (cov + cov.conj().T)


def update_v_beta(cov, d):
    """Orthonormal eigenvectors of the d smallest eigenvalues, ascending.

    Ties keep the decomposition's deterministic output order; each column is
    phase-rotated so its first non-negligible entry is real positive.
    """
    herm_gap = np.linalg.norm(cov - cov.conj().T)
    if herm_gap > 1e-8 * max(1.0, np.linalg.norm(cov)):
        raise ConfigError(f"covariance is not Hermitian (residual {herm_gap:.3e})")
    if d > cov.shape[0]:
        raise ConfigError(f"cannot extract {d} eigenvectors from size {cov.shape[0]}")
    _, vecs = np.linalg.eigh(0.5 * (cov + cov.conj().T))
    return _fix_column_phases(vecs[:, :d])


def _channel_dims(channels):
    n_alpha = tuple(h.shape[0] for h in channels.h_alpha)
    n_beta = tuple(h.shape[1] for h in channels.h_beta)
    return n_alpha, n_beta


def iterate_alignment(channels, dof, powers, opts=None, rng=None):
    """Alternating leakage minimization for the stage-1 filters.

    Follows the loop order: transmit filters of every uplink user from the
    previous receive filters, then receive filters of every downlink user
    from the fresh transmit filters, with the per-user leakage (trace of the
    projected interference covariance) recorded each iteration.  Stops when
    the total drops to ``leakage_stop`` times the first iteration's total or
    after ``max_iters``; non-convergence is reported in the trace, never
    raised.

    Returns ``(u_alpha, v_beta, trace)``.
    """
    opts = opts or IterationOptions()
    if rng is None:
        rng = RngStream(0, 1)
    n_alpha, n_beta = _channel_dims(channels)
    m_alpha = channels.h_alpha[0].shape[1]
    m_beta = channels.h_beta[0].shape[0]
    config = NetworkConfig(m_alpha, n_alpha, m_beta, n_beta)
    validate_config(config, dof)
    K, L = len(n_alpha), len(n_beta)

    na_max, nb_max = max(n_alpha), max(n_beta)
    da_max = max(max(dof.d_alpha), 1)
    g_pad = np.zeros((K, L, na_max, nb_max), dtype=np.complex128)
    for k in range(K):
        for l in range(L):
            g_pad[k, l, :n_alpha[k], :n_beta[l]] = channels.g_cross[k][l]
    u0 = init_postcoders(config, dof, rng)
    u0_pad = np.zeros((K, na_max, da_max), dtype=np.complex128)
    for k in range(K):
        u0_pad[k, :n_alpha[k], :dof.d_alpha[k]] = u0[k]
    w_alpha = [p / d if d else 0.0 for p, d in zip(powers.p_alpha, dof.d_alpha)]
    w_beta = [p / d if d else 0.0 for p, d in zip(powers.p_beta, dof.d_beta)]

    u_pad, v_pad, totals, per_user, n_iters, converged = _kernels.alignment_loop(
        g_pad, n_alpha, n_beta, dof.d_alpha, dof.d_beta,
        w_alpha, w_beta, u0_pad, opts.max_iters, opts.leakage_stop)

    u_alpha = tuple(u_pad[k, :n_alpha[k], :dof.d_alpha[k]].copy() for k in range(K))
    v_beta = tuple(v_pad[l, :n_beta[l], :dof.d_beta[l]].copy() for l in range(L))
    lo = 0 if opts.record_trace else n_iters - 1
    trace = LeakageTrace(totals[lo:n_iters].copy(), per_user[lo:n_iters].copy(),
                         bool(converged))
    return u_alpha, v_beta, trace


def _guarded_pinv(a, branch):
    """SVD pseudo-inverse with a condition-number guard."""
    m, n = a.shape
    if m == 0 or n == 0:
        return np.zeros((n, m), dtype=np.complex128)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s[-1] <= 0 or s[0] / s[-1] > COND_LIMIT:
        raise SingularSystemError(
            f"stacked effective channel in the {branch} branch is rank "
            f"deficient (condition number above {COND_LIMIT:.0e})")
    return (vh.conj().T * (1.0 / s)[None, :]) @ u.conj().T


def _split_cols(mat, widths):
    out = []
    c = 0
    for w in widths:
        out.append(mat[:, c:c + w].copy())
        c += w
    return tuple(out)


def _split_rows(mat, widths):
    out = []
    r = 0
    for w in widths:
        out.append(mat[r:r + w, :].copy())
        r += w
    return tuple(out)


def zero_force_step2(channels, dof, u_alpha, v_beta):
    """Zero-force the remaining couplings given the stage-1 filters.

    When the downlink BS has at least as many antennas as the uplink BS, the
    uplink receive filters come first (left pseudo-inverse of the stacked
    uplink effective channels) and the downlink precoders then null both the
    intra-cell and the BS-to-BS interference (leading columns of the right
    pseudo-inverse of the combined stack).  Otherwise the mirrored order is
    used.  Outputs are unnormalized; run `normalize` afterwards.

    Returns ``(v_alpha, u_beta)``.
    """
    n_alpha, n_beta = _channel_dims(channels)
    m_alpha = channels.h_alpha[0].shape[1]
    m_beta = channels.h_beta[0].shape[0]
    K, L = len(n_alpha), len(n_beta)
    da, db = dof.d_alpha, dof.d_beta
    sum_a, sum_b = sum(da), sum(db)

    eff_beta = [channels.h_beta[l] @ v_beta[l] for l in range(L)]
    eff_alpha = [u_alpha[k].conj().T @ channels.h_alpha[k] for k in range(K)]

    if m_alpha >= m_beta:
        if sum_b:
            h_up = np.hstack(eff_beta)
            p_up = _guarded_pinv(h_up, "downlink-heavy")
        else:
            p_up = np.zeros((0, m_beta), dtype=np.complex128)
        u_beta = tuple(blk.conj().T for blk in _split_rows(p_up, db))
        stack = eff_alpha + ([p_up @ channels.g_bs] if sum_b else [])
        if sum_a + sum_b == 0:
            v_alpha = tuple(np.zeros((m_alpha, 0), dtype=np.complex128)
                            for _ in range(K))
            return v_alpha, u_beta
        h_dn = np.vstack(stack)
        r = _guarded_pinv(h_dn, "downlink-heavy")
        v_alpha = _split_cols(r[:, :sum_a], da)
        return v_alpha, u_beta

    if sum_a:
        h_dn = np.vstack(eff_alpha)
        r = _guarded_pinv(h_dn, "uplink-heavy")
        v_alpha = _split_cols(r, da)
    else:
        v_alpha = tuple(np.zeros((m_alpha, 0), dtype=np.complex128)
                        for _ in range(K))
    stack = eff_beta + ([channels.g_bs @ np.hstack(v_alpha)] if sum_a else [])
    if sum_a + sum_b == 0:
        u_beta = tuple(np.zeros((m_beta, 0), dtype=np.complex128)
                       for _ in range(L))
        return v_alpha, u_beta
    h_up = np.hstack(stack)
    p_up = _guarded_pinv(h_up, "uplink-heavy")
    u_beta = tuple(blk.conj().T for blk in _split_rows(p_up[:sum_b, :], db))
    return v_alpha, u_beta


def _normalize_matrix(mat, what):
    if mat.shape[1] == 0:
        return mat.copy()
    norms = np.linalg.norm(mat, axis=0)
    if np.any(~(norms > 0)):
        raise ConfigError(f"zero column in {what}")
    return mat / norms[None, :]


def normalize(bf):
    """Rescale every column of every filter to unit norm (idempotent)."""
    return BeamformerSet(
        u_alpha=tuple(_normalize_matrix(m, f"u_alpha[{k + 1}]")
                      for k, m in enumerate(bf.u_alpha)),
        v_alpha=tuple(_normalize_matrix(m, f"v_alpha[{k + 1}]")
                      for k, m in enumerate(bf.v_alpha)),
        u_beta=tuple(_normalize_matrix(m, f"u_beta[{l + 1}]")
                     for l, m in enumerate(bf.u_beta)),
        v_beta=tuple(_normalize_matrix(m, f"v_beta[{l + 1}]")
                     for l, m in enumerate(bf.v_beta)),
    )


def construct_beamformers(channels, dof, powers, opts=None, rng=None):
    """Full pipeline: alternating minimization, zero-forcing, normalization.

    Returns ``(BeamformerSet, LeakageTrace)``.
    """
    u_alpha, v_beta, trace = iterate_alignment(channels, dof, powers, opts, rng)
    v_alpha, u_beta = zero_force_step2(channels, dof, u_alpha, v_beta)
    bf = normalize(BeamformerSet(u_alpha, v_alpha, u_beta, v_beta))
    return bf, trace


def _min_singular(mat):
    if mat.size == 0:
        return np.inf
    return float(np.linalg.svd(mat, compute_uv=False)[-1])


@dataclass(frozen=True)
class ResidualReport:
    """Frobenius norms of every alignment term plus desired-link rank margins.

    ``inter_alpha[k, l]`` is the cross-link residual at downlink user k from
    uplink user l; ``inter_beta[l, k]`` the BS-to-BS residual at uplink
    stream group l from downlink precoder k; the intra matrices hold
    off-diagonal in-cell residuals (diagonal fixed at zero).  Margins are the
    smallest singular values of the effective desired-link matrices
    (infinite for zero-stream users).
    """

    inter_alpha: np.ndarray
    inter_beta: np.ndarray
    intra_alpha: np.ndarray
    intra_beta: np.ndarray
    margin_alpha: np.ndarray
    margin_beta: np.ndarray

    @property
    def max_inter_alpha(self):
        return float(self.inter_alpha.max()) if self.inter_alpha.size else 0.0

    @property
    def max_inter_beta(self):
        return float(self.inter_beta.max()) if self.inter_beta.size else 0.0

    @property
    def max_intra_alpha(self):
        return float(self.intra_alpha.max()) if self.intra_alpha.size else 0.0

    @property
    def max_intra_beta(self):
        return float(self.intra_beta.max()) if self.intra_beta.size else 0.0

    @property
    def min_margin(self):
        margins = np.concatenate([self.margin_alpha, self.margin_beta])
        finite = margins[np.isfinite(margins)]
        return float(finite.min()) if finite.size else np.inf

    def to_dict(self):
        def clean(a):
            return np.where(np.isfinite(a), a, -1.0).tolist()

        return {
            "inter_alpha": self.inter_alpha.tolist(),
            "inter_beta": self.inter_beta.tolist(),
            "intra_alpha": self.intra_alpha.tolist(),
            "intra_beta": self.intra_beta.tolist(),
            "margin_alpha": clean(self.margin_alpha),
            "margin_beta": clean(self.margin_beta),
        }


def residual_report(channels, bf, dof):
    """Measure every alignment condition for a finished beamformer set."""
    K = len(channels.h_alpha)
    L = len(channels.h_beta)
    inter_alpha = np.zeros((K, L))
    for k in range(K):
        for l in range(L):
            term = bf.u_alpha[k].conj().T @ channels.g_cross[k][l] @ bf.v_beta[l]
            inter_alpha[k, l] = np.linalg.norm(term)
    inter_beta = np.zeros((L, K))
    for l in range(L):
        for k in range(K):
            term = bf.u_beta[l].conj().T @ channels.g_bs @ bf.v_alpha[k]
            inter_beta[l, k] = np.linalg.norm(term)
    intra_alpha = np.zeros((K, K))
    for k in range(K):
        for i in range(K):
            if i == k:
                continue
            term = bf.u_alpha[k].conj().T @ channels.h_alpha[k] @ bf.v_alpha[i]
            intra_alpha[k, i] = np.linalg.norm(term)
    intra_beta = np.zeros((L, L))
    for l in range(L):
        for j in range(L):
            if j == l:
                continue
            term = bf.u_beta[l].conj().T @ channels.h_beta[j] @ bf.v_beta[j]
            intra_beta[l, j] = np.linalg.norm(term)
    margin_alpha = np.array([
        _min_singular(bf.u_alpha[k].conj().T @ channels.h_alpha[k] @ bf.v_alpha[k])
        for k in range(K)])
    margin_beta = np.array([
        _min_singular(bf.u_beta[l].conj().T @ channels.h_beta[l] @ bf.v_beta[l])
        for l in range(L)])
    return ResidualReport(inter_alpha, inter_beta, intra_alpha, intra_beta,
                          margin_alpha, margin_beta)
