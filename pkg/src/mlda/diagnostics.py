"""Chain diagnostics: autocorrelation, effective sample size, acceptance, throughput."""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy import fft, stats

from .model import ContractViolation

# superefficient chains can exceed N, but not by more than this factor
ESS_CAP_FACTOR = 4.0


class DegenerateChainError(ValueError):
    """The series has zero variance, so autocorrelations are undefined."""


def _centred(series, min_length):
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ContractViolation("expected a one-dimensional series")
    if x.size < min_length:
        raise ContractViolation(f"series needs at least {min_length} values, got {x.size}")
    x = x - x.mean()
    if not np.any(x):
        raise DegenerateChainError("constant series")
    return x


def autocovariance(series, max_lag: Optional[int] = None, method: str = "fft") -> np.ndarray:
    """Biased (``1/N``) autocovariance at lags ``0..max_lag``."""
    x = _centred(series, 2)
    n = x.size
    max_lag = n - 1 if max_lag is None else min(int(max_lag), n - 1)
    if method == "direct":
        return np.array([x[: n - k] @ x[k:] for k in range(max_lag + 1)]) / n
    if method != "fft":
        raise ContractViolation(f"unknown method {method!r}")
    size = fft.next_fast_len(2 * n)
    spec = fft.rfft(x, size)
    return fft.irfft(spec * np.conj(spec), size)[: max_lag + 1] / n


def autocorrelation(series, max_lag: Optional[int] = None, method: str = "fft") -> np.ndarray:
    """Normalised autocovariance, lags ``0..max_lag`` (default ``N // 2``)."""
    x = np.asarray(series, dtype=float)
    if x.size < 4:
        raise ContractViolation("autocorrelation needs at least four values")
    if max_lag is None:
        max_lag = x.size // 2
    acov = autocovariance(x, max_lag, method)
    acf = acov / acov[0]
    acf[0] = 1.0
    return acf


def _as_chains(chains) -> np.ndarray:
    a = np.asarray(chains, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ContractViolation("chains must be a 1-D series or a (chains, draws) array")
    if a.shape[1] < 8:
        raise ContractViolation(f"ESS needs at least 8 draws per chain, got {a.shape[1]}")
    return a


def split_chains(chains) -> np.ndarray:
    a = _as_chains(chains)
    half = a.shape[1] // 2
    return np.vstack([a[:, :half], a[:, -half:]])


def rank_normalize(chains) -> np.ndarray:
    """Normal scores of the pooled ranks (average ranks for ties)."""
    a = np.asarray(chains, dtype=float)
    ranks = stats.rankdata(a, method="average").reshape(a.shape)
    return stats.norm.ppf((ranks - 0.375) / (a.size + 0.25))


def _row_autocovariance(row: np.ndarray) -> np.ndarray:
    # a constant split half contributes zero autocovariance; only the pooled variance must be positive
    if np.ptp(row) == 0:
        return np.zeros(row.size)
    return autocovariance(row)


def _geyer_ess(a: np.ndarray) -> float:
    m, n = a.shape
    acov = np.array([_row_autocovariance(row) for row in a])
    chain_mean = a.mean(axis=1)
    mean_var = acov[:, 0].mean() * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += np.var(chain_mean, ddof=1)
    if var_plus <= 0:
        raise DegenerateChainError("zero pooled variance")

    rho = np.zeros(n)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    # initial positive sequence over pairs of lags
    t = 1
    while t < n - 2 and rho_even + rho_odd >= 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0.0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t
    # initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = (rho[t - 1] + rho[t]) / 2.0
        t += 2
    tau = -1.0 + 2.0 * rho[:max_t].sum() + rho[max_t + 1: max_t + 2].sum()
    tau = max(tau, 1.0 / ESS_CAP_FACTOR)
    return m * n / tau


def effective_sample_size(chains, rank: bool = True, split: bool = True) -> float:
    """Rank-normalised split-chain ESS with Geyer's initial monotone truncation.

    ``chains`` is one series or a ``(chains, draws)`` array of one parameter.
    """
    a = _as_chains(chains)
    if np.ptp(a) == 0:
        raise DegenerateChainError("constant chains")
    if split:
        a = split_chains(a)
    if rank:
        a = rank_normalize(a)
    return float(_geyer_ess(a))


def acceptance_rate(record, window=None) -> float:
    """Fraction of accepted iterations in ``window`` (a slice or ``(start, stop)``)."""
    acc = np.asarray(getattr(record, "accepted", record), dtype=bool)
    if window is not None:
        acc = acc[window if isinstance(window, slice) else slice(*window)]
    if acc.size == 0:
        raise ContractViolation("acceptance window is empty")
    return float(acc.mean())


def es_per_second(ess: float, wall_time: float) -> float:
    if not wall_time > 0:
        raise ContractViolation("wall time must be positive")
    return float(ess) / float(wall_time)


def _safe_ess(chains):
    try:
        return effective_sample_size(chains), False
    except DegenerateChainError:
        return None, True


def diagnostics_report(chain_sets, wall_time: Optional[float] = None, parameters=None,
                       acf_lags: int = 100, acceptance: Optional[dict] = None) -> dict:
    """JSON-ready summary of top-level chains.

    ``chain_sets`` is a ``(chains, draws, dims)`` array of post-burn-in
    states.  ``acceptance`` maps level index to a list of per-chain rates.
    """
    a = np.asarray(chain_sets, dtype=float)
    if a.ndim == 2:
        a = a[None]
    n_chains, n_draws, dim = a.shape
    parameters = range(dim) if parameters is None else parameters
    per_param = []
    for i in parameters:
        ess, degenerate = _safe_ess(a[:, :, i])
        entry = {"index": int(i), "ess": ess, "degenerate": degenerate}
        if wall_time is not None and ess is not None:
            entry["ess_per_second"] = es_per_second(ess, wall_time)
        acfs = []
        for c in range(n_chains):
            try:
                acfs.append(autocorrelation(a[c, :, i], min(acf_lags, n_draws - 1)).tolist())
            except DegenerateChainError:
                acfs.append(None)
        entry["acf"] = acfs
        per_param.append(entry)
    report = {"n_chains": n_chains, "n_draws": n_draws, "parameters": per_param}
    if wall_time is not None:
        report["wall_time"] = wall_time
    if acceptance is not None:
        report["acceptance_rate"] = {str(k): v for k, v in acceptance.items()}
    return report
