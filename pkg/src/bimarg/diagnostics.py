"""MCMC output diagnostics: ESS, batch-means errors, reordering, summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .samplers import Trace

__all__ = ["SummaryRow", "ess", "mce_batch_means", "reorder", "summarize"]


@dataclass
class SummaryRow:
    label: str
    mean: float
    sd: float
    mce_mean: float
    mce_sd: float
    ess: float
    ess_per_second: float
    q2_5: float
    q50: float
    q97_5: float


def ess(series) -> float:
    """Effective sample size via the initial-positive-sequence truncation.

    ``n / (1 + 2 sum rho_k)`` with the empirical autocorrelations summed in
    consecutive pairs for as long as the pair sums stay positive, clamped to
    ``[1, n]``.  A constant series has undefined autocorrelations and is
    reported as ``n``.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("need at least 10 draws for an ESS estimate")
    if np.ptp(x) == 0.0:
        return float(n)
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n].real / n
    rho = acov / acov[0]
    tau = 0.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        tau += pair
    tau = 2.0 * tau - 1.0
    return float(np.clip(n / max(tau, 1e-12), 1.0, n))


def mce_batch_means(series, n_batches: int = 50, statistic: str = "mean") -> float:
    """Monte Carlo standard error of a chain statistic by batch means.

    Splits the series into ``n_batches`` equal batches (trailing remainder
    dropped), computes the statistic per batch and returns the spread of the
    batch values over ``sqrt(n_batches)``.
    """
    x = np.asarray(series, dtype=float)
    size = x.size // n_batches
    if n_batches < 2 or size < 1:
        raise ValueError("series too short: fewer than 2 batches")
    if np.ptp(x) == 0.0:
        return 0.0
    batches = x[: size * n_batches].reshape(n_batches, size)
    if statistic == "mean":
        vals = batches.mean(axis=1)
    elif statistic == "sd":
        vals = batches.std(axis=1, ddof=1)
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    return float(np.std(vals, ddof=1) / np.sqrt(n_batches))


def reorder(trace, mode: str = "permute", seed: int = 0, k: int = 1):
    """Permute or thin the rows of a trace (or a plain draw matrix).

    ``permute`` applies one uniform random permutation (counter-based stream
    keyed by ``seed``); ``thin`` keeps every k-th row, giving ``floor(n/k)``
    rows.
    """
    if mode == "permute":
        def pick(n):
            gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
            return gen.permutation(n)
    elif mode == "thin":
        if k < 1:
            raise ValueError("thinning interval must be >= 1")
        def pick(n):
            return np.arange(k - 1, n, k)
    else:
        raise ValueError(f"unknown reorder mode {mode!r}")
    if isinstance(trace, Trace):
        idx = pick(trace.n_draws)
        meta = dict(trace.meta)
        meta["reordered"] = mode if mode == "permute" else f"thin:{k}"
        return Trace(
            trace.labels,
            trace.lambdas[idx],
            trace.accepted[idx],
            trace.log_posterior[idx],
            trace.wall_seconds,
            meta,
        )
    arr = np.asarray(trace)
    return arr[pick(arr.shape[0])]


def summarize(trace, wall_seconds: float | None = None) -> list:
    """One :class:`SummaryRow` per free interaction of a trace.

    Quantiles use linear interpolation of the order statistics; batch-means
    errors use 50 batches when the trace is long enough (at least two batches
    otherwise).  ``wall_seconds`` defaults to the trace's own timing.
    """
    if isinstance(trace, Trace):
        draws, labels = trace.lambdas, trace.labels
        if wall_seconds is None:
            wall_seconds = trace.wall_seconds
    else:
        draws, labels = trace
        draws = np.asarray(draws, dtype=float)
    n = draws.shape[0]
    if n == 0:
        raise ValueError("empty trace")
    nb = 50 if n >= 100 else max(2, n // 2)
    rows = []
    for j, label in enumerate(labels):
        col = draws[:, j]
        constant = np.ptp(col) == 0.0
        col_ess = float(n) if (constant or n < 10) else ess(col)
        q = np.quantile(col, [0.025, 0.5, 0.975], method="linear")
        rows.append(
            SummaryRow(
                label=str(label),
                mean=float(col.mean()),
                sd=float(col.std(ddof=1)) if n > 1 else 0.0,
                mce_mean=0.0 if constant else mce_batch_means(col, nb, "mean"),
                mce_sd=0.0 if constant else mce_batch_means(col, nb, "sd"),
                ess=col_ess,
                ess_per_second=col_ess / wall_seconds if wall_seconds else float("nan"),
                q2_5=float(q[0]),
                q50=float(q[1]),
                q97_5=float(q[2]),
            )
        )
    return rows
