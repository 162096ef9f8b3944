"""Convergence diagnostics: split R-hat and effective sample size."""
import numpy as np


def _as_chains(draws):
    x = np.asarray(draws, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("draws must have shape (n_chains, n_draws)")
    return x


def _split(x):
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)


def split_rhat(draws):
    """Split potential scale reduction factor for (n_chains, n_draws) draws."""
    x = _as_chains(draws)
    if x.shape[0] < 2:
        raise ValueError("split R-hat needs at least two chains")
    if x.shape[1] < 4:
        raise ValueError("need at least 4 draws per chain")
    x = _split(x)
    n = x.shape[1]
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else np.inf
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def _autocov(x):
    n = x.shape[-1]
    f = np.fft.rfft(x - x.mean(axis=-1, keepdims=True), n=2 * n, axis=-1)
    ac = np.fft.irfft(f * np.conj(f), axis=-1)[..., :n]
    return ac / n


def ess(draws):
    """Effective sample size via Geyer's initial monotone positive sequence."""
    x = _as_chains(draws)
    m, n = x.shape
    if n < 4:
        raise ValueError("need at least 4 draws per chain")
    acov = _autocov(x)
    W = acov[:, 0].mean() * n / (n - 1)
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        return float(m * n)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    k = np.argmax(pairs <= 0) if np.any(pairs <= 0) else pairs.size
    pairs = np.minimum.accumulate(pairs[:k])
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(max(m * n, 10)))
    return float(m * n / tau)


def summarize(table):
    """Per-parameter (mean, sd, R-hat, ESS) for a name -> (chains, draws) dict."""
    rows = []
    for name, arr in table.items():
        arr = _as_chains(arr)
        rhat = split_rhat(arr) if arr.shape[0] >= 2 else float("nan")
        rows.append((name, float(arr.mean()), float(arr.std()), rhat, ess(arr)))
    return rows
