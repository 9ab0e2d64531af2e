"""Closed-form NTK of an infinite-width bias-free ReLU MLP.

The recursion starts from the raw Gram ``Sigma0 = X Xhat^T`` and halves the
diagonal variances after every layer.  For each layer::

    omega     = Sigma / sqrt(d dhat)
    Sigma_dot = 1 - arccos(omega) / pi
    Sigma     = sqrt(d dhat) / (2 pi) * (sqrt(1 - omega^2) + (pi - arccos omega) omega)
    Theta     = Sigma_new + Theta * Sigma_dot          (elementwise)

A finite-width Monte Carlo counterpart (:func:`empirical_ntk`) is provided
as an independent convergence check.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = [
    "MAX_DEPTH",
    "DIAG_FLOOR",
    "arccos_step",
    "ntk_mlp",
    "empirical_ntk",
    "save_kernel_csv",
    "load_kernel_csv",
]

MAX_DEPTH = 64
DIAG_FLOOR = 1e-12


def _check_depth(depth: int) -> int:
    if int(depth) != depth or not 1 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must be an integer in [1, {MAX_DEPTH}], got {depth}")
    return int(depth)


def _as_features(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError(f"{name} must be an (m, d) matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def arccos_step(sigma_prev, d_x, d_xhat, pin_diagonal: bool = False):
    """One layer of the ReLU arc-cosine recursion.

    Parameters
    ----------
    sigma_prev : (m, mhat) array
        Covariance block from the previous layer.
    d_x, d_xhat : (m,), (mhat,) arrays
        Diagonal variances of the two input sets at the previous layer.
    pin_diagonal : bool
        Set omega to exactly 1 on the diagonal (self blocks).  F0 has a
        square-root singularity at omega = 1, so rounding noise of one ulp
        there would otherwise show up as ~1e-8 noise in the kernel.

    Returns
    -------
    sigma_next, sigma_dot : (m, mhat) arrays
    """
    sigma_prev = np.asarray(sigma_prev, dtype=np.float64)
    d_x = np.asarray(d_x, dtype=np.float64)
    d_xhat = np.asarray(d_xhat, dtype=np.float64)
    if np.any(~np.isfinite(d_x)) or np.any(~np.isfinite(d_xhat)) or d_x.min() < 0 or d_xhat.min() < 0:
        raise ValueError("degenerate input norm")
    scale = np.sqrt(np.outer(np.maximum(d_x, DIAG_FLOOR), np.maximum(d_xhat, DIAG_FLOOR)))
    omega = np.clip(sigma_prev / scale, -1.0, 1.0)
    if pin_diagonal:
        np.fill_diagonal(omega, 1.0)
    angle = np.arccos(omega)
    sigma_dot = 1.0 - angle / np.pi
    sigma_next = scale / (2.0 * np.pi) * (np.sqrt(1.0 - omega**2) + (np.pi - angle) * omega)
    return sigma_next, sigma_dot


def ntk_mlp(x, xhat, depth: int) -> np.ndarray:
    """NTK block Theta^(depth) between the rows of ``x`` and ``xhat``.

    All-zero rows produce zero rows/columns instead of NaNs.  When ``x`` and
    ``xhat`` hold the same rows the diagonal angle is pinned to zero.
    """
    depth = _check_depth(depth)
    x = _as_features(x, "x")
    xhat = _as_features(xhat, "xhat")
    if x.shape[1] != xhat.shape[1]:
        raise ValueError(f"feature dimension mismatch: {x.shape[1]} vs {xhat.shape[1]}")

    same = x.shape == xhat.shape and np.array_equal(x, xhat)
    sigma = x @ xhat.T
    theta = sigma.copy()
    d_x = np.einsum("ij,ij->i", x, x)
    d_xhat = np.einsum("ij,ij->i", xhat, xhat)
    live = np.outer(d_x > DIAG_FLOOR, d_xhat > DIAG_FLOOR)
    for _ in range(depth):
        sigma, sigma_dot = arccos_step(sigma, d_x, d_xhat, pin_diagonal=same)
        theta = sigma + theta * sigma_dot
        d_x, d_xhat = 0.5 * d_x, 0.5 * d_xhat
    if not live.all():
        theta = np.where(live, theta, 0.0)
    return theta


def empirical_ntk(widths, x, xhat, seed: int = 0) -> np.ndarray:
    """Jacobian inner-product kernel of one random finite ReLU MLP.

    The network is ``f(x) = v . relu(g_N) / sqrt(n_N)`` with
    ``g_1 = W_1 x`` and ``g_{h+1} = W_{h+1} relu(g_h) / sqrt(n_h)``; all
    weights are standard normal (NTK parameterization, so the first layer
    carries no 1/fan-in factor) and there are no biases.

    The closed-form recursion doubles the derivative covariance at every
    ReLU relative to this network, so the gradient block of a weight matrix
    with ``k`` ReLU layers above it is weighted by ``2**k``.  With that
    per-layer weighting the kernel converges to :func:`ntk_mlp` as the
    widths grow.  ``widths=[]`` is the linear model ``f = w . x``.
    """
    widths = [int(w) for w in widths]
    if any(w < 1 for w in widths):
        raise ValueError("every layer width must be >= 1")
    x = _as_features(x, "x")
    xhat = _as_features(xhat, "xhat")
    if x.shape[1] != xhat.shape[1]:
        raise ValueError(f"feature dimension mismatch: {x.shape[1]} vs {xhat.shape[1]}")

    rng = np.random.default_rng(seed)
    fan_in = [x.shape[1]] + widths
    weights = [rng.standard_normal((n_out, n_in)) for n_in, n_out in zip(fan_in, widths + [1])]
    # input scale per layer: first layer sees the raw input
    scales = [1.0] + [1.0 / np.sqrt(n) for n in widths]

    def forward(inp):
        acts, pre = [inp], []
        for W, c in zip(weights[:-1], scales[:-1]):
            g = c * acts[-1] @ W.T
            pre.append(g)
            acts.append(np.maximum(g, 0.0))
        return acts, pre

    def backward(pre):
        # delta[h] = df/dg_h, built top-down; the output delta is 1
        deltas = [np.ones((pre[0].shape[0] if pre else 1, 1))]
        for h in range(len(pre) - 1, -1, -1):
            upstream = scales[h + 1] * deltas[0] @ weights[h + 1]
            deltas.insert(0, upstream * (pre[h] > 0))
        return deltas

    acts_a, pre_a = forward(x)
    acts_b, pre_b = forward(xhat)
    if not widths:
        return x @ xhat.T
    delta_a, delta_b = backward(pre_a), backward(pre_b)

    depth = len(widths)
    kernel = np.zeros((x.shape[0], xhat.shape[0]))
    for h in range(depth + 1):
        # weight matrix h maps acts[h] -> pre-activation h (or the output)
        grad_dot = delta_a[h] @ delta_b[h].T
        input_dot = scales[h] ** 2 * acts_a[h] @ acts_b[h].T
        kernel += 2.0 ** (depth - h) * grad_dot * input_dot
    return kernel


def save_kernel_csv(values, path, depth: int) -> None:
    """Write a kernel block row-major with 17 significant digits."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    m, mhat = values.shape
    header = f"ntk depth={depth} m={m} mhat={mhat}"
    np.savetxt(Path(path), values, delimiter=",", fmt="%.17g", header=header, comments="# ")


def load_kernel_csv(path) -> tuple[np.ndarray, dict[str, int]]:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().lstrip("#").split()
    meta = {k: int(v) for k, v in (tok.split("=") for tok in first[1:])}
    values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return values, meta
