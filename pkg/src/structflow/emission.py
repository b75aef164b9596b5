"""Per-category diagonal Gaussians over latent embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VAR_FLOOR = 1e-4
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class EmissionParams:
    means: np.ndarray     # (K, D)
    log_vars: np.ndarray  # (K, D); variance = exp(log_var) + VAR_FLOOR

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def D(self):
        return self.means.shape[1]

    def variances(self):
        return np.exp(self.log_vars) + VAR_FLOOR

    def tensors(self, prefix="emission"):
        return {f"{prefix}.means": self.means, f"{prefix}.log_vars": self.log_vars}

    def zeros_like(self):
        return EmissionParams(np.zeros_like(self.means), np.zeros_like(self.log_vars))

    def copy(self):
        return EmissionParams(self.means.copy(), self.log_vars.copy())


def init_emission(K, D, rng=None):
    rng = np.random.default_rng(rng)
    return EmissionParams(rng.normal(0.0, 0.01, size=(K, D)), np.zeros((K, D)))


def emission_loglikes(params: EmissionParams, e) -> np.ndarray:
    """``(l, K)`` log densities of each latent vector under each category."""
    e = np.asarray(e, dtype=np.float64)
    var = params.variances()
    diff = e[:, None, :] - params.means[None, :, :]
    return -0.5 * (params.D * _LOG_2PI + np.log(var).sum(axis=1)[None, :]
                   + (diff * diff / var[None]).sum(axis=2))


def emission_backward(params: EmissionParams, e, weights):
    """Gradients of ``sum(weights * emission_loglikes(params, e))``.

    Returns ``(grad_params, grad_e)``.
    """
    e = np.asarray(e, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    var = params.variances()
    diff = e[:, None, :] - params.means[None, :, :]            # (l, K, D)
    scaled = diff / var[None]
    wd = weights[:, :, None] * scaled
    grad_means = wd.sum(axis=0)
    grad_e = -wd.sum(axis=1)
    dvar = 0.5 * (weights[:, :, None] * (scaled * scaled - 1.0 / var[None])).sum(axis=0)
    grad_log_vars = dvar * np.exp(params.log_vars)
    return EmissionParams(grad_means, grad_log_vars), grad_e
