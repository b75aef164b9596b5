"""Invertible projections between latent embeddings ``e`` and observations ``x``.

Three kinds are supported:

* ``nice``: a stack of additive coupling layers (volume preserving),
* ``linear``: a single square matrix ``W`` mapping observations to latents,
* ``identity``.

Every function works on one sentence at a time, ``x`` having shape ``(l, D)``.
Gradients are derived by hand; :func:`flow_backward` needs the
:class:`FlowCache` filled in by :func:`flow_inverse`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError

LOW, HIGH = "low", "high"
_MIN_ABS_DET = 1e-12


@dataclass
class CouplingLayer:
    """``b <- b + m(a)`` with ``m(a) = W2 relu(W1 a + b1) + b2``.

    ``parity`` names the half that gets shifted (``b``); the other half
    (``a``) conditions the shift and passes through unchanged.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    parity: str

    def halves(self, dim):
        half = dim // 2
        low, high = slice(0, half), slice(half, dim)
        return (high, low) if self.parity == LOW else (low, high)

    def shift(self, a):
        # overflow is caught by the finiteness checks of the callers
        with np.errstate(over="ignore", invalid="ignore"):
            pre = a @ self.W1.T + self.b1
            return np.maximum(pre, 0.0) @ self.W2.T + self.b2, pre


@dataclass
class FlowParams:
    kind: str
    dim: int
    layers: list[CouplingLayer] = field(default_factory=list)
    W: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("nice", "linear", "identity"):
            raise ValueError(f"unknown flow kind {self.kind!r}")
        if self.kind == "nice":
            if self.dim % 2:
                raise ShapeError(f"NICE flow needs an even dimension, got {self.dim}")
            for i, layer in enumerate(self.layers):
                expected = LOW if i % 2 == 0 else HIGH
                if layer.parity != expected:
                    raise ValueError(f"layer {i} parity {layer.parity!r}, expected {expected!r}")
        if self.kind == "linear":
            if self.W is None or self.W.shape != (self.dim, self.dim):
                raise ShapeError("linear flow needs a D x D matrix")
            self.check_invertible()

    @property
    def n_layers(self):
        return len(self.layers)

    def check_invertible(self):
        if self.kind == "linear":
            sign, logabs = np.linalg.slogdet(self.W)
            if sign == 0 or not np.isfinite(logabs) or logabs < np.log(_MIN_ABS_DET):
                raise NumericalError("linear flow matrix is singular (|det W| <= 1e-12)")

    def tensors(self, prefix="flow"):
        """Named parameter arrays (views, not copies) in a fixed order."""
        if self.kind == "nice":
            out = {}
            for i, layer in enumerate(self.layers):
                for name in ("W1", "b1", "W2", "b2"):
                    out[f"{prefix}.{i}.{name}"] = getattr(layer, name)
            return out
        if self.kind == "linear":
            return {f"{prefix}.W": self.W}
        return {}

    def zeros_like(self):
        if self.kind == "nice":
            layers = [CouplingLayer(np.zeros_like(c.W1), np.zeros_like(c.b1), np.zeros_like(c.W2),
                                    np.zeros_like(c.b2), c.parity) for c in self.layers]
            return FlowParams("nice", self.dim, layers)
        if self.kind == "linear":
            grad = FlowParams.__new__(FlowParams)
            grad.kind, grad.dim, grad.layers, grad.W = "linear", self.dim, [], np.zeros_like(self.W)
            return grad
        return FlowParams("identity", self.dim)

    def copy(self):
        if self.kind == "nice":
            layers = [CouplingLayer(c.W1.copy(), c.b1.copy(), c.W2.copy(), c.b2.copy(), c.parity)
                      for c in self.layers]
            return FlowParams("nice", self.dim, layers)
        if self.kind == "linear":
            return FlowParams("linear", self.dim, W=self.W.copy())
        return FlowParams("identity", self.dim)


def init_nice(dim, n_layers=8, hidden=None, rng=None):
    """Coupling stack initialised to the identity map (zero output layers)."""
    if dim % 2:
        raise ShapeError(f"NICE flow needs an even dimension, got {dim}")
    rng = np.random.default_rng(rng)
    half = dim // 2
    hidden = dim if hidden is None else hidden
    bound = 1.0 / np.sqrt(half)
    layers = []
    for i in range(n_layers):
        layers.append(CouplingLayer(
            W1=rng.uniform(-bound, bound, size=(hidden, half)),
            b1=np.zeros(hidden),
            W2=np.zeros((half, hidden)),
            b2=np.zeros(half),
            parity=LOW if i % 2 == 0 else HIGH,
        ))
    return FlowParams("nice", dim, layers)


def init_linear(dim):
    return FlowParams("linear", dim, W=np.eye(dim))


def init_identity(dim):
    return FlowParams("identity", dim)


def init_flow(kind, dim, n_layers=8, rng=None):
    if kind == "nice":
        return init_nice(dim, n_layers, rng=rng)
    if kind == "linear":
        return init_linear(dim)
    if kind == "identity":
        return init_identity(dim)
    raise ValueError(f"unknown flow kind {kind!r}")


@dataclass
class FlowCache:
    x: np.ndarray | None = None
    # per layer, in the order the inverse visits them: (layer index, a, pre-activation)
    steps: list = field(default_factory=list)


def _check_finite(values, where):
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"non-finite values in flow at {where}")


def flow_inverse(params: FlowParams, x, cache: FlowCache | None = None):
    """Map observations to latents. Returns ``(e, logdet_per_token)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise ShapeError(f"expected (l, {params.dim}) observations, got {x.shape}")
    _check_finite(x, "input")
    if cache is not None:
        cache.x = x
        cache.steps = []

    if params.kind == "identity":
        return x.copy(), 0.0
    if params.kind == "linear":
        e = x @ params.W.T
        _check_finite(e, "linear map")
        return e, float(np.linalg.slogdet(params.W)[1])

    e = x.copy()
    for idx in range(params.n_layers - 1, -1, -1):
        layer = params.layers[idx]
        keep, moved = layer.halves(params.dim)
        a = e[:, keep]
        shift, pre = layer.shift(a)
        e[:, moved] -= shift
        _check_finite(e, f"coupling layer {idx}")
        if cache is not None:
            cache.steps.append((idx, a.copy(), pre))
    # additive coupling: unit Jacobian determinant
    return e, 0.0


def flow_forward(params: FlowParams, e):
    """Map latents to observations; exact inverse of :func:`flow_inverse`."""
    e = np.asarray(e, dtype=np.float64)
    if params.kind == "identity":
        return e.copy()
    if params.kind == "linear":
        try:
            return np.linalg.solve(params.W, e.T).T
        except np.linalg.LinAlgError:
            raise NumericalError("linear flow matrix is singular") from None
    x = e.copy()
    for idx, layer in enumerate(params.layers):
        keep, moved = layer.halves(params.dim)
        shift, _ = layer.shift(x[:, keep])
        x[:, moved] += shift
        _check_finite(x, f"coupling layer {idx}")
    return x


def flow_backward(params: FlowParams, cache: FlowCache | None, grad_e, grad_logdet=0.0):
    """Reverse pass of :func:`flow_inverse`.

    Returns ``(grad_params, grad_x)`` for the scalar
    ``sum(grad_e * e) + grad_logdet * logdet_per_token``.
    """
    if cache is None or cache.x is None:
        raise ValueError("flow_backward called without a filled FlowCache")
    grad_e = np.asarray(grad_e, dtype=np.float64)
    grads = params.zeros_like()

    if params.kind == "identity":
        return grads, grad_e.copy()
    if params.kind == "linear":
        grads.W = grad_e.T @ cache.x + grad_logdet * np.linalg.inv(params.W).T
        return grads, grad_e @ params.W

    g = grad_e.copy()
    # the inverse visited layers L-1..0, so the reverse pass walks the cache backwards
    for idx, a, pre in reversed(cache.steps):
        layer = params.layers[idx]
        keep, moved = layer.halves(params.dim)
        # moved_out = moved_in - m(a)
        g_shift = -g[:, moved]
        act = np.maximum(pre, 0.0)
        gl = grads.layers[idx]
        gl.W2 += g_shift.T @ act
        gl.b2 += g_shift.sum(axis=0)
        g_pre = (g_shift @ layer.W2) * (pre > 0)
        gl.W1 += g_pre.T @ a
        gl.b1 += g_pre.sum(axis=0)
        g[:, keep] += g_pre @ layer.W1
    return grads, g
