"""Anonymous rebate functions as weight-shared networks.

Both families map one agent's view of the others, a vector of length ``d``,
to that agent's rebate. The same parameters serve every agent, so the
mechanism is anonymous, and the view never contains the agent's own bid, so
it is DSIC. Inputs are batched as ``(S, n, d)`` arrays and rebates come back
as ``(S, n)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .profiles import HOMOGENEOUS, UTILITY_KEYS, input_width, rebate_inputs

LINEAR = "linear"
NONLINEAR = "nonlinear"
ARCHITECTURES = (LINEAR, NONLINEAR)


def xavier_scale(fan_in, kind="plain"):
    if fan_in < 1:
        raise ConfigurationError(f"fan-in must be positive, got {fan_in}")
    if kind == "plain":
        return 1.0 / math.sqrt(fan_in)
    if kind == "relu":
        return math.sqrt(2.0 / fan_in)
    raise ConfigurationError(f"unknown Xavier variant {kind!r}")


def xavier_init(shape, kind="plain", seed=None):
    """Normal(0, 1) weights scaled by ``xavier_scale(shape[0], kind)``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = tuple(np.atleast_1d(shape))
    return rng.standard_normal(shape) * xavier_scale(shape[0], kind)


def _check_inputs(X, d):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != d:
        raise ConfigurationError(f"expected inputs of shape (S, n, {d}), got {X.shape}")
    return X


@dataclass
class LinearRebateNet:
    """``r = w . view + b`` with ``w`` the linear rebate coefficients c_1..c_{d}."""

    w: np.ndarray
    b: float = 0.0
    architecture: str = field(default=LINEAR, init=False)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        self.b = float(self.b)

    @classmethod
    def initialize(cls, d, seed=None):
        return cls(w=xavier_init(d, "plain", seed), b=0.0)

    @property
    def d(self):
        return self.w.shape[0]

    def params(self):
        return {"w": self.w, "b": np.array(self.b)}

    def set_params(self, params):
        self.w = np.array(params["w"], dtype=np.float64)
        self.b = float(params["b"])

    def forward(self, X):
        X = _check_inputs(X, self.d)
        return X @ self.w + self.b, X

    def backward(self, cache, grad_r):
        X = cache
        grad_r = np.asarray(grad_r, dtype=np.float64)
        return {
            "w": np.tensordot(grad_r, X, axes=([0, 1], [0, 1])),
            "b": np.array(grad_r.sum()),
        }


@dataclass
class NonlinearRebateNet:
    """One hidden ReLU layer shared by every agent.

    ``r = relu(view @ W1 + b1) @ w2 + b2``.
    """

    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float = 0.0
    architecture: str = field(default=NONLINEAR, init=False)

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        if self.W1.ndim != 2:
            raise ConfigurationError("W1 must be a (d, h) matrix")
        self.b1 = np.asarray(self.b1, dtype=np.float64).reshape(-1)
        self.w2 = np.asarray(self.w2, dtype=np.float64).reshape(-1)
        self.b2 = float(self.b2)
        h = self.W1.shape[1]
        if h < 1 or self.b1.shape[0] != h or self.w2.shape[0] != h:
            raise ConfigurationError(
                f"inconsistent hidden sizes: W1 {self.W1.shape}, b1 {self.b1.shape}, w2 {self.w2.shape}"
            )

    @classmethod
    def initialize(cls, d, h, seed=None):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return cls(
            W1=xavier_init((d, h), "relu", rng),
            b1=np.zeros(h),
            w2=xavier_init((h,), "plain", rng),
            b2=0.0,
        )

    @property
    def d(self):
        return self.W1.shape[0]

    @property
    def h(self):
        return self.W1.shape[1]

    def params(self):
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": np.array(self.b2)}

    def set_params(self, params):
        self.W1 = np.array(params["W1"], dtype=np.float64)
        self.b1 = np.array(params["b1"], dtype=np.float64)
        self.w2 = np.array(params["w2"], dtype=np.float64)
        self.b2 = float(params["b2"])

    def forward(self, X):
        X = _check_inputs(X, self.d)
        z = X @ self.W1 + self.b1
        a = np.maximum(z, 0.0)
        return a @ self.w2 + self.b2, (X, z, a)

    def backward(self, cache, grad_r):
        X, z, a = cache
        grad_r = np.asarray(grad_r, dtype=np.float64)
        S, n, d = X.shape
        g = grad_r.reshape(-1)
        a2 = a.reshape(S * n, -1)
        # relu'(0) taken as 0
        dz = np.outer(g, self.w2) * (z.reshape(S * n, -1) > 0.0)
        return {
            "W1": X.reshape(S * n, d).T @ dz,
            "b1": dz.sum(axis=0),
            "w2": a2.T @ g,
            "b2": np.array(g.sum()),
        }


def default_hidden(n, p):
    return 100 if n * p < 10 else 1000


def build_net(architecture, n, p, setting=HOMOGENEOUS, scheme=UTILITY_KEYS, h=None, seed=None):
    d = input_width(n, p, setting, scheme)
    if architecture == LINEAR:
        return LinearRebateNet.initialize(d, seed)
    if architecture == NONLINEAR:
        return NonlinearRebateNet.initialize(d, h or default_hidden(n, p), seed)
    raise ConfigurationError(f"architecture must be one of {ARCHITECTURES}, got {architecture!r}")


def rebates(net, X):
    return net.forward(X)[0]


def forward_linear(net, canon, scheme=UTILITY_KEYS):
    """Rebates of one canonical profile, indexed by canonical rank."""
    if not isinstance(net, LinearRebateNet):
        raise ConfigurationError("forward_linear needs a LinearRebateNet")
    return net.forward(rebate_inputs(canon, scheme)[None])[0][0]


def forward_nonlinear(net, canon, scheme=UTILITY_KEYS):
    if not isinstance(net, NonlinearRebateNet):
        raise ConfigurationError("forward_nonlinear needs a NonlinearRebateNet")
    return net.forward(rebate_inputs(canon, scheme)[None])[0][0]


def backward(net, X, grad_r):
    """Parameter gradients of ``sum(grad_r * rebates(net, X))``."""
    _, cache = net.forward(X)
    return net.backward(cache, grad_r)


# -- checkpoints ------------------------------------------------------------

def _encode(obj):
    """JSON text with every float written to 17 significant digits."""
    if isinstance(obj, dict):
        items = ", ".join(f"{json.dumps(k)}: {_encode(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(obj if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("non-finite value in checkpoint")
        return format(x, ".17g")
    return json.dumps(obj)


def checkpoint_dict(net, n, p, *, setting=HOMOGENEOUS, scheme=UTILITY_KEYS, objective=None,
                    k=None, seed=None, epoch=None):
    doc = {
        "format": 1,
        "architecture": net.architecture,
        "n": int(n),
        "p": int(p),
        "setting": setting,
        "input_scheme": scheme,
        "objective": objective,
        "h": net.h if isinstance(net, NonlinearRebateNet) else None,
    }
    if isinstance(net, LinearRebateNet):
        doc.update(w=net.w, b=net.b)
    else:
        doc.update(W1=net.W1, b1=net.b1, w2=net.w2, b2=net.b2)
    doc.update(k=None if k is None else float(k), seed=seed, epoch=epoch)
    return doc


def dumps_checkpoint(doc):
    return _encode(doc) + "\n"


def save_checkpoint(path, doc):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_checkpoint(doc))


def net_from_checkpoint(doc):
    """Rebuild a net from a checkpoint document, validating shapes."""
    try:
        arch = doc["architecture"]
        n, p = int(doc["n"]), int(doc["p"])
        if arch == LINEAR:
            net = LinearRebateNet(w=doc["w"], b=doc["b"])
        elif arch == NONLINEAR:
            net = NonlinearRebateNet(W1=doc["W1"], b1=doc["b1"], w2=doc["w2"], b2=doc["b2"])
        else:
            raise ConfigurationError(f"unknown architecture {arch!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"malformed checkpoint: {exc!r}") from exc
    expected = input_width(n, p, doc.get("setting", HOMOGENEOUS), doc.get("input_scheme", UTILITY_KEYS))
    if net.d != expected:
        raise ConfigurationError(f"checkpoint input width {net.d} does not match n={n}, p={p}")
    return net


def load_checkpoint(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno}, column {exc.colno})") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: checkpoint must be a JSON object")
    return doc, net_from_checkpoint(doc)
