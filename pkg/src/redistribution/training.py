"""Penalty-method training of rebate networks with Adam.

Constraints enter the loss as squared hinge terms weighted by ``rho / 2``
and summed over samples, while the expected-rebate reward is averaged, so
the effective penalty strength grows with the batch size.
"""
from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .batch import INIT_STREAM, TEST_STREAM, TRAIN_STREAM, prepare_batch, stream_seed
from .errors import ConfigurationError, TrainingError
from .profiles import HOMOGENEOUS, INPUT_SCHEMES, SETTINGS, UTILITY_KEYS, BatchSpec, check_sizes
from .rebate_net import ARCHITECTURES, LINEAR, build_net, checkpoint_dict, save_checkpoint

log = logging.getLogger(__name__)

OE = "OE"
OW = "OW"
OBJECTIVES = (OE, OW)
K_UPDATES = ("adam", "exact")


def oe_loss(r, totals, rho):
    """Expected-rebate loss and its gradient with respect to ``r``.

    ``r`` has shape ``(T, n)``. Returns ``(loss, grad_r, penalty_sum)``.
    """
    r = np.asarray(r, dtype=np.float64)
    T = r.shape[0]
    total_rebate = r.sum(axis=1)
    reward = -total_rebate.sum() / T
    G = np.maximum(total_rebate - totals, 0.0)
    penalty = 0.5 * rho * np.dot(G, G)
    grad = np.broadcast_to((-1.0 / T + rho * G)[:, None], r.shape).copy()
    return reward + penalty, grad, penalty


def ow_loss(r, totals, k, rho, ir_selector="min"):
    """Worst-case loss ``-k`` plus feasibility, IR and worst-case penalties.

    ``ir_selector="min"`` penalizes only the smallest rebate of each sample;
    ``"all"`` penalizes every negative rebate. Returns
    ``(loss, grad_r, grad_k, penalty_sum)``.
    """
    r = np.asarray(r, dtype=np.float64)
    T, n = r.shape
    total_rebate = r.sum(axis=1)
    G1 = np.maximum(total_rebate - totals, 0.0)
    G3 = np.maximum(k * totals - total_rebate, 0.0)
    grad = np.broadcast_to((rho * (G1 - G3))[:, None], (T, n)).copy()
    if ir_selector == "min":
        low = np.argmin(r, axis=1)
        G2 = np.maximum(-r[np.arange(T), low], 0.0)
        grad[np.arange(T), low] -= rho * G2
        ir_sq = np.dot(G2, G2)
    elif ir_selector == "all":
        G2 = np.maximum(-r, 0.0)
        grad -= rho * G2
        ir_sq = float((G2 * G2).sum())
    else:
        raise ConfigurationError(f"ir_selector must be 'min' or 'all', got {ir_selector!r}")
    penalty = 0.5 * rho * (np.dot(G1, G1) + ir_sq + np.dot(G3, G3))
    grad_k = -1.0 + rho * np.dot(G3, totals)
    return -k + penalty, grad, grad_k, penalty


def clip_by_norm(grads, limit):
    """Rescale a gradient dict so its global L2 norm is at most ``limit``."""
    norm = float(np.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values())))
    if norm <= limit:
        return grads
    return {name: g * (limit / norm) for name, g in grads.items()}


def best_k(total_rebate, totals, rho):
    """Minimizer over ``k`` of ``-k + rho/2 * sum(max(k t - R, 0)^2)`` for fixed rebates.

    The objective is a convex piecewise quadratic in ``k`` with breakpoints at
    the ratios ``R / t``; the root of its derivative is found segment by segment.
    """
    R = np.asarray(total_rebate, dtype=np.float64)
    t = np.asarray(totals, dtype=np.float64)
    keep = t > 0
    R, t = R[keep], t[keep]
    if not rho > 0 or t.size == 0:
        raise ConfigurationError("best_k needs rho > 0 and at least one positive surplus")
    order = np.argsort(R / t, kind="stable")
    q = (R / t)[order]
    A = np.cumsum(t[order] ** 2)
    B = np.cumsum((R * t)[order])
    roots = (1.0 / rho + B) / A
    upper = np.append(q[1:], np.inf)
    j = int(np.argmax(roots <= upper))
    return float(roots[j])


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params):
        return cls(
            m={k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in params.items()},
            v={k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in params.items()},
        )


def adam_step(state, params, grads, lr):
    """One bias-corrected Adam update. Returns new params; ``state`` is updated in place."""
    if params.keys() != grads.keys():
        raise ConfigurationError("parameter and gradient names differ")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    out = {}
    for name, value in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        value = np.asarray(value, dtype=np.float64)
        if g.shape != value.shape or state.m[name].shape != value.shape:
            raise ConfigurationError(f"shape mismatch for {name}: {value.shape} vs {g.shape}")
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        out[name] = value - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return out


@dataclass
class TrainConfig:
    n: int = 3
    p: int = 1
    setting: str = HOMOGENEOUS
    objective: str = OE
    architecture: str = LINEAR
    input_scheme: str = UTILITY_KEYS
    hidden: int | None = None
    rho: float = 1000.0
    lr: float = 1e-4
    lr_final: float | None = None
    epochs: int = 20000
    batch_size: int | None = None
    eval_size: int = 10000
    seed: int = 0
    ir_selector: str = "min"
    plateau_window: int = 2000
    plateau_tol: float = 1e-6
    log_every: int = 100
    checkpoint_every: int = 0
    k_warmup: int = 0
    k_update: str = "adam"
    grad_clip: float | None = None

    def __post_init__(self):
        if self.batch_size is None:
            self.batch_size = 2048 if self.n * self.p <= 6 else 8192

    def validate(self):
        check_sizes(self.n, self.p, self.setting)
        if self.objective not in OBJECTIVES:
            raise ConfigurationError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.architecture not in ARCHITECTURES:
            raise ConfigurationError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.input_scheme not in INPUT_SCHEMES:
            raise ConfigurationError(f"input_scheme must be one of {INPUT_SCHEMES}, got {self.input_scheme!r}")
        if self.setting not in SETTINGS:
            raise ConfigurationError(f"unknown setting {self.setting!r}")
        if not self.rho >= 0:
            raise ConfigurationError(f"rho must be non-negative, got {self.rho}")
        if not self.lr > 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.lr_final is not None and not self.lr_final > 0:
            raise ConfigurationError(f"lr_final must be positive, got {self.lr_final}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1 or self.eval_size < 1:
            raise ConfigurationError("batch_size and eval_size must be positive")
        if self.hidden is not None and self.hidden < 1:
            raise ConfigurationError(f"hidden must be >= 1, got {self.hidden}")
        if self.plateau_window < 1 or self.log_every < 1:
            raise ConfigurationError("plateau_window and log_every must be >= 1")
        if self.checkpoint_every < 0 or self.k_warmup < 0:
            raise ConfigurationError("checkpoint_every and k_warmup must be >= 0")
        if self.ir_selector not in ("min", "all"):
            raise ConfigurationError(f"ir_selector must be 'min' or 'all', got {self.ir_selector!r}")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigurationError(f"grad_clip must be positive, got {self.grad_clip}")
        if self.k_update not in K_UPDATES:
            raise ConfigurationError(f"k_update must be one of {K_UPDATES}, got {self.k_update!r}")
        if self.k_update == "exact" and not self.rho > 0:
            raise ConfigurationError("k_update 'exact' needs rho > 0; the loss is unbounded in k otherwise")
        return self

    def lr_at(self, epoch):
        """Step size for ``epoch`` (1-based): constant, or geometric decay to ``lr_final``."""
        if self.lr_final is None or self.epochs == 1:
            return self.lr
        return self.lr * (self.lr_final / self.lr) ** ((epoch - 1) / (self.epochs - 1))

    def batch_spec(self, stream=TRAIN_STREAM, count=None):
        return BatchSpec(
            count=count or (self.batch_size if stream == TRAIN_STREAM else self.eval_size),
            n=self.n, p=self.p, setting=self.setting, seed=stream_seed(self.seed, stream),
        )


@dataclass
class TrainReport:
    epochs_run: int
    final_loss: float
    stopped_early: bool
    k: float | None
    history: list = field(default_factory=list)

    def losses(self):
        return np.array([rec["loss"] for rec in self.history])


def _loss_floor(p):
    # any feasible mechanism has loss >= -p; far below means rebates are running away
    return -10.0 * p


def train(config, batch=None, log_path=None, checkpoint_path=None, progress=None):
    """Full-batch Adam on the configured penalty loss.

    Returns ``(net, k, report)``; ``k`` is ``None`` for the OE objective.
    The training batch is sampled once and reused every epoch.
    """
    config.validate()
    if batch is None:
        batch = prepare_batch(config.batch_spec(TRAIN_STREAM), config.input_scheme)
    X, totals = batch.inputs, batch.totals
    net = build_net(
        config.architecture, config.n, config.p, config.setting, config.input_scheme,
        h=config.hidden, seed=stream_seed(config.seed, INIT_STREAM),
    )
    worst_case = config.objective == OW
    params = dict(net.params())
    adam = AdamState.like(params)
    k = 0.0
    k_adam = AdamState.like({"k": np.array(k)})
    floor = _loss_floor(config.p)

    def snapshot(epoch):
        return checkpoint_dict(
            net, config.n, config.p, setting=config.setting, scheme=config.input_scheme,
            objective=config.objective, k=k if worst_case else None, seed=config.seed, epoch=epoch,
        )

    history = []
    good = snapshot(0)
    recent = deque(maxlen=config.plateau_window + 1)
    stopped_early = False
    log_fh = open(log_path, "w", encoding="utf-8", newline="\n") if log_path else None
    try:
        epoch = 0
        for epoch in range(1, config.epochs + 1):
            r, cache = net.forward(X)
            if worst_case:
                loss, grad_r, grad_k, penalty = ow_loss(r, totals, k, config.rho, config.ir_selector)
            else:
                loss, grad_r, penalty = oe_loss(r, totals, config.rho)
            if not np.isfinite(loss) or loss < floor:
                raise TrainingError(
                    f"training diverged at epoch {epoch}: loss {loss!r} (floor {floor})",
                    checkpoint=good, epoch=epoch,
                )
            if epoch % config.log_every == 0 or epoch == 1:
                rec = {"epoch": epoch, "loss": float(loss), "penalty_sum": float(penalty)}
                if worst_case:
                    rec["k"] = k
                history.append(rec)
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
                if progress:
                    progress(rec)
                good = snapshot(epoch - 1)
            lr = config.lr_at(epoch)
            grads = net.backward(cache, grad_r)
            if config.grad_clip is not None:
                grads = clip_by_norm(grads, config.grad_clip)
            params = adam_step(adam, params, grads, lr)
            net.set_params(params)
            # k stays at 0, its moments untouched, until the warm-up is over
            if worst_case and epoch > config.k_warmup:
                if config.k_update == "exact":
                    k = best_k(r.sum(axis=1), totals, config.rho)
                else:
                    k = float(adam_step(k_adam, {"k": np.array(k)}, {"k": np.array(grad_k)}, lr)["k"])
            if checkpoint_path and config.checkpoint_every and epoch % config.checkpoint_every == 0:
                save_checkpoint(checkpoint_path, snapshot(epoch))
            recent.append(float(loss))
            if len(recent) > config.plateau_window:
                old = recent[0]
                if abs(loss - old) <= config.plateau_tol * max(abs(old), 1e-12):
                    stopped_early = True
                    break
    finally:
        if log_fh:
            log_fh.close()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, snapshot(epoch))
    k = k if worst_case else None
    report = TrainReport(epochs_run=epoch, final_loss=float(loss), stopped_early=stopped_early, k=k, history=history)
    return net, k, report


def config_dict(config):
    return asdict(config)
