"""Constrained weight normalization, weighted combination with a
residual connection, end-to-end training and post-hoc reporting.

Weights come from an interval-scaled softmax: w = a*softmax(logits)
+ 1 - a/N, so every weight lies in [1-a/N, 1-a/N+a] and the weights of
one horizon always sum to N. With a = 0 the combination degenerates to
plain addition plus the learned residual.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, Tape
from .core import ForecastWindow, quantile_loss_vec
from .errors import ConfigError, DomainError, TrainingError
from .network import (NetConfig, TrainConfig, WrNetwork, future_features,
                      history_features, window_scale)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ComponentMatrix:
    """Named per-horizon component estimates, one row per component."""

    names: tuple
    matrix: np.ndarray          # (N, H)

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, float))
        if len(self.names) != self.matrix.shape[0]:
            raise ConfigError("component names misaligned with matrix rows")
        if len(self.names) < 2:
            raise ConfigError("need at least two components")
        if len(set(self.names)) != len(self.names):
            raise ConfigError("component names must be unique")
        if not np.all(np.isfinite(self.matrix)):
            raise DomainError("component estimates must be finite")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def horizon(self) -> int:
        return self.matrix.shape[1]


def _softmax(z: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def normalize_weights(logits, alpha: float, axis: int = 0) -> np.ndarray:
    """Interval-scaled softmax over the component axis.

    Every weight lands in [1-alpha/N, 1-alpha/N+alpha] and each
    horizon's weights sum to N exactly up to rounding.
    """
    logits = np.asarray(logits, float)
    n = logits.shape[axis]
    if n < 2:
        raise ConfigError("need at least two components")
    if not 0.0 <= alpha <= n:
        raise ConfigError(f"alpha={alpha} outside [0, {n}]")
    return alpha * _softmax(logits, axis) + (1.0 - alpha / n)


def combine(weights, components, residuals) -> np.ndarray:
    """sum_i w_i * estimate_i + residual, per horizon."""
    w = np.asarray(weights, float)
    comp = components.matrix if isinstance(components, ComponentMatrix) \
        else np.asarray(components, float)
    eps = np.asarray(residuals, float)
    if w.shape != comp.shape or eps.shape != comp.shape[1:]:
        raise DomainError(
            f"shape mismatch: weights {w.shape}, components {comp.shape}, "
            f"residuals {eps.shape}")
    return (w * comp).sum(axis=0) + eps


@dataclass(frozen=True)
class WrOutput:
    """Everything a prediction exposes for interpretation."""

    weights: np.ndarray          # (N, H)
    residuals: np.ndarray        # (H,)
    modified: np.ndarray         # (N, H): weight * estimate
    yhat: np.ndarray             # (H,)
    component_names: tuple = ()


@dataclass
class WRModel:
    """Trained recombination stage: network, interval size, names."""

    net: WrNetwork
    alpha: float
    component_names: tuple
    train_loss: tuple = field(default=(), repr=False)

    @property
    def n_components(self) -> int:
        return len(self.component_names)

    def to_json(self) -> str:
        return json.dumps({"format": "wrcast-model-1",
                           "alpha": self.alpha,
                           "component_names": list(self.component_names),
                           "train_loss": list(self.train_loss),
                           "net": self.net.state_dict()})

    @staticmethod
    def from_json(text: str) -> "WRModel":
        d = json.loads(text)
        if d.get("format") != "wrcast-model-1":
            raise ConfigError("not a serialized model checkpoint")
        net = WrNetwork.from_state_dict(d["net"])
        model = WRModel(net=net, alpha=float(d["alpha"]),
                        component_names=tuple(d["component_names"]),
                        train_loss=tuple(d["train_loss"]))
        if net.config.n_components != model.n_components:
            raise ConfigError("checkpoint component count mismatch")
        return model


def prepare_arrays(windows, components):
    """Stack windows (and per-window component matrices) into batch
    arrays; components are scaled by each window's history mean + 1."""
    if not windows:
        raise DomainError("no windows")
    T = windows[0].T
    H = windows[0].H
    n = len(windows)
    comp0 = components[0] if components is not None else None
    N = comp0.n if comp0 is not None else 0
    hist = np.empty((n, T, 8))
    fut = np.empty((n, H, 8))
    comps = np.empty((n, H, N)) if N else None
    y = np.empty((n, H))
    scales = np.empty((n, 1))
    for b, win in enumerate(windows):
        if win.T != T or win.H != H:
            raise ConfigError("windows have inconsistent shapes")
        s = window_scale(win)
        scales[b, 0] = s
        hist[b] = history_features(win, s)
        fut[b] = future_features(win)
        if win.target is not None:
            y[b] = win.target
        if N:
            cm = components[b]
            if cm.n != N or cm.names != comp0.names:
                raise ConfigError("inconsistent component sets across windows")
            if cm.horizon != H:
                raise ConfigError("component horizon mismatch")
            comps[b] = cm.matrix.T / s
    return {"hist": hist, "fut": fut, "comps": comps, "y": y,
            "scales": scales, "names": comp0.names if comp0 else ()}


def _forward_combine(net: WrNetwork, tape: Tape, hist, fut, comps, scales,
                     alpha: float):
    """Tape forward through the network, weight normalization and the
    residual connection; returns (yhat_node, logits_node)."""
    logits, eps = net.forward(tape, hist, fut)
    scale_node = tape.constant(scales)
    if logits is None:
        return tape.mul(eps, scale_node), None
    n = net.config.n_components
    sm = tape.softmax(logits)
    w = tape.add(tape.mul(sm, tape.constant(np.float64(alpha))),
                 tape.constant(np.float64(1.0 - alpha / n)))
    shat = tape.mul(w, tape.constant(comps))
    ynorm = tape.add(tape.sum_axis(shat, 2), eps)
    return tape.mul(ynorm, scale_node), logits


def train_step(net: WrNetwork, batch: dict, alpha: float, adam: Adam,
               p: float = 0.5) -> float:
    """One optimizer update on the mean pinball loss of a batch."""
    if len(batch["hist"]) == 0:
        raise DomainError("empty batch")
    tape = Tape()
    yhat, _ = _forward_combine(net, tape, batch["hist"], batch["fut"],
                               batch["comps"], batch["scales"], alpha)
    loss = tape.quantile_loss_mean(yhat, batch["y"], p)
    value = float(tape.value(loss))
    if not np.isfinite(value):
        raise TrainingError(f"non-finite training loss {value}")
    adam.zero_grad()
    tape.backward(loss)
    adam.step()
    return value


def wr_train(windows, components, alpha: float,
             cfg: TrainConfig = TrainConfig(), hidden: int = 32,
             net_seed: int | None = None, arch: str = "wavenet") -> WRModel:
    """Train the recombination stage on precomputed component estimates.

    components is a list of ComponentMatrix aligned with windows (None
    trains the bare forecaster head). Component estimates are fixed
    inputs; only the network parameters move. Loss is evaluated on the
    de-scaled forecasts, and the per-epoch mean is recorded.
    """
    arrays = prepare_arrays(windows, components)
    N = 0 if arrays["comps"] is None else arrays["comps"].shape[2]
    if N and not 0.0 <= alpha <= N:
        raise ConfigError(f"alpha={alpha} outside [0, {N}]")
    net_cfg = NetConfig(T=windows[0].T, H=windows[0].H, n_components=N,
                        hidden=hidden, arch=arch,
                        seed=cfg.seed if net_seed is None else net_seed)
    net = WrNetwork.init(net_cfg)
    adam = Adam(net.params, learning_rate=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    n = len(windows)
    epoch_losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            batch = {"hist": arrays["hist"][idx], "fut": arrays["fut"][idx],
                     "comps": None if N == 0 else arrays["comps"][idx],
                     "y": arrays["y"][idx], "scales": arrays["scales"][idx]}
            losses.append(train_step(net, batch, alpha, adam))
        epoch_losses.append(float(np.mean(losses)))
    return WRModel(net=net, alpha=alpha,
                   component_names=tuple(arrays["names"]),
                   train_loss=tuple(epoch_losses))


def wr_predict(model: WRModel, window: ForecastWindow,
               components: ComponentMatrix | None) -> WrOutput:
    """Full prediction with weights, residual and modified components.

    The reported residual is on the original scale, so
    yhat = sum_i modified_i + residual holds exactly as computed.
    """
    N = model.n_components
    if N:
        if components is None:
            raise ConfigError("model expects component estimates")
        if tuple(components.names) != tuple(model.component_names):
            raise ConfigError(
                f"component names {components.names} do not match model "
                f"{model.component_names}")
    s = window_scale(window)
    hist = history_features(window, s)[None]
    fut = future_features(window)[None]
    tape = Tape()
    logits, eps = model.net.forward(tape, hist, fut)
    if N == 0:
        yhat = tape.value(eps)[0] * s
        return WrOutput(weights=np.zeros((0, len(yhat))),
                        residuals=yhat.copy(),
                        modified=np.zeros((0, len(yhat))),
                        yhat=yhat, component_names=())
    w = normalize_weights(tape.value(logits)[0], model.alpha, axis=-1).T
    residual = tape.value(eps)[0] * s
    modified = w * components.matrix
    yhat = modified.sum(axis=0) + residual
    return WrOutput(weights=w, residuals=residual, modified=modified,
                    yhat=yhat, component_names=tuple(model.component_names))


def report_weight_distributions(outputs, bins: int = 40) -> dict:
    """Histograms and summary statistics of weights and residuals."""
    outputs = list(outputs)
    if not outputs:
        raise DomainError("no outputs to report")
    names = outputs[0].component_names
    report = {"components": {}, "residual": {}}
    for i, name in enumerate(names):
        vals = np.concatenate([o.weights[i] for o in outputs])
        counts, edges = np.histogram(vals, bins=bins)
        report["components"][name] = {
            "bin_edges": edges.tolist(), "counts": counts.tolist(),
            "mean": float(vals.mean()),
            "share_below_1": float(np.mean(vals < 1.0)),
            "share_above_1": float(np.mean(vals > 1.0))}
    res = np.concatenate([o.residuals for o in outputs])
    counts, edges = np.histogram(res, bins=bins)
    report["residual"] = {"bin_edges": edges.tolist(),
                          "counts": counts.tolist(),
                          "mean": float(res.mean()),
                          "std": float(res.std())}
    return report


def evaluate_forecasts(windows, forecasts, group_key=None):
    """RMSE and horizon-sum quantile metrics over (window, forecast)
    pairs; returns {'rmse': ..., 'p50_ql': ...}."""
    from .core import p50_ql, rmse
    pairs = []
    sums = []
    for win, fc in zip(windows, forecasts):
        if win.target is None:
            raise DomainError("windows need targets for evaluation")
        pairs.extend(zip(win.target, fc))
        sums.append((float(np.sum(fc)), float(np.sum(win.target))))
    return {"rmse": rmse(pairs), "p50_ql": p50_ql(sums)}


def additive_forecast(components: ComponentMatrix) -> np.ndarray:
    """Plain stage-1 sum, the no-reweighting reference."""
    return components.matrix.sum(axis=0)


def mean_quantile_loss(windows, forecasts, p: float = 0.5) -> float:
    vals = []
    for win, fc in zip(windows, forecasts):
        vals.append(np.mean(quantile_loss_vec(win.target, fc, p)))
    return float(np.mean(vals))
