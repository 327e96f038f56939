"""The recombination network: a dilated causal convolutional encoder
over the history, a global context from its last state, a per-horizon
local context from the full encoding, and a shared two-layer head that
emits per-horizon component logits plus one residual.

Outputs for any horizon depend only on history and future covariates;
future targets are never inputs, so the causal property holds by
construction. Inputs are scaled per window by the history mean (plus
one); component estimates are scaled identically so the learned weights
stay dimensionless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter, Tape
from .core import ForecastWindow, calendar_fields
from .errors import ConfigError

HIST_FEATURE_NAMES = (
    "value_scaled", "log_price_ratio", "promo_flag", "festival_flag",
    "weekday_sin", "weekday_cos", "month_sin", "month_cos")
FUTURE_FEATURE_NAMES = (
    "log_price_ratio", "promo_flag", "festival_flag",
    "weekday_sin", "weekday_cos", "month_sin", "month_cos", "horizon_frac")


@dataclass(frozen=True)
class NetConfig:
    T: int
    H: int
    n_components: int          # 0 means a bare forecaster head
    hidden: int = 32
    kernel: int = 2
    dilations: tuple = (1, 2, 4)
    seed: int = 0
    arch: str = "wavenet"      # "wavenet" or "mlp"

    def __post_init__(self):
        if self.T < 1 or self.H < 1 or self.n_components < 0:
            raise ConfigError("invalid network dimensions")
        if self.arch not in ("wavenet", "mlp"):
            raise ConfigError(f"unknown architecture {self.arch!r}")

    @property
    def head_out(self) -> int:
        return self.n_components + 1 if self.n_components else 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch size and epochs must be positive")


def window_scale(window: ForecastWindow) -> float:
    return float(np.mean(window.hist_values)) + 1.0


def _calendar_channels(dates):
    _, month, _, weekday = calendar_fields(dates)
    return (np.sin(2 * np.pi * weekday / 7.0),
            np.cos(2 * np.pi * weekday / 7.0),
            np.sin(2 * np.pi * (month - 1) / 12.0),
            np.cos(2 * np.pi * (month - 1) / 12.0))


def history_features(window: ForecastWindow, scale: float) -> np.ndarray:
    cov = window.hist_cov
    wd_s, wd_c, mo_s, mo_c = _calendar_channels(window.hist_dates)
    ratio = np.log(np.maximum(cov.price, 1e-12)
                   / np.maximum(cov.reference_price, 1e-12))
    return np.column_stack([
        window.hist_values / scale, ratio,
        cov.promo_flags().astype(float), cov.festival_flags().astype(float),
        wd_s, wd_c, mo_s, mo_c])


def future_features(window: ForecastWindow) -> np.ndarray:
    cov = window.future_cov
    wd_s, wd_c, mo_s, mo_c = _calendar_channels(window.future_dates)
    ratio = np.log(np.maximum(cov.price, 1e-12)
                   / np.maximum(cov.reference_price, 1e-12))
    H = window.H
    return np.column_stack([
        ratio, cov.promo_flags().astype(float),
        cov.festival_flags().astype(float),
        wd_s, wd_c, mo_s, mo_c, np.arange(1, H + 1) / H])


@dataclass
class WrNetwork:
    config: NetConfig
    params: dict = field(default_factory=dict)

    @staticmethod
    def init(config: NetConfig, zero: bool = False) -> "WrNetwork":
        """Seeded uniform +-sqrt(6/(fan_in+fan_out)) initialization."""
        rng = np.random.default_rng(config.seed)
        params = {}

        def mat(name, fan_in, fan_out, shape=None):
            shape = shape or (fan_in, fan_out)
            if zero:
                w = np.zeros(shape)
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-bound, bound, shape)
            params[name] = Parameter(name, w)
            params[name + "_b"] = Parameter(name + "_b",
                                            np.zeros(shape[-1]))

        c = config
        fh = len(HIST_FEATURE_NAMES)
        ff = len(FUTURE_FEATURE_NAMES)
        if c.arch == "mlp":
            # flat two-hidden-layer combiner without the encoder or the
            # residual-fed weight structure
            flat_in = c.T * fh + c.H * ff
            mat("mlp1", flat_in, c.hidden)
            mat("mlp2", c.hidden, c.hidden)
            mat("mlp_out", c.hidden, c.H * c.head_out)
            return WrNetwork(config=config, params=params)
        ch_in = fh
        for li, _ in enumerate(c.dilations):
            mat(f"conv{li}", c.kernel * ch_in, c.hidden,
                (c.kernel, ch_in, c.hidden))
            ch_in = c.hidden
        mat("global", c.hidden, c.hidden)
        mat("local", c.T * c.hidden, c.H)
        head_in = c.hidden + 1 + ff
        mat("head1", head_in, c.hidden)
        mat("head2", c.hidden, c.head_out)
        return WrNetwork(config=config, params=params)

    def forward(self, tape: Tape, hist: np.ndarray, fut: np.ndarray):
        """Run the encoder and head on a batch.

        hist: (B, T, Fh), fut: (B, H, Ff). Returns node handles
        (logits, residual) where logits is None for a bare forecaster
        (no components) and residual is then the forecast itself.
        """
        c = self.config
        B, T, fh = hist.shape
        if T != c.T or fh != len(HIST_FEATURE_NAMES):
            raise ConfigError(f"history shape {hist.shape} does not match "
                              f"T={c.T}, F={len(HIST_FEATURE_NAMES)}")
        if fut.shape[1] != c.H or fut.shape[2] != len(FUTURE_FEATURE_NAMES):
            raise ConfigError(f"future shape {fut.shape} does not match "
                              f"H={c.H}, F={len(FUTURE_FEATURE_NAMES)}")
        p = {k: tape.param(v) for k, v in self.params.items()}

        if c.arch == "mlp":
            flat = tape.concat(
                [tape.reshape(tape.constant(hist), (B, c.T * fh)),
                 tape.reshape(tape.constant(fut),
                              (B, c.H * fut.shape[2]))], axis=-1)
            z = tape.relu(tape.add(tape.matmul(flat, p["mlp1"]), p["mlp1_b"]))
            z = tape.relu(tape.add(tape.matmul(z, p["mlp2"]), p["mlp2_b"]))
            out = tape.add(tape.matmul(z, p["mlp_out"]), p["mlp_out_b"])
            out = tape.reshape(out, (B, c.H, c.head_out))
            if c.n_components == 0:
                return None, tape.reshape(out, (B, c.H))
            logits = tape.slice_last_axis(out, 0, c.n_components)
            residual = tape.reshape(
                tape.slice_last_axis(out, c.n_components,
                                     c.n_components + 1), (B, c.H))
            return logits, residual

        h = tape.constant(hist)
        for li, dil in enumerate(c.dilations):
            h = tape.conv1d_causal(h, p[f"conv{li}"], p[f"conv{li}_b"], dil)
            h = tape.relu(h)

        last = tape.take_last_time(h)
        c_global = tape.add(tape.matmul(last, p["global"]), p["global_b"])

        flat = tape.reshape(h, (B, c.T * c.hidden))
        c_local = tape.add(tape.matmul(flat, p["local"]), p["local_b"])
        c_local3 = tape.reshape(c_local, (B, c.H, 1))

        head_in = tape.concat(
            [tape.expand_time(c_global, c.H), c_local3, tape.constant(fut)],
            axis=-1)
        z = tape.relu(tape.add(tape.matmul(head_in, p["head1"]),
                               p["head1_b"]))
        out = tape.add(tape.matmul(z, p["head2"]), p["head2_b"])

        if c.n_components == 0:
            return None, tape.reshape(out, (B, c.H))
        logits = tape.slice_last_axis(out, 0, c.n_components)
        residual = tape.reshape(
            tape.slice_last_axis(out, c.n_components, c.n_components + 1),
            (B, c.H))
        return logits, residual

    # ---- persistence

    def state_dict(self) -> dict:
        return {"config": {"T": self.config.T, "H": self.config.H,
                           "n_components": self.config.n_components,
                           "hidden": self.config.hidden,
                           "kernel": self.config.kernel,
                           "dilations": list(self.config.dilations),
                           "seed": self.config.seed,
                           "arch": self.config.arch},
                "params": {k: {"shape": list(v.value.shape),
                               "data": v.value.ravel().tolist()}
                           for k, v in self.params.items()}}

    @staticmethod
    def from_state_dict(d: dict) -> "WrNetwork":
        cfgd = dict(d["config"])
        cfgd["dilations"] = tuple(cfgd["dilations"])
        config = NetConfig(**cfgd)
        net = WrNetwork.init(config, zero=True)
        for k, spec in d["params"].items():
            if k not in net.params:
                raise ConfigError(f"unknown parameter {k!r} in checkpoint")
            shape = tuple(spec["shape"])
            if net.params[k].value.shape != shape:
                raise ConfigError(
                    f"checkpoint shape {shape} for {k!r} does not match "
                    f"{net.params[k].value.shape}")
            net.params[k] = Parameter(
                k, np.asarray(spec["data"], float).reshape(shape))
        return net

    def to_json(self) -> str:
        return json.dumps({"format": "wrcast-net-1", **self.state_dict()})

    @staticmethod
    def from_json(text: str) -> "WrNetwork":
        d = json.loads(text)
        if d.get("format") != "wrcast-net-1":
            raise ConfigError("not a serialized network checkpoint")
        return WrNetwork.from_state_dict(d)
