"""Small single-head graph transformer with optional WIRE rotations."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass

import numpy as np

from ..rng import Rng, as_rng
from ..rope import InitScheme, init_frequencies
from . import autodiff as ad
from .autodiff import Tensor

__all__ = ["AttentionKind", "ModelConfig", "WireTransformer", "PERFORMER_EPS"]

PERFORMER_EPS = 1e-6


class AttentionKind(str, enum.Enum):
    SOFTMAX = "softmax"
    PERFORMER_RELU = "performer_relu"


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    n_layers: int = 4
    d_model: int = 32
    d_mlp: int = 32
    dropout_rate: float = 0.2
    wire_m: int = 0
    attention_kind: AttentionKind = AttentionKind.SOFTMAX
    share_wire_across_layers: bool = False
    wire_init_scale: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "attention_kind", AttentionKind(self.attention_kind))
        if self.input_dim < 1 or self.n_layers < 1 or self.d_model < 1 or self.d_mlp < 1:
            raise ValueError("model dimensions must be positive")
        if self.wire_m < 0:
            raise ValueError("wire_m must be nonnegative")
        if self.wire_m > 0 and self.d_model % 2:
            raise ValueError("WIRE needs an even model width")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attention_kind"] = self.attention_kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return cls(**d)


def _glorot(rng: Rng, fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    return rng.normal(0.0, gain / np.sqrt(fan_in), size=(fan_in, fan_out))


class WireTransformer:
    """Post-norm transformer: embed, ``n_layers`` x (attention, MLP), mean pool, scalar head.

    Parameters live in ``self.params`` (name -> leaf :class:`Tensor`), so the
    optimizer and checkpoints deal with one flat mapping.
    """

    def __init__(self, cfg: ModelConfig, rng: Rng | int | None = None):
        self.cfg = cfg
        rng = as_rng(rng)
        d, f = cfg.d_model, cfg.input_dim
        p: dict[str, np.ndarray] = {
            "embed.W": _glorot(rng.child("embed"), f, d),
            "embed.b": np.zeros(d),
        }
        for layer in range(cfg.n_layers):
            lr = rng.child(f"layer{layer}")
            pre = f"l{layer}."
            for name in ("Wq", "Wk", "Wv", "Wo"):
                p[pre + name] = _glorot(lr.child(name), d, d)
            p[pre + "mlp.W1"] = _glorot(lr.child("W1"), d, cfg.d_mlp)
            p[pre + "mlp.b1"] = np.zeros(cfg.d_mlp)
            p[pre + "mlp.W2"] = _glorot(lr.child("W2"), cfg.d_mlp, d)
            p[pre + "mlp.b2"] = np.zeros(d)
            for ln in ("ln1", "ln2"):
                p[pre + ln + ".g"] = np.ones(d)
                p[pre + ln + ".b"] = np.zeros(d)
            if cfg.wire_m and not cfg.share_wire_across_layers:
                p[pre + "wire.omega"] = self._init_omega(lr.child("wire"))
        if cfg.wire_m and cfg.share_wire_across_layers:
            p["wire.omega"] = self._init_omega(rng.child("wire"))
        p["head.W"] = _glorot(rng.child("head"), d, 1, gain=0.1)
        p["head.b"] = np.zeros(1)
        self.params = {k: Tensor(v, requires_grad=True) for k, v in p.items()}

    def _init_omega(self, rng: Rng) -> np.ndarray:
        return init_frequencies(self.cfg.d_model, self.cfg.wire_m, InitScheme.GAUSSIAN, rng,
                                scale=self.cfg.wire_init_scale).omega

    def omega_name(self, layer: int) -> str | None:
        if not self.cfg.wire_m:
            return None
        return "wire.omega" if self.cfg.share_wire_across_layers else f"l{layer}.wire.omega"

    def wire_parameter_count(self) -> int:
        return sum(t.value.size for k, t in self.params.items() if k.endswith("wire.omega"))

    def parameter_count(self) -> int:
        return sum(t.value.size for t in self.params.values())

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    def forward(self, x: np.ndarray, coords: np.ndarray | None = None, train: bool = False,
                rng: Rng | None = None, wire: bool = True, capture: dict | None = None) -> Tensor:
        """Predict one scalar per graph.

        ``x`` is ``(B, N, input_dim)``; ``coords`` is ``(B, N, wire_m)``.  Dropout
        is active only with ``train=True`` and then needs ``rng``.  ``wire=False``
        runs the same weights with rotations switched off.  If ``capture`` is
        a dict, the final layer's attention scores are stored under ``"scores"``.
        """
        cfg = self.cfg
        P = self.params
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
            coords = None if coords is None else np.asarray(coords)[None]
        if x.shape[-1] != cfg.input_dim:
            raise ValueError(f"expected {cfg.input_dim} input features, got {x.shape[-1]}")
        use_wire = wire and cfg.wire_m > 0
        if use_wire:
            coords = np.asarray(coords, dtype=np.float64)
            if coords.shape != x.shape[:-1] + (cfg.wire_m,):
                raise ValueError(f"coords must have shape {x.shape[:-1] + (cfg.wire_m,)}, got {coords.shape}")
            coords_t = Tensor(coords)
        if train and cfg.dropout_rate > 0 and rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")

        def drop(t: Tensor, tag: str) -> Tensor:
            if not train or cfg.dropout_rate == 0:
                return t
            keep = rng.child(tag).random(t.shape) >= cfg.dropout_rate
            return ad.dropout(t, keep, cfg.dropout_rate)

        scale = 1.0 / np.sqrt(cfg.d_model)
        h = ad.matmul(x, P["embed.W"]) + P["embed.b"]
        for layer in range(cfg.n_layers):
            pre = f"l{layer}."
            q = ad.matmul(h, P[pre + "Wq"]) * scale
            k = ad.matmul(h, P[pre + "Wk"])
            v = ad.matmul(h, P[pre + "Wv"])
            if use_wire:
                theta = ad.matmul(coords_t, ad.transpose(P[self.omega_name(layer)]))
                q = ad.rope(q, theta)
                k = ad.rope(k, theta)
            if cfg.attention_kind is AttentionKind.SOFTMAX:
                a = ad.softmax(ad.matmul(q, ad.transpose(k)))
                if capture is not None and layer == cfg.n_layers - 1:
                    capture["scores"] = a.value.copy()
                att = ad.matmul(drop(a, f"{pre}att"), v)
            else:
                fq, fk = ad.relu(q), ad.relu(k)
                num = ad.matmul(fq, ad.matmul(ad.transpose(fk), v))
                den = ad.matmul(fq, ad.transpose(ad.sum_axis(fk, axis=-2))) + PERFORMER_EPS
                if capture is not None and layer == cfg.n_layers - 1:
                    scores = fq.value @ np.swapaxes(fk.value, -1, -2)
                    capture["scores"] = scores / (scores.sum(axis=-1, keepdims=True) + PERFORMER_EPS)
                att = drop(num / den, f"{pre}att")
            o = ad.matmul(att, P[pre + "Wo"])
            h = ad.layernorm(h + o) * P[pre + "ln1.g"] + P[pre + "ln1.b"]
            hidden = ad.relu(ad.matmul(h, P[pre + "mlp.W1"]) + P[pre + "mlp.b1"])
            mlp = drop(ad.matmul(hidden, P[pre + "mlp.W2"]) + P[pre + "mlp.b2"], f"{pre}mlp")
            h = ad.layernorm(h + mlp) * P[pre + "ln2.g"] + P[pre + "ln2.b"]
        pooled = ad.mean_pool(h)
        return ad.matmul(pooled, P["head.W"]) + P["head.b"]

    # checkpoints: flat JSON map name -> {shape, values}
    def state_dict(self) -> dict:
        return {k: {"shape": list(t.value.shape), "values": t.value.ravel().tolist()}
                for k, t in self.params.items()}

    def load_state_dict(self, state: dict):
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks parameters {sorted(missing)}")
        for k, t in self.params.items():
            arr = np.asarray(state[k]["values"], dtype=np.float64).reshape(state[k]["shape"])
            if arr.shape != t.value.shape:
                raise ValueError(f"parameter {k}: checkpoint shape {arr.shape} != model shape {t.value.shape}")
            t.value = arr.copy()

    def save(self, path, extra: dict | None = None):
        blob = {"config": self.cfg.to_dict(), "params": self.state_dict()}
        if extra:
            blob.update(extra)
        with open(path, "w") as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path) -> tuple[WireTransformer, dict]:
        with open(path) as fh:
            blob = json.load(fh)
        model = cls(ModelConfig.from_dict(blob["config"]), rng=0)
        model.load_state_dict(blob["params"])
        return model, blob
