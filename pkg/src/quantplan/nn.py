"""Small encoder+predictor latent world model, trained from scratch.

Plain numpy MLPs with tanh between linear layers.  The encoder maps a
flattened observation to a d-dimensional latent, the predictor maps
(latent, action) to the next latent, and a linear probe decodes the agent
position from the latent for diagnostics.  Backpropagation is written out
by hand so gradients can be checked against finite differences.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import rng
from .errors import TrainingDivergenceError, ValidationError
from .store import Model, TensorRecord

LATENT_DIM = 16
HIDDEN_DIM = 64
ENCODER_DEPTH = 4
PREDICTOR_DEPTH = 2
ACTION_DIM = 2


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 1e-3
    prediction_loss_weight: float = 1.0
    state_loss_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size) < 1 or self.learning_rate <= 0:
            raise ValidationError("epochs, batch_size, learning_rate must be positive")
        if self.prediction_loss_weight <= 0 or self.state_loss_weight <= 0:
            raise ValidationError("loss weights must be positive")


def _mlp_dims(in_dim: int, out_dim: int, depth: int) -> list[tuple[int, int]]:
    dims = [in_dim] + [HIDDEN_DIM] * (depth - 1) + [out_dim]
    return list(zip(dims[1:], dims[:-1]))  # (out, in) per layer


class Stack:
    """A stack of linear layers with tanh between them (linear final layer)."""

    def __init__(self, layers: list[tuple[np.ndarray, np.ndarray]]):
        self.layers = layers  # list of (W (out,in), b (out,))

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    def forward(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        h = x
        for i, (W, b) in enumerate(self.layers):
            if cache is not None:
                cache.append(h)
            h = h @ W.T + b
            if i < len(self.layers) - 1:
                h = np.tanh(h)
                if cache is not None:
                    cache.append(h)
        return h

    def backward(self, cache: list, grad_out: np.ndarray):
        """Returns (grad_input, [(dW, db) per layer])."""
        grads = [None] * len(self.layers)
        g = grad_out
        k = len(cache)
        for i in range(len(self.layers) - 1, -1, -1):
            if i < len(self.layers) - 1:
                k -= 1
                act = cache[k]  # tanh output
                g = g * (1.0 - act * act)
            k -= 1
            x_in = cache[k]
            W, _ = self.layers[i]
            grads[i] = (g.T @ x_in, g.sum(axis=0))
            g = g @ W
        return g, grads

    def flops(self) -> int:
        return sum(2 * W.size for W, _ in self.layers)


class WorldModel:
    def __init__(self, encoder: Stack, predictor: Stack, probe: Stack, metadata: dict | None = None):
        self.encoder = encoder
        self.predictor = predictor
        self.probe = probe
        self.metadata = metadata or {}

    # -- forward passes ----------------------------------------------------

    def _check(self, x: np.ndarray, dim: int, what: str) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != dim:
            raise ValidationError(f"{what} must have last dimension {dim}, got {x.shape}")
        return x

    def encode(self, obs: np.ndarray) -> np.ndarray:
        return self.encoder.forward(self._check(obs, self.encoder.in_dim, "observation"))

    def predict_next(self, latent: np.ndarray, action: np.ndarray) -> np.ndarray:
        z = self._check(latent, LATENT_DIM, "latent")
        a = self._check(action, ACTION_DIM, "action")
        return self.predictor.forward(np.concatenate([z, a], axis=-1))

    def rollout(self, latent0: np.ndarray, actions) -> list[np.ndarray]:
        """Open-loop latent rollout; latents[k] is the state after action k."""
        z = latent0
        out = []
        for a in actions:
            z = self.predict_next(z, a)
            out.append(z)
        return out

    def probe_decode(self, latent: np.ndarray) -> np.ndarray:
        return self.probe.forward(self._check(latent, LATENT_DIM, "latent"))

    # -- parameter plumbing ------------------------------------------------

    def stacks(self) -> list[tuple[str, Stack]]:
        return [("encoder", self.encoder), ("predictor", self.predictor), ("other", self.probe)]

    def params(self) -> list[np.ndarray]:
        out = []
        for _, s in self.stacks():
            for W, b in s.layers:
                out.extend([W, b])
        return out

    def params_vector(self) -> np.ndarray:
        return np.concatenate([p.reshape(-1) for p in self.params()])

    def set_params_vector(self, v: np.ndarray) -> None:
        i = 0
        for p in self.params():
            p[...] = v[i : i + p.size].reshape(p.shape)
            i += p.size

    def snap_float32(self) -> None:
        for p in self.params():
            p[...] = p.astype(np.float32).astype(np.float64)

    def flops_per_encode(self) -> int:
        return self.encoder.flops()

    def flops_per_predict(self) -> int:
        return self.predictor.flops()

    # -- manifest round trip -------------------------------------------------

    _ROLE_NAMES = {"encoder": "encoder", "predictor": "predictor", "other": "probe"}

    def to_model(self) -> Model:
        tensors = []
        for role, stack in self.stacks():
            base = self._ROLE_NAMES[role]
            for i, (W, b) in enumerate(stack.layers):
                tensors.append(
                    TensorRecord(f"{base}.{i}.weight", role, i, "linear_weight", W.shape, W)
                )
                tensors.append(
                    TensorRecord(f"{base}.{i}.bias", role, i, "linear_bias", b.shape, b)
                )
        return Model(tensors=tensors, extras=dict(self.metadata))

    @classmethod
    def from_model(cls, model: Model) -> "WorldModel":
        stacks = {}
        for role in ("encoder", "predictor", "other"):
            ws = sorted(
                (t for t in model.tensors if t.role == role and t.kind == "linear_weight"),
                key=lambda t: t.layer_index,
            )
            layers = []
            for w in ws:
                bias = next(
                    t
                    for t in model.tensors
                    if t.role == role and t.kind == "linear_bias" and t.layer_index == w.layer_index
                )
                layers.append(
                    (w.data.astype(np.float64), bias.data.astype(np.float64))
                )
            stacks[role] = Stack(layers)
        return cls(stacks["encoder"], stacks["predictor"], stacks["other"], dict(model.extras))


def init_world_model(
    obs_dim: int,
    master_seed: int = 0,
    seed: int = 0,
    latent_dim: int = LATENT_DIM,
    encoder_depth: int = ENCODER_DEPTH,
    predictor_depth: int = PREDICTOR_DEPTH,
) -> WorldModel:
    gen = rng.stream(master_seed, "init", seed)

    def make(dims):
        layers = []
        for out_d, in_d in dims:
            bound = np.sqrt(6.0 / (in_d + out_d))
            layers.append((gen.uniform(-bound, bound, (out_d, in_d)), np.zeros(out_d)))
        return Stack(layers)

    enc = make(_mlp_dims(obs_dim, latent_dim, encoder_depth))
    pred = make(_mlp_dims(latent_dim + ACTION_DIM, latent_dim, predictor_depth))
    probe = make(_mlp_dims(latent_dim, 2, 1))
    return WorldModel(enc, pred, probe)


def loss_and_grads(wm: WorldModel, obs, action, next_obs, state, pw: float, sw: float):
    """Training loss and analytic gradients for one mini-batch.

    loss = pw * mean_i |pred(enc(o_i), a_i) - enc(o'_i)|^2
         + sw * mean_i |probe(enc(o_i)) - s_i|^2
    """
    n = obs.shape[0]
    c_enc, c_next, c_pred, c_probe = [], [], [], []
    z = wm.encoder.forward(obs, c_enc)
    z_next = wm.encoder.forward(next_obs, c_next)
    p = wm.predictor.forward(np.concatenate([z, action], axis=-1), c_pred)
    probe_out = wm.probe.forward(z, c_probe)

    r_pred = p - z_next
    r_state = probe_out - state
    loss = pw * np.sum(r_pred * r_pred) / n + sw * np.sum(r_state * r_state) / n

    g_pred_in, g_pred_layers = wm.predictor.backward(c_pred, 2.0 * pw * r_pred / n)
    g_probe_in, g_probe_layers = wm.probe.backward(c_probe, 2.0 * sw * r_state / n)
    g_z = g_pred_in[:, : z.shape[-1]] + g_probe_in
    _, g_enc_layers = wm.encoder.backward(c_enc, g_z)
    _, g_next_layers = wm.encoder.backward(c_next, -2.0 * pw * r_pred / n)

    grads = []
    for ga, gb in zip(g_enc_layers, g_next_layers):
        grads.extend([ga[0] + gb[0], ga[1] + gb[1]])
    for g in g_pred_layers:
        grads.extend([g[0], g[1]])
    for g in g_probe_layers:
        grads.extend([g[0], g[1]])
    return loss, grads


def train_world_model(dataset, cfg: TrainConfig, master_seed: int = 0) -> WorldModel:
    """Adam training; deterministic given (dataset bytes, cfg, master_seed)."""
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    obs_dim = dataset.obs.shape[1]
    wm = init_world_model(obs_dim, master_seed=master_seed, seed=cfg.seed)
    order_gen = rng.stream(master_seed, "train", cfg.seed)

    params = wm.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    t = 0

    pw, sw = cfg.prediction_loss_weight, cfg.state_loss_weight
    initial_loss, _ = loss_and_grads(
        wm, dataset.obs, dataset.action, dataset.next_obs, dataset.state, pw, sw
    )
    n = len(dataset)
    for _ in range(cfg.epochs):
        perm = order_gen.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            loss, grads = loss_and_grads(
                wm,
                dataset.obs[idx],
                dataset.action[idx],
                dataset.next_obs[idx],
                dataset.state[idx],
                pw,
                sw,
            )
            if not np.isfinite(loss):
                raise TrainingDivergenceError(f"non-finite training loss: {loss}")
            t += 1
            lr_t = cfg.learning_rate * np.sqrt(1 - beta2**t) / (1 - beta1**t)
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= beta1
                mi += (1 - beta1) * g
                vi *= beta2
                vi += (1 - beta2) * g * g
                p -= lr_t * mi / (np.sqrt(vi) + eps)

    final_loss, _ = loss_and_grads(
        wm, dataset.obs, dataset.action, dataset.next_obs, dataset.state, pw, sw
    )
    wm.snap_float32()
    wm.metadata["train"] = {
        "initial_loss": float(initial_loss),
        "final_loss": float(final_loss),
        "config": asdict(cfg),
    }
    return wm


def fit_state_probe(wm: WorldModel, dataset) -> WorldModel:
    """Least-squares refit of the probe on (encode(obs), state) pairs.

    The encoder is untouched; a rank-deficient fit sets a warning flag in
    the model metadata instead of failing.
    """
    z = wm.encode(dataset.obs)
    A = np.hstack([z, np.ones((z.shape[0], 1))])
    sol, _, rank, _ = np.linalg.lstsq(A, dataset.state, rcond=None)
    W = sol[:-1].T.copy()
    b = sol[-1].copy()
    wm.probe.layers[0] = (W, b)
    wm.snap_float32()
    if rank < A.shape[1]:
        wm.metadata["probe_fit_warning"] = f"rank-deficient probe fit (rank {rank})"
    return wm
