"""Conditional variational model over plan encodings, in plain numpy.

The encoder reads ``input plan encoding ++ condition`` and produces the mean
and log-variance of a diagonal Gaussian; a latent sample
``z = mu + exp(logvar / 2) * eps`` is decoded together with the condition into
a plan encoding in [0, 1]. Gradients are derived by hand and trained with
Adam. :class:`HintVAE` wraps it all as a scikit-learn estimator.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .encoding import participation_mask
from .errors import IncompatibleModelError, InvalidArgumentError

LOGVAR_CLAMP = 8.0
MODEL_MAGIC = b"HGVAE001"


@dataclass(frozen=True)
class ModelDims:
    plan_dim: int
    cond_dim: int
    latent_dim: int = 16
    hidden: tuple = (64, 64)

    @property
    def input_dim(self) -> int:
        return self.plan_dim + self.cond_dim

    def layer_shapes(self) -> list[tuple[str, tuple]]:
        shapes = []
        prev = self.input_dim
        for k, h in enumerate(self.hidden):
            shapes += [(f"enc{k}.W", (prev, h)), (f"enc{k}.b", (h,))]
            prev = h
        shapes += [("mu.W", (prev, self.latent_dim)), ("mu.b", (self.latent_dim,)),
                   ("logvar.W", (prev, self.latent_dim)), ("logvar.b", (self.latent_dim,))]
        prev = self.latent_dim + self.cond_dim
        for k, h in enumerate(self.hidden):
            shapes += [(f"dec{k}.W", (prev, h)), (f"dec{k}.b", (h,))]
            prev = h
        shapes += [("out.W", (prev, self.plan_dim)), ("out.b", (self.plan_dim,))]
        return shapes


@dataclass
class ModelParams:
    dims: ModelDims
    arrays: dict

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(self.dims, {k: np.zeros_like(v) for k, v in self.arrays.items()})


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    if dims.latent_dim < 1:
        raise InvalidArgumentError("latent_dim must be >= 1")
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in dims.layer_shapes():
        if name.endswith(".W"):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
        else:
            arrays[name] = np.zeros(shape)
    return ModelParams(dims, arrays)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _as_batch(v, width, what):
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    if v.shape[1] != width:
        raise InvalidArgumentError(f"{what} has length {v.shape[1]}, expected {width}")
    return v, single


def _encode(params: ModelParams, x):
    p, d = params.arrays, params.dims
    hs = [x]
    h = x
    for k in range(len(d.hidden)):
        h = np.tanh(h @ p[f"enc{k}.W"] + p[f"enc{k}.b"])
        hs.append(h)
    mu = h @ p["mu.W"] + p["mu.b"]
    lv_raw = h @ p["logvar.W"] + p["logvar.b"]
    return mu, lv_raw, hs


def encode(params: ModelParams, x):
    """(mu, logvar) for one input vector or a batch of rows."""
    x, single = _as_batch(x, params.dims.input_dim, "encoder input")
    mu, lv_raw, _ = _encode(params, x)
    lv = np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return (mu[0], lv[0]) if single else (mu, lv)


def reparameterize(mu, logvar, epsilon):
    mu, logvar, epsilon = (np.asarray(a, dtype=float) for a in (mu, logvar, epsilon))
    if not mu.shape == logvar.shape == epsilon.shape:
        raise InvalidArgumentError("mu, logvar and epsilon must share a shape")
    return mu + np.exp(0.5 * logvar) * epsilon


def _decode(params: ModelParams, z, cond):
    p, d = params.arrays, params.dims
    g = np.concatenate([z, cond], axis=1)
    gs = [g]
    for k in range(len(d.hidden)):
        g = np.tanh(g @ p[f"dec{k}.W"] + p[f"dec{k}.b"])
        gs.append(g)
    out = _sigmoid(g @ p["out.W"] + p["out.b"])
    return out, gs


def decode(params: ModelParams, z, condition_vec):
    d = params.dims
    z, single = _as_batch(z, d.latent_dim, "latent vector")
    c, _ = _as_batch(condition_vec, d.cond_dim, "condition")
    if c.shape[0] != z.shape[0]:
        raise InvalidArgumentError("latent and condition batch sizes differ")
    out, _ = _decode(params, z, c)
    return out[0] if single else out


def loss_terms(pred, target, mu, logvar, beta, mask):
    """Per-example (recon, kl): masked MSE and KL to the standard normal."""
    pred, target, mask = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (pred, target, mask))
    mu, logvar = np.atleast_2d(mu), np.atleast_2d(logvar)
    msum = np.maximum(mask.sum(axis=1), 1.0)
    recon = (mask * (pred - target) ** 2).sum(axis=1) / msum
    kl = 0.5 * (mu ** 2 + np.exp(logvar) - 1.0 - logvar).sum(axis=1)
    return recon, kl


def loss(pred, target, mu, logvar, beta: float = 0.1, mask=None):
    """(total, recon, kl) averaged over the batch.

    ``mask`` selects participating plan cells; when omitted every cell counts.
    """
    if beta < 0:
        raise InvalidArgumentError("beta must be nonnegative")
    if mask is None:
        mask = np.ones_like(np.asarray(pred, dtype=float))
    recon, kl = loss_terms(pred, target, mu, logvar, beta, mask)
    r, k = float(recon.mean()), float(kl.mean())
    return r + beta * k, r, k


def _split_cond(params: ModelParams, x):
    return x[:, params.dims.plan_dim:]


def forward_loss(params: ModelParams, x, target, eps, beta):
    x = np.atleast_2d(x)
    cond = _split_cond(params, x)
    mask = participation_mask(cond[:, :-2])
    mu, lv_raw, _ = _encode(params, x)
    lv = np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    z = mu + np.exp(0.5 * lv) * eps
    out, _ = _decode(params, z, cond)
    return loss(out, target, mu, lv, beta, mask)


def backward(params: ModelParams, x, target, eps, beta: float = 0.1):
    """Analytic gradients of the mean batch loss for a fixed noise batch.

    ``x`` rows are ``input plan encoding ++ condition``. Returns
    ``(grads, (total, recon, kl))``.
    """
    p, d = params.arrays, params.dims
    x = np.atleast_2d(np.asarray(x, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    n = x.shape[0]
    cond = _split_cond(params, x)
    mask = participation_mask(cond[:, :-2])

    mu, lv_raw, hs = _encode(params, x)
    lv = np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    sigma = np.exp(0.5 * lv)
    z = mu + sigma * eps
    out, gs = _decode(params, z, cond)
    total, recon, kl = loss(out, target, mu, lv, beta, mask)

    grads = {}
    msum = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
    dout = 2.0 * mask * (out - target) / (msum * n)
    da = dout * out * (1.0 - out)
    grads["out.W"] = gs[-1].T @ da
    grads["out.b"] = da.sum(axis=0)
    dg = da @ p["out.W"].T
    for k in reversed(range(len(d.hidden))):
        da = dg * (1.0 - gs[k + 1] ** 2)
        grads[f"dec{k}.W"] = gs[k].T @ da
        grads[f"dec{k}.b"] = da.sum(axis=0)
        dg = da @ p[f"dec{k}.W"].T
    dz = dg[:, :d.latent_dim]

    dmu = dz + beta * mu / n
    dlv = dz * eps * 0.5 * sigma + beta * 0.5 * (np.exp(lv) - 1.0) / n
    dlv = dlv * ((lv_raw > -LOGVAR_CLAMP) & (lv_raw < LOGVAR_CLAMP))
    h = hs[-1]
    grads["mu.W"] = h.T @ dmu
    grads["mu.b"] = dmu.sum(axis=0)
    grads["logvar.W"] = h.T @ dlv
    grads["logvar.b"] = dlv.sum(axis=0)
    dh = dmu @ p["mu.W"].T + dlv @ p["logvar.W"].T
    for k in reversed(range(len(d.hidden))):
        da = dh * (1.0 - hs[k + 1] ** 2)
        grads[f"enc{k}.W"] = hs[k].T @ da
        grads[f"enc{k}.b"] = da.sum(axis=0)
        dh = da @ p[f"enc{k}.W"].T
    return ModelParams(d, {name: grads[name] for name, _ in d.layer_shapes()}), (total, recon, kl)


@dataclass
class TrainState:
    params: ModelParams
    m: ModelParams
    v: ModelParams
    step: int = 0
    seed: int = 0
    loss_trace: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def adam_step(state: TrainState, grads: ModelParams, lr: float,
              b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8) -> None:
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.arrays.items():
        m = state.m.arrays[name]
        v = state.v.arrays[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        state.params.arrays[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class HintVAE(BaseEstimator):
    """Conditional VAE estimator mapping ``[plan ++ condition]`` rows to plans.

    ``fit(X, y)`` infers the plan width from ``y`` and treats the remaining
    trailing columns of ``X`` as the condition (query encoding followed by the
    two improvement p-values). ``predict`` decodes with ``eps = 0``.
    """

    def __init__(self, latent_dim=16, hidden=(64, 64), beta=0.1, learning_rate=1e-3,
                 batch_size=64, epochs=30, random_state=0):
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.beta = beta
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def _validate_hyper(self):
        if self.latent_dim < 1:
            raise InvalidArgumentError("latent_dim must be >= 1")
        if self.beta < 0 or self.learning_rate <= 0:
            raise InvalidArgumentError("beta must be >= 0 and learning_rate > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidArgumentError("batch_size must be >= 1 and epochs >= 0")

    def fit(self, X, y):
        self._validate_hyper()
        X, y = check_X_y(X, y, multi_output=True, dtype=np.float64)
        y = np.atleast_2d(y)
        plan_dim = y.shape[1]
        cond_dim = X.shape[1] - plan_dim
        if plan_dim % 6 or cond_dim != plan_dim // 2 + 2:
            raise InvalidArgumentError(
                f"X has {X.shape[1]} columns; expected plan ({plan_dim}) + condition "
                f"({plan_dim // 2 + 2})"
            )
        dims = ModelDims(plan_dim, cond_dim, int(self.latent_dim), tuple(self.hidden))
        seed = int(self.random_state)
        params = init_params(dims, seed)
        state = TrainState(params, params.zeros_like(), params.zeros_like(), 0, seed)
        rng = np.random.default_rng([seed, 1])
        n = X.shape[0]
        init_eps = rng.standard_normal((n, dims.latent_dim))
        state.meta["initial_loss"] = forward_loss(params, X, y, init_eps, self.beta)[0]
        bs = int(self.batch_size)
        for _ in range(int(self.epochs)):
            order = rng.permutation(n)
            sums = np.zeros(3)
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                eps = rng.standard_normal((len(idx), dims.latent_dim))
                grads, terms = backward(state.params, X[idx], y[idx], eps, self.beta)
                adam_step(state, grads, self.learning_rate)
                sums += np.array(terms) * len(idx)
            state.loss_trace.append(tuple(float(s) for s in sums / n))
        self.state_ = state
        self.dims_ = dims
        self.n_features_in_ = X.shape[1]
        return self

    def _check_X(self, X):
        check_is_fitted(self, "state_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.dims_.input_dim:
            raise InvalidArgumentError(
                f"X has {X.shape[1]} features, model expects {self.dims_.input_dim}"
            )
        return X

    def transform(self, X):
        """Latent means."""
        return encode(self.state_.params, self._check_X(X))[0]

    def predict(self, X, epsilon=None):
        X = self._check_X(X)
        mu, lv = encode(self.state_.params, X)
        eps = np.zeros_like(mu) if epsilon is None else np.broadcast_to(epsilon, mu.shape)
        z = reparameterize(mu, lv, eps)
        return decode(self.state_.params, z, X[:, self.dims_.plan_dim:])

    def sample(self, X, random_state=None):
        X = self._check_X(X)
        rng = np.random.default_rng(random_state)
        return self.predict(X, rng.standard_normal((X.shape[0], self.dims_.latent_dim)))

    def score(self, X, y):
        """Negative mean loss at eps = 0."""
        X = self._check_X(X)
        eps = np.zeros((X.shape[0], self.dims_.latent_dim))
        return -forward_loss(self.state_.params, X, np.atleast_2d(y), eps, self.beta)[0]

    @classmethod
    def from_state(cls, state: TrainState, **hyper) -> "HintVAE":
        est = cls(latent_dim=state.params.dims.latent_dim,
                  hidden=tuple(state.params.dims.hidden), random_state=state.seed, **hyper)
        est.state_ = state
        est.dims_ = state.params.dims
        est.n_features_in_ = state.params.dims.input_dim
        return est


def pairs_to_arrays(pairs):
    X = np.array([np.concatenate([p.input_encoding, p.condition]) for p in pairs])
    y = np.array([p.target_encoding for p in pairs])
    return X, y


def train(pairs, latent_dim=16, hidden=(64, 64), beta=0.1, learning_rate=1e-3,
          batch_size=64, epochs=30, seed=0) -> TrainState:
    pairs = list(pairs)
    if not pairs:
        raise InvalidArgumentError("cannot train on an empty pair list")
    X, y = pairs_to_arrays(pairs)
    est = HintVAE(latent_dim, tuple(hidden), beta, learning_rate, batch_size, epochs, seed)
    est.fit(X, y)
    state = est.state_
    state.meta["hyper"] = {"latent_dim": latent_dim, "hidden": list(hidden), "beta": beta,
                           "learning_rate": learning_rate, "batch_size": batch_size,
                           "epochs": epochs}
    return state


# -- model file ----------------------------------------------------------------
#
#   magic      8 bytes  b"HGVAE001"
#   hlen       uint32 little-endian
#   header     hlen bytes, UTF-8 JSON (sorted keys): dims, seed, step,
#              loss_trace, meta (schema_hash, ...), arrays [[name, shape], ...]
#   payload    float64 little-endian: params, then Adam m, then Adam v, each
#              in the declared array order, C order
#   checksum   32 bytes sha256 of everything above

def save_model(state: TrainState, path) -> None:
    Path(path).write_bytes(model_to_bytes(state))


def model_to_bytes(state: TrainState) -> bytes:
    d = state.params.dims
    shapes = d.layer_shapes()
    header = {
        "dims": {"plan_dim": d.plan_dim, "cond_dim": d.cond_dim,
                 "latent_dim": d.latent_dim, "hidden": list(d.hidden)},
        "seed": state.seed,
        "step": state.step,
        "loss_trace": [list(t) for t in state.loss_trace],
        "meta": state.meta,
        "arrays": [[name, list(shape)] for name, shape in shapes],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<I", len(hbytes)))
    buf.write(hbytes)
    for group in (state.params, state.m, state.v):
        for name, _ in shapes:
            buf.write(np.ascontiguousarray(group.arrays[name], dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def model_from_bytes(data: bytes, schema_hash: str | None = None) -> TrainState:
    if len(data) < 44 or data[:8] != MODEL_MAGIC:
        raise IncompatibleModelError("not a model file (bad magic)")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise IncompatibleModelError("model file is corrupted (checksum mismatch)")
    (hlen,) = struct.unpack("<I", body[8:12])
    try:
        header = json.loads(body[12:12 + hlen].decode("utf-8"))
        dd = header["dims"]
        dims = ModelDims(dd["plan_dim"], dd["cond_dim"], dd["latent_dim"], tuple(dd["hidden"]))
    except (ValueError, KeyError) as exc:
        raise IncompatibleModelError(f"unreadable model header: {exc}") from None
    shapes = dims.layer_shapes()
    if [[n, list(s)] for n, s in shapes] != header["arrays"]:
        raise IncompatibleModelError("array layout does not match the recorded dims")
    meta = header.get("meta", {})
    if schema_hash is not None and meta.get("schema_hash") != schema_hash:
        raise IncompatibleModelError(
            f"model was trained for schema {meta.get('schema_hash')}, not {schema_hash}"
        )
    offset = 12 + hlen
    groups = []
    for _ in range(3):
        arrays = {}
        for name, shape in shapes:
            count = int(np.prod(shape))
            chunk = body[offset:offset + 8 * count]
            if len(chunk) != 8 * count:
                raise IncompatibleModelError("model payload is truncated")
            arrays[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
            offset += 8 * count
        groups.append(ModelParams(dims, arrays))
    if offset != len(body):
        raise IncompatibleModelError("trailing bytes in model payload")
    return TrainState(groups[0], groups[1], groups[2], header["step"], header["seed"],
                      [tuple(t) for t in header["loss_trace"]], meta)


def load_model(path, schema_hash: str | None = None) -> TrainState:
    return model_from_bytes(Path(path).read_bytes(), schema_hash)
