"""GNN / GAT regressors, the GNN-CVAE, their training loops and metrics."""
from dataclasses import dataclass, field

import numpy as np

from .diffkernel import checkpoint
from .diffkernel.layers import (
    Dense,
    GATLayer,
    GraphConv,
    GraphMaxPool,
    Sequential,
    Tanh,
    broadcast_append,
    gaussian_kl,
    squared_error,
)
from .diffkernel.optim import Adam
from .errors import DomainError, TrainingError
from .rng import stream

DEFAULT_WIDTH = 32
DEFAULT_ORDER = 3
DEFAULT_LATENT = 3


def _gain_vector(input_gain, f_in):
    gain = np.ones(f_in)
    if input_gain is not None:
        g = np.asarray(input_gain, dtype=np.float64)
        if g.ndim != 1 or g.shape[0] > f_in or not np.all(np.isfinite(g)):
            raise DomainError(f"input_gain must be a finite vector of length <= {f_in}")
        gain[: g.shape[0]] = g
    return gain


def _graph_stack(kind, f_in, widths, order, head_width, out_dim, rng, zero_head=False, input_gain=None):
    layers = []
    prev = f_in
    gain = _gain_vector(input_gain, f_in)
    for i, w in enumerate(widths, start=1):
        if kind == "gat":
            layer = GATLayer(prev, w, rng)
            if i == 1:
                layer.params["weight"] *= gain[:, None]
        else:
            layer = GraphConv(prev, w, order, rng)
            if i == 1:
                layer.params["taps"] *= gain[None, :, None]
        layers.append((f"{'gat' if kind == 'gat' else 'conv'}{i}", layer))
        layers.append((f"act{i}", Tanh()))
        prev = w
    layers.append(("pool", GraphMaxPool()))
    layers.append(("fc", Dense(prev, head_width, rng)))
    layers.append(("fc_act", Tanh()))
    layers.append(("head", Dense(head_width, out_dim, rng, zero=zero_head)))
    return Sequential(layers)


class _Model:
    kind = None

    def parameters(self):
        raise NotImplementedError

    def gradients(self):
        raise NotImplementedError

    def zero_grad(self):
        raise NotImplementedError

    def to_checkpoint(self, extra=None):
        return checkpoint.dumps(self.parameters(), self.architecture(), extra)

    def load_params(self, stored):
        checkpoint.load_into(self.parameters(), stored)


class GraphRegressor(_Model):
    """Graph layers -> tanh -> maxpool -> dense -> tanh -> linear head.

    ``kind='gnn'`` stacks polynomial graph filters, ``kind='gat'`` attention
    layers. The output is one point in ``R^out_dim``.
    """

    def __init__(self, in_features, out_dim, seed=0, kind="gnn", widths=(DEFAULT_WIDTH, DEFAULT_WIDTH),
                 order=DEFAULT_ORDER, head_width=DEFAULT_WIDTH, zero_head=False, input_gain=None):
        if kind not in ("gnn", "gat"):
            raise DomainError(f"unknown regressor kind {kind!r}")
        self.kind = kind
        self.in_features = in_features
        self.out_dim = out_dim
        self.widths = tuple(widths)
        self.order = order
        self.head_width = head_width
        self.input_gain = None if input_gain is None else [float(v) for v in input_gain]
        rng = stream(seed, "init", 0)
        self.net = _graph_stack(kind, in_features, self.widths, order, head_width, out_dim, rng, zero_head,
                                self.input_gain)

    def architecture(self):
        return {
            "kind": self.kind,
            "in_features": self.in_features,
            "out_dim": self.out_dim,
            "widths": list(self.widths),
            "order": self.order,
            "head_width": self.head_width,
            "input_gain": self.input_gain,
        }

    def parameters(self):
        return self.net.parameters()

    def gradients(self):
        return self.net.gradients()

    def zero_grad(self):
        self.net.zero_grad()

    def predict(self, shift, x):
        return self.net.forward(np.ascontiguousarray(x, dtype=np.float64), shift)[0]

    def loss_and_grads(self, shift, x, labels):
        """Summed squared error over ``labels`` rows; gradients accumulate."""
        y_hat = self.net.forward(np.ascontiguousarray(x, dtype=np.float64), shift)
        loss, dy = squared_error(y_hat, np.atleast_2d(labels))
        dx = self.net.backward(dy)
        return loss, dx


class GnnCvae(_Model):
    """Encoder maps ``(y, x)`` on the graph to a diagonal Gaussian over the
    latent; the decoder maps ``(tau, x)`` to a point. The latent (or the
    label, for the encoder) is appended to every node row."""

    kind = "gnn_cvae"

    def __init__(self, in_features, out_dim, seed=0, latent_dim=DEFAULT_LATENT,
                 widths=(DEFAULT_WIDTH, DEFAULT_WIDTH), order=DEFAULT_ORDER, head_width=DEFAULT_WIDTH,
                 input_gain=None):
        self.in_features = in_features
        self.out_dim = out_dim
        self.latent_dim = latent_dim
        self.widths = tuple(widths)
        self.order = order
        self.head_width = head_width
        self.input_gain = None if input_gain is None else [float(v) for v in input_gain]
        # the gain covers the node features; appended label/latent columns keep gain 1
        self.encoder = _graph_stack("gnn", in_features + out_dim, self.widths, order, head_width,
                                    2 * latent_dim, stream(seed, "init", 1), input_gain=self.input_gain)
        self.decoder = _graph_stack("gnn", in_features + latent_dim, self.widths, order, head_width,
                                    out_dim, stream(seed, "init", 2), input_gain=self.input_gain)

    def architecture(self):
        return {
            "kind": self.kind,
            "in_features": self.in_features,
            "out_dim": self.out_dim,
            "latent_dim": self.latent_dim,
            "widths": list(self.widths),
            "order": self.order,
            "head_width": self.head_width,
            "input_gain": self.input_gain,
        }

    def parameters(self):
        out = self.encoder.parameters("encoder.")
        out.update(self.decoder.parameters("decoder."))
        return out

    def gradients(self):
        out = self.encoder.gradients("encoder.")
        out.update(self.decoder.gradients("decoder."))
        return out

    def zero_grad(self):
        self.encoder.zero_grad()
        self.decoder.zero_grad()

    def encode(self, shift, x, y):
        h = self.encoder.forward(broadcast_append(x, y), shift)
        p = self.latent_dim
        return h[0, :p], h[0, p:]

    def decode(self, shift, x, tau):
        return self.decoder.forward(broadcast_append(x, tau), shift)[0]

    def predict(self, shift, x):
        """Decoder output at the prior mean ``tau = 0``."""
        return self.decode(shift, np.ascontiguousarray(x, dtype=np.float64), np.zeros(self.latent_dim))

    def sample(self, shift, x, n, rng):
        x = np.ascontiguousarray(x, dtype=np.float64)
        taus = rng.standard_normal((n, self.latent_dim))
        return np.array([self.decode(shift, x, t) for t in taus]).reshape(n, self.out_dim)

    def neg_elbo(self, shift, x, y, eps):
        """KL to N(0, I) plus the unit-variance Gaussian reconstruction loss
        averaged over the latent draws ``tau = mu + sigma * eps`` (rows of
        ``eps``). Returns ``(loss, kl, recon, dx)``; parameter gradients
        accumulate."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).reshape(1, -1)
        eps = np.atleast_2d(eps)
        ns = eps.shape[0]
        if ns < 1:
            raise DomainError("need at least one latent sample")
        f = x.shape[1]
        p = self.latent_dim
        mu, logvar = self.encode(shift, x, y)
        sigma = np.exp(0.5 * logvar)
        kl, dmu, dlogvar = gaussian_kl(mu, logvar)
        recon = 0.0
        dx = np.zeros_like(x)
        for e in eps:
            tau = mu + sigma * e
            y_hat = self.decoder.forward(broadcast_append(x, tau), shift)
            diff = y_hat - y
            recon += 0.5 * float((diff**2).sum()) / ns
            d_in = self.decoder.backward(diff / ns)
            dx += d_in[:, :f]
            dtau = d_in[:, f:].sum(axis=0)
            dmu += dtau
            dlogvar += dtau * e * 0.5 * sigma
        d_enc = self.encoder.backward(np.concatenate([dmu, dlogvar])[None, :])
        dx += d_enc[:, :f]
        return kl + recon, kl, recon, dx


def model_from_architecture(arch, seed=0):
    arch = dict(arch)
    kind = arch.pop("kind")
    if kind == "gnn_cvae":
        return GnnCvae(seed=seed, **arch)
    return GraphRegressor(seed=seed, kind=kind, **arch)


def load_model(text):
    doc = checkpoint.loads(text)
    model = model_from_architecture(doc["architecture"])
    model.load_params(doc["params"])
    return model, doc


class ConstantBaseline:
    """Predicts the mean training label regardless of input."""

    kind = "baseline"

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)

    @classmethod
    def fit(cls, groups):
        labels = np.vstack([g.labels for g in groups])
        return cls(labels.mean(axis=0))

    def predict(self, shift, x):
        return self.value.copy()


def accuracy(predictions, labels):
    """``max(0, 1 - mean_i ||y_hat_i - y_i||^2)``."""
    predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if predictions.shape[0] == 0:
        raise DomainError("accuracy of an empty set")
    if predictions.shape != labels.shape:
        raise DomainError(f"shape mismatch {predictions.shape} vs {labels.shape}")
    mse = float(((predictions - labels) ** 2).sum(axis=1).mean())
    return max(0.0, 1.0 - mse)


# ---------------------------------------------------------------------------
# training


@dataclass
class Example:
    """One input graph signal with every label that applies to it."""

    shift: object
    x: np.ndarray
    labels: np.ndarray
    key: int = 0


@dataclass
class TrainState:
    epoch: int = 0
    history: list = field(default_factory=list)


def _check_finite(value, epoch):
    if not np.isfinite(value):
        raise TrainingError("non-finite loss", epoch)


def evaluate_mse(model, examples):
    """Mean over individual labels of ``||y_hat - y||^2``."""
    total, count = 0.0, 0
    for ex in examples:
        y_hat = model.predict(ex.shift, ex.x)
        total += float(((y_hat - ex.labels) ** 2).sum())
        count += ex.labels.shape[0]
    return total / max(count, 1)


class Trainer:
    """Epoch-wise Adam training; state (params, optimizer, epoch, history)
    round-trips through :meth:`checkpoint` so a resumed run continues exactly.

    With ``lr_final`` and ``anneal_epochs`` the step size follows a cosine
    from ``lr`` down to ``lr_final`` over that many epochs, then stays."""

    def __init__(self, model, seed, lr=1e-3, batch_size=8, latent_samples=1, lr_final=None, anneal_epochs=None):
        self.model = model
        self.seed = seed
        self.batch_size = batch_size
        self.latent_samples = latent_samples
        self.lr = lr
        self.lr_final = lr_final
        self.anneal_epochs = anneal_epochs
        self.opt = Adam(lr=lr)
        self.state = TrainState()

    def lr_at(self, epoch):
        if self.lr_final is None or not self.anneal_epochs:
            return self.lr
        t = min(epoch / self.anneal_epochs, 1.0)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (1.0 + np.cos(np.pi * t))

    def _step_regressor(self, batch):
        model = self.model
        model.zero_grad()
        n_labels = sum(ex.labels.shape[0] for ex in batch)
        total = 0.0
        for ex in batch:
            loss, _ = model.loss_and_grads(ex.shift, ex.x, ex.labels)
            total += loss
        grads = model.gradients()
        for g in grads.values():
            g /= n_labels
        return total, n_labels

    def _step_cvae(self, batch, rng):
        model = self.model
        model.zero_grad()
        pairs = [(ex, y) for ex in batch for y in ex.labels]
        total = 0.0
        for ex, y in pairs:
            eps = rng.standard_normal((self.latent_samples, model.latent_dim))
            loss, _, _, _ = model.neg_elbo(ex.shift, ex.x, y, eps)
            total += loss
        for g in model.gradients().values():
            g /= len(pairs)
        return total, len(pairs)

    def run_epoch(self, train, val=None):
        epoch = self.state.epoch
        self.opt.lr = self.lr_at(epoch)
        order = stream(self.seed, "shuffle", epoch).permutation(len(train))
        latent_rng = stream(self.seed, "latent", epoch)
        total, count = 0.0, 0
        is_cvae = isinstance(self.model, GnnCvae)
        for lo in range(0, len(order), self.batch_size):
            batch = [train[i] for i in order[lo : lo + self.batch_size]]
            if is_cvae:
                loss, n = self._step_cvae(batch, latent_rng)
            else:
                loss, n = self._step_regressor(batch)
            _check_finite(loss, epoch)
            total += loss
            count += n
            self.opt.step(self.model.parameters(), self.model.gradients())
        train_loss = total / max(count, 1)
        val_loss = evaluate_mse(self.model, val) if val else float("nan")
        self.state.history.append((epoch, train_loss, val_loss))
        self.state.epoch += 1
        return train_loss, val_loss

    def fit(self, train, epochs, val=None, callback=None):
        if not train:
            raise DomainError("empty training split")
        for _ in range(epochs):
            tl, vl = self.run_epoch(train, val)
            if callback is not None:
                callback(self.state.epoch - 1, tl, vl)
        return self.state.history

    def checkpoint(self):
        opt = self.opt.state_dict()
        return self.model.to_checkpoint(
            extra={
                "trainer": {
                    "seed": self.seed,
                    "epoch": self.state.epoch,
                    "batch_size": self.batch_size,
                    "latent_samples": self.latent_samples,
                    "lr": self.lr,
                    "lr_final": self.lr_final,
                    "anneal_epochs": self.anneal_epochs,
                    "history": [list(h) for h in self.state.history],
                    "optimizer": {
                        k: (checkpoint.encode_arrays(v) if k in ("m", "v") else v) for k, v in opt.items()
                    },
                }
            }
        )

    @classmethod
    def from_checkpoint(cls, text):
        model, doc = load_model(text)
        tr = doc["trainer"]
        out = cls(model, tr["seed"], lr=tr["lr"], batch_size=tr["batch_size"], latent_samples=tr["latent_samples"],
                  lr_final=tr["lr_final"], anneal_epochs=tr["anneal_epochs"])
        opt = dict(tr["optimizer"])
        opt["m"] = checkpoint.decode_arrays(opt["m"])
        opt["v"] = checkpoint.decode_arrays(opt["v"])
        out.opt.load_state_dict(opt)
        out.state = TrainState(int(tr["epoch"]), [tuple(h) for h in tr["history"]])
        return out


def train_regressor(model, train, epochs, seed, val=None, lr=1e-3, batch_size=8):
    """Minimise the mean squared label error; returns ``(model, history)``
    with one ``(epoch, train_loss, val_loss)`` row per epoch."""
    trainer = Trainer(model, seed, lr=lr, batch_size=batch_size)
    history = trainer.fit(train, epochs, val)
    return model, history


def train_cvae(model, train, epochs, seed, val=None, lr=1e-3, batch_size=8, latent_samples=1):
    trainer = Trainer(model, seed, lr=lr, batch_size=batch_size, latent_samples=latent_samples)
    history = trainer.fit(train, epochs, val)
    return model, history


def predict_critical(model, graph, features):
    return model.predict(graph.shift, features)


def elbo_loss(cvae, y, features, graph, n_latent_samples, rng):
    """Negative ELBO with freshly drawn latent noise."""
    if n_latent_samples < 1:
        raise DomainError("n_latent_samples must be >= 1")
    eps = rng.standard_normal((n_latent_samples, cvae.latent_dim))
    cvae.zero_grad()
    loss, kl, recon, _ = cvae.neg_elbo(graph.shift, features, y, eps)
    return loss, cvae.gradients()


def sample_critical_distribution(cvae, graph, features, n, seed):
    if n == 0:
        return np.empty((0, cvae.out_dim))
    return cvae.sample(graph.shift, features, n, stream(seed, "latent"))
