"""Jointly trained binarization-approximator and template-inverter networks.

F maps feature vectors to soft templates, G maps templates back to feature
vectors.  Each is a fully connected net with sigmoid after every layer
(128 -> 256 -> 256 -> 128 at the default dimensions) and each trains by
plain SGD on its own total loss

    total = prediction + lambda * (cycle_feature + cycle_binary)

where F's prediction loss is binary cross-entropy against the true
template, G's is mean squared error against the true feature vector,
cycle_feature is MSE(G(F(v)), v) and cycle_binary is BCE(F(G(b)), b).
F's soft output feeds G directly, without hard thresholding.  Gradients
are hand-derived and verified against central finite differences
(gradient_check).

Feature vectors pass through a fixed affine change of representation at
the module boundary (feature_to_net / net_to_feature): unit-norm vectors
have coordinates of scale 1/sqrt(d), far below the sigmoid's useful range,
and training directly on them leaves both nets stuck on saturation
plateaus at the published learning rate.  The scaled representation
centers coordinates at 0.5 with spread FEATURE_SCALE, where sigmoid
outputs can represent both signs and gradients stay healthy.  invert()
undoes the transform before normalizing, so callers only ever see
unit-norm feature vectors.
"""

from __future__ import annotations

import base64
import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    """Joint-training hyperparameters.

    Losses are means over batch entries and coordinates, multiplied by one
    shared loss_scale (default sqrt of the coordinate count).  The scale is
    what reconciles the published 0.9 learning rate with both nets'
    dynamics: bare per-coordinate means leave gradients ~1/sqrt(D) too
    small to converge in any reasonable epoch budget, while per-coordinate
    sums make F's updates noise-dominated at batch size 50.  Applying one
    scale to all four terms preserves the prediction/cycle balance set by
    lambda_cyc.
    """

    lambda_cyc: float = 0.85
    learning_rate: float = 0.9
    batch_size: int = 50
    epochs: int = 200
    patience: int = 20
    bce_epsilon: float = 1e-7
    loss_scale: float | None = None  # None: sqrt(template length)

    def __post_init__(self):
        if self.lambda_cyc < 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("invalid training configuration")

    def resolved_scale(self, num_coords: int) -> float:
        return float(np.sqrt(num_coords)) if self.loss_scale is None else self.loss_scale


# Coordinate spread of the network-side feature representation (fraction of
# the sigmoid's (0, 1) range, per standard-deviation of a unit vector's
# coordinate).  0.2 keeps ~99% of coordinates inside (0, 1).
FEATURE_SCALE = 0.2


def feature_to_net(v: np.ndarray) -> np.ndarray:
    """Unit-norm feature vector(s) -> sigmoid-range network representation."""
    v = np.asarray(v, dtype=np.float64)
    return 0.5 + FEATURE_SCALE * np.sqrt(v.shape[-1]) * v


def net_to_feature(out: np.ndarray) -> np.ndarray:
    """Inverse of feature_to_net (no normalization)."""
    out = np.asarray(out, dtype=np.float64)
    return (out - 0.5) / (FEATURE_SCALE * np.sqrt(out.shape[-1]))


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Mlp:
    """Fully connected net, sigmoid after every layer, seeded Xavier init."""

    def __init__(self, sizes: tuple[int, ...], seed: int):
        if len(sizes) < 2:
            raise ValueError("need at least one layer")
        self.sizes = tuple(int(s) for s in sizes)
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping every activation for the backward pass."""
        acts = [np.asarray(x, dtype=np.float64)]
        for w, b in zip(self.weights, self.biases):
            acts.append(sigmoid(acts[-1] @ w + b))
        return acts[-1], acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(np.atleast_2d(x))
        return out if np.asarray(x).ndim == 2 else out[0]

    def backward(self, acts: list[np.ndarray], grad_out: np.ndarray,
                 top_grad_is_preact: bool = False):
        """Parameter gradients and the gradient w.r.t. the input batch.

        With top_grad_is_preact, grad_out is already the gradient w.r.t.
        the last layer's pre-activation (the fused sigmoid+BCE form, which
        never vanishes on saturated-but-wrong outputs); otherwise it is the
        gradient w.r.t. the sigmoid output.
        """
        grads_w = [None] * self.num_layers
        grads_b = [None] * self.num_layers
        g = grad_out
        for layer in range(self.num_layers - 1, -1, -1):
            a = acts[layer + 1]
            if layer != self.num_layers - 1 or not top_grad_is_preact:
                g = g * a * (1.0 - a)  # through the sigmoid
            grads_w[layer] = acts[layer].T @ g
            grads_b[layer] = g.sum(axis=0)
            g = g @ self.weights[layer].T
        return (grads_w, grads_b), g

    def step(self, grads, lr: float) -> None:
        grads_w, grads_b = grads
        for layer in range(self.num_layers):
            self.weights[layer] -= lr * grads_w[layer]
            self.biases[layer] -= lr * grads_b[layer]

    def get_params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.get_params()]

    def restore(self, snap: list[np.ndarray]) -> None:
        n = self.num_layers
        for i in range(n):
            self.weights[i][:] = snap[i]
            self.biases[i][:] = snap[n + i]

    def to_json_dict(self) -> dict:
        def blob(a: np.ndarray) -> str:
            return base64.b64encode(np.ascontiguousarray(a, dtype=np.float64).tobytes()).decode()

        return {
            "sizes": list(self.sizes),
            "seed": self.seed,
            "weights": [blob(w) for w in self.weights],
            "biases": [blob(b) for b in self.biases],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Mlp":
        net = cls(tuple(obj["sizes"]), seed=obj["seed"])

        def unblob(s: str, shape) -> np.ndarray:
            return np.frombuffer(base64.b64decode(s), dtype=np.float64).reshape(shape).copy()

        for i, (w, b) in enumerate(zip(obj["weights"], obj["biases"])):
            net.weights[i] = unblob(w, net.weights[i].shape)
            net.biases[i] = unblob(b, net.biases[i].shape)
        return net


def save_models(path, f_net: Mlp, g_net: Mlp) -> None:
    Path(path).write_text(json.dumps(
        {"F": f_net.to_json_dict(), "G": g_net.to_json_dict()}, sort_keys=True) + "\n")


def load_models(path) -> tuple[Mlp, Mlp]:
    obj = json.loads(Path(path).read_text())
    return Mlp.from_json_dict(obj["F"]), Mlp.from_json_dict(obj["G"])


# ---------------------------------------------------------------------------
# Losses (means over batch entries and coordinates) and their gradients
# ---------------------------------------------------------------------------

def bce(pred: np.ndarray, target: np.ndarray, eps: float) -> float:
    p = np.clip(pred, eps, 1.0 - eps)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))


def bce_preact_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of mean-reduced BCE w.r.t. the sigmoid pre-activation.

    The sigmoid derivative cancels the cross-entropy's 1/(p(1-p)) exactly,
    so this stays finite and informative even for saturated outputs.
    """
    return (pred - target) / pred.size


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return 2.0 * (pred - target) / pred.size


def loss_total(f_net: Mlp, g_net: Mlp, v: np.ndarray, b: np.ndarray,
               cfg: TrainConfig) -> dict:
    """All loss components on one batch of raw unit-norm feature vectors."""
    components, _, _ = combined_grads(f_net, g_net, feature_to_net(v), b, cfg)
    return components


def combined_grads(f_net: Mlp, g_net: Mlp, v: np.ndarray, b: np.ndarray,
                   cfg: TrainConfig):
    """Loss components and each net's gradient of its own total loss.

    v must already be in the network representation (feature_to_net).
    Four forward passes share their caches: F(v), G(F(v)), G(b), F(G(b)).
    The cycle terms contribute to both nets (through-the-other-net paths),
    each weighted by lambda.
    """
    if len(v) == 0:
        raise ValueError("empty batch")
    v = np.asarray(v, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    eps = cfg.bce_epsilon
    lam = cfg.lambda_cyc
    scale = cfg.resolved_scale(b.shape[-1])

    fv, cache_f1 = f_net.forward_cached(v)
    gfv, cache_g2 = g_net.forward_cached(fv)
    gb, cache_g1 = g_net.forward_cached(b)
    fgb, cache_f2 = f_net.forward_cached(gb)

    l_f = scale * bce(fv, b, eps)
    l_g = scale * mse(gb, v)
    l_cyc_ftr = scale * mse(gfv, v)
    l_cyc_bin = scale * bce(fgb, b, eps)
    components = {
        "l_f": l_f,
        "l_g": l_g,
        "l_cyc_ftr": l_cyc_ftr,
        "l_cyc_bin": l_cyc_bin,
        "f_total": l_f + lam * (l_cyc_ftr + l_cyc_bin),
        "g_total": l_g + lam * (l_cyc_ftr + l_cyc_bin),
    }

    # F's total: BCE(F(v), b) directly, cycle-feature through G back into
    # F(v), cycle-binary with G(b) as a constant input.  BCE gradients are
    # taken w.r.t. F's top pre-activation (fused sigmoid+BCE).
    gf_pred, _ = f_net.backward(cache_f1, scale * bce_preact_grad(fv, b),
                                top_grad_is_preact=True)
    gg_cycftr, d_fv = g_net.backward(cache_g2, scale * lam * mse_grad(gfv, v))
    gf_cycftr, _ = f_net.backward(cache_f1, d_fv)
    gf_cycbin, d_gb = f_net.backward(cache_f2, scale * lam * bce_preact_grad(fgb, b),
                                     top_grad_is_preact=True)
    # G's total: MSE(G(b), v) directly, cycle-feature with F(v) as a constant
    # input (gg_cycftr above), cycle-binary through F back into G(b).
    gg_pred, _ = g_net.backward(cache_g1, scale * mse_grad(gb, v))
    gg_cycbin, _ = g_net.backward(cache_g1, d_gb)

    grads_f = _sum_grads(gf_pred, gf_cycftr, gf_cycbin)
    grads_g = _sum_grads(gg_pred, gg_cycftr, gg_cycbin)
    return components, grads_f, grads_g


def _sum_grads(*grads):
    ws = [np.zeros_like(w) for w in grads[0][0]]
    bs = [np.zeros_like(b) for b in grads[0][1]]
    for gw, gb in grads:
        for i in range(len(ws)):
            ws[i] += gw[i]
            bs[i] += gb[i]
    return ws, bs


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train(f_net: Mlp, g_net: Mlp, v_train: np.ndarray, b_train: np.ndarray,
          cfg: TrainConfig, rng: np.random.Generator,
          v_val: np.ndarray | None = None, b_val: np.ndarray | None = None,
          log_every: int = 0) -> list[dict]:
    """Simultaneous SGD on both nets; returns the per-epoch loss history.

    When a validation split is given, training stops once validation L_G
    has not improved for cfg.patience epochs, and the best-epoch parameters
    are restored.  Non-finite losses abort with a diagnostic.  v_train and
    v_val are raw unit-norm feature vectors; the representation change is
    internal.
    """
    v_train = feature_to_net(v_train)
    b_train = np.asarray(b_train, dtype=np.float64)
    if v_val is not None:
        v_val = feature_to_net(v_val)
    n = v_train.shape[0]
    if b_train.shape[0] != n:
        raise ValueError("feature/template counts differ")
    history: list[dict] = []
    best_val = np.inf
    best_snap = None
    stale = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        sums = {"l_f": 0.0, "l_g": 0.0, "l_cyc_ftr": 0.0, "l_cyc_bin": 0.0,
                "f_total": 0.0, "g_total": 0.0}
        num_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            components, grads_f, grads_g = combined_grads(
                f_net, g_net, v_train[idx], b_train[idx], cfg)
            if not np.isfinite(components["f_total"]) or not np.isfinite(components["g_total"]):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}, batch {num_batches}: "
                    f"losses {components}"
                )
            f_net.step(grads_f, cfg.learning_rate)
            g_net.step(grads_g, cfg.learning_rate)
            for key in sums:
                sums[key] += components[key]
            num_batches += 1
        row = {"epoch": epoch, **{k: s / num_batches for k, s in sums.items()}}
        if v_val is not None:
            row["val_l_g"] = mse(g_net.forward_cached(b_val)[0], v_val)
            if row["val_l_g"] < best_val - 1e-12:
                best_val = row["val_l_g"]
                best_snap = (f_net.snapshot(), g_net.snapshot())
                stale = 0
            else:
                stale += 1
        history.append(row)
        if log_every and epoch % log_every == 0:
            print(f"epoch {epoch}: " + " ".join(f"{k}={val:.5f}" for k, val in row.items()
                                                if k != "epoch"))
        if v_val is not None and stale >= cfg.patience:
            break
    if best_snap is not None:
        f_net.restore(best_snap[0])
        g_net.restore(best_snap[1])
    return history


def invert(g_net: Mlp, template: np.ndarray) -> np.ndarray:
    """Approximate feature vector(s) for binary template(s), L2-normalized."""
    b = np.atleast_2d(np.asarray(template, dtype=np.float64))
    out, _ = g_net.forward_cached(b)
    vhat = net_to_feature(out)
    vhat = vhat / np.linalg.norm(vhat, axis=1, keepdims=True)
    return vhat if np.asarray(template).ndim == 2 else vhat[0]


def history_to_csv(path, history: list[dict]) -> None:
    if not history:
        return
    keys = list(history[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(history)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def finite_difference_grads(loss_fn, params: list[np.ndarray],
                            step: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of loss_fn w.r.t. every entry of params.

    params are perturbed in place and restored; loss_fn takes no arguments
    and must read the live parameter arrays.
    """
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn()
            flat[i] = orig - step
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        out.append(g)
    return out


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    """Max over parameter tensors of ||a - n|| / max(||a||, ||n||)."""
    worst = 0.0
    for a, nmr in zip(analytic, numeric):
        denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(nmr)), 1e-300)
        worst = max(worst, float(np.linalg.norm(a - nmr)) / denom)
    return worst


def gradient_check(f_net: Mlp, g_net: Mlp, v: np.ndarray, b: np.ndarray,
                   cfg: TrainConfig, step: float = 1e-5) -> float:
    """Verify both nets' total-loss gradients on a probe batch of raw
    feature vectors.

    Returns the max relative error between the analytic gradients and
    central finite differences; use small dimensions to keep it tractable.
    """
    v_net = feature_to_net(v)
    _, grads_f, grads_g = combined_grads(f_net, g_net, v_net, b, cfg)

    def f_loss():
        return combined_grads(f_net, g_net, v_net, b, cfg)[0]["f_total"]

    def g_loss():
        return combined_grads(f_net, g_net, v_net, b, cfg)[0]["g_total"]

    num_f = finite_difference_grads(f_loss, f_net.get_params(), step)
    num_g = finite_difference_grads(g_loss, g_net.get_params(), step)
    err_f = max_relative_error([*grads_f[0], *grads_f[1]], num_f)
    err_g = max_relative_error([*grads_g[0], *grads_g[1]], num_g)
    return max(err_f, err_g)
