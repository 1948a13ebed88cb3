"""Central finite-difference check of analytic gradients."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradReport:
    name: str
    max_rel_error: float
    per_array: dict = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def passed(self):
        return bool(np.isfinite(self.max_rel_error) and self.max_rel_error <= self.tolerance)

    @property
    def worst(self):
        if not self.per_array:
            return None
        return max(self.per_array, key=self.per_array.get)


def rel_error(analytic, numeric, floor=1e-8):
    """Max absolute deviation scaled by the larger of the two gradients' max
    magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), floor)
    return float(np.abs(analytic - numeric).max() / scale)


def _numeric(f, arr, idx, step):
    old = arr[idx]
    arr[idx] = old + step
    fp = f()
    arr[idx] = old - step
    fm = f()
    arr[idx] = old
    return (fp - fm) / (2.0 * step)


def check_gradients(fragment, x, tolerance=1e-4, step=1e-5, max_entries=None, rng=None, name=None):
    """Compare a scalar fragment's analytic gradients with central differences.

    ``fragment`` provides ``parameters()`` (name -> array, perturbed in place)
    and ``loss_and_grads(x)`` returning ``(loss, {name: grad}, dx)``; ``dx``
    may be ``None`` when the input is not differentiable. With
    ``max_entries`` only that many randomly chosen entries per array are
    probed.
    """
    x = np.array(x, dtype=np.float64)
    _, grads, dx = fragment.loss_and_grads(x)
    grads = {k: np.array(v) for k, v in grads.items()}
    targets = dict(fragment.parameters())
    if dx is not None:
        targets["<input>"] = x
        grads["<input>"] = np.array(dx)
    rng = rng if rng is not None else np.random.default_rng(0)

    def loss():
        return fragment.loss_and_grads(x)[0]

    per = {}
    for key, arr in targets.items():
        flat_idx = np.arange(arr.size)
        if max_entries is not None and arr.size > max_entries:
            flat_idx = np.sort(rng.choice(arr.size, size=max_entries, replace=False))
        num = np.empty(flat_idx.shape[0])
        ana = np.empty(flat_idx.shape[0])
        for t, fi in enumerate(flat_idx):
            idx = np.unravel_index(fi, arr.shape)
            num[t] = _numeric(loss, arr, idx, step)
            ana[t] = grads[key][idx]
        per[key] = rel_error(ana, num)
    worst = max(per.values()) if per else 0.0
    return GradReport(name or type(fragment).__name__, worst, per, tolerance)
