"""First-order optimizers operating on flat weight vectors."""

import numpy as np

from ..errors import DomainError

OPTIMIZERS = ("sgd", "rmsprop", "adagrad", "adam")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
RMSPROP_RHO = 0.9
RMSPROP_EPS = 1e-8
ADAGRAD_EPS = 1e-8


def init_state(kind, n):
    if kind == "sgd":
        return {}
    if kind in ("rmsprop", "adagrad"):
        return {"acc": np.zeros(n)}
    if kind == "adam":
        return {"m": np.zeros(n), "v": np.zeros(n), "t": 0}
    raise DomainError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")


def optimizer_step(kind, w, g, lr, state=None):
    """Return ``(new_weights, new_state)``; inputs are left untouched."""
    if lr <= 0:
        raise DomainError(f"learning rate must be positive, got {lr}")
    if state is None:
        state = init_state(kind, w.size)
    if kind == "sgd":
        return w - lr * g, {}
    if kind == "rmsprop":
        acc = RMSPROP_RHO * state["acc"] + (1.0 - RMSPROP_RHO) * g * g
        return w - lr * g / (np.sqrt(acc) + RMSPROP_EPS), {"acc": acc}
    if kind == "adagrad":
        acc = state["acc"] + g * g
        return w - lr * g / (np.sqrt(acc) + ADAGRAD_EPS), {"acc": acc}
    if kind == "adam":
        t = state["t"] + 1
        m = ADAM_BETA1 * state["m"] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state["v"] + (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        return w - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS), {"m": m, "v": v, "t": t}
    raise DomainError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")
