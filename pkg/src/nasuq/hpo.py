"""Asynchronous Bayesian optimisation of training hyperparameters.

The surrogate is a Gaussian process with a squared-exponential kernel on an
encoded hyperparameter vector ``[log-lr, log-batch, one-hot optimizer]``.
Candidates are ranked by the upper confidence bound ``mu + kappa * sigma``
(objective maximised). Multiple points per ``ask`` are produced with the
constant-liar heuristic: each pick is registered as a pending observation
carrying an imputed value until its true result is told.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, DomainError
from .nn.optim import OPTIMIZERS

LIARS = ("mean", "min", "max")


@dataclass(frozen=True)
class HyperConfig:
    learning_rate: float
    batch_size: int
    optimizer: str

    def to_dict(self):
        return {"learning_rate": self.learning_rate, "batch_size": self.batch_size, "optimizer": self.optimizer}


@dataclass(frozen=True)
class HyperSpace:
    lr_min: float = 1e-4
    lr_max: float = 1e-1
    batch_min: int = 32
    batch_max: int = 256
    optimizers: tuple = OPTIMIZERS

    def __post_init__(self):
        object.__setattr__(self, "optimizers", tuple(self.optimizers))
        if not (0 < self.lr_min < self.lr_max):
            raise ConfigError("learning-rate range must satisfy 0 < lr_min < lr_max")
        if not (1 <= self.batch_min < self.batch_max):
            raise ConfigError("batch range must satisfy 1 <= batch_min < batch_max")
        if self.batch_max < 32:
            raise ConfigError("batch_max must be at least 32")
        if not self.optimizers or any(o not in OPTIMIZERS for o in self.optimizers):
            raise ConfigError(f"optimizers must be a nonempty subset of {OPTIMIZERS}")

    @property
    def dim(self):
        return 2 + len(self.optimizers)

    def to_dict(self):
        return {
            "lr_min": self.lr_min,
            "lr_max": self.lr_max,
            "batch_min": self.batch_min,
            "batch_max": self.batch_max,
            "optimizers": list(self.optimizers),
        }

    def contains(self, cfg):
        return (
            self.lr_min <= cfg.learning_rate <= self.lr_max
            and self.batch_min <= cfg.batch_size <= self.batch_max
            and cfg.optimizer in self.optimizers
        )

    def encode(self, cfg):
        """Map a configuration to ``[0, 1]^2`` x one-hot."""
        if not self.contains(cfg):
            raise DomainError(f"{cfg} lies outside the hyperparameter space")
        v = np.zeros(self.dim)
        v[0] = math.log(cfg.learning_rate / self.lr_min) / math.log(self.lr_max / self.lr_min)
        v[1] = math.log(cfg.batch_size / self.batch_min) / math.log(self.batch_max / self.batch_min)
        v[2 + self.optimizers.index(cfg.optimizer)] = 1.0
        return v

    def decode(self, v):
        u_lr = min(max(float(v[0]), 0.0), 1.0)
        u_b = min(max(float(v[1]), 0.0), 1.0)
        lr = self.lr_min * (self.lr_max / self.lr_min) ** u_lr
        batch = int(round(self.batch_min * (self.batch_max / self.batch_min) ** u_b))
        opt = self.optimizers[int(np.argmax(v[2:]))]
        return HyperConfig(lr, min(max(batch, self.batch_min), self.batch_max), opt)

    def sample(self, rng):
        """Log-uniform learning rate and batch size, uniform optimizer."""
        u_lr, u_b = rng.random(2)
        opt = self.optimizers[int(rng.integers(len(self.optimizers)))]
        v = np.zeros(self.dim)
        v[0], v[1] = u_lr, u_b
        v[2 + self.optimizers.index(opt)] = 1.0
        return self.decode(v)


def ucb(mu, sigma, kappa):
    """Upper confidence bound ``mu + kappa * sigma``."""
    if kappa < 0:
        raise DomainError(f"kappa must be nonnegative, got {kappa}")
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise DomainError("sigma must be nonnegative")
    return np.asarray(mu, dtype=np.float64) + kappa * sigma


class GaussianProcess:
    """Exact GP regression with a fixed squared-exponential kernel.

    Targets are standardised internally (prior mean = sample mean of the
    targets, prior scale = their standard deviation, or 1 when that is zero).
    """

    def __init__(self, length_scale=0.3, jitter=1e-6):
        self.length_scale = length_scale
        self.jitter = jitter
        self._x = None

    def kernel(self, a, b):
        d2 = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
        return np.exp(-0.5 * np.maximum(d2, 0.0) / self.length_scale**2)

    def fit(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        self._offset = float(y.mean())
        sd = float(y.std())
        self._scale = sd if sd > 0 else 1.0
        z = (y - self._offset) / self._scale
        k = self.kernel(x, x)
        jitter = self.jitter
        while True:
            try:
                self._chol = cho_factor(k + jitter * np.eye(len(x)), lower=True)
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
        self._x = x
        self._alpha = cho_solve(self._chol, z)
        return self

    def predict(self, xs):
        """Posterior mean and standard deviation in target units."""
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        if self._x is None:
            return np.zeros(len(xs)), np.ones(len(xs))
        ks = self.kernel(xs, self._x)
        mu = ks @ self._alpha
        v = cho_solve(self._chol, ks.T)
        var = np.maximum(1.0 - np.sum(ks * v.T, axis=1), 0.0)
        return self._offset + self._scale * mu, self._scale * np.sqrt(var)


class BayesianOptimizer:
    """Ask/tell optimiser with UCB acquisition and constant-liar batching.

    Only the hyperparameters are modelled; architecture decisions are
    marginalised out by simply not being part of the surrogate input.
    """

    def __init__(self, space=None, kappa=1.96, liar="mean", pool_size=512, length_scale=0.3, jitter=1e-6):
        if kappa < 0:
            raise ConfigError("kappa must be nonnegative")
        if liar not in LIARS:
            raise ConfigError(f"liar must be one of {LIARS}")
        if pool_size < 1:
            raise ConfigError("pool_size must be positive")
        self.space = space or HyperSpace()
        self.kappa = kappa
        self.liar = liar
        self.pool_size = pool_size
        self.gp = GaussianProcess(length_scale, jitter)
        self.observed = []  # (HyperConfig, score)
        self.pending = []  # HyperConfig awaiting results
        self._dirty = True

    @property
    def n_liars(self):
        return len(self.pending)

    def liar_value(self):
        scores = [s for _, s in self.observed]
        if not scores:
            return 0.0
        return float({"mean": np.mean, "min": np.min, "max": np.max}[self.liar](scores))

    def tell(self, cfg, score):
        score = float(score)
        if not math.isfinite(score):
            raise DomainError(f"non-finite score {score} cannot be told")
        self.space.encode(cfg)
        self.observed.append((cfg, score))
        if cfg in self.pending:
            self.pending.remove(cfg)
        self._dirty = True

    def forget(self, cfg):
        """Drop a pending point without an observation (e.g. a failed evaluation)."""
        if cfg in self.pending:
            self.pending.remove(cfg)
            self._dirty = True

    def _refit(self):
        if not self._dirty:
            return
        cfgs = [c for c, _ in self.observed] + self.pending
        y = [s for _, s in self.observed] + [self.liar_value()] * len(self.pending)
        self.gp.fit(np.array([self.space.encode(c) for c in cfgs]), np.array(y))
        self._dirty = False

    def sample_pool(self, rng):
        return [self.space.sample(rng) for _ in range(self.pool_size)]

    def predict(self, cfgs):
        self._refit()
        return self.gp.predict(np.array([self.space.encode(c) for c in cfgs]))

    def ask(self, q, rng):
        """Propose ``q`` pairwise-distinct configurations."""
        if q < 1:
            raise DomainError("q must be at least 1")
        picks = []
        for _ in range(q):
            taken = set(self.pending)
            if not self.observed:
                cfg = self.space.sample(rng)
                while cfg in taken:
                    cfg = self.space.sample(rng)
            else:
                pool = self.sample_pool(rng)
                mu, sd = self.predict(pool)
                score = ucb(mu, sd, self.kappa)
                cfg = None
                for j in np.argsort(-score, kind="stable"):
                    if pool[j] not in taken:
                        cfg = pool[j]
                        break
                while cfg is None or cfg in taken:
                    cfg = self.space.sample(rng)
            picks.append(cfg)
            self.pending.append(cfg)
            self._dirty = True
        return picks
