"""Manager/worker loop combining aging evolution with Bayesian optimisation.

The manager owns the population, the catalog and the optimiser. Workers only
run evaluations; they receive a :class:`Job` and hand back an
:class:`EvalResult`. Pools expose a nonblocking ``submit`` and a ``check``
that returns whatever has finished so far.
"""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, ThreadPoolExecutor, wait
from dataclasses import asdict, dataclass, field

import numpy as np

from .arch_space import mutate, random_sample
from .errors import ConfigError, NasuqError
from .hpo import BayesianOptimizer, HyperConfig, HyperSpace

logger = logging.getLogger(__name__)

OK, DIVERGED, FAILED = "ok", "diverged", "failed"


class PoolShutdown(NasuqError, RuntimeError):
    """Raised when submitting to or polling a closed worker pool."""


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 32
    sample_size: int = 8
    workers: int = 1
    max_evals: int = 100
    max_seconds: float | None = None
    seed: int = 0
    executor: str = "auto"  # auto | serial | thread | process

    def __post_init__(self):
        if not 1 <= self.sample_size <= self.population_size:
            raise ConfigError("need 1 <= sample_size <= population_size")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.max_evals < 1 and self.max_seconds is None:
            raise ConfigError("a stopping criterion (max_evals or max_seconds) is required")
        if self.executor not in ("auto", "serial", "thread", "process"):
            raise ConfigError(f"unknown executor {self.executor!r}")


@dataclass(frozen=True)
class Job:
    id: int
    arch: tuple
    hyper: HyperConfig
    seed: int
    origin: str = "random"  # random | mutation
    parent_id: int | None = None
    created_after: int = 0  # completions seen by the manager when the job was created


@dataclass
class EvalResult:
    valid_nll: float
    checkpoint: str | None = None
    diverged: bool = False
    epochs: int = 0


@dataclass
class CatalogRecord:
    id: int
    arch: tuple
    hyper: HyperConfig
    valid_nll: float
    status: str = OK
    checkpoint: str | None = None
    epochs: int = 0
    seed: int = 0
    origin: str = "random"
    parent_id: int | None = None
    created_after: int = 0
    completion_index: int = 0
    error: str | None = None
    elapsed: float = 0.0
    completed_at: float = 0.0

    @property
    def ok(self):
        return self.status == OK

    @property
    def score(self):
        """Objective handed to the optimiser (larger is better)."""
        return -self.valid_nll

    def to_dict(self, timing=False):
        d = asdict(self)
        d["arch"] = list(self.arch)
        d["hyper"] = self.hyper.to_dict()
        if not timing:
            del d["elapsed"], d["completed_at"]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["arch"] = tuple(d["arch"])
        d["hyper"] = HyperConfig(**d["hyper"])
        return cls(**d)


class Catalog:
    """Every completed evaluation, in completion order.

    Persisted as two line-delimited JSON files: the catalog proper (fully
    determined by seeds in serial mode) and a timing sidecar holding wall
    times and completion timestamps.
    """

    def __init__(self, records=()):
        self.records = list(records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, rec):
        self.records.append(rec)

    def successes(self):
        return [r for r in self.records if r.ok]

    def by_id(self, rid):
        for r in self.records:
            if r.id == rid:
                return r
        raise KeyError(rid)

    def write(self, path, timing_path=None):
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
        if timing_path is not None:
            with open(timing_path, "w") as fh:
                for r in self.records:
                    fh.write(json.dumps({"id": r.id, "elapsed": r.elapsed, "completed_at": r.completed_at}) + "\n")

    @classmethod
    def read(cls, path, timing_path=None):
        timing = {}
        if timing_path is not None:
            try:
                with open(timing_path) as fh:
                    for line in fh:
                        t = json.loads(line)
                        timing[t.pop("id")] = t
            except FileNotFoundError:
                pass
        records = []
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    d.update(timing.get(d["id"], {}))
                    records.append(CatalogRecord.from_dict(d))
        return cls(records)


class Population:
    """Bounded FIFO of the most recent successful records."""

    def __init__(self, size):
        self.size = size
        self._q = deque(maxlen=size)

    def __len__(self):
        return len(self._q)

    def __iter__(self):
        return iter(self._q)

    @property
    def full(self):
        return len(self._q) == self.size

    def push(self, rec):
        evicted = self._q[0] if self.full else None
        self._q.append(rec)
        return evicted

    def members(self):
        return list(self._q)


def select_parent(population, sample_size, rng):
    """Tournament selection: best (lowest NLL) of ``sample_size`` random members.

    Ties go to the most recently inserted member. Returns the record.
    """
    members = population.members()
    if len(members) != population.size:
        raise ConfigError("select_parent requires a full population")
    idx = rng.choice(len(members), size=sample_size, replace=False)
    best = min(idx, key=lambda i: (members[i].valid_nll, -i))
    return members[best]


# -- worker pools ------------------------------------------------------------

_WORKER_EVALUATOR = None


def _install_evaluator(evaluator):
    global _WORKER_EVALUATOR
    _WORKER_EVALUATOR = evaluator


def _run_installed(job):
    return _timed(_WORKER_EVALUATOR, job)


def _timed(evaluator, job):
    start = time.perf_counter()
    try:
        out = evaluator(job)
        err = None
    except Exception as exc:  # worker crash becomes a failed record
        out, err = None, f"{type(exc).__name__}: {exc}"
    return job, out, err, time.perf_counter() - start


@dataclass
class Completed:
    job: Job
    result: EvalResult | None
    error: str | None
    elapsed: float


class SerialPool:
    """Runs jobs in the caller's thread when polled; fully deterministic."""

    def __init__(self, evaluator):
        self.evaluator = evaluator
        self._queue = deque()
        self._closed = False

    def submit(self, job):
        if self._closed:
            raise PoolShutdown("pool is shut down")
        self._queue.append(job)
        return job.id

    def check(self, timeout=0.0):
        if self._closed:
            raise PoolShutdown("pool is shut down")
        out = []
        while self._queue:
            out.append(Completed(*_timed(self.evaluator, self._queue.popleft())))
        return out

    @property
    def in_flight(self):
        return len(self._queue)

    def shutdown(self):
        self._closed = True
        self._queue.clear()


class ExecutorPool:
    """Thread or process workers behind the same submit/check contract."""

    def __init__(self, evaluator, workers, kind="thread"):
        if kind == "process":
            self._ex = ProcessPoolExecutor(workers, initializer=_install_evaluator, initargs=(evaluator,))
            self._fn = _run_installed
        else:
            self._ex = ThreadPoolExecutor(workers)
            self._fn = lambda job: _timed(evaluator, job)
        self._futures = {}
        self._jobs = {}
        self._closed = False

    def submit(self, job):
        if self._closed:
            raise PoolShutdown("pool is shut down")
        self._jobs[job.id] = job
        self._futures[job.id] = self._ex.submit(self._fn, job)
        return job.id

    def check(self, timeout=0.0):
        """Return finished results (in ticket order); waits at most ``timeout``."""
        if self._closed:
            raise PoolShutdown("pool is shut down")
        if not self._futures:
            return []
        if timeout:
            wait(list(self._futures.values()), timeout=timeout, return_when=FIRST_COMPLETED)
        done = sorted(t for t, f in self._futures.items() if f.done())
        out = []
        for t in done:
            fut = self._futures.pop(t)
            job = self._jobs.pop(t)
            try:
                out.append(Completed(*fut.result()))
            except Exception as exc:  # e.g. a worker process died
                out.append(Completed(job, None, f"{type(exc).__name__}: {exc}", 0.0))
        return out

    @property
    def in_flight(self):
        return len(self._futures)

    def shutdown(self):
        self._closed = True
        self._ex.shutdown(wait=False, cancel_futures=True)


def make_pool(evaluator, cfg):
    kind = cfg.executor
    if kind == "auto":
        kind = "serial" if cfg.workers == 1 else "thread"
    if kind == "serial":
        return SerialPool(evaluator)
    return ExecutorPool(evaluator, cfg.workers, kind)


# -- the search loop ---------------------------------------------------------


def job_seed(seed, job_id):
    return int(np.random.SeedSequence([seed, job_id]).generate_state(1)[0])


def run_search(space, hyperspace, evaluator, cfg, optimizer=None, pool=None, on_complete=None):
    """Aging evolution over architectures + Bayesian optimisation over hyperparameters.

    Seeds ``cfg.workers`` random (architecture, hyperparameter) pairs, then
    repeatedly collects finished evaluations, records them, ages the
    population, tells the optimiser, and refills every freed worker with a
    child: a mutated tournament winner once the population is full, a random
    architecture before that. Stops after ``cfg.max_evals`` completions or
    ``cfg.max_seconds`` of wall time. Failed and diverged evaluations are kept
    in the catalog but never enter the population or the optimiser.
    """
    hyperspace = hyperspace or HyperSpace()
    optimizer = optimizer or BayesianOptimizer(hyperspace)
    pool = pool or make_pool(evaluator, cfg)
    arch_rng = np.random.default_rng([cfg.seed, 0])
    hyper_rng = np.random.default_rng([cfg.seed, 1])
    population = Population(cfg.population_size)
    catalog = Catalog()
    t0 = time.perf_counter()
    budget = cfg.max_evals if cfg.max_evals >= 1 else float("inf")
    submitted = 0
    completed = 0

    def submit(arch, hyper, origin="random", parent_id=None):
        nonlocal submitted
        submitted += 1
        job = Job(submitted, arch, hyper, job_seed(cfg.seed, submitted), origin, parent_id, completed)
        pool.submit(job)

    for _ in range(int(min(cfg.workers, budget))):
        submit(random_sample(space, arch_rng), hyperspace.sample(hyper_rng))

    try:
        while completed < budget:
            if cfg.max_seconds is not None and time.perf_counter() - t0 > cfg.max_seconds:
                logger.info("wall-clock budget exhausted after %d evaluations", completed)
                break
            finished = pool.check(timeout=0.05)
            if not finished:
                if pool.in_flight == 0:
                    break
                continue
            for c in finished:
                completed += 1
                rec = _to_record(c, completed, time.perf_counter() - t0)
                catalog.append(rec)
                if rec.ok:
                    population.push(rec)
                    optimizer.tell(rec.hyper, rec.score)
                else:
                    optimizer.forget(rec.hyper)
                if on_complete is not None:
                    on_complete(rec, population)
            n_new = int(min(len(finished), budget - submitted))
            if n_new <= 0:
                continue
            for hyper in optimizer.ask(n_new, hyper_rng):
                if population.full:
                    parent = select_parent(population, cfg.sample_size, arch_rng)
                    submit(mutate(parent.arch, space, arch_rng), hyper, "mutation", parent.id)
                else:
                    submit(random_sample(space, arch_rng), hyper)
    finally:
        pool.shutdown()
    return catalog


def _to_record(c, index, stamp):
    job = c.job
    base = dict(
        id=job.id,
        arch=job.arch,
        hyper=job.hyper,
        seed=job.seed,
        origin=job.origin,
        parent_id=job.parent_id,
        created_after=job.created_after,
        completion_index=index,
        elapsed=c.elapsed,
        completed_at=stamp,
    )
    if c.error is not None or c.result is None:
        return CatalogRecord(valid_nll=float("nan"), status=FAILED, error=c.error or "no result", **base)
    r = c.result
    status = OK if (np.isfinite(r.valid_nll) and not r.diverged) else DIVERGED
    return CatalogRecord(valid_nll=float(r.valid_nll), status=status, checkpoint=r.checkpoint, epochs=r.epochs, **base)


class SyntheticEvaluator:
    """Cheap stand-in for training: a deterministic score from the configuration.

    The NLL decreases with the sum of architecture indices and with
    proximity of log-lr to ``1e-2``; ``sleep`` adds artificial latency and
    ``fail_every`` makes every n-th job raise.
    """

    def __init__(self, sleep=0.0, fail_every=0, noise=0.0):
        self.sleep = sleep
        self.fail_every = fail_every
        self.noise = noise

    def __call__(self, job):
        if self.sleep:
            time.sleep(self.sleep)
        if self.fail_every and job.id % self.fail_every == 0:
            raise RuntimeError(f"synthetic failure for job {job.id}")
        nll = 10.0 - 0.1 * sum(job.arch) + (np.log10(job.hyper.learning_rate) + 2.0) ** 2
        if self.noise:
            nll += self.noise * np.random.default_rng(job.seed).standard_normal()
        return EvalResult(valid_nll=float(nll), epochs=1)
