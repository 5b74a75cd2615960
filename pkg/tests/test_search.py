"""Aging evolution + BO manager loop: catalog, population, tournament, pools."""

import time

import numpy as np
import pytest
from scipy import stats

from nasuq.arch_space import dense_space, hamming, random_sample
from nasuq.errors import ConfigError
from nasuq.hpo import BayesianOptimizer, HyperConfig, HyperSpace
from nasuq.search import (
    FAILED,
    OK,
    Catalog,
    CatalogRecord,
    ExecutorPool,
    Job,
    Population,
    PoolShutdown,
    SearchConfig,
    SerialPool,
    SyntheticEvaluator,
    job_seed,
    run_search,
    select_parent,
)

SPACE = dense_space(2, 1)
HYPER = HyperSpace()


def rec(rid, nll, arch=(0,), status=OK):
    return CatalogRecord(id=rid, arch=arch, hyper=HyperConfig(1e-3, 64, "adam"), valid_nll=nll, status=status)


def full_population(nlls):
    pop = Population(len(nlls))
    for i, v in enumerate(nlls, start=1):
        pop.push(rec(i, v))
    return pop


class Recorder:
    """on_complete hook that snapshots population ids after every completion."""

    def __init__(self, size):
        self.size = size
        self.snapshots = {0: []}
        self.ok_ids = []

    def __call__(self, record, population):
        assert len(population) <= self.size
        if record.ok:
            self.ok_ids.append(record.id)
        ids = [m.id for m in population]
        # aging: the population is exactly the last <= P successes
        assert ids == self.ok_ids[-self.size :]
        self.snapshots[record.completion_index] = ids


def replay_check(catalog, recorder, size):
    by_id = {r.id: r for r in catalog}
    for r in catalog:
        members = recorder.snapshots[r.created_after]
        if len(members) < size:
            assert r.origin == "random" and r.parent_id is None
        else:
            assert r.origin == "mutation"
            assert r.parent_id in members
            assert hamming(r.arch, by_id[r.parent_id].arch) == 1


class TestConfig:
    @pytest.mark.parametrize("kw", [{"sample_size": 0}, {"sample_size": 40}, {"workers": 0}, {"executor": "mpi"}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SearchConfig(**kw)

    def test_defaults(self):
        cfg = SearchConfig()
        assert (cfg.population_size, cfg.sample_size) == (32, 8)


class TestPopulation:
    def test_fifo_eviction(self):
        pop = Population(3)
        evicted = [pop.push(rec(i, float(i))) for i in range(1, 6)]
        assert [m.id for m in pop] == [3, 4, 5]
        assert [e.id if e else None for e in evicted] == [None, None, None, 1, 2]
        assert pop.full and len(pop) == 3


class TestTournament:
    def test_full_sample_picks_global_best(self):
        pop = full_population([0.5, 0.1, 0.9, 0.3, 0.7])
        rng = np.random.default_rng(0)
        assert {select_parent(pop, 5, rng).id for _ in range(50)} == {2}

    def test_single_sample_is_uniform(self):
        pop = full_population(list(np.linspace(0, 1, 8)))
        rng = np.random.default_rng(1)
        counts = np.bincount([select_parent(pop, 1, rng).id - 1 for _ in range(8000)], minlength=8)
        assert stats.chisquare(counts).pvalue > 1e-4

    def test_ties_go_to_most_recent(self):
        pop = full_population([0.2, 0.1, 0.1, 0.5])
        assert select_parent(pop, 4, np.random.default_rng(0)).id == 3

    def test_not_full(self):
        pop = Population(4)
        pop.push(rec(1, 0.1))
        with pytest.raises(ConfigError):
            select_parent(pop, 1, np.random.default_rng(0))

    def test_selection_pressure_grows_with_sample_size(self):
        nlls = np.random.default_rng(2).normal(size=16)
        pop = full_population(list(nlls))
        rng = np.random.default_rng(3)
        means = [np.mean([select_parent(pop, s, rng).valid_nll for _ in range(10_000)]) for s in (1, 2, 4, 8, 16)]
        assert all(b < a for a, b in zip(means, means[1:]))
        assert means[-1] == pytest.approx(nlls.min())


class TestPools:
    @pytest.mark.parametrize("kind", ["serial", "thread", "process"])
    def test_delivery_contract(self, kind):
        ev = SyntheticEvaluator(sleep=0.01)
        pool = SerialPool(ev) if kind == "serial" else ExecutorPool(ev, 3, kind)
        assert pool.check() == []
        jobs = [Job(i, random_sample(SPACE, np.random.default_rng(i)), HyperConfig(1e-2, 64, "sgd"), i) for i in range(1, 6)]
        for j in jobs:
            assert pool.submit(j) == j.id
        got = []
        deadline = time.time() + 30
        while len(got) < 5 and time.time() < deadline:
            got += pool.check(timeout=0.05)
        assert sorted(c.job.id for c in got) == [1, 2, 3, 4, 5]
        for c in got:
            assert c.error is None
            assert c.result.valid_nll == ev(c.job).valid_nll
        assert pool.check() == [] and pool.in_flight == 0
        pool.shutdown()
        with pytest.raises(PoolShutdown):
            pool.submit(jobs[0])

    def test_idle_check_is_immediate(self):
        pool = ExecutorPool(SyntheticEvaluator(), 2, "thread")
        t = time.perf_counter()
        assert pool.check(timeout=5.0) == []
        assert time.perf_counter() - t < 0.5
        pool.shutdown()

    def test_crash_becomes_error(self):
        pool = SerialPool(SyntheticEvaluator(fail_every=2))
        pool.submit(Job(2, (0,) * SPACE.n_decisions, HyperConfig(1e-2, 64, "sgd"), 0))
        (c,) = pool.check()
        assert c.result is None and "synthetic failure" in c.error


class TestRunSearch:
    def test_five_serial_evaluations(self):
        cat = run_search(SPACE, HYPER, SyntheticEvaluator(), SearchConfig(workers=1, max_evals=5, population_size=4, sample_size=2))
        assert [r.id for r in cat] == [1, 2, 3, 4, 5]
        assert [r.completion_index for r in cat] == [1, 2, 3, 4, 5]
        assert all(r.seed == job_seed(0, r.id) for r in cat)

    @pytest.mark.parametrize("workers", [1, 3])
    def test_log_replay(self, workers):
        cfg = SearchConfig(population_size=6, sample_size=3, workers=workers, max_evals=60, seed=5)
        hook = Recorder(6)
        cat = run_search(SPACE, HYPER, SyntheticEvaluator(noise=0.1), cfg, on_complete=hook)
        assert len(cat) == 60 and len({r.id for r in cat}) == 60
        replay_check(cat, hook, 6)
        assert sum(r.origin == "mutation" for r in cat) > 30

    def test_failures_excluded(self):
        cfg = SearchConfig(population_size=4, sample_size=2, workers=2, max_evals=30, seed=1)
        opt = BayesianOptimizer(HYPER)
        hook = Recorder(4)
        cat = run_search(SPACE, HYPER, SyntheticEvaluator(fail_every=4), cfg, optimizer=opt, on_complete=hook)
        failed = [r for r in cat if r.status == FAILED]
        assert len(cat) == 30 and failed
        assert all(r.id % 4 == 0 for r in failed)
        assert all(np.isnan(r.valid_nll) and r.error for r in failed)
        assert len(opt.observed) == len(cat) - len(failed)
        assert opt.n_liars == 0
        failed_ids = {r.id for r in failed}
        assert not failed_ids & {i for snap in hook.snapshots.values() for i in snap}

    def test_diverged_status(self):
        class Diverging(SyntheticEvaluator):
            def __call__(self, job):
                out = super().__call__(job)
                out.diverged = job.id == 2
                return out

        cat = run_search(SPACE, HYPER, Diverging(), SearchConfig(workers=1, max_evals=4, population_size=2, sample_size=1))
        assert [r.status for r in cat] == ["ok", "diverged", "ok", "ok"]

    def test_wall_clock_stop(self):
        cfg = SearchConfig(workers=2, max_evals=0, max_seconds=0.5, population_size=4, sample_size=2)
        t = time.perf_counter()
        cat = run_search(SPACE, HYPER, SyntheticEvaluator(sleep=0.02), cfg)
        assert time.perf_counter() - t < 5.0
        assert len(cat) > 0

    def test_serial_rerun_byte_identical(self, tmp_path):
        cfg = SearchConfig(population_size=5, sample_size=2, workers=1, max_evals=25, seed=9)
        for name in ("a", "b"):
            run_search(SPACE, HYPER, SyntheticEvaluator(noise=0.5), cfg).write(tmp_path / f"{name}.jsonl", tmp_path / f"{name}.t.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_catalog_round_trip(self, tmp_path):
        cfg = SearchConfig(population_size=3, sample_size=2, workers=1, max_evals=8, seed=2)
        cat = run_search(SPACE, HYPER, SyntheticEvaluator(fail_every=5), cfg)
        cat.write(tmp_path / "c.jsonl", tmp_path / "t.jsonl")
        back = Catalog.read(tmp_path / "c.jsonl", tmp_path / "t.jsonl")
        for a, b in zip(cat, back):
            assert a.to_dict(timing=True).keys() == b.to_dict(timing=True).keys()
            assert (a.id, a.arch, a.hyper, a.status, a.elapsed) == (b.id, b.arch, b.hyper, b.status, b.elapsed)
        lines = (tmp_path / "c.jsonl").read_text().splitlines()
        assert len(lines) == 8 and "elapsed" not in lines[0]

    def test_throughput_scales_with_workers(self):
        def timed(w):
            cfg = SearchConfig(population_size=4, sample_size=2, workers=w, max_evals=16, executor="thread")
            t = time.perf_counter()
            run_search(SPACE, HYPER, SyntheticEvaluator(sleep=0.05), cfg)
            return time.perf_counter() - t

        assert timed(4) < 0.6 * timed(1)
