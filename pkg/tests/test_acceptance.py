"""Acceptance suite: one test per criterion, each printing a pass line with
its runtime.  Run with `pytest tests/test_acceptance.py -v -s`.

The heavy criteria (6, 7, 9) dominate the runtime; the full module finishes
in roughly half an hour on a desktop-class CPU.
"""

import os
import time
from itertools import product

import numpy as np

from gridcrf import net as net_mod
from gridcrf import oracle, rng
from gridcrf.cli import main as cli_main
from gridcrf.data import Dataset, Sample, generate_synthetic, pooled_accuracy
from gridcrf.model import (GridCrfModel, GridGeometry, OffsetClass,
                           indicator_error, offsets_from_spec)
from gridcrf.sampler import (ChainState, SweepSchedule, estimate_marginals,
                             init_from_unary_marginals, max_marginal_decode)
from gridcrf.trainer import (TrainerConfig, TrainerState, UnaryNet,
                             init_chains, train, train_step)

from conftest import random_small_model
from test_net import generic_point, two_layer_spec
from test_sampler import exact_distribution_vector, sweep_transition_matrix


def _report(criterion, detail, elapsed, budget):
    status = "PASS" if elapsed < budget else "PASS (over budget)"
    print(f"criterion {criterion}: {status} - {detail} [{elapsed:.1f}s / {budget:.0f}s]")
    assert elapsed < budget, f"criterion {criterion} exceeded its runtime budget"


def test_criterion_1_oracle_gradient_vs_finite_differences():
    t0 = time.time()
    gen = np.random.default_rng(1001)
    eps = 1e-5
    worst = 0.0
    for _ in range(50):
        model, unaries = random_small_model(gen, height=int(gen.integers(1, 4)),
                                            width=int(gen.integers(1, 4)),
                                            num_labels=int(gen.integers(2, 4)))
        y = gen.integers(0, model.num_labels, model.num_sites)
        g = oracle.exact_gradient(model, unaries, y)

        def fd(set_, value):
            set_(value + eps)
            hi = oracle.exact_loglik(model, unaries, y)
            set_(value - eps)
            lo = oracle.exact_loglik(model, unaries, y)
            set_(value)
            return (hi - lo) / (2 * eps)

        for c in range(len(model.classes)):
            t = model.tables[c]
            for a, b in product(range(model.num_labels), repeat=2):
                est = fd(lambda v: t.__setitem__((a, b), v), t[a, b])
                err = abs(est - g.tables[c][a, b]) / max(1.0, abs(est),
                                                         abs(g.tables[c][a, b]))
                worst = max(worst, err)
        for n in range(model.num_sites):
            for l in range(model.num_labels):
                est = fd(lambda v: unaries.__setitem__((n, l), v),
                         unaries[n, l])
                err = abs(est - g.unary[n, l]) / max(1.0, abs(est),
                                                     abs(g.unary[n, l]))
                worst = max(worst, err)
        assert worst < 1e-5
    _report(1, f"50 instances, worst relative error {worst:.2e}",
            time.time() - t0, 10.0)


def test_criterion_2_gibbs_kernel_stationarity():
    t0 = time.time()
    gen = np.random.default_rng(1002)
    shapes = [(2, 2, 2), (1, 4, 2), (1, 2, 4), (1, 3, 2), (2, 1, 3)]
    worst = 0.0
    for h, w, L in shapes:
        for _ in range(2):
            model, unaries = random_small_model(gen, height=h, width=w,
                                                num_labels=L)
            assert L ** model.num_sites <= 16
            for schedule in (SweepSchedule.raster(),
                             SweepSchedule.chromatic(model)):
                T, states = sweep_transition_matrix(model, unaries, schedule)
                pi = exact_distribution_vector(model, unaries, states)
                gap = np.abs(pi @ T - pi).max()
                worst = max(worst, gap)
                assert gap < 1e-10
    _report(2, f"10 instances x 2 schedules, worst stationarity gap {worst:.1e}",
            time.time() - t0, 5.0)


def test_criterion_3_marginal_convergence():
    t0 = time.time()
    gen = np.random.default_rng(1003)
    worst = 0.0
    for k in range(10):
        model, unaries = random_small_model(gen, height=2, width=2,
                                            num_labels=2)
        exact = oracle.enumerate_model(model, unaries).marginals
        seed = 5000 + k
        chain = ChainState(init_from_unary_marginals(unaries, seed), seed, 0)
        est = estimate_marginals(chain, model, unaries, burn_in=500,
                                 samples=50000)
        emp = est.counts / est.samples_used
        tv = 0.5 * np.abs(emp - exact).sum(axis=1).max()
        worst = max(worst, tv)
        assert tv < 0.01
    _report(3, f"10 instances, worst per-site total variation {worst:.4f}",
            time.time() - t0, 60.0)


def test_criterion_4_estimator_unbiasedness():
    t0 = time.time()
    gen = np.random.default_rng(1004)
    worst = 0.0
    for h, w, L in [(3, 4, 2), (3, 3, 2), (2, 2, 3)]:
        model, unaries = random_small_model(gen, height=h, width=w, num_labels=L)
        assert L ** model.num_sites <= 2 ** 12
        y_data = gen.integers(0, L, model.num_sites)
        states = oracle._all_labelings(model)
        energies = oracle._all_energies(model, unaries, states)
        m = (-energies).max()
        weights = np.exp(-energies - m)
        probs = weights / weights.sum()
        mean_unary = np.zeros((model.num_sites, L))
        mean_tables = [np.zeros((L, L)) for _ in model.classes]
        for y_state, p in zip(states, probs):
            err = indicator_error(model, y_data, y_state.astype(np.int64))
            mean_unary += p * err.unary
            for c in range(len(model.classes)):
                mean_tables[c] += p * err.tables[c]
        exact = oracle.exact_gradient(model, unaries, y_data)
        gap = np.abs(mean_unary - exact.unary).max()
        for c in range(len(model.classes)):
            gap = max(gap, np.abs(mean_tables[c] - exact.tables[c]).max())
        worst = max(worst, gap)
        assert gap < 1e-10
    _report(4, f"3 instances, worst |mean error - exact gradient| {worst:.1e}",
            time.time() - t0, 30.0)


def test_criterion_5_network_gradient_check():
    t0 = time.time()
    spec = two_layer_spec()
    eps = 1e-4
    worst = 0.0
    for restart in range(20):
        params, x = generic_point(spec, seed=3000 + restart)
        up = np.random.default_rng(4000 + restart).normal(0, 1, (2, 6, 6))
        grads, _ = net_mod.backward(spec, params, x, up)

        def objective():
            return float((net_mod.forward(spec, params, x) * up).sum())

        for li, p in enumerate(params):
            for arr, garr in ((p.weight, grads[li].weight),
                              (p.bias, grads[li].bias)):
                flat, gflat = arr.ravel(), garr.ravel()
                for j in range(flat.size):
                    orig = flat[j]
                    flat[j] = orig + eps
                    hi = objective()
                    flat[j] = orig - eps
                    lo = objective()
                    flat[j] = orig
                    fd = (hi - lo) / (2 * eps)
                    err = abs(fd - gflat[j]) / max(1.0, abs(fd), abs(gflat[j]))
                    worst = max(worst, err)
                    assert err < 1e-4
    _report(5, f"20 restarts, worst relative error {worst:.2e}",
            time.time() - t0, 30.0)


def test_criterion_6_learning_recovers_known_model():
    t0 = time.time()
    gen = np.random.default_rng(5)
    geometry = GridGeometry(3, 3)
    classes = [OffsetClass(1, 0)]
    true_table = gen.normal(0, 1.0, (2, 2))
    unaries = gen.normal(0, 0.5, (9, 2))
    star = GridCrfModel(2, geometry, classes, tables=[true_table.copy()])
    data = oracle.exact_sample(star, unaries, 500, seed=42)
    dataset = Dataset(samples=[Sample(image=np.zeros((1, 3, 3)), labels=y)
                               for y in data], num_labels=2)
    model = GridCrfModel(2, geometry, classes, fixed_unaries=unaries)
    config = TrainerConfig(variant="pcd", base_rate=0.05, decay=2000.0,
                           max_iterations=20000, freeze_unaries=True, seed=9)
    train(dataset, model, None, config)
    ll_star = sum(oracle.exact_loglik(star, unaries, y) for y in data)
    ll_fit = sum(oracle.exact_loglik(model, unaries, y) for y in data)
    rel_gap = abs(ll_fit - ll_star) / abs(ll_star)
    assert rel_gap <= 0.02
    _report(6, f"log-likelihood gap {100 * rel_gap:.2f}% of |reference|",
            time.time() - t0, 300.0)


def _desk_pipeline(seed):
    """Pretrain, then evaluate unary-only / separate / joint PCD models."""
    H, W, L = 48, 32, 6
    train_set = generate_synthetic(200, H, W, L, rng.derive_seed(seed, 10))
    test_set = generate_synthetic(50, H, W, L, rng.derive_seed(seed, 11))
    spec = net_mod.make_spec("desk", L)
    params = net_mod.init_params(spec, rng.derive_seed(seed, 12))
    buffers = net_mod.zero_like_params(params)
    picker = rng.stream(rng.derive_seed(seed, 13), rng.TAG_SAMPLE_INDEX)
    for _ in range(1200):
        s = train_set.samples[int(picker.integers(len(train_set.samples)))]
        net_mod.pretrain_step(spec, params, s.image, s.labels, 0.002, 0.99,
                              buffers)
    classes = offsets_from_spec("desk")
    geometry = GridGeometry(H, W)

    def evaluate(model, net_params, tag):
        schedule = SweepSchedule.chromatic(model)
        pairs = []
        for i, s in enumerate(test_set.samples):
            logits = net_mod.forward(spec, net_params, s.image)
            unaries = net_mod.unaries_from_logits(logits)
            cs = rng.derive_seed(seed, 14, tag, i)
            chain = ChainState(init_from_unary_marginals(unaries, cs), cs, 0)
            est = estimate_marginals(chain, model, unaries, burn_in=30,
                                     samples=200, schedule=schedule)
            pairs.append((max_marginal_decode(est), s.labels))
        return pooled_accuracy(pairs)

    scores = {}
    scores["cnn"] = evaluate(GridCrfModel(L, geometry, classes), params, 0)

    model_s = GridCrfModel(L, geometry, classes)
    config = TrainerConfig(variant="pcd", base_rate=0.003, decay=10000.0,
                           max_iterations=12000, freeze_unaries=True,
                           seed=rng.derive_seed(seed, 30))
    train(train_set, model_s, UnaryNet(spec, net_mod.copy_params(params)),
          config)
    scores["separate"] = evaluate(model_s, params, 1)

    model_j = GridCrfModel(L, geometry, classes)
    net_j = UnaryNet(spec, net_mod.copy_params(params))
    config = TrainerConfig(variant="pcd", base_rate=0.003, decay=10000.0,
                           momentum_coeff=0.9, max_iterations=12000,
                           freeze_unaries=False, seed=rng.derive_seed(seed, 31))
    train(train_set, model_j, net_j, config)
    scores["joint"] = evaluate(model_j, net_j.params, 2)
    return scores


def test_criterion_7_accuracy_ordering_at_desk_scale():
    t0 = time.time()
    per_seed = [_desk_pipeline(seed) for seed in (0, 1, 2)]
    mean = {k: float(np.mean([s[k] for s in per_seed]))
            for k in ("cnn", "separate", "joint")}
    detail = (f"cnn {100 * mean['cnn']:.2f} < separate "
              f"{100 * mean['separate']:.2f} < joint {100 * mean['joint']:.2f}")
    assert mean["cnn"] < mean["separate"] < mean["joint"], detail
    assert mean["joint"] >= mean["cnn"] + 0.02, detail
    _report(7, detail, time.time() - t0, 1800.0)


def test_criterion_8_pcd_memory_is_one_labeling_per_sample():
    t0 = time.time()
    gen = np.random.default_rng(1008)
    model = GridCrfModel(2, GridGeometry(2, 3),
                         [OffsetClass(1, 0), OffsetClass(0, 1)])
    model.fixed_unaries = gen.normal(0, 1, (6, 2))
    count = 7
    dataset = Dataset(samples=[Sample(image=np.zeros((1, 2, 3)),
                                      labels=gen.integers(0, 2, 6))
                               for _ in range(count)], num_labels=2)
    config = TrainerConfig(variant="pcd", max_iterations=5, seed=3,
                           freeze_unaries=True)
    state = TrainerState(
        table_velocity=[np.zeros_like(t) for t in model.tables],
        net_velocity=[],
        index_rng=rng.stream(config.seed, rng.TAG_SAMPLE_INDEX))
    state.chains = init_chains(dataset, config)
    schedule = SweepSchedule.chromatic(model)
    for i in range(1, 6):
        train_step(i, dataset, model, None, config, state, schedule)
    assert len(state.chains) == count
    label_entries = 0
    for chain in state.chains:
        arrays = [v for v in vars(chain).values() if isinstance(v, np.ndarray)]
        assert len(arrays) == 1, "a chain stores exactly its labeling"
        assert arrays[0].shape == (model.num_sites,)
        label_entries += arrays[0].size
    assert label_entries == count * model.num_sites
    _report(8, f"{count} chains hold exactly {label_entries} label entries",
            time.time() - t0, 1.0)


def test_criterion_9_training_is_bit_deterministic(tmp_path):
    t0 = time.time()
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(
        "height = 32\nwidth = 24\nlabel_count = 4\n"
        "train_count = 40\ntest_count = 4\n"
        "offsets = 1,0;0,1;1,1;3,0;0,3\n"
        "pretrain_iterations = 150\niterations = 1500\nseed = 11\n")
    data = str(tmp_path / "data")
    out0 = str(tmp_path / "out0")
    assert cli_main(["gen", "--config", str(cfg_path), "--out", data]) == 0
    assert cli_main(["pretrain", "--config", str(cfg_path), "--data", data,
                     "--out", out0]) == 0
    init = os.path.join(out0, "pretrained.ccrf")
    blobs = []
    for run in ("r1", "r2"):
        out = str(tmp_path / run)
        assert cli_main(["train", "--config", str(cfg_path), "--data", data,
                         "--init", init, "--variant", "pcd", "--joint",
                         "--out", out]) == 0
        with open(os.path.join(out, "model.ccrf"), "rb") as f:
            blobs.append(f.read())
    assert blobs[0] == blobs[1]
    _report(9, f"two runs, identical {len(blobs[0])}-byte checkpoints",
            time.time() - t0, 600.0)
