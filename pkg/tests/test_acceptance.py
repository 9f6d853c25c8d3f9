"""Acceptance criteria 1-9, one test each, each printing a PASS/FAIL line."""
import json
import struct
import time

import numpy as np
import pytest
from scipy import stats

from _fd import a2c_fd_error, dqn_fd_error, ppo_fd_error
from _oracles import iqm_oracle, og_oracle, poi_oracle, profile_oracle, random_matrix
from plugrl import evaluation, hub
from plugrl.agents import A2C, DQN, PPO
from plugrl.approx import Orthogonal, forward, grad_check, init_mlp
from plugrl.cli import EXIT_OK, load_params, main
from plugrl.config import HUB_ENV_VAR
from plugrl.core import stream
from plugrl.deploy import (
    FORMAT_VERSION,
    DeployError,
    benchmark,
    decode_model,
    export_model,
    load_model,
)
from plugrl.dist import cat_sample
from plugrl.env import make
from plugrl.evaluation import ScoreMatrix, aggregate, performance_profile, prob_improvement
from plugrl.storage import PrioritizedReplayBuffer, gae
from plugrl.xplore import Re3Module, re3_compute
from test_approx import _random_arch
from test_deploy import _replay
from test_storage import _brute_gae, _check_tree, _per, _tr
from test_xplore import _knn_oracle


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    assert ok, detail


@pytest.fixture(autouse=True)
def no_env_store(monkeypatch):
    monkeypatch.delenv(HUB_ENV_VAR, raising=False)


# 1 ------------------------------------------------------------------------


def test_criterion_1_gradient_correctness(capsys):
    t0 = time.perf_counter()
    rng = stream(2024, "archs")
    worst_mlp = 0.0
    for i in range(100):
        sizes, acts = _random_arch(rng)
        p = init_mlp(sizes, acts, seed=i, scheme=Orthogonal(1.0))
        x = rng.standard_normal((3, sizes[0]))
        worst_mlp = max(worst_mlp, grad_check(p, x, "half_sq"))
    worst_loss = {
        "a2c": max(max(a2c_fd_error(s, True), a2c_fd_error(s, False)) for s in range(5)),
        "ppo": max(max(ppo_fd_error(s, True), ppo_fd_error(s, False)) for s in range(5)),
        "dqn": max(dqn_fd_error(s) for s in range(5)),
    }
    elapsed = time.perf_counter() - t0
    worst = max(worst_mlp, *worst_loss.values())
    ok = worst < 1e-4 and elapsed < 30
    verdict(capsys, 1, ok, f"max rel err mlp {worst_mlp:.2e}, losses "
            + ", ".join(f"{k} {v:.2e}" for k, v in worst_loss.items()) + f"; {elapsed:.1f} s")


# 2 ------------------------------------------------------------------------


def test_criterion_2_oracle_equivalence(capsys):
    rng = stream(1, "gae-oracle")
    gae_err = 0.0
    for _ in range(1000):
        T = int(rng.integers(1, 12))
        r, v = rng.standard_normal(T), rng.standard_normal(T)
        d = rng.random(T) < 0.2
        last = float(rng.standard_normal())
        gamma, lam = rng.random(), rng.random()
        adv, _ = gae(r[:, None], v[:, None], d[:, None], np.array([last]), gamma, lam)
        gae_err = max(gae_err, float(np.max(np.abs(adv[:, 0] - _brute_gae(r, v, d, last, gamma, lam)))))

    metric_mismatch = 0
    for seed in range(40):
        m = random_matrix(seed, ties=seed % 2 == 1)
        other = random_matrix(1000 + seed, c=m.shape[1], ties=seed % 2 == 1)
        sm, so = ScoreMatrix(m), ScoreMatrix(other)
        metric_mismatch += aggregate(sm, "iqm") != iqm_oracle(m)
        metric_mismatch += aggregate(sm, evaluation.OptimalityGap(1.0)) != og_oracle(m, 1.0)
        metric_mismatch += prob_improvement(sm, so) != poi_oracle(m, other)
        taus = np.linspace(-1, 2, 13)
        prof = performance_profile({"x": sm}, taus)["x"]
        metric_mismatch += sum(p != profile_oracle(m, t) for p, t in zip(prof, taus))

    buf = PrioritizedReplayBuffer(13, (2,), alpha=0.6)
    trng = stream(5, "tree")
    for k in range(10_000):
        if buf.size == 0 or trng.random() < 0.4:
            buf.push(_tr(k % 7))
        else:
            buf.update_priorities([int(trng.integers(buf.size))], [trng.exponential()])
    try:
        _check_tree(buf.tree)
        tree_ok = True
    except AssertionError:
        tree_ok = False

    m = Re3Module(5, seed=4, embed_dim=16, k=3)
    rrng = stream(4, "re3")
    re3_compute(m, rrng.random((32, 5)))
    archive = m.archive.copy()
    batch = rrng.random((8, 5))
    re3_err = float(np.max(np.abs(re3_compute(m, batch) - _knn_oracle(m.embed(batch).astype(np.float64), archive, 3))))

    ok = gae_err < 1e-10 and metric_mismatch == 0 and tree_ok and re3_err < 1e-6
    verdict(capsys, 2, ok, f"GAE max err {gae_err:.1e}; metric mismatches {metric_mismatch}; "
            f"sum tree exact {tree_ok}; RE3 max err {re3_err:.1e}")


# 3 ------------------------------------------------------------------------


def test_criterion_3_sampling_chi_square(capsys):
    pri = np.array([1.0, 2.0, 0.5, 4.0, 3.0, 1.5, 0.25, 6.0])
    buf = _per(pri)
    rng = stream(4, "per8")
    counts = np.zeros(8)
    for _ in range(125_000):
        _, _, idx = buf.sample(8, rng)
        counts += np.bincount(idx, minlength=8)
    p_per = stats.chisquare(counts, pri / pri.sum() * counts.sum()).pvalue

    probs = np.array([0.1, 0.2, 0.3, 0.4])
    acts = cat_sample(np.tile(np.log(probs), (1_000_000, 1)), stream(2, "cat"))
    p_cat = stats.chisquare(np.bincount(acts, minlength=4), probs * 1e6).pvalue

    ok = counts.sum() == 1e6 and p_per > 0.01 and p_cat > 0.01
    verdict(capsys, 3, ok, f"prioritized p={p_per:.3f}, categorical p={p_cat:.3f}, 1e6 draws each")


# 4 ------------------------------------------------------------------------

MILESTONES = {
    "ppo": (PPO, 200_000, 450.0),
    "a2c": (A2C, 300_000, 400.0),
    "dqn": (DQN, 150_000, 400.0),
}


@pytest.mark.slow
def test_criterion_4_training_milestones(capsys):
    lines, ok = [], True
    for name, (cls, budget, target) in MILESTONES.items():
        hits, slowest, best, final = 0, 0.0, [], []
        for seed in range(5):
            t0 = time.perf_counter()
            agent = cls(seed=seed).fit("pole-v0", budget)
            slowest = max(slowest, time.perf_counter() - t0)
            peak = max(v for _, v in agent.report_.curve)
            best.append(peak)
            final.append(agent.report_.curve[-1][1])
            hits += peak >= target
        ok &= hits >= 3 and slowest < 600
        lines.append(f"{name} {hits}/5 >= {target:g} (peak evals {', '.join(f'{b:.0f}' for b in best)}; "
                     f"final {', '.join(f'{f:.0f}' for f in final)}), "
                     f"slowest run {slowest:.0f} s")
    verdict(capsys, 4, ok, "; ".join(lines))


# 5 ------------------------------------------------------------------------

GRID_BUDGET = 60_000


def _first_success(seed, reward):
    agent = A2C(seed=seed, reward=reward, beta0=0.05, kappa=0.0, lr=2e-3)
    agent.fit("gridrooms-v0", GRID_BUDGET, env_config={"size": 21, "max_episode_steps": 150}, eval_every=0)
    return next((s for s, ret in agent.report_.episodes if ret > 0), None)


@pytest.mark.slow
def test_criterion_5_exploration_efficacy(capsys):
    re3 = [_first_success(s, "re3") for s in range(5)]
    ext = [_first_success(s, "none") for s in range(5)]
    n_re3 = sum(x is not None for x in re3)
    n_ext = sum(x is not None for x in ext)
    ok = n_re3 >= 4 and n_ext <= 1
    verdict(capsys, 5, ok, f"RE3 {n_re3}/5 (first goal steps {re3}), extrinsic {n_ext}/5, budget {GRID_BUDGET}")


# 6 ------------------------------------------------------------------------

PLUG_CONFIG = """
[agent]
algo = "a2c"
num_envs = 4

[encoder]
name = "mlp"
hidden = [{width}, {width}]

[xplore]
reward = "{reward}"

[env]
id = "pole-v0"

[train]
total_steps = 4096
eval_every = 2048
seed = 1
"""


def test_criterion_6_plug_and_play(tmp_path, capsys):
    results = []
    for reward, width in (("none", 64), ("rnd", 32), ("re3", 48)):
        cfg = tmp_path / f"{reward}.toml"
        cfg.write_text(PLUG_CONFIG.format(width=width, reward=reward))
        out = tmp_path / reward
        code = main(["train", "--config", str(cfg), "--out", str(out), "--quiet"])
        summary = json.loads((out / "report.json").read_text()) if code == EXIT_OK else {}
        params = load_params(out / "policy.npz") if code == EXIT_OK else None
        widths = [l.weight.shape[0] for l in params.layers[:-1]] if params else []
        finite = bool(summary) and all(np.isfinite(v) for _, v in summary["curve"])
        results.append((reward, code, widths == [width, width], finite, sorted(summary.get("final_losses", {}))))
    ok = all(code == EXIT_OK and w and f for _, code, w, f, _ in results)
    ok &= "intrinsic_loss" in results[1][4]
    verdict(capsys, 6, ok, "; ".join(f"{r}: exit {c}, width ok {w}, finite curve {f}" for r, c, w, f, _ in results))


# 7 ------------------------------------------------------------------------


def test_criterion_7_determinism(tmp_path, capsys):
    same = []
    for algo, steps in (("ppo", 20_000), ("dqn", 6_000)):
        files = []
        for k in range(2):
            out = tmp_path / f"{algo}{k}"
            code = main(["train", "--out", str(out), "--seed", "5", "--quiet", "--set", f'agent.algo="{algo}"',
                         "--set", f"train.total_steps={steps}", "--set", "train.eval_every=2000"])
            assert code == EXIT_OK
            files.append((out / "curve.csv").read_bytes())
        same.append((algo, files[0] == files[1], files[0].count(b"\n") - 1))
    ok = all(s for _, s, _ in same)
    verdict(capsys, 7, ok, "; ".join(f"{a}: identical {s} ({n} curve rows)" for a, s, n in same))


# 8 ------------------------------------------------------------------------


def test_criterion_8_deployment(tmp_path, capsys):
    env = make("pole-v0")
    agent = PPO(seed=0).fit("pole-v0", 50_000)
    policy = agent.policy()
    trained = tmp_path / "ppo.lte"
    export_model(policy.params, env.observation_space, env.action_space, trained)
    loaded = load_model(trained)
    obs = stream(0, "accept/obs").uniform(-1, 1, (1000, 4)).astype(np.float32) * np.float32([2.4, 3, 0.21, 3])
    ref64, _ = forward(policy.params.astype(np.float64), obs.astype(np.float64))
    ref32, _ = forward(policy.params, obs)
    dep = loaded.forward(obs)
    err = float(np.max(np.abs(dep - ref64)))
    err32 = float(np.max(np.abs(dep - ref32)))
    actions_equal = bool(np.array_equal(loaded.act_batch(obs), np.argmax(ref32, axis=1)))

    greedy = float(np.mean(agent.evaluate(10)))
    replay = float(np.mean(_replay(loaded, "pole-v0", 10)))

    blob = trained.read_bytes()
    flipped = bytearray(blob)
    flipped[len(blob) // 2] ^= 0x10
    corrupt = {
        "magic": b"NOTMODEL" + blob[8:],
        "version": blob[:8] + struct.pack("<H", FORMAT_VERSION + 7) + blob[10:],
        "checksum": bytes(flipped),
        "truncation": blob[:-33],
    }
    codes = {}
    for k, b in corrupt.items():
        try:
            decode_model(b)
            codes[k] = None
        except DeployError as exc:
            codes[k] = exc.code
    distinct = None not in codes.values() and len(set(codes.values())) == 4

    ref_path = tmp_path / "ref.lte"
    export_model(init_mlp([4, 64, 64, 2], ["tanh", "tanh", "identity"], 0), env.observation_space,
                 env.action_space, ref_path)
    rate = benchmark(load_model(ref_path), n=300_000)

    ok = err < 1e-6 and distinct and rate >= 1e5 and abs(replay - greedy) <= 0.01 * abs(greedy)
    verdict(capsys, 8, ok, f"max |deploy - forward| {err:.1e} (float32 training path {err32:.1e}, "
            f"same argmax {actions_equal}); codes {codes}; {rate:,.0f} inferences/s; "
            f"replay {replay:.1f} vs greedy {greedy:.1f}")


# 9 ------------------------------------------------------------------------


def test_criterion_9_hub_integrity(tmp_path, capsys):
    rng = stream(9, "accept/hub")
    envs = ["pole-v0", "gridrooms-v0"]
    recs = []
    for algo in ("ppo", "a2c"):
        for e in envs:
            for s in range(5):
                curve = [(step, float(np.round(rng.uniform(0, 500), 2))) for step in (1000, 2000, 3000)]
                recs.append(hub.RunRecord.create(algo, e, s, curve, created_at="2026-01-01T00:00:00Z"))
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    hub.ingest_runs(a, recs)
    dump_jsonl = tmp_path / "a.jsonl"
    assert main(["hub", "--store", str(a), "export", "--out", str(dump_jsonl)]) == EXIT_OK
    assert main(["hub", "--store", str(b), "ingest", str(dump_jsonl)]) == EXIT_OK
    lossless = (a / hub.RUNS_FILE).read_bytes() == (b / hub.RUNS_FILE).read_bytes()
    lossless &= hub.export_jsonl(b) == dump_jsonl.read_text()
    hub.import_text(c, hub.export_csv(a), "csv")
    csv_same = [(r.run_id, r.curve) for r in hub.all_records(c)] == [(r.run_id, r.curve) for r in recs]

    capsys.readouterr()
    argv = ["compare", "--store", str(b), "--algo", "ppo", "--algo", "a2c", "--reps", "1000", "--seed", "3"]
    for e in envs:
        argv += ["--env", e]
    assert main(argv) == EXIT_OK
    printed = capsys.readouterr().out
    ms = {algo: hub.to_score_matrix(a, algo, envs) for algo in ("ppo", "a2c")}
    direct = evaluation.report(ms, [evaluation.parse_metric(x) for x in ("mean", "median", "iqm", "optimality_gap")],
                               reps=1000, confidence=0.95, seed=3, pairwise=True)
    equal = printed == direct.metrics_csv() + direct.poi_csv()
    ok = lossless and csv_same and equal
    verdict(capsys, 9, ok, f"jsonl round trip byte-equal {lossless}; csv round trip {csv_same}; "
            f"compare equals library {equal}")
