"""Acceptance criteria 1-11.

Each test prints one ``criterion N: PASS|FAIL`` line with the measured values
before asserting. The end-to-end runs (6, 7) share cached pre-trainings and
fine-tunings through module-level fixtures.
"""
import re
import time

import numpy as np
import pytest

from lumamba.bimamba import _scan_py, selective_scan
from lumamba.cli import main
from lumamba.costmodel import default_specs, loglog_slope, scaling_sweep, sweep_values
from lumamba.encoder import ChannelUnifier, Decoder, EncoderConfig, PatchEmbed, PositionalMLP
from lumamba.model import LuMamba, ModelConfig
from lumamba.numcore import grad_check, ops
from lumamba.rng import stream
from lumamba.sigproc import SynthConfig, synth_dataset, template
from lumamba.ssl import epps_pulley, jepa_pred_loss, objective, sigreg
from lumamba.trainer import (TrainConfig, evaluate, finetune, from_bytes, load, prepare, pretrain,
                             save, subject_split, to_bytes)
from lumamba.trainer.loops import model_from_checkpoint

from conftest import record
from test_ssl import ep_quadrature

SEEDS = (0, 1, 2)
TEST_SUBJECTS = [f"s{i:03d}" for i in range(106, 110)]
PRETRAIN_LR = 1e-4
FINETUNE_EPOCHS = 12

TOY = ModelConfig(patch_len=32, embed_dim=8, n_queries=2, conv_channels=(2, 3), conv_kernel=3,
                  spectral_dim=4, pos_dim=4, pos_hidden=5, d_state=4, head_width=8, n_blocks=2)


# ---- 1

def test_c01_scan_oracle_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = stream(seed, "acceptance-scan")
        s, d, n = (int(v) for v in rng.integers(1, [129, 33, 33]))
        args = [rng.normal(size=(1, s, d)), rng.uniform(0.001, 0.2, size=(1, s, d)),
                -rng.uniform(0.5, n, size=(d, n)), rng.normal(size=(1, s, n)),
                rng.normal(size=(1, s, n)), rng.normal(size=d)]
        args = [a.astype(np.float32) for a in args]
        y = selective_scan(*args, method="associative").data
        worst = max(worst, float(np.abs(y - _scan_py.naive(*args)).max()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-5 and dt < 10
    record(1, ok, f"max |assoc - naive| = {worst:.2e} over 100 configs, {dt:.1f} s")
    assert ok


# ---- 2

def test_c02_gradient_integrity():
    t0 = time.perf_counter()
    coords = template(16).coords[:2]
    w = np.random.default_rng(21).normal(size=(2, 2, 256))
    labels = np.array([0, 1])
    pre = LuMamba(TOY, seed=1)
    errs = {}
    for part in ("recon", "jepa_pred", "sigreg"):
        def f(part=part):
            return getattr(objective(pre, w, coords, "mixed", lam=0.5, n_slices=6, seed=2), part)
        errs[part] = grad_check(f, pre.parameters(), step=1e-3, max_coords=64, seed=3)
    clf = pre.for_finetuning(2, seed=4)
    errs["head_xent"] = grad_check(lambda: ops.cross_entropy(clf.classify(w, coords), labels),
                                   clf.parameters(), step=1e-3, max_coords=64, seed=5)
    dt = time.perf_counter() - t0
    ok = max(errs.values()) <= 1e-3 and dt < 120
    record(2, ok, " ".join(f"{k}={v:.1e}" for k, v in errs.items()) + f", {dt:.1f} s")
    assert ok


# ---- 3

def test_c03_topology_invariance():
    cfg = EncoderConfig()
    rng = stream(0, "acceptance-topology")
    pos = PositionalMLP(rng, cfg.pos_hidden, cfg.pos_dim)
    embed, unify, dec = PatchEmbed(rng, cfg, pos), ChannelUnifier(rng, cfg), Decoder(rng, cfg, pos)
    data = np.random.default_rng(31)
    inv = equi = 0.0
    shapes = set()
    for c in (16, 20, 26):
        m = template(c)
        patches = data.normal(size=(4, c, cfg.patch_len)).astype(np.float32)
        perm = data.permutation(c)
        lat = unify(embed(patches, m.coords))
        shapes.add(lat.shape)
        inv = max(inv, float(np.abs(unify(embed(patches[:, perm], m.coords[perm])).data
                                    - lat.data).max()))
        out = dec(lat, m.coords).data
        equi = max(equi, float(np.abs(dec(lat, m.coords[perm]).data - out[:, perm]).max()))
    ok = inv <= 1e-5 and equi <= 1e-5 and len(shapes) == 1
    record(3, ok, f"unify invariance {inv:.1e}, decode equivariance {equi:.1e}, "
                  f"latent shapes {sorted(shapes)}")
    assert ok


# ---- 4

def test_c04_jepa_contract():
    g = np.random.default_rng(41).normal(size=(2, 4, 6)).astype(np.float32)
    mu = (g[0] + g[1]) * np.float32(0.5)
    locs = np.stack([mu] * 4)
    zero = jepa_pred_loss(locs, g).item()
    locs[2, 1, 0] += 1e-3
    off = jepa_pred_loss(locs, g).item()
    hand = jepa_pred_loss(np.array([[[3.0, 4.0]]]), np.array([[[0.0, 0.0]]])).item()
    ok = zero == 0.0 and off > 0 and hand == 25.0
    record(4, ok, f"at mean {zero}, perturbed {off:.2e}, [3,4] vs 0 -> {hand}")
    assert ok


# ---- 5

def test_c05_sigreg_calibration():
    worst = 0.0
    for seed, draw in enumerate(("normal", "exponential", "uniform")):
        z = getattr(np.random.default_rng(seed), draw)(size=64)
        z = (z - z.mean()) / (z.std() + 1e-8)
        q = ep_quadrature(z)
        worst = max(worst, abs(float(epps_pulley(z)) - q) / q)
    const = sigreg(np.zeros((1024, 8), np.float32), n_slices=16).item()
    gauss = [sigreg(np.random.default_rng(s).normal(size=(1024, 8)).astype(np.float32),
                    n_slices=16, seed=s).item() for s in range(50)]
    ratio = max(gauss) / const
    ok = worst <= 1e-4 and ratio < 0.1
    record(5, ok, f"closed form vs quadrature rel {worst:.1e}; "
                  f"worst gaussian/constant over 50 seeds {ratio:.4f}")
    assert ok


# ---- 6, 7

@pytest.fixture(scope="module")
def pretrain_data():
    # 8 subjects x 2 classes x 120 s = 32 minutes of 20-channel recordings
    return prepare(synth_dataset(SynthConfig(montages=(20,), subjects=8, seconds=120.0), 1234))


@pytest.fixture(scope="module")
def pretrained(pretrain_data):
    cache = {}

    def get(regime, seed):
        if (regime, seed) not in cache:
            cfg = TrainConfig(regime=regime, epochs=1, batch_size=8, lr=PRETRAIN_LR, lam=0.5,
                              n_slices=60, seed=seed)
            cache[regime, seed] = pretrain(cfg, pretrain_data).checkpoint
        return cache[regime, seed]
    return get


@pytest.fixture(scope="module")
def scores(pretrained):
    splits, cache = {}, {}

    def get(regime, seed, c):
        if c not in splits:
            data = prepare(synth_dataset(SynthConfig(montages=(c,), subjects=10, seconds=30.0,
                                                     subject_offset=100), 4321))
            splits[c] = subject_split(data, TEST_SUBJECTS)
        if (regime, seed, c) not in cache:
            train, test = splits[c]
            cfg = TrainConfig(regime="finetune", epochs=FINETUNE_EPOCHS, batch_size=8, lr=1e-3,
                              seed=seed)
            rep = evaluate(finetune(cfg, pretrained(regime, seed), train).model, test)
            cache[regime, seed, c] = rep
        return cache[regime, seed, c]
    return get


@pytest.mark.slow
def test_c06_end_to_end(scores):
    t0 = time.perf_counter()
    reps = [scores("mixed", s, 20) for s in SEEDS]
    bacc = np.mean([r.balanced_accuracy for r in reps])
    auc = np.mean([r.auroc for r in reps])
    ok = bacc >= 0.95 and auc >= 0.98
    per = ", ".join(f"{r.balanced_accuracy:.3f}/{r.auroc:.3f}" for r in reps)
    record(6, ok, f"20ch mixed: bacc {bacc:.3f}, auroc {auc:.3f} (per seed {per}), "
                  f"{(time.perf_counter() - t0) / 60:.1f} min")
    assert ok


@pytest.mark.slow
def test_c07_cross_montage(scores):
    bacc = {(reg, c): [scores(reg, s, c).balanced_accuracy for s in SEEDS]
            for reg, c in (("mixed", 16), ("mixed", 26), ("recon", 16))}
    wins = sum(m >= r for m, r in zip(bacc["mixed", 16], bacc["recon", 16]))
    m16, m26 = np.mean(bacc["mixed", 16]), np.mean(bacc["mixed", 26])
    ok = m16 >= 0.90 and m26 >= 0.90 and wins >= 2
    fmt = lambda v: "/".join(f"{x:.3f}" for x in v)
    record(7, ok, f"mixed 16ch {m16:.3f} ({fmt(bacc['mixed', 16])}), 26ch {m26:.3f} "
                  f"({fmt(bacc['mixed', 26])}); recon 16ch {fmt(bacc['recon', 16])}; "
                  f"mixed >= recon in {wins}/3 seeds")
    assert ok


# ---- 8

def test_c08_regime_reduction():
    model = LuMamba(TOY)
    w = np.random.default_rng(81).normal(size=(4, 2, 256)).astype(np.float32)
    coords = template(16).coords[:2]
    a = objective(model, w, coords, "mixed", lam=0.0, n_slices=8, seed=3).total.data
    b = objective(model, w, coords, "recon", seed=3).total.data
    ok = a.tobytes() == b.tobytes()
    record(8, ok, f"lambda=0 mixed {a!r} vs recon {b!r}")
    assert ok


# ---- 9

def test_c09_scaling_laws():
    t0 = time.perf_counter()
    ssm, _, flat = default_specs()
    sw = scaling_sweep([ssm, flat], sweep_values(64, 65536))
    s1 = loglog_slope(*sw.series(ssm.name))
    s2 = loglog_slope(*sw.series(flat.name))
    ratio = (sw.series(flat.name)[1] / sw.series(ssm.name)[1]).max()
    dt = time.perf_counter() - t0
    ok = abs(s1 - 1) <= 0.1 and abs(s2 - 2) <= 0.1 and ratio > 100 and dt < 5
    record(9, ok, f"slopes ssm {s1:.3f}, flattened {s2:.3f}; max ratio {ratio:.0f}x, {dt:.2f} s")
    assert ok


# ---- 10

def _run(argv):
    return main([str(a) for a in argv])


def _tree(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_c10_reproducibility(tmp_path, capsys, monkeypatch):
    tiny = ["--embed-dim", "8", "--queries", "2", "--d-state", "4", "--batch-size", "4",
            "--log-every", "0"]
    outputs = {}
    for run in ("a", "b"):
        # relative paths: checkpoints echo their configuration, data path included
        d = tmp_path / run
        d.mkdir()
        monkeypatch.chdir(d)
        assert _run(["synth", "--montage", "20", "--subjects", "3", "--seconds", "12", "--seed", "3",
                     "--out", "raw"]) == 0
        assert _run(["preprocess", "--data", "raw", "--out", "pre"]) == 0
        assert _run(["pretrain", "--data", "pre", "--max-steps", "2", "--slices", "8",
                     "--out", "p.lumc"] + tiny) == 0
        ft = ["--data", "pre", "--init", "p.lumc", "--max-steps", "2",
              "--test-subjects", "s002"] + tiny
        assert _run(["finetune"] + ft + ["--out", "f.lumc"]) == 0
        assert _run(["eval"] + ft + ["--out", "m.csv"]) == 0
        assert _run(["flops", "--sweep", "64:4096", "--out", "c.csv"]) == 0
        outputs[run] = {"synth": _tree(d / "raw"), "preprocess": _tree(d / "pre"),
                        "pretrain": (d / "p.lumc").read_bytes(),
                        "finetune": (d / "f.lumc").read_bytes(),
                        "eval": (d / "m.csv").read_bytes(),
                        "flops": (d / "c.csv").read_bytes() + (d / "c_oom.csv").read_bytes()}
    capsys.readouterr()
    same = {verb: outputs["a"][verb] == outputs["b"][verb] for verb in outputs["a"]}

    ck = load(tmp_path / "a" / "f.lumc")
    save(ck, tmp_path / "again.lumc")
    again = from_bytes(to_bytes(load(tmp_path / "again.lumc")))
    model = model_from_checkpoint(again)
    roundtrip = ((tmp_path / "again.lumc").read_bytes() == outputs["a"]["finetune"]
                 and all(model.state_dict()[k].tobytes() == v.tobytes()
                         for k, v in ck.tensors.items()))
    ok = all(same.values()) and roundtrip
    record(10, ok, "byte-identical: " + " ".join(f"{v}={'yes' if s else 'NO'}"
                                                   for v, s in same.items())
           + f"; checkpoint round trip {'exact' if roundtrip else 'DIFFERS'}")
    assert ok


# ---- 11

def test_c11_parameter_budget(tmp_path, capsys):
    assert _run(["flops", "--sweep", "64:128", "--out", tmp_path / "c.csv"]) == 0
    line = next(l for l in capsys.readouterr().out.splitlines() if l.startswith("parameters:"))
    counts = {k: int(v.replace(",", ""))
              for k, v in re.findall(r"([a-z_]+) ([\d,]*\d)", line.split(":", 1)[1])}
    ok = counts["total"] <= 4_600_000 and counts["head"] <= 536_000
    record(11, ok, f"CLI reports total {counts['total']:,}, head {counts['head']:,}")
    assert ok
