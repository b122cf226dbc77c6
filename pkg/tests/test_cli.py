import re
import subprocess
import sys

import pytest

from lumamba.cli import VERBS, build_parser, main, read_config
from lumamba.sigproc import load as load_recording
from lumamba.trainer import load as load_checkpoint

TINY = ["--embed-dim", "8", "--queries", "2", "--d-state", "4", "--batch-size", "4",
        "--log-every", "0"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--subjects", "3", "--seconds", "20", "--seed", "7",
                 "--out", str(root / "raw")]) == 0
    assert main(["preprocess", "--data", str(root / "raw"), "--out", str(root / "pre")]) == 0
    assert main(["pretrain", "--data", str(root / "pre"), "--max-steps", "2", "--slices", "8",
                 "--out", str(root / "p.lumc")] + TINY) == 0
    return root


# ---- usage

@pytest.mark.parametrize("verb", VERBS)
def test_help_lists_every_flag_with_default(verb, capsys):
    code, out, _ = run([verb, "--help"], capsys)
    assert code == 0
    sub = build_parser()._subparsers._group_actions[0].choices[verb]
    for action in sub._actions:
        for opt in action.option_strings:
            assert opt in out
        if action.option_strings and not action.required and action.dest not in ("help", "config"):
            assert "default:" in (sub.formatter_class("x")._get_help_string(action))
    flat = " ".join(out.split())
    assert "(default: 0)" in flat


def test_missing_out_is_usage_error(capsys):
    code, _, err = run(["flops", "--sweep", "64:128"], capsys)
    assert code == 1 and "--out" in err and "usage:" in err


def test_unknown_flag_names_the_token(capsys):
    code, _, err = run(["synth", "--out", "x", "--colour", "red"], capsys)
    assert code == 1 and "--colour" in err


def test_no_verb_and_bad_verb(capsys):
    assert run([], capsys)[0] == 1
    code, _, err = run(["train"], capsys)
    assert code == 1 and "train" in err


def test_bad_value_is_usage_error(capsys):
    code, _, err = run(["flops", "--sweep", "100:10", "--out", "x.csv"], capsys)
    assert code == 1 and "100:10" in err


def test_runtime_failure_exit_2(tmp_path, capsys):
    code, _, err = run(["preprocess", "--data", tmp_path / "nothing", "--out", tmp_path / "o"], capsys)
    assert code == 2 and "no .lum recordings" in err


# ---- config files

def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep settings\nsweep = 64:256   # short\n\nper-octave=1\nout = "
                   f"{tmp_path / 'from_file.csv'}\n", encoding="utf-8")
    assert read_config(cfg) == {"sweep": "64:256", "per_octave": "1",
                                "out": str(tmp_path / "from_file.csv")}
    code, out, _ = run(["flops", "--config", cfg, "--per-octave", "2"], capsys)
    assert code == 0
    assert "per_octave = 2" in out and "sweep = 64,256" in out
    rows = (tmp_path / "from_file.csv").read_text().splitlines()
    assert len(rows) == 1 + 3 * 5        # S = 64, 91, 128, 181, 256 for each of three architectures


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = red\n")
    code, _, err = run(["flops", "--config", cfg, "--out", tmp_path / "x.csv"], capsys)
    assert code == 1 and "colour" in err
    cfg.write_text("just words\n")
    assert run(["flops", "--config", cfg, "--out", tmp_path / "x.csv"], capsys)[0] == 1


def test_resolved_config_and_seed_printed(tmp_path, capsys):
    code, out, _ = run(["flops", "--sweep", "64:128", "--seed", "5", "--out", tmp_path / "f.csv"],
                       capsys)
    assert code == 0 and "seed = 5" in out.splitlines()[0]


# ---- verbs

def test_synth_is_deterministic(tmp_path, capsys):
    args = ["synth", "--montage", "16,26", "--subjects", "2", "--seconds", "4", "--seed", "7"]
    for d in ("a", "b"):
        assert run(args + ["--out", tmp_path / d], capsys)[0] == 0
    run(["synth", "--montage", "16,26", "--subjects", "2", "--seconds", "4", "--seed", "8",
         "--out", tmp_path / "c"], capsys)
    a, b, c = (_files(tmp_path / d) for d in "abc")
    assert a == b and len(a) == 8 and a != c
    rec = load_recording(tmp_path / "a" / "m26_s001_c1.lum")
    assert rec.montage.C == 26 and rec.label == 1 and rec.fs == 500.0


def test_preprocess_output(dataset, tmp_path, capsys):
    assert run(["preprocess", "--data", dataset / "raw", "--out", tmp_path / "again"], capsys)[0] == 0
    assert _files(tmp_path / "again") == _files(dataset / "pre")
    rec = load_recording(dataset / "pre" / "m20_s000_c0.lum")
    assert rec.fs == 256.0 and rec.T == 20 * 256


def test_pretrain_deterministic_and_reports_params(dataset, tmp_path, capsys):
    code, out, _ = run(["pretrain", "--data", dataset / "pre", "--max-steps", "2", "--slices", "8",
                        "--out", tmp_path / "p.lumc"] + TINY, capsys)
    assert code == 0 and "parameters:" in out and "total" in out
    assert (tmp_path / "p.lumc").read_bytes() == (dataset / "p.lumc").read_bytes()
    ck = load_checkpoint(tmp_path / "p.lumc")
    assert ck.step == 2 and ck.config["train"]["regime"] == "mixed"


def test_finetune_and_eval(dataset, tmp_path, capsys):
    base = ["--data", dataset / "pre", "--init", dataset / "p.lumc", "--epochs", "1",
            "--test-subjects", "s002", "--batch-size", "4", "--log-every", "0"]
    for name in ("f1", "f2"):
        code, out, _ = run(["finetune"] + base + ["--out", tmp_path / f"{name}.lumc"], capsys)
        assert code == 0 and "balanced_accuracy" in out and "head" in out
    assert (tmp_path / "f1.lumc").read_bytes() == (tmp_path / "f2.lumc").read_bytes()
    for name in ("m1", "m2"):
        assert run(["eval"] + base + ["--out", tmp_path / f"{name}.csv"], capsys)[0] == 0
    text = (tmp_path / "m1.csv").read_text()
    assert text == (tmp_path / "m2.csv").read_text()
    assert text.splitlines()[0] == "metric,mean,std,seed0,seed1,seed2"


def test_finetune_errors(dataset, tmp_path, capsys):
    base = ["--data", dataset / "pre", "--epochs", "1", "--out", tmp_path / "f.lumc"]
    code, _, err = run(["finetune"] + base + ["--test-subjects", "s999"], capsys)
    assert code == 2 and "s999" in err
    code, _, err = run(["eval"] + base[:-2] + ["--out", tmp_path / "m.csv"], capsys)
    assert code == 2 and "test-subjects" in err
    (tmp_path / "junk.lumc").write_bytes(b"nope")
    code, _, err = run(["finetune"] + base + ["--init", tmp_path / "junk.lumc"], capsys)
    assert code == 2 and ("truncated" in err or "magic" in err)
    code, _, err = run(["pretrain", "--data", dataset / "pre", "--montage", "16",
                        "--out", tmp_path / "x.lumc"], capsys)
    assert code == 2 and "16-channel" in err


def test_flops_outputs(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(["flops", "--sweep", "64:65536", "--out", tmp_path / f"{name}.csv"], capsys)[0] == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_oom.csv").read_bytes() == (tmp_path / "b_oom.csv").read_bytes()
    code, out, _ = run(["flops", "--sweep", "64:128", "--out", tmp_path / "c.csv"], capsys)
    line = next(l for l in out.splitlines() if l.startswith("parameters:"))
    counts = _parse_params(line)
    assert counts["total"] <= 4_600_000 and counts["head"] <= 536_000


def _parse_params(line):
    body = line.split(":", 1)[1]
    return {name: int(num.replace(",", ""))
            for name, num in re.findall(r"([a-z_]+) ([\d,]*\d)", body)}


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "lumamba.cli", "flops", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "--sweep" in res.stdout
