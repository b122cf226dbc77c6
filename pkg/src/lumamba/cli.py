"""Command-line entry point: ``lumamba <verb> [flags]``.

Verbs: synth, preprocess, pretrain, finetune, eval, flops.

Every verb accepts ``--config FILE``. The file is UTF-8, one ``key = value``
per line, ``#`` starts a comment, and keys are flag names with or without the
leading dashes (``batch-size`` and ``batch_size`` are the same key).
Precedence, lowest first: built-in defaults, config file, command-line flags.

Exit status: 0 on success, 1 on a usage error, 2 when the run itself fails.
"""
import argparse
import re
import sys
from pathlib import Path

from . import costmodel, ssl
from .model import LuMamba, ModelConfig, parameter_report
from .sigproc import (TARGET_FS, FormatError, SynthConfig, concat_batches, pipeline, synth_dataset,
                      window, zscore)
from .sigproc import load as load_recording
from .sigproc import save as save_recording
from .trainer import (CheckpointError, TrainConfig, TrainingError, evaluate, finetune, pretrain,
                      subject_split, write_csv)
from .trainer import load as load_checkpoint
from .trainer import save as save_checkpoint

_NUMBER = re.compile(r"^-\d|^-\.\d")
VERBS = ("synth", "preprocess", "pretrain", "finetune", "eval", "flops")


class UsageError(Exception):
    pass


class _Help(argparse.HelpFormatter):
    """Append the default to every optional flag's help line."""

    def _get_help_string(self, action):
        text = action.help or ""
        if action.option_strings and action.default is not argparse.SUPPRESS \
                and action.dest not in ("help", "config") and not action.required:
            text += f" (default: {_fmt(action.default) if action.default != '' else 'none'})"
        return text


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*args, **kw)

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# ---- argument types

def _int_list(text):
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _sweep(text):
    try:
        lo, hi = (int(v) for v in str(text).split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}")
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad sweep range {text!r}")
    return lo, hi


def _fmt(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


# ---- parser

def _model_flags(p):
    d = ModelConfig()
    g = p.add_argument_group("model size (ignored when --init supplies a checkpoint)")
    g.add_argument("--patch-len", type=int, default=d.patch_len, help="samples per patch")
    g.add_argument("--embed-dim", type=int, default=d.embed_dim, help="token width E")
    g.add_argument("--queries", type=int, default=d.n_queries, help="unification queries Q")
    g.add_argument("--d-state", type=int, default=d.d_state, help="SSM state width N")
    g.add_argument("--blocks", type=int, default=d.n_blocks, help="BiMamba blocks")


def _train_flags(p, epochs, lr):
    t = TrainConfig()
    p.add_argument("--data", required=True, help="directory of .lum recordings")
    p.add_argument("--montage", type=int, default=0,
                   help="use only recordings with this many channels (0: the single montage present)")
    p.add_argument("--window", type=float, default=5.0, help="window length in seconds")
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=t.batch_size)
    p.add_argument("--lr", type=float, default=lr, help="peak learning rate")
    p.add_argument("--weight-decay", type=float, default=t.weight_decay)
    p.add_argument("--max-steps", type=int, default=0, help="stop after this many steps (0: no cap)")
    p.add_argument("--log-every", type=int, default=10, help="print progress every N steps")


def _common(p):
    p.add_argument("--config", help="key = value file; command-line flags override it")
    p.add_argument("--seed", type=int, default=0, help="root seed for every random stream")


def build_parser():
    fmt = _Help
    parser = _Parser(prog="lumamba", description="Desk-scale LuMamba for EEG.")
    sub = parser.add_subparsers(dest="verb", metavar="verb", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a synthetic multi-montage dataset", formatter_class=fmt)
    _common(p)
    p.add_argument("--montage", type=_int_list, default=(20,),
                   help="channel counts, comma separated (16, 20 or 26)")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--subjects", type=int, default=8)
    p.add_argument("--subject-offset", type=int, default=0, help="first subject id")
    p.add_argument("--seconds", type=float, default=60.0, help="length of each recording")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("preprocess", help="band-pass, notch and resample to 256 Hz",
                       formatter_class=fmt)
    _common(p)
    p.add_argument("--data", required=True, help="directory of .lum recordings")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("pretrain", help="self-supervised pre-training", formatter_class=fmt)
    _common(p)
    _train_flags(p, epochs=1, lr=1e-4)
    p.add_argument("--regime", choices=ssl.REGIMES, default="mixed")
    p.add_argument("--lam", type=float, default=ssl.LAMBDA, help="weight of the JEPA + SigReg terms")
    p.add_argument("--slices", type=int, default=ssl.N_SLICES, help="SigReg projection count")
    p.add_argument("--mask-ratio", type=float, default=ssl.MASK_RATIO)
    _model_flags(p)
    p.add_argument("--out", required=True, help="checkpoint path")

    for verb, text in (("finetune", "supervised fine-tuning with a classification head"),
                       ("eval", "fine-tune per seed and write held-out metrics")):
        p = sub.add_parser(verb, help=text, formatter_class=fmt)
        _common(p)
        _train_flags(p, epochs=12, lr=1e-3)
        p.add_argument("--init", default="", help="pre-trained checkpoint (empty: random init)")
        p.add_argument("--classes", type=int, default=2)
        p.add_argument("--test-subjects", type=_str_list, default=(),
                       help="subjects held out for evaluation, comma separated")
        _model_flags(p)
        if verb == "eval":
            p.add_argument("--seeds", type=_int_list, default=(0, 1, 2))
            p.add_argument("--out", required=True, help="metrics CSV path")
        else:
            p.add_argument("--out", required=True, help="checkpoint path")

    p = sub.add_parser("flops", help="analytic FLOPs and peak-memory sweep", formatter_class=fmt)
    _common(p)
    p.add_argument("--sweep", type=_sweep, default=(64, 65536), help="S range LO:HI")
    p.add_argument("--per-octave", type=int, default=2, help="sweep points per doubling of S")
    p.add_argument("--budget-gb", type=float, default=64.0, help="memory budget for the OOM point")
    p.add_argument("--out", required=True, help="FLOPs CSV path")
    p.add_argument("--oom-out", default="",
                   help="OOM-crossing CSV path (empty: <out stem>_oom.csv next to --out)")
    return parser


# ---- config files

def read_config(path):
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}")
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{no}: expected 'key = value', got {line!r}")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _apply_config(verb_parser, path):
    actions = {a.dest: a for a in verb_parser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in read_config(path).items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"{path}: unknown key {key!r} for '{verb_parser.prog}'")
        try:
            value = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"{path}: bad value for {key}: {exc}")
        if action.choices and value not in action.choices:
            raise UsageError(f"{path}: {key} must be one of {list(action.choices)}")
        defaults[key] = value
        action.required = False
    verb_parser.set_defaults(**defaults)


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a file path")
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse(argv):
    """Namespace for ``argv``; config-file values are applied as verb defaults first."""
    parser = build_parser()
    path = _config_path(argv)
    verb = next((t for t in argv if not t.startswith("-")), None)
    if verb in VERBS:
        sub = parser._subparsers._group_actions[0].choices[verb]
        # name the offending token before argparse complains about missing flags
        for tok in argv[argv.index(verb) + 1:]:
            flag = tok.split("=", 1)[0]
            if flag.startswith("-") and not _NUMBER.match(tok) \
                    and flag not in sub._option_string_actions:
                raise UsageError(f"lumamba {verb}: error: unrecognized argument {tok!r}\n"
                                 + sub.format_usage())
        if path:
            _apply_config(sub, path)
    return parser.parse_args(argv)


# ---- helpers

def _print_config(args):
    print(f"[{args.verb}] resolved config (seed = {args.seed})")
    for k in sorted(vars(args)):
        if k != "verb":
            print(f"  {k} = {_fmt(getattr(args, k))}")


def _print_params(model):
    rep = parameter_report(model)
    print("parameters: " + ", ".join(f"{k} {v:,}" for k, v in rep.items()))
    return rep


def _recordings(directory):
    paths = sorted(Path(directory).glob("*.lum"))
    if not paths:
        raise FileNotFoundError(f"no .lum recordings in {directory}")
    return [(p, load_recording(p)) for p in paths]


def load_windows(directory, seconds, montage=0):
    """Windows of every recording in ``directory`` sharing one montage.

    Recordings not yet at 256 Hz go through the filter + resample pipeline here;
    recordings already at 256 Hz are taken as preprocessed.
    """
    recs = [r for _, r in _recordings(directory)]
    if montage:
        recs = [r for r in recs if r.montage.C == montage]
        if not recs:
            raise ValueError(f"no {montage}-channel recordings in {directory}")
    counts = sorted({r.montage.C for r in recs})
    if len(counts) > 1:
        raise ValueError(f"{directory} mixes montages {counts}; pick one with --montage")
    batches = []
    for rec in recs:
        if rec.fs != TARGET_FS:
            rec = pipeline(rec)
        wb = window(rec, seconds)
        wb.windows = zscore(wb.windows)
        batches.append(wb)
    return concat_batches(batches)


def _model_cfg(args):
    return ModelConfig(patch_len=args.patch_len, embed_dim=args.embed_dim, n_queries=args.queries,
                       d_state=args.d_state, n_blocks=args.blocks)


def _logger(every):
    def log(rec):
        if every > 0 and rec["step"] % every == 0:
            print("  " + " ".join(f"{k}={v:.5g}" if isinstance(v, float) else f"{k}={v}"
                                  for k, v in rec.items() if v is not None))
    return log


def _train_cfg(args, regime, seed):
    kw = dict(regime=regime, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
              weight_decay=args.weight_decay, seed=seed, data=str(args.data),
              montage=args.montage, max_steps=args.max_steps)
    if regime != "finetune":
        kw.update(lam=args.lam, n_slices=args.slices, mask_ratio=args.mask_ratio)
    return TrainConfig(**kw)


def _init(args):
    if not args.init:
        return LuMamba(_model_cfg(args), seed=args.seed)
    ckpt = load_checkpoint(args.init)
    print(f"model size from {args.init}: " + ", ".join(
        f"{k} {v}" for k, v in sorted(ckpt.model_config().to_dict().items())))
    return ckpt


def _split(args, data):
    if not args.test_subjects:
        return data, None
    missing = set(args.test_subjects) - set(data.sources)
    if missing:
        raise ValueError(f"test subjects not in the data: {sorted(missing)}")
    train, test = subject_split(data, args.test_subjects)
    if not train.B:
        raise ValueError("every window belongs to a test subject")
    return train, test


def _print_report(rep):
    vals = {"balanced_accuracy": rep.balanced_accuracy, "auroc": rep.auroc, "aupr": rep.aupr}
    print("metrics: " + ", ".join(f"{k} {'n/a' if v is None else f'{v:.4f}'}"
                                  for k, v in vals.items()))


# ---- verbs

def cmd_synth(args):
    cfg = SynthConfig(montages=args.montage, n_classes=args.classes, subjects=args.subjects,
                      seconds=args.seconds, subject_offset=args.subject_offset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    recs = synth_dataset(cfg, args.seed)
    for rec in recs:
        save_recording(rec, out / f"m{rec.montage.C:02d}_{rec.subject}_c{rec.label}.lum")
    print(f"wrote {len(recs)} recordings to {out}")


def cmd_preprocess(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    recs = _recordings(args.data)
    for path, rec in recs:
        save_recording(pipeline(rec), out / path.name)
    print(f"preprocessed {len(recs)} recordings to {out} at {TARGET_FS:g} Hz")


def cmd_pretrain(args):
    data = load_windows(args.data, args.window, args.montage)
    mcfg = _model_cfg(args)
    print(f"data: {data.B} windows, {data.montage.C} channels")
    _print_params(LuMamba(mcfg, seed=args.seed, with_decoder=args.regime != "lejepa"))
    res = pretrain(_train_cfg(args, args.regime, args.seed), data, mcfg, _logger(args.log_every))
    save_checkpoint(res.checkpoint, args.out)
    print(f"saved {args.out} after {res.checkpoint.step} steps")


def _finetune_one(args, init, train, seed):
    cfg = _train_cfg(args, "finetune", seed)
    return finetune(cfg, init, train, args.classes, log=_logger(args.log_every))


def cmd_finetune(args):
    data = load_windows(args.data, args.window, args.montage)
    train, test = _split(args, data)
    init = _init(args)
    print(f"data: {train.B} training windows"
          + (f", {test.B} held out" if test is not None else "") + f", {data.montage.C} channels")
    res = _finetune_one(args, init, train, args.seed)
    _print_params(res.model)
    save_checkpoint(res.checkpoint, args.out)
    print(f"saved {args.out} after {res.checkpoint.step} steps")
    if test is not None:
        _print_report(evaluate(res.model, test))


def cmd_eval(args):
    data = load_windows(args.data, args.window, args.montage)
    train, test = _split(args, data)
    if test is None:
        raise ValueError("eval needs --test-subjects to hold out")
    reports = []
    for seed in args.seeds:
        init = _init(_with_seed(args, seed))
        res = _finetune_one(args, init, train, seed)
        rep = evaluate(res.model, test)
        print(f"seed {seed}:", end=" ")
        _print_report(rep)
        reports.append(rep)
    write_csv(args.out, reports, n_seeds=len(args.seeds))
    print(f"wrote {args.out}")


def _with_seed(args, seed):
    ns = argparse.Namespace(**vars(args))
    ns.seed = seed
    return ns


def cmd_flops(args):
    lo, hi = args.sweep
    specs = costmodel.default_specs()
    sweep = costmodel.scaling_sweep(specs, costmodel.sweep_values(lo, hi, args.per_octave),
                                    int(args.budget_gb * 2 ** 30))
    out = Path(args.out)
    oom = Path(args.oom_out) if args.oom_out else out.with_name(out.stem + "_oom.csv")
    costmodel.write_csv(sweep, out)
    costmodel.write_crossings(sweep, oom)
    for spec in specs:
        S, F = sweep.series(spec.name)
        slope = costmodel.loglog_slope(S, F) if len(S) > 1 else float("nan")
        print(f"{spec.name:>15}: params {costmodel.param_count(spec):,}, "
              f"top-decade slope {slope:.3f}, OOM at S = {sweep.crossings[spec.name]}")
    print("default model, fine-tuning form:")
    _print_params(LuMamba(ModelConfig(), with_decoder=False, with_head=True))
    print(f"wrote {out} and {oom}")


COMMANDS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "pretrain": cmd_pretrain,
            "finetune": cmd_finetune, "eval": cmd_eval, "flops": cmd_flops}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except SystemExit as exc:          # --help
        return exc.code or 0
    _print_config(args)
    try:
        COMMANDS[args.verb](args)
    except (OSError, ValueError, FormatError, CheckpointError, TrainingError,
            FloatingPointError, RuntimeError) as exc:
        print(f"lumamba {args.verb}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
