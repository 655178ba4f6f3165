"""``cablekin`` command line: generate, stats, train, eval, quantize, emit-c, infer, roundtrip.

Exit codes: 0 success, 1 roundtrip tolerance exceeded, 2 usage/I/O/parse
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import datagen, evaluation, kinematics, quant
from .errors import (
    CablekinError,
    DivergenceError,
    InconsistentLengthsError,
    ParseError,
    SingularFitError,
    UndefinedR2Error,
)
from .model import TrainConfig, evaluate, fit_linear, forward, init_mlp, train

ROUNDTRIP_TOL = 1e-9
NUMERIC_ERRORS = (DivergenceError, InconsistentLengthsError, SingularFitError, UndefinedR2Error)


class UsageError(Exception):
    pass


def _read_model(path):
    return quant.deserialize(Path(path).read_bytes())


def _predictor(m):
    if isinstance(m, quant.QuantizedModel):
        return lambda X: quant.dequantized_forward(m, X)
    return lambda X: forward(m, X)


def _fmt_r2(r2) -> str:
    return " ".join(f"{name}={v:.4f}" for name, v in zip(datagen.TARGETS, r2))


def cmd_generate(args) -> int:
    if args.full:
        spec = datagen.PAPER_SPEC
    else:
        spec = datagen.GridSpec(tuple(args.sides), tuple(args.R), args.step)
    ds = datagen.generate(spec)
    datagen.save(ds, args.out)
    print(f"wrote {len(ds)} rows to {args.out}")
    if args.full:
        print(f"reference row count for this grid: {datagen.REFERENCE_ROW_COUNT}")
    return 0


def cmd_stats(args) -> int:
    ds = datagen.load(args.data)
    report = datagen.stats(ds, args.bins)
    print(f"{len(ds)} rows")
    print(report.format())
    if args.out:
        Path(args.out).write_text(report.to_csv(), encoding="utf-8", newline="\n")
    return 0


def cmd_train(args) -> int:
    ds = datagen.load(args.data)
    tr, te = datagen.split(ds, args.test_fraction, args.split_seed)
    if args.baseline == "linear":
        lin = fit_linear(tr)
        print(f"linear train R2: {_fmt_r2(evaluate(lin.predict, tr).r2)}")
        print(f"linear test  R2: {_fmt_r2(evaluate(lin.predict, te).r2)}")
        return 0
    cfg = TrainConfig(args.epochs, args.batch_size, args.lr, args.seed, tuple(args.hidden))
    history: list[float] = []
    m = train(init_mlp(cfg.hidden_dims, cfg.seed), tr, cfg, history)
    blob = quant.serialize(m)
    Path(args.out).write_bytes(blob)
    print(f"epochs={cfg.epochs} final loss={history[-1]:.6g} params={m.n_params()}")
    print(f"train R2: {_fmt_r2(evaluate(_predictor(m), tr).r2)}")
    print(f"test  R2: {_fmt_r2(evaluate(_predictor(m), te).r2)}")
    print(f"wrote {len(blob)} bytes to {args.out}")
    return 0


def cmd_quantize(args) -> int:
    src = Path(args.model_in).read_bytes()
    m = quant.deserialize(src)
    if isinstance(m, quant.QuantizedModel):
        blob = src
        print("input is already quantized; copied unchanged")
    else:
        blob = quant.serialize(quant.quantize(m))
    Path(args.model_out).write_bytes(blob)
    print(f"input blob: {len(src)} bytes")
    print(f"quantized blob: {len(blob)} bytes (ratio {len(src) / len(blob):.2f})")
    return 0


def cmd_emit_c(args) -> int:
    blob = Path(args.model_in).read_bytes()
    quant.deserialize(blob)
    try:
        text = quant.emit_c_source(blob, args.symbol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    print(f"wrote {len(blob)} bytes as {args.symbol}[] to {args.out}")
    return 0


def cmd_eval(args) -> int:
    ds = datagen.load(args.data)
    tr, te = datagen.split(ds, args.test_fraction, args.split_seed)
    models, deployable = [], []
    for path in args.models:
        m = _read_model(path)
        kind = "nn-quantized" if isinstance(m, quant.QuantizedModel) else "nn-float"
        name = f"{kind} ({Path(path).name})"
        models.append((name, _predictor(m)))
        deployable.append(name)
    if not args.no_linear:
        models.append(("linear regression", fit_linear(tr).predict))
    report = evaluation.compare(models, te, deployable)
    print(report.format())
    Path(args.report).write_text(report.to_csv(), encoding="utf-8", newline="\n")
    print(f"wrote {args.report}")
    for i, row in enumerate(report.rows):
        summary = evaluation.error_report(report.metrics[row.name], args.bins,
                                          args.residuals, prefix=f"model{i}_")
        print(f"{row.name}: error mean "
              + " ".join(f"{v:+.4g}" for v in summary.mean)
              + " | std " + " ".join(f"{v:.4g}" for v in summary.std))
    return 0


def cmd_infer(args) -> int:
    x, y, z, B, D, H, R = args.values
    rig = kinematics.Rig.uniform(B, D, H, R)
    exact = kinematics.target_to_rotations(rig, kinematics.Point3(x, y, z))
    m = _read_model(args.model)
    pred = _predictor(m)(np.array([args.values]))[0]
    if args.exact:
        print(f"{'output':<8}{'predicted':>14}{'exact':>14}{'abs_error':>14}")
        for name, p, e in zip(datagen.TARGETS, pred, exact):
            print(f"{name:<8}{p:>14.4f}{e:>14.4f}{abs(p - e):>14.4f}")
    else:
        for name, p in zip(datagen.TARGETS, pred):
            print(f"{name} {p:.6f}")
    return 0


def cmd_roundtrip(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    err = kinematics.roundtrip_error(args.trials, args.seed)
    ok = err <= ROUNDTRIP_TOL
    print(f"trials={args.trials} seed={args.seed} max error={err:.3e} "
          f"({'ok' if ok else 'exceeds'} {ROUNDTRIP_TOL:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cablekin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="enumerate the training grid to a CSV file")
    desk = datagen.DESK_SPEC
    g.add_argument("--out", default="data.csv")
    g.add_argument("--sides", nargs=3, type=float, default=list(desk.side_range),
                   metavar=("START", "STOP", "STEP"), help="cube side range B=D=H, half-open")
    g.add_argument("--R", nargs="+", type=float, default=list(desk.radii), help="winch radii")
    g.add_argument("--step", type=float, default=desk.point_step, help="x/y/z grid step")
    g.add_argument("--full", action="store_true", help="use the full-size grid (1..7 m, 3 radii)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("stats", help="rotation histograms and moments")
    s.add_argument("data")
    s.add_argument("--bins", type=int, default=20)
    s.add_argument("--out", help="write histogram CSV here")
    s.set_defaults(func=cmd_stats)

    split_args = argparse.ArgumentParser(add_help=False)
    split_args.add_argument("--test-fraction", type=float, default=0.2)
    split_args.add_argument("--split-seed", type=int, default=42)

    defaults = TrainConfig()
    t = sub.add_parser("train", parents=[split_args], help="train the network (or baseline)")
    t.add_argument("data")
    t.add_argument("--out", default="model.bin")
    t.add_argument("--epochs", type=int, default=defaults.epochs)
    t.add_argument("--batch-size", type=int, default=defaults.batch_size)
    t.add_argument("--lr", type=float, default=defaults.learning_rate)
    t.add_argument("--seed", type=int, default=defaults.seed)
    t.add_argument("--hidden", type=int, nargs="+", default=list(defaults.hidden_dims))
    t.add_argument("--baseline", choices=["linear"], help="fit the baseline instead")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[split_args], help="compare models on the test split")
    e.add_argument("models", nargs="+")
    e.add_argument("--data", default="data.csv")
    e.add_argument("--report", default="report.csv")
    e.add_argument("--residuals", default="residuals", help="directory for residual files")
    e.add_argument("--bins", type=int, default=50)
    e.add_argument("--no-linear", action="store_true", help="skip the linear baseline")
    e.set_defaults(func=cmd_eval)

    q = sub.add_parser("quantize", help="8-bit weight quantization of a float model")
    q.add_argument("model_in")
    q.add_argument("model_out")
    q.set_defaults(func=cmd_quantize)

    c = sub.add_parser("emit-c", help="write a model blob as a C byte array")
    c.add_argument("model_in")
    c.add_argument("--symbol", default="g_model")
    c.add_argument("--out", default="model_data.cc")
    c.set_defaults(func=cmd_emit_c)

    i = sub.add_parser("infer", help="predict rotations for one target")
    i.add_argument("model")
    i.add_argument("values", nargs=7, type=float, metavar="x y z B D H R")
    i.add_argument("--exact", action="store_true", help="show closed-form rotations beside predictions")
    i.set_defaults(func=cmd_infer)

    r = sub.add_parser("roundtrip", help="check FK(IK(p)) == p on random rigs")
    r.add_argument("--trials", type=int, default=1000)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_roundtrip)
    return p


def _thread_cap() -> int:
    raw = os.environ.get("CABLEKIN_THREADS", "")
    try:
        n = int(raw) if raw else 1
    except ValueError:
        raise UsageError(f"CABLEKIN_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=_thread_cap()):
            return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ParseError, OSError, CablekinError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
