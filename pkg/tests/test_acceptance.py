"""Exit criteria for the whole pipeline, one test per criterion.

Each test prints a ``[PASS]``/``[FAIL]`` line straight to the terminal.
"""

import math
import re
import subprocess
import sys
import time
from dataclasses import dataclass

import numpy as np
import pytest

from cablekin import datagen, evaluation, kinematics as kin, model, quant


def verdict(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


@dataclass
class Pipeline:
    train: datagen.Dataset
    test: datagen.Dataset
    nn: model.MlpModel
    linear: model.LinearModel
    seconds: float


@pytest.fixture(scope="module")
def pipeline():
    t0 = time.perf_counter()
    ds = datagen.generate(datagen.DESK_SPEC)
    tr, te = datagen.split(ds, 0.2, 42)
    cfg = model.TrainConfig()
    nn = model.train(model.init_mlp(cfg.hidden_dims, cfg.seed), tr, cfg)
    lin = model.fit_linear(tr)
    return Pipeline(tr, te, nn, lin, time.perf_counter() - t0)


def test_ac1_kinematics(capsys):
    t0 = time.perf_counter()
    err = kin.roundtrip_error(1000, 0)
    rig = kin.Rig.uniform(2, 2, 2, 0.01)
    s2, s3 = math.sqrt(2), math.sqrt(3)
    base = kin.inverse_lengths(rig, (1, 1, 2)).L
    origin = kin.inverse_lengths(rig, (0, 0, 0)).L
    rot = kin.target_to_rotations(rig, (0, 0, 0)).dtheta
    dev = max(
        np.abs(np.subtract(base, [s2] * 4)).max(),
        np.abs(np.subtract(origin, [2, 2 * s2, 2 * s3, 2 * s2])).max(),
        np.abs(np.subtract(rot, [58.5786, 141.4214, 204.9888, 141.4214])).max(),
    )
    secs = time.perf_counter() - t0
    ok = err < 1e-9 and dev <= 1e-4 and secs < 1.0
    verdict(capsys, "AC1 kinematics oracle suite", ok,
            f"round-trip max err {err:.2e} (<1e-9), hand cases max dev {dev:.1e} (<=1e-4), "
            f"{secs:.3f}s (<1s)")


def test_ac2_data_generation(capsys):
    tiny = datagen.generate(datagen.GridSpec((1, 1.5, 0.5), (0.01,), 0.5))
    regen = max(
        np.abs(np.subtract(t, kin.target_to_rotations(kin.Rig(*f[3:6], (f[6],) * 4), f[:3]).dtheta)).max()
        for f, t in tiny)
    t0 = time.perf_counter()
    desk = datagen.generate(datagen.DESK_SPEC)
    desk_secs = time.perf_counter() - t0
    full = datagen.generate(datagen.PAPER_SPEC)
    ok = len(tiny) == 8 and regen <= 1e-12 and len(full) > 0 and desk_secs < 5.0
    verdict(capsys, "AC2 data generation", ok,
            f"tiny rows {len(tiny)} (=8), regen err {regen:.1e} (<=1e-12), "
            f"desk {len(desk)} rows in {desk_secs:.3f}s (<5s), full grid {len(full)} rows "
            f"(reference figure {datagen.REFERENCE_ROW_COUNT}, parity not required)")


def test_ac3_gradient_check(capsys):
    t0 = time.perf_counter()
    ds = datagen.generate(datagen.DESK_SPEC)
    worst = 0.0
    for seed in range(10):
        m = model.init_mlp([5], seed)
        m.in_mean[:], m.in_std[:] = ds.features.mean(0), ds.features.std(0)
        m.out_mean[:], m.out_std[:] = ds.targets.mean(0), ds.targets.std(0)
        rng = np.random.default_rng(seed)
        for layer in m.layers:
            layer.bias[:] = rng.normal(0, 0.1, layer.bias.shape)
        sample = ds.samples[int(rng.integers(len(ds)))]
        worst = max(worst, model.gradient_check(m, sample, 1e-4))
    secs = time.perf_counter() - t0
    verdict(capsys, "AC3 gradient check", worst <= 1e-4 and secs < 10,
            f"max rel err {worst:.2e} over 10 models (<=1e-4), {secs:.2f}s (<10s)")


def test_ac4_learning_quality(pipeline, capsys):
    r2_nn = model.evaluate(lambda X: model.forward(pipeline.nn, X), pipeline.test).r2
    r2_lin = model.evaluate(pipeline.linear.predict, pipeline.test).r2
    ok = ((r2_nn >= 0.97).all() and ((r2_lin >= 0.87) & (r2_lin <= 0.97)).all()
          and (r2_nn > r2_lin).all() and pipeline.seconds < 600)
    verdict(capsys, "AC4 learning quality", ok,
            f"NN R2 {np.round(r2_nn, 4).tolist()} (>=0.97), linear R2 "
            f"{np.round(r2_lin, 4).tolist()} (in [0.87, 0.97]), {pipeline.seconds:.1f}s (<600s)")


def test_ac5_quantization_fidelity(pipeline, capsys):
    qm = quant.quantize(pipeline.nn)
    r2_f = model.evaluate(lambda X: model.forward(pipeline.nn, X), pipeline.test).r2
    r2_q = model.evaluate(lambda X: quant.dequantized_forward(qm, X), pipeline.test).r2
    gap = np.abs(r2_f - r2_q).max()
    bound_ok = all(
        np.abs(fl.weight - ql.dequantize()).max() <= ql.scale / 2 + np.spacing(np.abs(fl.weight).max())
        for fl, ql in zip(pipeline.nn.layers, qm.layers))
    verdict(capsys, "AC5 quantization fidelity", gap <= 0.03 and bound_ok,
            f"max R2 gap {gap:.5f} (<=0.03), quantized R2 {np.round(r2_q, 4).tolist()}, "
            f"per-tensor bound {'held' if bound_ok else 'violated'}")


def test_ac6_size_reduction(pipeline, capsys):
    fb = quant.serialize(pipeline.nn)
    qb = quant.serialize(quant.quantize(pipeline.nn))
    ratio = len(fb) / len(qb)
    verdict(capsys, "AC6 size reduction", ratio >= 3.5,
            f"float {len(fb)} B, quantized {len(qb)} B, ratio {ratio:.2f} (>=3.5)")


def test_ac7_serialization_and_c(pipeline, capsys):
    ok = True
    for obj in (pipeline.nn, quant.quantize(pipeline.nn)):
        blob = quant.serialize(obj)
        ok &= quant.serialize(quant.deserialize(blob)) == blob
        text = quant.emit_c_source(blob, "g_model")
        body = text[text.index("{") + 1:text.index("}")]
        ok &= bytes(int(t, 16) for t in re.findall(r"0x([0-9a-f]{2})", body)) == blob
        ok &= f"g_model_len = {len(blob)};" in text
    verdict(capsys, "AC7 serialization and C emission", ok,
            "float and quantized blobs round-trip bit-exactly and re-parse from C hex")


def test_ac8_error_distribution(pipeline, capsys):
    s_nn = evaluation.error_report(
        model.evaluate(lambda X: model.forward(pipeline.nn, X), pipeline.test)).std
    s_lin = evaluation.error_report(model.evaluate(pipeline.linear.predict, pipeline.test)).std
    verdict(capsys, "AC8 error-distribution ordering", bool((s_nn < s_lin).all()),
            f"NN error std {np.round(s_nn, 3).tolist()} < linear {np.round(s_lin, 3).tolist()}")


def test_ac9_end_to_end(tmp_path, capsys):
    steps = [
        ["generate"],
        ["train", "data.csv"],
        ["quantize", "model.bin", "model_q.bin"],
        ["emit-c", "model_q.bin"],
        ["infer", "model_q.bin", "0", "0", "0", "2", "2", "2", "0.01", "--exact"],
    ]
    t0 = time.perf_counter()
    codes = []
    for args in steps:
        proc = subprocess.run([sys.executable, "-m", "cablekin", *args], cwd=tmp_path,
                              capture_output=True, text=True)
        codes.append(proc.returncode)
        if proc.returncode:
            break
    secs = time.perf_counter() - t0
    ok = codes == [0] * len(steps) and (tmp_path / "model_data.cc").exists() and secs < 900
    verdict(capsys, "AC9 end-to-end pipeline", ok,
            f"exit codes {codes}, {secs:.1f}s (<900s)")
