import re
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from cablekin import model, quant
from cablekin.errors import CorruptModelError, ParseError
from cablekin.model import F32, Layer, MlpModel


def blob_size(dims, quantized):
    """Byte count read off the container layout."""
    size = 4 + 2 + 2 + 1 + 4 * (7 + 7 + 4 + 4)
    for fan_in, fan_out in zip(dims, dims[1:]):
        size += 4 + 4 + 1 + 1
        size += (4 + fan_in * fan_out) if quantized else 4 * fan_in * fan_out
        size += 4 * fan_out
    return size


def hex_bytes(text):
    """Independent parse of the emitted C array: every 0xNN token in the braces."""
    body = text[text.index("{") + 1:text.index("}")]
    return bytes(int(tok, 16) for tok in re.findall(r"0x([0-9a-f]{2})", body))


class TestQuantizeTensor:
    def test_all_zero(self):
        q, scale = quant.quantize_tensor(np.zeros((3, 2)))
        assert scale == 1 and not q.any()

    def test_example(self):
        # 1.27 / 0.02 = 63.5 rounds half-to-even to 64
        q, scale = quant.quantize_tensor([-2.54, 1.27, 0.0])
        assert scale == F32(0.02)
        assert q.tolist() == [-127, 64, 0]

    def test_non_finite(self):
        with pytest.raises(CorruptModelError):
            quant.quantize_tensor([1.0, np.nan])

    @given(hnp.arrays(np.float32, st.integers(1, 64),
                      elements=st.floats(-100, 100, width=32, allow_subnormal=False)))
    def test_error_bound_and_peak(self, w):
        q, scale = quant.quantize_tensor(w)
        assert np.abs(q.astype(int)).max() <= 127
        err = np.abs(w.astype(np.float64) - q.astype(np.float64) * float(scale))
        assert err.max() <= float(scale) / 2 + np.spacing(np.abs(w).max())
        if np.abs(w).max() > 0:
            assert np.abs(q[np.argmax(np.abs(w))]) == 127


class TestQuantize:
    def test_only_weights_change(self, trained):
        m, _ = trained
        qm = quant.quantize(m)
        for fl, ql in zip(m.layers, qm.layers):
            assert ql.q.dtype == np.int8
            assert np.array_equal(fl.bias, ql.bias)
            assert ql.activation == fl.activation
        assert np.array_equal(qm.in_mean, m.in_mean) and np.array_equal(qm.out_std, m.out_std)

    def test_per_tensor_bound(self, trained):
        m, _ = trained
        for fl, ql in zip(m.layers, quant.quantize(m).layers):
            err = np.abs(fl.weight - ql.dequantize())
            assert err.max() <= ql.scale / 2 + np.spacing(np.abs(fl.weight).max())

    def test_lossless_when_on_grid(self):
        rng = np.random.default_rng(0)
        scale = F32(0.03125)
        layers = []
        for fan_in, fan_out, act in ((7, 6, "relu"), (6, 4, "linear")):
            q = rng.integers(-127, 128, size=(fan_out, fan_in))
            q[0, 0] = 127
            layers.append(Layer(q.astype(F32) * scale, rng.normal(size=fan_out), act))
        m = MlpModel(layers)
        X = rng.uniform(0, 3, size=(20, 7))
        assert np.array_equal(quant.dequantized_forward(quant.quantize(m), X), model.forward(m, X))

    def test_matches_explicit_dequantized_model(self, trained, desk):
        m, _ = trained
        qm = quant.quantize(m)
        oracle = MlpModel([Layer(l.q.astype(np.float32) * l.scale, l.bias, l.activation)
                           for l in qm.layers], m.in_mean, m.in_std, m.out_mean, m.out_std)
        assert np.array_equal(quant.dequantized_forward(qm, desk.features),
                              model.forward(oracle, desk.features))

    def test_rejects_bad_codes(self):
        layer = quant.QuantizedLayer(np.full((4, 7), -128, np.int8), F32(1), np.zeros(4), "linear")
        with pytest.raises(CorruptModelError):
            quant.QuantizedModel([layer])


class TestContainer:
    def test_sizes(self, trained):
        m, _ = trained
        dims = [7, 64, 64, 64, 4]
        fb, qb = quant.serialize(m), quant.serialize(quant.quantize(m))
        assert len(fb) == blob_size(dims, False) == 36505
        assert len(qb) == blob_size(dims, True) == 9833
        assert len(fb) / len(qb) >= 3.5

    @given(st.lists(st.integers(1, 6), min_size=1, max_size=3))
    def test_quantized_always_smaller(self, hidden):
        m = model.init_mlp(hidden, 0)
        assert len(quant.serialize(quant.quantize(m))) < len(quant.serialize(m))

    def test_header_fields(self, trained):
        qb = quant.serialize(quant.quantize(trained[0]))
        assert qb[:4] == b"CKNN"
        assert struct.unpack_from("<HHB", qb, 4) == (1, 1, 4)
        in_dim, out_dim, act, dtype = struct.unpack_from("<IIBB", qb, 9 + 88)
        assert (in_dim, out_dim, act, dtype) == (7, 64, 1, 1)

    @pytest.mark.parametrize("quantized", [False, True])
    def test_round_trip(self, trained, quantized):
        m = trained[0]
        obj = quant.quantize(m) if quantized else m
        blob = quant.serialize(obj)
        back = quant.deserialize(blob)
        assert type(back) is type(obj)
        assert quant.serialize(back) == blob
        for a, b in zip(obj.layers, back.layers):
            w_a = a.q if quantized else a.weight
            w_b = b.q if quantized else b.weight
            assert np.array_equal(w_a, w_b) and np.array_equal(a.bias, b.bias)

    def test_bad_magic(self, trained):
        blob = bytearray(quant.serialize(trained[0]))
        blob[:4] = b"NNKC"
        with pytest.raises(ParseError) as exc:
            quant.deserialize(bytes(blob))
        assert exc.value.offset == 0

    def test_bad_version(self, trained):
        blob = bytearray(quant.serialize(trained[0]))
        blob[4] = 9
        with pytest.raises(ParseError) as exc:
            quant.deserialize(bytes(blob))
        assert exc.value.offset == 4

    @pytest.mark.parametrize("cut", [3, 50, 200, 9832])
    def test_truncation(self, trained, cut):
        blob = quant.serialize(quant.quantize(trained[0]))[:cut]
        with pytest.raises(ParseError) as exc:
            quant.deserialize(blob)
        assert exc.value.offset is not None and exc.value.offset <= cut

    def test_trailing_bytes(self, trained):
        blob = quant.serialize(trained[0]) + b"\0"
        with pytest.raises(ParseError):
            quant.deserialize(blob)

    def test_dtype_flag_mismatch(self, trained):
        blob = bytearray(quant.serialize(trained[0]))
        blob[6] = 1  # claim quantized while layers are float
        with pytest.raises(ParseError):
            quant.deserialize(bytes(blob))


class TestEmitC:
    def test_three_bytes(self):
        text = quant.emit_c_source(bytes([0x01, 0x02, 0xff]), "m")
        assert "const unsigned char m[] = {" in text
        assert "0x01, 0x02, 0xff" in text
        assert "const unsigned int m_len = 3;" in text

    def test_layout(self, trained):
        blob = quant.serialize(quant.quantize(trained[0]))
        text = quant.emit_c_source(blob, "g_model")
        rows = [l for l in text.splitlines() if l.startswith("  0x")]
        assert all(len(re.findall("0x", r)) == 12 for r in rows[:-1])
        assert f"g_model_len = {len(blob)};" in text
        assert text == quant.emit_c_source(blob, "g_model")

    def test_hex_reparse(self, trained):
        for obj in (trained[0], quant.quantize(trained[0])):
            blob = quant.serialize(obj)
            text = quant.emit_c_source(blob, "model_data")
            assert hex_bytes(text) == blob
            assert quant.parse_c_source(text) == blob

    @pytest.mark.parametrize("sym", ["1abc", "a-b", "", "int", "a b"])
    def test_invalid_identifier(self, sym):
        with pytest.raises(ValueError):
            quant.emit_c_source(b"\x00", sym)
