import json

import numpy as np
import pytest

from diffpath.dpwn import (MAGIC, VERSION, load_model, model_from_header,
                           read_container, write_container, write_model)
from diffpath.errors import (BadMagicError, FormatError, HeaderError,
                             ShapeChainError, TruncatedFileError,
                             UnsupportedVersionError)
from diffpath.pathways import (LayerPathwayAggregate, PathwayOptions,
                               PathwayResult, load_result, save_result)


def small_file(path, seed=0):
    rng = np.random.default_rng(seed)
    tensors = {
        "a/weight": rng.normal(size=(2, 1, 3, 3)).astype(np.float32),
        "a/bias": rng.normal(size=2).astype(np.float32),
    }
    arch = [{"name": "a", "kind": "conv",
             "params": {"cout": 2, "cin": 1, "k": 3, "pad": 1}}]
    write_container(path, tensors, arch=arch, input_shape=(1, 4, 4), classes=2)
    return tensors


class TestRoundTrip:
    def test_container(self, tmp_path):
        path = tmp_path / "w.dpwn"
        tensors = small_file(path)
        header, got = read_container(path)
        assert header["classes"] == 2
        assert header["input_shape"] == [1, 4, 4]
        assert list(got) == list(tensors)
        for name in tensors:
            assert got[name].dtype == np.float32
            assert got[name].tobytes() == tensors[name].tobytes()

    def test_model(self, tmp_path, toy):
        model, weights = toy
        path = tmp_path / "toy.dpwn"
        write_model(path, model, weights)
        loaded, got = load_model(path)
        assert [l.name for l in loaded.layers] == [l.name for l in model.layers]
        assert [l.kind for l in loaded.layers] == [l.kind for l in model.layers]
        assert loaded.input_shape == model.input_shape
        assert loaded.classes == model.classes
        assert loaded.pathway_layers == model.pathway_layers
        for k in weights:
            assert got[k].tobytes() == weights[k].tobytes()

    def test_pathway_result(self, tmp_path):
        rng = np.random.default_rng(3)
        aggs = [LayerPathwayAggregate(0, "conv1", rng.normal(size=(4, 4, 2)).astype(np.float32)),
                LayerPathwayAggregate(2, "maxpl1", rng.normal(size=(4, 4, 2)).astype(np.float32))]
        res = PathwayResult(aggs, PathwayOptions(channel_mask=1, chunk=16, threads=2),
                            model_name="toy_net", input_shape=(1, 4, 4))
        path = tmp_path / "agg.dpwn"
        save_result(res, path)
        back = load_result(path)
        assert back.model_name == "toy_net"
        assert back.input_shape == (1, 4, 4)
        # value-shaping options persist; execution knobs reset to defaults
        assert back.options.channel_mask == 1
        assert back.options.masks is True
        assert back.options.dtype == "f32"
        assert (back.options.chunk, back.options.threads) == (64, 1)
        assert back.layer_names() == ["conv1", "maxpl1"]
        for a, b in zip(res.aggregates, back.aggregates):
            assert a.layer == b.layer
            assert a.values.tobytes() == b.values.tobytes()

    def test_rewrite_is_byte_identical(self, tmp_path, toy):
        model, weights = toy
        p1, p2 = tmp_path / "a.dpwn", tmp_path / "b.dpwn"
        write_model(p1, model, weights)
        write_model(p2, model, weights)
        assert p1.read_bytes() == p2.read_bytes()


def reheader(raw: bytes, header: dict) -> bytes:
    hraw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    hlen = int.from_bytes(raw[8:16], "little")
    return raw[:8] + len(hraw).to_bytes(8, "little") + hraw + raw[16 + hlen:]


class TestTypedErrors:
    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x"
        small_file(p)
        raw = p.read_bytes()
        p.write_bytes(b"JUNK" + raw[4:])
        with pytest.raises(BadMagicError):
            read_container(p)

    def test_unsupported_version(self, tmp_path):
        p = tmp_path / "x"
        small_file(p)
        raw = p.read_bytes()
        p.write_bytes(raw[:4] + (9).to_bytes(4, "little") + raw[8:])
        with pytest.raises(UnsupportedVersionError):
            read_container(p)

    def test_truncated_prefix(self, tmp_path):
        p = tmp_path / "x"
        p.write_bytes(b"DPWN\x01")
        with pytest.raises(TruncatedFileError):
            read_container(p)

    def test_header_len_past_eof(self, tmp_path):
        p = tmp_path / "x"
        small_file(p)
        raw = p.read_bytes()
        p.write_bytes(raw[:8] + (10 ** 9).to_bytes(8, "little") + raw[16:])
        with pytest.raises(TruncatedFileError):
            read_container(p)

    def test_header_not_json(self, tmp_path):
        p = tmp_path / "x"
        small_file(p)
        raw = p.read_bytes()
        hlen = int.from_bytes(raw[8:16], "little")
        p.write_bytes(raw[:16] + b"\xff" * hlen + raw[16 + hlen:])
        with pytest.raises(HeaderError):
            read_container(p)

    def test_header_not_object(self, tmp_path):
        p = tmp_path / "x"
        small_file(p)
        raw = p.read_bytes()
        hraw = b"[1,2,3]"
        p.write_bytes(raw[:8] + len(hraw).to_bytes(8, "little") + hraw)
        with pytest.raises(HeaderError):
            read_container(p)

    @pytest.mark.parametrize("key", ["arch", "input_shape", "classes", "tensors"])
    def test_missing_key(self, tmp_path, key):
        p = tmp_path / "x"
        small_file(p)
        raw = p.read_bytes()
        hlen = int.from_bytes(raw[8:16], "little")
        header = json.loads(raw[16:16 + hlen])
        del header[key]
        p.write_bytes(reheader(raw, header))
        with pytest.raises(HeaderError):
            read_container(p)

    def bad_header(self, p, mutate):
        small_file(p)
        raw = p.read_bytes()
        hlen = int.from_bytes(raw[8:16], "little")
        header = json.loads(raw[16:16 + hlen])
        mutate(header)
        p.write_bytes(reheader(raw, header))
        return p

    def test_tensor_entry_errors(self, tmp_path):
        cases = [
            (HeaderError, lambda h: h.update(tensors={})),          # not a list
            (HeaderError, lambda h: h["tensors"].__setitem__(0, {"name": "a"})),
            (HeaderError, lambda h: h["tensors"][0].update(name=7)),
            (HeaderError, lambda h: h["tensors"][1].update(name=h["tensors"][0]["name"])),
            (HeaderError, lambda h: h["tensors"][0].update(shape=[])),
            (HeaderError, lambda h: h["tensors"][0].update(shape=[2, 0, 3, 3])),
            (HeaderError, lambda h: h["tensors"][0].update(shape=[2.5])),
            (HeaderError, lambda h: h["tensors"][0].update(offset=-4)),
            (HeaderError, lambda h: h["tensors"][0].update(len=h["tensors"][0]["len"] - 4)),
            (TruncatedFileError, lambda h: h["tensors"][1].update(offset=10 ** 6)),
        ]
        for i, (exc, mutate) in enumerate(cases):
            p = self.bad_header(tmp_path / str(i), mutate)
            with pytest.raises(exc):
                read_container(p)

    def test_payload_truncated(self, tmp_path):
        p = tmp_path / "x"
        small_file(p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-8])
        with pytest.raises(TruncatedFileError):
            read_container(p)

    def test_model_header_errors(self):
        with pytest.raises(HeaderError):
            model_from_header({"arch": [], "input_shape": [1, 4, 4], "classes": 2})
        with pytest.raises(HeaderError):
            model_from_header({"arch": [{"name": "a", "kind": "warp"}],
                               "input_shape": [1, 4, 4], "classes": 2})
        with pytest.raises(HeaderError):
            model_from_header({"arch": [{"kind": "relu"}],
                               "input_shape": [1, 4, 4], "classes": 2})
        with pytest.raises(HeaderError):
            model_from_header({"arch": [{"name": "r", "kind": "relu"}],
                               "input_shape": [4, 4], "classes": 2})

    def test_inconsistent_arch_chain(self):
        arch = [{"name": "a", "kind": "conv",
                 "params": {"cout": 2, "cin": 3, "k": 3, "pad": 1}}]  # cin != 1
        with pytest.raises(ShapeChainError):
            model_from_header({"arch": arch, "input_shape": [1, 4, 4], "classes": 2})

    def test_load_model_missing_tensor(self, tmp_path, toy):
        model, weights = toy
        p = tmp_path / "m.dpwn"
        partial = {k: v for k, v in weights.items() if k != "conv2/bias"}
        write_container(p, partial, arch=model.to_header_arch(),
                        input_shape=model.input_shape, classes=model.classes)
        with pytest.raises(ShapeChainError):
            load_model(p)

    def test_load_model_wrong_tensor_shape(self, tmp_path, toy):
        model, weights = toy
        p = tmp_path / "m.dpwn"
        bad = dict(weights)
        bad["conv1/weight"] = np.zeros((2, 1, 5, 5), np.float32)
        write_container(p, bad, arch=model.to_header_arch(),
                        input_shape=model.input_shape, classes=model.classes)
        with pytest.raises(ShapeChainError):
            load_model(p)


class TestMalformedCorpus:
    """Every crafted malformed file must raise a FormatError subclass."""

    def build_corpus(self, tmp_path):
        base = tmp_path / "base.dpwn"
        small_file(base, seed=1)
        raw = base.read_bytes()
        hlen = int.from_bytes(raw[8:16], "little")
        header = json.loads(raw[16:16 + hlen])
        rng = np.random.default_rng(99)
        corpus = []

        for _ in range(25):  # too short for the fixed prefix
            n = int(rng.integers(0, 16))
            corpus.append(bytes(rng.integers(0, 256, n, dtype=np.uint8)))
        for _ in range(20):  # wrong magic
            m = bytes(rng.integers(0, 256, 4, dtype=np.uint8))
            if m == MAGIC:
                m = b"XXXX"
            corpus.append(m + raw[4:])
        for _ in range(10):  # wrong version
            v = int(rng.integers(2, 2 ** 31))
            corpus.append(raw[:4] + v.to_bytes(4, "little") + raw[8:])
        # every possible truncation of a valid file
        for n in range(16, len(raw)):
            corpus.append(raw[:n])
        for _ in range(20):  # garbage header bytes of the declared length
            hb = bytes(rng.integers(0, 256, hlen, dtype=np.uint8))
            corpus.append(raw[:16] + hb + raw[16 + hlen:])
        # structurally wrong JSON headers
        muts = [
            {},
            {"arch": [], "input_shape": [1], "classes": 1},
            {**header, "tensors": 5},
            {**header, "tensors": [{"name": "t", "shape": [1], "offset": 0, "len": 3}]},
            {**header, "tensors": [{"name": "t", "shape": [-1], "offset": 0, "len": 4}]},
        ]
        for m in muts:
            corpus.append(reheader(raw, m))
        return corpus

    def test_all_rejected_with_typed_errors(self, tmp_path):
        corpus = self.build_corpus(tmp_path)
        assert len(corpus) > 100
        rejected = 0
        for i, blob in enumerate(corpus):
            p = tmp_path / f"c{i}"
            p.write_bytes(blob)
            with pytest.raises(FormatError):
                read_container(p)
            rejected += 1
        assert rejected == len(corpus)

    def test_random_mutations_never_raise_untyped(self, tmp_path):
        # single-byte flips anywhere: either still parseable or FormatError,
        # never a stray exception type
        base = tmp_path / "base.dpwn"
        small_file(base, seed=2)
        raw = bytearray(base.read_bytes())
        rng = np.random.default_rng(7)
        for i in range(300):
            pos = int(rng.integers(0, len(raw)))
            old = raw[pos]
            raw[pos] = int(rng.integers(0, 256))
            p = tmp_path / "mut"
            p.write_bytes(bytes(raw))
            try:
                read_container(p)
            except FormatError:
                pass
            raw[pos] = old
