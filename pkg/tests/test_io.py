import numpy as np
import pytest

from gridcrf import checkpoint as ckpt_io
from gridcrf import config as config_mod
from gridcrf import net as net_mod
from gridcrf import pgm
from gridcrf.errors import FormatError
from gridcrf.model import OffsetClass, offsets_from_spec


class TestPgm:
    def test_known_byte_value(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n1 1\n255\n" + bytes([51]))
        assert pgm.read_pgm(path)[0, 0] == pytest.approx(51 / 255)

    def test_roundtrip_16bit(self, tmp_path):
        gen = np.random.default_rng(0)
        img = gen.random((7, 5))
        path = tmp_path / "b.pgm"
        pgm.write_pgm(path, img, maxval=65535)
        back = pgm.read_pgm(path)
        assert back.shape == (7, 5)
        assert np.abs(back - img).max() <= 0.5 / 65535 + 1e-12

    def test_roundtrip_8bit(self, tmp_path):
        img = np.linspace(0, 1, 12).reshape(3, 4)
        path = tmp_path / "c.pgm"
        pgm.write_pgm(path, img, maxval=255)
        assert np.abs(pgm.read_pgm(path) - img).max() <= 0.5 / 255 + 1e-12

    def test_label_map_roundtrip(self, tmp_path):
        gen = np.random.default_rng(1)
        labels = gen.integers(0, 6, (9, 4))
        path = tmp_path / "l.pgm"
        pgm.write_label_map(path, labels)
        assert np.array_equal(pgm.read_label_map(path, 6), labels)

    def test_label_value_out_of_range(self, tmp_path):
        path = tmp_path / "l.pgm"
        pgm.write_label_map(path, np.array([[5]]))
        with pytest.raises(FormatError, match="label value"):
            pgm.read_label_map(path, 5)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P6\n1 1\n255\nxxx")
        with pytest.raises(FormatError, match="magic"):
            pgm.read_pgm(path)

    def test_truncated_pixels(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\nab")
        with pytest.raises(FormatError, match="pixel data"):
            pgm.read_pgm(path)

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "comment.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n" + bytes([0, 255]))
        img = pgm.read_pgm(path)
        assert img[0].tolist() == [0.0, 1.0]

    def test_bad_maxval(self, tmp_path):
        path = tmp_path / "mv.pgm"
        path.write_bytes(b"P5\n1 1\n70000\n" + bytes([0, 0]))
        with pytest.raises(FormatError, match="maxval"):
            pgm.read_pgm(path)


class TestCheckpoint:
    def _random_checkpoint(self, seed=0):
        gen = np.random.default_rng(seed)
        spec = net_mod.make_spec("desk", 4)
        params = net_mod.init_params(spec, seed=seed)
        for p in params:
            p.bias[:] = gen.normal(0, 1, p.bias.shape)
        classes = offsets_from_spec("1,0;0,1;2,1")
        tables = [gen.normal(0, 1, (4, 4)) for _ in classes]
        return ckpt_io.Checkpoint(num_labels=4, spec=spec, params=params,
                                  classes=classes, tables=tables)

    def test_roundtrip_bit_exact(self, tmp_path):
        ckpt = self._random_checkpoint()
        path = tmp_path / "m.ccrf"
        ckpt_io.save_checkpoint(path, ckpt)
        back = ckpt_io.load_checkpoint(path)
        assert back.num_labels == 4
        assert back.spec == ckpt.spec
        for a, b in zip(back.params, ckpt.params):
            assert a.weight.tobytes() == b.weight.tobytes()
            assert a.bias.tobytes() == b.bias.tobytes()
        assert back.classes == ckpt.classes
        for a, b in zip(back.tables, ckpt.tables):
            assert a.tobytes() == b.tobytes()

    def test_save_load_save_identical_bytes(self, tmp_path):
        ckpt = self._random_checkpoint(seed=3)
        p1, p2 = tmp_path / "a.ccrf", tmp_path / "b.ccrf"
        ckpt_io.save_checkpoint(p1, ckpt)
        ckpt_io.save_checkpoint(p2, ckpt_io.load_checkpoint(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_magic_rejected(self, tmp_path):
        path = tmp_path / "x.ccrf"
        path.write_bytes(b"XXRF" + b"\x00" * 64)
        with pytest.raises(FormatError, match="magic"):
            ckpt_io.load_checkpoint(path)

    def test_version_rejected(self, tmp_path):
        path = tmp_path / "x.ccrf"
        path.write_bytes(b"CCRF" + (99).to_bytes(4, "little") + b"\x00" * 32)
        with pytest.raises(FormatError, match="version"):
            ckpt_io.load_checkpoint(path)

    def test_truncation_names_section(self, tmp_path):
        ckpt = self._random_checkpoint()
        path = tmp_path / "m.ccrf"
        ckpt_io.save_checkpoint(path, ckpt)
        data = path.read_bytes()
        path.write_bytes(data[:len(data) - 9])
        with pytest.raises(FormatError, match="table"):
            ckpt_io.load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        ckpt = self._random_checkpoint()
        path = tmp_path / "m.ccrf"
        ckpt_io.save_checkpoint(path, ckpt)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError, match="trailing"):
            ckpt_io.load_checkpoint(path)

    def test_paper_preset_roundtrip(self, tmp_path):
        spec = net_mod.make_spec("paper", 20)
        params = [net_mod.ConvParams(np.zeros((l.out_channels, l.in_channels,
                                               l.kernel_size, l.kernel_size)),
                                     np.zeros(l.out_channels))
                  for l in spec.conv_layers()]
        ckpt = ckpt_io.Checkpoint(20, spec, params, [OffsetClass(1, 0)],
                                  [np.zeros((20, 20))])
        path = tmp_path / "t.ccrf"
        ckpt_io.save_checkpoint(path, ckpt)
        assert ckpt_io.load_checkpoint(path).spec == spec


class TestConfig:
    def test_defaults(self):
        cfg = config_mod.load_config()
        assert cfg.height == 48 and cfg.width == 32 and cfg.label_count == 6
        assert cfg.variant == "pcd" and cfg.mode == "joint"

    def test_every_key_documented_with_default(self):
        from dataclasses import fields
        cfg_fields = {f.name for f in fields(config_mod.RunConfig)}
        assert cfg_fields == set(config_mod.KEY_DOCS)
        for key, (default, doc) in config_mod.KEY_DOCS.items():
            assert doc.strip()
            assert getattr(config_mod.RunConfig(), key) == default

    def test_parse_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nseed = 7\nbase_rate = 0.5 # inline\n"
                        "variant = cd2\n\n")
        cfg = config_mod.load_config(str(path))
        assert cfg.seed == 7
        assert cfg.base_rate == 0.5
        assert cfg.parse_variant() == ("cd", 2)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("not_a_key = 3\n")
        with pytest.raises(FormatError, match="not_a_key"):
            config_mod.load_config(str(path))

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = banana\n")
        with pytest.raises(FormatError, match="seed"):
            config_mod.load_config(str(path))

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 7\n")
        cfg = config_mod.load_config(str(path), overrides={"seed": 9})
        assert cfg.seed == 9

    def test_paper_preset(self):
        cfg = config_mod.load_config(overrides={"preset": "paper"})
        assert (cfg.height, cfg.width, cfg.label_count) == (330, 130, 20)
        assert cfg.train_count == 2000 and cfg.test_count == 500
        assert cfg.offsets == "paper64" and cfg.net == "paper"

    def test_explicit_key_beats_preset(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("preset = paper\nlabel_count = 12\n")
        cfg = config_mod.load_config(str(path))
        assert cfg.label_count == 12
        assert cfg.height == 330

    def test_bad_variant(self):
        with pytest.raises(FormatError, match="variant"):
            config_mod.load_config(overrides={"variant": "cd0"})
