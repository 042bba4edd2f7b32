import json

import numpy as np
import pytest

from trifuse.data import (
    Dataset,
    DatasetError,
    EMOTION_LABELS,
    SynthSpec,
    TextSequence,
    collate,
    generate_synthetic,
    label_code,
    label_name,
    load_jsonl,
    make_batches,
    save_jsonl,
)
from trifuse.metrics import evaluate
from trifuse.model import forward_batch, forward_full, init_model_params
from trifuse.training import TrainConfig, AugmentationConfig, train

from conftest import fresh_state, tiny_config, tiny_dataset


class TestLabels:
    def test_exactly_seven_in_order(self):
        assert EMOTION_LABELS == ("joy", "anger", "sadness", "fear",
                                  "surprise", "disgust", "neutral")

    def test_bijection(self):
        for i, name in enumerate(EMOTION_LABELS):
            assert label_code(name) == i
            assert label_name(i) == name

    def test_unknown_label_names_legal_set(self):
        with pytest.raises(DatasetError, match="joy.*neutral"):
            label_code("happiness")


class TestJsonlRoundTrip:
    def test_empty_sample_section_is_valid(self, tmp_path):
        p = tmp_path / "empty.jsonl"
        p.write_text('{"format":"trifuse-mmds","version":1,"d_img":3,'
                     '"d_audio":2,"text_mode":"embeddings","d_text":4}\n')
        ds = load_jsonl(p)
        assert ds.samples == []
        assert ds.d_img == 3

    def test_generate_save_load_roundtrip(self, tmp_path):
        ds = tiny_dataset(n_train=8, n_val=7, seed=5)
        p = tmp_path / "ds.jsonl"
        save_jsonl(ds, p)
        back = load_jsonl(p)
        assert back.splits == ds.splits
        assert len(back.samples) == len(ds.samples)
        for a, b in zip(ds.samples, back.samples):
            assert a.id == b.id and a.label == b.label
            assert np.array_equal(a.image.features, b.image.features)
            assert np.array_equal(a.audio.features, b.audio.features)
            assert np.array_equal(a.text.embeddings, b.text.embeddings)

    def test_token_mode_roundtrip(self, tmp_path):
        ds = tiny_dataset(n_train=7, seed=1, text_mode="tokens",
                          vocab_size=13, d_text=0)
        p = tmp_path / "tok.jsonl"
        save_jsonl(ds, p)
        back = load_jsonl(p)
        for a, b in zip(ds.samples, back.samples):
            assert np.array_equal(a.text.token_ids, b.text.token_ids)

    def test_save_is_byte_stable(self, tmp_path):
        ds = tiny_dataset(n_train=7, seed=9)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_jsonl(ds, p1)
        save_jsonl(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestLoaderErrors:
    HEADER = ('{"format":"trifuse-mmds","version":1,"d_img":2,"d_audio":2,'
              '"text_mode":"embeddings","d_text":2}\n')

    def sample_line(self, sid="a", label="joy", d=2):
        return json.dumps({
            "id": sid, "label": label,
            "img": [[0.0] * d], "audio": [[0.0] * d], "text_emb": [[0.0] * d],
        }) + "\n"

    def test_bad_label_reports_line_and_legal_labels(self, tmp_path):
        p = tmp_path / "x.jsonl"
        p.write_text(self.HEADER + self.sample_line() +
                     self.sample_line(sid="b", label="happiness"))
        with pytest.raises(DatasetError, match="joy"):
            load_jsonl(p)
        with pytest.raises(DatasetError, match="line 3"):
            load_jsonl(p)

    def test_malformed_line_reports_number(self, tmp_path):
        p = tmp_path / "x.jsonl"
        p.write_text(self.HEADER + "{not json\n")
        with pytest.raises(DatasetError, match="line 2"):
            load_jsonl(p)

    def test_duplicate_id_rejected(self, tmp_path):
        p = tmp_path / "x.jsonl"
        p.write_text(self.HEADER + self.sample_line("dup") + self.sample_line("dup"))
        with pytest.raises(DatasetError, match="duplicate"):
            load_jsonl(p)

    def test_dim_mismatch_rejected(self, tmp_path):
        p = tmp_path / "x.jsonl"
        p.write_text(self.HEADER + self.sample_line(d=3))
        with pytest.raises(DatasetError, match="img"):
            load_jsonl(p)

    def test_wrong_version_rejected(self, tmp_path):
        p = tmp_path / "x.jsonl"
        p.write_text(self.HEADER.replace('"version":1', '"version":2'))
        with pytest.raises(DatasetError, match="version"):
            load_jsonl(p)

    def test_split_with_unknown_id_rejected(self, tmp_path):
        p = tmp_path / "x.jsonl"
        header = json.loads(self.HEADER)
        header["splits"] = {"train": ["ghost"]}
        p.write_text(json.dumps(header) + "\n")
        with pytest.raises(DatasetError, match="ghost"):
            load_jsonl(p)

    def test_overlapping_splits_rejected(self, tmp_path):
        p = tmp_path / "x.jsonl"
        header = json.loads(self.HEADER)
        header["splits"] = {"train": ["a"], "val": ["a"]}
        p.write_text(json.dumps(header) + "\n" + self.sample_line("a"))
        with pytest.raises(DatasetError, match="more than one split"):
            load_jsonl(p)


class TestSynthGenerator:
    def test_deterministic_bytes(self, tmp_path):
        spec = SynthSpec(n_train=10, n_val=7, seed=42)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_jsonl(generate_synthetic(spec), p1)
        save_jsonl(generate_synthetic(SynthSpec(n_train=10, n_val=7, seed=42)), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_balanced_labels_per_split(self):
        ds = generate_synthetic(SynthSpec(n_train=21, n_val=14, seed=0))
        for split in ("train", "val"):
            labels = [s.label for s in ds.split(split)]
            counts = np.bincount(labels, minlength=7)
            assert counts.max() - counts.min() <= 1

    def test_informativeness_range_validation(self):
        with pytest.raises(ValueError, match="informativeness"):
            SynthSpec(n_train=7, informativeness=(2.0, 0.0, 0.0)).validate()

    def test_zero_informativeness_means_no_class_signal(self):
        ds = generate_synthetic(SynthSpec(
            n_train=700, seed=1, informativeness=(0.0, 0.0, 0.0)))
        by_class = {}
        for s in ds.split("train"):
            by_class.setdefault(s.label, []).append(s.image.features.mean(axis=0))
        means = np.stack([np.mean(v, axis=0) for v in by_class.values()])
        # Class-conditional means collapse to the global (zero) mean.
        assert np.abs(means).max() < 0.2

    def test_token_mode_class_correlation(self):
        ds = generate_synthetic(SynthSpec(
            n_train=70, seed=3, text_mode="tokens", vocab_size=21, d_text=0,
            informativeness=(0.0, 0.0, 1.0), text_len=(8, 8)))
        for s in ds.split("train"):
            assert np.all(s.text.token_ids % 7 == s.label)

    def test_stratification_minimum(self):
        with pytest.raises(ValueError, match="stratified"):
            SynthSpec(n_train=6).validate()

    def test_single_informative_modality_wins_its_ablation(self):
        # informativeness (1,0,0): the image-only ablation must beat the
        # audio-only and text-only ones, 3-seed mean.
        cfg = tiny_config(d_model=8, n_heads=1, d_img=5, d_audio=4, d_text=6)
        ds = generate_synthetic(SynthSpec(
            n_train=84, n_val=21, n_test=42, d_img=5, d_audio=4, d_text=6,
            informativeness=(1.0, 0.0, 0.0), seed=23))
        means = {}
        for mode in ("image_only", "audio_only", "text_only"):
            accs = []
            for seed in (1, 2, 3):
                tc = TrainConfig(epochs=8, batch_size=16, seed=seed,
                                 learning_rate=1e-3,
                                 augmentation=AugmentationConfig(0.0, 0.0))
                state = fresh_state(cfg, seed)
                res = train(state.params, cfg, ds.split("train"),
                            ds.split("val"), tc, mode=mode, state=state)
                accs.append(evaluate(res.params, cfg, ds.split("test"),
                                     16, mode).accuracy)
            means[mode] = float(np.mean(accs))
        assert means["image_only"] > means["audio_only"]
        assert means["image_only"] > means["text_only"]

    def test_higher_informativeness_never_hurts_unimodal_accuracy(self):
        # Directional monotonicity at the knob extremes, 3-seed mean.
        cfg = tiny_config(d_model=8, n_heads=1, d_img=5, d_audio=4, d_text=6)
        accs = {}
        for inf in (0.0, 1.0):
            per_seed = []
            for seed in (1, 2, 3):
                ds = generate_synthetic(SynthSpec(
                    n_train=84, n_val=21, n_test=42, d_img=5, d_audio=4, d_text=6,
                    informativeness=(inf, 0.0, 0.0), seed=17))
                tc = TrainConfig(epochs=8, batch_size=16, seed=seed,
                                 learning_rate=1e-3,
                                 augmentation=AugmentationConfig(0.0, 0.0))
                state = fresh_state(cfg, seed)
                res = train(state.params, cfg, ds.split("train"), ds.split("val"),
                            tc, mode="image_only", state=state)
                per_seed.append(evaluate(res.params, cfg, ds.split("test"),
                                         16, "image_only").accuracy)
            accs[inf] = float(np.mean(per_seed))
        assert accs[1.0] >= accs[0.0]


class TestBatching:
    def test_batch_sizes_10_into_4(self):
        ds = tiny_dataset(n_train=10, seed=6)
        batches = make_batches(ds.split("train"), 4)
        assert [b.size for b in batches] == [4, 4, 2]

    def test_mask_counts_equal_lengths(self):
        ds = tiny_dataset(n_train=9, seed=2)
        for batch in make_batches(ds.split("train"), 4):
            for i, sid in enumerate(batch.ids):
                s = ds.sample(sid)
                assert batch.img_mask[i].sum() == s.image.features.shape[0]
                assert batch.audio_mask[i].sum() == s.audio.features.shape[0]
                assert batch.text_mask[i].sum() == s.text.length

    def test_padded_positions_hold_zeros(self):
        ds = tiny_dataset(n_train=8, seed=3)
        for batch in make_batches(ds.split("train"), 8):
            assert np.all(batch.img[~batch.img_mask] == 0.0)
            assert np.all(batch.audio[~batch.audio_mask] == 0.0)

    def test_shuffle_is_seeded(self):
        ds = tiny_dataset(n_train=16, seed=4)
        ids1 = [b.ids for b in make_batches(ds.split("train"), 4,
                                            np.random.default_rng(5))]
        ids2 = [b.ids for b in make_batches(ds.split("train"), 4,
                                            np.random.default_rng(5))]
        ids3 = [b.ids for b in make_batches(ds.split("train"), 4,
                                            np.random.default_rng(6))]
        assert ids1 == ids2
        assert ids1 != ids3

    def test_batched_loss_equals_mean_of_single_losses(self, rng):
        cfg = tiny_config()
        params = init_model_params(cfg, np.random.default_rng(12))
        ds = tiny_dataset(n_train=10, seed=13)
        samples = ds.split("train")
        for _ in range(5):
            pick = [samples[i] for i in rng.choice(len(samples),
                                                   size=rng.integers(2, 8),
                                                   replace=False)]
            batch = collate(pick)
            _, batched = forward_batch(batch, params, cfg)
            singles = [forward_full(s, params, cfg)[1].item() for s in pick]
            assert abs(batched.item() - np.mean(singles)) < 1e-8

    def test_empty_split_rejected(self):
        with pytest.raises(DatasetError):
            make_batches([], 4)


class TestDatasetSplits:
    def test_unknown_split_error(self):
        ds = tiny_dataset(n_train=7)
        with pytest.raises(DatasetError, match="nope"):
            ds.split("nope")

    def test_text_sequence_exclusivity(self):
        with pytest.raises(DatasetError):
            TextSequence(embeddings=np.zeros((2, 3)), token_ids=np.array([1]))
        with pytest.raises(DatasetError):
            TextSequence()
