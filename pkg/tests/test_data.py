"""
Tests for synthetic data generation, the JSON-lines dataset format and the
stratified split.
"""
import json

import numpy as np
import pytest
from sklearn.neighbors import NearestCentroid

from models.dataset import Dataset, Utterance, load_dataset, save_dataset
from models.errors import ContractViolation, DatasetParseError, SchemaError, UnknownLabelError, ValidationError
from models.synth_spec import SynthSpec
from services.dataset_service import split, synth_dataset, synth_factors


def write_lines(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write((record if isinstance(record, str) else json.dumps(record)) + "\n")


def record(uid, dim, frames=2):
    return {"utterance_id": uid, "speaker_id": "s", "accent_id": "a", "features": [[0.5] * dim] * frames}


class TestSynthDataset:

    def test_default_cardinality(self):
        data = synth_dataset(SynthSpec())
        assert len(data) == 6 * 4 * 10
        assert len(data.accents()) == 6
        assert len(data.speakers()) == 24
        assert all(u.features.shape == (20, 8) for u in data)

    def test_ids(self, tiny_dataset):
        u = tiny_dataset.utterances[0]
        assert (u.utterance_id, u.speaker_id, u.accent_id) == ("acc00_spk00_utt000", "acc00_spk00", "acc00")

    def test_same_seed_is_bit_identical(self, tiny_spec):
        assert synth_dataset(tiny_spec).utterances == synth_dataset(tiny_spec).utterances

    def test_different_seed_differs(self, tiny_spec):
        other = SynthSpec.from_mapping({**tiny_spec.to_dict(), "seed": 7})
        assert synth_dataset(tiny_spec).utterances != synth_dataset(other).utterances

    def test_no_within_speaker_variation(self, tiny_spec):
        # GIVEN: no utterance factor and no noise
        spec = SynthSpec.from_mapping({**tiny_spec.to_dict(), "utterance_scale": 0.0, "noise_scale": 0.0})

        # WHEN: generating
        data = synth_dataset(spec)

        # THEN: every utterance of a speaker is the same matrix
        by_speaker = {}
        for u in data:
            by_speaker.setdefault(u.speaker_id, []).append(u.features)
        for matrices in by_speaker.values():
            for m in matrices[1:]:
                assert np.array_equal(m, matrices[0])

    def test_accent_factors_separate_accents(self):
        spec = SynthSpec()
        factors = synth_factors(spec)
        points = np.repeat(factors["accents"], spec.speakers_per_accent, axis=0)
        labels = np.repeat(np.arange(spec.n_accents), spec.speakers_per_accent)
        classifier = NearestCentroid().fit(points, labels)
        assert np.mean(classifier.predict(points) == labels) == 1.0

    def test_invalid_synth_spec(self):
        with pytest.raises(ValidationError) as excinfo:
            synth_dataset(SynthSpec(n_accents=0, noise_scale=-1.0))
        assert set(excinfo.value.fields) == {"n_accents", "noise_scale"}

    def test_synth_spec_unknown_key(self):
        with pytest.raises(ValidationError):
            SynthSpec.from_mapping({"accents": 3})


class TestDatasetFile:

    def test_round_trip(self, tiny_dataset, temp_workspace):
        path = temp_workspace / "data.jsonl"
        save_dataset(tiny_dataset, path)
        loaded = load_dataset(path)
        assert loaded.ids() == tiny_dataset.ids()
        assert loaded.utterances == tiny_dataset.utterances

    def test_one_line_per_utterance(self, tiny_dataset, temp_workspace):
        path = temp_workspace / "data.jsonl"
        save_dataset(tiny_dataset, path)
        assert len(path.read_text().splitlines()) == 24

    def test_inconsistent_feature_dim_names_both_lines(self, temp_workspace):
        path = temp_workspace / "data.jsonl"
        write_lines(path, [record("u1", 8), record("u2", 9)])
        with pytest.raises(ValidationError, match="line 2 .*line 1"):
            load_dataset(path)

    def test_empty_file(self, temp_workspace):
        path = temp_workspace / "data.jsonl"
        path.write_text("")
        data = load_dataset(path)
        assert len(data) == 0
        assert data.feature_dim is None

    def test_blank_lines_are_skipped(self, temp_workspace):
        path = temp_workspace / "data.jsonl"
        write_lines(path, [record("u1", 3), "", record("u2", 3)])
        assert load_dataset(path).ids() == ["u1", "u2"]

    def test_malformed_line(self, temp_workspace):
        path = temp_workspace / "data.jsonl"
        write_lines(path, [record("u1", 3), "{not json"])
        with pytest.raises(DatasetParseError) as excinfo:
            load_dataset(path)
        assert excinfo.value.line_number == 2

    def test_missing_field(self, temp_workspace):
        path = temp_workspace / "data.jsonl"
        broken = record("u1", 3)
        del broken["accent_id"]
        write_lines(path, [broken])
        with pytest.raises(SchemaError) as excinfo:
            load_dataset(path)
        assert excinfo.value.fields == ["accent_id"]

    def test_duplicate_id(self, temp_workspace):
        path = temp_workspace / "data.jsonl"
        write_lines(path, [record("u1", 3), record("u1", 3)])
        with pytest.raises(ValidationError, match="repeats"):
            load_dataset(path)

    def test_non_finite_features(self, temp_workspace):
        path = temp_workspace / "data.jsonl"
        write_lines(path, ['{"utterance_id": "u", "speaker_id": "s", "accent_id": "a", "features": [[NaN]]}'])
        with pytest.raises(DatasetParseError):
            load_dataset(path)

    def test_missing_file(self, temp_workspace):
        with pytest.raises(FileNotFoundError):
            load_dataset(temp_workspace / "absent.jsonl")


class TestDataset:

    def test_get_unknown(self, tiny_dataset):
        with pytest.raises(UnknownLabelError):
            tiny_dataset.get("nobody")

    def test_mixed_dims_rejected(self):
        with pytest.raises(ValidationError):
            Dataset([Utterance("a", "s", "x", np.zeros((2, 3))), Utterance("b", "s", "x", np.zeros((2, 4)))])

    def test_with_utterance_keeps_existing_dataset(self, tiny_dataset):
        u = tiny_dataset.utterances[3]
        assert tiny_dataset.with_utterance(u) is tiny_dataset


class TestSplit:

    def test_zero_fraction(self, tiny_dataset):
        train, validation = split(tiny_dataset, 0.0, 1)
        assert len(validation) == 0
        assert train.ids() == tiny_dataset.ids()

    def test_per_stratum_floor(self):
        # GIVEN: 24 speaker/accent strata of 10 utterances
        data = synth_dataset(SynthSpec())

        # WHEN: holding out 10%
        train, validation = split(data, 0.1, 3)

        # THEN: one utterance per stratum is held out
        assert len(validation) == 24
        assert len(train) == 216
        assert sorted(u.speaker_id for u in validation) == data.speakers()

    def test_disjoint_and_complete(self, tiny_dataset):
        train, validation = split(tiny_dataset, 0.5, 9)
        assert set(train.ids()).isdisjoint(validation.ids())
        assert sorted(train.ids() + validation.ids()) == sorted(tiny_dataset.ids())

    def test_same_seed_same_split(self, tiny_dataset):
        assert split(tiny_dataset, 0.5, 4)[1].ids() == split(tiny_dataset, 0.5, 4)[1].ids()

    def test_fraction_out_of_range(self, tiny_dataset):
        for fraction in (-0.1, 1.0, 1.5):
            with pytest.raises(ContractViolation):
                split(tiny_dataset, fraction, 0)
