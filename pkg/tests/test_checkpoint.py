"""Checkpoint persistence: bit-exact round-trips and corruption detection."""

import pytest
import torch

from conftest import tiny_model_config
from driqa.checkpoint import (
    STAGE_CKDN,
    STAGE_PRETRAINED,
    config_hash,
    group_state_dicts,
    load_checkpoint,
    load_model,
    parameter_hash,
    restore_model,
    save_checkpoint,
)
from driqa.errors import DataError
from driqa.model import build_model


def test_round_trip_is_bit_exact(tmp_path):
    model = build_model(tiny_model_config(), seed=5)
    with torch.no_grad():  # make values non-trivial
        for p in model.parameters():
            p += torch.randn_like(p) * 0.01
    path = tmp_path / "ck.pt"
    save_checkpoint(path, model, STAGE_CKDN, extra={"note": 1})
    restored, stage = load_model(path)
    assert stage == STAGE_CKDN
    assert parameter_hash(restored) == parameter_hash(model)
    original = group_state_dicts(model)
    copy = group_state_dicts(restored)
    for group in original:
        for key in original[group]:
            assert torch.equal(original[group][key], copy[group][key]), (group, key)


def test_restored_model_scores_identically(tmp_path):
    model = build_model(tiny_model_config(), seed=6)
    d = torch.rand(2, 3, 64, 64)
    r = torch.rand(2, 3, 64, 64)
    save_checkpoint(tmp_path / "ck.pt", model, STAGE_PRETRAINED)
    restored, _ = load_model(tmp_path / "ck.pt")
    assert torch.equal(model.score(d, r), restored.score(d, r))
    assert torch.equal(model.teacher_score(d, r), restored.teacher_score(d, r))


def test_saving_a_snapshot_is_isolated_from_later_training(tmp_path):
    model = build_model(tiny_model_config(), seed=7)
    save_checkpoint(tmp_path / "ck.pt", model, STAGE_PRETRAINED)
    before = parameter_hash(model)
    with torch.no_grad():
        for p in model.parameters():
            p += 1.0
    restored, _ = load_model(tmp_path / "ck.pt")
    assert parameter_hash(restored) == before


def test_invalid_stage_rejected(tmp_path):
    model = build_model(tiny_model_config(), seed=8)
    with pytest.raises(ValueError):
        save_checkpoint(tmp_path / "ck.pt", model, "warmed-up")


def test_missing_and_corrupt_files_raise_data_error(tmp_path):
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "missing.pt")
    bad = tmp_path / "bad.pt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(DataError):
        load_checkpoint(bad)


def test_config_hash_mismatch_detected(tmp_path):
    model = build_model(tiny_model_config(), seed=9)
    path = tmp_path / "ck.pt"
    save_checkpoint(path, model, STAGE_CKDN)
    payload = load_checkpoint(path)
    payload["model_config"]["channel_width"] = 4  # hand-edit
    with pytest.raises(DataError):
        restore_model(payload)


def test_old_format_version_rejected(tmp_path):
    model = build_model(tiny_model_config(), seed=10)
    path = tmp_path / "ck.pt"
    save_checkpoint(path, model, STAGE_CKDN)
    payload = torch.load(path, weights_only=False)
    payload["format_version"] = 0
    torch.save(payload, path)
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_parameter_hash_sensitivity():
    a = build_model(tiny_model_config(), seed=11)
    b = build_model(tiny_model_config(), seed=11)
    assert parameter_hash(a) == parameter_hash(b)
    assert parameter_hash(a, ("theta_e1",)) == parameter_hash(b, ("theta_e1",))
    with torch.no_grad():
        next(iter(b.qse.parameters()))[0] += 1e-7
    assert parameter_hash(a) != parameter_hash(b)
    assert parameter_hash(a, ("theta_e2",)) != parameter_hash(b, ("theta_e2",))
    # the untouched groups still agree
    assert parameter_hash(a, ("theta_e1", "theta_e1h", "theta_s")) == parameter_hash(
        b, ("theta_e1", "theta_e1h", "theta_s")
    )


def test_config_hash_is_stable_across_equivalent_configs():
    assert config_hash(tiny_model_config()) == config_hash(tiny_model_config())
    assert config_hash(tiny_model_config()) != config_hash(
        tiny_model_config(channel_width=4)
    )
    # list- and tuple-valued fields hash identically
    assert config_hash(tiny_model_config(fc_hidden_sizes=[16])) == config_hash(
        tiny_model_config(fc_hidden_sizes=(16,))
    )
