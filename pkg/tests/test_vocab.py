"""Vocabulary construction, sizes and serialization."""

import pytest

from scoretok import (
    BOS_ID,
    EOS_ID,
    MASK_ID,
    PAD_ID,
    SEP_ID,
    PreprocessConfig,
    SchemeId,
    SchemeKind,
    TokenType,
    Vocabulary,
    build_vocabulary,
)


SIZES = {
    "REMI": 5 + 1 + 32 + 88 + 8 + 20,        # = 154
    "TSD": 5 + 20 + 88 + 8 + 20,             # = 141
    "MIDILike": 5 + 20 + 88 + 88 + 8,        # = 209
    "PVm:REMI": 5 + 1 + 32 + 88 * 8 + 20,
    "PVm:TSD": 5 + 20 + 88 * 8 + 20,
    "PVDm:REMI": 5 + 1 + 32 + 88 * 8 * 20,
    "PVDm:TSD": 5 + 20 + 88 * 8 * 20,
}


@pytest.mark.parametrize("scheme_text,expected", sorted(SIZES.items()))
def test_sizes(scheme_text, expected):
    vocab = build_vocabulary(SchemeId.parse(scheme_text))
    assert len(vocab) == expected


def test_remi_size_is_154():
    assert len(build_vocabulary(SchemeId(SchemeKind.REMI))) == 154


def test_pvm_merged_token_count():
    vocab = build_vocabulary(SchemeId.parse("PVm:REMI"))
    assert len(vocab.ids_of_type(TokenType.MERGED)) == 88 * 8
    assert not vocab.ids_of_type(TokenType.PITCH)
    assert not vocab.ids_of_type(TokenType.VELOCITY)


def test_pvdm_merged_token_count():
    vocab = build_vocabulary(SchemeId.parse("PVDm:TSD"))
    assert len(vocab.ids_of_type(TokenType.MERGED)) == 88 * 8 * 20


def test_programs_add_129_tokens():
    plain = build_vocabulary(SchemeId.parse("TSD"))
    with_programs = build_vocabulary(SchemeId.parse("TSD+Programs"))
    assert len(with_programs) - len(plain) == 129


def test_special_ids_fixed():
    vocab = build_vocabulary(SchemeId.parse("REMI"))
    assert (PAD_ID, BOS_ID, EOS_ID, MASK_ID, SEP_ID) == (0, 1, 2, 3, 4)
    assert vocab.descriptor(0).type == TokenType.PAD
    assert vocab.descriptor(1).type == TokenType.BOS
    assert vocab.descriptor(2).type == TokenType.EOS
    assert vocab.descriptor(3).type == TokenType.MASK
    assert vocab.descriptor(4).type == TokenType.SEP


def test_texts_unique_and_ids_dense():
    vocab = build_vocabulary(SchemeId.parse("MIDILike+Programs"))
    texts = [e.text for e in vocab.entries]
    assert len(set(texts)) == len(texts)
    assert [e.id for e in vocab.entries] == list(range(len(vocab)))


def test_lookup_both_ways():
    vocab = build_vocabulary(SchemeId.parse("REMI"))
    token_id = vocab.id_of("Pitch_60")
    assert vocab.descriptor(token_id).value == 60
    assert vocab.token_id(TokenType.PITCH, 60) == token_id


def test_json_round_trip():
    scheme = SchemeId.parse("PVm:TSD+Programs")
    config = PreprocessConfig()
    vocab = build_vocabulary(scheme, config)
    data = vocab.to_json()
    again = Vocabulary.from_json(data, scheme, config)
    assert [e.text for e in again.entries] == [e.text for e in vocab.entries]
    assert [e.value for e in again.entries] == [e.value for e in vocab.entries]


@pytest.mark.parametrize(
    "text",
    ["TSD", "REMI", "MIDILike", "PVm:TSD", "PVDm:REMI", "REMI+Programs", "PVDm:TSD+Programs"],
)
def test_scheme_string_round_trip(text):
    assert str(SchemeId.parse(text)) == text


def test_scheme_base_normalized_for_plain_kinds():
    scheme = SchemeId.parse("TSD")
    assert scheme.base == SchemeKind.TSD
    assert SchemeId.parse("MIDILike").time_model == SchemeKind.TSD


def test_unknown_scheme_rejected():
    with pytest.raises(ValueError):
        SchemeId.parse("OctoBPE")


def test_custom_config_changes_counts():
    config = PreprocessConfig(velocity_bin_count=4, positions_per_bar=16)
    vocab = build_vocabulary(SchemeId.parse("REMI"), config)
    assert len(vocab.ids_of_type(TokenType.VELOCITY)) == 4
    assert len(vocab.ids_of_type(TokenType.POSITION)) == 16
