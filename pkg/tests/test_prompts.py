import numpy as np
import pytest

from src.core.errors import ChecksumError
from src.core.numerics import OptimizerState
from src.models.schemas import DegradationKind, PathwayConfig, PromptVariant
from src.services.prompts import (
    PAD,
    Prompt,
    PromptBank,
    TextPathway,
    Tokenizer,
    encode,
    init_prompt,
    load_bank,
    load_prompt,
    load_vocabulary,
    save_bank,
    trainable_parameters,
)


class TestVocabulary:
    def test_sixty_four_symbols_pad_first(self):
        vocabulary = load_vocabulary()
        assert len(vocabulary) == 64
        assert vocabulary[0] == PAD

    def test_every_prompt_tokenizes(self):
        tokenizer = Tokenizer(PathwayConfig())
        for kind in DegradationKind:
            ids = tokenizer.ids(load_prompt(kind.value))
            assert len(ids) == 8

    def test_missing_prompt_file(self):
        with pytest.raises(FileNotFoundError):
            load_prompt("no_such_prompt")


class TestTokenizer:
    def test_pads_and_decodes(self):
        tokenizer = Tokenizer(PathwayConfig())
        ids = tokenizer.ids("remove haze")
        assert ids[2:] == [0] * 6
        assert tokenizer.decode(ids) == "REMOVE HAZE"

    def test_unknown_symbol(self):
        with pytest.raises(KeyError):
            Tokenizer(PathwayConfig()).ids("REMOVE SNOW")

    def test_too_long(self, tiny_pathway_config):
        with pytest.raises(ValueError):
            Tokenizer(tiny_pathway_config).ids("BRIGHTEN LOW LIGHT")


class TestPathway:
    def test_null_context_shape_and_determinism(self, tiny_pathway_config):
        a, b = TextPathway(tiny_pathway_config), TextPathway(tiny_pathway_config)
        assert a.null_context().shape == (2, 4)
        np.testing.assert_array_equal(a.null_context(), b.null_context())
        assert a.content_hash() == b.content_hash()

    def test_weights_are_read_only(self, tiny_pathway):
        with pytest.raises(ValueError):
            tiny_pathway.encoder.weights["w1"][0, 0] = 1.0

    def test_rebuilt_from_tensors(self, tiny_pathway, tiny_pathway_config):
        rebuilt = TextPathway(tiny_pathway_config, tiny_pathway.tensors())
        assert rebuilt.content_hash() == tiny_pathway.content_hash()


class TestVariants:
    def test_text_prompt_has_nothing_to_train(self, tiny_pathway):
        prompt = init_prompt(PromptVariant.TEXT, DegradationKind.VEIL, tiny_pathway, tiny_pathway.null_context())
        np.testing.assert_array_equal(
            encode(prompt, tiny_pathway, tiny_pathway.null_context()), tiny_pathway.encode_text("REMOVE HAZE")
        )
        with pytest.raises(ValueError):
            trainable_parameters(prompt)

    def test_token_prompt_starts_at_text_prompt(self, tiny_pathway):
        e_null = tiny_pathway.null_context()
        prompt = init_prompt(PromptVariant.TOKEN, DegradationKind.VEIL, tiny_pathway, e_null)
        np.testing.assert_allclose(encode(prompt, tiny_pathway, e_null), tiny_pathway.encode_text("REMOVE HAZE"))

    def test_embedding_prompt_starts_at_null(self, tiny_pathway):
        e_null = tiny_pathway.null_context()
        prompt = init_prompt(PromptVariant.EMBEDDING, DegradationKind.VEIL, tiny_pathway, e_null)
        np.testing.assert_array_equal(encode(prompt, tiny_pathway, e_null), e_null)
        assert prompt.parameter_count == 8

    def test_residual_zero_gate_is_exactly_null(self):
        pathway = TextPathway(PathwayConfig())
        e_null = pathway.null_context()
        prompt = init_prompt(PromptVariant.RESIDUAL, DegradationKind.VEIL, pathway, e_null, rank=4)
        np.testing.assert_array_equal(encode(prompt, pathway, e_null), e_null)
        # 8x4 + 4x32 + 8 = 168 < L * D = 256
        assert prompt.parameter_count == 168
        assert prompt.parameter_count < e_null.size

    def test_residual_gate_scales_rows(self, tiny_pathway):
        e_null = tiny_pathway.null_context()
        prompt = init_prompt(PromptVariant.RESIDUAL, DegradationKind.VEIL, tiny_pathway, e_null, rank=1)
        prompt.params["g"][:] = [0.0, 1.0]
        context = encode(prompt, tiny_pathway, e_null)
        np.testing.assert_array_equal(context[0], e_null[0])
        np.testing.assert_allclose(context[1], e_null[1] + (prompt.params["A"] @ prompt.params["B"])[1])

    def test_trainable_parameters_are_references(self, tiny_pathway):
        prompt = init_prompt(PromptVariant.EMBEDDING, DegradationKind.VEIL, tiny_pathway, tiny_pathway.null_context())
        trainable_parameters(prompt)["p"][0, 0] = 42.0
        assert prompt.params["p"][0, 0] == 42.0

    def test_parameter_set_is_validated(self):
        with pytest.raises(ValueError):
            Prompt(PromptVariant.EMBEDDING, DegradationKind.VEIL, {"U": np.zeros((2, 4))})


class TestBank:
    def test_missing_kind_lists_available(self, tiny_pathway):
        bank = PromptBank()
        bank.put(init_prompt(PromptVariant.EMBEDDING, DegradationKind.VEIL, tiny_pathway, tiny_pathway.null_context()))
        assert DegradationKind.VEIL in bank and len(bank) == 1
        with pytest.raises(KeyError, match="veil"):
            bank.get(DegradationKind.STRIPE)

    def test_save_load_roundtrip(self, tmp_path, tiny_pathway):
        e_null = tiny_pathway.null_context()
        bank = PromptBank()
        bank.put(init_prompt(PromptVariant.RESIDUAL, DegradationKind.VEIL, tiny_pathway, e_null, rank=2, seed=1))
        bank.put(init_prompt(PromptVariant.TEXT, DegradationKind.STRIPE, tiny_pathway, e_null))
        state = OptimizerState(lr=5e-4)
        state.step = 7
        state.m = {"A": np.ones((2, 2))}
        state.v = {"A": np.full((2, 2), 0.5)}
        path = tmp_path / "bank.bprm"
        checksum = save_bank(path, bank, tiny_pathway, {DegradationKind.VEIL: state})

        loaded, states = load_bank(path, tiny_pathway)
        assert loaded.kinds() == [DegradationKind.STRIPE, DegradationKind.VEIL]
        assert loaded.get(DegradationKind.STRIPE).text == "REMOVE STRIPES"
        for name, value in bank.get(DegradationKind.VEIL).params.items():
            np.testing.assert_allclose(loaded.get(DegradationKind.VEIL).params[name], value, rtol=1e-6, atol=1e-7)
        assert states[DegradationKind.VEIL].step == 7
        np.testing.assert_array_equal(states[DegradationKind.VEIL].v["A"], np.full((2, 2), 0.5))
        assert save_bank(tmp_path / "again.bprm", loaded, tiny_pathway, states) == checksum

    def test_corrupt_bank(self, tmp_path, tiny_pathway):
        bank = PromptBank()
        bank.put(init_prompt(PromptVariant.EMBEDDING, DegradationKind.VEIL, tiny_pathway, tiny_pathway.null_context()))
        path = tmp_path / "bank.bprm"
        save_bank(path, bank, tiny_pathway)
        data = bytearray(path.read_bytes())
        data[20] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(ChecksumError):
            load_bank(path, tiny_pathway)
