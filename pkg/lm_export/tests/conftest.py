import json

import pytest
import torch


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A small randomly initialized BERT saved locally, with a word-level
    tokenizer covering the attribute template vocabulary."""
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    words = ["[UNK]", "[PAD]", "concept", "name", "is", "related", "concepts",
             "average", "correct", "rate", "response", "wrong", "responses",
             "none", "algebra", "geometry", "fractions", "unknown",
             "0", "1", "125", "250", "333", "500", "667", "750"]
    vocab = {w: i for i, w in enumerate(words)}
    tok = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tok.normalizer = normalizers.Lowercase()
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    fast = PreTrainedTokenizerFast(tokenizer_object=tok, unk_token="[UNK]",
                                   pad_token="[PAD]")
    config = BertConfig(vocab_size=len(vocab), hidden_size=24, num_hidden_layers=1,
                        num_attention_heads=2, intermediate_size=48,
                        max_position_embeddings=128)
    torch.manual_seed(0)
    model = BertModel(config)
    path = tmp_path_factory.mktemp("checkpoint")
    model.save_pretrained(path)
    fast.save_pretrained(path)
    return str(path)


@pytest.fixture
def attributes_file(tmp_path):
    """Handwritten attributes.jsonl covering all three roles."""
    records = [
        {"role": "concept", "id": "c0", "text": "<concept name is Algebra>"},
        {"role": "concept", "id": "c1", "text": "<concept name is Geometry>"},
        {"role": "exercise", "id": "e0",
         "text": "<related concepts is Algebra> <average correct rate is 0.500>"},
        {"role": "exercise", "id": "e1",
         "text": "<related concepts is Geometry> <average correct rate is unknown>"},
        {"role": "student", "id": "s0",
         "text": "<related concepts is Algebra> <average correct rate is 0.500> "
                 "<response is correct>"},
        {"role": "student", "id": "s1", "text": "<responses is none>"},
    ]
    path = tmp_path / "attributes.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": "eduembed-attr", "version": 1,
                             "count": len(records)}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path, records
