import pytest
import torch
from transformers import (
    BertConfig,
    BertModel,
    BertTokenizer,
    GPT2Config,
    GPT2LMHeadModel,
    GPT2Model,
)

VOCAB = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
         "hello", "world", "the", "cat", "sat", "on", "a", "mat",
         "dog", "ran", "far", "away"]


@pytest.fixture(scope="session")
def tiny_bert_dir(tmp_path_factory):
    """Randomly initialized 2-layer BERT saved locally; no network needed."""
    root = tmp_path_factory.mktemp("tiny_bert")
    vocab_file = root / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizer(vocab_file=str(vocab_file))
    config = BertConfig(vocab_size=len(VOCAB), hidden_size=16,
                        num_hidden_layers=2, num_attention_heads=2,
                        intermediate_size=32, max_position_embeddings=64)
    torch.manual_seed(0)
    model = BertModel(config)
    model_dir = root / "model"
    model.save_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)
    return str(model_dir)


@pytest.fixture(scope="session")
def tiny_gpt2_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_gpt2")
    config = GPT2Config(vocab_size=300, n_embd=12, n_layer=2, n_head=2,
                        n_positions=64)
    torch.manual_seed(1)
    model = GPT2Model(config)
    model_dir = root / "model"
    model.save_pretrained(model_dir)
    # byte-level BPE assets are awkward to fabricate; reuse the wordpiece
    # tokenizer for the toy autoregressive model
    vocab_file = root / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    BertTokenizer(vocab_file=str(vocab_file)).save_pretrained(model_dir)
    return str(model_dir)


@pytest.fixture(scope="session")
def word_vectors_file(tmp_path_factory):
    root = tmp_path_factory.mktemp("wordvecs")
    path = root / "vectors.txt"
    path.write_text(
        "4 3\n"
        "hello 1.0 0.0 0.0\n"
        "world 0.0 1.0 0.0\n"
        "cat 0.0 0.0 1.0\n"
        "dog 2.0 2.0 2.0\n",
        encoding="utf-8")
    return str(path)
