"""Model loading, marker registration, scoring, and generation.

The scorer is any sequence-classification checkpoint; its input is the
marker-joined string "jargon [DEF] sentence" (the tokenizer's own template
prepends [CLS]). The generator is any encoder-decoder checkpoint consuming
the pipeline's encoded input. Both register [DEF] and [SEP] as special tokens
so markers stay single tokens instead of fragmenting into subwords.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import torch
from transformers import (
    AutoModelForSeq2SeqLM,
    AutoModelForSequenceClassification,
    AutoTokenizer,
    BartConfig,
    BartForConditionalGeneration,
    BertConfig,
    BertForSequenceClassification,
    PreTrainedTokenizerFast,
)

from .config import MARKER_TOKENS

logger = logging.getLogger(__name__)

_CONF_EPS = 1e-7


@dataclass
class ModelBundle:
    tokenizer: object
    model: torch.nn.Module
    name: str
    device: str


def register_markers(tokenizer, model: torch.nn.Module | None = None) -> int:
    """Ensure [DEF]/[SEP] are single special tokens; resize embeddings if grown."""
    added = tokenizer.add_special_tokens({"additional_special_tokens": list(MARKER_TOKENS)})
    if added and model is not None:
        model.resize_token_embeddings(len(tokenizer))
    return added


def load_scorer(path: str | Path, device: str = "cpu") -> ModelBundle:
    tokenizer = AutoTokenizer.from_pretrained(path)
    model = AutoModelForSequenceClassification.from_pretrained(path)
    register_markers(tokenizer, model)
    model.to(device).eval()
    return ModelBundle(tokenizer=tokenizer, model=model, name=str(path), device=device)


def load_generator(path: str | Path, device: str = "cpu") -> ModelBundle:
    tokenizer = AutoTokenizer.from_pretrained(path)
    model = AutoModelForSeq2SeqLM.from_pretrained(path)
    register_markers(tokenizer, model)
    model.to(device).eval()
    return ModelBundle(tokenizer=tokenizer, model=model, name=str(path), device=device)


def scorer_input(jargon: str, sentence: str) -> str:
    return f"{jargon} [DEF] {sentence}"


def score_pairs(bundle: ModelBundle, jargons: list[str], sentences: list[str], max_length: int = 512) -> list[float]:
    """Positive-class probabilities, clamped strictly inside (0, 1)."""
    texts = [scorer_input(j, s) for j, s in zip(jargons, sentences)]
    batch = bundle.tokenizer(
        texts, return_tensors="pt", padding=True, truncation=True, max_length=max_length
    ).to(bundle.device)
    with torch.no_grad():
        logits = bundle.model(**batch).logits
    probs = torch.softmax(logits.float(), dim=-1)[:, -1]
    return [float(min(max(p, _CONF_EPS), 1.0 - _CONF_EPS)) for p in probs.tolist()]


def _suppressed_ids(tokenizer) -> list[int]:
    """Token ids generation must never emit (everything special except EOS)."""
    banned = set()
    for token in tokenizer.all_special_tokens:
        if token == tokenizer.eos_token:
            continue
        token_id = tokenizer.convert_tokens_to_ids(token)
        if token_id is not None and token_id >= 0:
            banned.add(token_id)
    return sorted(banned)


def generate_definition(
    bundle: ModelBundle,
    input_text: str,
    max_len: int = 96,
    beam_size: int = 4,
    max_input_length: int = 512,
) -> tuple[str, list[float]]:
    """Decode one definition; returns (text, per-token log-probabilities <= 0)."""
    batch = bundle.tokenizer(
        [input_text], return_tensors="pt", truncation=True, max_length=max_input_length
    ).to(bundle.device)
    with torch.no_grad():
        out = bundle.model.generate(
            **batch,
            max_new_tokens=max_len,
            min_new_tokens=2,
            num_beams=beam_size,
            do_sample=False,
            suppress_tokens=_suppressed_ids(bundle.tokenizer),
            output_scores=True,
            return_dict_in_generate=True,
        )
    sequence = out.sequences[0]
    text = bundle.tokenizer.decode(sequence, skip_special_tokens=True).strip()
    if not text:
        raise RuntimeError("generator produced an empty definition")

    n_steps = len(out.scores)
    transition = bundle.model.compute_transition_scores(
        out.sequences,
        out.scores,
        beam_indices=getattr(out, "beam_indices", None) if beam_size > 1 else None,
        normalize_logits=True,
    )[0]
    generated_ids = sequence[-n_steps:]
    pad_id = bundle.tokenizer.pad_token_id
    logprobs = [
        min(0.0, float(score))
        for token_id, score in zip(generated_ids.tolist(), transition.tolist())
        if token_id != pad_id
    ]
    return text, logprobs


# --- tiny offline checkpoints --------------------------------------------------

_TINY_WORDS = (
    "a an the is are was were of in to for on that and or not it this with "
    "term jargon definition defined refers denotes type kind technique method "
    "prime number twin pair conjecture proof century less more another either "
    "learning machine model problem setup training example examples few shot zero "
    "data set branch chemistry study studies field science compound carbon "
    "component device system process unit flow rack plant meeting note worker "
    "2 3 5 7 10 resisted well over"
).split()


def make_tiny_tokenizer(extra_words: list[str] | None = None) -> PreTrainedTokenizerFast:
    """A word-level tokenizer built locally (no downloads), for smoke-scale models."""
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import Whitespace
    from tokenizers.processors import TemplateProcessing

    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "<s>", "</s>", "[MASK]"]
    words = list(dict.fromkeys(_TINY_WORDS + (extra_words or [])))
    vocab = {token: i for i, token in enumerate(specials + words)}
    tok = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = Whitespace()
    tok.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tok,
        pad_token="[PAD]",
        unk_token="[UNK]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        bos_token="<s>",
        eos_token="</s>",
        mask_token="[MASK]",
    )


def make_tiny_checkpoints(out_dir: str | Path, seed: int = 0, extra_words: list[str] | None = None) -> tuple[Path, Path]:
    """Write randomly initialized tiny scorer/generator checkpoints under out_dir."""
    out_dir = Path(out_dir)
    torch.manual_seed(seed)

    scorer_dir = out_dir / "scorer"
    tokenizer = make_tiny_tokenizer(extra_words)
    register_markers(tokenizer)
    scorer = BertForSequenceClassification(
        BertConfig(
            vocab_size=len(tokenizer),
            hidden_size=32,
            num_hidden_layers=2,
            num_attention_heads=2,
            intermediate_size=64,
            max_position_embeddings=512,
            num_labels=2,
            pad_token_id=tokenizer.pad_token_id,
        )
    )
    tokenizer.save_pretrained(scorer_dir)
    scorer.save_pretrained(scorer_dir)

    generator_dir = out_dir / "generator"
    gen_tokenizer = make_tiny_tokenizer(extra_words)
    register_markers(gen_tokenizer)
    generator = BartForConditionalGeneration(
        BartConfig(
            vocab_size=len(gen_tokenizer),
            d_model=32,
            encoder_layers=2,
            decoder_layers=2,
            encoder_attention_heads=2,
            decoder_attention_heads=2,
            encoder_ffn_dim=64,
            decoder_ffn_dim=64,
            max_position_embeddings=512,
            pad_token_id=gen_tokenizer.pad_token_id,
            bos_token_id=gen_tokenizer.bos_token_id,
            eos_token_id=gen_tokenizer.eos_token_id,
            decoder_start_token_id=gen_tokenizer.bos_token_id,
            forced_eos_token_id=None,
        )
    )
    gen_tokenizer.save_pretrained(generator_dir)
    generator.save_pretrained(generator_dir)
    logger.info("tiny checkpoints written to %s", out_dir)
    return scorer_dir, generator_dir
