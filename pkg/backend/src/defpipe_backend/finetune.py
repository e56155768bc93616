"""Fine-tuning of the scorer and generator on pipeline-built JSONL datasets.

Dataset files are the pipeline's extraction/generation JSONL schemas, header
line included. The whole file is validated before any training starts, so a
schema mismatch never wastes a training run.

Default hyperparameters: scorer Adam lr 2e-6; generator lr 5e-5 with ~1,024
token batches accumulated over 16 steps; 1,000 warmup steps. All overridable.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

import torch
from torch.optim import AdamW
from torch.optim.lr_scheduler import LambdaLR

from . import modeling
from .config import MARKER_TOKENS

logger = logging.getLogger(__name__)


@dataclass
class ScorerExample:
    jargon: str
    sentence: str
    label: int
    split: str


@dataclass
class GeneratorExample:
    input_text: str
    target: str
    split: str


def _read_jsonl(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise ValueError(f"dataset schema mismatch at line {lineno}: not JSON ({exc})") from exc
            if isinstance(rec, dict) and "_header" in rec:
                continue
            yield lineno, rec


def load_scorer_examples(path: str | Path) -> list[ScorerExample]:
    """Load and fully validate an extraction dataset before training."""
    examples = []
    for lineno, rec in _read_jsonl(path):
        try:
            label = {"positive": 1, "negative": 0}[rec["label"]]
            examples.append(
                ScorerExample(
                    jargon=rec["term"]["surface"],
                    sentence=rec["sentence"]["text"],
                    label=label,
                    split=rec["split"],
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"dataset schema mismatch at line {lineno}: {exc!r}") from exc
    if not examples:
        raise ValueError("dataset schema mismatch: no examples found")
    return examples


def load_generator_examples(path: str | Path, k: int = 5) -> list[GeneratorExample]:
    """Build (encoded input, gold) pairs from a generation dataset.

    Candidates are used in stored order; for fidelity runs feed a dataset whose
    candidates were pre-ranked by the scorer.
    """
    examples = []
    for lineno, rec in _read_jsonl(path):
        try:
            surface = rec["term"]["surface"]
            gold = rec["gold_definition"]
            cands = [c["text"] for c in rec["candidate_sentences"]][:k]
            split = rec["split"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"dataset schema mismatch at line {lineno}: {exc!r}") from exc
        text = surface
        for i, cand in enumerate(cands):
            marker = MARKER_TOKENS[0] if i == 0 else MARKER_TOKENS[1]
            text += f" {marker} {cand}"
        examples.append(GeneratorExample(input_text=text, target=gold, split=split))
    if not examples:
        raise ValueError("dataset schema mismatch: no examples found")
    return examples


def _warmup_scheduler(optimizer, warmup_steps: int) -> LambdaLR:
    return LambdaLR(optimizer, lambda step: min(1.0, (step + 1) / max(1, warmup_steps)))


def _write_log(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "training_log.json").write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def finetune_scorer(
    dataset_path: str | Path,
    base_model: str | Path,
    out_dir: str | Path,
    learning_rate: float = 2e-6,
    epochs: int = 3,
    batch_size: int = 16,
    warmup_steps: int = 1000,
    max_length: int = 256,
    device: str = "cpu",
    seed: int = 0,
) -> Path:
    """Fine-tune a sequence classifier on the extraction dataset's train split."""
    examples = load_scorer_examples(dataset_path)
    train = [ex for ex in examples if ex.split == "train"]
    if not train:
        raise ValueError("dataset has no train-split examples")

    torch.manual_seed(seed)
    bundle = modeling.load_scorer(base_model, device)
    model, tokenizer = bundle.model, bundle.tokenizer
    model.train()
    optimizer = AdamW(model.parameters(), lr=learning_rate)
    scheduler = _warmup_scheduler(optimizer, warmup_steps)
    rng = random.Random(seed)

    epoch_losses = []
    for epoch in range(epochs):
        order = list(range(len(train)))
        rng.shuffle(order)
        total, steps = 0.0, 0
        for start in range(0, len(order), batch_size):
            chunk = [train[i] for i in order[start : start + batch_size]]
            batch = tokenizer(
                [modeling.scorer_input(ex.jargon, ex.sentence) for ex in chunk],
                return_tensors="pt",
                padding=True,
                truncation=True,
                max_length=max_length,
            ).to(device)
            labels = torch.tensor([ex.label for ex in chunk], device=device)
            loss = model(**batch, labels=labels).loss
            loss.backward()
            optimizer.step()
            scheduler.step()
            optimizer.zero_grad()
            total += float(loss.detach())
            steps += 1
        epoch_losses.append(total / max(1, steps))
        logger.info("scorer epoch %d/%d loss %.4f", epoch + 1, epochs, epoch_losses[-1])

    out_dir = Path(out_dir)
    model.eval()
    tokenizer.save_pretrained(out_dir)
    model.save_pretrained(out_dir)
    _write_log(out_dir, {
        "task": "scorer",
        "examples": len(train),
        "epochs": epochs,
        "learning_rate": learning_rate,
        "warmup_steps": warmup_steps,
        "seed": seed,
        "epoch_losses": epoch_losses,
    })
    return out_dir


def _pack_token_batches(examples: list[GeneratorExample], tokenizer, max_batch_tokens: int, max_length: int):
    """Greedily pack consecutive examples until the token budget is hit."""
    batches: list[list[GeneratorExample]] = []
    current: list[GeneratorExample] = []
    current_tokens = 0
    for ex in examples:
        n_tokens = min(max_length, len(tokenizer(ex.input_text)["input_ids"])) + min(
            max_length, len(tokenizer(ex.target)["input_ids"])
        )
        if current and current_tokens + n_tokens > max_batch_tokens:
            batches.append(current)
            current, current_tokens = [], 0
        current.append(ex)
        current_tokens += n_tokens
    if current:
        batches.append(current)
    return batches


def finetune_generator(
    dataset_path: str | Path,
    base_model: str | Path,
    out_dir: str | Path,
    learning_rate: float = 5e-5,
    epochs: int = 3,
    max_batch_tokens: int = 1024,
    grad_accum_steps: int = 16,
    warmup_steps: int = 1000,
    k: int = 5,
    max_length: int = 512,
    target_max_length: int = 128,
    device: str = "cpu",
    seed: int = 0,
) -> Path:
    """Fine-tune a seq2seq model to emit gold definitions from encoded inputs."""
    examples = load_generator_examples(dataset_path, k=k)
    train = [ex for ex in examples if ex.split == "train"]
    if not train:
        raise ValueError("dataset has no train-split examples")

    torch.manual_seed(seed)
    bundle = modeling.load_generator(base_model, device)
    model, tokenizer = bundle.model, bundle.tokenizer
    model.train()
    optimizer = AdamW(model.parameters(), lr=learning_rate)
    scheduler = _warmup_scheduler(optimizer, warmup_steps)
    rng = random.Random(seed)

    epoch_losses = []
    for epoch in range(epochs):
        shuffled = train[:]
        rng.shuffle(shuffled)
        batches = _pack_token_batches(shuffled, tokenizer, max_batch_tokens, max_length)
        total, steps = 0.0, 0
        optimizer.zero_grad()
        for i, chunk in enumerate(batches):
            enc = tokenizer(
                [ex.input_text for ex in chunk],
                return_tensors="pt", padding=True, truncation=True, max_length=max_length,
            ).to(device)
            targets = tokenizer(
                [ex.target for ex in chunk],
                return_tensors="pt", padding=True, truncation=True, max_length=target_max_length,
            ).to(device)
            labels = targets["input_ids"].clone()
            labels[labels == tokenizer.pad_token_id] = -100
            loss = model(**enc, labels=labels).loss / grad_accum_steps
            loss.backward()
            if (i + 1) % grad_accum_steps == 0 or i + 1 == len(batches):
                optimizer.step()
                scheduler.step()
                optimizer.zero_grad()
            total += float(loss.detach()) * grad_accum_steps
            steps += 1
        epoch_losses.append(total / max(1, steps))
        logger.info("generator epoch %d/%d loss %.4f", epoch + 1, epochs, epoch_losses[-1])

    out_dir = Path(out_dir)
    model.eval()
    tokenizer.save_pretrained(out_dir)
    model.save_pretrained(out_dir)
    _write_log(out_dir, {
        "task": "generator",
        "examples": len(train),
        "epochs": epochs,
        "learning_rate": learning_rate,
        "max_batch_tokens": max_batch_tokens,
        "grad_accum_steps": grad_accum_steps,
        "warmup_steps": warmup_steps,
        "k": k,
        "seed": seed,
        "epoch_losses": epoch_losses,
    })
    return out_dir
