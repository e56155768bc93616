"""Backend command line: serve the protocol, fine-tune, or mint tiny checkpoints."""

from __future__ import annotations

import argparse
import logging
import sys

from . import finetune, modeling
from .config import BackendConfig
from .server import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defpipe-backend")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve /score, /score_batch, /generate, /health")
    p.add_argument("--scorer", required=True)
    p.add_argument("--generator", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--device", default="cpu")
    p.add_argument("--max-input-length", type=int, default=512)

    p = sub.add_parser("finetune-scorer", help="fine-tune the sentence classifier")
    p.add_argument("--dataset", required=True)
    p.add_argument("--base", required=True, help="base checkpoint (name or path)")
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=2e-6)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--max-length", type=int, default=256)
    p.add_argument("--device", default="cpu")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("finetune-generator", help="fine-tune the definition generator")
    p.add_argument("--dataset", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-tokens", type=int, default=1024)
    p.add_argument("--grad-accum", type=int, default=16)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--device", default="cpu")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("make-tiny", help="write tiny random-init checkpoints for smoke testing")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "serve":
        serve(
            BackendConfig(
                scorer_path=args.scorer,
                generator_path=args.generator,
                device=args.device,
                max_input_length=args.max_input_length,
                host=args.host,
                port=args.port,
            )
        )
    elif args.command == "finetune-scorer":
        out = finetune.finetune_scorer(
            args.dataset, args.base, args.out,
            learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
            warmup_steps=args.warmup, max_length=args.max_length, device=args.device, seed=args.seed,
        )
        print(out)
    elif args.command == "finetune-generator":
        out = finetune.finetune_generator(
            args.dataset, args.base, args.out,
            learning_rate=args.lr, epochs=args.epochs, max_batch_tokens=args.batch_tokens,
            grad_accum_steps=args.grad_accum, warmup_steps=args.warmup, k=args.k,
            device=args.device, seed=args.seed,
        )
        print(out)
    elif args.command == "make-tiny":
        scorer_dir, generator_dir = modeling.make_tiny_checkpoints(args.out, seed=args.seed)
        print(scorer_dir)
        print(generator_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
