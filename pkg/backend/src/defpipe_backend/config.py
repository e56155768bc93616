from __future__ import annotations

from dataclasses import dataclass

MARKER_TOKENS = ("[DEF]", "[SEP]")


@dataclass
class BackendConfig:
    """Server settings.

    max_input_length must be at least the token budget the pipeline side packs
    into one encoded input (480 whitespace tokens by default), otherwise
    knowledge sentences get silently truncated away.
    """

    scorer_path: str
    generator_path: str
    device: str = "cpu"
    max_input_length: int = 512
    default_max_len: int = 96
    default_beam_size: int = 4
    host: str = "127.0.0.1"
    port: int = 8765

    def __post_init__(self) -> None:
        if self.max_input_length < 1:
            raise ValueError("max_input_length must be positive")
