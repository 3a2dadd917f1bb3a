import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from src.models.tinylm.schema import BYTE_VOCAB, MIN_VOCAB
from src.utils.errors import ConfigurationError

BOS_ID = BYTE_VOCAB
EOS_ID = BYTE_VOCAB + 1
MODE_UNCERTAIN_ID = BYTE_VOCAB + 2
MODE_CERTAIN_ID = BYTE_VOCAB + 3
FIRST_PHRASE_ID = BYTE_VOCAB + 4
CONTROL_IDS = frozenset({BOS_ID, EOS_ID, MODE_UNCERTAIN_ID, MODE_CERTAIN_ID})

HEDGE_PHRASES: Tuple[str, ...] = (
    "I think",
    "maybe",
    "probably",
    "perhaps",
    "possibly",
    "it might be",
)

ABSTAIN_PHRASES: Tuple[str, ...] = (
    "I don't know",
    "I'm unable to verify that",
)

ENTITY_NAMES: Tuple[str, ...] = (
    "Bakoru", "Tenima", "Polesh", "Gravin", "Moltek", "Sudara",
    "Quenby", "Harvol", "Jestin", "Korvax", "Lumeni", "Nadrix",
    "Ostrel", "Pavane", "Rilkot", "Selvan", "Tormed", "Ulbric",
    "Vandel", "Wexley", "Yarrow", "Zindel", "Cobalt", "Dromen",
)

SPECIAL_PATTERN = re.compile(r"<\|[a-z0-9:_]+\|>")


@dataclass(frozen=True)
class TokenLayout:
    vocab_size: int

    @staticmethod
    def required_vocab(n_subjects: int) -> int:
        return FIRST_PHRASE_ID + len(HEDGE_PHRASES) + len(ABSTAIN_PHRASES) + len(ENTITY_NAMES) + n_subjects

    @property
    def hedge_ids(self) -> Tuple[int, ...]:
        return self._clip(range(FIRST_PHRASE_ID, FIRST_PHRASE_ID + len(HEDGE_PHRASES)))

    @property
    def abstain_ids(self) -> Tuple[int, ...]:
        start = FIRST_PHRASE_ID + len(HEDGE_PHRASES)
        return self._clip(range(start, start + len(ABSTAIN_PHRASES)))

    @property
    def phrase_ids(self) -> Tuple[int, ...]:
        return self.hedge_ids + self.abstain_ids

    @property
    def entity_ids(self) -> Tuple[int, ...]:
        start = FIRST_PHRASE_ID + len(HEDGE_PHRASES) + len(ABSTAIN_PHRASES)
        return self._clip(range(start, start + len(ENTITY_NAMES)))

    @property
    def subject_ids(self) -> Tuple[int, ...]:
        start = FIRST_PHRASE_ID + len(HEDGE_PHRASES) + len(ABSTAIN_PHRASES) + len(ENTITY_NAMES)
        return self._clip(range(start, self.vocab_size))

    @property
    def has_mode_tokens(self) -> bool:
        return self.vocab_size > MODE_CERTAIN_ID

    def is_complete(self) -> bool:
        return len(self.entity_ids) == len(ENTITY_NAMES) and len(self.subject_ids) > 0

    def _clip(self, ids: range) -> Tuple[int, ...]:
        return tuple(token for token in ids if token < self.vocab_size)


class ByteTokenizer:

    def __init__(self, vocab_size: int):
        if vocab_size < MIN_VOCAB:
            raise ConfigurationError(f"vocab_size must be at least {MIN_VOCAB}")
        self.layout = TokenLayout(vocab_size)
        self._strings: Dict[int, str] = {BOS_ID: "<|bos|>", EOS_ID: "<|eos|>"}
        self._words: Dict[int, str] = {}
        if self.layout.has_mode_tokens:
            self._strings[MODE_UNCERTAIN_ID] = "<|uncertain|>"
            self._strings[MODE_CERTAIN_ID] = "<|certain|>"
        for index, token in enumerate(self.layout.phrase_ids):
            self._strings[token] = f"<|h{index}|>"
            self._words[token] = (HEDGE_PHRASES + ABSTAIN_PHRASES)[index]
        for index, token in enumerate(self.layout.entity_ids):
            self._strings[token] = f"<|e{index}|>"
            self._words[token] = ENTITY_NAMES[index]
        for index, token in enumerate(self.layout.subject_ids):
            self._strings[token] = self.subject_string(index)
        self._ids = {text: token for token, text in self._strings.items()}

    @staticmethod
    def subject_string(index: int) -> str:
        return f"<|s{index:03d}|>"

    def token_string(self, token: int) -> str:
        if token < BYTE_VOCAB:
            return bytes([token]).decode("latin-1")
        return self._strings[token]

    def token_id(self, special: str) -> int:
        if special not in self._ids:
            raise ConfigurationError(f"Unknown special token: {special}")
        return self._ids[special]

    def entity_name(self, token: int) -> str:
        return self._words[token]

    def encode(self, text: str, add_bos: bool = True, mode: Optional[int] = None) -> List[int]:
        tokens: List[int] = [BOS_ID] if add_bos else []
        if mode is not None:
            tokens.append(mode)
        position = 0
        for match in SPECIAL_PATTERN.finditer(text):
            special = match.group(0)
            if special not in self._ids:
                continue
            tokens.extend(text[position:match.start()].encode("utf-8"))
            tokens.append(self._ids[special])
            position = match.end()
        tokens.extend(text[position:].encode("utf-8"))
        return tokens

    def decode(self, tokens: Sequence[int]) -> str:
        segments: List[str] = []
        pending = bytearray()
        for token in tokens:
            if token < BYTE_VOCAB:
                pending.append(token)
                continue
            if pending:
                segments.append(pending.decode("utf-8", errors="replace"))
                pending = bytearray()
            if token in self._words:
                segments.append(self._words[token])
            elif token in self._strings and token not in CONTROL_IDS:
                segments.append(self._strings[token])
        if pending:
            segments.append(pending.decode("utf-8", errors="replace"))
        return " ".join(" ".join(segment.split()) for segment in segments if segment.strip())
