"""Datasets, vocabularies, and pretrained-vector loading.

Covers the bracketed sentiment treebank format, directory-per-class review
corpora with 200-token truncation, a deterministic synthetic
negation/contrast grammar for desk-scale experiments, and text-format
embedding files with per-dimension standardization.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Example",
    "Batch",
    "DataError",
    "TreeParseError",
    "Vocabulary",
    "NgramInventory",
    "parse_sst_tree",
    "binarize_sst",
    "load_sst",
    "tokenize",
    "load_imdb",
    "split_validation",
    "SyntheticGrammar",
    "default_grammar",
    "generate_synthetic",
    "compositional_score",
    "write_tsv",
    "read_tsv",
    "load_vectors",
    "standardize_embeddings",
    "build_embedding_matrix",
    "batch_examples",
]

PAD_ID = 0
UNK_ID = 1

REVIEW_TOKEN_LIMIT = 200


class DataError(ValueError):
    """Malformed or out-of-contract data."""


class TreeParseError(DataError):
    """Bracketed tree could not be parsed; carries the failing byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class Example:
    tokens: list
    label: int
    source_id: str = ""

    def __post_init__(self):
        if not self.tokens:
            raise DataError("example with no tokens")


@dataclass
class Batch:
    """Right-padded token ids with true lengths, labels, and raw tokens."""

    ids: np.ndarray       # (B, N) int64, padded with PAD_ID
    lengths: np.ndarray   # (B,) int64
    labels: np.ndarray    # (B,) int64
    tokens: list          # raw token lists, for character n-grams

    def __len__(self):
        return self.ids.shape[0]


class Vocabulary:
    """token -> id map; 0 is padding, 1 is unknown, the rest by frequency.

    Construction is deterministic: tokens are ranked by descending count
    and ties broken lexicographically.
    """

    PAD = "<pad>"
    UNK = "<unk>"

    def __init__(self, tokens):
        self._tokens = [self.PAD, self.UNK] + list(tokens)
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}

    @classmethod
    def from_corpus(cls, examples, min_count=1):
        counts = {}
        for ex in examples:
            for tok in ex.tokens:
                counts[tok] = counts.get(tok, 0) + 1
        ranked = sorted(counts, key=lambda tok: (-counts[tok], tok))
        return cls([tok for tok in ranked if counts[tok] >= min_count])

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._ids

    def id_of(self, token):
        return self._ids.get(token, UNK_ID)

    def encode(self, tokens):
        return np.array([self.id_of(tok) for tok in tokens], dtype=np.int64)

    def tokens(self):
        return list(self._tokens)

    def to_json(self):
        return {"tokens": self._tokens}

    @classmethod
    def from_json(cls, payload):
        tokens = payload["tokens"]
        if tokens[:2] != [cls.PAD, cls.UNK]:
            raise DataError("vocabulary payload is missing the reserved entries")
        return cls(tokens[2:])


class NgramInventory:
    """Known character n-grams (lengths 1..4); unknown n-grams are skipped."""

    def __init__(self, ngrams, min_len=1, max_len=4):
        self.min_len = min_len
        self.max_len = max_len
        self._ngrams = list(ngrams)
        self._ids = {g: i for i, g in enumerate(self._ngrams)}

    @classmethod
    def from_corpus(cls, examples, min_len=1, max_len=4, min_count=1):
        counts = {}
        for ex in examples:
            for tok in ex.tokens:
                for gram in _ngrams_of(tok, min_len, max_len):
                    counts[gram] = counts.get(gram, 0) + 1
        ranked = sorted(counts, key=lambda g: (-counts[g], g))
        return cls([g for g in ranked if counts[g] >= min_count], min_len, max_len)

    def __len__(self):
        return len(self._ngrams)

    def ids_of(self, word):
        return [self._ids[g] for g in _ngrams_of(word, self.min_len, self.max_len) if g in self._ids]

    def to_json(self):
        return {"ngrams": self._ngrams, "min_len": self.min_len, "max_len": self.max_len}

    @classmethod
    def from_json(cls, payload):
        return cls(payload["ngrams"], payload["min_len"], payload["max_len"])


def _ngrams_of(word, min_len, max_len):
    out = []
    for size in range(min_len, max_len + 1):
        for start in range(len(word) - size + 1):
            out.append(word[start:start + size])
    return out


# ---------------------------------------------------------------------------
# bracketed treebank format


def parse_sst_tree(line):
    """Parse one bracketed tree "(label child ...)" into (tokens, root label).

    Leaves are literal tokens; every internal node carries an integer label
    but only the root's is returned. Raises TreeParseError with the byte
    offset of the first offending character.
    """
    tokens = []
    pos = 0
    text = line.rstrip("\n")

    def skip_spaces():
        nonlocal pos
        while pos < len(text) and text[pos] in " \t":
            pos += 1

    def parse_node():
        nonlocal pos
        skip_spaces()
        if pos >= len(text) or text[pos] != "(":
            raise TreeParseError("expected '('", pos)
        pos += 1
        skip_spaces()
        start = pos
        while pos < len(text) and text[pos] not in " \t()":
            pos += 1
        label_text = text[start:pos]
        if not re.fullmatch(r"\d+", label_text):
            raise TreeParseError(f"expected an integer label, found {label_text!r}", start)
        label = int(label_text)
        skip_spaces()
        if pos < len(text) and text[pos] == "(":
            while pos < len(text) and text[pos] == "(":
                parse_node()
                skip_spaces()
        else:
            start = pos
            while pos < len(text) and text[pos] not in "()":
                pos += 1
            leaf = text[start:pos].strip()
            if not leaf:
                raise TreeParseError("node has neither children nor a token", start)
            tokens.append(leaf)
        if pos >= len(text) or text[pos] != ")":
            raise TreeParseError("expected ')'", pos)
        pos += 1
        return label

    root = parse_node()
    skip_spaces()
    if pos != len(text):
        raise TreeParseError("trailing characters after the tree", pos)
    return tokens, root


def binarize_sst(label):
    """Collapse the 0..4 scale to negative (0) / positive (1); 2 drops out."""
    if label not in (0, 1, 2, 3, 4):
        raise DataError(f"sentiment label must be in 0..4, got {label}")
    if label == 2:
        return None
    return 0 if label < 2 else 1


def _subtrees(line):
    """(tokens, label) for the root and every internal phrase of one tree."""
    # reparse each parenthesized span; offsets index into the original line
    spans = []
    stack = []
    for i, ch in enumerate(line):
        if ch == "(":
            stack.append(i)
        elif ch == ")":
            if not stack:
                raise TreeParseError("unbalanced ')'", i)
            spans.append((stack.pop(), i + 1))
    if stack:
        raise TreeParseError("unbalanced '('", stack[-1])
    return [parse_sst_tree(line[a:b]) for a, b in sorted(spans)]


def load_sst(path, binary=True, phrase_labels=False):
    """Examples from a file of one bracketed tree per line.

    ``phrase_labels`` additionally emits every internal phrase as its own
    example (off by default; sentence-level only).
    """
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            units = _subtrees(line) if phrase_labels else [parse_sst_tree(line)]
            for k, (tokens, label) in enumerate(units):
                if not tokens:
                    continue
                if binary:
                    mapped = binarize_sst(label)
                    if mapped is None:
                        continue
                    label = mapped
                examples.append(Example(tokens, label, source_id=f"{path}:{line_no}:{k}"))
    return examples


# ---------------------------------------------------------------------------
# review directories


_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text):
    """Lowercase, then split into word and punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


def load_imdb(root, token_limit=REVIEW_TOKEN_LIMIT):
    """Read pos/ and neg/ review files under ``root``; truncate each review.

    Files are visited in sorted order so the result is deterministic.
    """
    root = Path(root)
    examples = []
    for label, sub in ((1, "pos"), (0, "neg")):
        folder = root / sub
        if not folder.is_dir():
            raise FileNotFoundError(f"missing review folder: {folder}")
        for path in sorted(folder.iterdir()):
            if not path.is_file():
                continue
            text = path.read_text(encoding="utf-8", errors="replace")
            tokens = tokenize(text)[:token_limit]
            if tokens:
                examples.append(Example(tokens, label, source_id=str(path)))
    return examples


def split_validation(examples, fraction=0.1, seed=0):
    """Seeded shuffle, then hold out the leading fraction as validation."""
    order = np.random.default_rng(seed).permutation(len(examples))
    held = max(1, int(round(len(examples) * fraction)))
    val_idx = set(order[:held].tolist())
    train = [ex for i, ex in enumerate(examples) if i not in val_idx]
    val = [ex for i, ex in enumerate(examples) if i in val_idx]
    return train, val


# ---------------------------------------------------------------------------
# synthetic negation/contrast sentences


@dataclass
class SyntheticGrammar:
    """Deterministic generator settings; same seed, same dataset.

    Sentences are built from polarity-bearing tokens (+1/-1), neutral
    filler, negators that flip the polarity token that follows them, and
    an optional contrast clause: for "A <contrast> B" the label comes from
    clause B alone.
    """

    seed: int = 0
    positive_tokens: list = field(default_factory=lambda: [
        "good", "great", "lovely", "superb", "charming", "heartfelt", "delightful", "crisp",
    ])
    negative_tokens: list = field(default_factory=lambda: [
        "bad", "dull", "awful", "boring", "tedious", "bleak", "clumsy", "hollow",
    ])
    neutral_tokens: list = field(default_factory=lambda: [
        "the", "movie", "plot", "acting", "story", "it", "was", "felt", "rather", "quite",
    ])
    negators: list = field(default_factory=lambda: ["not", "never", "hardly"])
    contrast_token: str = "but"
    contrast_prob: float = 0.25
    negation_prob: float = 0.3
    max_slots: int = 2
    max_filler: int = 2


def default_grammar(seed=0):
    return SyntheticGrammar(seed=seed)


def compositional_score(tokens, grammar):
    """Recompute the sentence score from its tokens.

    A negator flips the next polarity token; everything before the last
    contrast token is discarded.
    """
    score = 0
    pending_flip = False
    for tok in tokens:
        if tok == grammar.contrast_token:
            score = 0
            pending_flip = False
        elif tok in grammar.negators:
            pending_flip = True
        elif tok in grammar.positive_tokens or tok in grammar.negative_tokens:
            value = 1 if tok in grammar.positive_tokens else -1
            if pending_flip:
                value = -value
                pending_flip = False
            score += value
    return score


def _clause(rng, grammar, want_sign=None):
    """Token list plus its score; resamples until the score is nonzero
    (and matches ``want_sign`` when requested)."""
    while True:
        tokens = []
        score = 0
        slots = int(rng.integers(1, grammar.max_slots + 1))
        for _ in range(slots):
            for _ in range(int(rng.integers(0, grammar.max_filler + 1))):
                tokens.append(str(rng.choice(grammar.neutral_tokens)))
            value = 1 if rng.random() < 0.5 else -1
            word = str(rng.choice(grammar.positive_tokens if value > 0 else grammar.negative_tokens))
            if rng.random() < grammar.negation_prob:
                tokens.append(str(rng.choice(grammar.negators)))
                value = -value
            tokens.append(word)
            score += value
        if rng.random() < 0.5:
            tokens.append(str(rng.choice(grammar.neutral_tokens)))
        if score == 0:
            continue
        if want_sign is not None and np.sign(score) != want_sign:
            continue
        return tokens, score


def generate_synthetic(grammar, count):
    """``count`` labeled sentences; label 1 when the composed score is positive."""
    if count < 1:
        raise DataError(f"need at least one example, got {count}")
    rng = np.random.default_rng(grammar.seed)
    examples = []
    for i in range(count):
        if rng.random() < grammar.contrast_prob:
            second, score = _clause(rng, grammar)
            first, _ = _clause(rng, grammar, want_sign=-np.sign(score))
            tokens = first + [grammar.contrast_token] + second
        else:
            tokens, score = _clause(rng, grammar)
        examples.append(Example(tokens, 1 if score > 0 else 0, source_id=f"synthetic:{grammar.seed}:{i}"))
    return examples


def write_tsv(examples, path):
    """label<TAB>space-joined tokens, one line per example."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(f"{ex.label}\t{' '.join(ex.tokens)}\n")


def read_tsv(path):
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                label_text, text = line.split("\t", 1)
                label = int(label_text)
            except ValueError as exc:
                raise DataError(f"{path}:{line_no + 1}: expected 'label<TAB>tokens'") from exc
            examples.append(Example(text.split(" "), label, source_id=f"{path}:{line_no}"))
    return examples


# ---------------------------------------------------------------------------
# pretrained vectors


def load_vectors(path):
    """Text-format vectors: token then space-separated floats per line."""
    tokens, rows = [], []
    width = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            values = np.asarray(parts[1:], dtype=np.float64)
            if width is None:
                width = values.size
            elif values.size != width:
                raise DataError(f"{path}:{line_no + 1}: expected {width} values, found {values.size}")
            tokens.append(parts[0])
            rows.append(values)
    if not rows:
        raise DataError(f"no vectors found in {path}")
    return tokens, np.stack(rows)


def standardize_embeddings(matrix):
    """Zero mean, unit variance per dimension across the loaded vocabulary."""
    matrix = np.asarray(matrix, dtype=np.float64)
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return (matrix - mean) / std


def build_embedding_matrix(vocab, tokens, vectors, dim=None):
    """Arrange loaded vectors by vocabulary id; missing words get zero rows."""
    dim = vectors.shape[1] if dim is None else dim
    by_token = {tok: row for tok, row in zip(tokens, vectors)}
    out = np.zeros((len(vocab), dim))
    for i, tok in enumerate(vocab.tokens()):
        row = by_token.get(tok)
        if row is not None:
            out[i] = row
    return out


# ---------------------------------------------------------------------------
# batching


def batch_examples(examples, vocab, batch_size, rng=None):
    """Right-padded batches; optionally shuffled with the caller's rng."""
    order = np.arange(len(examples))
    if rng is not None:
        order = rng.permutation(len(examples))
    batches = []
    for start in range(0, len(examples), batch_size):
        chunk = [examples[i] for i in order[start:start + batch_size]]
        longest = max(len(ex.tokens) for ex in chunk)
        ids = np.full((len(chunk), longest), PAD_ID, dtype=np.int64)
        lengths = np.zeros(len(chunk), dtype=np.int64)
        labels = np.zeros(len(chunk), dtype=np.int64)
        for row, ex in enumerate(chunk):
            encoded = vocab.encode(ex.tokens)
            ids[row, :encoded.size] = encoded
            lengths[row] = encoded.size
            labels[row] = ex.label
        batches.append(Batch(ids, lengths, labels, [ex.tokens for ex in chunk]))
    return batches
