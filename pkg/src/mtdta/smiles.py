"""SMILES tokenization, molecular graph construction, sequence encoding.

Inputs are expected to be pre-canonicalized and isomer-free: stereo
markers (/ \\ @) are rejected rather than ignored, and dot-disconnected
mixtures are rejected because downstream graph pooling assumes a single
connected ligand.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MolParseError",
    "Atom",
    "MoleculeGraph",
    "TokenSeq",
    "Vocab",
    "tokenize_smiles",
    "parse_smiles",
    "atom_features",
    "encode_sequence",
    "ATOM_FEATURE_DIM",
]


class MolParseError(ValueError):
    """Input is outside the supported SMILES subset or malformed."""


ORGANIC_SUBSET = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_SUBSET = {"b", "c", "n", "o", "p", "s"}
DEFAULT_VALENCE = {"B": 3, "C": 4, "N": 3, "O": 2, "P": 3, "S": 2,
                   "F": 1, "Cl": 1, "Br": 1, "I": 1}

ELEMENT_ONEHOT = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"]
# element (10 + other) + degree 0..5 + implicit H 0..4 + charge + aromatic
ATOM_FEATURE_DIM = 11 + 6 + 5 + 1 + 1

_TWO_LETTER = ("Cl", "Br")


def tokenize_smiles(s):
    """Split a SMILES string into tokens, greedily.

    Two-letter elements (Cl, Br), bracket atoms ``[...]`` and ring
    closures ``%nn`` become single tokens; everything else is one
    character per token.
    """
    if not s:
        raise MolParseError("empty SMILES")
    if not s.isascii():
        raise MolParseError("SMILES must be ASCII")
    tokens = []
    i = 0
    while i < len(s):
        ch = s[i]
        if ch == "[":
            end = s.find("]", i)
            if end < 0:
                raise MolParseError(f"unterminated bracket atom at position {i}")
            tokens.append(s[i:end + 1])
            i = end + 1
        elif ch == "%":
            if i + 2 >= len(s) or not s[i + 1:i + 3].isdigit():
                raise MolParseError(f"malformed ring closure at position {i}")
            tokens.append(s[i:i + 3])
            i += 3
        elif s[i:i + 2] in _TWO_LETTER:
            tokens.append(s[i:i + 2])
            i += 2
        else:
            tokens.append(ch)
            i += 1
    return tokens


@dataclass
class Atom:
    symbol: str            # element symbol, capitalized
    aromatic: bool
    charge: int = 0
    explicit_h: int | None = None   # set for bracket atoms
    index: int = 0
    bond_order_sum: float = 0.0
    degree: int = 0

    @property
    def implicit_h(self):
        if self.explicit_h is not None:
            return self.explicit_h
        valence = DEFAULT_VALENCE.get(self.symbol)
        if valence is None:
            return 0
        allowed = valence + self.charge
        return max(0, int(allowed - self.bond_order_sum + 1e-9))


@dataclass
class MoleculeGraph:
    atom_features: np.ndarray          # [n_atoms, ATOM_FEATURE_DIM]
    edges: list                        # unordered (i, j) pairs, i < j
    n_atoms: int
    atoms: list = field(default_factory=list, repr=False)


_BRACKET_RE = re.compile(
    r"^\[(?P<isotope>\d+)?(?P<symbol>[A-Z][a-z]?|[bcnops])"
    r"(?P<hcount>H\d*)?(?P<charge>\+{1,3}|-{1,3}|\+\d|-\d)?\]$")

_BOND_ORDER = {"-": 1.0, "=": 2.0, "#": 3.0, ":": 1.5}


def _parse_bracket(token):
    if any(c in token for c in "@/\\"):
        raise MolParseError(f"stereo marker in {token!r}: input must be isomer-free")
    m = _BRACKET_RE.match(token)
    if not m:
        raise MolParseError(f"unsupported bracket atom {token!r}")
    raw = m.group("symbol")
    aromatic = raw.islower()
    symbol = raw.capitalize()
    h = m.group("hcount")
    explicit_h = 0 if h is None else (1 if h == "H" else int(h[1:]))
    c = m.group("charge")
    if c is None:
        charge = 0
    elif c[-1].isdigit():
        charge = int(c[1:]) * (1 if c[0] == "+" else -1)
    else:
        charge = len(c) * (1 if c[0] == "+" else -1)
    return Atom(symbol=symbol, aromatic=aromatic, charge=charge,
                explicit_h=explicit_h)


def parse_smiles(s):
    """Parse a supported-subset SMILES string into a :class:`MoleculeGraph`.

    Atoms become nodes in reading order; ring-closure digits add edges.
    Implicit hydrogens follow standard valences (aromatic bonds count
    1.5) adjusted by formal charge; bracket atoms carry exactly the
    hydrogen count they state.
    """
    tokens = tokenize_smiles(s)
    atoms: list[Atom] = []
    edges: dict[tuple, float] = {}
    stack: list[int] = []
    prev: int | None = None
    pending_bond: float | None = None
    ring_open: dict[str, tuple] = {}

    def add_atom(atom):
        nonlocal prev, pending_bond
        atom.index = len(atoms)
        atoms.append(atom)
        if prev is not None:
            _add_bond(atoms, edges, prev, atom.index, pending_bond)
        pending_bond = None
        prev = atom.index

    def close_ring(label):
        nonlocal pending_bond
        if prev is None:
            raise MolParseError(f"ring closure {label!r} before any atom")
        if label in ring_open:
            other, bond = ring_open.pop(label)
            order = pending_bond if pending_bond is not None else bond
            if other == prev:
                raise MolParseError(f"ring closure {label!r} forms a self-edge")
            _add_bond(atoms, edges, other, prev, order)
        else:
            ring_open[label] = (prev, pending_bond)
        pending_bond = None

    for tok in tokens:
        if tok in ("/", "\\") or tok == "@":
            raise MolParseError("stereo marker present: input must be isomer-free")
        if tok == ".":
            raise MolParseError("dot-disconnected SMILES not supported")
        if tok.startswith("["):
            add_atom(_parse_bracket(tok))
        elif tok in ORGANIC_SUBSET:
            add_atom(Atom(symbol=tok, aromatic=False))
        elif tok in AROMATIC_SUBSET:
            add_atom(Atom(symbol=tok.capitalize(), aromatic=True))
        elif tok in _BOND_ORDER:
            if pending_bond is not None:
                raise MolParseError("two consecutive bond symbols")
            pending_bond = _BOND_ORDER[tok]
        elif tok == "(":
            if prev is None:
                raise MolParseError("branch before any atom")
            stack.append(prev)
        elif tok == ")":
            if not stack:
                raise MolParseError("unbalanced parentheses: extra ')'")
            prev = stack.pop()
        elif tok.isdigit() or tok.startswith("%"):
            close_ring(tok.lstrip("%"))
        else:
            raise MolParseError(f"unknown atom or symbol {tok!r}")

    if stack:
        raise MolParseError("unbalanced parentheses: missing ')'")
    if ring_open:
        raise MolParseError(f"unclosed ring closure(s): {sorted(ring_open)}")
    if not atoms:
        raise MolParseError("no atoms in SMILES")

    feats = np.stack([atom_features(a) for a in atoms])
    edge_list = sorted(edges)
    return MoleculeGraph(atom_features=feats, edges=edge_list,
                         n_atoms=len(atoms), atoms=atoms)


def _add_bond(atoms, edges, i, j, order):
    if order is None:
        order = 1.5 if atoms[i].aromatic and atoms[j].aromatic else 1.0
    key = (min(i, j), max(i, j))
    if key in edges:
        raise MolParseError(f"duplicate bond between atoms {key}")
    edges[key] = order
    atoms[i].bond_order_sum += order
    atoms[j].bond_order_sum += order
    atoms[i].degree += 1
    atoms[j].degree += 1


def atom_features(atom):
    """Fixed 24-dim feature vector for one parsed atom.

    Layout: one-hot element over the organic subset plus "other" (11),
    one-hot degree 0-5 (6), one-hot implicit-H count 0-4 (5), formal
    charge clipped to [-2, 2] (1), aromatic flag (1).
    """
    v = np.zeros(ATOM_FEATURE_DIM)
    try:
        v[ELEMENT_ONEHOT.index(atom.symbol)] = 1.0
    except ValueError:
        v[10] = 1.0
    v[11 + min(atom.degree, 5)] = 1.0
    v[17 + min(atom.implicit_h, 4)] = 1.0
    v[22] = float(np.clip(atom.charge, -2, 2))
    v[23] = 1.0 if atom.aromatic else 0.0
    return v


PAD_INDEX = 0
UNK_INDEX = 1

AMINO_ACIDS = list("ACDEFGHIKLMNPQRSTVWY") + ["X"]


@dataclass
class TokenSeq:
    indices: np.ndarray    # int64, length max_len
    true_len: int
    vocab_id: str          # "drug" or "protein"


class Vocab:
    """Token-to-index map: pad=0, unknown=1, known tokens from 2.

    Built from the training split only; tokens first seen later map to
    the unknown index.
    """

    def __init__(self, vocab_id, tokens=None):
        self.vocab_id = vocab_id
        self.index = {}
        if tokens:
            for t in tokens:
                self.add(t)

    def add(self, token):
        if token not in self.index:
            self.index[token] = len(self.index) + 2
        return self.index[token]

    def __len__(self):
        return len(self.index)

    @property
    def size(self):
        """Total index space including pad and unknown."""
        return len(self.index) + 2

    def lookup(self, token):
        return self.index.get(token, UNK_INDEX)

    @classmethod
    def build(cls, vocab_id, token_lists):
        vocab = cls(vocab_id)
        for tokens in token_lists:
            for t in tokens:
                vocab.add(t)
        return vocab

    def save(self, path):
        with open(path, "w") as fh:
            for token, idx in sorted(self.index.items(), key=lambda kv: kv[1]):
                fh.write(f"{token}\t{idx}\n")

    @classmethod
    def load(cls, path, vocab_id):
        vocab = cls(vocab_id)
        with open(path) as fh:
            for line in fh:
                token, idx = line.rstrip("\n").split("\t")
                vocab.index[token] = int(idx)
        return vocab


def encode_sequence(s, vocab, max_len):
    """Map a string (protein) or SMILES to padded token indices."""
    if not s:
        raise MolParseError("empty sequence")
    if vocab.vocab_id == "drug":
        tokens = tokenize_smiles(s)
    else:
        tokens = list(s)
    tokens = tokens[:max_len]
    indices = np.zeros(max_len, dtype=np.int64)
    for i, t in enumerate(tokens):
        indices[i] = vocab.lookup(t)
    return TokenSeq(indices=indices, true_len=len(tokens), vocab_id=vocab.vocab_id)
