import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtdta import smiles as sm


class TestTokenize:
    def test_simple_chain(self):
        assert sm.tokenize_smiles("CCO") == ["C", "C", "O"]

    def test_greedy_two_letter(self):
        assert sm.tokenize_smiles("CCl") == ["C", "Cl"]

    def test_bracket_atom_single_token(self):
        assert sm.tokenize_smiles("C[NH2+]C") == ["C", "[NH2+]", "C"]

    def test_percent_ring_closure(self):
        assert sm.tokenize_smiles("C%12CC%12") == ["C", "%12", "C", "C", "%12"]

    def test_unterminated_bracket(self):
        with pytest.raises(sm.MolParseError):
            sm.tokenize_smiles("C[NH2")

    def test_empty_rejected(self):
        with pytest.raises(sm.MolParseError):
            sm.tokenize_smiles("")

    @given(st.text(alphabet="CNOSPcno()=#123[]H+-lBr%", min_size=1, max_size=30))
    def test_roundtrip_concatenation(self, s):
        try:
            tokens = sm.tokenize_smiles(s)
        except sm.MolParseError:
            return
        assert "".join(tokens) == s


class TestParse:
    def test_ethanol(self):
        g = sm.parse_smiles("CCO")
        assert g.n_atoms == 3
        assert g.edges == [(0, 1), (1, 2)]

    def test_benzene(self):
        g = sm.parse_smiles("c1ccccc1")
        assert g.n_atoms == 6
        assert len(g.edges) == 6
        assert all(a.aromatic for a in g.atoms)

    def test_acetic_acid(self):
        g = sm.parse_smiles("CC(=O)O")
        assert g.n_atoms == 4
        assert g.edges == [(0, 1), (1, 2), (1, 3)]
        # carbonyl oxygen has no implicit hydrogens
        assert g.atoms[2].implicit_h == 0
        assert g.atoms[3].implicit_h == 1

    def test_unclosed_ring(self):
        with pytest.raises(sm.MolParseError):
            sm.parse_smiles("C1CC")

    def test_unbalanced_parentheses(self):
        with pytest.raises(sm.MolParseError):
            sm.parse_smiles("CC(C")
        with pytest.raises(sm.MolParseError):
            sm.parse_smiles("CC)C")

    def test_unknown_symbol(self):
        with pytest.raises(sm.MolParseError):
            sm.parse_smiles("CXzC")

    def test_dot_disconnected_rejected(self):
        with pytest.raises(sm.MolParseError):
            sm.parse_smiles("CC.O")

    @pytest.mark.parametrize("s", ["C/C=C/C", "C[C@H](N)C", "F\\C=C\\F"])
    def test_stereo_rejected(self, s):
        with pytest.raises(sm.MolParseError):
            sm.parse_smiles(s)

    def test_charged_bracket_atom(self):
        g = sm.parse_smiles("C[NH2+]C")
        n = g.atoms[1]
        assert n.charge == 1
        assert n.implicit_h == 2

    def test_triple_bond_valence(self):
        g = sm.parse_smiles("C#N")
        assert g.atoms[0].implicit_h == 1
        assert g.atoms[1].implicit_h == 0

    @pytest.mark.parametrize("s,n_rings", [
        ("CCO", 0), ("c1ccccc1", 1), ("C1CC1", 1),
        ("c1ccc2ccccc2c1", 2), ("CC(=O)Oc1ccccc1C(=O)O", 1),
    ])
    def test_cyclomatic_identity(self, s, n_rings):
        g = sm.parse_smiles(s)
        assert len(g.edges) == g.n_atoms - 1 + n_rings


class TestAtomFeatures:
    def test_dimension_constant(self):
        for s in ("CCO", "c1ccccc1", "C[NH2+]C", "FC(F)(F)Br"):
            g = sm.parse_smiles(s)
            assert g.atom_features.shape == (g.n_atoms, sm.ATOM_FEATURE_DIM)

    def test_terminal_carbon(self):
        g = sm.parse_smiles("CCO")
        v = g.atom_features[0]
        assert v[sm.ELEMENT_ONEHOT.index("C")] == 1.0
        assert v[11 + 1] == 1.0          # degree 1
        assert v[17 + 3] == 1.0          # 3 implicit H
        assert v[22] == 0.0 and v[23] == 0.0

    def test_aromatic_carbon(self):
        g = sm.parse_smiles("c1ccccc1")
        v = g.atom_features[0]
        assert v[11 + 2] == 1.0          # degree 2
        assert v[17 + 1] == 1.0          # 1 implicit H
        assert v[23] == 1.0

    def test_charge_clipped(self):
        a = sm.Atom(symbol="N", aromatic=False, charge=3, explicit_h=0)
        assert sm.atom_features(a)[22] == 2.0


class TestEncodeSequence:
    def test_protein_padding(self):
        vocab = sm.Vocab("protein", tokens=["M", "K", "T"])
        seq = sm.encode_sequence("MKT", vocab, 5)
        assert seq.indices.tolist() == [2, 3, 4, 0, 0]
        assert seq.true_len == 3

    def test_drug_tokens(self):
        vocab = sm.Vocab("drug", tokens=["C", "O"])
        seq = sm.encode_sequence("CCO", vocab, 4)
        assert seq.indices.tolist() == [2, 2, 3, 0]

    def test_unknown_token_maps_to_one(self):
        vocab = sm.Vocab("drug", tokens=["C"])
        seq = sm.encode_sequence("CN", vocab, 4)
        assert seq.indices.tolist() == [2, 1, 0, 0]

    def test_truncation(self):
        vocab = sm.Vocab("protein", tokens=list("MKTA"))
        seq = sm.encode_sequence("MKTA", vocab, 2)
        assert seq.true_len == 2
        assert seq.indices.tolist() == [2, 3]

    def test_empty_rejected(self):
        with pytest.raises(sm.MolParseError):
            sm.encode_sequence("", sm.Vocab("protein"), 4)

    def test_vocab_roundtrip(self, tmp_path):
        vocab = sm.Vocab.build("drug", [["C", "Cl"], ["O", "C"]])
        path = tmp_path / "vocab.tsv"
        vocab.save(path)
        loaded = sm.Vocab.load(path, "drug")
        assert loaded.index == vocab.index
        assert path.read_text() == "C\t2\nCl\t3\nO\t4\n"
