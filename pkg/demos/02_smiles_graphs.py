"""Parse SMILES strings into molecular graphs with atom features.

Shows implicit-hydrogen accounting, aromatic rings, and the error
behavior on unsupported input.
"""

from mtdta import smiles as sm

for s in ("CCO", "c1ccccc1", "CC(=O)[O-]", "C1CC1"):
    mol = sm.parse_smiles(s)
    print(f"\n{s}: {mol.n_atoms} atoms, edges {mol.edges}")
    for atom in mol.atoms:
        print(f"  {atom.symbol:2s} aromatic={atom.aromatic} "
              f"charge={atom.charge:+d} implicit_H={atom.implicit_h}")

feats = sm.parse_smiles("CCO").atom_features
print(f"\nfeature matrix shape: {feats.shape} "
      f"(element one-hot + degree + H count + charge + aromatic)")

# Stereochemistry and disconnected structures are rejected, not ignored.
for bad in ("C/C=C/C", "[Na+].[Cl-]", "C1CC"):
    try:
        sm.parse_smiles(bad)
    except sm.MolParseError as exc:
        print(f"rejected {bad!r}: {exc}")
