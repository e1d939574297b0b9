#!/usr/bin/env python3
"""Convert a citation-graph .npz archive to the plain-text dataset layout.

The archive holds the adjacency and attribute matrices in CSR form
(adj_data/adj_indices/adj_indptr/adj_shape, attr_* likewise) and a labels
array, the layout of the public cora.npz / citeseer.npz / cora_ml.npz files.

Writes edges.txt ("i j", each undirected edge once), features.txt
("# rows cols" header, then "i k v" triplets) and labels.txt (one class
per line) into the output directory.
"""

import argparse
import pathlib
import sys

import numpy as np
import scipy.sparse as sp


def load_csr(archive, prefix):
    return sp.csr_matrix(
        (archive[f"{prefix}_data"], archive[f"{prefix}_indices"], archive[f"{prefix}_indptr"]),
        shape=tuple(archive[f"{prefix}_shape"]),
    )


def convert(src: pathlib.Path, out: pathlib.Path) -> None:
    with np.load(src, allow_pickle=True) as archive:
        adj = load_csr(archive, "adj")
        if "attr_data" in archive:
            attr = load_csr(archive, "attr")
        elif "attr_matrix" in archive:
            attr = sp.csr_matrix(archive["attr_matrix"])
        else:
            raise ValueError(f"{src}: no attribute matrix")
        labels = np.asarray(archive["labels"]).astype(np.int64).ravel()

    n = adj.shape[0]
    if adj.shape != (n, n) or attr.shape[0] != n or labels.shape[0] != n:
        raise ValueError(f"{src}: inconsistent shapes {adj.shape}, {attr.shape}, {labels.shape}")
    _, labels = np.unique(labels, return_inverse=True)  # dense 0..c-1

    upper = sp.triu(adj + adj.T, k=1).tocoo()
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "edges.txt", np.column_stack([upper.row, upper.col]), fmt="%d")
    attr = attr.tocoo()
    with open(out / "features.txt", "w") as f:
        f.write(f"# {attr.shape[0]} {attr.shape[1]}\n")
        for i, k, v in zip(attr.row, attr.col, attr.data):
            f.write(f"{i} {k} {v:.17g}\n")
    np.savetxt(out / "labels.txt", labels, fmt="%d")
    print(f"{src.name}: {n} nodes, {upper.nnz} edges, {attr.shape[1]} features, {labels.max() + 1} classes -> {out}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("npz", type=pathlib.Path)
    parser.add_argument("out", type=pathlib.Path)
    args = parser.parse_args()
    try:
        convert(args.npz, args.out)
    except (OSError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
