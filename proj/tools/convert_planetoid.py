#!/usr/bin/env python3
"""Convert the standard pickled citation-dataset distribution to the plain-text
family this project ingests.

Expects the eight-file family in --raw-dir:

    ind.<name>.x ind.<name>.y ind.<name>.tx ind.<name>.ty
    ind.<name>.allx ind.<name>.ally ind.<name>.graph ind.<name>.test.index

and writes <name>.features.csv, <name>.labels.csv, <name>.edges,
<name>.masks.csv into --out-dir. The standard public split is applied:
train = the labeled x/y block, validation = the next 500 nodes, test = the
test.index block. Nodes inside the test span that test.index skips (isolated
CiteSeer papers) keep zero features and fall back to class 0, matching the
reference loaders.

Usage:
    python3 tools/convert_planetoid.py --name cora --raw-dir data/raw --out-dir data
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load_pickle(path: Path):
    with open(path, "rb") as fh:
        # the public files were pickled under python 2
        return pickle.load(fh, encoding="latin1")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--name", required=True, choices=["cora", "citeseer", "pubmed"])
    ap.add_argument("--raw-dir", required=True)
    ap.add_argument("--out-dir", required=True)
    args = ap.parse_args()

    raw = Path(args.raw_dir)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    objs = {}
    for part in ["x", "y", "tx", "ty", "allx", "ally", "graph"]:
        path = raw / f"ind.{args.name}.{part}"
        if not path.exists():
            print(f"missing {path}", file=sys.stderr)
            return 1
        objs[part] = load_pickle(path)

    test_idx = np.loadtxt(raw / f"ind.{args.name}.test.index", dtype=np.int64)

    allx = sp.csr_matrix(objs["allx"])
    tx = sp.csr_matrix(objs["tx"])
    ally = np.asarray(objs["ally"])
    ty = np.asarray(objs["ty"])
    graph = objs["graph"]

    n_allx = allx.shape[0]
    d = allx.shape[1]
    m = ally.shape[1]
    n = max(int(test_idx.max()) + 1, n_allx, len(graph))

    # Assemble features/labels at their graph positions. tx/ty rows follow
    # the shuffled order of test.index.
    features = sp.lil_matrix((n, d))
    features[:n_allx] = allx
    onehot = np.zeros((n, m))
    onehot[:n_allx] = ally
    for k, node in enumerate(test_idx):
        features[int(node)] = tx[k]
        onehot[int(node)] = ty[k]
    labels = onehot.argmax(axis=1)  # all-zero rows (skipped span nodes) -> 0

    train_count = np.asarray(objs["y"]).shape[0]
    split = np.full(n, "none", dtype=object)
    split[:train_count] = "train"
    split[train_count:train_count + 500] = "val"
    split[test_idx] = "test"

    base = out / args.name
    coo = features.tocoo()
    with open(f"{base}.features.csv", "w") as fh:
        fh.write(f"# nodes={n} features={d}\n")
        fh.write("node,feature,value\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i},{j},{v:.17g}\n")

    with open(f"{base}.labels.csv", "w") as fh:
        fh.write(f"# classes={m}\n")
        fh.write("node,label\n")
        for i, y in enumerate(labels):
            fh.write(f"{i},{int(y)}\n")

    seen = set()
    with open(f"{base}.edges", "w") as fh:
        for u, neighbors in graph.items():
            for v in neighbors:
                if u == v:
                    continue
                key = (min(int(u), int(v)), max(int(u), int(v)))
                if key in seen:
                    continue
                seen.add(key)
                fh.write(f"{key[0]} {key[1]}\n")

    with open(f"{base}.masks.csv", "w") as fh:
        fh.write("node,split\n")
        for i in range(n):
            fh.write(f"{i},{split[i]}\n")

    print(f"wrote {base}.features.csv / .labels.csv / .edges / .masks.csv "
          f"({n} nodes, {len(seen)} undirected edges, {m} classes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
