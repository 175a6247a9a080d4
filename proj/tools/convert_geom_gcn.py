#!/usr/bin/env python3
"""Convert a geom-gcn style dataset directory into the TSV layout read by glognn.

Input (as distributed with the geom-gcn splits):
  <raw>/out1_graph_edges.txt         header line, then "u<TAB>v"
  <raw>/out1_node_feature_label.txt  header line, then "id<TAB>f1,f2,...<TAB>label"
  <splits>/<name>_split_0.6_0.2_<k>.npz  with train_mask / val_mask / test_mask

For the film (actor) graph the feature column lists active indices, not
values; pass --index-features for it.

Output:
  <out>/edges.tsv, features.tsv, labels.tsv, splits/split_<k>.tsv
"""

import argparse
import pathlib
import re
import sys

import numpy as np


def read_rows(path):
    with open(path) as fh:
        next(fh)  # header
        for line in fh:
            line = line.rstrip("\n")
            if line:
                yield line.split("\t")


def convert(raw, splits_dir, name, out, index_features):
    out.mkdir(parents=True, exist_ok=True)
    labels, feats = {}, {}
    for node, feat, label in read_rows(raw / "out1_node_feature_label.txt"):
        labels[int(node)] = int(label)
        feats[int(node)] = feat
    n = max(labels) + 1
    missing = [i for i in range(n) if i not in labels]
    if missing:
        sys.exit(f"nodes without labels: {missing[:10]}")

    with open(out / "labels.tsv", "w") as fh:
        for i in range(n):
            fh.write(f"{i}\t{labels[i]}\n")

    with open(out / "features.tsv", "w") as fh:
        for i in range(n):
            if index_features:
                idx = sorted({int(t) for t in feats[i].split(",") if t})
                fh.write(f"{i}\t" + " ".join(f"{j}:1" for j in idx) + "\n")
            else:
                fh.write(f"{i}\t{feats[i]}\n")

    with open(out / "edges.tsv", "w") as fh:
        for u, v in read_rows(raw / "out1_graph_edges.txt"):
            fh.write(f"{u}\t{v}\n")

    pattern = re.compile(re.escape(name) + r"_split_0\.6_0\.2_(\d+)\.npz$")
    found = sorted(
        (int(m.group(1)), p)
        for p in splits_dir.iterdir()
        if (m := pattern.match(p.name))
    )
    if not found:
        sys.exit(f"no {name}_split_0.6_0.2_<k>.npz files in {splits_dir}")
    (out / "splits").mkdir(exist_ok=True)
    for k, path in found:
        masks = np.load(path)
        with open(out / "splits" / f"split_{k}.tsv", "w") as fh:
            for part in ("train", "val", "test"):
                for i in np.flatnonzero(masks[f"{part}_mask"]):
                    fh.write(f"{i}\t{part}\n")
    print(f"{name}: n={n}, {len(found)} splits -> {out}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--raw", type=pathlib.Path, required=True, help="directory with out1_*.txt")
    ap.add_argument("--splits", type=pathlib.Path, required=True, help="directory with the .npz split files")
    ap.add_argument("--name", required=True, help="dataset name used in the split file names")
    ap.add_argument("--out", type=pathlib.Path, required=True)
    ap.add_argument("--index-features", action="store_true", help="feature column holds active indices")
    a = ap.parse_args()
    convert(a.raw, a.splits, a.name, a.out, a.index_features)


if __name__ == "__main__":
    main()
