"""Convert the UCI Pima diabetes and Statlog German credit (numeric) files to
LIBSVM format with features min-max scaled to [-1, 1] (same convention as
LIBSVM's svm-scale and its *_scale dataset variants).

Inputs are the KEEL-format pima.dat and german.data-numeric as redistributed in
the `common-datasets` PyPI package (common_datasets/data/classification/...).
"""
import sys


def scale(rows):
    d = len(rows[0][1])
    lo = [min(r[1][j] for r in rows) for j in range(d)]
    hi = [max(r[1][j] for r in rows) for j in range(d)]
    out = []
    for y, x in rows:
        feats = []
        for j, v in enumerate(x):
            if hi[j] == lo[j]:
                continue
            s = -1.0 + 2.0 * (v - lo[j]) / (hi[j] - lo[j])
            if s != 0.0:
                feats.append(f"{j + 1}:{s:.6g}")
        out.append(f"{y:+d} " + " ".join(feats))
    return "\n".join(out) + "\n"


def pima(path):
    rows = []
    for line in open(path):
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        *vals, cls = line.split(",")
        rows.append((1 if cls.strip() == "positive" else -1, [float(v) for v in vals]))
    return rows


def german(path):
    rows = []
    for line in open(path):
        vals = line.split()
        if not vals:
            continue
        rows.append((1 if vals[-1] == "1" else -1, [float(v) for v in vals[:-1]]))
    return rows


if __name__ == "__main__":
    pima_path, german_path, out_dir = sys.argv[1:4]
    open(f"{out_dir}/diabetes_scale", "w").write(scale(pima(pima_path)))
    open(f"{out_dir}/german.numer_scale", "w").write(scale(german(german_path)))
