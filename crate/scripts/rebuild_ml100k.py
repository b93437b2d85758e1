#!/usr/bin/env python3
"""Rebuild the MovieLens-100K files (u.data, u.item, u.user) in their
original GroupLens layout from the copy bundled in the pytorch-widedeep
wheel. Usage:

    pip download --no-deps -d /tmp/wd pytorch-widedeep==1.7.0
    python3 scripts/rebuild_ml100k.py /tmp/wd/pytorch_widedeep-1.7.0-py3-none-any.whl data/ml-100k
"""
import io
import os
import sys
import zipfile

import pandas as pd

PREFIX = "pytorch_widedeep/datasets/data/MovieLens100k_"
GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


def table(wheel, name):
    with wheel.open(PREFIX + name + ".parquet.brotli") as fh:
        return pd.read_parquet(io.BytesIO(fh.read()))


def text(value):
    if value is None or (isinstance(value, float) and value != value):
        return ""
    return str(value)


def main(wheel_path, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    wheel = zipfile.ZipFile(wheel_path)

    ratings = table(wheel, "data")
    with open(os.path.join(out_dir, "u.data"), "w", newline="\n") as fh:
        for row in ratings.itertuples(index=False):
            fh.write(f"{row.user_id}\t{row.movie_id}\t{row.rating}\t{row.timestamp}\n")

    items = table(wheel, "items")
    with open(os.path.join(out_dir, "u.item"), "wb") as fh:
        for _, row in items.iterrows():
            cols = [
                str(row["movie_id"]),
                text(row["movie_title"]),
                text(row["release_date"]),
                text(row["video_release_date"]),
                text(row["IMDb_URL"]),
            ] + [str(int(row[g])) for g in GENRES]
            fh.write(("|".join(cols) + "\n").encode("latin-1", errors="replace"))

    users = table(wheel, "users")
    with open(os.path.join(out_dir, "u.user"), "w", newline="\n") as fh:
        for row in users.itertuples(index=False):
            fh.write(f"{row.user_id}|{row.age}|{row.gender}|{row.occupation}|{row.zip_code}\n")

    with open(os.path.join(out_dir, "u.genre"), "w", newline="\n") as fh:
        for idx, g in enumerate(GENRES):
            fh.write(f"{g}|{idx}\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
