"""Synthetic tabular fixtures shared by pipeline and acceptance tests."""

import csv
import random

# Low per-column cardinality keeps within-group records token-similar, which
# is what lets a from-scratch desk-scale model (no pretrained priors) place
# same-group rows near each other.
GROUP_PROFILES = [
    {
        "job": ["clerk", "teacher"],
        "city": ["porto", "lisbon"],
        "age": [28, 29, 30],
        "balance": [140.5, 150.5],
        "rating": [1, 2],
        "member": "yes",
    },
    {
        "job": ["miner", "sailor"],
        "city": ["osaka", "harbin"],
        "age": [66, 67, 68],
        "balance": [910.5, 920.5],
        "rating": [8, 9],
        "member": "no",
    },
]

COLUMNS = ["age", "job", "balance", "city", "rating", "member"]


def two_group_rows(n=400, seed=0):
    """Mixed numeric/categorical rows drawn from two latent groups."""
    rng = random.Random(seed)
    rows = []
    groups = []
    for i in range(n):
        group = i % 2
        profile = GROUP_PROFILES[group]
        rows.append(
            {
                "age": rng.choice(profile["age"]),
                "job": rng.choice(profile["job"]),
                "balance": rng.choice(profile["balance"]),
                "city": rng.choice(profile["city"]),
                "rating": rng.choice(profile["rating"]),
                "member": profile["member"],
            }
        )
        groups.append(group)
    return rows, groups


def write_two_group_csv(path, n=400, seed=0):
    rows, groups = two_group_rows(n=n, seed=seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return groups
