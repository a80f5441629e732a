"""Planted-category synthetic corpora for desk-scale runs."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ingest import FINGERPRINT_BITS, format_fingerprint, write_text_atomic

FOOD_CATEGORIES = (
    "Bakery/Dessert/Snack",
    "Beverage Alcoholic",
    "Cereal/Crop/Bean",
    "Dairy",
    "Fruit",
    "Meat/Animal Product",
    "Plant/Vegetable",
    "Seafood",
    "Others",
)


def synthetic_corpus(
    n_ingredients: int,
    n_compounds: int,
    n_recipes: int,
    n_categories: int,
    seed: int,
    within_prob: float = 0.85,
    recipe_size: tuple[int, int] = (3, 8),
):
    """Generate an in-memory corpus with planted category structure.

    Ingredients are assigned to categories round-robin; in every category
    the first half (rounded up) are hubs linked to compounds of the same
    category. Each recipe draws a category and picks each ingredient from it
    with probability ``within_prob``. Compound fingerprints are noisy copies
    of a per-category prototype.

    Returns ``(recipes, associations, fingerprints, categories)`` where
    ``recipes`` is a list of name lists and ``categories`` maps ingredient
    names to category names.
    """
    if min(n_ingredients, n_compounds, n_recipes, n_categories) < 1:
        raise ValueError("all counts must be >= 1")
    if n_categories > len(FOOD_CATEGORIES):
        raise ValueError(f"n_categories must be <= {len(FOOD_CATEGORIES)}")
    if n_ingredients < 2 * n_categories:
        raise ValueError("n_ingredients must be >= 2 * n_categories (one hub and one non-hub each)")

    rng = np.random.default_rng(seed)
    width = len(str(max(n_ingredients, n_compounds) - 1))
    ing_names = [f"ing_{i:0{width}d}" for i in range(n_ingredients)]
    cmp_names = [f"cmp_{i:0{width}d}" for i in range(n_compounds)]
    ing_cat = np.arange(n_ingredients) % n_categories
    cmp_cat = np.arange(n_compounds) % n_categories
    members = [np.flatnonzero(ing_cat == c) for c in range(n_categories)]

    hubs = []
    for c in range(n_categories):
        ids = members[c]
        hubs.extend(ids[: (len(ids) + 1) // 2].tolist())
    hubs.sort()

    associations = []
    for i in hubs:
        own = np.flatnonzero(cmp_cat == ing_cat[i])
        pool = own if len(own) else np.arange(n_compounds)
        k = int(rng.integers(1, min(3, len(pool)) + 1))
        for j in sorted(rng.choice(pool, size=k, replace=False).tolist()):
            associations.append((ing_names[i], cmp_names[j]))

    prototypes = rng.random((n_categories, FINGERPRINT_BITS)) < 0.08
    fingerprints = {}
    for j in range(n_compounds):
        flip = rng.random(FINGERPRINT_BITS) < 0.01
        fingerprints[cmp_names[j]] = (prototypes[cmp_cat[j]] ^ flip).astype(np.uint8)

    lo, hi = recipe_size
    recipes = []
    for _ in range(n_recipes):
        c = int(rng.integers(n_categories))
        size = int(rng.integers(lo, hi + 1))
        chosen: list[int] = []
        for _ in range(size):
            if rng.random() < within_prob:
                i = int(rng.choice(members[c]))
            else:
                i = int(rng.integers(n_ingredients))
            if i not in chosen:
                chosen.append(i)
        recipes.append([ing_names[i] for i in chosen])

    categories = {ing_names[i]: FOOD_CATEGORIES[ing_cat[i]] for i in range(n_ingredients)}
    return recipes, associations, fingerprints, categories


def generate_synthetic_corpus(
    out_dir,
    n_ingredients: int = 160,
    n_compounds: int = 40,
    n_recipes: int = 6000,
    n_categories: int = 4,
    seed: int = 0,
) -> dict[str, Path]:
    """Write a synthetic corpus as four TSV files into ``out_dir``.

    Returns a dict with keys ``recipes``, ``associations``, ``fingerprints``
    and ``categories`` mapping to the written paths.
    """
    recipes, assoc, fps, cats = synthetic_corpus(
        n_ingredients, n_compounds, n_recipes, n_categories, seed
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "recipes": out / "recipes.tsv",
        "associations": out / "associations.tsv",
        "fingerprints": out / "fingerprints.tsv",
        "categories": out / "categories.tsv",
    }
    write_text_atomic(paths["recipes"], "".join("\t".join(r) + "\n" for r in recipes))
    write_text_atomic(paths["associations"], "".join(f"{a}\t{b}\n" for a, b in assoc))
    write_text_atomic(
        paths["fingerprints"],
        "".join(f"{name}\t{format_fingerprint(bits)}\n" for name, bits in fps.items()),
    )
    write_text_atomic(paths["categories"], "".join(f"{k}\t{v}\n" for k, v in cats.items()))
    return paths
