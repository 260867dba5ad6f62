"""Semantic index: residual k-means codebooks, semantic IDs and the prefix trie."""

from collections import defaultdict
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import numpy.typing as npt
from scipy.spatial.distance import cdist

from gemrec.domain.exceptions import (
    ConfigurationError,
    DegenerateCorpusError,
    UniquenessViolationError,
    ValidationError,
)
from gemrec.domain.models import Codebooks, FloatArray, ItemEmbedding, SemanticId
from gemrec.infrastructure.logging import get_logger

logger = get_logger(__name__)

IntArray = npt.NDArray[np.int64]


@dataclass(frozen=True)
class SyntheticCorpus:
    """Embeddings drawn from a two-level Gaussian mixture plus their labels."""

    embeddings: list[ItemEmbedding]
    categories: IntArray
    subcategories: IntArray


def synth_embeddings(
    n_items: int,
    dim: int,
    n_categories: int,
    n_subcategories: int,
    category_scale: float,
    subcategory_scale: float,
    noise_scale: float,
    seed: int,
) -> SyntheticCorpus:
    """
    Draw item embeddings from a category -> subcategory Gaussian mixture.

    Args:
        n_items: Number of items
        dim: Embedding dimension E
        n_categories: Number of top-level categories
        n_subcategories: Subcategories per category
        category_scale: Std of category centers around the origin
        subcategory_scale: Std of subcategory offsets around their category
        noise_scale: Per-item isotropic noise
        seed: RNG seed

    Returns:
        SyntheticCorpus with item ids 0..n_items-1
    """
    if dim < 2:
        raise ConfigurationError("Embedding dimension must be >= 2", dim=dim)
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, category_scale, size=(n_categories, dim))
    offsets = rng.normal(0.0, subcategory_scale, size=(n_categories, n_subcategories, dim))
    categories = rng.integers(n_categories, size=n_items)
    subcategories = rng.integers(n_subcategories, size=n_items)
    noise = rng.normal(0.0, noise_scale, size=(n_items, dim))
    vectors = centers[categories] + offsets[categories, subcategories] + noise

    embeddings = [
        ItemEmbedding(item_id=i, vector=tuple(float(v) for v in row))
        for i, row in enumerate(vectors)
    ]
    logger.info(
        "Synthesized item embeddings",
        n_items=n_items,
        dim=dim,
        n_categories=n_categories,
        n_subcategories=n_subcategories,
    )
    return SyntheticCorpus(embeddings, categories.astype(np.int64), subcategories.astype(np.int64))


def embedding_matrix(embeddings: Sequence[ItemEmbedding]) -> FloatArray:
    """
    Stack embeddings into an (N, E) matrix in input order.

    Raises:
        ValidationError: If the corpus is empty or dimensions differ
    """
    if not embeddings:
        raise ValidationError("Embedding corpus is empty")
    dim = embeddings[0].dim
    if any(e.dim != dim for e in embeddings):
        raise ValidationError("Embeddings have inconsistent dimensions", expected=dim)
    return np.asarray([e.vector for e in embeddings], dtype=np.float64)


def _nearest(points: FloatArray, centroids: FloatArray) -> IntArray:
    """Index of the nearest centroid per row; argmin keeps the lowest index on ties."""
    distances = cdist(points, centroids, metric="sqeuclidean")
    return np.argmin(distances, axis=1).astype(np.int64)


def _kmeans_plus_plus(
    distinct: FloatArray, k: int, rng: np.random.Generator
) -> FloatArray:
    """Pick k distinct rows with D^2 weighting."""
    chosen = [int(rng.integers(len(distinct)))]
    closest = cdist(distinct, distinct[chosen], metric="sqeuclidean").min(axis=1)
    while len(chosen) < k:
        weights = closest / closest.sum()
        idx = int(rng.choice(len(distinct), p=weights))
        chosen.append(idx)
        closest = np.minimum(
            closest, cdist(distinct, distinct[[idx]], metric="sqeuclidean")[:, 0]
        )
    return distinct[chosen].copy()


def _update_centroids(
    points: FloatArray, labels: IntArray, centroids: FloatArray
) -> FloatArray:
    """Recompute means; reseed each empty cluster at the point farthest from its centroid."""
    k = len(centroids)
    updated = centroids.copy()
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts):
        updated[j] = points[labels == j].mean(axis=0)

    empty = np.flatnonzero(counts == 0)
    if len(empty):
        spread = np.sum((points - updated[labels]) ** 2, axis=1)
        for j in empty:
            far = int(np.argmax(spread))
            updated[j] = points[far]
            spread[far] = -1.0
        logger.debug("Reseeded empty clusters", clusters=empty.tolist())
    return updated


def kmeans(
    points: FloatArray,
    k: int,
    iterations: int,
    rng: np.random.Generator,
    n_init: int = 3,
) -> FloatArray:
    """
    Lloyd's k-means with k-means++ seeding and best-of-n restarts.

    Args:
        points: (N, E) data
        k: Number of centroids
        iterations: Maximum Lloyd iterations (at least one update is always run)
        rng: Random generator
        n_init: Number of seeded restarts; the lowest inertia wins

    Returns:
        (k, E) centroid table

    Raises:
        DegenerateCorpusError: If there are fewer than k distinct points
    """
    distinct = np.unique(points, axis=0)
    if len(distinct) < k:
        raise DegenerateCorpusError(
            f"Need at least {k} distinct points, got {len(distinct)}",
            distinct=len(distinct),
            codebook_size=k,
        )

    best: Optional[FloatArray] = None
    best_inertia = np.inf
    for _ in range(max(n_init, 1)):
        centroids = _kmeans_plus_plus(distinct, k, rng)
        labels: Optional[IntArray] = None
        for _ in range(max(iterations, 1)):
            new_labels = _nearest(points, centroids)
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            centroids = _update_centroids(points, labels, centroids)
        inertia = float(np.min(cdist(points, centroids, metric="sqeuclidean"), axis=1).sum())
        if inertia < best_inertia:
            best, best_inertia = centroids, inertia

    assert best is not None
    return best


def fit_residual_quantizer(
    embeddings: Sequence[ItemEmbedding],
    depth: int,
    codebook_size: int,
    iterations: int = 50,
    seed: int = 0,
    n_init: int = 3,
) -> Codebooks:
    """
    Fit residual k-means codebooks, coarse to fine.

    Level k is fit on the residuals left after subtracting the nearest
    centroids of levels < k. Each level draws from its own seeded stream,
    so the first k levels do not depend on the total depth.

    Args:
        embeddings: Item embeddings
        depth: Number of levels D
        codebook_size: Centroids per level C
        iterations: Lloyd iterations per level
        seed: RNG seed
        n_init: k-means restarts per level

    Returns:
        Fitted Codebooks

    Raises:
        ConfigurationError: If depth or codebook size is < 1
        DegenerateCorpusError: If any level has fewer than C distinct residuals
    """
    if depth < 1 or codebook_size < 1:
        raise ConfigurationError(
            "Depth and codebook size must be >= 1", depth=depth, codebook_size=codebook_size
        )
    residual = embedding_matrix(embeddings)
    levels: list[FloatArray] = []

    for level in range(depth):
        rng = np.random.default_rng([seed, level])
        try:
            centroids = kmeans(residual, codebook_size, iterations, rng, n_init=n_init)
        except DegenerateCorpusError as e:
            e.context["level"] = level + 1
            raise
        residual = residual - centroids[_nearest(residual, centroids)]
        levels.append(centroids)
        logger.debug(
            "Fitted codebook level",
            level=level + 1,
            mean_residual=float(np.mean(np.sum(residual**2, axis=1))),
        )

    logger.info(
        "Fitted residual quantizer",
        depth=depth,
        codebook_size=codebook_size,
        n_items=len(embeddings),
    )
    return Codebooks(tuple(levels))


def assign_codes(matrix: FloatArray, codebooks: Codebooks) -> IntArray:
    """
    Vectorized coarse-to-fine code assignment.

    Returns:
        (N, D) integer code matrix

    Raises:
        ValidationError: If the embedding dimension does not match the codebooks
    """
    if matrix.ndim != 2 or matrix.shape[1] != codebooks.dim:
        raise ValidationError(
            "Embedding dimension does not match codebooks",
            expected=codebooks.dim,
            got=matrix.shape[-1],
        )
    residual = matrix.copy()
    codes = np.empty((len(matrix), codebooks.depth), dtype=np.int64)
    for k, table in enumerate(codebooks.levels):
        codes[:, k] = _nearest(residual, table)
        residual = residual - table[codes[:, k]]
    return codes


def assign_semantic_id(embedding: ItemEmbedding, codebooks: Codebooks) -> tuple[int, ...]:
    """Code tuple of one embedding (nearest centroid per level, lowest index on ties)."""
    row = np.asarray([embedding.vector], dtype=np.float64)
    return tuple(int(c) for c in assign_codes(row, codebooks)[0])


def quantization_error(embeddings: Sequence[ItemEmbedding], codebooks: Codebooks) -> float:
    """Mean squared norm of the residual left after all levels."""
    matrix = embedding_matrix(embeddings)
    codes = assign_codes(matrix, codebooks)
    reconstruction = np.zeros_like(matrix)
    for k, table in enumerate(codebooks.levels):
        reconstruction += table[codes[:, k]]
    return float(np.mean(np.sum((matrix - reconstruction) ** 2, axis=1)))


def disambiguate(items: Iterable[tuple[int, tuple[int, ...]]]) -> dict[int, SemanticId]:
    """
    Give items with identical code tuples distinct disambiguators.

    Disambiguators are 0, 1, 2, ... in ascending item id within each
    collision group, independent of input order.

    Args:
        items: (item_id, codes) pairs

    Returns:
        Mapping item_id -> SemanticId
    """
    groups: dict[tuple[int, ...], list[int]] = defaultdict(list)
    for item_id, codes in items:
        groups[tuple(codes)].append(item_id)

    sid_map: dict[int, SemanticId] = {}
    for codes, members in groups.items():
        for position, item_id in enumerate(sorted(members)):
            sid_map[item_id] = SemanticId(codes, position)

    collisions = sum(1 for members in groups.values() if len(members) > 1)
    if collisions:
        logger.debug("Resolved semantic ID collisions", groups=collisions)
    return dict(sorted(sid_map.items()))


def assign_semantic_ids(
    embeddings: Sequence[ItemEmbedding], codebooks: Codebooks
) -> dict[int, SemanticId]:
    """Assign codes to a whole corpus and disambiguate collisions."""
    codes = assign_codes(embedding_matrix(embeddings), codebooks)
    pairs = [(e.item_id, tuple(int(c) for c in row)) for e, row in zip(embeddings, codes)]
    sid_map = disambiguate(pairs)
    logger.info(
        "Assigned semantic IDs",
        n_items=len(sid_map),
        max_disambiguator=max((s.disambiguator for s in sid_map.values()), default=0),
    )
    return sid_map


def prefix_match_depth(a: SemanticId, b: SemanticId) -> int:
    """
    Length of the longest common code prefix (disambiguator excluded).

    Raises:
        ValidationError: If the IDs have different depths
    """
    if a.depth != b.depth:
        raise ValidationError("Semantic IDs have different depths", a=str(a), b=str(b))
    depth = 0
    for x, y in zip(a.codes, b.codes):
        if x != y:
            break
        depth += 1
    return depth


@dataclass
class TrieNode:
    """Trie node; leaves (disambiguator level) carry the item id."""

    children: dict[int, "TrieNode"] = field(default_factory=dict)
    count: int = 0
    item_id: Optional[int] = None


PathLike = Union[SemanticId, Sequence[int]]


class SidTrie:
    """
    Prefix trie over full semantic-ID paths (codes then disambiguator).

    Built once by `build_trie` and read-only afterwards.
    """

    def __init__(self, depth: int) -> None:
        """
        Initialize an empty trie.

        Args:
            depth: Code depth D; leaves sit at depth D + 1
        """
        self.depth = depth
        self.root = TrieNode()
        self._sids: dict[int, SemanticId] = {}

    def _insert(self, item_id: int, sid: SemanticId) -> None:
        node = self.root
        path = sid.path
        for i, value in enumerate(path):
            child = node.children.get(value)
            if child is None:
                child = TrieNode()
                node.children[value] = child
            node = child
            if i == len(path) - 1 and node.item_id is not None:
                raise UniquenessViolationError(
                    f"Semantic ID {sid} is shared by items {node.item_id} and {item_id}",
                    sid=str(sid),
                    items=[node.item_id, item_id],
                )
        node.item_id = item_id
        self._sids[item_id] = sid

        node = self.root
        node.count += 1
        for value in path:
            node = node.children[value]
            node.count += 1

    @staticmethod
    def _as_path(prefix: PathLike) -> tuple[int, ...]:
        return prefix.path if isinstance(prefix, SemanticId) else tuple(prefix)

    def node(self, prefix: PathLike) -> Optional[TrieNode]:
        """Node reached by a path prefix, or None if the prefix is absent."""
        node = self.root
        for value in self._as_path(prefix):
            next_node = node.children.get(value)
            if next_node is None:
                return None
            node = next_node
        return node

    def children(self, prefix: PathLike) -> list[int]:
        """Child values under a prefix, ascending; empty for unknown prefixes."""
        node = self.node(prefix)
        return sorted(node.children) if node is not None else []

    def count(self, prefix: PathLike) -> int:
        """Number of items in the subtree under a prefix."""
        node = self.node(prefix)
        return node.count if node is not None else 0

    def resolve(self, sid: PathLike) -> Optional[int]:
        """Item id at a full path, or None if the path is not a real item."""
        path = self._as_path(sid)
        if len(path) != self.depth + 1:
            return None
        node = self.node(path)
        return node.item_id if node is not None else None

    def sid_of(self, item_id: int) -> SemanticId:
        """
        Semantic ID of an indexed item.

        Raises:
            KeyError: If the item is not in the trie
        """
        return self._sids[item_id]

    def items(self) -> dict[int, SemanticId]:
        """Enumerate all leaves by walking the trie."""
        found: dict[int, SemanticId] = {}
        for path, item_id in self._walk(self.root, ()):
            found[item_id] = SemanticId(path[:-1], path[-1])
        return dict(sorted(found.items()))

    def _walk(
        self, node: TrieNode, path: tuple[int, ...]
    ) -> Iterator[tuple[tuple[int, ...], int]]:
        if node.item_id is not None:
            yield path, node.item_id
        for value in sorted(node.children):
            yield from self._walk(node.children[value], (*path, value))

    def __len__(self) -> int:
        return self.root.count

    def __contains__(self, item_id: object) -> bool:
        return item_id in self._sids


def build_trie(items: Iterable[tuple[int, SemanticId]]) -> SidTrie:
    """
    Build the prefix trie over (item_id, SemanticId) pairs.

    Raises:
        UniquenessViolationError: If two items share a full semantic ID
        ValidationError: If an item id repeats or depths differ
    """
    pairs = sorted(items, key=lambda pair: pair[0])
    if not pairs:
        raise ValidationError("Cannot build a trie over zero items")
    depth = pairs[0][1].depth
    trie = SidTrie(depth)
    for item_id, sid in pairs:
        if sid.depth != depth:
            raise ValidationError(
                "Semantic IDs have inconsistent depths", item_id=item_id, expected=depth
            )
        if item_id in trie:
            raise ValidationError("Item id appears twice", item_id=item_id)
        trie._insert(item_id, sid)

    logger.debug("Built semantic ID trie", n_items=len(trie), depth=depth)
    return trie
