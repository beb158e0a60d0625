"""
Coupling-matrix ensembles and their diagnostics.

Handles:
- Builders for every graph / weighted ensemble (regular, Erdos-Renyi, SBM,
  graphon, block spin, Wigner, line graph of K_m, disjoint unions)
- Row-sum, Frobenius and top-two eigenvalue diagnostics
- The bound right-hand sides evaluated from those diagnostics
"""
import logging
import math
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from mfising.core.config import settings
from mfising.core.exceptions import (
    EigenConvergenceError,
    InfeasibleParametersError,
    RetryExhaustedError,
)
from mfising.schemas.coupling import (
    CouplingMatrix,
    MatrixDiagnostics,
    RateTerms,
    RegularKind,
    WignerLaw,
)


logger = logging.getLogger(__name__)


# ============ Assembly helpers ============

def _from_edges(
    n: int,
    rows: np.ndarray,
    cols: np.ndarray,
    weights: np.ndarray,
    scale: float,
    label: str,
) -> CouplingMatrix:
    """Assemble a symmetric matrix from unique upper-triangle edges (i < j)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(weights, dtype=float) / scale
    if n <= settings.DENSE_MAX_SITES:
        entries = np.zeros((n, n))
        entries[rows, cols] = values
        entries[cols, rows] = values
    else:
        entries = sp.coo_matrix(
            (np.concatenate([values, values]),
             (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(n, n),
        ).tocsr()
        entries.sum_duplicates()
        entries.sort_indices()
    return CouplingMatrix(n=n, entries=entries, label=label, scale=scale)


def from_upper_triplets(
    n: int,
    rows: np.ndarray,
    cols: np.ndarray,
    values: np.ndarray,
    label: str = "",
    scale: Optional[float] = None,
) -> CouplingMatrix:
    """Coupling from already-scaled upper-triangle entries; `scale` is provenance only."""
    coupling = _from_edges(n, rows, cols, values, 1.0, label)
    return coupling.model_copy(update={"scale": scale})


def _from_dense_weights(weights: np.ndarray, scale: float, label: str) -> CouplingMatrix:
    n = weights.shape[0]
    rows, cols = np.nonzero(np.triu(weights, k=1))
    return _from_edges(n, rows, cols, weights[rows, cols], scale, label)


def _from_graph(graph: nx.Graph, scale: float, label: str) -> CouplingMatrix:
    nodes = sorted(graph.nodes())
    index = {node: k for k, node in enumerate(nodes)}
    edges = [tuple(sorted((index[u], index[v]))) for u, v in graph.edges()]
    rows = np.array([e[0] for e in edges], dtype=np.int64)
    cols = np.array([e[1] for e in edges], dtype=np.int64)
    return _from_edges(len(nodes), rows, cols, np.ones(len(edges)), scale, label)


def _sample_upper(
    n: int,
    rng: np.random.Generator,
    edge_prob,
) -> Tuple[np.ndarray, np.ndarray]:
    """Row-by-row Bernoulli draws of the strict upper triangle."""
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    for i in range(n - 1):
        p_row = edge_prob(i)
        hits = np.flatnonzero(rng.random(n - i - 1) < p_row) + i + 1
        rows.append(np.full(hits.size, i, dtype=np.int64))
        cols.append(hits)
    if not rows:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(rows), np.concatenate(cols)


# ============ Regular graphs ============

def _suitable(edges: Set[Tuple[int, int]], potential_edges: Dict[int, int]) -> bool:
    """True if some pair of leftover stubs can still be joined."""
    if not potential_edges:
        return True
    for s1 in potential_edges:
        for s2 in potential_edges:
            if s1 == s2:
                break
            if s1 > s2:
                s1, s2 = s2, s1
            if (s1, s2) not in edges:
                return True
    return False


def _pair_stubs(n: int, d: int, rng: np.random.Generator) -> Optional[Set[Tuple[int, int]]]:
    """One pairing attempt; loops and multi-edges are re-paired, dead ends return None."""
    edges: Set[Tuple[int, int]] = set()
    stubs = [node for node in range(n) for _ in range(d)]

    while stubs:
        potential_edges: Dict[int, int] = defaultdict(int)
        stubs = [stubs[k] for k in rng.permutation(len(stubs))]
        stubiter = iter(stubs)
        for s1, s2 in zip(stubiter, stubiter):
            if s1 > s2:
                s1, s2 = s2, s1
            if s1 != s2 and (s1, s2) not in edges:
                edges.add((s1, s2))
            else:
                potential_edges[s1] += 1
                potential_edges[s2] += 1

        if not _suitable(edges, potential_edges):
            return None

        stubs = [node for node, count in potential_edges.items() for _ in range(count)]
    return edges


def build_regular(
    n: int,
    d: int,
    kind: RegularKind = RegularKind.RANDOM_REGULAR,
    seed: Optional[int] = None,
) -> CouplingMatrix:
    """
    Adjacency of a d-regular simple graph divided by d.

    Args:
        n: Number of vertices
        d: Degree, 1 <= d < n
        kind: random_regular (pairing model), complete, circulant or bipartite_regular
        seed: Seed for the random kinds

    Returns:
        CouplingMatrix with every row sum equal to 1
    """
    kind = RegularKind(kind)
    if n < 2 or d < 1:
        raise InfeasibleParametersError("n >= 2 and d >= 1", f"n={n}, d={d}")
    if d >= n:
        raise InfeasibleParametersError("d < n", f"n={n}, d={d}")
    label = f"regular(kind={kind.value}, n={n}, d={d}, seed={seed})"

    if kind == RegularKind.COMPLETE:
        if d != n - 1:
            raise InfeasibleParametersError("complete graph requires d = n - 1", f"n={n}, d={d}")
        graph = nx.complete_graph(n)
    elif kind == RegularKind.CIRCULANT:
        if d % 2 == 1 and n % 2 == 1:
            raise InfeasibleParametersError("odd-degree circulant requires n even", f"n={n}, d={d}")
        offsets = list(range(1, d // 2 + 1))
        if d % 2 == 1:
            offsets.append(n // 2)
        graph = nx.circulant_graph(n, offsets)
    elif kind == RegularKind.BIPARTITE_REGULAR:
        if n % 2 == 1:
            raise InfeasibleParametersError("bipartite_regular requires n even", f"n={n}")
        half = n // 2
        if d > half:
            raise InfeasibleParametersError("bipartite_regular requires d <= n/2", f"n={n}, d={d}")
        rng = np.random.default_rng(seed)
        perm = rng.permutation(half)
        graph = nx.Graph()
        graph.add_nodes_from(range(n))
        for i in range(half):
            for k in range(d):
                graph.add_edge(i, half + int(perm[(i + k) % half]))
    else:
        if (n * d) % 2 != 0:
            raise InfeasibleParametersError("n * d must be even", f"n={n}, d={d}")
        rng = np.random.default_rng(seed)
        edges = None
        attempts = 0
        while edges is None:
            if attempts >= settings.REGULAR_MAX_RETRIES:
                logger.error(f"random regular pairing failed for n={n}, d={d}")
                raise RetryExhaustedError("random regular pairing", attempts)
            attempts += 1
            edges = _pair_stubs(n, d, rng)
        if attempts > 1:
            logger.debug(f"random regular pairing needed {attempts} attempts")
        graph = nx.Graph()
        graph.add_nodes_from(range(n))
        graph.add_edges_from(edges)

    coupling = _from_graph(graph, float(d), label)
    logger.info(f"Built {label}")
    return coupling


def build_complete(n: int, denominator: Optional[float] = None) -> CouplingMatrix:
    """K_n divided by `denominator` (default n - 1, the degree)."""
    if n < 2:
        raise InfeasibleParametersError("complete graph requires n >= 2", f"n={n}")
    denominator = float(n - 1) if denominator is None else float(denominator)
    if denominator <= 0:
        raise InfeasibleParametersError("denominator must be positive", f"denominator={denominator}")
    label = f"complete(n={n}, denominator={denominator:g})"
    return _from_graph(nx.complete_graph(n), denominator, label)


# ============ Random graph ensembles ============

def build_erdos_renyi(
    n: int,
    p: float,
    seed: Optional[int] = None,
    directed: bool = False,
) -> CouplingMatrix:
    """
    Erdos-Renyi graph scaled by (n - 1) p.

    The directed variant draws both orientations independently and keeps the
    symmetrized coupling (G(i,j) + G(j,i)) / (2 (n - 1) p).
    """
    if not 0 < p <= 1:
        raise InfeasibleParametersError("0 < p <= 1", f"p={p}")
    if n < 2:
        raise InfeasibleParametersError("n >= 2", f"n={n}")
    rng = np.random.default_rng(seed)
    label = f"erdos_renyi(n={n}, p={p}, directed={directed}, seed={seed})"

    if not directed:
        rows, cols = _sample_upper(n, rng, lambda i: p)
        coupling = _from_edges(n, rows, cols, np.ones(rows.size), (n - 1) * p, label)
    else:
        row_list, col_list, weight_list = [], [], []
        for i in range(n - 1):
            forward = rng.random(n - i - 1) < p
            backward = rng.random(n - i - 1) < p
            weight = forward.astype(float) + backward
            hits = np.flatnonzero(weight)
            row_list.append(np.full(hits.size, i, dtype=np.int64))
            col_list.append(hits + i + 1)
            weight_list.append(weight[hits])
        coupling = _from_edges(
            n,
            np.concatenate(row_list),
            np.concatenate(col_list),
            np.concatenate(weight_list),
            2 * (n - 1) * p,
            label,
        )
    logger.info(f"Built {label}")
    return coupling


def _check_probability_matrix(prob: np.ndarray, k: int) -> None:
    if prob.shape != (k, k):
        raise InfeasibleParametersError(
            "prob must be k x k with k = len(block_sizes)", f"shape={prob.shape}, k={k}"
        )
    if not np.allclose(prob, prob.T, rtol=0, atol=0):
        raise InfeasibleParametersError("prob must be symmetric")
    if np.any(prob < 0) or np.any(prob > 1):
        raise InfeasibleParametersError("prob entries must lie in [0, 1]")


def _realized_degree_scale(n: int, edge_count: int) -> float:
    if edge_count == 0:
        raise InfeasibleParametersError("sampled graph has no edges; average degree is zero")
    return 2.0 * edge_count / n


def build_sbm(
    block_sizes: Sequence[int],
    prob,
    seed: Optional[int] = None,
) -> CouplingMatrix:
    """
    Stochastic block model.

    The balanced two-block model (equal sizes, equal within-block probability a,
    across probability b) is scaled by n (a + b) / 2; every other configuration
    by its realized average degree.
    """
    sizes = [int(s) for s in block_sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise InfeasibleParametersError("block sizes must be positive", f"sizes={sizes}")
    prob = np.asarray(prob, dtype=float)
    _check_probability_matrix(prob, len(sizes))
    n = sum(sizes)
    if n < 2:
        raise InfeasibleParametersError("n >= 2", f"n={n}")

    rng = np.random.default_rng(seed)
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    rows, cols = _sample_upper(n, rng, lambda i: prob[blocks[i], blocks[i + 1:]])

    balanced = len(sizes) == 2 and sizes[0] == sizes[1] and prob[0, 0] == prob[1, 1]
    if balanced and prob[0, 0] + prob[0, 1] > 0:
        scale = n * (prob[0, 0] + prob[0, 1]) / 2
    else:
        scale = _realized_degree_scale(n, rows.size)
    label = f"sbm(sizes={sizes}, prob={prob.tolist()}, seed={seed})"
    coupling = _from_edges(n, rows, cols, np.ones(rows.size), scale, label)
    logger.info(f"Built {label}")
    return coupling


def build_graphon(
    n: int,
    grid,
    gamma: float = 1.0,
    seed: Optional[int] = None,
) -> CouplingMatrix:
    """
    Sparse graphon graph from a step function W on a k x k grid.

    Latent U_i ~ U(0,1) pick the grid cell; edges are Bernoulli(W(c_i, c_j) / n^gamma)
    and the matrix is scaled by n a n^-gamma, a being the average row integral of W.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise InfeasibleParametersError("graphon grid must be square", f"shape={grid.shape}")
    _check_probability_matrix(grid, grid.shape[0])
    if not 0 < gamma <= 1:
        raise InfeasibleParametersError("0 < gamma <= 1", f"gamma={gamma}")
    if n < 2:
        raise InfeasibleParametersError("n >= 2", f"n={n}")
    a = float(grid.mean())
    if a <= 0:
        raise InfeasibleParametersError("graphon must have positive mass")

    rng = np.random.default_rng(seed)
    k = grid.shape[0]
    cells = np.minimum((rng.random(n) * k).astype(np.int64), k - 1)
    sparsity = float(n) ** (-gamma)
    rows, cols = _sample_upper(n, rng, lambda i: grid[cells[i], cells[i + 1:]] * sparsity)
    label = f"graphon(n={n}, k={k}, gamma={gamma}, seed={seed})"
    coupling = _from_edges(n, rows, cols, np.ones(rows.size), n * a * sparsity, label)
    logger.info(f"Built {label}")
    return coupling


def build_wigner(
    n: int,
    law: WignerLaw = WignerLaw.EXPONENTIAL,
    mu: float = 1.0,
    seed: Optional[int] = None,
) -> CouplingMatrix:
    """Nonnegative i.i.d. upper-triangle weights with mean mu, scaled by n mu."""
    law = WignerLaw(law)
    if mu <= 0:
        raise InfeasibleParametersError("mu > 0", f"mu={mu}")
    if n < 2:
        raise InfeasibleParametersError("n >= 2", f"n={n}")
    rng = np.random.default_rng(seed)
    rows, cols = np.triu_indices(n, k=1)
    if law == WignerLaw.EXPONENTIAL:
        weights = rng.exponential(mu, size=rows.size)
    else:
        weights = rng.uniform(0.0, 2 * mu, size=rows.size)
    label = f"wigner(n={n}, law={law.value}, mu={mu}, seed={seed})"
    coupling = _from_edges(n, rows, cols, weights, n * mu, label)
    logger.info(f"Built {label}")
    return coupling


# ============ Deterministic counterexamples ============

def build_block_spin(n: int, a: float, b: float) -> CouplingMatrix:
    """Entry a within halves and b across, divided by the average row sum."""
    if n < 2 or n % 2 == 1:
        raise InfeasibleParametersError("block spin requires n even and positive", f"n={n}")
    if a < 0 or b < 0:
        raise InfeasibleParametersError("a, b >= 0", f"a={a}, b={b}")
    if a == 0 and b == 0:
        raise InfeasibleParametersError("a and b cannot both be 0")
    half = n // 2
    row_sum = (half - 1) * a + half * b
    if row_sum <= 0:
        raise InfeasibleParametersError("average row sum must be positive", f"n={n}, a={a}, b={b}")
    block = np.repeat(np.arange(2), half)
    weights = np.where(block[:, None] == block[None, :], float(a), float(b))
    np.fill_diagonal(weights, 0.0)
    return _from_dense_weights(weights, row_sum, f"block_spin(n={n}, a={a}, b={b})")


def build_line_graph_complete(m: int) -> CouplingMatrix:
    """Line graph of K_m: N = m(m-1)/2 sites, degree 2(m-2), scaled by the degree."""
    if m < 4:
        raise InfeasibleParametersError("m >= 4", f"m={m}")
    graph = nx.line_graph(nx.complete_graph(m))
    coupling = _from_graph(graph, 2.0 * (m - 2), f"line_graph_complete(m={m})")
    logger.info(f"Built line graph of K_{m} with N={coupling.n}")
    return coupling


def build_disjoint_union(parts: Sequence[CouplingMatrix], rescale: bool = False) -> CouplingMatrix:
    """
    Block-diagonal union of coupling matrices.

    With rescale, the unscaled blocks are divided by the global average degree
    (total weight / N) of the union.
    """
    if not parts:
        raise InfeasibleParametersError("parts must be nonempty")
    if len(parts) == 1 and not rescale:
        return parts[0]

    label = f"union([{', '.join(p.label for p in parts)}], rescale={rescale})"
    n = sum(p.n for p in parts)
    if rescale:
        blocks = [p.unscaled() for p in parts]
        scale = sum(float(b.sum()) for b in blocks) / n
        if scale <= 0:
            raise InfeasibleParametersError("union has no edges; average degree is zero")
        weights = scipy.linalg.block_diag(*blocks)
        return _from_dense_weights(weights, scale, label)

    scales = {p.scale for p in parts}
    scale = scales.pop() if len(scales) == 1 else None
    if n <= settings.DENSE_MAX_SITES:
        entries = scipy.linalg.block_diag(*[p.to_dense() for p in parts])
    else:
        entries = sp.block_diag([sp.csr_matrix(p.entries) for p in parts], format="csr")
        entries.sort_indices()
    return CouplingMatrix(n=n, entries=entries, label=label, scale=scale)


def build_two_complete(n: int) -> CouplingMatrix:
    """Two disjoint K_{n/2}, each scaled by n/2."""
    if n < 4 or n % 2 == 1:
        raise InfeasibleParametersError("two_complete requires n even and n >= 4", f"n={n}")
    half = n // 2
    block = build_complete(half, denominator=half)
    return build_disjoint_union([block, block], rescale=False)


def build_uneven_complete(n: int) -> CouplingMatrix:
    """K_{n - sqrt(n)} union K_{sqrt(n)}, rescaled by the global average degree."""
    root = math.isqrt(n)
    if root * root != n or root < 2 or n - root < 2:
        raise InfeasibleParametersError("uneven_complete requires n a perfect square >= 4", f"n={n}")
    parts = [build_complete(n - root), build_complete(root)]
    return build_disjoint_union(parts, rescale=True)


# ============ Diagnostics ============

def top_two_eigenvalues(coupling: CouplingMatrix) -> Tuple[float, float, float]:
    """
    The two largest eigenvalues and the residual max ||A v - lambda v||.

    Dense symmetric solver up to DENSE_MAX_SITES, Lanczos (ARPACK) above.
    """
    n = coupling.n
    if n == 1:
        return 0.0, 0.0, 0.0

    if coupling.is_dense:
        values, vectors = scipy.linalg.eigh(coupling.entries, subset_by_index=[n - 2, n - 1])
    else:
        try:
            values, vectors = eigsh(
                coupling.entries,
                k=2,
                which="LA",
                tol=settings.EIGEN_TOL,
                maxiter=settings.EIGEN_MAX_ITER,
            )
        except ArpackNoConvergence as e:
            residual = float("inf")
            if e.eigenvalues is not None and len(e.eigenvalues):
                residual = float(np.max(np.linalg.norm(
                    coupling.entries @ e.eigenvectors - e.eigenvectors * e.eigenvalues, axis=0
                )))
            logger.error(f"Lanczos did not converge for {coupling.label}")
            raise EigenConvergenceError(residual) from e
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]

    residual = float(np.max(np.linalg.norm(
        coupling.entries @ vectors - vectors * values, axis=0
    )))
    lambda1, lambda2 = float(values[1]), float(values[0])
    if residual > 100 * settings.EIGEN_TOL * max(1.0, abs(lambda1)):
        raise EigenConvergenceError(residual, "eigenpair residual above tolerance")
    return lambda1, lambda2, residual


def diagnostics(coupling: CouplingMatrix) -> MatrixDiagnostics:
    """Row sums, norms, top-two spectrum and regularity statistics."""
    n = coupling.n
    row_sums = coupling.row_sums()
    if coupling.is_dense:
        squares = coupling.entries ** 2
        row_squares = squares.sum(axis=1)
    else:
        row_squares = np.asarray(coupling.entries.multiply(coupling.entries).sum(axis=1)).ravel()
    frobenius_sq = float(row_squares.sum())
    alpha = float(row_squares.max())

    lambda1, lambda2, residual = top_two_eigenvalues(coupling)
    mean_row = float(row_sums.sum()) / n
    if lambda1 < mean_row - 1e-8 * max(1.0, abs(mean_row)):
        raise EigenConvergenceError(
            residual, f"Rayleigh bound violated: lambda1={lambda1} < mean row sum {mean_row}"
        )

    deviation = row_sums - 1.0
    max_dev = float(np.max(np.abs(deviation)))
    ratio = lambda2 / lambda1 if lambda1 > 0 else float("nan")
    return MatrixDiagnostics(
        n=n,
        row_sums=row_sums,
        frobenius_sq=frobenius_sq,
        lambda1=lambda1,
        lambda2=lambda2,
        alpha=alpha,
        sum_dev=float(deviation.sum()),
        sum_dev_sq=float(np.dot(deviation, deviation)),
        max_dev=max_dev,
        well_connected_ratio=ratio,
        a4_stat=n ** 0.25 * max_dev,
        eigen_residual=residual,
    )


def rate_terms(diag: MatrixDiagnostics, t: float, n: int) -> RateTerms:
    """
    Evaluate the bound right-hand sides from the diagnostics.

    Args:
        diag: Diagnostics of A_N
        t: Fixed point; only |t| enters
        n: Number of sites

    Returns:
        RateTerms
    """
    if abs(t) >= 1:
        raise InfeasibleParametersError("|t| < 1", f"t={t}")
    t = abs(t)
    log_n = math.log(n) if n > 1 else 0.0
    root_n = math.sqrt(n)
    frob = diag.frobenius_sq
    sum_dev_abs = abs(diag.sum_dev)
    dev_sq = diag.sum_dev_sq

    epsilon = frob + sum_dev_abs ** 2 / n + dev_sq + log_n
    r = math.sqrt(log_n ** 3 * diag.alpha) + log_n * diag.max_dev
    delta = dev_sq + sum_dev_abs ** 2 / root_n
    return RateTerms(
        eta=frob + t ** 2 * dev_sq,
        nonuniq=frob + dev_sq + sum_dev_abs,
        epsilon=epsilon,
        r=r,
        delta=delta,
        theta11=(
            1 / root_n
            + frob * math.sqrt(diag.alpha * log_n) / root_n
            + (1 + math.sqrt(frob) * diag.alpha * log_n) * math.sqrt(dev_sq / n)
        ),
        uniq=frob + dev_sq + t * sum_dev_abs,
        critical=(
            epsilon / root_n
            + epsilon * r / n ** 0.25
            + log_n ** 2 * math.sqrt(delta) / n ** 0.25
        ),
        partition_critical=frob + dev_sq ** 2 / n + sum_dev_abs ** 2 / n + log_n,
    )
