"""Joint factorization of an attributed network with per-node outlier damping.

The model approximates the adjacency A (N x N) by struct_embed @ struct_context,
the attribute matrix C (N x D) by attr_embed @ attr_basis, and couples the two
node embeddings through an orthogonal K x K map: struct_embed row i should
match attr_embed row i times align.T. Each of the three squared-error terms
weights node i by log(1 / score_i), where the per-node scores are positive,
bounded by 1, and sum to a fixed budget. A node that soaks up budget (score
near 1) has weight near 0, so a poorly fitting node can be discounted instead
of distorting the factors; the scores themselves are the outlier signal.

The joint objective is

    sum_i log(1/s1_i) ||A_i - (GH)_i||^2
    + attr_weight * sum_i log(1/s2_i) ||C_i - (UV)_i||^2
    + dis_weight  * sum_i log(1/s3_i) ||G_i - U_i W^T||^2

with G = struct_embed, H = struct_context, U = attr_embed, V = attr_basis,
W = align. All updates below are exact coordinate minimizers (factors) or
exact constrained minimizers (align via Procrustes, scores via the budget
rule), so a full round never increases the objective.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NumericError
from .network import AttributedNetwork, EmbeddingResult
from .numerics import named_rng, nmf_init, row_sq_residuals, svd_small

_DEGENERATE_DEN = 1e-12  # coordinate updates with a smaller denominator are skipped
_ZERO_RESIDUAL = 1e-300  # below this, a total residual counts as exactly zero


@dataclass
class HyperParams:
    """Knobs for fit(). attr_weight and dis_weight default to None, meaning
    'calibrate so the three loss terms start equal'. dim is the embedding
    width K; budget is the fixed sum of each score vector."""

    dim: int
    attr_weight: float | None = None
    dis_weight: float | None = None
    budget: float = 1.0
    iters: int = 5
    score_floor: float = 1e-8
    combine_weights: tuple[float, float, float] = (0.25, 0.5, 0.25)
    seed: int = 0
    init_iters: int = 200
    loss_tol: float | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        for name in ("attr_weight", "dis_weight"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be > 0, got {v}")
        if not self.budget > 0:
            raise ConfigError(f"budget must be > 0, got {self.budget}")
        if self.iters < 1:
            raise ConfigError(f"iters must be >= 1, got {self.iters}")
        if not 0 < self.score_floor <= 1e-3:
            raise ConfigError(f"score_floor must be in (0, 1e-3], got {self.score_floor}")
        w = self.combine_weights
        if len(w) != 3 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ConfigError(f"combine_weights must be 3 nonnegative values summing to 1, got {w}")
        if self.init_iters < 1:
            raise ConfigError(f"init_iters must be >= 1, got {self.init_iters}")
        if self.loss_tol is not None and not self.loss_tol > 0:
            raise ConfigError(f"loss_tol must be > 0, got {self.loss_tol}")


@dataclass
class FactorModel:
    """The five factor matrices; align has orthonormal columns."""

    struct_embed: np.ndarray    # N x K
    struct_context: np.ndarray  # K x N
    attr_embed: np.ndarray      # N x K
    attr_basis: np.ndarray      # K x D
    align: np.ndarray           # K x K

    def copy(self) -> "FactorModel":
        return FactorModel(self.struct_embed.copy(), self.struct_context.copy(),
                           self.attr_embed.copy(), self.attr_basis.copy(),
                           self.align.copy())


@dataclass
class OutlierScores:
    """Per-node score vectors; each sums to the budget, entries in (0, 1]."""

    structural: np.ndarray
    attribute: np.ndarray
    disagreement: np.ndarray

    def copy(self) -> "OutlierScores":
        return OutlierScores(self.structural.copy(), self.attribute.copy(),
                             self.disagreement.copy())


@dataclass
class FitDiagnostics:
    """Bookkeeping from fit(): skipped degenerate coordinates per update kind,
    the loss at the initial point, and any calibration fallback note."""

    skipped: dict[str, int] = field(default_factory=dict)
    initial_loss: float | None = None
    notes: list[str] = field(default_factory=list)


def _node_weights(scores: np.ndarray, name: str) -> np.ndarray:
    """log(1/s) per node; validates s is 1-D with entries in (0, 1]."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector")
    if not np.isfinite(s).all() or (s <= 0).any() or (s > 1).any():
        raise ValueError(f"{name} entries must lie in (0, 1]")
    return -np.log(s)


def loss_structure(adj, emb: np.ndarray, ctx: np.ndarray, scores: np.ndarray) -> float:
    """Score-weighted squared error of the adjacency factorization."""
    w = _node_weights(scores, "structural scores")
    return float(w @ row_sq_residuals(adj, emb, ctx))


def loss_attribute(attrs, emb: np.ndarray, basis: np.ndarray, scores: np.ndarray) -> float:
    """Score-weighted squared error of the attribute factorization."""
    w = _node_weights(scores, "attribute scores")
    return float(w @ row_sq_residuals(attrs, emb, basis))


def _dis_residuals(struct_embed: np.ndarray, attr_embed: np.ndarray, align: np.ndarray) -> np.ndarray:
    r = struct_embed - attr_embed @ align.T
    return np.einsum("ij,ij->i", r, r)


def orthogonality_defect(align: np.ndarray) -> float:
    """max |align.T @ align - I|, 0 for exactly orthonormal columns."""
    k = align.shape[1]
    return float(np.abs(align.T @ align - np.eye(k)).max())


def loss_disagreement(struct_embed: np.ndarray, attr_embed: np.ndarray,
                      align: np.ndarray, scores: np.ndarray) -> float:
    """Score-weighted squared mismatch between the two embeddings under align.

    Warns (does not fail) if align strays from orthogonality beyond 1e-6.
    """
    w = _node_weights(scores, "disagreement scores")
    if orthogonality_defect(align) > 1e-6:
        warnings.warn("align matrix is not orthogonal within 1e-6", stacklevel=2)
    return float(w @ _dis_residuals(struct_embed, attr_embed, align))


def _resolved_weights(hp: HyperParams) -> tuple[float, float]:
    if hp.attr_weight is None or hp.dis_weight is None:
        raise ValueError("attr_weight and dis_weight must be set (or calibrated) first")
    return hp.attr_weight, hp.dis_weight


def loss_joint(net: AttributedNetwork, model: FactorModel, scores: OutlierScores,
               hp: HyperParams) -> float:
    """Weighted sum of the three loss terms."""
    attr_weight, dis_weight = _resolved_weights(hp)
    return (loss_structure(net.adjacency, model.struct_embed, model.struct_context,
                           scores.structural)
            + attr_weight * loss_attribute(net.attributes, model.attr_embed,
                                           model.attr_basis, scores.attribute)
            + dis_weight * loss_disagreement(model.struct_embed, model.attr_embed,
                                             model.align, scores.disagreement))


def calibrate_weights(net: AttributedNetwork, model: FactorModel,
                      scores: OutlierScores) -> tuple[float, float]:
    """Weights that make the three loss terms equal at the current point.

    Returns (structure/attribute, structure/disagreement) loss ratios. If any
    term is zero the ratios are undefined; falls back to (1, 1) with a warning.
    """
    l_str = loss_structure(net.adjacency, model.struct_embed, model.struct_context,
                           scores.structural)
    l_attr = loss_attribute(net.attributes, model.attr_embed, model.attr_basis,
                            scores.attribute)
    l_dis = loss_disagreement(model.struct_embed, model.attr_embed, model.align,
                              scores.disagreement)
    if l_attr <= 0.0 or l_dis <= 0.0 or l_str <= 0.0:
        warnings.warn("degenerate initial losses "
                      f"(structure={l_str!r}, attribute={l_attr!r}, disagreement={l_dis!r}); "
                      "falling back to weights (1, 1)", stacklevel=2)
        return 1.0, 1.0
    return l_str / l_attr, l_str / l_dis


def _count_skipped(diag: dict | None, key: str, n: int):
    if diag is not None and n:
        diag[key] = diag.get(key, 0) + n


def update_struct_embed(adj, model: FactorModel, scores: OutlierScores,
                        hp: HyperParams, diag: dict | None = None) -> np.ndarray:
    """One exact coordinate-descent sweep over struct_embed.

    Rows are independent given the other factors, so the (row asc, col asc)
    Gauss-Seidel sweep collapses to a column loop with all rows vectorized.
    Coordinates whose quadratic coefficient is below 1e-12 are left unchanged.
    """
    _, dis_weight = _resolved_weights(hp)
    g = model.struct_embed.copy()
    h = model.struct_context
    w1 = _node_weights(scores.structural, "structural scores")
    w3 = _node_weights(scores.disagreement, "disagreement scores")
    aht = np.asarray(adj @ h.T)                # N x K
    hht = h @ h.T                              # K x K
    target = model.attr_embed @ model.align.T  # N x K
    skipped = 0
    for k in range(g.shape[1]):
        # residual correlation with feature k, excluding column k's own term
        s = aht[:, k] - g @ hht[:, k] + g[:, k] * hht[k, k]
        num = w1 * s + dis_weight * w3 * target[:, k]
        den = w1 * hht[k, k] + dis_weight * w3
        ok = den >= _DEGENERATE_DEN
        skipped += int(np.size(ok) - np.count_nonzero(ok))
        g[:, k] = np.where(ok, num / np.where(ok, den, 1.0), g[:, k])
    _count_skipped(diag, "struct_embed", skipped)
    return g


def update_struct_context(adj, model: FactorModel, scores: OutlierScores,
                          diag: dict | None = None) -> np.ndarray:
    """One exact coordinate-descent sweep over struct_context.

    Columns are independent, so the (row asc, col asc) sweep collapses to a
    row loop with all columns vectorized. A row whose weighted embedding
    column is all zeros (denominator < 1e-12) is left unchanged.
    """
    h = model.struct_context.copy()
    g = model.struct_embed
    w1 = _node_weights(scores.structural, "structural scores")
    gw = g * w1[:, None]
    atgw = np.asarray(adj.T @ gw)  # N x K, entry [j, k] = sum_i w_i A_ij g_ik
    ggw = g.T @ gw                 # K x K, entry [l, k] = sum_i w_i g_il g_ik
    skipped = 0
    for k in range(h.shape[0]):
        den = ggw[k, k]
        if den < _DEGENERATE_DEN:
            skipped += h.shape[1]
            continue
        num = atgw[:, k] - ggw[:, k] @ h + h[k, :] * den
        h[k, :] = num / den
    _count_skipped(diag, "struct_context", skipped)
    return h


def update_attr_embed(attrs, model: FactorModel, scores: OutlierScores,
                      hp: HyperParams, diag: dict | None = None) -> np.ndarray:
    """One exact coordinate-descent sweep over attr_embed (vectorized rows)."""
    attr_weight, dis_weight = _resolved_weights(hp)
    u = model.attr_embed.copy()
    v = model.attr_basis
    w = model.align
    w2 = _node_weights(scores.attribute, "attribute scores")
    w3 = _node_weights(scores.disagreement, "disagreement scores")
    cvt = np.asarray(attrs @ v.T)            # N x K
    vvt = v @ v.T                            # K x K
    gw = model.struct_embed @ w              # N x K
    wtw = w.T @ w                            # K x K, identity for orthogonal align
    skipped = 0
    for k in range(u.shape[1]):
        s_attr = cvt[:, k] - u @ vvt[:, k] + u[:, k] * vvt[k, k]
        s_dis = gw[:, k] - u @ wtw[:, k] + u[:, k] * wtw[k, k]
        num = attr_weight * w2 * s_attr + dis_weight * w3 * s_dis
        den = attr_weight * w2 * vvt[k, k] + dis_weight * w3 * wtw[k, k]
        ok = den >= _DEGENERATE_DEN
        skipped += int(np.size(ok) - np.count_nonzero(ok))
        u[:, k] = np.where(ok, num / np.where(ok, den, 1.0), u[:, k])
    _count_skipped(diag, "attr_embed", skipped)
    return u


def update_attr_basis(attrs, model: FactorModel, scores: OutlierScores,
                      diag: dict | None = None) -> np.ndarray:
    """One exact coordinate-descent sweep over attr_basis (vectorized columns)."""
    v = model.attr_basis.copy()
    u = model.attr_embed
    w2 = _node_weights(scores.attribute, "attribute scores")
    uw = u * w2[:, None]
    ctuw = np.asarray(attrs.T @ uw)  # D x K
    uuw = u.T @ uw                   # K x K
    skipped = 0
    for k in range(v.shape[0]):
        den = uuw[k, k]
        if den < _DEGENERATE_DEN:
            skipped += v.shape[1]
            continue
        num = ctuw[:, k] - uuw[:, k] @ v + v[k, :] * den
        v[k, :] = num / den
    _count_skipped(diag, "attr_basis", skipped)
    return v


def update_alignment(model: FactorModel, scores: OutlierScores) -> np.ndarray:
    """Weighted-Procrustes minimizer of the disagreement term.

    Scales both embeddings row-wise by sqrt(log(1/score)), then takes the SVD
    of their K x K cross-product; x @ y.T is the optimal orthogonal map. The
    result has orthonormal columns even when the cross-product is singular.
    """
    w3 = _node_weights(scores.disagreement, "disagreement scores")
    rw = np.sqrt(w3)[:, None]
    cross = (model.struct_embed * rw).T @ (model.attr_embed * rw)
    res = svd_small(cross)
    return res.x @ res.y.T


def budget_scores(residuals: np.ndarray, budget: float, floor: float) -> np.ndarray:
    """Exact minimizer of sum_i log(1/s_i) r_i over {s : sum s = budget,
    floor <= s <= 1}.

    The stationarity condition gives s_i = clip(r_i / lam, floor, 1) for a
    multiplier lam chosen so the scores sum to the budget; with the default
    budget of 1 this is simply s proportional to r with small entries pinned
    at the floor. lam is bracketed by geometric bisection, then the active
    segment is solved exactly so the free entries sum to their share of the
    budget to machine precision. An all-zero residual vector yields the
    uniform budget/N split, with a warning.
    """
    r = np.asarray(residuals, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("residuals must be a nonempty 1-D vector")
    if not np.isfinite(r).all() or (r < 0).any():
        raise ValueError("residuals must be finite and nonnegative")
    n = r.size
    if not floor * n <= budget <= n:
        raise ValueError(f"budget {budget} infeasible for {n} scores with floor {floor}")
    if r.sum() < _ZERO_RESIDUAL:
        warnings.warn("all residuals are zero; returning uniform scores", stacklevel=2)
        return np.full(n, budget / n)

    pos = r > 0
    n_pos = int(pos.sum())
    n_zero = n - n_pos
    # zero-residual entries contribute nothing to the objective; they sit at
    # the floor unless the budget cannot be spent without them
    cap = n_pos + floor * n_zero
    if budget >= cap:
        zero_val = (budget - n_pos) / n_zero if n_zero else floor
        return np.where(pos, 1.0, zero_val)

    # bracket lam: at a everything positive saturates at 1, at b at the floor
    a = r[pos].min() * 0.5
    b = r.max() / floor * 2.0
    for _ in range(128):
        lam = np.exp(0.5 * (np.log(a) + np.log(b)))
        if np.clip(r / lam, floor, 1.0).sum() >= budget:
            a = lam
        else:
            b = lam
    lam = np.exp(0.5 * (np.log(a) + np.log(b)))
    shares = r / lam
    hi = shares >= 1.0
    lo = shares <= floor
    free = ~(hi | lo)
    s = np.where(hi, 1.0, floor)
    budget_free = budget - hi.sum() - floor * lo.sum()
    total_free = r[free].sum()
    if free.any() and budget_free > 0 and total_free > 0:
        s[free] = r[free] * (budget_free / total_free)
    return np.clip(s, floor, 1.0)


def update_structural_scores(adj, emb: np.ndarray, ctx: np.ndarray,
                             budget: float = 1.0, floor: float = 1e-8) -> np.ndarray:
    """Scores proportional to each node's adjacency reconstruction error."""
    return budget_scores(row_sq_residuals(adj, emb, ctx), budget, floor)


def update_attribute_scores(attrs, emb: np.ndarray, basis: np.ndarray,
                            budget: float = 1.0, floor: float = 1e-8) -> np.ndarray:
    """Scores proportional to each node's attribute reconstruction error."""
    return budget_scores(row_sq_residuals(attrs, emb, basis), budget, floor)


def update_disagreement_scores(struct_embed: np.ndarray, attr_embed: np.ndarray,
                               align: np.ndarray, budget: float = 1.0,
                               floor: float = 1e-8) -> np.ndarray:
    """Scores proportional to each node's embedding mismatch."""
    return budget_scores(_dis_residuals(struct_embed, attr_embed, align), budget, floor)


def final_embedding(model: FactorModel) -> np.ndarray:
    """Per-node average of the structure embedding and the mapped attribute
    embedding: (struct_embed + attr_embed @ align.T) / 2."""
    return (model.struct_embed + model.attr_embed @ model.align.T) / 2.0


def final_outlier_score(scores: OutlierScores,
                        combine_weights: tuple[float, float, float]) -> np.ndarray:
    """Convex combination of the three score vectors."""
    w = combine_weights
    if len(w) != 3 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
        raise ValueError(f"combine_weights must be 3 nonnegative values summing to 1, got {w}")
    return w[0] * scores.structural + w[1] * scores.attribute + w[2] * scores.disagreement


def _check_finite(arr: np.ndarray, what: str, round_no: int):
    if not np.isfinite(arr).all():
        raise NumericError(f"{what} produced non-finite values in round {round_no}")


def fit(net: AttributedNetwork, hp: HyperParams):
    """Run the full alternating optimization.

    Initializes the factor pairs by nonnegative multiplicative updates on the
    adjacency and attribute matrices, starts with uniform scores, calibrates
    the loss weights if unset, then runs `iters` rounds of: align update,
    factor sweeps (struct_embed, struct_context, attr_embed, attr_basis, each
    consuming the others' latest values), score updates. The joint loss is
    recorded after every round and is non-increasing.

    Returns (FactorModel, OutlierScores, EmbeddingResult, FitDiagnostics).
    """
    n, d = net.n_nodes, net.n_attrs
    if not 1 <= hp.dim <= min(n, d):
        raise ConfigError(f"dim must be in [1, min(n_nodes, n_attrs)] = "
                          f"[1, {min(n, d)}], got {hp.dim}")
    if not hp.score_floor * n <= hp.budget <= n:
        raise ConfigError(f"budget {hp.budget} infeasible for {n} nodes "
                          f"with score_floor {hp.score_floor}")
    adj = net.adjacency
    attrs = net.attributes
    if (attrs < 0).any():
        raise ConfigError("attributes must be nonnegative (initialization is "
                          "a nonnegative factorization)")

    diagnostics = FitDiagnostics()
    g, h = nmf_init(adj, hp.dim, hp.init_iters, named_rng(hp.seed, "init-structure"))
    u, v = nmf_init(attrs, hp.dim, hp.init_iters, named_rng(hp.seed, "init-attributes"))
    for what, factor in (("structure", g), ("structure", h),
                         ("attribute", u), ("attribute", v)):
        if not np.isfinite(factor).all():
            raise NumericError(f"{what} initialization overflowed; input "
                               "magnitudes are too large for squared residuals")
    uniform = np.full(n, hp.budget / n)
    scores = OutlierScores(uniform.copy(), uniform.copy(), uniform.copy())
    model = FactorModel(g, h, u, v, np.eye(hp.dim))
    # the align matrix has no factorization-based start; use the Procrustes
    # optimum for the initial embeddings so calibration sees a sensible value
    model.align = update_alignment(model, scores)

    initial_terms = {
        "structure": loss_structure(adj, model.struct_embed, model.struct_context,
                                    scores.structural),
        "attribute": loss_attribute(attrs, model.attr_embed, model.attr_basis,
                                    scores.attribute),
        "disagreement": loss_disagreement(model.struct_embed, model.attr_embed,
                                          model.align, scores.disagreement),
    }
    for term, value in initial_terms.items():
        if not np.isfinite(value):
            raise NumericError(f"initial {term} loss is non-finite; "
                               "input magnitudes overflow the squared residuals")

    if hp.attr_weight is None or hp.dis_weight is None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            attr_w, dis_w = calibrate_weights(net, model, scores)
            diagnostics.notes.extend(str(c.message) for c in caught)
        hp = replace(hp,
                     attr_weight=hp.attr_weight if hp.attr_weight is not None else attr_w,
                     dis_weight=hp.dis_weight if hp.dis_weight is not None else dis_w)
    diagnostics.initial_loss = loss_joint(net, model, scores, hp)

    trace: list[float] = []
    prev = diagnostics.initial_loss
    for round_no in range(1, hp.iters + 1):
        model.align = update_alignment(model, scores)
        _check_finite(model.align, "align update", round_no)
        model.struct_embed = update_struct_embed(adj, model, scores, hp, diagnostics.skipped)
        _check_finite(model.struct_embed, "struct_embed update", round_no)
        model.struct_context = update_struct_context(adj, model, scores, diagnostics.skipped)
        _check_finite(model.struct_context, "struct_context update", round_no)
        model.attr_embed = update_attr_embed(attrs, model, scores, hp, diagnostics.skipped)
        _check_finite(model.attr_embed, "attr_embed update", round_no)
        model.attr_basis = update_attr_basis(attrs, model, scores, diagnostics.skipped)
        _check_finite(model.attr_basis, "attr_basis update", round_no)

        r1 = row_sq_residuals(adj, model.struct_embed, model.struct_context)
        r2 = row_sq_residuals(attrs, model.attr_embed, model.attr_basis)
        r3 = _dis_residuals(model.struct_embed, model.attr_embed, model.align)
        for what, r in (("structure", r1), ("attribute", r2), ("disagreement", r3)):
            _check_finite(r, f"{what} residuals", round_no)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            scores.structural = budget_scores(r1, hp.budget, hp.score_floor)
            scores.attribute = budget_scores(r2, hp.budget, hp.score_floor)
            scores.disagreement = budget_scores(r3, hp.budget, hp.score_floor)
            diagnostics.notes.extend(f"round {round_no}: {c.message}" for c in caught)

        loss = (float(_node_weights(scores.structural, "structural scores") @ r1)
                + hp.attr_weight * float(_node_weights(scores.attribute, "attribute scores") @ r2)
                + hp.dis_weight * float(_node_weights(scores.disagreement, "disagreement scores") @ r3))
        if not np.isfinite(loss):
            raise NumericError(f"joint loss became non-finite in round {round_no}")
        trace.append(loss)
        if hp.loss_tol is not None and prev - loss <= hp.loss_tol * max(abs(prev), 1e-30):
            break
        prev = loss

    result = EmbeddingResult(
        embedding=final_embedding(model),
        outlier_scores=final_outlier_score(scores, hp.combine_weights),
        component_scores=np.column_stack([scores.structural, scores.attribute,
                                          scores.disagreement]),
        loss_trace=trace,
        node_names=list(net.node_names))
    return model, scores, result, diagnostics


def default_dim(net: AttributedNetwork) -> int:
    """Three embedding dimensions per ground-truth class."""
    if net.labels is None:
        raise ConfigError("cannot derive an embedding dimension without labels; "
                          "set dim explicitly")
    return 3 * net.n_classes
