"""Shared builders and independent oracles for the test suite.

The oracles here deliberately use explicit Python loops or a different
algorithm than the library code (e.g. a two-sided Jacobi eigensolver to
cross-check the one-sided SVD), so a bug in the vectorized implementation
cannot cancel out in the comparison.
"""

import io
import math
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import scipy.sparse as sp

from oaembed.core import FactorModel, OutlierScores
from oaembed.network import AttributedNetwork


def to_dense(m) -> np.ndarray:
    return np.asarray(m.todense()) if sp.issparse(m) else np.asarray(m, dtype=float)


def random_orthogonal(rng, k: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(k, k)))
    return q * np.sign(np.diag(r))


def rand_scores(rng, n: int) -> np.ndarray:
    """A valid score vector: entries in (0, 1], summing to 1."""
    if n == 1:
        return np.array([1.0])
    s = rng.uniform(0.2, 1.0, size=n)
    return s / s.sum()


def rand_score_triplet(rng, n: int) -> OutlierScores:
    return OutlierScores(rand_scores(rng, n), rand_scores(rng, n), rand_scores(rng, n))


def rand_model(rng, n: int, k: int, d: int) -> FactorModel:
    return FactorModel(struct_embed=rng.normal(size=(n, k)),
                       struct_context=rng.normal(size=(k, n)),
                       attr_embed=rng.normal(size=(n, k)),
                       attr_basis=rng.normal(size=(k, d)),
                       align=random_orthogonal(rng, k))


def rand_network(rng, n: int, d: int, edge_p: float | None = None) -> AttributedNetwork:
    """Random undirected binary graph with sparse nonnegative attributes."""
    if edge_p is None:
        edge_p = min(0.5, 4.0 / n)
    ii, jj = np.triu_indices(n, 1)
    keep = rng.random(ii.size) < edge_p
    ei, ej = ii[keep], jj[keep]
    adj = sp.csr_matrix((np.ones(2 * ei.size),
                         (np.concatenate([ei, ej]), np.concatenate([ej, ei]))),
                        shape=(n, n))
    attrs = np.where(rng.random((n, d)) < 0.3,
                     rng.uniform(0.2, 2.0, size=(n, d)), 0.0)
    if not attrs.any(axis=1).all():  # keep every row nonzero
        attrs[~attrs.any(axis=1), 0] = 1.0
    return AttributedNetwork(adjacency=adj, attributes=attrs)


def naive_weighted_sq_loss(m, p, q, scores) -> float:
    """sum_i log(1/scores_i) sum_j (m_ij - p_i . q_.j)^2 by explicit loops."""
    a = to_dense(m)
    total = 0.0
    for i in range(a.shape[0]):
        w = math.log(1.0 / scores[i])
        for j in range(a.shape[1]):
            pred = 0.0
            for kk in range(p.shape[1]):
                pred += p[i, kk] * q[kk, j]
            total += w * (a[i, j] - pred) ** 2
    return total


def naive_loss_disagreement(g, u, w, scores) -> float:
    total = 0.0
    for i in range(g.shape[0]):
        wt = math.log(1.0 / scores[i])
        for k in range(g.shape[1]):
            pred = 0.0
            for m in range(w.shape[1]):
                pred += u[i, m] * w[k, m]
            total += wt * (g[i, k] - pred) ** 2
    return total


def naive_update_struct_embed(adj, model, scores, hp) -> np.ndarray:
    a = to_dense(adj)
    g = model.struct_embed.copy()
    h = model.struct_context
    u = model.attr_embed
    w = model.align
    beta = hp.dis_weight
    n, k_dim = g.shape
    for i in range(n):
        w1 = math.log(1.0 / scores.structural[i])
        w3 = math.log(1.0 / scores.disagreement[i])
        for k in range(k_dim):
            s = 0.0
            for j in range(a.shape[1]):
                pred = 0.0
                for l in range(k_dim):
                    if l != k:
                        pred += g[i, l] * h[l, j]
                s += (a[i, j] - pred) * h[k, j]
            tgt = 0.0
            for m in range(k_dim):
                tgt += u[i, m] * w[k, m]
            num = w1 * s + beta * w3 * tgt
            den = w1 * sum(h[k, j] ** 2 for j in range(a.shape[1])) + beta * w3
            if den >= 1e-12:
                g[i, k] = num / den
    return g


def naive_update_struct_context(adj, model, scores) -> np.ndarray:
    a = to_dense(adj)
    h = model.struct_context.copy()
    g = model.struct_embed
    n = a.shape[0]
    k_dim = h.shape[0]
    for k in range(k_dim):
        den = 0.0
        for i in range(n):
            den += math.log(1.0 / scores.structural[i]) * g[i, k] ** 2
        if den < 1e-12:
            continue
        for j in range(h.shape[1]):
            num = 0.0
            for i in range(n):
                pred = 0.0
                for l in range(k_dim):
                    if l != k:
                        pred += g[i, l] * h[l, j]
                num += math.log(1.0 / scores.structural[i]) * (a[i, j] - pred) * g[i, k]
            h[k, j] = num / den
    return h


def naive_update_attr_embed(attrs, model, scores, hp) -> np.ndarray:
    c = to_dense(attrs)
    u = model.attr_embed.copy()
    v = model.attr_basis
    g = model.struct_embed
    w = model.align
    alpha, beta = hp.attr_weight, hp.dis_weight
    n, k_dim = u.shape
    for i in range(n):
        w2 = math.log(1.0 / scores.attribute[i])
        w3 = math.log(1.0 / scores.disagreement[i])
        for k in range(k_dim):
            s_attr = 0.0
            for d in range(c.shape[1]):
                pred = 0.0
                for l in range(k_dim):
                    if l != k:
                        pred += u[i, l] * v[l, d]
                s_attr += (c[i, d] - pred) * v[k, d]
            s_dis = 0.0
            for m in range(k_dim):
                pred = 0.0
                for l in range(k_dim):
                    if l != k:
                        pred += u[i, l] * w[m, l]
                s_dis += (g[i, m] - pred) * w[m, k]
            num = alpha * w2 * s_attr + beta * w3 * s_dis
            den = (alpha * w2 * sum(v[k, d] ** 2 for d in range(c.shape[1]))
                   + beta * w3 * sum(w[m, k] ** 2 for m in range(k_dim)))
            if den >= 1e-12:
                u[i, k] = num / den
    return u


def naive_update_attr_basis(attrs, model, scores) -> np.ndarray:
    c = to_dense(attrs)
    v = model.attr_basis.copy()
    u = model.attr_embed
    n = c.shape[0]
    k_dim = v.shape[0]
    for k in range(k_dim):
        den = 0.0
        for i in range(n):
            den += math.log(1.0 / scores.attribute[i]) * u[i, k] ** 2
        if den < 1e-12:
            continue
        for d in range(v.shape[1]):
            num = 0.0
            for i in range(n):
                pred = 0.0
                for l in range(k_dim):
                    if l != k:
                        pred += u[i, l] * v[l, d]
                num += math.log(1.0 / scores.attribute[i]) * (c[i, d] - pred) * u[i, k]
            v[k, d] = num / den
    return v


def jacobi_eigvals(s) -> np.ndarray:
    """Eigenvalues of a symmetric matrix via two-sided Jacobi, sorted descending."""
    a = np.array(s, dtype=float)
    k = a.shape[0]
    scale = max(1.0, np.abs(a).max())
    for _ in range(100):
        off = max((abs(a[p, q]) for p in range(k - 1) for q in range(p + 1, k)),
                  default=0.0)
        if off < 1e-14 * scale:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = 0.5 * math.atan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, sn = math.cos(theta), math.sin(theta)
                rot = np.eye(k)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = sn
                rot[q, p] = -sn
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))[::-1]


def grid_min_scores(residuals, floor: float = 1e-8) -> np.ndarray:
    """Brute-force minimizer of sum_i r_i log(1/s_i) at 1e-3 grid resolution.

    A zero-residual coordinate contributes nothing to the objective, so any
    mass above the feasible floor is strictly better spent on the others; the
    minimizer therefore parks it at the floor, and the enumeration splits the
    whole unit budget over the positive-residual coordinates on the 1/1000
    grid (the floor mass sits far below the grid's resolution)."""
    r_all = np.asarray(residuals, dtype=float)
    pos = np.nonzero(r_all > 0)[0]
    if pos.size == 0:
        raise ValueError("grid oracle needs at least one positive residual")
    out = np.full(r_all.size, floor)
    out[pos] = _grid_min_positive(r_all[pos])
    return out


def _grid_min_positive(r: np.ndarray) -> np.ndarray:
    n = r.size
    units = 1000
    neglog = np.empty(units + 1)
    neglog[0] = np.inf
    m_all = np.arange(1, units + 1)
    neglog[1:] = np.log(units / m_all.astype(float))

    if n == 1:
        return np.array([1.0])
    if n == 2:
        m1 = np.arange(1, units)
        obj = r[0] * neglog[m1] + r[1] * neglog[units - m1]
        best = int(m1[np.argmin(obj)])
        return np.array([best, units - best]) / units
    if n == 3:
        best_obj = np.inf
        best_m = None
        for m1 in range(1, units - 1):
            m2 = np.arange(1, units - m1)
            obj = r[0] * neglog[m1] + r[1] * neglog[m2] + r[2] * neglog[units - m1 - m2]
            j = int(np.argmin(obj))
            if obj[j] < best_obj:
                best_obj = float(obj[j])
                best_m = (m1, int(m2[j]), units - m1 - int(m2[j]))
        return np.array(best_m) / units
    if n == 4:
        # best split of a mass S between the last two coordinates
        pair_best = np.full(units + 1, np.inf)
        pair_arg = np.zeros(units + 1, dtype=int)
        for s_mass in range(2, units - 1):
            m3 = np.arange(1, s_mass)
            vals = r[2] * neglog[m3] + r[3] * neglog[s_mass - m3]
            j = int(np.argmin(vals))
            pair_best[s_mass] = float(vals[j])
            pair_arg[s_mass] = int(m3[j])
        best_obj = np.inf
        best_m = None
        for m1 in range(1, units - 2):
            m2 = np.arange(1, units - m1 - 1)
            obj = r[0] * neglog[m1] + r[1] * neglog[m2] + pair_best[units - m1 - m2]
            j = int(np.argmin(obj))
            if obj[j] < best_obj:
                best_obj = float(obj[j])
                rest = units - m1 - int(m2[j])
                m3 = int(pair_arg[rest])
                best_m = (m1, int(m2[j]), m3, rest - m3)
        return np.array(best_m) / units
    raise ValueError("grid oracle supports up to 4 coordinates")


def mid_matrix(old: np.ndarray, new: np.ndarray, pos: int, axis: int) -> np.ndarray:
    """The factor matrix as it stood when sweep position `pos` was finalized.

    The library sweeps struct_embed/attr_embed column by column and
    struct_context/attr_basis row by row, so the mid-sweep state mixes new
    values up to `pos` with old values after it.
    """
    m = old.copy()
    if axis == 1:
        m[:, :pos + 1] = new[:, :pos + 1]
    else:
        m[:pos + 1, :] = new[:pos + 1, :]
    return m


def min_fd_gap(net, model, scores, hp, field_name: str, i: int, k: int,
               eps: float = 1e-4) -> float:
    """Smallest loss change from perturbing one coordinate by +-eps."""
    from oaembed.core import loss_joint

    base = loss_joint(net, model, scores, hp)
    best = np.inf
    for delta in (eps, -eps):
        probe = model.copy()
        getattr(probe, field_name)[i, k] += delta
        best = min(best, loss_joint(net, probe, scores, hp) - base)
    return best


def fd_check_sweep(net, model, scores, hp, rng, n_coords: int) -> float:
    """Run the four factor updates in algorithm order, finite-difference
    probing sampled coordinates at their exact mid-sweep states. Returns the
    worst (most negative) loss gap seen; coordinate optimality means it stays
    above -1e-10."""
    from oaembed import core

    work = model.copy()
    plans = [
        ("struct_embed",
         lambda: core.update_struct_embed(net.adjacency, work, scores, hp), 1),
        ("struct_context",
         lambda: core.update_struct_context(net.adjacency, work, scores), 0),
        ("attr_embed",
         lambda: core.update_attr_embed(net.attributes, work, scores, hp), 1),
        ("attr_basis",
         lambda: core.update_attr_basis(net.attributes, work, scores), 0),
    ]
    worst = np.inf
    per = max(1, n_coords // len(plans))
    for name, update, axis in plans:
        old = getattr(work, name).copy()
        new = update()
        for _ in range(per):
            i = int(rng.integers(old.shape[0]))
            k = int(rng.integers(old.shape[1]))
            probe = work.copy()
            setattr(probe, name, mid_matrix(old, new, k if axis == 1 else i, axis))
            worst = min(worst, min_fd_gap(net, probe, scores, hp, name, i, k))
        setattr(work, name, new)
    return worst


def hypergeom_recall_null(n: int, n_truth: int, top: int) -> tuple[float, float]:
    """(mean, std) of the recall of a uniformly random ranking."""
    frac = n_truth / n
    mean_hits = top * frac
    var_hits = top * frac * (1.0 - frac) * (n - top) / (n - 1)
    return mean_hits / n_truth, math.sqrt(var_hits) / n_truth


def run_cli(*args: str) -> tuple[int, str, str]:
    """Invoke the CLI in-process; returns (exit_code, stdout, stderr)."""
    from oaembed.cli import main

    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(args))
    return code, out.getvalue(), err.getvalue()
