"""Property suites behind ``wiregraph verify``.

Every suite runs at fixed seeds and returns a list of check records
``{"check", "statistic", "threshold", "pass"}`` (plus suite-specific fields).
A check passes when ``statistic <= threshold`` unless it says otherwise.
Functions reach rotation routines through the ``rope`` module object so a
test can patch them.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import attention, rope
from .graph import (
    Graph,
    connected_components,
    gen_knn_graph,
    gen_watts_strogatz,
    grid_graph,
    laplacian,
    path_graph,
)
from .nn.model import ModelConfig, WireTransformer
from .rng import Rng
from .spectral import (
    Variant,
    eig_dense,
    eig_lanczos,
    projector_distance,
    resistance_matrix,
    spectral_features,
)

__all__ = ["SUITES", "run_suite", "run_suites", "random_connected_graph", "random_rotation"]

Check = dict


def _check(name: str, statistic: float, threshold: float, ok: bool | None = None, **extra) -> Check:
    statistic = float(statistic)
    passed = statistic <= threshold if ok is None else ok
    return {"check": name, "statistic": statistic, "threshold": float(threshold),
            "pass": bool(passed), **extra}


def _cos_positions(n: int) -> np.ndarray:
    return -np.cos((np.arange(n) + 0.5) * np.pi / n)


def _sign_match(u: np.ndarray, c: np.ndarray) -> tuple[float, float]:
    """Deviation of ``u`` from unit ``c`` up to global sign, and the sign used."""
    c = c / np.linalg.norm(c)
    plus, minus = np.max(np.abs(u - c)), np.max(np.abs(u + c))
    return (plus, 1.0) if plus <= minus else (minus, -1.0)


def _rope_reference_logit(q, k, nu_i, nu_j) -> float:
    """Plain RoPE logit with per-block angles, via explicit 2x2 rotations."""
    total = 0.0
    for n in range(len(nu_i)):
        a = rope.rotation_matrix(nu_i[n]) @ q[2 * n:2 * n + 2]
        b = rope.rotation_matrix(nu_j[n]) @ k[2 * n:2 * n + 2]
        total += float(a @ b)
    return total


# Theorem 1: RoPE as a special case


def suite_thm1(draws: int = 100, seed: int = 1) -> list[Check]:
    out = []
    rng = Rng(seed).child("thm1")

    # 1D: path graph
    n = 16
    spec = eig_dense(laplacian(path_graph(n)))
    phi = _cos_positions(n)
    dev, sign = _sign_match(spec.eigenvectors[:, 1], phi)
    out.append(_check("thm1.path16.eigenvector", dev, 1e-8))
    coords = spectral_features(spec, Variant.RAW).coords[:, :1]
    scale = sign * np.linalg.norm(phi)
    worst = 0.0
    for t in range(draws):
        r = rng.child(t)
        d = 2 * int(r.integers(1, 9))
        q, k = r.normal(size=d), r.normal(size=d)
        nu = r.normal(size=d // 2) * 3.0
        freqs = rope.WireFrequencies((nu * scale)[:, None])
        th = rope.angles(freqs, coords)
        wq = rope.apply_rope_fast(np.tile(q, (n, 1)), th)
        wk = rope.apply_rope_fast(np.tile(k, (n, 1)), th)
        wire = wq @ wk.T
        for i in range(n):
            for j in range(n):
                ref = _rope_reference_logit(q, k, nu * phi[i], nu * phi[j])
                worst = max(worst, abs(wire[i, j] - ref))
    out.append(_check("thm1.path16.logits", worst, 1e-10))

    # 2D: grid, product construction
    rows, cols = 4, 6
    spec = eig_dense(laplacian(grid_graph(rows, cols)))
    r_idx, c_idx = np.divmod(np.arange(rows * cols), cols)
    phi_c = _cos_positions(cols)[c_idx]
    phi_r = _cos_positions(rows)[r_idx]
    dev_c, sign_c = _sign_match(spec.eigenvectors[:, 1], phi_c)
    dev_r, sign_r = _sign_match(spec.eigenvectors[:, 2], phi_r)
    out.append(_check("thm1.grid4x6.eigenvectors", max(dev_c, dev_r), 1e-8))
    coords = spectral_features(spec, Variant.RAW).coords[:, :2]
    scale_c = sign_c * np.linalg.norm(phi_c)
    scale_r = sign_r * np.linalg.norm(phi_r)
    worst = 0.0
    nn = rows * cols
    for t in range(draws):
        r = rng.child(f"grid{t}")
        half = int(r.integers(1, 9))
        hc = int(r.integers(0, half + 1))
        q, k = r.normal(size=2 * half), r.normal(size=2 * half)
        nu = r.normal(size=half) * 3.0
        omega = np.zeros((half, 2))
        omega[:hc, 0] = nu[:hc] * scale_c
        omega[hc:, 1] = nu[hc:] * scale_r
        th = rope.angles(rope.WireFrequencies(omega), coords)
        wq = rope.apply_rope_fast(np.tile(q, (nn, 1)), th)
        wk = rope.apply_rope_fast(np.tile(k, (nn, 1)), th)
        wire = wq @ wk.T
        pos = [np.concatenate([nu[:hc] * phi_c[i], nu[hc:] * phi_r[i]]) for i in range(nn)]
        for i in range(nn):
            for j in range(nn):
                worst = max(worst, abs(wire[i, j] - _rope_reference_logit(q, k, pos[i], pos[j])))
    out.append(_check("thm1.grid4x6.logits", worst, 1e-10))
    return out


# Theorem 2: logit damping by effective resistance


def random_connected_graph(n: int, rng: Rng, k: int = 2, p: float = 0.6) -> Graph:
    """First connected Watts-Strogatz draw from ``rng``'s sub-streams."""
    for attempt in range(1000):
        g = gen_watts_strogatz(n, k, p, rng.child(attempt))
        if not np.any(connected_components(g)):
            return g
    raise RuntimeError("no connected graph drawn")


THM2_OMEGAS = (0.02, 0.05, 0.1)


def theorem2_setup(seed: int = 2, d: int = 64):
    """Fixed graph, node pair of largest resistance, and a query/key pair.

    ``k`` equals ``q`` blockwise, which removes the sine terms and lowers the
    Monte-Carlo variance without changing the prediction.
    """
    rng = Rng(seed).child("thm2")
    g = random_connected_graph(8, rng.child("graph"))
    R = resistance_matrix(laplacian(g))
    i, j = (int(x) for x in np.unravel_index(np.argmax(R), R.shape))
    q = rng.child("q").normal(size=d)
    return g, i, j, q, q.copy()


def suite_thm2(n_samples: int = 1_000_000, seed: int = 2,
               omegas=THM2_OMEGAS) -> list[Check]:
    g, i, j, q, k = theorem2_setup(seed)
    rng = Rng(seed).child("thm2").child("mc")
    results = [rope.theorem2_mc_check(g, q, k, i, j, w, n_samples, rng.child(t))
               for t, w in enumerate(omegas)]
    w4 = np.array(omegas) ** 4
    dev = np.array([r.mc_mean - r.predicted for r in results])
    se = np.array([r.mc_stderr for r in results])
    C = float(np.sum(dev * w4) / np.sum(w4 * w4))
    out = []
    for w, r, dv, s in zip(omegas, results, dev, se):
        bound = 3.0 * s + abs(C) * w ** 4
        out.append(_check(f"thm2.omega={w:g}", abs(dv), bound,
                          mc_mean=r.mc_mean, predicted=r.predicted, stderr=r.mc_stderr,
                          exact_expectation=r.exact_expectation, resistance=r.resistance,
                          fitted_C=C))
    sig = np.abs(dev) > 5.0 * se
    if sig.sum() >= 2:
        slope = float(np.polyfit(np.log(np.array(omegas)[sig]), np.log(np.abs(dev[sig])), 1)[0])
    else:
        slope = math.nan
    out.append(_check("thm2.loglog_slope", slope, 3.5, ok=bool(slope >= 3.5),
                      direction=">=", n_significant=int(sig.sum())))
    out.extend(_thm2_truncation_report(g, i, j, q, k, omegas))
    return out


def _thm2_truncation_report(g, i, j, q, k, omegas, ms=(1, 2, 3, 5)) -> list[Check]:
    """Report-only: keeping ``m`` resistance-scaled columns replaces R by the
    partial sum ``R_m``, and Gaussian frequencies give the logit expectation
    ``q.k exp(-w^2 R_m / 2)`` in closed form.  Listed against the full-R
    prediction without a threshold."""
    L = laplacian(g)
    coords = spectral_features(eig_dense(L, g.n), Variant.RESISTANCE).coords
    R = float(np.sum((coords[i] - coords[j]) ** 2))
    qk = float(q @ k)
    rows = []
    for m in ms:
        Rm = float(np.sum((coords[i, :m] - coords[j, :m]) ** 2))
        for w in omegas:
            expect = qk * math.exp(-w * w * Rm / 2.0)
            predicted = qk * (1.0 - w * w * R / 2.0)
            rows.append({"check": f"thm2.truncated.m={m}.omega={w:g}", "statistic": abs(expect - predicted),
                         "threshold": None, "pass": True, "report_only": True, "m": m,
                         "truncated_resistance": Rm, "resistance": R,
                         "truncated_expectation": expect, "predicted": predicted})
    return rows


# Eq. 5: fast path vs block rotation


def suite_eq5(cases: int = 10_000, seed: int = 3) -> list[Check]:
    rng = Rng(seed).child("eq5")
    dims = 2 * rng.integers(1, 33, size=cases)
    worst = 0.0
    for t, d in enumerate(dims):
        r = rng.child(t)
        z = r.normal(size=d)
        theta = r.normal(size=d // 2) * 10.0 ** r.uniform(-2, 2)
        fast = rope.apply_rope_fast(z, theta)
        block = rope.apply_rope_block(z, theta)
        worst = max(worst, float(np.max(np.abs(fast - block))))
    return [_check("eq5.fast_vs_block", worst, 1e-12)]


# Remark 1: permutation equivariance


def generic_graph(rng: Rng, n_min: int = 8, n_max: int = 16, m: int = 10,
                  gap: float = 1e-4, pivot_margin: float = 1e-6) -> Graph:
    """Connected graph whose lowest ``m + 1`` eigenvalues are simple and whose
    sign pivots are untied, so spectral coordinates are unique per node."""
    for attempt in range(10_000):
        r = rng.child(attempt)
        n = int(r.integers(n_min, n_max + 1))
        g = gen_watts_strogatz(n, 4, 0.5, r.child("g"))
        if np.any(connected_components(g)):
            continue
        w, U = np.linalg.eigh(laplacian(g))
        top = min(n, m + 1)
        if np.min(np.diff(w[:top + 1 if top < n else top])) < gap:
            continue
        # column 0 is constant (every entry ties) and is dropped from the features
        a = np.sort(np.abs(U[:, 1:top]), axis=0)
        if np.min(a[-1] - a[-2]) < pivot_margin:
            continue
        return g
    raise RuntimeError("no generic graph drawn")


def _model_inputs(g: Graph, rng: Rng, extra: int = 3) -> tuple[np.ndarray, np.ndarray]:
    from .bench import spectral_inputs
    coords = spectral_inputs(g)
    feats = rng.normal(size=(g.n, extra))
    return np.concatenate([coords, feats], axis=1), coords


def suite_perm(n_graphs: int = 50, seed: int = 4) -> list[Check]:
    rng = Rng(seed).child("perm")
    wire_m = 5
    cfg = ModelConfig(input_dim=13, wire_m=wire_m, dropout_rate=0.0)
    model = WireTransformer(cfg, rng.child("model"))
    perf = WireTransformer(ModelConfig(input_dim=13, wire_m=wire_m, dropout_rate=0.0,
                                       attention_kind="performer_relu"), rng.child("model"))
    worst_model = worst_ops = worst_scores = 0.0
    for t in range(n_graphs):
        r = rng.child(t)
        g = generic_graph(r.child("graph"))
        perm = r.permutation(g.n)
        gp = g.relabel(perm)
        inv = np.argsort(perm)
        x, c = _model_inputs(g, r.child("x"))
        xp_feats = x[inv, 10:]
        cp = _model_inputs(gp, r.child("x"))[1]
        xp = np.concatenate([cp, xp_feats], axis=1)

        # model level: graph scalar invariant, final attention permutes
        for mdl in (model, perf):
            cap1, cap2 = {}, {}
            y1 = mdl.forward(x, c[:, :wire_m], capture=cap1).value
            y2 = mdl.forward(xp, cp[:, :wire_m], capture=cap2).value
            worst_model = max(worst_model, float(np.max(np.abs(y1 - y2))))
            A1, A2 = cap1["scores"][0], cap2["scores"][0]
            worst_scores = max(worst_scores, float(np.max(np.abs(A1[np.ix_(inv, inv)] - A2))))

        # operator level
        L, Lp = laplacian(g), laplacian(gp)
        worst_ops = max(worst_ops, float(np.max(np.abs(L[np.ix_(inv, inv)] - Lp))))
        Rm, Rp = resistance_matrix(L), resistance_matrix(Lp)
        worst_ops = max(worst_ops, float(np.max(np.abs(Rm[np.ix_(inv, inv)] - Rp))))
        worst_ops = max(worst_ops, float(np.max(np.abs(c[inv] - cp))))
        d = 8
        Q, K, V = (r.child(nm).normal(size=(g.n, d)) for nm in "QKV")
        freqs = rope.init_frequencies(d, wire_m, "gaussian", r.child("w"))
        batch = attention.AttentionBatch(Q, K, V)
        pb = batch.permuted(perm)
        pairs = [
            (attention.wire_softmax(batch, freqs, c[:, :wire_m]),
             attention.wire_softmax(pb, freqs, cp[:, :wire_m])),
            (attention.wire_performer(batch, "relu", freqs, c[:, :wire_m]),
             attention.wire_performer(pb, "relu", freqs, cp[:, :wire_m])),
            (attention.linear_attention(batch, "relu"), attention.linear_attention(pb, "relu")),
        ]
        for a, b in pairs:
            worst_ops = max(worst_ops, float(np.max(np.abs(a[inv] - b))))
    return [_check("perm.model_predictions", worst_model, 1e-9),
            _check("perm.model_attention", worst_scores, 1e-9),
            _check("perm.operators", worst_ops, 1e-9)]


# Remark 2: rigid-motion invariance of kNN pipelines


def random_rotation(rng: Rng) -> np.ndarray:
    """Haar-random proper rotation in 3D via QR with sign correction."""
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def _knn_untied(points: np.ndarray, k: int, margin: float = 1e-9) -> bool:
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    s = np.sort(d2, axis=1)
    return bool(np.all(s[:, k] - s[:, k - 1] > margin * max(1.0, float(s[:, k].max()))))


def suite_se3(n_clouds: int = 20, seed: int = 5, n_points: int = 32, k: int = 5) -> list[Check]:
    rng = Rng(seed).child("se3")
    worst_graph = worst_proj = worst_out = 0.0
    skipped = 0
    done = 0
    t = 0
    while done < n_clouds:
        r = rng.child(t)
        t += 1
        pts = r.normal(size=(n_points, 3))
        if not _knn_untied(pts, k):
            skipped += 1
            continue
        Rot, shift = random_rotation(r.child("rot")), r.normal(size=3) * 5.0
        moved = pts @ Rot.T + shift
        g1, g2 = gen_knn_graph(pts, k), gen_knn_graph(moved, k)
        worst_graph = max(worst_graph, float(len(g1.edge_set() ^ g2.edge_set())))
        s1, s2 = eig_dense(laplacian(g1)), eig_dense(laplacian(g2))
        worst_proj = max(worst_proj, projector_distance(s1.eigenvectors, s2.eigenvectors,
                                                        s1.eigenvalues, complete_only=False))
        m, d = 4, 8
        c1 = spectral_features(s1, Variant.RAW).coords[:, :m]
        c2 = spectral_features(s2, Variant.RAW).coords[:, :m]
        Q, K, V = (r.child(nm).normal(size=(n_points, d)) for nm in "QKV")
        freqs = rope.init_frequencies(d, m, "gaussian", r.child("w"))
        b = attention.AttentionBatch(Q, K, V)
        o1, o2 = attention.wire_softmax(b, freqs, c1), attention.wire_softmax(b, freqs, c2)
        worst_out = max(worst_out, float(np.max(np.abs(o1 - o2))))
        done += 1
    return [_check("se3.knn_edges_changed", worst_graph, 0.0),
            _check("se3.projectors", worst_proj, 1e-8),
            _check("se3.wire_softmax", worst_out, 1e-8, skipped_tied=skipped)]


# streaming linear attention


def quadratic_linear_attention(Q, K, V, fmap="relu") -> np.ndarray:
    """Explicit ``N x N`` oracle for linear attention."""
    fq, fk = attention.feature_map(Q, fmap), attention.feature_map(K, fmap)
    A = fq @ fk.T
    den = A.sum(axis=1)
    if attention.FeatureMap(fmap) is attention.FeatureMap.RELU:
        den = den + attention.DENOMINATOR_EPS
    return (A @ V) / den[:, None]


def suite_linear(cases: int = 60, seed: int = 6, chunk: int = 64) -> list[Check]:
    rng = Rng(seed).child("linear")
    worst = 0.0
    mem_ok = True
    worst_ratio = 0.0
    for t in range(cases):
        r = rng.child(t)
        n = int(r.integers(1, 257))
        d = 2 * int(r.integers(1, 9))
        dv = int(r.integers(1, 9))
        Q, K, V = r.normal(size=(n, d)), r.normal(size=(n, d)), r.normal(size=(n, dv))
        mem = attention.AuxMemory()
        fast = attention.linear_attention(attention.AttentionBatch(Q, K, V), "relu", chunk, mem)
        ref = quadratic_linear_attention(Q, K, V)
        worst = max(worst, float(np.max(np.abs(fast - ref)) / max(1.0, np.max(np.abs(ref)))))
        # S, s and one feature chunk: independent of n
        budget = d * dv + d + chunk * d
        worst_ratio = max(worst_ratio, mem.peak / budget)
        mem_ok &= mem.peak <= budget

        coords = r.normal(size=(n, 3))
        freqs = rope.init_frequencies(d, 3, "gaussian", r.child("w"))
        th = rope.angles(freqs, coords)
        rq, rk = rope.apply_rope_fast(Q, th), rope.apply_rope_fast(K, th)
        wp = attention.wire_performer(attention.AttentionBatch(Q, K, V), "relu", freqs, coords)
        worst = max(worst, float(np.max(np.abs(wp - quadratic_linear_attention(rq, rk, V)))
                                 / max(1.0, np.max(np.abs(wp)))))
    big = attention.AuxMemory()
    n_big, d_big = 4096, 8
    r = rng.child("big")
    attention.linear_attention(attention.AttentionBatch(
        r.normal(size=(n_big, d_big)), r.normal(size=(n_big, d_big)), r.normal(size=(n_big, d_big))),
        "relu", chunk, big)
    return [_check("linear.streaming_vs_quadratic", worst, 1e-8),
            _check("linear.peak_memory_over_d2_budget", worst_ratio, 1.0, ok=bool(mem_ok)),
            _check("linear.peak_memory_n4096", big.peak, d_big * d_big + d_big + chunk * d_big,
                   n_squared=n_big * n_big)]


# Lanczos vs dense


def suite_lanczos(n_graphs: int = 20, seed: int = 7, m: int = 8) -> list[Check]:
    rng = Rng(seed).child("lanczos")
    worst_val = worst_proj = 0.0
    for t in range(n_graphs):
        r = rng.child(t)
        n = int(r.integers(10, 201))
        g = gen_watts_strogatz(n, 2 * int(r.integers(1, 4)), float(r.uniform(0, 1)), r.child("g"))
        L = laplacian(g)
        dense = eig_dense(L, m)
        lan = eig_lanczos(L, m=m, rng=r.child("lanczos"))
        worst_val = max(worst_val, float(np.max(np.abs(dense.eigenvalues - lan.eigenvalues))))
        worst_proj = max(worst_proj, projector_distance(dense.eigenvectors, lan.eigenvectors,
                                                        dense.eigenvalues))
    return [_check("lanczos.eigenvalues", worst_val, 1e-8),
            _check("lanczos.projectors", worst_proj, 1e-6)]


def _fd_rel(f, arrays, grads, rng: Rng, coords: int, h: float = 1e-5) -> float:
    """Worst relative gap between analytic ``grads`` and central differences of ``f``."""
    sizes = np.array([a.size for a in arrays], dtype=float)
    worst = 0.0
    for _ in range(coords):
        which = int(rng.gen.choice(len(arrays), p=sizes / sizes.sum()))
        a = arrays[which]
        idx = np.unravel_index(int(rng.integers(0, a.size)), a.shape)
        old = a[idx]
        a[idx] = old + h
        up = f()
        a[idx] = old - h
        down = f()
        a[idx] = old
        num = (up - down) / (2 * h)
        ana = grads[which][idx]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-7))
    return worst


def _primitive_cases(rng: Rng):
    """(name, builder, inputs); builders map leaf tensors to an output tensor."""
    from .nn import autodiff as ad

    def away(shape, lo):
        # keep entries clear of kinks and poles
        x = rng.normal(size=shape)
        return np.where(np.abs(x) < lo, np.where(x < 0, -lo, lo), x)

    mask = rng.random((3, 4)) >= 0.3
    normal = rng.normal
    return [
        ("matmul", ad.matmul, [normal(size=(3, 4)), normal(size=(4, 2))]),
        ("matmul_batched", ad.matmul, [normal(size=(2, 3, 4)), normal(size=(4, 5))]),
        ("add", ad.add, [normal(size=(3, 4)), normal(size=4)]),
        ("sub", ad.sub, [normal(size=(3, 4)), normal(size=(3, 1))]),
        ("mul", ad.mul, [normal(size=(3, 4)), normal(size=(1, 4))]),
        ("div", ad.div, [normal(size=(3, 4)), away((3, 4), 0.5)]),
        ("relu", ad.relu, [away((3, 4), 1e-2)]),
        ("transpose", ad.transpose, [normal(size=(2, 3, 4))]),
        ("sum", lambda a: ad.sum_axis(a, axis=-2), [normal(size=(2, 3, 4))]),
        ("layernorm", ad.layernorm, [normal(size=(3, 6))]),
        ("softmax", ad.softmax, [normal(size=(3, 5))]),
        ("mean_pool", ad.mean_pool, [normal(size=(2, 5, 3))]),
        ("mse", lambda a: ad.mse(a, np.ones((4, 1))), [normal(size=(4, 1))]),
        ("dropout", lambda a: ad.dropout(a, mask, 0.3), [normal(size=(3, 4))]),
        ("rope", ad.rope, [normal(size=(2, 3, 6)), normal(size=(2, 3, 3))]),
    ]


def _model_grad_rel(kind: str, rng: Rng, coords: int) -> float:
    from .nn import autodiff as ad

    cfg = ModelConfig(input_dim=5, n_layers=2, d_model=8, d_mlp=8, wire_m=3, attention_kind=kind)
    model = WireTransformer(cfg, rng.child("init"))
    x = rng.normal(size=(2, 6, 5))
    c = rng.normal(size=(2, 6, 3))
    y = rng.normal(size=(2, 1))
    drop = rng.child("dropout")

    def loss():
        return ad.mse(model.forward(x, c, train=True, rng=drop), y)

    model.zero_grad()
    loss().backward()
    names = list(model.params)
    arrays = [model.params[k].value for k in names]
    grads = [model.params[k].grad.copy() for k in names]
    rel = _fd_rel(lambda: float(loss().value), arrays, grads, rng.child("fd"), coords)
    # the frequencies are few, so probe them separately as well
    wire = [i for i, k in enumerate(names) if k.endswith("wire.omega")]
    rel_w = _fd_rel(lambda: float(loss().value), [arrays[i] for i in wire], [grads[i] for i in wire],
                    rng.child("fd-wire"), coords)
    return max(rel, rel_w)


def suite_grad(seed: int = 8, coords: int = 20) -> list[Check]:
    """Reverse-mode gradients of every primitive and of the model loss against central differences."""
    from .nn import autodiff as ad

    rng = Rng(seed).child("grad")
    out = []
    for name, build, arrays in _primitive_cases(rng.child("cases")):
        leaves = [ad.Tensor(a.copy(), requires_grad=True) for a in arrays]
        y = build(*leaves)
        # scalar probe: a random weighting of the outputs
        w = rng.child(name).normal(size=y.shape)
        y.backward(w)
        grads = [t.grad for t in leaves]
        value = lambda: float(np.sum(build(*[ad.Tensor(a) for a in arrays]).value * w))
        out.append(_check(f"grad.{name}", _fd_rel(value, arrays, grads, rng.child(name).child("fd"), coords), 1e-4))
    for kind in ("softmax", "performer_relu"):
        out.append(_check(f"grad.model.{kind}", _model_grad_rel(kind, rng.child(kind), coords), 1e-4))
    return out


SUITES: dict[str, Callable[[], list[Check]]] = {
    "thm1": suite_thm1,
    "thm2": suite_thm2,
    "eq5": suite_eq5,
    "perm": suite_perm,
    "se3": suite_se3,
    "linear": suite_linear,
}


def run_suite(name: str) -> list[Check]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return [dict(c, suite=name) for c in SUITES[name]()]


def run_suites(names) -> dict:
    """Run the named suites (``"all"`` expands) and summarize."""
    if isinstance(names, str):
        names = [names]
    expanded = []
    for nm in names:
        expanded.extend(SUITES if nm == "all" else [nm])
    checks = [c for nm in expanded for c in run_suite(nm)]
    return {"suites": expanded, "checks": checks, "pass": all(c["pass"] for c in checks)}
