"""Binary SVM trained by sequential minimal optimization, wrapped in an
incremental Learn++-style ensemble.

The SVM solves the soft-margin dual

    max  sum a_i - 1/2 sum y_i y_j a_i a_j K(x_i, x_j)
    s.t. 0 <= a_i <= C_i,  sum a_i y_i = 0

by pairwise coordinate ascent: each step picks the worst KKT violator plus a
partner maximizing |E_i - E_j| and solves the two-variable subproblem exactly,
so the dual objective never decreases.  Per-sample box constraints C_i carry
example weights (C_i = C * normalized_weight * n).

The ensemble trains batches of weak SVMs: each round samples a training
subset from the current example distribution, accepts the new hypothesis only
if the composite weighted-majority error stays below 1/2, then multiplies the
weights of correctly classified examples by beta = err/(1-err) so later
rounds concentrate on the hard examples.  Prior batches' data is never
revisited; their hypotheses keep voting with weight log(1/beta).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

MODEL_MAGIC = b"MAVSVM01"
BETA_FLOOR = 1e-10  # keeps log(1/beta) finite for perfect hypotheses


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"  # linear | rbf | poly
    gamma: float = 0.5
    degree: int = 3
    coef: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf", "poly"):
            raise DataError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and self.gamma <= 0:
            raise DataError("rbf gamma must be > 0")
        if self.kind == "poly" and self.degree < 1:
            raise DataError("poly degree must be >= 1")


def kernel_eval(spec: KernelSpec, x, z) -> float:
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise DataError(f"kernel operands differ in shape: {x.shape} vs {z.shape}")
    return float(_kernel_matrix(spec, x[None, :], z[None, :])[0, 0])


def _kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[1]:
        raise DataError("kernel operands differ in dimensionality")
    if spec.kind == "linear":
        return a @ b.T
    if spec.kind == "poly":
        return (a @ b.T + spec.coef) ** spec.degree
    d2 = (a * a).sum(axis=1)[:, None] - 2.0 * a @ b.T + (b * b).sum(axis=1)[None, :]
    return np.exp(-spec.gamma * np.maximum(d2, 0.0))


@dataclass(frozen=True)
class SvmModel:
    kernel: KernelSpec
    support_vectors: np.ndarray  # (m, dim)
    sv_labels: np.ndarray  # (m,) in {-1, +1}
    alphas: np.ndarray  # (m,), all > 0
    bias: float
    c: float


@dataclass(frozen=True)
class TrainParams:
    c: float = 10.0
    t_k: int = 5  # hypotheses per batch
    train_fraction: float = 0.7
    kkt_tol: float = 1e-3
    max_passes: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.c <= 0:
            raise DataError("C must be > 0")
        if self.t_k < 1:
            raise DataError("t_k must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must be in (0, 1)")


def svm_train(
    x,
    y,
    c: float,
    kernel: KernelSpec,
    kkt_tol: float = 1e-3,
    max_passes: int = 200,
    seed: int = 0,
    weights=None,
) -> SvmModel:
    """SMO training.  weights, when given, scale each sample's box constraint
    to C * w_i/mean(w); both classes must be present."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DataError("x must be (n, dim) with matching labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise DataError("training data contains a single class")
    n = x.shape[0]
    if weights is None:
        box = np.full(n, c)
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.shape[0] != n or (w < 0).any() or w.sum() <= 0:
            raise DataError("weights must be non-negative with positive sum")
        box = c * (w / w.sum()) * n
        box = np.maximum(box, 1e-12 * c)  # keep the dual feasible set full-rank

    k = _kernel_matrix(kernel, x, x)
    alpha = np.zeros(n)
    # f_i = sum_j alpha_j y_j K(i, j); errors E_i = f_i - y_i (b folded out:
    # the pair update only uses E_i - E_j, which b cancels from).
    f = np.zeros(n)

    # Maximal-violating-pair selection: the worst violator from the "can
    # grow" side paired with the worst from the "can shrink" side; when that
    # pair is blocked at the box, fall back on the next-worst partners.
    budget = max_passes * n
    for _ in range(budget):
        m_up, m_dn = _kkt_violations(alpha, y, f, box, kkt_tol)
        gap = float(m_up.max() - m_dn.min())
        if gap <= kkt_tol:
            break
        i = int(np.argmax(m_up))
        moved = False
        for j in np.argsort(m_dn)[: min(n, 16)]:
            if np.isfinite(m_dn[j]) and _update_pair(i, int(j), alpha, y, f, k, box):
                moved = True
                break
        if not moved:
            raise NumericalError(
                f"SMO stalled with KKT violation {gap:.3e} (tol {kkt_tol:.1e})"
            )
    else:
        gap = float(m_up.max() - m_dn.min())
        raise NumericalError(
            f"SMO did not converge within {budget} pair updates; "
            f"final KKT violation {gap:.3e}"
        )

    bias = _solve_bias(alpha, y, f, box, kkt_tol)
    sv = alpha > 0
    return SvmModel(
        kernel=kernel,
        support_vectors=x[sv].copy(),
        sv_labels=y[sv].copy(),
        alphas=alpha[sv].copy(),
        bias=bias,
        c=c,
    )


def _kkt_violations(alpha, y, f, box, tol) -> np.ndarray:
    # Margins via yf with the optimal b applied on the fly would complicate
    # the pair loop; use the b-free gradient form instead.  With g_i = y_i -
    # f_i the dual gradient, optimality is: g_i - b*y_i <= 0 where alpha can
    # grow, >= 0 where it can shrink, for some common b.  Equivalently
    # max over "up" candidates of y_i g'_i <= min over "down" candidates.
    up = (alpha < box - 1e-12) & (y > 0) | (alpha > 1e-12) & (y < 0)
    dn = (alpha < box - 1e-12) & (y < 0) | (alpha > 1e-12) & (y > 0)
    grad = y - f  # d/d(alpha_i y_i) of the dual along feasible moves
    m_up = np.where(up, grad, -np.inf)
    m_dn = np.where(dn, grad, np.inf)
    return m_up, m_dn


def _update_pair(i, j, alpha, y, f, k, box) -> bool:
    if i == j:
        return False
    eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
    e_i = f[i] - y[i]
    e_j = f[j] - y[j]
    s = y[i] * y[j]
    if s > 0:
        lo = max(0.0, alpha[i] + alpha[j] - box[j])
        hi = min(box[i], alpha[i] + alpha[j])
    else:
        lo = max(0.0, alpha[i] - alpha[j])
        hi = min(box[i], box[j] + alpha[i] - alpha[j])
    if hi - lo < 1e-14:
        return False
    old_i = alpha[i]
    if eta > 1e-14:
        new_i = old_i + y[i] * (e_j - e_i) / eta
    else:
        # Flat (or numerically zero) curvature: move to the better endpoint.
        d_obj_lo = _pair_objective_delta(lo - old_i, i, j, alpha, y, f, k)
        d_obj_hi = _pair_objective_delta(hi - old_i, i, j, alpha, y, f, k)
        new_i = lo if d_obj_lo >= d_obj_hi else hi
    new_i = min(max(new_i, lo), hi)
    delta_i = new_i - old_i
    if abs(delta_i) < 1e-14:
        return False
    delta_j = -s * delta_i
    alpha[i] = new_i
    alpha[j] += delta_j
    f += delta_i * y[i] * k[i] + delta_j * y[j] * k[j]
    return True


def _pair_objective_delta(d_i, i, j, alpha, y, f, k):
    # Dual objective change for alpha_i += d_i, alpha_j -= s*d_i.
    s = y[i] * y[j]
    d_j = -s * d_i
    lin = d_i * (1.0 - y[i] * f[i]) + d_j * (1.0 - y[j] * f[j])
    quad = 0.5 * (d_i * d_i * k[i, i] + d_j * d_j * k[j, j]) + d_i * d_j * s * k[i, j]
    return lin - quad


def _solve_bias(alpha, y, f, box, tol) -> float:
    # Decision uses f(x) = sum alpha y K - b, so margin SVs give b = f_i - y_i.
    margin = (alpha > 1e-8 * np.maximum(box, 1e-30)) & (alpha < box * (1 - 1e-8))
    if margin.any():
        return float((f[margin] - y[margin]).mean())
    m_up, m_dn = _kkt_violations(alpha, y, f, box, tol)
    hi = float(m_up.max())
    lo = float(m_dn.min())
    # grad = y - f; feasibility brackets -b between the two extremes.
    return float(-0.5 * (hi + lo))


def dual_objective(alpha, y, k) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ k @ ay)


def svm_predict(m: SvmModel, x) -> tuple[int, float]:
    """Label in {-1, +1} and the margin value f(x); sign(0) counts as +1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("svm_predict takes a single sample")
    margin = float(_decision_values(m, x[None, :])[0])
    return (1 if margin >= 0 else -1), margin


def _decision_values(m: SvmModel, x: np.ndarray) -> np.ndarray:
    if m.support_vectors.shape[0] == 0:
        return np.full(x.shape[0], -m.bias)
    kv = _kernel_matrix(m.kernel, x, m.support_vectors)
    return kv @ (m.alphas * m.sv_labels) - m.bias


# ---------------------------------------------------------------------------
# incremental ensemble


@dataclass(frozen=True)
class WeakHypothesis:
    model: SvmModel
    beta: float
    batch: int
    iteration: int

    @property
    def vote_weight(self) -> float:
        return float(np.log(1.0 / self.beta))


@dataclass(frozen=True)
class EnsembleModel:
    target: str
    hypotheses: tuple[WeakHypothesis, ...] = ()
    distribution: np.ndarray | None = None  # last batch's final weights (diagnostic)

    @property
    def batches(self) -> int:
        return max((h.batch for h in self.hypotheses), default=-1) + 1


def _votes(hypotheses, x: np.ndarray) -> np.ndarray:
    """Signed vote weight sums, one scalar per row of x."""
    total = np.zeros(x.shape[0])
    for h in hypotheses:
        margins = _decision_values(h.model, x)
        labels = np.where(margins >= 0, 1.0, -1.0)
        total += h.vote_weight * labels
    return total


def learnpp_train_batch(
    ens: EnsembleModel, batch_x, batch_y, params: TrainParams, kernel: KernelSpec
) -> EnsembleModel:
    """Train params.t_k weak SVMs on one batch and return the grown ensemble.

    Each round: sample a training subset from the current distribution, fit a
    weak SVM, and gate it twice: its own distribution-weighted error and the
    composite (all accepted hypotheses voting) error must both stay below 1/2,
    else the draw is discarded (at most 10 per round).  The hypothesis's own
    error sets its stored beta (voting weight log(1/beta)); the composite
    error sets the factor that shrinks correctly-classified examples' weights
    for the next round.  Only the given batch is touched; earlier batches
    contribute through their stored hypotheses' votes.
    """
    x = np.asarray(batch_x, dtype=np.float64)
    y = np.asarray(batch_y, dtype=np.float64).ravel()
    if np.unique(y).size < 2:
        raise DataError("batch must contain both classes")
    n = x.shape[0]
    n_train = int(round(params.train_fraction * n))
    n_train = min(max(n_train, 2), n - 1)
    rng = np.random.default_rng(params.seed + 7919 * ens.batches)
    batch_index = ens.batches
    hypotheses = list(ens.hypotheses)
    w = np.full(n, 1.0 / n)

    for t in range(1, params.t_k + 1):
        accepted = None
        for _retry in range(10):
            s = w / w.sum()
            train_idx = rng.choice(n, size=n_train, replace=False, p=s)
            tr_mask = np.zeros(n, dtype=bool)
            tr_mask[train_idx] = True
            if np.unique(y[tr_mask]).size < 2:
                continue  # single-class draw counts as a failed attempt
            model = svm_train(
                x[tr_mask],
                y[tr_mask],
                params.c,
                kernel,
                kkt_tol=params.kkt_tol,
                max_passes=params.max_passes,
                seed=params.seed + t,
            )
            margins = _decision_values(model, x)
            h_labels = np.where(margins >= 0, 1.0, -1.0)
            err = float(s[h_labels != y].sum())
            if err >= 0.5:
                continue
            beta = max(err / (1.0 - err), BETA_FLOOR)
            candidate = WeakHypothesis(model, beta=beta, batch=batch_index, iteration=t)
            composite = np.where(_votes(hypotheses + [candidate], x) >= 0, 1.0, -1.0)
            comp_err = float(s[composite != y].sum())
            if comp_err >= 0.5:
                continue
            comp_beta = max(comp_err / (1.0 - comp_err), BETA_FLOOR)
            w = np.where(composite == y, w * comp_beta, w)
            accepted = candidate
            break
        if accepted is None:
            raise NumericalError(
                f"batch {batch_index} round {t}: no acceptable hypothesis in 10 draws"
            )
        hypotheses.append(accepted)

    return EnsembleModel(target=ens.target, hypotheses=tuple(hypotheses), distribution=w.copy())


def learnpp_predict(ens: EnsembleModel, x) -> tuple[int, float]:
    """Weighted-majority label and a normalized score in [-1, 1]."""
    if not ens.hypotheses:
        raise DataError("ensemble has no hypotheses")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("learnpp_predict takes a single sample")
    signed = float(_votes(ens.hypotheses, x[None, :])[0])
    total = sum(h.vote_weight for h in ens.hypotheses)
    score = signed / total if total > 0 else 0.0
    return (1 if signed >= 0 else -1), score


def learnpp_scores(ens: EnsembleModel, x) -> np.ndarray:
    """Vectorized normalized scores for an (n, dim) matrix."""
    x = np.asarray(x, dtype=np.float64)
    total = sum(h.vote_weight for h in ens.hypotheses)
    if total <= 0:
        return np.zeros(x.shape[0])
    return _votes(ens.hypotheses, x) / total


# ---------------------------------------------------------------------------
# persistence


def write_ensemble(path, ens: EnsembleModel) -> None:
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        tgt = ens.target.encode("utf-8")
        fh.write(struct.pack("<I", len(tgt)))
        fh.write(tgt)
        fh.write(struct.pack("<I", len(ens.hypotheses)))
        for h in ens.hypotheses:
            m = h.model
            kind = m.kernel.kind.encode("ascii")
            fh.write(struct.pack("<B", len(kind)))
            fh.write(kind)
            fh.write(struct.pack("<ddId", m.kernel.gamma, m.kernel.coef, m.kernel.degree, m.c))
            fh.write(struct.pack("<IIddd", h.batch, h.iteration, h.beta, m.bias, 0.0))
            nsv, dim = m.support_vectors.shape
            fh.write(struct.pack("<II", nsv, dim))
            fh.write(m.sv_labels.astype("<i1").tobytes())
            fh.write(m.alphas.astype("<f8").tobytes())
            fh.write(m.support_vectors.astype("<f8").tobytes())


def read_ensemble(path) -> EnsembleModel:
    data = open(path, "rb").read()
    if not data.startswith(MODEL_MAGIC):
        raise DataError("not an ensemble model file")
    off = len(MODEL_MAGIC)

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, data, off)
        off += struct.calcsize(fmt)
        return vals

    (tlen,) = take("<I")
    target = data[off : off + tlen].decode("utf-8")
    off += tlen
    (n_hyp,) = take("<I")
    hyps = []
    for _ in range(n_hyp):
        (klen,) = take("<B")
        kind = data[off : off + klen].decode("ascii")
        off += klen
        gamma, coef, degree, c = take("<ddId")
        batch, iteration, beta, bias, _pad = take("<IIddd")
        nsv, dim = take("<II")
        labels = np.frombuffer(data, dtype="<i1", count=nsv, offset=off).astype(np.float64)
        off += nsv
        alphas = np.frombuffer(data, dtype="<f8", count=nsv, offset=off).copy()
        off += 8 * nsv
        svs = np.frombuffer(data, dtype="<f8", count=nsv * dim, offset=off).reshape(nsv, dim).copy()
        off += 8 * nsv * dim
        model = SvmModel(
            kernel=KernelSpec(kind=kind, gamma=gamma, degree=degree, coef=coef),
            support_vectors=svs,
            sv_labels=labels,
            alphas=alphas,
            bias=bias,
            c=c,
        )
        hyps.append(WeakHypothesis(model=model, beta=beta, batch=batch, iteration=iteration))
    return EnsembleModel(target=target, hypotheses=tuple(hyps))
