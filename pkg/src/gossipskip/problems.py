"""Problem instances: smooth per-node losses plus a shared proximable term.

Each node holds a strongly convex smooth loss with known moduli
``(mu_i, L_i)``; the shared nonsmooth term enters only through its
proximal mapping.  Generators cover the synthetic least-squares and
logistic families, a LIBSVM-format loader partitions real data across
nodes, and :func:`centralized_solve` produces the reference solution
``x*`` that all relative-error traces share.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .topology import Graph

__all__ = [
    "QuadraticLoss",
    "LogisticLoss",
    "ZeroReg",
    "L1Reg",
    "l1_prox",
    "ProblemInstance",
    "ReferenceSolution",
    "CentralizedSolveError",
    "gen_least_squares",
    "gen_logistic",
    "load_libsvm",
    "logistic_from_parts",
    "flood_constants",
    "centralized_solve",
    "save_csv_bundle",
]

_LS_STREAM = 0x15
_LOGISTIC_STREAM = 0x10C
_PARTITION_STREAM = 0x9A7


@dataclass(frozen=True)
class QuadraticLoss:
    """``f(x) = 0.5 ||A x - b||^2`` with exact curvature bounds.

    ``mu`` and ``lsmooth`` are the extreme eigenvalues of ``A^T A``;
    callers may pass them when known exactly (pinned constructions),
    otherwise they are computed.
    """

    a: np.ndarray
    b: np.ndarray
    mu: float
    lsmooth: float

    def __post_init__(self) -> None:
        gram = self.a.T @ self.a
        object.__setattr__(self, "_gram", gram)
        object.__setattr__(self, "_atb", self.a.T @ self.b)

    @classmethod
    def from_data(cls, a: np.ndarray, b: np.ndarray) -> QuadraticLoss:
        eigs = np.linalg.eigvalsh(a.T @ a)
        return cls(a=a, b=b, mu=float(eigs[0]), lsmooth=float(eigs[-1]))

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    def value(self, x: np.ndarray) -> float:
        r = self.a @ x - self.b
        return 0.5 * float(r @ r)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self._gram @ x - self._atb


@dataclass(frozen=True)
class LogisticLoss:
    """Average logistic loss over local samples plus a ridge term.

    ``f(x) = (1/m) sum_j log(1 + exp(-(a_j . x) b_j)) + gamma1 ||x||^2``
    with labels ``b_j in {-1, +1}``.  Strong convexity ``mu = 2*gamma1``
    is exact; ``lsmooth = 2*gamma1 + sum_j ||a_j||^2 / (4m)`` is the
    certified curvature upper bound.
    """

    features: np.ndarray
    labels: np.ndarray
    gamma1: float

    def __post_init__(self) -> None:
        if self.gamma1 <= 0.0:
            raise ValueError("gamma1 must be positive for strong convexity")
        if set(np.unique(self.labels)) - {-1.0, 1.0}:
            raise ValueError("labels must be in {-1, +1}")

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def mu(self) -> float:
        return 2.0 * self.gamma1

    @property
    def lsmooth(self) -> float:
        m = self.features.shape[0]
        return 2.0 * self.gamma1 + float((self.features**2).sum()) / (4.0 * m)

    def value(self, x: np.ndarray) -> float:
        margins = (self.features @ x) * self.labels
        return float(np.logaddexp(0.0, -margins).mean()) + self.gamma1 * float(x @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        margins = (self.features @ x) * self.labels
        # d/dm log(1+e^-m) = -sigmoid(-m)
        sig = 0.5 * (1.0 + np.tanh(-0.5 * margins))
        g = -(self.features * (sig * self.labels)[:, None]).mean(axis=0)
        return g + 2.0 * self.gamma1 * x


class ZeroReg:
    """The zero regularizer; its prox is the identity."""

    weight = 0.0

    def value(self, x: np.ndarray) -> float:
        return 0.0

    def prox(self, alpha: float, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float)


@dataclass(frozen=True)
class L1Reg:
    """``r(x) = weight * ||x||_1`` with soft-thresholding prox."""

    weight: float

    def value(self, x: np.ndarray) -> float:
        return self.weight * float(np.abs(x).sum())

    def prox(self, alpha: float, y: np.ndarray) -> np.ndarray:
        return l1_prox(alpha, self.weight, y)


def l1_prox(alpha: float, weight: float, y: np.ndarray) -> np.ndarray:
    """Componentwise ``sign(y) * max(|y| - alpha*weight, 0)``."""
    if alpha <= 0.0:
        raise ValueError(f"prox step must be positive, got {alpha}")
    if weight < 0.0:
        raise ValueError(f"l1 weight must be nonnegative, got {weight}")
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - alpha * weight, 0.0)


@dataclass(frozen=True)
class ProblemInstance:
    """Per-node smooth losses plus one shared proximable regularizer."""

    losses: tuple
    reg: object
    dim: int

    def __post_init__(self) -> None:
        if not self.losses:
            raise ValueError("need at least one node loss")
        if any(f.dim != self.dim for f in self.losses):
            raise ValueError("inconsistent loss dimensions")
        if self.mu <= 0.0:
            raise ValueError("losses must be strongly convex (mu > 0)")
        # fast stacked-gradient path when every node is quadratic
        if all(isinstance(f, QuadraticLoss) for f in self.losses):
            grams = np.stack([f._gram for f in self.losses])
            atbs = np.stack([f._atb for f in self.losses])
            object.__setattr__(self, "_grams", grams)
            object.__setattr__(self, "_atbs", atbs)
        else:
            object.__setattr__(self, "_grams", None)
            object.__setattr__(self, "_atbs", None)

    @property
    def n(self) -> int:
        return len(self.losses)

    @property
    def L(self) -> float:
        return max(f.lsmooth for f in self.losses)

    @property
    def mu(self) -> float:
        return min(f.mu for f in self.losses)

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    def gradient_stack(self, x_stack: np.ndarray) -> np.ndarray:
        """Per-node gradients of the stacked iterate, shape ``(n, d)``."""
        if self._grams is not None:
            return np.einsum("nij,nj->ni", self._grams, x_stack) - self._atbs
        return np.stack(
            [f.gradient(x_stack[i]) for i, f in enumerate(self.losses)]
        )

    def gradient_average(self, x: np.ndarray) -> np.ndarray:
        """Gradient of ``(1/n) sum_i f_i`` at a single point."""
        if self._grams is not None:
            return self._grams.mean(axis=0) @ x - self._atbs.mean(axis=0)
        return np.mean([f.gradient(x) for f in self.losses], axis=0)

    def objective(self, x: np.ndarray) -> float:
        """``h(x) = (1/n) sum_i f_i(x) + r(x)``."""
        smooth = sum(f.value(x) for f in self.losses) / self.n
        return smooth + self.reg.value(x)

    def prox_stack(self, alpha: float, y_stack: np.ndarray) -> np.ndarray:
        """Row-wise prox of the shared regularizer."""
        if isinstance(self.reg, ZeroReg):
            return y_stack
        if isinstance(self.reg, L1Reg):
            return l1_prox(alpha, self.reg.weight, y_stack)
        return np.stack([self.reg.prox(alpha, row) for row in y_stack])


@dataclass(frozen=True)
class ReferenceSolution:
    """Centralized minimizer with its certified residual."""

    xstar: np.ndarray
    residual: float
    iterations: int


class CentralizedSolveError(RuntimeError):
    """Reference solver hit its iteration cap; carries the best iterate."""

    def __init__(self, message: str, best: ReferenceSolution):
        super().__init__(message)
        self.best = best


def gen_least_squares(
    n: int,
    d: int,
    mu: float,
    lsmooth: float,
    seed: int,
    reg: object | None = None,
) -> ProblemInstance:
    """Synthetic least squares with per-node curvature pinned exactly.

    Each node gets ``A_i = Q_i diag(s_i)`` with ``Q_i`` a random
    orthogonal matrix and singular values ``s_i`` log-uniform in
    ``[sqrt(mu), sqrt(lsmooth)]``, endpoints pinned in fixed slots so
    that ``eig(A_i^T A_i)`` spans exactly ``[mu, lsmooth]`` on every
    node (and the averaged Hessian keeps the same extreme values).
    Targets ``b_i`` are standard normal.  The regularizer defaults to
    zero.
    """
    if not 0.0 < mu <= lsmooth:
        raise ValueError(f"need 0 < mu <= lsmooth, got mu={mu}, lsmooth={lsmooth}")
    if d < 2 and mu != lsmooth:
        raise ValueError("d = 1 forces mu == lsmooth (single singular value)")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _LS_STREAM]))
    losses = []
    for _ in range(n):
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        if d == 1:
            evals = np.array([lsmooth])
        else:
            mids = np.exp(rng.uniform(np.log(mu), np.log(lsmooth), d - 2))
            evals = np.concatenate(([lsmooth], np.sort(mids)[::-1], [mu]))
        a = q * np.sqrt(evals)  # Q @ diag(s), so A^T A = diag(evals)
        b = rng.standard_normal(d)
        losses.append(QuadraticLoss(a=a, b=b, mu=mu, lsmooth=lsmooth))
    return ProblemInstance(losses=tuple(losses), reg=reg or ZeroReg(), dim=d)


def gen_logistic(
    n: int,
    d: int,
    samples_per_node: int,
    gamma1: float,
    gamma2: float,
    seed: int,
) -> ProblemInstance:
    """Synthetic binary logistic regression with an L1 term.

    Features are standard normal; labels come from a random
    ground-truth hyperplane.  The ridge weight ``gamma1 > 0`` lives in
    the smooth part (it provides strong convexity), the L1 weight
    ``gamma2 >= 0`` goes to the prox.
    """
    if gamma1 <= 0.0:
        raise ValueError(f"gamma1 must be positive, got {gamma1}")
    if gamma2 < 0.0:
        raise ValueError(f"gamma2 must be nonnegative, got {gamma2}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _LOGISTIC_STREAM]))
    truth = rng.standard_normal(d)
    losses = []
    for _ in range(n):
        feats = rng.standard_normal((samples_per_node, d))
        labels = np.where(feats @ truth >= 0.0, 1.0, -1.0)
        losses.append(LogisticLoss(features=feats, labels=labels, gamma1=gamma1))
    reg = L1Reg(weight=gamma2) if gamma2 > 0.0 else ZeroReg()
    return ProblemInstance(losses=tuple(losses), reg=reg, dim=d)


def load_libsvm(path: str | Path, n: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Parse a LIBSVM sparse text file and split it across ``n`` nodes.

    Lines look like ``label idx:val idx:val ...`` with 1-based feature
    indices.  Labels must be in ``{-1, +1}`` ({0, 1} is remapped).  The
    dimension is the largest index seen.  Samples are shuffled with the
    given seed and split contiguously into ``n`` near-equal parts.

    Returns a list of ``(features, labels)`` dense arrays, one per node.

    Raises
    ------
    ValueError
        On malformed lines (reported with their line number), labels
        outside the supported sets, or an empty file.
    """
    rows: list[dict[int, float]] = []
    labels: list[float] = []
    max_idx = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise ValueError(f"line {lineno}: bad label {parts[0]!r}") from None
            entries: dict[int, float] = {}
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":")
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise ValueError(f"line {lineno}: bad feature {tok!r}") from None
                if idx < 1:
                    raise ValueError(f"line {lineno}: indices are 1-based, got {idx}")
                entries[idx] = val
                max_idx = max(max_idx, idx)
            rows.append(entries)
            labels.append(label)
    if not rows:
        raise ValueError(f"{path}: no samples")
    label_set = set(labels)
    if label_set <= {-1.0, 1.0}:
        y = np.array(labels)
    elif label_set <= {0.0, 1.0}:
        y = np.where(np.array(labels) > 0.5, 1.0, -1.0)
    else:
        raise ValueError(
            f"unsupported labels {sorted(label_set)}; expected {{-1,+1}} or {{0,1}}"
        )
    d = max_idx
    feats = np.zeros((len(rows), d))
    for r, entries in enumerate(rows):
        for idx, val in entries.items():
            feats[r, idx - 1] = val
    rng = np.random.default_rng(np.random.SeedSequence([seed, _PARTITION_STREAM]))
    order = rng.permutation(len(rows))
    feats = feats[order]
    y = y[order]
    bounds = np.linspace(0, len(rows), n + 1).astype(int)
    if np.any(np.diff(bounds) == 0):
        raise ValueError(f"cannot split {len(rows)} samples across {n} nodes")
    return [
        (feats[bounds[i] : bounds[i + 1]], y[bounds[i] : bounds[i + 1]])
        for i in range(n)
    ]


def logistic_from_parts(
    parts: list[tuple[np.ndarray, np.ndarray]], gamma1: float, gamma2: float
) -> ProblemInstance:
    """Wrap partitioned ``(features, labels)`` data as a logistic instance."""
    losses = tuple(
        LogisticLoss(features=f, labels=y, gamma1=gamma1) for f, y in parts
    )
    reg = L1Reg(weight=gamma2) if gamma2 > 0.0 else ZeroReg()
    return ProblemInstance(losses=losses, reg=reg, dim=losses[0].dim)


def flood_constants(
    g: Graph, per_node: list[tuple[float, float]]
) -> tuple[float, float, float]:
    """Decentralized max/min flooding of the per-node ``(L_i, mu_i)``.

    Runs exactly ``n - 1`` synchronized exchange rounds in which every
    node replaces its pair with the max/min over its closed
    neighborhood, then checks that all nodes agree.  Returns the global
    ``(L, mu, kappa)``.
    """
    if len(per_node) != g.n:
        raise ValueError(f"expected {g.n} (L_i, mu_i) pairs, got {len(per_node)}")
    r = np.array([float(l) for l, _ in per_node])
    s = np.array([float(m) for _, m in per_node])
    for _ in range(g.n - 1):
        r_new = r.copy()
        s_new = s.copy()
        for i in range(g.n):
            for j in g.neighbors(i):
                r_new[i] = max(r_new[i], r[j])
                s_new[i] = min(s_new[i], s[j])
        r, s = r_new, s_new
    if np.ptp(r) != 0.0 or np.ptp(s) != 0.0:
        raise RuntimeError("flooding did not reach agreement in n-1 rounds")
    return float(r[0]), float(s[0]), float(r[0] / s[0])


def centralized_solve(
    problem: ProblemInstance,
    tol: float = 1e-12,
    max_iter: int = 10**6,
    track_objective: bool = False,
) -> ReferenceSolution | tuple[ReferenceSolution, list[float]]:
    """Reference solution of ``min (1/n) sum f_i + r`` by proximal gradient.

    Fixed step ``1/L``; stops when the gradient-mapping residual
    ``||x - prox(x - grad/L)||`` drops to ``tol * max(1, ||x||)``.

    Raises
    ------
    CentralizedSolveError
        If the cap is exceeded; the best iterate rides on the error.
    """
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    alpha = 1.0 / problem.L
    x = np.zeros(problem.dim)
    history: list[float] = []
    for it in range(1, max_iter + 1):
        if track_objective:
            history.append(problem.objective(x))
        x_next = problem.reg.prox(alpha, x - alpha * problem.gradient_average(x))
        residual = float(np.linalg.norm(x - x_next))
        x = x_next
        if residual <= tol * max(1.0, float(np.linalg.norm(x))):
            ref = ReferenceSolution(xstar=x, residual=residual, iterations=it)
            return (ref, history) if track_objective else ref
    best = ReferenceSolution(xstar=x, residual=residual, iterations=max_iter)
    raise CentralizedSolveError(
        f"no convergence to {tol} within {max_iter} iterations", best
    )


def save_csv_bundle(problem: ProblemInstance, directory: str | Path) -> None:
    """Dump the instance as one CSV per matrix for external verification.

    Quadratic nodes write ``a_<i>.csv`` and ``b_<i>.csv``; logistic
    nodes write ``features_<i>.csv`` and ``labels_<i>.csv``.  A
    ``meta.csv`` records the shared structure.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def dump(name: str, arr: np.ndarray) -> None:
        arr = np.atleast_2d(arr)
        with open(directory / name, "w", newline="\n") as fh:
            for row in arr:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    kind = "quadratic" if isinstance(problem.losses[0], QuadraticLoss) else "logistic"
    reg_w = getattr(problem.reg, "weight", 0.0)
    with open(directory / "meta.csv", "w", newline="\n") as fh:
        fh.write("kind,n,d,reg_weight\n")
        fh.write(f"{kind},{problem.n},{problem.dim},{reg_w!r}\n")
    for i, loss in enumerate(problem.losses):
        if isinstance(loss, QuadraticLoss):
            dump(f"a_{i}.csv", loss.a)
            dump(f"b_{i}.csv", loss.b)
        else:
            dump(f"features_{i}.csv", loss.features)
            dump(f"labels_{i}.csv", loss.labels)
