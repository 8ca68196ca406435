"""Gram-multiset equivariant tensor form evaluated on the 5-point integer pair.

The form under test predicts a 3x3 tensor as::

    sum_i      f0(G_ii, {G_kl : k, l != i})      r_i r_i^T
  + sum_{i>j}  f1(G_ij, {G_kl : (k, l) != (i, j)}) r_j r_i^T
  + f2({G_kl})                                    1

with equal masses dropped.  Because the two structures share every Gram
multiset argument, the predicted difference has a zero diagonal whatever the
scalar functions are, while the eigenvalue target differs by 192 * identity.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvaluatorError, InternalConsistencyError, InvalidInputError
from .geometry import LabeledPointCloud, gram

R_PLUS = np.array([[1, 1, 0], [-1, -1, 0], [2, 0, 2], [-2, 0, -2], [0, 1, 1]])
R_MINUS = np.array([[1, 1, 0], [-1, -1, 0], [2, 0, 2], [-2, 0, -2], [0, 1, -1]])

# reference listings for the pair
ZETA = (2, (-8, -8, -2, -2, -2, -2, -2, -2, 2, 2, 2, 2, 2, 2, 8, 8))
KAPPA = {
    1: (-2, (-8, -8, -2, -2, -2, -2, -2, -2, -2, -1, -1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 2, 8, 8)),
    2: (2, (-8, -8, -2, -2, -2, -2, -2, -2, -2, -2, -1, -1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 8, 8)),
    3: (1, (-8, -8, -2, -2, -2, -2, -2, -2, -2, -2, -1, -1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 2, 8, 8)),
    4: (-1, (-8, -8, -2, -2, -2, -2, -2, -2, -2, -2, -1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 2, 8, 8)),
}
# Delta_1 = sum_k f1(kappa_k) * KAPPA_PATTERN[k]
KAPPA_PATTERN = {
    1: np.array([[0, -4, 0], [0, 0, 0], [0, -4, 0]]),
    2: np.array([[0, 4, 0], [0, 0, 0], [0, 4, 0]]),
    3: np.array([[0, 0, 2], [0, 0, 2], [0, 0, 0]]),
    4: np.array([[0, 0, -2], [0, 0, -2], [0, 0, 0]]),
}
ZETA_PATTERN = np.array([[0, 0, 0], [0, 0, 2], [0, 2, 0]])
TARGET_GAP = 192


def appendixb_pair() -> tuple[LabeledPointCloud, LabeledPointCloud]:
    labels = ["X"] * 5
    return (
        LabeledPointCloud(labels, R_PLUS.astype(float), None, "appendixB r+"),
        LabeledPointCloud(labels, R_MINUS.astype(float), None, "appendixB r-"),
    )


Multiset = tuple


@dataclass
class ScalarFunctionTriple:
    """Black-box scalar evaluators; multiset arguments arrive as sorted tuples."""

    f0: Callable[[float, Multiset], float]
    f1: Callable[[float, Multiset], float]
    f2: Callable[[Multiset], float]
    call_budget: Optional[int] = None
    calls: int = field(default=0, init=False)

    def _call(self, name, fn, *args):
        self.calls += 1
        if self.call_budget is not None and self.calls > self.call_budget:
            raise EvaluatorError(f"evaluator call budget {self.call_budget} exhausted", args)
        try:
            value = float(fn(*args))
        except EvaluatorError:
            raise
        except Exception as exc:
            raise EvaluatorError(f"{name} failed: {exc!r}", args) from exc
        return value

    def check_permutation_invariance(self, rng: np.random.Generator, trials: int = 3) -> None:
        """Spot-check evaluators against shuffled multiset arguments."""
        ms = tuple(sorted(int(v) for v in rng.integers(-8, 9, size=16)))
        for _ in range(trials):
            shuffled = tuple(rng.permutation(ms).tolist())
            for name, fn, args, sargs in (
                ("f0", self.f0, (2, ms), (2, shuffled)),
                ("f1", self.f1, (1, ms), (1, shuffled)),
                ("f2", self.f2, (ms,), (shuffled,)),
            ):
                if fn(*args) != fn(*sargs):
                    raise EvaluatorError(f"{name} is not invariant to multiset order", sargs)


def _exact(g):
    # keep integer Gram entries as Python ints so arguments compare exactly
    if np.issubdtype(g.dtype, np.integer) or np.all(g == np.round(g)):
        return [[int(round(v)) for v in row] for row in g]
    return g.tolist()


def term_arguments(cloud: LabeledPointCloud):
    """Yield ``(kind, (i, j), distinguished, multiset, outer product)`` for every term."""
    g = _exact(gram(cloud))
    pos = cloud.positions
    n = len(pos)
    terms = []
    for i in range(n):
        rest = tuple(sorted(g[k][l] for k in range(n) for l in range(n) if k != i and l != i))
        terms.append(("f0", (i, i), g[i][i], rest, np.outer(pos[i], pos[i])))
    for i in range(n):
        for j in range(i):
            rest = tuple(sorted(g[k][l] for k in range(n) for l in range(n) if (k, l) != (i, j)))
            # lower index on the left, matching the reference Delta_1 layout
            terms.append(("f1", (i, j), g[i][j], rest, np.outer(pos[j], pos[i])))
    full = tuple(sorted(g[k][l] for k in range(n) for l in range(n)))
    terms.append(("f2", None, None, full, np.eye(3)))
    return terms


def predict_h(cloud: LabeledPointCloud, fns: ScalarFunctionTriple) -> np.ndarray:
    """Evaluate the form; entries are correctly rounded sums (``math.fsum``)."""
    scaled = []
    for kind, _, x, rest, outer in term_arguments(cloud):
        if kind == "f0":
            scaled.append(fns._call("f0", fns.f0, x, rest) * outer)
        elif kind == "f1":
            scaled.append(fns._call("f1", fns.f1, x, rest) * outer)
        else:
            scaled.append(fns._call("f2", fns.f2, rest) * outer)
    stack = np.array(scaled).reshape(-1, 9)
    return np.array([math.fsum(stack[:, k]) for k in range(9)]).reshape(3, 3)


def target_h(cloud: LabeledPointCloud) -> np.ndarray:
    """Sum of cubed Gram eigenvalues times the identity."""
    g = gram(cloud)
    if g.size == 0:
        return np.zeros((3, 3))
    lam = np.linalg.eigvalsh(g)
    return float(np.sum(lam**3)) * np.eye(3)


@dataclass
class DeltaDecomposition:
    delta0: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    zeta: tuple
    kappas: dict
    surviving_f0: int
    surviving_f1: int
    audit: dict

    @property
    def total(self) -> np.ndarray:
        return self.delta0 + self.delta1 + self.delta2


def cancellation_audit(plus: LabeledPointCloud, minus: LabeledPointCloud) -> dict:
    """Cancel identical terms across the two structures and collect what is left.

    A term of r+ cancels a term of r- when both the scalar argument and the
    outer product coincide.  ``surviving_arguments`` maps each remaining
    argument to its net outer-product weight, so ``Delta_k`` equals
    ``sum_args f_k(arg) * weight[arg]`` for any black-box ``f_k``.
    """
    audit = {}
    for kind in ("f0", "f1", "f2"):
        ledger: dict = defaultdict(int)
        mats = {}
        total = 0
        for sign, cloud in ((1, plus), (-1, minus)):
            for k, _, x, rest, outer in term_arguments(cloud):
                if k != kind:
                    continue
                total += 1
                key = (x, rest, (outer + 0.0).tobytes())  # + 0.0 folds -0.0
                ledger[key] += sign
                mats[key] = outer
        weights: dict = defaultdict(lambda: np.zeros((3, 3)))
        for key, count in ledger.items():
            if count:
                weights[key[:2]] = weights[key[:2]] + count * mats[key]
        audit[kind] = {
            "terms": total,
            "surviving_terms": sum(abs(c) for c in ledger.values()),
            "surviving_arguments": {k: v for k, v in weights.items() if np.any(v != 0)},
        }
    return audit


def delta_decomposition(fns: ScalarFunctionTriple) -> DeltaDecomposition:
    plus, minus = appendixb_pair()
    audit = cancellation_audit(plus, minus)

    f0_args = list(audit["f0"]["surviving_arguments"])
    f1_args = audit["f1"]["surviving_arguments"]
    if len(f0_args) != 1 or (f0_args[0][0], f0_args[0][1]) != ZETA:
        raise InternalConsistencyError(f"f0 arguments {f0_args} do not match the zeta listing")
    kappas = {}
    for k, (x, rest) in KAPPA.items():
        if (x, rest) not in f1_args:
            raise InternalConsistencyError(f"kappa_{k} = {(x, rest)} not among surviving f1 arguments")
        if not np.array_equal(f1_args[(x, rest)], KAPPA_PATTERN[k]):
            raise InternalConsistencyError(f"kappa_{k} coefficient pattern mismatch")
        kappas[k] = (x, rest)
    if len(f1_args) != len(KAPPA):
        raise InternalConsistencyError("unexpected surviving f1 arguments")
    if not np.array_equal(audit["f0"]["surviving_arguments"][f0_args[0]], ZETA_PATTERN):
        raise InternalConsistencyError("zeta coefficient pattern mismatch")
    if audit["f2"]["surviving_arguments"]:
        raise InternalConsistencyError("f2 arguments differ between the structures")

    def part(kind, fn):
        out = np.zeros((3, 3))
        for sign, cloud in ((1, plus), (-1, minus)):
            for k, _, x, rest, outer in term_arguments(cloud):
                if k != kind:
                    continue
                args = (rest,) if kind == "f2" else (x, rest)
                out += sign * fns._call(kind, fn, *args) * outer
        return out

    return DeltaDecomposition(
        delta0=part("f0", fns.f0),
        delta1=part("f1", fns.f1),
        delta2=part("f2", fns.f2),
        zeta=ZETA,
        kappas=kappas,
        surviving_f0=audit["f0"]["surviving_terms"],
        surviving_f1=audit["f1"]["surviving_terms"],
        audit=audit,
    )


def random_evaluators(rng: np.random.Generator, width: int = 4) -> ScalarFunctionTriple:
    """Smooth random functions of a scalar and the sorted multiset."""
    w = rng.normal(size=(3, width, 26))
    b = rng.normal(size=(3, width))
    c = rng.normal(size=(3, width))

    def make(k, with_scalar):
        def f(*args):
            x, ms = (args if with_scalar else (0.0, args[0]))
            ms = sorted(ms)
            feat = np.zeros(26)
            feat[0] = x
            feat[1:1 + min(25, len(ms))] = ms[:25]
            return float(c[k] @ np.tanh(0.1 * (w[k] @ feat) + b[k]))
        return f

    return ScalarFunctionTriple(make(0, True), make(1, True), make(2, False))


def hash_evaluators(seed: int = 0) -> ScalarFunctionTriple:
    """Adversarial evaluators returning a hash of the argument."""
    import xxhash

    def h(*args):
        return xxhash.xxh64_intdigest(repr(args).encode(), seed=seed) / 2**64

    return ScalarFunctionTriple(
        lambda x, ms: h("f0", x, tuple(sorted(ms))),
        lambda x, ms: h("f1", x, tuple(sorted(ms))),
        lambda ms: h("f2", tuple(sorted(ms))),
    )


def constant_evaluators(c0=0.0, c1=0.0, c2=0.0) -> ScalarFunctionTriple:
    return ScalarFunctionTriple(lambda x, ms: c0, lambda x, ms: c1, lambda ms: c2)


def incompatibility_check(trials: int, seed: int = 0, include_adversarial: bool = True) -> dict:
    """Evaluate random scalar triples; every predicted diagonal must vanish while the target's is 192."""
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    plus, minus = appendixb_pair()
    target = target_h(plus) - target_h(minus)
    target_residual = float(np.max(np.abs(target - TARGET_GAP * np.eye(3))))
    rng = np.random.default_rng(seed)
    max_diag = 0.0
    per_trial = []
    for t in range(trials):
        if include_adversarial and t == 0:
            fns = hash_evaluators(seed)
        else:
            fns = random_evaluators(rng)
        fns.check_permutation_invariance(rng)
        diff = predict_h(plus, fns) - predict_h(minus, fns)
        diag = float(np.max(np.abs(np.diag(diff))))
        if diag > 1e-9:
            raise InternalConsistencyError(f"trial {t}: predicted diagonal {np.diag(diff)} is not zero")
        max_diag = max(max_diag, diag)
        per_trial.append({
            "trial": t,
            "max_abs_predicted_diagonal": diag,
            "min_target_mismatch": float(np.min(np.abs(np.diag(target) - np.diag(diff)))),
        })
    audit = cancellation_audit(plus, minus)
    return {
        "trials": trials,
        "seed": seed,
        "target_difference": target.tolist(),
        "target_residual_vs_192I": target_residual,
        "max_abs_predicted_diagonal": max_diag,
        "residual": max_diag,
        "min_target_mismatch": min(t["min_target_mismatch"] for t in per_trial),
        "zeta": [ZETA[0], list(ZETA[1])],
        "kappa": {str(k): [v[0], list(v[1])] for k, v in KAPPA.items()},
        "audit": {
            kind: {"terms": a["terms"], "surviving_terms": a["surviving_terms"],
                   "surviving_arguments": len(a["surviving_arguments"])}
            for kind, a in audit.items()
        },
        "passed": max_diag <= 1e-9 and target_residual <= 1e-8,
        "per_trial": per_trial,
    }
