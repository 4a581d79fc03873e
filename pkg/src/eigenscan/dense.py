"""Exact small-n simulator with explicit ``2^n``-dimensional operators.

This backend is the ground-truth oracle for the analytic formulas in
:mod:`eigenscan.measurement`.  It knows nothing about binomial sums: yes
probabilities come from traces of explicit projectors against explicit
states.

States are held as a factor ``B`` with ``rho = B B^dagger``.  Projectors are
``U^(x)n diag(mask) U^(x)n dagger``, and applying one to a factor costs
``n`` single-qubit contractions instead of a dense ``4^n`` product.  Both
expose their full matrices on demand.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from functools import cached_property, reduce
from typing import Optional, Sequence

import numpy as np

from .bloch import DensityOperator
from .measurement import CollectiveMeasurement
from .typical import in_typical_set

DEFAULT_CAP = 10
HARD_CAP = 12
BRANCH_EPS = 1e-14
PRUNE_EPS = 1e-12


class CapacityError(ValueError):
    """Requested register is larger than the dense backend allows."""


def check_capacity(n: int, cap: int = DEFAULT_CAP) -> None:
    if cap > HARD_CAP:
        raise CapacityError(f"dense cap {cap} exceeds the hard maximum {HARD_CAP}")
    if n < 1 or n > cap:
        raise CapacityError(f"n={n} outside the dense capacity 1..{cap}")
    if n > DEFAULT_CAP:
        mb = (4**n * 16) / 2**20
        warnings.warn(f"dense backend at n={n}: {mb:.0f} MB per operator", stacklevel=3)


def kron_power(a: np.ndarray, n: int) -> np.ndarray:
    return reduce(np.kron, [a] * n)


def apply_local(op: np.ndarray, x: np.ndarray, n: int) -> np.ndarray:
    """Apply ``op^(x)n`` to the columns of ``x`` (shape ``(2^n, r)``)."""
    r = x.shape[1]
    out = np.ascontiguousarray(x, dtype=complex)
    for axis in range(n):
        t = out.reshape(2**axis, 2, -1)
        a, b = t[:, 0, :], t[:, 1, :]
        nxt = np.empty_like(t)
        np.add(op[0, 0] * a, op[0, 1] * b, out=nxt[:, 0, :])
        np.add(op[1, 0] * a, op[1, 1] * b, out=nxt[:, 1, :])
        out = nxt
    return out.reshape(2**n, r)


def zero_counts(n: int) -> np.ndarray:
    """Number of 0 bits in each basis index, qubit 1 most significant."""
    idx = np.arange(2**n)
    ones = np.zeros(2**n, dtype=np.int64)
    for bit in range(n):
        ones += (idx >> bit) & 1
    return n - ones


@dataclass(frozen=True, eq=False)
class DenseState:
    """``n``-qubit density operator ``factor @ factor^dagger``."""

    n: int
    factor: np.ndarray

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.factor @ self.factor.conj().T

    @property
    def trace(self) -> float:
        return float(np.vdot(self.factor, self.factor).real)

    def validate(self, tol: float = 1e-10, psd_tol: float = 1e-9) -> None:
        """Check Hermiticity, unit trace and positivity.

        Positivity is probed with the smallest eigenvalue for ``n < 8`` and
        with a shifted power iteration above that.
        """
        m = self.matrix
        herm = float(np.max(np.abs(m - m.conj().T)))
        if herm > tol:
            raise AssertionError(f"state not Hermitian: {herm:.3e}")
        tr = np.trace(m)
        if abs(tr - 1) > tol:
            raise AssertionError(f"state trace {tr} != 1")
        low = smallest_eigenvalue(m)
        if low < -psd_tol:
            raise AssertionError(f"state has eigenvalue {low:.3e} < 0")


def smallest_eigenvalue(m: np.ndarray, iters: int = 200) -> float:
    h = 0.5 * (m + m.conj().T)
    if h.shape[0] <= 128:
        return float(np.linalg.eigvalsh(h)[0])
    shift = float(np.max(np.sum(np.abs(h), axis=1)))
    a = shift * np.eye(h.shape[0]) - h
    rng = np.random.default_rng(0)
    v = rng.standard_normal(h.shape[0]) + 1j * rng.standard_normal(h.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = a @ v
        lam = float(np.vdot(v, w).real)
        v = w / np.linalg.norm(w)
    return shift - lam


@dataclass(frozen=True, eq=False)
class DenseProjector:
    """Projector ``U^(x)n diag(mask) U^(x)n dagger`` on ``n`` qubits."""

    n: int
    unitary: np.ndarray
    mask: np.ndarray

    @cached_property
    def matrix(self) -> np.ndarray:
        u = kron_power(self.unitary, self.n)
        w = u[:, self.mask]
        return w @ w.conj().T

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.mask))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``M @ x`` for ``x`` of shape ``(2^n, r)``."""
        y = apply_local(self.unitary.conj().T, x, self.n)
        y = y * self.mask[:, None]
        return apply_local(self.unitary, y, self.n)

    def complement(self) -> "DenseProjector":
        return DenseProjector(self.n, self.unitary, ~self.mask)


def build_projector(m: CollectiveMeasurement, cap: int = DEFAULT_CAP) -> DenseProjector:
    """``M_yes`` for ``m`` by basis rotation of a diagonal typical-set indicator."""
    n = m.n
    check_capacity(n, cap)
    typical = np.array([in_typical_set(k, m.spec) for k in range(n + 1)])
    mask = typical[zero_counts(n)]
    return DenseProjector(n, m.basis.unitary, mask)


def build_projector_literal(m: CollectiveMeasurement, max_n: int = 6) -> np.ndarray:
    """``M_yes`` as the explicit sum of rank-one product projectors over
    typical sequences.  Exponential in ``n``; for cross-checks only.
    """
    n = m.n
    if n > max_n:
        raise CapacityError(f"literal construction limited to n <= {max_n}")
    kets = (m.basis.e0, m.basis.e1)
    out = np.zeros((2**n, 2**n), dtype=complex)
    for bits in itertools.product((0, 1), repeat=n):
        if not in_typical_set(bits.count(0), m.spec):
            continue
        vec = reduce(np.kron, [kets[b] for b in bits])
        out += np.outer(vec, vec.conj())
    return out


def _single_factor(rho: DensityOperator) -> np.ndarray:
    vals, vecs = np.linalg.eigh(rho.matrix)
    keep = vals > 1e-15
    return vecs[:, keep] * np.sqrt(vals[keep])


def product_state(rho: DensityOperator, n: int, cap: int = DEFAULT_CAP) -> DenseState:
    """``rho^(x)n``."""
    check_capacity(n, cap)
    return DenseState(n, kron_power(_single_factor(rho), n))


@dataclass(frozen=True)
class Branches:
    """Result of a yes/no measurement; a branch is ``None`` when its
    probability is below ``1e-14``."""

    p_yes: float
    post_yes: Optional[DenseState]
    post_no: Optional[DenseState]

    def post(self, yes: bool) -> Optional[DenseState]:
        return self.post_yes if yes else self.post_no


def measure(state: DenseState, proj: DenseProjector) -> Branches:
    """Projective update ``M rho M / tr(M rho)`` for both outcomes."""
    if state.n != proj.n:
        raise ValueError(f"state has n={state.n}, projector n={proj.n}")
    yes = proj.apply(state.factor)
    no = state.factor - yes
    w_yes = float(np.vdot(yes, yes).real)
    w_no = float(np.vdot(no, no).real)
    total = w_yes + w_no
    p = min(1.0, max(0.0, w_yes / total))
    post_yes = DenseState(state.n, yes / math.sqrt(w_yes)) if p >= BRANCH_EPS else None
    post_no = DenseState(state.n, no / math.sqrt(w_no)) if 1.0 - p >= BRANCH_EPS else None
    return Branches(p, post_yes, post_no)


def dense_p_yes(rho: DensityOperator, m: CollectiveMeasurement, cap: int = DEFAULT_CAP) -> float:
    """``tr(M_yes rho^(x)n)`` from fully materialised matrices."""
    proj = build_projector(m, cap)
    state = product_state(rho, m.n, cap)
    return float(np.real(np.sum(proj.matrix * state.matrix.T)))


@dataclass(frozen=True)
class SequenceFidelity:
    """Entanglement fidelity of a measurement sequence, as the interval
    ``[value, value + pruned_mass]``."""

    value: float
    pruned_mass: float
    paths: int

    @property
    def upper(self) -> float:
        return min(1.0, self.value + self.pruned_mass)


def sequence_entanglement_fidelity(
    rho: DensityOperator,
    plan: Sequence[CollectiveMeasurement],
    cap: int = DEFAULT_CAP,
    prune: float = PRUNE_EPS,
) -> SequenceFidelity:
    """``sum_o |tr(E_o rho^(x)n)|^2`` over outcome strings ``o`` of ``plan``.

    ``E_o`` is the ordered product of the branch projectors.  Writing
    ``rho^(x)n = B B^dagger`` we track ``E_o B``: then
    ``tr(E_o rho) = tr(B^dagger E_o B)`` and the path probability is
    ``||E_o B||_F^2``.  A subtree whose probability drops below ``prune``
    contributes at most that probability (Cauchy-Schwarz), which is added to
    ``pruned_mass``.
    """
    if not plan:
        return SequenceFidelity(1.0, 0.0, 1)
    if len(plan) > 20:
        raise ValueError("plans longer than 20 measurements are not supported")
    n = plan[0].n
    if any(m.n != n for m in plan):
        raise ValueError("all measurements in a plan must act on the same n")
    base = product_state(rho, n, cap).factor
    projectors = [build_projector(m, cap) for m in plan]

    terms = []
    pruned = 0.0
    stack = [(0, base)]
    while stack:
        depth, x = stack.pop()
        if depth == len(projectors):
            terms.append(abs(np.vdot(base, x)) ** 2)
            continue
        yes = projectors[depth].apply(x)
        for branch in (yes, x - yes):
            weight = float(np.vdot(branch, branch).real)
            if weight < prune:
                pruned += weight
            else:
                stack.append((depth + 1, branch))
    return SequenceFidelity(math.fsum(terms), pruned, len(terms))


def swap_adjacent(m: np.ndarray, n: int, i: int) -> np.ndarray:
    """``S m S^dagger`` with ``S`` exchanging qubits ``i`` and ``i+1``."""
    t = m.reshape((2,) * (2 * n))
    axes = list(range(2 * n))
    axes[i], axes[i + 1] = axes[i + 1], axes[i]
    axes[n + i], axes[n + i + 1] = axes[n + i + 1], axes[n + i]
    return t.transpose(axes).reshape(m.shape)


def permutation_invariance_check(proj, n: Optional[int] = None) -> float:
    """Largest ``max|S M S^dagger - M|`` over adjacent transpositions ``S``."""
    if isinstance(proj, (DenseProjector, DenseState)):
        n, m = proj.n, proj.matrix
    else:
        m = np.asarray(proj)
        if n is None:
            n = int(round(math.log2(m.shape[0])))
    if n < 2:
        return 0.0
    return max(float(np.max(np.abs(swap_adjacent(m, n, i) - m))) for i in range(n - 1))


def trace_norm(a: np.ndarray) -> float:
    """Schatten-1 norm of a Hermitian matrix."""
    h = 0.5 * (a + a.conj().T)
    return float(np.sum(np.abs(np.linalg.eigvalsh(h))))


def state_fidelity(rho: DensityOperator, state: DenseState) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(R) S sqrt(R)))^2`` between
    ``R = rho^(x)n`` and ``state``.
    """
    vals, vecs = np.linalg.eigh(rho.matrix)
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    big_root = kron_power(root, state.n)
    # sqrt(R) S sqrt(R) = C C^dagger with C = sqrt(R) B; its nonzero spectrum
    # equals that of the smaller Gram matrix C^dagger C.
    c = big_root @ state.factor
    gram = c.conj().T @ c
    ev = np.clip(np.linalg.eigvalsh(0.5 * (gram + gram.conj().T)), 0.0, None)
    return float(np.sum(np.sqrt(ev)) ** 2)
