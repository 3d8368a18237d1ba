"""Noisy-channel simulator for the 2-atom QND and 3-atom parity circuits.

Circuits are small (<= 4 qubits) lists of global/per-qubit rotations, local
Rz, CZ gates between a data-ancilla pair, and a final measurement.  Noise is
attached to each CZ: a symmetric two-qubit depolarizing channel (probability
``depolarizing``), plus per-participant leakage and loss events.  Readout
folds loss/leak into the blow-away convention: a lost atom reads dark (1), a
leaked atom stays bright (0).  Per-qubit SPAM errors flip readout bits.

Two evaluation paths exist: an exact density-channel computation (branching
over loss/leak events) and a trajectory sampler; they agree in distribution
and are cross-checked in the tests.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np


class CircuitError(ValueError):
    """Malformed circuit description."""


@dataclass(frozen=True)
class NoiseChannelParams:
    """Per-CZ depolarizing/leak/loss probabilities plus per-qubit SPAM error."""

    depolarizing: float = 0.0
    leak: float = 0.0
    loss: float = 0.0
    spam: float = 0.0
    depolarizing_mode: str = "two-qubit"   # or "one-qubit-each"

    def __post_init__(self):
        for name in ("depolarizing", "leak", "loss", "spam"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.loss + self.leak > 1.0:
            raise ValueError("loss + leak must not exceed 1")
        if self.depolarizing_mode not in ("two-qubit", "one-qubit-each"):
            raise ValueError("depolarizing_mode must be 'two-qubit' or "
                             "'one-qubit-each'")


@dataclass
class Qubit:
    name: str
    species: str
    role: str                  # data | ancilla


@dataclass
class PlaquetteCircuit:
    qubits: list[Qubit]
    ops: list[tuple]           # ("r", idx, theta, phi) | ("rz", idx, phi) | ("cz", i, j)
    measured: list[int]

    @property
    def n(self) -> int:
        return len(self.qubits)

    def qubit_index(self, name: str) -> int:
        for i, q in enumerate(self.qubits):
            if q.name == name:
                return i
        raise CircuitError(f"unknown qubit {name!r}")

    def validate(self):
        if not (1 <= self.n <= 4):
            raise CircuitError("circuits support 1 to 4 qubits")
        if not self.measured:
            raise CircuitError("no measured qubits declared")
        for op in self.ops:
            if op[0] == "cz":
                _, i, j = op
                roles = {self.qubits[i].role, self.qubits[j].role}
                if roles != {"data", "ancilla"}:
                    raise CircuitError(
                        "cz must couple exactly one data qubit and one ancilla")


_ANGLE_RE = re.compile(r"^(-?)(?:(\d+(?:\.\d*)?)\s*\*?\s*)?pi(?:/(\d+(?:\.\d*)?))?$")


def _parse_angle(tok: str) -> float:
    """Angles in radians; 'pi', '-pi/2', '3pi/2' style expressions allowed."""
    tok = tok.strip().lower()
    m = _ANGLE_RE.match(tok)
    if m:
        sign = -1.0 if m.group(1) else 1.0
        num = float(m.group(2)) if m.group(2) else 1.0
        den = float(m.group(3)) if m.group(3) else 1.0
        return sign * num * math.pi / den
    try:
        return float(tok)
    except ValueError as exc:
        raise CircuitError(f"bad angle {tok!r}") from exc


def parse_circuit(text: str) -> PlaquetteCircuit:
    """Parse the line-oriented circuit format.

    Directives: ``qubit <name> <species> <role>``, ``r <target> <theta>
    <phi>`` (target: qubit name, species, or 'all'), ``rz <qubit> <phi>``,
    ``cz <q1> <q2>``, ``measure <q1> [...]``.  '#' starts a comment.
    """
    qubits: list[Qubit] = []
    ops: list[tuple] = []
    measured: list[int] = []
    circuit = PlaquetteCircuit(qubits, ops, measured)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].lower()
        try:
            if kind == "qubit":
                if len(parts) != 4:
                    raise CircuitError("qubit needs: name species role")
                name, species, role = parts[1], parts[2].lower(), parts[3].lower()
                if role not in ("data", "ancilla"):
                    raise CircuitError(f"bad role {role!r}")
                if any(q.name == name for q in qubits):
                    raise CircuitError(f"duplicate qubit {name!r}")
                qubits.append(Qubit(name, species, role))
            elif kind == "r":
                if len(parts) != 4:
                    raise CircuitError("r needs: target theta phi")
                theta, phi = _parse_angle(parts[2]), _parse_angle(parts[3])
                target = parts[1]
                if target.lower() == "all":
                    idxs = list(range(len(qubits)))
                elif any(q.species == target.lower() for q in qubits):
                    idxs = [i for i, q in enumerate(qubits)
                            if q.species == target.lower()]
                else:
                    idxs = [circuit.qubit_index(target)]
                for i in idxs:
                    ops.append(("r", i, theta, phi))
            elif kind == "rz":
                if len(parts) != 3:
                    raise CircuitError("rz needs: qubit phi")
                ops.append(("rz", circuit.qubit_index(parts[1]),
                            _parse_angle(parts[2])))
            elif kind == "cz":
                if len(parts) != 3:
                    raise CircuitError("cz needs: q1 q2")
                i, j = circuit.qubit_index(parts[1]), circuit.qubit_index(parts[2])
                if i == j:
                    raise CircuitError("cz targets must differ")
                ops.append(("cz", i, j))
            elif kind == "measure":
                if len(parts) < 2:
                    raise CircuitError("measure needs at least one qubit")
                measured.extend(circuit.qubit_index(p) for p in parts[1:])
            else:
                raise CircuitError(f"unknown directive {kind!r}")
        except CircuitError as exc:
            raise CircuitError(f"line {lineno}: {exc}") from exc
    circuit.validate()
    return circuit


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

_PAULIS = [np.eye(2, dtype=complex),
           np.array([[0, 1], [1, 0]], dtype=complex),
           np.array([[0, -1j], [1j, 0]], dtype=complex),
           np.array([[1, 0], [0, -1]], dtype=complex)]


def _rot(theta: float, phi: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -1j * np.exp(-1j * phi) * s],
                     [-1j * np.exp(1j * phi) * s, c]], dtype=complex)


def _lift(u: np.ndarray, qubit: int, n: int) -> np.ndarray:
    ops = [u if k == qubit else np.eye(2, dtype=complex) for k in range(n)]
    out = ops[0]
    for o in ops[1:]:
        out = np.kron(out, o)
    return out


def _cz_diag(i: int, j: int, n: int) -> np.ndarray:
    d = np.ones(2 ** n, dtype=complex)
    for idx in range(2 ** n):
        if (idx >> (n - 1 - i)) & 1 and (idx >> (n - 1 - j)) & 1:
            d[idx] = -1.0
    return d


def _state_index(label: str, n: int) -> int:
    if len(label) != n or any(ch not in "01" for ch in label):
        raise CircuitError(f"bad computational-basis label {label!r}")
    return int(label, 2)


ACTIVE, LOST, LEAKED = 0, 1, 2


# ---------------------------------------------------------------------------
# exact density-channel path
# ---------------------------------------------------------------------------

def _dephase(rho: np.ndarray, qubit: int, n: int) -> np.ndarray:
    p0 = _lift(np.diag([1.0, 0.0]).astype(complex), qubit, n)
    p1 = _lift(np.diag([0.0, 1.0]).astype(complex), qubit, n)
    return p0 @ rho @ p0 + p1 @ rho @ p1


def _depolarize(rho: np.ndarray, i: int, j: int, n: int, sigma: float,
                mode: str) -> np.ndarray:
    if sigma == 0.0:
        return rho
    if mode == "two-qubit":
        acc = np.zeros_like(rho)
        for pi in range(4):
            for pj in range(4):
                op = _lift(_PAULIS[pi], i, n) @ _lift(_PAULIS[pj], j, n)
                acc += op @ rho @ op.conj().T
        return (1.0 - sigma) * rho + (sigma / 16.0) * acc
    for q in (i, j):
        acc = np.zeros_like(rho)
        for p in range(4):
            op = _lift(_PAULIS[p], q, n)
            acc += op @ rho @ op.conj().T
        rho = (1.0 - sigma) * rho + (sigma / 4.0) * acc
    return rho


def exact_distribution(circuit: PlaquetteCircuit, noise: NoiseChannelParams,
                       input_label: str) -> dict[str, float]:
    """Outcome distribution over measured-qubit bit strings (exact channel).

    Branches over per-CZ loss/leak events; a lost or leaked participant
    freezes (gates act as identity on its partner for that CZ) and reads out
    dark (1) or bright (0) respectively.
    """
    circuit.validate()
    n = circuit.n
    dim = 2 ** n
    psi = np.zeros(dim, dtype=complex)
    psi[_state_index(input_label, n)] = 1.0
    rho0 = np.outer(psi, psi.conj())
    branches = [(1.0, rho0, tuple([ACTIVE] * n))]

    for op in circuit.ops:
        if op[0] in ("r", "rz"):
            if op[0] == "r":
                _, q, theta, phi = op
                u = _rot(theta, phi)
            else:
                _, q, phi = op
                u = np.diag([1.0, np.exp(1j * phi)]).astype(complex)
            nxt = []
            for w, rho, status in branches:
                if status[q] == ACTIVE:
                    full = _lift(u, q, n)
                    rho = full @ rho @ full.conj().T
                nxt.append((w, rho, status))
            branches = nxt
        elif op[0] == "cz":
            _, i, j = op
            nxt = []
            for w, rho, status in branches:
                events = [(1.0, status, ())]
                for q in (i, j):
                    expanded = []
                    for wq, st, newly in events:
                        if st[q] != ACTIVE:
                            expanded.append((wq, st, newly))
                            continue
                        stay = 1.0 - noise.loss - noise.leak
                        for p_evt, new_status in ((stay, ACTIVE),
                                                  (noise.loss, LOST),
                                                  (noise.leak, LEAKED)):
                            if p_evt == 0.0:
                                continue
                            st2 = list(st)
                            st2[q] = new_status
                            mark = newly + ((q,) if new_status != ACTIVE else ())
                            expanded.append((wq * p_evt, tuple(st2), mark))
                    events = expanded
                for wq, st, newly in events:
                    r = rho
                    for q in newly:
                        r = _dephase(r, q, n)
                    if st[i] == ACTIVE and st[j] == ACTIVE:
                        d = _cz_diag(i, j, n)
                        r = d[:, None] * r * np.conj(d)[None, :]
                        r = _depolarize(r, i, j, n, noise.depolarizing,
                                        noise.depolarizing_mode)
                    nxt.append((w * wq, r, st))
            branches = nxt

    # readout
    out: dict[str, float] = {}
    meas = circuit.measured
    for w, rho, status in branches:
        probs = np.real(np.diag(rho)).clip(min=0.0)
        total = probs.sum()
        if total > 0:
            probs = probs / total
        for idx, p in enumerate(probs):
            if p <= 1e-16:
                continue
            bits = []
            for q in meas:
                if status[q] == LOST:
                    bits.append(1)
                elif status[q] == LEAKED:
                    bits.append(0)
                else:
                    bits.append((idx >> (n - 1 - q)) & 1)
            _accumulate_spam(out, bits, w * total * p, noise.spam)
    return out


def _accumulate_spam(out: dict, bits: list[int], weight: float, spam: float):
    if weight == 0.0:
        return
    if spam == 0.0:
        key = "".join(map(str, bits))
        out[key] = out.get(key, 0.0) + weight
        return
    m = len(bits)
    for flips in range(2 ** m):
        w = weight
        flipped = list(bits)
        for k in range(m):
            if (flips >> k) & 1:
                w *= spam
                flipped[k] ^= 1
            else:
                w *= 1.0 - spam
        if w == 0.0:
            continue
        key = "".join(map(str, flipped))
        out[key] = out.get(key, 0.0) + w


def ideal_outcome(circuit: PlaquetteCircuit, input_label: str) -> str:
    """Deterministic noiseless outcome for a computational-basis input."""
    dist = exact_distribution(circuit, NoiseChannelParams(), input_label)
    best, p = max(dist.items(), key=lambda kv: kv[1])
    if p < 1.0 - 1e-9:
        raise CircuitError(
            f"noiseless circuit is not deterministic on input {input_label!r} "
            f"(max outcome probability {p:.6f})")
    return best


def predicted_fqnd(circuit: PlaquetteCircuit, noise: NoiseChannelParams,
                   input_labels: list[str] | None = None) -> float:
    """Average probability of the correct outcome over the input set."""
    if input_labels is None:
        input_labels = [format(i, f"0{circuit.n}b") for i in range(2 ** circuit.n)]
    total = 0.0
    for label in input_labels:
        correct = ideal_outcome(circuit, label)
        dist = exact_distribution(circuit, noise, label)
        total += dist.get(correct, 0.0)
    return total / len(input_labels)


# ---------------------------------------------------------------------------
# trajectory sampler
# ---------------------------------------------------------------------------

def _apply_single_rows(psi: np.ndarray, u: np.ndarray, qubit: int, n: int,
                       rows: np.ndarray):
    if not rows.any():
        return
    sel = psi[rows]
    m = sel.shape[0]
    shaped = sel.reshape(m, 2 ** qubit, 2, 2 ** (n - 1 - qubit))
    psi[rows] = np.einsum("bj,iajc->iabc", u, shaped).reshape(m, 2 ** n)


def _measure_qubit_rows(psi: np.ndarray, qubit: int, n: int, rows: np.ndarray,
                        rng: np.random.Generator) -> np.ndarray:
    """Projective Z measurement with collapse on the given rows; returns bits."""
    bits = np.zeros(psi.shape[0], dtype=np.int64)
    if not rows.any():
        return bits
    shaped = np.abs(psi[rows]) ** 2
    shaped = shaped.reshape(-1, 2 ** qubit, 2, 2 ** (n - 1 - qubit))
    p1 = shaped[:, :, 1, :].sum(axis=(1, 2))
    tot = shaped.sum(axis=(1, 2, 3))
    with np.errstate(invalid="ignore", divide="ignore"):
        p1 = np.where(tot > 0, p1 / np.maximum(tot, 1e-300), 0.0)
    draw = rng.random(p1.shape[0])
    outcome = (draw < p1).astype(np.int64)
    # project and renormalize
    sel = psi[rows].reshape(-1, 2 ** qubit, 2, 2 ** (n - 1 - qubit))
    keep = np.zeros_like(sel)
    idx = np.arange(sel.shape[0])
    keep[idx, :, outcome, :] = sel[idx, :, outcome, :]
    norms = np.sqrt((np.abs(keep) ** 2).sum(axis=(1, 2, 3)))
    keep /= np.maximum(norms, 1e-300)[:, None, None, None]
    psi[rows] = keep.reshape(-1, 2 ** n)
    bits[rows] = outcome
    return bits


def simulate(circuit: PlaquetteCircuit, noise: NoiseChannelParams,
             input_labels: list[str], shots: int,
             seed: int = 0) -> dict[str, dict[str, int]]:
    """Trajectory sampling: per input label, a histogram over outcome strings.

    Deterministic in (circuit, noise, input_labels, shots, seed).
    """
    circuit.validate()
    rng = np.random.default_rng(seed)
    n = circuit.n
    dim = 2 ** n
    results: dict[str, dict[str, int]] = {}
    for label in input_labels:
        psi = np.zeros((shots, dim), dtype=complex)
        psi[:, _state_index(label, n)] = 1.0
        status = np.zeros((shots, n), dtype=np.int8)

        for op in circuit.ops:
            if op[0] == "r":
                _, q, theta, phi = op
                _apply_single_rows(psi, _rot(theta, phi), q, n,
                                   status[:, q] == ACTIVE)
            elif op[0] == "rz":
                _, q, phi = op
                u = np.diag([1.0, np.exp(1j * phi)]).astype(complex)
                _apply_single_rows(psi, u, q, n, status[:, q] == ACTIVE)
            else:
                _, i, j = op
                for q in (i, j):
                    active = status[:, q] == ACTIVE
                    draw = rng.random(shots)
                    lost = active & (draw < noise.loss)
                    leaked = active & ~lost & (draw < noise.loss + noise.leak)
                    for mask, code in ((lost, LOST), (leaked, LEAKED)):
                        if mask.any():
                            _measure_qubit_rows(psi, q, n, mask, rng)
                            status[mask, q] = code
                both = (status[:, i] == ACTIVE) & (status[:, j] == ACTIVE)
                if both.any():
                    d = _cz_diag(i, j, n)
                    psi[both] *= d[None, :]
                    if noise.depolarizing > 0.0:
                        hit = both & (rng.random(shots) < noise.depolarizing)
                        if noise.depolarizing_mode == "two-qubit":
                            picks = rng.integers(0, 16, size=shots)
                            for p in np.unique(picks[hit]):
                                rows = hit & (picks == p)
                                _apply_single_rows(psi, _PAULIS[p // 4], i, n, rows)
                                _apply_single_rows(psi, _PAULIS[p % 4], j, n, rows)
                        else:
                            for q in (i, j):
                                hit_q = both & (rng.random(shots) < noise.depolarizing)
                                picks = rng.integers(0, 4, size=shots)
                                for p in np.unique(picks[hit_q]):
                                    rows = hit_q & (picks == p)
                                    _apply_single_rows(psi, _PAULIS[p], q, n, rows)

        # readout with collapse, then status overrides and SPAM flips
        bits = np.zeros((shots, len(circuit.measured)), dtype=np.int64)
        for k, q in enumerate(circuit.measured):
            active = status[:, q] == ACTIVE
            bits[:, k] = _measure_qubit_rows(psi, q, n, active, rng)
            bits[status[:, q] == LOST, k] = 1
            bits[status[:, q] == LEAKED, k] = 0
            if noise.spam > 0.0:
                flips = rng.random(shots) < noise.spam
                bits[flips, k] ^= 1

        hist: dict[str, int] = {}
        for row in bits:
            key = "".join(map(str, row))
            hist[key] = hist.get(key, 0) + 1
        results[label] = hist
    return results
