"""Unit-quaternion algebra and finite symmetry groups.

Quaternions are stored scalar-first as ``(w, x, y, z)`` float64 arrays and
combined with the Hamilton product under the active-rotation convention.
A quaternion and its negation describe the same physical rotation, so
orientation equality is always up to sign.  Crystal and specimen symmetries
are finite lists of unit quaternions acting on the left and right of an
orientation; the orbit ``{q_c * g * q_s}`` collects every quaternion that
represents the same physical state.

Euler angles use the Bunge Z-X-Z convention (phi1 about Z, Phi about the
rotated X, phi2 about the rotated Z).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "EulerAngles",
    "SymmetryGroup",
    "GroupError",
    "qmul",
    "qconj",
    "qnorm",
    "qnormalize",
    "same_rotation",
    "random_unit_quaternions",
    "equivalence_class",
    "expand_class",
    "canonicalize",
    "canonicalize_batch",
    "euler_to_quat",
    "quat_to_euler",
    "symmetry_group",
    "group_names",
    "load_group_file",
]

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

_TWO_PI = 2.0 * np.pi


class GroupError(ValueError):
    """Raised for unknown catalog names or invalid group listings."""


class EulerAngles(NamedTuple):
    """Bunge Z-X-Z angles in radians: phi1 in [0,2pi), Phi in [0,pi], phi2 in [0,2pi)."""

    phi1: float
    Phi: float
    phi2: float


def qnorm(q) -> np.ndarray:
    """Euclidean norm along the last axis."""
    q = np.asarray(q, dtype=float)
    return np.sqrt(np.sum(q * q, axis=-1))


def qnormalize(q) -> np.ndarray:
    """Rescale to unit length along the last axis."""
    q = np.asarray(q, dtype=float)
    return q / qnorm(q)[..., None]


def qmul(a, b) -> np.ndarray:
    """Hamilton product of scalar-first quaternions, renormalized to unit length.

    Broadcasts over leading axes.  Inputs are assumed unit length; the
    renormalization only removes accumulated rounding.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w1, x1, y1, z1 = np.moveaxis(a, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(b, -1, 0)
    out = np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )
    return out / qnorm(out)[..., None]


def qconj(q) -> np.ndarray:
    """Quaternion conjugate, which is the inverse for unit quaternions."""
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def same_rotation(a, b, tol: float = 1e-10) -> bool:
    """Whether two unit quaternions agree up to sign."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(abs(abs(float(np.dot(a, b))) - 1.0) < tol)


def random_unit_quaternions(rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw uniformly distributed points on the unit 3-sphere, shape (size, 4)."""
    v = rng.standard_normal((size, 4))
    return v / qnorm(v)[:, None]


@dataclass(frozen=True)
class SymmetryGroup:
    """A finite quaternion symmetry group.

    ``elements`` has shape (n, 4).  The listing contains the identity, is
    closed under multiplication up to sign, and has no duplicate rotations,
    except for binary-cover listings which deliberately include both signs
    of every element.
    """

    name: str
    elements: np.ndarray

    def __len__(self) -> int:
        return self.elements.shape[0]

    def __post_init__(self):
        elems = np.atleast_2d(np.asarray(self.elements, dtype=float))
        elems = elems / qnorm(elems)[:, None]
        elems.setflags(write=False)
        object.__setattr__(self, "elements", elems)


def _validate_group(elements: np.ndarray, name: str, allow_binary: bool = False) -> None:
    """Check identity membership, closure up to sign, and duplicate rotations."""
    n = elements.shape[0]
    dots = elements @ IDENTITY
    if not np.any(np.abs(np.abs(dots) - 1.0) < 1e-9):
        raise GroupError(f"group '{name}' does not contain the identity quaternion")
    gram = np.abs(elements @ elements.T)
    dup = np.abs(gram - 1.0) < 1e-9
    np.fill_diagonal(dup, False)
    if dup.any():
        if not allow_binary:
            raise GroupError(f"group '{name}' has elements equal up to sign")
        # a binary cover must pair every element with exactly its negation
        for i in range(n):
            js = np.nonzero(dup[i])[0]
            if len(js) != 1 or np.max(np.abs(elements[i] + elements[js[0]])) > 1e-9:
                raise GroupError(f"group '{name}' has duplicate rotations beyond +/- pairs")
    prod = qmul(elements[:, None, :], elements[None, :, :]).reshape(-1, 4)
    close = np.abs(np.abs(prod @ elements.T) - 1.0) < 1e-9
    if not close.any(axis=1).all():
        raise GroupError(f"group '{name}' is not closed under multiplication up to sign")


def _axis_angle(axis, degrees: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = np.deg2rad(degrees) / 2.0
    q = np.concatenate([[np.cos(half)], np.sin(half) * axis])
    # canonical sign: w >= 0, then first nonzero vector part positive
    if q[0] < -1e-15 or (abs(q[0]) <= 1e-15 and q[np.argmax(np.abs(q[1:])) + 1] < 0):
        q = -q
    q[np.abs(q) < 1e-15] = 0.0
    return q


def _build_catalog() -> dict:
    ident = [_axis_angle([0, 0, 1], 0.0)]

    cyclic2 = ident + [_axis_angle([0, 0, 1], 180.0)]

    ortho = ident + [
        _axis_angle([1, 0, 0], 180.0),
        _axis_angle([0, 1, 0], 180.0),
        _axis_angle([0, 0, 1], 180.0),
    ]

    tetra = ident + [
        _axis_angle([0, 0, 1], 90.0),
        _axis_angle([0, 0, 1], 180.0),
        _axis_angle([0, 0, 1], 270.0),
        _axis_angle([1, 0, 0], 180.0),
        _axis_angle([0, 1, 0], 180.0),
        _axis_angle([1, 1, 0], 180.0),
        _axis_angle([1, -1, 0], 180.0),
    ]

    hexa = [_axis_angle([0, 0, 1], 60.0 * k) for k in range(6)]
    hexa += [
        _axis_angle([np.cos(np.deg2rad(30.0 * k)), np.sin(np.deg2rad(30.0 * k)), 0], 180.0)
        for k in range(6)
    ]

    cubic = list(ident)
    cubic += [_axis_angle(ax, a) for ax in ([1, 0, 0], [0, 1, 0], [0, 0, 1]) for a in (90.0, 180.0, 270.0)]
    cubic += [
        _axis_angle([sx, sy, sz], a)
        for sx in (1, -1)
        for sy in (1, -1)
        for sz in (1, -1)
        if (sx, sy, sz) >= (-sx, -sy, -sz)  # one axis per diagonal pair
        for a in (120.0, 240.0)
    ]
    cubic += [
        _axis_angle(ax, 180.0)
        for ax in ([1, 1, 0], [1, -1, 0], [1, 0, 1], [1, 0, -1], [0, 1, 1], [0, 1, -1])
    ]

    cubic_arr = np.array(cubic)
    octa48 = np.vstack([cubic_arr, -cubic_arr])

    return {
        "identity": np.array(ident),
        "cyclic-2": np.array(cyclic2),
        "orthorhombic": np.array(ortho),
        "tetragonal": np.array(tetra),
        "hexagonal": np.array(hexa),
        "cubic-24": cubic_arr,
        "octahedral-48": octa48,
    }


_CATALOG = _build_catalog()


def group_names() -> list:
    """Names accepted by :func:`symmetry_group`."""
    return sorted(_CATALOG)


def symmetry_group(name: str) -> SymmetryGroup:
    """Look up a catalog symmetry group by name.

    ``octahedral-48`` is the binary cover of the 24 cubic rotations; every
    rotation appears with both signs, which leaves all symmetrized densities
    unchanged while matching a 48-element crystal-symmetry count.
    """
    try:
        elems = _CATALOG[name]
    except KeyError:
        raise GroupError(
            f"unknown symmetry group '{name}'; valid names: {', '.join(group_names())}"
        ) from None
    return SymmetryGroup(name=name, elements=elems)


def load_group_file(path, name: str | None = None) -> SymmetryGroup:
    """Load a custom group from a text file, one 'w x y z' quaternion per line."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise GroupError(f"{path}:{lineno}: expected four values, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise GroupError(f"{path}:{lineno}: non-numeric entry") from None
    if not rows:
        raise GroupError(f"{path}: no quaternions found")
    elems = np.array(rows)
    norms = qnorm(elems)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise GroupError(f"{path}: element {bad + 1} is not unit length")
    elems = elems / norms[:, None]
    _validate_group(elems, name or str(path), allow_binary=True)
    return SymmetryGroup(name=name or str(path), elements=elems)


def expand_class(g, qc: SymmetryGroup, qs: SymmetryGroup) -> np.ndarray:
    """Orbit products ``q_c * g * q_s`` for one or many quaternions.

    For input shape (4,) returns (J*K, 4); for (n, 4) returns (n, J*K, 4).
    Ordering is row-major over (j, k) and duplicates are kept.
    """
    g = np.asarray(g, dtype=float)
    single = g.ndim == 1
    gs = g[None, :] if single else g
    right = qmul(gs[:, None, :], qs.elements[None, :, :])  # (n, K, 4)
    full = qmul(qc.elements[None, :, None, :], right[:, None, :, :])  # (n, J, K, 4)
    out = full.reshape(gs.shape[0], len(qc) * len(qs), 4)
    return out[0] if single else out


def equivalence_class(g, qc: SymmetryGroup, qs: SymmetryGroup) -> np.ndarray:
    """All J*K symmetry-equivalent quaternions of ``g``, shape (J*K, 4)."""
    return expand_class(g, qc, qs)


def _lex_best(cands: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Candidate with lexicographically largest (w, x, y, z).

    Components within ``tol`` of the stage maximum count as tied, so exact
    symmetry ties are broken by the next component rather than by rounding
    noise, keeping the choice constant across equivalent inputs.
    """
    keep = cands
    for col in range(4):
        top = keep[:, col].max()
        keep = keep[keep[:, col] > top - tol]
        if keep.shape[0] == 1:
            break
    return keep[0]


def canonicalize(g, qc: SymmetryGroup, qs: SymmetryGroup) -> np.ndarray:
    """Canonical representative of the orbit of ``g``.

    Picks the element of the signed orbit with maximal w, breaking ties
    lexicographically on (x, y, z).  Constant on each equivalence class and
    idempotent; the result always has w >= 0.
    """
    orbit = expand_class(g, qc, qs)
    cands = np.vstack([orbit, -orbit])
    return _lex_best(cands)


def canonicalize_batch(g, qc: SymmetryGroup, qs: SymmetryGroup) -> np.ndarray:
    """Vectorized :func:`canonicalize` for an (n, 4) array."""
    orbits = expand_class(np.atleast_2d(g), qc, qs)
    cands = np.concatenate([orbits, -orbits], axis=1)
    out = np.empty((cands.shape[0], 4))
    for i in range(cands.shape[0]):
        out[i] = _lex_best(cands[i])
    return out


def euler_to_quat(e) -> np.ndarray:
    """Bunge Z-X-Z angles to a unit quaternion.

    Accepts an :class:`EulerAngles`, a length-3 sequence, or an (n, 3) array.
    """
    e = np.asarray(e, dtype=float)
    single = e.ndim == 1
    ee = e[None, :] if single else e
    phi1, Phi, phi2 = ee[:, 0], ee[:, 1], ee[:, 2]
    ch = np.cos(Phi / 2.0)
    sh = np.sin(Phi / 2.0)
    sm = (phi1 + phi2) / 2.0
    dm = (phi1 - phi2) / 2.0
    q = np.stack([ch * np.cos(sm), sh * np.cos(dm), sh * np.sin(dm), ch * np.sin(sm)], axis=-1)
    q = q / qnorm(q)[:, None]
    return q[0] if single else q


def quat_to_euler(g) -> EulerAngles:
    """Unit quaternion to Bunge Z-X-Z angles.

    At the gimbal degeneracies Phi in {0, pi} the representative with
    phi2 = 0 is returned.  Round trips recover the input up to sign.
    """
    w, x, y, z = np.asarray(g, dtype=float)
    Phi = 2.0 * np.arctan2(np.hypot(x, y), np.hypot(w, z))
    if np.hypot(x, y) < 1e-12:  # Phi == 0
        return EulerAngles((2.0 * np.arctan2(z, w)) % _TWO_PI, 0.0, 0.0)
    if np.hypot(w, z) < 1e-12:  # Phi == pi
        return EulerAngles((2.0 * np.arctan2(y, x)) % _TWO_PI, np.pi, 0.0)
    sm = np.arctan2(z, w)
    dm = np.arctan2(y, x)
    return EulerAngles(float((sm + dm) % _TWO_PI), float(Phi), float((sm - dm) % _TWO_PI))


# validate the embedded catalog once at import; cheap and guards edits
for _name, _elems in _CATALOG.items():
    _validate_group(_elems, _name, allow_binary=(_name == "octahedral-48"))
