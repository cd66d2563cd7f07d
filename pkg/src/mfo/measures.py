"""Finitely supported probability measures over parameter/decision spaces.

A measure lives on one of four spaces:

* ``"X"``  -- parameter points only,
* ``"Y"``  -- decision points only (conditional laws),
* ``"Z"``  -- parameter/decision pairs ``(x, y)``,
* ``"ZX"`` -- triples ``(x, y, x2)`` produced by gluing a pair measure
  with a coupling of its first marginal (the intermediate object of the
  bridging construction).

Atoms are stored as packed float arrays in insertion order, so seeded
runs are bit-reproducible.  Weights are general nonnegative reals (not
forced to ``1/N``): convex mixtures keep their accumulated products
exactly.  All operations are pure; instances are immutable after
construction and safe to share between threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

#: componentwise tolerance under which two atoms are considered identical
ATOM_TOL = 1e-12
#: tolerance on the total-mass-one invariant
WEIGHT_TOL = 1e-12

_SPACE_COLUMNS = {"X": ("x",), "Y": ("y",), "Z": ("x", "y"), "ZX": ("x", "y", "x2")}


def _as_point(p) -> np.ndarray:
    a = np.atleast_1d(np.asarray(p, dtype=float))
    if a.ndim != 1:
        raise ValueError(f"atom coordinate must be a vector, got shape {a.shape}")
    return a


class EmpiricalMeasure:
    """A finitely supported probability measure with ordered atoms."""

    __slots__ = ("space", "xs", "ys", "x2s", "weights")

    def __init__(self, space, xs=None, ys=None, x2s=None, weights=None, validate=True):
        if space not in _SPACE_COLUMNS:
            raise ValueError(f"unknown space tag {space!r}")
        object.__setattr__(self, "space", space)
        n = None
        for name, arr in (("xs", xs), ("ys", ys), ("x2s", x2s)):
            if arr is not None:
                arr = np.ascontiguousarray(arr, dtype=float)
                if arr.ndim != 2:
                    raise ValueError(f"{name} must be 2-D (n_atoms, dim)")
                n = arr.shape[0] if n is None else n
                if arr.shape[0] != n:
                    raise ValueError("inconsistent atom counts")
            object.__setattr__(self, name, arr)
        needed = _SPACE_COLUMNS[space]
        have = {"x": self.xs is not None, "y": self.ys is not None, "x2": self.x2s is not None}
        for col in needed:
            if not have[col]:
                raise ValueError(f"space {space!r} requires column {col!r}")
        for col, present in have.items():
            if present and col not in needed:
                raise ValueError(f"space {space!r} does not take column {col!r}")
        if weights is None:
            raise ValueError("weights are required")
        w = np.ascontiguousarray(weights, dtype=float)
        if w.ndim != 1 or w.shape[0] != n:
            raise ValueError("weights must be 1-D and match the atom count")
        object.__setattr__(self, "weights", w)
        if validate:
            self._validate()
        for name in self.__slots__:
            arr = getattr(self, name)
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)

    def __setattr__(self, name, value):
        raise AttributeError("EmpiricalMeasure is immutable")

    def _validate(self):
        for arr in (self.xs, self.ys, self.x2s):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError("atom coordinates must be finite")
        if np.any(self.weights < 0):
            raise ValueError("atom weights must be nonnegative")
        total = float(self.weights.sum())
        if abs(total - 1.0) > WEIGHT_TOL * max(1, len(self.weights)):
            raise ValueError(f"weights sum to {total!r}, expected 1")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_atoms(cls, space, atoms, merge=True):
        """Build a measure from ``(coords..., weight)`` tuples.

        Each atom is ``(x, w)`` on space X, ``(x, y, w)`` on Z, etc.  With
        ``merge=True`` duplicate atoms (componentwise within
        :data:`ATOM_TOL`) are coalesced.
        """
        cols = _SPACE_COLUMNS[space]
        if not atoms:
            raise ValueError("a probability measure needs at least one atom")
        stacks = {c: [] for c in cols}
        weights = []
        for atom in atoms:
            *coords, w = atom
            if len(coords) != len(cols):
                raise ValueError(f"space {space!r} atoms take {len(cols)} coordinate(s)")
            for c, p in zip(cols, coords):
                stacks[c].append(_as_point(p))
            weights.append(float(w))
        arrays = {c: np.vstack(stacks[c]) for c in cols}
        mu = cls(
            space,
            xs=arrays.get("x"),
            ys=arrays.get("y"),
            x2s=arrays.get("x2"),
            weights=np.asarray(weights),
        )
        return mu.merged() if merge else mu

    @classmethod
    def dirac(cls, space, *coords):
        return cls.from_atoms(space, [(*coords, 1.0)])

    # -- basic queries --------------------------------------------------------

    def __len__(self):
        return len(self.weights)

    def columns(self):
        return tuple(getattr(self, {"x": "xs", "y": "ys", "x2": "x2s"}[c]) for c in _SPACE_COLUMNS[self.space])

    def atoms(self):
        """Iterate over ``(coords..., weight)`` tuples in storage order."""
        cols = self.columns()
        for i in range(len(self)):
            yield tuple(col[i] for col in cols) + (float(self.weights[i]),)

    def _rows(self):
        return np.hstack(self.columns())

    def __repr__(self):
        return f"EmpiricalMeasure(space={self.space!r}, atoms={len(self)})"

    def allclose(self, other, tol=1e-9):
        """True if both measures coincide atom-by-atom after merging."""
        if self.space != other.space:
            return False
        a, b = self.merged(), other.merged()
        if len(a) != len(b):
            return False
        ra, rb = a._rows(), b._rows()
        if ra.shape != rb.shape:
            return False
        ia = np.lexsort(ra.T[::-1])
        ib = np.lexsort(rb.T[::-1])
        return bool(
            np.max(np.abs(ra[ia] - rb[ib])) <= tol
            and np.max(np.abs(a.weights[ia] - b.weights[ib])) <= tol
        )

    # -- atom merging ----------------------------------------------------------

    def merged(self, tol=ATOM_TOL):
        """Coalesce duplicate atoms, keeping first-appearance order.

        Zero-weight atoms are dropped.  Duplicates are detected on the
        lexicographically sorted atom list: consecutive rows within
        ``tol`` in every component belong to the same group.
        """
        rows = self._rows()
        w = self.weights
        keep = w > 0.0
        if not np.all(keep):
            rows, w = rows[keep], w[keep]
            orig = np.flatnonzero(keep)
        else:
            orig = np.arange(len(w))
        order = np.lexsort(rows.T[::-1])
        group_of = np.empty(len(order), dtype=np.intp)
        n_groups = 0
        for pos, idx in enumerate(order):
            if pos > 0 and np.all(np.abs(rows[idx] - rows[order[pos - 1]]) <= tol):
                group_of[idx] = group_of[order[pos - 1]]
            else:
                group_of[idx] = n_groups
                n_groups += 1
        rep = np.full(n_groups, len(rows), dtype=np.intp)
        total = np.zeros(n_groups)
        for i in range(len(rows)):
            g = group_of[i]
            rep[g] = min(rep[g], i)
            total[g] += w[i]
        order_out = np.argsort(rep, kind="stable")
        sel = orig[rep[order_out]]
        cols = self.columns()
        picked = {c: col[sel] for c, col in zip(_SPACE_COLUMNS[self.space], cols)}
        return EmpiricalMeasure(
            self.space,
            xs=picked.get("x"),
            ys=picked.get("y"),
            x2s=picked.get("x2"),
            weights=total[order_out],
            validate=False,
        )

    # -- serialization ---------------------------------------------------------

    def to_json_dict(self):
        cols = _SPACE_COLUMNS[self.space]
        names = self.columns()
        out_atoms = []
        for i in range(len(self)):
            rec = {c: names[j][i].tolist() for j, c in enumerate(cols)}
            rec["w"] = float(self.weights[i])
            out_atoms.append(rec)
        return {"space": self.space, "atoms": out_atoms}

    @classmethod
    def from_json_dict(cls, d):
        space = d["space"]
        cols = _SPACE_COLUMNS[space]
        atoms = [tuple(rec[c] for c in cols) + (rec["w"],) for rec in d["atoms"]]
        return cls.from_atoms(space, atoms, merge=False)

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load_json(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def save_csv(self, path):
        """One atom per row; coordinate columns expanded (for plotting)."""
        cols = _SPACE_COLUMNS[self.space]
        names = self.columns()
        header = []
        for c, arr in zip(cols, names):
            header += [f"{c}{k}" for k in range(arr.shape[1])]
        header.append("w")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(self)):
                row = []
                for arr in names:
                    row += [repr(v) for v in arr[i]]
                row.append(repr(float(self.weights[i])))
                writer.writerow(row)


@dataclass(frozen=True)
class ConditionalFamily:
    """Disintegration of a pair measure: marginal weights and conditionals.

    ``points[i]`` carries marginal mass ``marginal_weights[i]`` and the
    conditional law ``conditionals[i]`` over decisions.
    """

    points: tuple
    marginal_weights: tuple
    conditionals: tuple

    def __len__(self):
        return len(self.points)

    def recompose(self):
        """Mix of ``delta_x (x) mu_x``; inverse of :func:`disintegrate`."""
        atoms = []
        for x, wx, cond in zip(self.points, self.marginal_weights, self.conditionals):
            for (y, wy) in cond.atoms():
                atoms.append((x, y, wx * wy))
        return EmpiricalMeasure.from_atoms("Z", atoms)


def first_marginal(mu: EmpiricalMeasure) -> EmpiricalMeasure:
    """Push a pair (or glued) measure forward to its parameter marginal."""
    if mu.space not in ("Z", "ZX"):
        raise ValueError("first_marginal needs a measure on pairs")
    return EmpiricalMeasure("X", xs=mu.xs, weights=mu.weights, validate=False).merged()


def disintegrate(mu: EmpiricalMeasure) -> ConditionalFamily:
    """Split a pair measure into its marginal and conditional laws."""
    if mu.space != "Z":
        raise ValueError("disintegrate needs a measure on Z")
    mu = mu.merged()
    marg = first_marginal(mu)
    points, mws, conds = [], [], []
    for j in range(len(marg)):
        x = marg.xs[j]
        wx = float(marg.weights[j])
        mask = np.all(np.abs(mu.xs - x) <= ATOM_TOL, axis=1)
        cond = EmpiricalMeasure(
            "Y", ys=mu.ys[mask], weights=mu.weights[mask] / wx, validate=False
        )
        points.append(x)
        mws.append(wx)
        conds.append(cond)
    return ConditionalFamily(tuple(points), tuple(mws), tuple(conds))


def mix(mu_a: EmpiricalMeasure, mu_b: EmpiricalMeasure, omega: float) -> EmpiricalMeasure:
    """Convex combination ``(1-omega)*mu_a + omega*mu_b`` with merged atoms."""
    if mu_a.space != mu_b.space:
        raise ValueError(f"cannot mix measures on {mu_a.space!r} and {mu_b.space!r}")
    if not 0.0 <= omega <= 1.0:
        raise ValueError("mixing weight must lie in [0, 1]")
    cols = _SPACE_COLUMNS[mu_a.space]
    arrays = {}
    for c, a, b in zip(cols, mu_a.columns(), mu_b.columns()):
        arrays[c] = np.vstack([a, b])
    w = np.concatenate([(1.0 - omega) * mu_a.weights, omega * mu_b.weights])
    out = EmpiricalMeasure(
        mu_a.space,
        xs=arrays.get("x"),
        ys=arrays.get("y"),
        x2s=arrays.get("x2"),
        weights=w,
        validate=False,
    )
    return out.merged()


def push_forward(mu: EmpiricalMeasure, fn, space=None) -> EmpiricalMeasure:
    """Relocate atoms through ``fn``, preserving weights.

    ``fn`` receives one coordinate vector per column of the input space
    and returns the coordinate vector(s) of the image atom.  ``space``
    names the output space and defaults to the input one.
    """
    space = space or mu.space
    out_cols = _SPACE_COLUMNS[space]
    atoms = []
    for atom in mu.atoms():
        *coords, w = atom
        image = fn(*coords)
        if len(out_cols) == 1 and not isinstance(image, tuple):
            image = (image,)
        atoms.append((*image, w))
    return EmpiricalMeasure.from_atoms(space, atoms, merge=True)


def validate_feasible(mu: EmpiricalMeasure, problem) -> None:
    """Check every pair atom against the problem's feasibility predicate."""
    if mu.space != "Z":
        raise ValueError("feasibility applies to measures on Z")
    for i, (x, y, _) in enumerate(mu.atoms()):
        if not problem.feasible(x, y):
            raise ValueError(f"atom {i} is infeasible: y not in Z_x for x={x}")
