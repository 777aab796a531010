"""Algebraic expressions over component-matrix leaves.

An expression is an immutable tree built from four leaf kinds (G, M, B, C)
and the operators sum, matrix product, transpose, elementwise product, and
elementwise exp.  The canonical form pushes transposes down to leaves
(normalizing transposed Gaussian leaves to plain ones, since the Gaussian
prior family is closed under transposition), flattens nested sums and
products, and renumbers leaf ids in left-to-right traversal order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionConflict, MissingLeaf, ParseError

LEAF_KINDS = ("G", "M", "B", "C")


@dataclass(frozen=True)
class Leaf:
    kind: str
    id: int


@dataclass(frozen=True)
class Sum:
    terms: tuple


@dataclass(frozen=True)
class Product:
    factors: tuple


@dataclass(frozen=True)
class Transpose:
    arg: object


@dataclass(frozen=True)
class ElemProd:
    left: object
    right: object


@dataclass(frozen=True)
class ExpOf:
    arg: object


def leaf_g(i=0):
    return Leaf("G", i)


def leaves(expr):
    """All Leaf nodes in left-to-right traversal order."""
    out = []

    def walk(e):
        if isinstance(e, Leaf):
            out.append(e)
        elif isinstance(e, Sum):
            for t in e.terms:
                walk(t)
        elif isinstance(e, Product):
            for f in e.factors:
                walk(f)
        elif isinstance(e, Transpose):
            walk(e.arg)
        elif isinstance(e, ElemProd):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, ExpOf):
            walk(e.arg)
        else:
            raise TypeError(f"not an expression node: {e!r}")

    walk(expr)
    return out


def replace_leaf(expr, leaf_id, replacement):
    """Return expr with the leaf of the given id substituted."""

    def walk(e):
        if isinstance(e, Leaf):
            return replacement if e.id == leaf_id else e
        if isinstance(e, Sum):
            return Sum(tuple(walk(t) for t in e.terms))
        if isinstance(e, Product):
            return Product(tuple(walk(f) for f in e.factors))
        if isinstance(e, Transpose):
            return Transpose(walk(e.arg))
        if isinstance(e, ElemProd):
            return ElemProd(walk(e.left), walk(e.right))
        if isinstance(e, ExpOf):
            return ExpOf(walk(e.arg))
        raise TypeError(f"not an expression node: {e!r}")

    return walk(expr)


# ---------------------------------------------------------------------------
# canonical form
# ---------------------------------------------------------------------------

def _push_transposes(e, flipped, flips):
    """Push transposes to the leaves; G' becomes G (flip recorded in flips)."""
    if isinstance(e, Leaf):
        flips[e.id] = flipped
        if flipped and e.kind != "G":
            return Transpose(e)
        return e
    if isinstance(e, Transpose):
        if isinstance(e.arg, Leaf):
            # fast path, identical to the generic one below
            return _push_transposes(e.arg, not flipped, flips)
        return _push_transposes(e.arg, not flipped, flips)
    if isinstance(e, Sum):
        return Sum(tuple(_push_transposes(t, flipped, flips) for t in e.terms))
    if isinstance(e, Product):
        factors = e.factors[::-1] if flipped else e.factors
        return Product(tuple(_push_transposes(f, flipped, flips) for f in factors))
    if isinstance(e, ElemProd):
        return ElemProd(_push_transposes(e.left, flipped, flips),
                        _push_transposes(e.right, flipped, flips))
    if isinstance(e, ExpOf):
        return ExpOf(_push_transposes(e.arg, flipped, flips))
    raise TypeError(f"not an expression node: {e!r}")


def _flatten(e):
    if isinstance(e, (Leaf,)):
        return e
    if isinstance(e, Sum):
        terms = []
        for t in e.terms:
            t = _flatten(t)
            if isinstance(t, Sum):
                terms.extend(t.terms)
            else:
                terms.append(t)
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))
    if isinstance(e, Product):
        factors = []
        for f in e.factors:
            f = _flatten(f)
            if isinstance(f, Product):
                factors.extend(f.factors)
            else:
                factors.append(f)
        return factors[0] if len(factors) == 1 else Product(tuple(factors))
    if isinstance(e, Transpose):
        return Transpose(_flatten(e.arg))
    if isinstance(e, ElemProd):
        return ElemProd(_flatten(e.left), _flatten(e.right))
    if isinstance(e, ExpOf):
        return ExpOf(_flatten(e.arg))
    raise TypeError(f"not an expression node: {e!r}")


def canonicalize_with_map(expr):
    """Canonical form plus a map old_leaf_id -> (new_leaf_id, flipped).

    flipped means the leaf's orientation swapped (it sat under an odd number
    of transposes), so any bound matrix must be transposed to follow it.
    """
    flips = {}
    pushed = _flatten(_push_transposes(expr, False, flips))
    mapping = {}
    counter = [0]

    def renumber(e):
        if isinstance(e, Leaf):
            new = Leaf(e.kind, counter[0])
            mapping[e.id] = (counter[0], flips.get(e.id, False))
            counter[0] += 1
            return new
        if isinstance(e, Sum):
            return Sum(tuple(renumber(t) for t in e.terms))
        if isinstance(e, Product):
            return Product(tuple(renumber(f) for f in e.factors))
        if isinstance(e, Transpose):
            return Transpose(renumber(e.arg))
        if isinstance(e, ElemProd):
            return ElemProd(renumber(e.left), renumber(e.right))
        if isinstance(e, ExpOf):
            return ExpOf(renumber(e.arg))
        raise TypeError(f"not an expression node: {e!r}")

    return renumber(pushed), mapping


def canonicalize(expr):
    return canonicalize_with_map(expr)[0]


def transpose_structure_with_map(expr):
    """The model of the transposed matrix, canonicalized, with the leaf map."""
    return canonicalize_with_map(Transpose(expr))


def transpose_structure(expr):
    return transpose_structure_with_map(expr)[0]


# ---------------------------------------------------------------------------
# printing and parsing
# ---------------------------------------------------------------------------

_SUM, _ELEM, _PROD, _POST = 0, 1, 2, 3


def _print(e, level):
    if isinstance(e, Leaf):
        return e.kind
    if isinstance(e, Transpose):
        return _print(e.arg, _POST + 1) + "'"
    if isinstance(e, ExpOf):
        return "exp(" + _print(e.arg, _SUM) + ")"
    if isinstance(e, Product):
        s = "".join(_print(f, _POST) for f in e.factors)
        return "(" + s + ")" if level > _PROD else s
    if isinstance(e, ElemProd):
        s = _print(e.left, _PROD) + "o" + _print(e.right, _PROD)
        return "(" + s + ")" if level > _ELEM else s
    if isinstance(e, Sum):
        s = "+".join(_print(t, _ELEM) for t in e.terms)
        return "(" + s + ")" if level > _SUM else s
    raise TypeError(f"not an expression node: {e!r}")


def to_text(expr):
    """Compact structure text, e.g. M(GM'+G)+G."""
    return _print(expr, _SUM)


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.next_id = 0

    def error(self, msg):
        raise ParseError(f"{msg} at position {self.pos} in {self.text!r}", col=self.pos)

    def peek(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse_sum(self):
        terms = [self.parse_elem()]
        while self.peek() == "+":
            self.pos += 1
            terms.append(self.parse_elem())
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def parse_elem(self):
        node = self.parse_prod()
        while self.peek() == "o":
            self.pos += 1
            node = ElemProd(node, self.parse_prod())
        return node

    def parse_prod(self):
        factors = [self.parse_post()]
        c = self.peek()
        while c != "" and c in "GMBC(e":
            factors.append(self.parse_post())
            c = self.peek()
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def parse_post(self):
        node = self.parse_atom()
        while self.peek() == "'":
            self.pos += 1
            node = Transpose(node)
        return node

    def parse_atom(self):
        c = self.peek()
        if c in LEAF_KINDS:
            self.pos += 1
            leaf = Leaf(c, self.next_id)
            self.next_id += 1
            return leaf
        if c == "e":
            if self.text[self.pos:self.pos + 4] != "exp(":
                self.error("expected 'exp('")
            self.pos += 4
            inner = self.parse_sum()
            if self.peek() != ")":
                self.error("unclosed exp(")
            self.pos += 1
            return ExpOf(inner)
        if c == "(":
            self.pos += 1
            inner = self.parse_sum()
            if self.peek() != ")":
                self.error("unclosed parenthesis")
            self.pos += 1
            return inner
        self.error(f"unexpected character {c!r}")


def parse(text):
    """Parse structure text into a canonical expression."""
    p = _Parser(text)
    e = p.parse_sum()
    if p.peek() != "":
        p.error("trailing input")
    return canonicalize(e)


# ---------------------------------------------------------------------------
# dimension inference
# ---------------------------------------------------------------------------

DATA_ROW = "row"
DATA_COL = "col"


@dataclass
class DimensionAssignment:
    """Sizes and axis labels for every leaf of an expression."""
    n: int
    d: int
    leaf_dims: dict      # leaf_id -> (rows, cols)
    leaf_axes: dict      # leaf_id -> (row_label, col_label); labels 'row','col','k0',...
    latent_sizes: dict   # latent label -> size

    def shape(self, leaf_id):
        return self.leaf_dims[leaf_id]

    def is_data_axis(self, label):
        return label in (DATA_ROW, DATA_COL)


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def make(self, x):
        self.parent.setdefault(x, x)

    def find(self, x):
        self.make(x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def infer_dims(expr, n, d, latent=None, default_latent=10, leaf_dims=None):
    """Assign consistent dimensions to every leaf of expr.

    latent maps latent-dimension labels ('k0', 'k1', ... in traversal order)
    to sizes; unlisted latents get default_latent.  leaf_dims optionally pins
    (rows, cols) of individual leaves (entries may be None).
    """
    uf = _UnionFind()
    leaf_slots = {}
    counter = [0]

    def fresh():
        counter[0] += 1
        return f"s{counter[0]}"

    def walk(e):
        if isinstance(e, Leaf):
            r, c = fresh(), fresh()
            if e.kind == "C":
                uf.union(r, c)
            leaf_slots[e.id] = (r, c)
            return r, c
        if isinstance(e, Sum):
            shapes = [walk(t) for t in e.terms]
            for (r, c) in shapes[1:]:
                uf.union(shapes[0][0], r)
                uf.union(shapes[0][1], c)
            return shapes[0]
        if isinstance(e, Product):
            shapes = [walk(f) for f in e.factors]
            for (_, c_prev), (r_next, _) in zip(shapes, shapes[1:]):
                uf.union(c_prev, r_next)
            return shapes[0][0], shapes[-1][1]
        if isinstance(e, Transpose):
            r, c = walk(e.arg)
            return c, r
        if isinstance(e, ElemProd):
            rl, cl = walk(e.left)
            rr, cr = walk(e.right)
            uf.union(rl, rr)
            uf.union(cl, cr)
            return rl, cl
        if isinstance(e, ExpOf):
            return walk(e.arg)
        raise TypeError(f"not an expression node: {e!r}")

    root_r, root_c = walk(expr)

    # pinned values per class: data labels and explicit sizes
    labels = {}   # class root -> label
    sizes = {}    # class root -> int

    def pin(slot, label, size):
        root = uf.find(slot)
        if label is not None:
            prev = labels.get(root)
            if prev is not None and prev != label:
                # a class can only merge 'row' with 'col' when n == d
                if {prev, label} == {DATA_ROW, DATA_COL} and n == d:
                    pass
                else:
                    raise DimensionConflict(f"axis {prev} conflicts with {label}")
            labels.setdefault(root, label)
        if size is not None:
            prev = sizes.get(root)
            if prev is not None and prev != size:
                raise DimensionConflict(f"size {prev} conflicts with {size}")
            sizes[root] = size

    pin(root_r, DATA_ROW, n)
    pin(root_c, DATA_COL, d)
    if leaf_dims:
        for leaf_id, (pr, pc) in leaf_dims.items():
            if leaf_id not in leaf_slots:
                raise MissingLeaf(f"no leaf with id {leaf_id}")
            r, c = leaf_slots[leaf_id]
            pin(r, None, pr)
            pin(c, None, pc)

    # name latent classes in traversal order
    latent = dict(latent or {})
    latent_sizes = {}
    k_counter = [0]
    for leaf in sorted(leaf_slots):
        for slot in leaf_slots[leaf]:
            root = uf.find(slot)
            if root not in labels:
                name = f"k{k_counter[0]}"
                k_counter[0] += 1
                labels[root] = name
                size = latent.get(name, sizes.get(root, default_latent))
                pin(slot, None, size)
                latent_sizes[name] = sizes[root]
            elif labels[root].startswith("k"):
                latent_sizes[labels[root]] = sizes[uf.find(slot)]

    out_dims, out_axes = {}, {}
    for leaf_id, (r, c) in leaf_slots.items():
        rr, rc = uf.find(r), uf.find(c)
        out_dims[leaf_id] = (sizes[rr], sizes[rc])
        out_axes[leaf_id] = (labels[rr], labels[rc])
    return DimensionAssignment(n=n, d=d, leaf_dims=out_dims, leaf_axes=out_axes,
                               latent_sizes=latent_sizes)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(expr, binding, override=None):
    """Evaluate the expression under a leaf_id -> matrix binding.

    override maps sub-expression nodes to literal matrices; any node present
    is replaced by its literal value (used to check compositionality).
    """

    def walk(e):
        if override is not None and id(e) in override:
            return np.asarray(override[id(e)], dtype=float)
        if isinstance(e, Leaf):
            if e.id not in binding:
                raise MissingLeaf(f"leaf {e.kind}#{e.id} unbound")
            return np.asarray(binding[e.id], dtype=float)
        if isinstance(e, Sum):
            vals = [walk(t) for t in e.terms]
            shape = vals[0].shape
            for v in vals[1:]:
                if v.shape != shape:
                    raise DimensionConflict(f"sum operands {shape} vs {v.shape}")
            return sum(vals[1:], vals[0])
        if isinstance(e, Product):
            vals = [walk(f) for f in e.factors]
            out = vals[0]
            for v in vals[1:]:
                if out.shape[1] != v.shape[0]:
                    raise DimensionConflict(f"product inner dims {out.shape} vs {v.shape}")
                out = out @ v
            return out
        if isinstance(e, Transpose):
            return walk(e.arg).T
        if isinstance(e, ElemProd):
            lv, rv = walk(e.left), walk(e.right)
            if lv.shape != rv.shape:
                raise DimensionConflict(f"elementwise product {lv.shape} vs {rv.shape}")
            return lv * rv
        if isinstance(e, ExpOf):
            return np.exp(walk(e.arg))
        raise TypeError(f"not an expression node: {e!r}")

    return walk(expr)
