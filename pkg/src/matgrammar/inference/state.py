"""Decomposition states and the linear context of a leaf within a structure.

A fitted structure binds every leaf to a ComponentMatrix.  For Gibbs updates
we view the data as  X = L (S o (A Z R1)) R2 + rest + E  where Z is one
leaf's matrix and the surrounding factors are fixed; the context extractor
below recovers that form (most structures have no scale S and empty A).
"""

from dataclasses import dataclass, field

import numpy as np

from ..components import ComponentMatrix, integration_matrix
from ..errors import MissingLeaf
from ..expr import (
    DATA_COL,
    DATA_ROW,
    ElemProd,
    ExpOf,
    Leaf,
    Product,
    Sum,
    Transpose,
    evaluate,
    infer_dims,
    leaves,
    to_text,
    transpose_structure_with_map,
)
from ..grammar import expand_allow_noise_free

NOISE_FLOOR_VAR = 1e-6  # observation variance for structures with no additive G


@dataclass
class DecompositionState:
    """A structure, its leaf bindings, and the derivation that produced it."""
    expr: object
    n: int
    d: int
    binding: dict                    # leaf_id -> ComponentMatrix
    hyper: object
    derivation: tuple = ()
    axes: dict = field(default_factory=dict)   # leaf_id -> (row_label, col_label)
    noise_id: int = None
    signal_expr: object = None

    @classmethod
    def empty(cls, expr, n, d, hyper, derivation=()):
        axes = infer_dims(expr, n, d).leaf_axes
        sop = expand_allow_noise_free(expr)
        noise_id = sop.noise.id if sop.noise is not None else None
        signal_expr = _drop_noise_term(expr, noise_id)
        return cls(expr=expr, n=n, d=d, binding={}, hyper=hyper,
                   derivation=tuple(derivation), axes=axes, noise_id=noise_id,
                   signal_expr=signal_expr)

    def copy(self):
        return DecompositionState(
            expr=self.expr, n=self.n, d=self.d,
            binding={k: v.copy() for k, v in self.binding.items()},
            hyper=self.hyper, derivation=self.derivation, axes=self.axes,
            noise_id=self.noise_id, signal_expr=self.signal_expr)

    def values(self):
        return {k: v.value for k, v in self.binding.items()}

    def signal(self, override_leaf=None, override_value=None):
        """Evaluate the expression minus the trailing noise term."""
        if self.signal_expr is None:
            return np.zeros((self.n, self.d))
        vals = self.values()
        if override_leaf is not None:
            vals = dict(vals)
            vals[override_leaf] = override_value
        return evaluate(self.signal_expr, vals)

    def reconstruct(self):
        out = self.signal()
        if self.noise_id is not None:
            out = out + self.binding[self.noise_id].value
        return out

    def noise_var(self):
        """Homogeneous observation variance of the trailing noise term."""
        if self.noise_id is None:
            return NOISE_FLOOR_VAR
        comp = self.binding[self.noise_id]
        return 1.0 / (float(np.asarray(comp.params["row_prec"]).ravel()[0])
                      * float(np.asarray(comp.params["col_prec"]).ravel()[0]))

    @property
    def noise_precision(self):
        return 1.0 / self.noise_var()

    def sampled_leaves(self):
        """Leaves updated by generic Gibbs: everything but noise and C."""
        return [l for l in leaves(self.expr)
                if l.id != self.noise_id and l.kind != "C"]

    def set_noise_residual(self, X, mask):
        """Absorb the current residual into the noise leaf (observed entries)."""
        if self.noise_id is None:
            return
        resid = np.where(mask, X - self.signal(), 0.0)
        self.binding[self.noise_id].value = resid


def _drop_noise_term(expr, noise_id):
    if noise_id is None:
        return expr
    if isinstance(expr, Leaf):
        return None
    assert isinstance(expr, Sum)
    rest = tuple(t for t in expr.terms
                 if not (isinstance(t, Leaf) and t.id == noise_id))
    return rest[0] if len(rest) == 1 else Sum(rest)


def transpose_state(state, new_n, new_d):
    """The same fitted model viewed over the transposed matrix."""
    texpr, mapping = transpose_structure_with_map(state.expr)
    out = DecompositionState.empty(texpr, new_n, new_d, state.hyper,
                                   derivation=state.derivation)
    for old_id, (new_id, flipped) in mapping.items():
        comp = state.binding[old_id]
        out.binding[new_id] = comp.transposed() if (flipped and comp.kind == "G") \
            else comp.copy()
    return out


def make_integration_component(n):
    return ComponentMatrix("C", integration_matrix(n))


# ---------------------------------------------------------------------------
# leaf contexts
# ---------------------------------------------------------------------------

@dataclass
class LeafContext:
    """X approx L (S o (A Zv R1)) R2 + const, Zv = Z.T when transposed.

    left/right/inner_left/inner_right are lists of (expr, value) of the
    fixed factors; scale is the evaluated elementwise factor or None.
    generic marks shapes the fast samplers cannot handle.
    """
    leaf: object
    transposed: bool = False
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    scale: np.ndarray = None
    inner_left: list = field(default_factory=list)
    inner_right: list = field(default_factory=list)
    generic: bool = False

    def flip(self):
        """Context of the transposed problem X^T."""
        def tp(pairs):
            out = []
            for e, v in reversed(pairs):
                te = e.arg if isinstance(e, Transpose) else Transpose(e)
                out.append((te, v.T))
            return out
        return LeafContext(
            leaf=self.leaf, transposed=not self.transposed,
            left=tp(self.right), right=tp(self.left),
            scale=None if self.scale is None else self.scale.T,
            inner_left=tp(self.inner_right), inner_right=tp(self.inner_left),
            generic=self.generic)

    def left_values(self):
        return [v for (_, v) in self.left]

    def right_values(self):
        return [v for (_, v) in self.right]

    def chain_order(self):
        """Number of leading integration factors when the context is a pure
        C-chain on the left (otherwise 0)."""
        if self.scale is not None or self.generic or self.inner_left or self.inner_right:
            return 0
        if not self.left or not all(isinstance(e, Leaf) and e.kind == "C"
                                    for (e, _) in self.left):
            return 0
        return len(self.left)


@dataclass
class ExpInteriorContext:
    """A leaf inside the exp() argument of an elementwise product.

    signal contribution: L (exp(arg) o W) R2 where arg is affine in the leaf:
    arg = arg_base + contribution(Z) with Z entering via (A Z R1).
    """
    leaf: object
    elemprod: object         # the ElemProd node
    outer_left: list         # (expr, value) factors outside the ElemProd, left
    outer_right: list
    arg_ctx: "LeafContext"   # context of the leaf within the exp argument
    transposed: bool = False
    generic: bool = False    # fall back to full signal recomputation


def _prod_value(pairs):
    """Multiply the value list (None for empty = identity)."""
    vals = [v for (_, v) in pairs]
    if not vals:
        return None
    out = vals[0]
    for v in vals[1:]:
        out = out @ v
    return out


def extract_context(state, leaf_id):
    """Locate leaf_id in the state's signal expression and build its context.

    Returns a LeafContext, an ExpInteriorContext, or None when the leaf has
    no signal contribution (the noise leaf).
    """
    expr = state.signal_expr
    if expr is None:
        return None
    vals = state.values()

    def contains(e):
        return any(l.id == leaf_id for l in leaves(e))

    def walk(e):
        """Context of leaf within e, as if e were the whole signal."""
        if isinstance(e, Leaf):
            if e.id != leaf_id:
                raise MissingLeaf(leaf_id)
            return LeafContext(leaf=e)
        if isinstance(e, Sum):
            for t in e.terms:
                if contains(t):
                    return walk(t)
            raise MissingLeaf(leaf_id)
        if isinstance(e, Product):
            idx = next(i for i, f in enumerate(e.factors) if contains(f))
            ctx = walk(e.factors[idx])
            pre = [(f, evaluate(f, vals)) for f in e.factors[:idx]]
            post = [(f, evaluate(f, vals)) for f in e.factors[idx + 1:]]
            if isinstance(ctx, ExpInteriorContext):
                ctx.outer_left = pre + ctx.outer_left
                ctx.outer_right = ctx.outer_right + post
                return ctx
            ctx.left = pre + ctx.left
            ctx.right = ctx.right + post
            return ctx
        if isinstance(e, Transpose):
            ctx = walk(e.arg)
            if isinstance(ctx, ExpInteriorContext):
                ctx.transposed = not ctx.transposed
                ctx.generic = True
                return ctx
            return ctx.flip()
        if isinstance(e, ElemProd):
            if contains(e.right):
                ctx = walk(e.right)
                scale = evaluate(e.left, vals)
                if isinstance(ctx, ExpInteriorContext):
                    ctx.generic = True
                    return ctx
                if ctx.scale is None:
                    ctx.scale = scale
                    ctx.inner_left, ctx.left = ctx.left, []
                    ctx.inner_right, ctx.right = ctx.right, []
                    if ctx.inner_left:
                        ctx.generic = True
                elif not ctx.left and not ctx.right:
                    ctx.scale = scale * ctx.scale
                else:
                    ctx.generic = True
                return ctx
            # leaf inside exp(arg)
            assert isinstance(e.left, ExpOf)
            arg_ctx = walk(e.left.arg)
            if isinstance(arg_ctx, ExpInteriorContext):
                arg_ctx.generic = True
                return arg_ctx
            out = ExpInteriorContext(leaf=arg_ctx.leaf, elemprod=e,
                                     outer_left=[], outer_right=[],
                                     arg_ctx=arg_ctx)
            if arg_ctx.scale is not None or arg_ctx.generic:
                out.generic = True
            return out
        if isinstance(e, ExpOf):
            raise AssertionError("exp outside an elementwise product")
        raise TypeError(f"not an expression node: {e!r}")

    if not contains(expr):
        return None
    return walk(expr)


def context_signal(ctx, z_value):
    """Evaluate this context's contribution for a given leaf value."""
    zv = z_value.T if ctx.transposed else z_value
    block = zv
    a = _prod_value(ctx.inner_left)
    r1 = _prod_value(ctx.inner_right)
    if a is not None:
        block = a @ block
    if r1 is not None:
        block = block @ r1
    if ctx.scale is not None:
        block = ctx.scale * block
    l = _prod_value(ctx.left)
    r2 = _prod_value(ctx.right)
    if l is not None:
        block = l @ block
    if r2 is not None:
        block = block @ r2
    return block


def component_axis_flags(axes, leaf_id):
    row_label, col_label = axes[leaf_id]
    return row_label in (DATA_ROW, DATA_COL), col_label in (DATA_ROW, DATA_COL)
