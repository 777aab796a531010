"""Production rules, successor generation, enumeration, sum-of-products form.

The start symbol is a single Gaussian leaf.  Rewrites apply to any leaf of
the matching kind, including the trailing additive Gaussian; duplicates
arising from different derivations collapse under the canonical form.
"""

from dataclasses import dataclass, field

from .errors import UnsupportedForm
from .expr import (
    ElemProd,
    ExpOf,
    Leaf,
    Product,
    Sum,
    Transpose,
    canonicalize,
    canonicalize_with_map,
    leaf_g,
    leaves,
    replace_leaf,
    to_text,
)

# row-factor classes of the sum-of-products expansion
PLAIN = "plain"
MARKOV = "markov"
GSM = "gsm"


@dataclass(frozen=True)
class ProductionRule:
    rule_id: str
    pattern: str               # leaf kind rewritten
    roles: tuple               # names of the fresh leaves, traversal order
    build: object = field(compare=False)  # callable(ids) -> replacement expr


def _r1(ids):
    return Sum((Product((Leaf("G", ids[0]), Leaf("G", ids[1]))), Leaf("G", ids[2])))


def _r2a(ids):
    return Sum((Product((Leaf("M", ids[0]), Leaf("G", ids[1]))), Leaf("G", ids[2])))


def _r2b(ids):
    return Sum((Product((Leaf("G", ids[0]), Transpose(Leaf("M", ids[1])))), Leaf("G", ids[2])))


def _r4a(ids):
    return Sum((Product((Leaf("C", ids[0]), Leaf("G", ids[1]))), Leaf("G", ids[2])))


def _r4b(ids):
    return Sum((Product((Leaf("G", ids[0]), Transpose(Leaf("C", ids[1])))), Leaf("G", ids[2])))


def _r5(ids):
    return ElemProd(ExpOf(Leaf("G", ids[0])), Leaf("G", ids[1]))


def _r6a(ids):
    return Sum((Product((Leaf("B", ids[0]), Leaf("G", ids[1]))), Leaf("G", ids[2])))


def _r6b(ids):
    return Sum((Product((Leaf("G", ids[0]), Transpose(Leaf("B", ids[1])))), Leaf("G", ids[2])))


def _r8(ids):
    return Leaf("B", ids[0])


RULES = (
    ProductionRule("1", "G", ("left", "right", "noise"), _r1),
    ProductionRule("2a", "G", ("assign", "centers", "noise"), _r2a),
    ProductionRule("2b", "G", ("centers", "assign", "noise"), _r2b),
    ProductionRule("3", "M", ("assign", "centers", "noise"), _r2a),
    ProductionRule("4a", "G", ("chain", "state", "noise"), _r4a),
    ProductionRule("4b", "G", ("state", "chain", "noise"), _r4b),
    ProductionRule("5", "G", ("scale", "weights"), _r5),
    ProductionRule("6a", "G", ("features", "weights", "noise"), _r6a),
    ProductionRule("6b", "G", ("weights", "features", "noise"), _r6b),
    ProductionRule("7", "B", ("features", "weights", "noise"), _r6a),
    ProductionRule("8", "M", ("features",), _r8),
)

RULE_BY_ID = {r.rule_id: r for r in RULES}

START = leaf_g(0)


def apply_rule(expr, rule, site):
    """Rewrite the leaf with id `site`; returns (canonical child, role map).

    The role map sends each role name of the rule to (leaf_id, flipped) in
    the canonical child.  Leaves of the original expression keep their
    bindings through the id map folded into the role map under 'kept'.
    """
    rule = RULE_BY_ID[rule] if isinstance(rule, str) else rule
    max_id = max(l.id for l in leaves(expr))
    fresh = list(range(max_id + 1, max_id + 1 + len(rule.roles)))
    raw = replace_leaf(expr, site, rule.build(fresh))
    child, mapping = canonicalize_with_map(raw)
    roles = {name: mapping[i] for name, i in zip(rule.roles, fresh)}
    kept = {old: mapping[old] for old in mapping if old <= max_id and old != site}
    return child, roles, kept


def successors(expr):
    """All distinct canonical one-step rewrites of expr.

    Returns a list of (child, rule_id, site) with one entry per distinct
    child; the first (leaf-order, rule-order) derivation is kept.
    """
    out = []
    seen = set()
    for leaf in leaves(expr):
        for rule in RULES:
            if rule.pattern != leaf.kind:
                continue
            child, _, _ = apply_rule(expr, rule, leaf.id)
            if child not in seen:
                seen.add(child)
                out.append((child, rule.rule_id, leaf.id))
    return out


def enumerate_to_level(k):
    """All distinct canonical structures derivable from G in at most k steps."""
    current = {canonicalize(START)}
    seen = set(current)
    for _ in range(k):
        nxt = set()
        for e in current:
            for child, _, _ in successors(e):
                if child not in seen:
                    nxt.add(child)
        seen |= nxt
        current = nxt
    return seen


def replay_derivation(derivation):
    """Apply (rule_id, site) steps starting from G; returns the canonical expr."""
    e = canonicalize(START)
    for rule_id, site in derivation:
        e, _, _ = apply_rule(e, rule_id, site)
    return e


def derivation_of(expr, max_depth=6):
    """A derivation reaching expr from G (breadth-first), or ValueError."""
    expr = canonicalize(expr)
    start = canonicalize(START)
    if expr == start:
        return ()
    frontier = {start: ()}
    seen = {start}
    for _ in range(max_depth):
        nxt = {}
        for parent, deriv in frontier.items():
            for child, rule_id, site in successors(parent):
                if child == expr:
                    return deriv + ((rule_id, site),)
                if child not in seen and len(leaves(child)) <= len(leaves(expr)):
                    seen.add(child)
                    nxt[child] = deriv + ((rule_id, site),)
        if not nxt:
            break
        frontier = nxt
    raise ValueError(f"no derivation within {max_depth} steps for {to_text(expr)}")


# ---------------------------------------------------------------------------
# sum-of-products normal form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SopTerm:
    row_class: str      # PLAIN, MARKOV, or GSM
    u_factors: tuple    # factor sub-expressions forming the row factor
    v_factors: tuple    # remaining factor sub-expressions (may be empty)


@dataclass(frozen=True)
class SumOfProducts:
    terms: tuple        # SopTerm entries in expression order
    noise: object       # the trailing bare G leaf, or None


def _additive_terms(expr):
    """Distribute the leading factor of each product over sums.

    Terms sharing a leftmost factor stay grouped: the remaining factors are
    kept intact (possibly containing sums), which is the unique grouped form
    used for held-out row prediction.
    """
    if isinstance(expr, (Leaf, ElemProd, Transpose)):
        return [(expr,)]
    if isinstance(expr, Sum):
        out = []
        for t in expr.terms:
            out.extend(_additive_terms(t))
        return out
    if isinstance(expr, Product):
        rest = expr.factors[1:]
        return [ht + rest for ht in _additive_terms(expr.factors[0])]
    raise TypeError(f"cannot expand {expr!r}")


def _is_bare_g(node):
    return isinstance(node, Leaf) and node.kind == "G"


def _classify(factors):
    factors = tuple(factors)
    head = factors[0]
    if isinstance(head, ElemProd):
        return SopTerm(GSM, (head,), tuple(factors[1:]))
    if isinstance(head, Leaf) and head.kind == "C":
        m = 0
        while m < len(factors) and isinstance(factors[m], Leaf) and factors[m].kind == "C":
            m += 1
        # absorb the factor driven by the chain (a G in grammar output)
        if m < len(factors):
            return SopTerm(MARKOV, tuple(factors[:m + 1]), tuple(factors[m + 1:]))
        return SopTerm(MARKOV, tuple(factors), ())
    return SopTerm(PLAIN, (head,), tuple(factors[1:]))


def expand_sum_of_products(expr):
    """The unique sum-of-products form: sum of U_i V_i terms plus noise.

    Raises UnsupportedForm when the outermost expression carries no additive
    bare-G noise term (callers then score with a small noise floor).
    """
    expr = canonicalize(expr)
    if _is_bare_g(expr):
        return SumOfProducts((), expr)
    term_lists = _additive_terms(expr)
    noise = None
    if len(term_lists[-1]) == 1 and _is_bare_g(term_lists[-1][0]):
        noise = term_lists[-1][0]
        term_lists = term_lists[:-1]
    terms = tuple(_classify(list(t)) for t in term_lists)
    if noise is None:
        raise UnsupportedForm(f"no additive noise term in {to_text(expr)}")
    return SumOfProducts(terms, noise)


def expand_allow_noise_free(expr):
    """Like expand_sum_of_products but tolerates a missing noise term."""
    try:
        return expand_sum_of_products(expr)
    except UnsupportedForm:
        expr = canonicalize(expr)
        term_lists = _additive_terms(expr)
        return SumOfProducts(tuple(_classify(list(t)) for t in term_lists), None)
