"""Random-instance builders shared by the scheme, actor and acceptance tests."""

import random

from tdcss import scheme
from tdcss.granules import GranuleSet
from tdcss.policy import Gate, Leaf, compile_lsss, evaluate, format_formula, leaves


def random_formula(r: random.Random, n_leaves: int, names) -> Gate | Leaf:
    if n_leaves == 1:
        return Leaf(r.choice(names))
    k = r.randint(1, n_leaves - 1)
    return Gate(r.choice(["AND", "OR"]), random_formula(r, k, names), random_formula(r, n_leaves - k, names))


def satisfying_set(r: random.Random, f, extra=()) -> set:
    attrs = sorted(set(leaves(f)))
    while True:
        s = {a for a in attrs if r.random() < 0.6}
        if evaluate(f, s):
            return s | set(extra)


def unsatisfying_set(r: random.Random, f, universe):
    """Random attribute set failing ``f``, or None if only the empty set fails."""
    for _ in range(50):
        s = {a for a in universe if r.random() < 0.3}
        if not evaluate(f, s):
            return s
    return None


def random_granules(r: random.Random, n: int, ell: int = 128) -> GranuleSet:
    return GranuleSet(tuple(r.randbytes(ell // 8) for _ in range(n)), ell)


def random_indices(r: random.Random, n: int) -> list[int]:
    k = r.randint(1, n)
    return sorted(r.sample(range(1, n + 1), k))


class Trial:
    """One randomized encapsulate + task_issue instance with a satisfying SP key."""

    def __init__(self, r, mpk, msk, owner, max_leaves=8, max_n=8, universe_cap=None):
        names = list(mpk.universe[: universe_cap or len(mpk.universe)])
        self.r, self.mpk, self.msk, self.owner = r, mpk, msk, owner
        self.formula = random_formula(r, r.randint(1, max_leaves), names)
        self.policy = compile_lsss(format_formula(self.formula))
        self.attrs = satisfying_set(r, self.formula)
        self.sp_id = f"sp-{r.randrange(10**9)}"
        self.sk = scheme.keygen_sp(mpk, msk, self.sp_id, self.attrs, rng=r)
        self.granules = random_granules(r, r.randint(1, max_n), mpk.ell)
        self.indices = random_indices(r, len(self.granules))
        self.dci, self.local, self.capsule = scheme.encapsulate(mpk, owner.sk, self.granules, self.policy, rng=r)
        self.issue()

    def issue(self, sp_id=None, indices=None):
        self.task, self.rev, self.dl, self.next_local = scheme.task_issue(
            self.mpk, self.owner.sk, sp_id or self.sp_id, self.granules, indices or self.indices,
            self.local, expires=2e9, rng=self.r, now=0)
        return self.task

    def decrypt(self, sk=None, dci=None, capsule=None, task=None, pk=None):
        sk, task = sk or self.sk, task or self.task
        dci = self.dci if dci is None else dci
        pt1 = scheme.access_dc(self.mpk, sk, dci, task, pk or self.owner.pk)
        return pt1, scheme.dec_dc(self.mpk, sk, dci, capsule or self.capsule, task, pt1)

    def matches_any(self, recovered: dict) -> bool:
        truth = set(self.granules.granules)
        return any(g in truth for g in recovered.values())
