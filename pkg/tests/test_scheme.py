import inspect
import random

import pytest

from helpers import Trial, random_granules
from tdcss import csstore, groups, scheme, service
from tdcss.errors import PolicyNotSatisfied, TamperDetected, TokenExpired, TokenMismatch, UnknownAttribute
from tdcss.granules import GranuleSet
from tdcss.policy import compile_lsss


def test_setup(system):
    mpk, msk, _ = system
    assert mpk.g2_alpha == mpk.params.g2 ** msk.alpha
    with groups.count_ops() as ops:
        scheme.setup([f"u{i}" for i in range(1000)], rng=random.Random(1))
    assert ops.as_dict() == {"g1_exp": 0, "g2_exp": 1, "gt_exp": 0, "pairing": 0}
    for bad in ([], ["a", "a"]):
        with pytest.raises(ValueError):
            scheme.setup(bad)


def test_keygen_sp_structure(system, rng):
    mpk, msk, _ = system
    attrs = ["attr1", "attr4", "attr7"]
    with groups.count_ops() as ops:
        sk = scheme.keygen_sp(mpk, msk, "sp", attrs, rng=rng)
    assert (ops.g1_exp, ops.g2_exp, ops.pairing) == (6, 1, 0)
    g2 = mpk.params.g2
    for s in attrs:
        assert scheme.pair(sk.sk1[s], g2) == scheme.pair(groups.hash_to_g1(s), sk.sk3)
    assert sk.sk3 != scheme.keygen_sp(mpk, msk, "sp", attrs, rng=rng).sk3
    with pytest.raises(UnknownAttribute):
        scheme.keygen_sp(mpk, msk, "sp", ["nope"], rng=rng)
    with pytest.raises(ValueError):
        scheme.keygen_sp(mpk, msk, "", attrs, rng=rng)


def test_owner_key_handshake(system, rng):
    mpk, _, _ = system
    seed = scheme.gen_seed(mpk, "pdo", rng=rng)
    assert seed.psi == mpk.params.g2 ** seed.gamma and seed.gamma != 0
    assert scheme.gen_seed(mpk, "pdo", rng=rng).psi != seed.psi
    pk, beta = scheme.pkeygen_pdo(mpk, seed.psi, rng=rng)
    assert pk == mpk.params.g2 ** scheme.skeygen_pdo(seed.gamma, beta)
    assert scheme.skeygen_pdo(1, 1) == 1
    with pytest.raises(ValueError):
        scheme.pkeygen_pdo(mpk, groups.g2_identity(), rng=rng)
    with pytest.raises(ValueError):
        scheme.skeygen_pdo(0, 5)
    with pytest.raises(ValueError):
        scheme.gen_seed(mpk, "", rng=rng)


def test_correctness_randomized(system):
    mpk, msk, owner = system
    r = random.Random(31)
    for _ in range(40):
        t = Trial(r, mpk, msk, owner)
        pt1, got = t.decrypt()
        assert pt1 == t.dl.d1
        assert got == {w: t.granules[w] for w in t.indices}


def test_encapsulate_integrity_and_freshness(system, rng):
    mpk, _, owner = system
    gs = random_granules(rng, 3)
    pol = compile_lsss("attr0 AND attr1")
    dci, local, dc = scheme.encapsulate(mpk, owner.sk, gs, pol, rng=rng)
    assert scheme.verify_integrity(mpk, dci, dc)
    assert local.dci == dci
    _, _, dc2 = scheme.encapsulate(mpk, owner.sk, gs, pol, rng=rng)
    assert dc2.c2 != dc.c2
    with pytest.raises(UnknownAttribute):
        scheme.encapsulate(mpk, owner.sk, gs, compile_lsss("zzz"), rng=rng)
    with pytest.raises(ValueError):
        scheme.encapsulate(mpk, owner.sk, random_granules(rng, 1, 256), pol, rng=rng)


def test_task_issue_n1(system, rng):
    mpk, msk, owner = system
    gs = random_granules(rng, 1)
    dci, local, dc = scheme.encapsulate(mpk, owner.sk, gs, compile_lsss("attr0"), rng=rng)
    with groups.count_ops() as ops:
        task, rev, dl, nxt = scheme.task_issue(mpk, owner.sk, "sp", gs, [1], local, 100, rng=rng, now=0)
    assert ops.pairing == 3
    # T_{1,1} = 0^l xor P1 xor H2(P_1), with P_1 = T_{1,2} / P_T
    sk = scheme.keygen_sp(mpk, msk, "sp", ["attr0"], rng=rng)
    pt1 = scheme.access_dc(mpk, sk, dci, task, owner.pk)
    pt = pt1 * scheme.fabeo_decrypt(mpk, sk, dc)
    tw1, tw2 = task.entries[1]
    assert tw1 == scheme.xor_bytes(local.p1, mpk.hashes.H2(tw2 / pt))
    assert rev.r2 != local.dci
    assert dl.d1 == pt1 and dl.expires == 100


def test_task_issue_rejects_past_expiry_and_empty(system, rng):
    mpk, _, owner = system
    gs = random_granules(rng, 2)
    _, local, _ = scheme.encapsulate(mpk, owner.sk, gs, compile_lsss("attr0"), rng=rng)
    with pytest.raises(ValueError):
        scheme.task_issue(mpk, owner.sk, "sp", gs, [1], local, 10, rng=rng, now=10)
    with pytest.raises(ValueError):
        scheme.task_issue(mpk, owner.sk, "sp", gs, [], local, 100, rng=rng, now=0)


def test_revocation_exponents_telescope(system, rng):
    mpk, _, owner = system
    gs = random_granules(rng, 2)
    _, l0, _ = scheme.encapsulate(mpk, owner.sk, gs, compile_lsss("attr0"), rng=rng)
    _, r1, _, l1 = scheme.task_issue(mpk, owner.sk, "a", gs, [1], l0, 100, rng=rng, now=0)
    _, r2, _, l2 = scheme.task_issue(mpk, owner.sk, "b", gs, [2], l1, 100, rng=rng, now=0)
    g1, g2 = mpk.params.g1, mpk.params.g2
    assert r1.r1 == g1 ** l1.d and r2.r1 == g1 ** l2.d
    assert l2.dci == g2 ** l2.d and r2.r2 == l2.dci
    # d'' - d = d_{c+1} + d_{c+2}: both updates multiply DCI by g2^(step)
    assert l2.dci == l0.dci * g2 ** ((l2.d - l0.d) % groups.ORDER)
    assert l2.p1 == scheme.xor_bytes(l0.p1, r1.r3, r2.r3)


def test_table2_counts(system):
    mpk, msk, owner = system
    r = random.Random(5)
    for _ in range(10):
        t = Trial(r, mpk, msk, owner)
        with groups.count_ops() as enc:
            scheme.encapsulate(mpk, owner.sk, t.granules, t.policy, rng=r)
        assert (enc.g1_exp, enc.g2_exp, enc.pairing) == (2 * t.policy.n1 + 2, t.policy.tau + 2, 1)
        with groups.count_ops() as ti:
            t.issue()
        assert ti.pairing == len(t.indices) + 2
        with groups.count_ops() as acc:
            pt1 = scheme.access_dc(mpk, t.sk, t.dci, t.task, owner.pk)
        assert acc.pairing == 3
        with groups.count_ops() as dec:
            scheme.dec_dc(mpk, t.sk, t.dci, t.capsule, t.task, pt1)
        assert dec.pairing == t.policy.tau + 4


def test_dec_tamper_and_policy_errors(system):
    mpk, msk, owner = system
    r = random.Random(12)
    t = Trial(r, mpk, msk, owner)
    bad = scheme.DataCapsule(t.capsule.policy, t.capsule.c1, scheme.xor_bytes(t.capsule.c2, b"\x01" + bytes(15)),
                             t.capsule.c3, t.capsule.c4, t.capsule.v)
    with pytest.raises(TamperDetected):
        t.decrypt(capsule=bad)
    poor = scheme.keygen_sp(mpk, msk, t.sp_id, [], rng=r)
    with pytest.raises(PolicyNotSatisfied):
        t.decrypt(sk=poor)


def test_download_dc_gate(system):
    mpk, msk, owner = system
    t = Trial(random.Random(3), mpk, msk, owner)
    scheme.download_dc(t.dl, t.dl.d1, now=1)
    with pytest.raises(TokenMismatch):
        scheme.download_dc(t.dl, t.dl.d1 * mpk.params.gt, now=1)
    with pytest.raises(TokenExpired):
        scheme.download_dc(t.dl, t.dl.d1, now=2e9)


# -- soundness negatives -----------------------------------------------------

def test_wrong_owner_key(system):
    mpk, msk, owner = system
    r = random.Random(101)
    other = scheme.g2_exp(mpk.params.g2, groups.random_scalar(r))
    for _ in range(100):
        t = Trial(r, mpk, msk, owner, max_leaves=3, max_n=3)
        pt1, got = t.decrypt(pk=other)
        assert pt1 != t.dl.d1
        assert not t.matches_any(got)


def test_stale_task_after_update(system):
    mpk, msk, owner = system
    r = random.Random(102)
    for _ in range(100):
        t = Trial(r, mpk, msk, owner, max_leaves=3, max_n=3)
        dci1, dc1 = scheme.update_dc(mpk, t.dci, t.capsule, t.rev)
        pt1, got = t.decrypt(dci=dci1, capsule=dc1)
        assert pt1 != t.dl.d1
        assert not t.matches_any(got)


def test_wrong_target_identity(system):
    mpk, msk, owner = system
    r = random.Random(103)
    for _ in range(100):
        t = Trial(r, mpk, msk, owner, max_leaves=3, max_n=3)
        thief = scheme.keygen_sp(mpk, msk, "thief", t.attrs, rng=r)
        pt1, got = t.decrypt(sk=thief)
        assert pt1 != t.dl.d1
        assert not t.matches_any(got)


def test_collusion_split(system):
    mpk, msk, owner = system
    r = random.Random(104)
    for _ in range(100):
        t = Trial(r, mpk, msk, owner, max_leaves=3, max_n=3)
        holder = scheme.keygen_sp(mpk, msk, t.sp_id, [], rng=r)  # the task's target, no attributes
        helper = scheme.keygen_sp(mpk, msk, "helper", t.attrs, rng=r)
        pt1 = scheme.access_dc(mpk, holder, t.dci, t.task, owner.pk)
        assert pt1 == t.dl.d1  # the holder passes the gate legitimately
        pt2 = scheme.fabeo_decrypt(mpk, helper, t.capsule)
        got = scheme.recover_granules(mpk, t.capsule, t.task, pt1, pt2)
        assert not t.matches_any(got)


def test_update_chain(system):
    mpk, msk, owner = system
    r = random.Random(105)
    for k in range(1, 6):
        t = Trial(r, mpk, msk, owner, max_leaves=4, max_n=4)
        dci, dc, local = t.dci, t.capsule, t.local
        old = []
        for _ in range(k):
            task, rev, dl, local = scheme.task_issue(mpk, owner.sk, t.sp_id, t.granules, t.indices, local,
                                                     2e9, rng=r, now=0)
            old.append((task, dl))
            dci, dc = scheme.update_dc(mpk, dci, dc, rev)
            assert scheme.verify_integrity(mpk, dci, dc)
            assert len(groups.encode_element(dc.v)) == len(groups.encode_element(t.capsule.v))
        fresh, _, dl_new, _ = scheme.task_issue(mpk, owner.sk, t.sp_id, t.granules, t.indices, local,
                                                2e9, rng=r, now=0)
        pt1, got = t.decrypt(dci=dci, capsule=dc, task=fresh)
        assert pt1 == dl_new.d1
        assert got == {w: t.granules[w] for w in t.indices}
        for task, dl in old:
            pt1, got = t.decrypt(dci=dci, capsule=dc, task=task)
            assert pt1 != dl.d1
            assert not t.matches_any(got)


def test_update_with_foreign_token_breaks_integrity(system):
    mpk, msk, owner = system
    r = random.Random(9)
    a, b = Trial(r, mpk, msk, owner), Trial(r, mpk, msk, owner)
    dci, dc = scheme.update_dc(mpk, a.dci, a.capsule, b.rev)
    # self-consistent against the new DCI, but the owner's chain no longer matches
    assert dci == b.rev.r2
    assert not scheme.verify_integrity(mpk, a.next_local.dci, dc)


def test_store_api_never_sees_owner_secrets():
    forbidden = {"local", "sk_pdo", "sk", "msk", "granules", "a1", "d", "y", "gamma", "beta"}
    for cls in (csstore.CloudStore, service.StoreClient):
        for name, fn in inspect.getmembers(cls, inspect.isfunction):
            if name.startswith("_") and name != "__init__":
                continue
            params = set(inspect.signature(fn).parameters)
            assert not params & forbidden, (cls.__name__, name, params & forbidden)
    assert set(inspect.signature(scheme.update_dc).parameters) == {"mpk", "dci", "capsule", "token"}
