"""Task-driven data capsule sharing: the eleven algorithms.

Roles: the trusted authority runs :func:`setup`, :func:`keygen_sp` and
:func:`pkeygen_pdo`; a data owner runs :func:`gen_seed`, :func:`skeygen_pdo`,
:func:`encapsulate` and :func:`task_issue`; a service provider runs
:func:`access_dc` and :func:`dec_dc`; the cloud store runs
:func:`download_dc` and :func:`update_dc`.

Bitstrings of length ell are ``bytes`` of length ell/8.  Randomness comes
from ``rng`` (anything with ``randrange`` and ``randbytes``); the default is
the operating system's CSPRNG.
"""

from __future__ import annotations

import secrets
import struct
import time
from dataclasses import dataclass
from typing import Mapping

from petrelic.multiplicative.pairing import G1Element, G2Element, GTElement

from . import groups
from .errors import PolicyNotSatisfied, TamperDetected, TokenExpired, TokenMismatch, UnknownAttribute
from .granules import GranuleSet, check_indices, xor_all, xor_bytes, xor_except
from .groups import (
    GroupParams,
    HashSuite,
    attr_sentinel,
    g1_exp,
    g2_exp,
    gt_exp,
    hash_to_g1,
    pair,
    random_scalar,
)
from .policy import LsssPolicy, recon_coefficients

_SYSTEM_RNG = secrets.SystemRandom()


def _rng(rng):
    return _SYSTEM_RNG if rng is None else rng


# -- key material ------------------------------------------------------------

@dataclass(frozen=True)
class MasterPublicKey:
    params: GroupParams
    g2_alpha: G2Element
    universe: tuple[str, ...]
    ell: int = groups.DEFAULT_ELL

    @property
    def hashes(self) -> HashSuite:
        return HashSuite(self.ell)

    @property
    def sentinel(self) -> G1Element:
        """H1(|U|+1)."""
        return attr_sentinel(len(self.universe))


@dataclass(frozen=True)
class MasterSecretKey:
    alpha: int


@dataclass(frozen=True)
class SPSecretKey:
    id: str
    attributes: frozenset
    sk1: Mapping[str, G1Element]
    sk2: G1Element
    sk3: G2Element
    sk4: G1Element


@dataclass(frozen=True)
class SeedPair:
    gamma: int
    psi: G2Element


@dataclass(frozen=True)
class PDOKeyMaterial:
    pk: G2Element
    beta: int
    sk: int


# -- capsule, local state and tokens -----------------------------------------

@dataclass(frozen=True)
class DataCapsule:
    policy: LsssPolicy
    c1: G2Element
    c2: bytes
    c3: tuple[G2Element, ...]
    c4: tuple[G1Element, ...]
    v: G1Element

    def digest(self, dci: G2Element) -> int:
        return groups.capsule_digest(dci, self.c1, self.c2, self.c3, self.c4)


@dataclass(frozen=True)
class LocalSecret:
    """Owner-side state for one capsule; never leaves the owner."""

    dci: G2Element
    p1: bytes
    d: int
    y: int


@dataclass(frozen=True)
class Task:
    t1: G1Element
    t2: GTElement
    entries: Mapping[int, tuple[bytes, GTElement]]
    target: str
    dci: G2Element

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(sorted(self.entries))


@dataclass(frozen=True)
class RevocationToken:
    r1: G1Element  # g1^d'
    r2: G2Element  # DCI'
    r3: bytes      # a_{c+1}


@dataclass(frozen=True)
class DownloadToken:
    d1: GTElement
    expires: float


# -- setup and key generation ------------------------------------------------

def setup(universe, security: int = 128, ell: int = groups.DEFAULT_ELL, rng=None):
    """Return ``(mpk, msk)`` for the attribute ``universe``."""
    universe = tuple(universe)
    if not universe:
        raise ValueError("attribute universe is empty")
    if len(set(universe)) != len(universe):
        raise ValueError("attribute universe has duplicates")
    if ell < 64 or ell % 8:
        raise groups.UnsupportedParameters("ell must be >= 64 and a multiple of 8")
    params = groups.group_setup(security)
    alpha = random_scalar(_rng(rng))
    mpk = MasterPublicKey(params, g2_exp(params.g2, alpha), universe, ell)
    return mpk, MasterSecretKey(alpha)


def keygen_sp(mpk: MasterPublicKey, msk: MasterSecretKey, sp_id: str, attributes, rng=None) -> SPSecretKey:
    attrs = frozenset(attributes)
    if not sp_id:
        raise ValueError("service provider id is empty")
    unknown = attrs - set(mpk.universe)
    if unknown:
        raise UnknownAttribute(f"attributes outside the universe: {', '.join(sorted(unknown))}")
    r = random_scalar(_rng(rng))
    hid = hash_to_g1(sp_id)
    sk1 = {s: g1_exp(hash_to_g1(s), r) for s in sorted(attrs)}
    sk2 = g1_exp(hid, msk.alpha) * g1_exp(mpk.sentinel, r)
    return SPSecretKey(sp_id, attrs, sk1, sk2, g2_exp(mpk.params.g2, r), g1_exp(hid, r))


def _seed_input(pdo_id: str, sigma: int) -> bytes:
    raw = pdo_id.encode("utf-8")
    return struct.pack(">I", len(raw)) + raw + groups.encode_scalar(sigma)


def gen_seed(mpk: MasterPublicKey, pdo_id: str, rng=None) -> SeedPair:
    if not pdo_id:
        raise ValueError("data owner id is empty")
    sigma = random_scalar(_rng(rng))
    gamma = groups.hash_to_scalar(_seed_input(pdo_id, sigma))
    return SeedPair(gamma, g2_exp(mpk.params.g2, gamma))


def pkeygen_pdo(mpk: MasterPublicKey, psi: G2Element, rng=None) -> tuple[G2Element, int]:
    """Run by the authority: blind the owner's seed into a public key."""
    if psi.is_neutral_element():
        raise ValueError("seed is the identity element")
    beta = random_scalar(_rng(rng))
    return g2_exp(psi, beta), beta


def skeygen_pdo(gamma: int, beta: int) -> int:
    gamma, beta = gamma % groups.ORDER, beta % groups.ORDER
    if not gamma or not beta:
        raise ValueError("seed and factor must be nonzero")
    return gamma * beta % groups.ORDER


# -- owner side --------------------------------------------------------------

def encapsulate(mpk: MasterPublicKey, sk_pdo: int, granules: GranuleSet, policy: LsssPolicy, rng=None):
    """Return ``(dci, local_secret, capsule)``."""
    rng = _rng(rng)
    if granules.ell != mpk.ell:
        raise ValueError(f"granules are {granules.ell} bits, system uses {mpk.ell}")
    unknown = set(policy.rows) - set(mpk.universe)
    if unknown:
        raise UnknownAttribute(f"policy attributes outside the universe: {', '.join(sorted(unknown))}")
    g1, g2 = mpk.params.g1, mpk.params.g2
    H = mpk.hashes

    a1 = rng.randbytes(mpk.ell // 8)
    d1 = random_scalar(rng)
    dci = g2_exp(g2, d1)
    y = random_scalar(rng)
    c1 = g2_exp(g2, y)
    p2 = H.H2(pair(g1_exp(g1, sk_pdo), c1))
    c2 = xor_bytes(xor_all(granules), a1, p2)

    v = [random_scalar(rng, nonzero=False) for _ in range(policy.n2 - 1)]
    yp = [random_scalar(rng, nonzero=False) for _ in range(policy.tau)]
    c3 = tuple(g2_exp(g2, e) for e in yp)
    shares = [y] + v
    sentinel = mpk.sentinel
    c4 = tuple(
        g1_exp(sentinel, sum(m * s for m, s in zip(row, shares)))
        * g1_exp(hash_to_g1(attr), yp[rho - 1])
        for row, attr, rho in zip(policy.matrix, policy.rows, policy.rho)
    )
    delta = groups.capsule_digest(dci, c1, c2, c3, c4)
    capsule = DataCapsule(policy, c1, c2, c3, c4, g1_exp(g1, delta * d1))
    return dci, LocalSecret(dci, a1, d1, y), capsule


def task_issue(mpk: MasterPublicKey, sk_pdo: int, sp_id: str, granules: GranuleSet, indices,
               local: LocalSecret, expires: float, rng=None, now: float | None = None):
    """Return ``(task, revocation_token, download_token, next_local)``.

    ``local`` must describe the capsule's current state; the returned
    ``next_local`` describes the state after the store applies the
    revocation token.
    """
    rng = _rng(rng)
    now = time.time() if now is None else now
    if expires <= now:
        raise ValueError("task expiry is not in the future")
    if granules.ell != mpk.ell:
        raise ValueError(f"granules are {granules.ell} bits, system uses {mpk.ell}")
    indices = check_indices(granules, indices)
    params, H = mpk.params, mpk.hashes
    g2a = mpk.g2_alpha
    hid = hash_to_g1(sp_id)

    # task generation
    t1 = g1_exp(hid, sk_pdo) * g1_exp(mpk.sentinel, local.d)
    pt1 = pair(g1_exp(hid, local.d), g2a)
    pt2 = pair(g1_exp(hid, local.y), g2a)
    pt = pt1 * pt2
    # e(g1^sk, g2^y) evaluated as e(g1, g2)^(sk*y) from the cached group constant
    t2 = pt * gt_exp(params.gt, sk_pdo * local.y)
    entries = {}
    for w in indices:
        r_w = random_scalar(rng)
        p_w = pair(g1_exp(hid, r_w), g2a)
        entries[w] = (xor_bytes(xor_except(granules, w), local.p1, H.H2(p_w)), pt * p_w)

    # parameter generation
    a_next = rng.randbytes(mpk.ell // 8)
    while True:
        d_next = random_scalar(rng)
        d_new = (local.d + d_next) % groups.ORDER
        if d_new:
            break
    dci_new = local.dci * g2_exp(params.g2, d_next)
    next_local = LocalSecret(dci_new, xor_bytes(local.p1, a_next), d_new, local.y)

    task = Task(t1, t2, entries, sp_id, local.dci)
    revocation = RevocationToken(g1_exp(params.g1, d_new), dci_new, a_next)
    return task, revocation, DownloadToken(pt1, float(expires)), next_local


# -- service provider side ---------------------------------------------------

def access_dc(mpk: MasterPublicKey, sk: SPSecretKey, dci: G2Element, task: Task, pk_pdo: G2Element) -> GTElement:
    """Download parameter P_T1 = e(sk2, DCI) e(sk4, pk) / e(T1, sk3).

    A task bound to another identity, owner or capsule state yields a wrong
    element rather than an error.
    """
    return pair(sk.sk2, dci) * pair(sk.sk4, pk_pdo) / pair(task.t1, sk.sk3)


def verify_integrity(mpk: MasterPublicKey, dci: G2Element, capsule: DataCapsule) -> bool:
    """e(V, g2) == e(g1^delta, DCI)."""
    params = mpk.params
    delta = capsule.digest(dci)
    return pair(capsule.v, params.g2) == pair(g1_exp(params.g1, delta), dci)


def fabeo_decrypt(mpk: MasterPublicKey, sk: SPSecretKey, capsule: DataCapsule) -> GTElement:
    """Attribute-based half of decryption: e(H1(ID), g2)^(alpha*y)."""
    policy = capsule.policy
    plan = recon_coefficients(policy, sk.attributes, mpk.params.order)
    by_slot: list[list] = [[] for _ in range(policy.tau)]
    c4_terms = []
    for i, gamma in plan:
        by_slot[policy.rho[i] - 1].append(g1_exp(sk.sk1[policy.rows[i]], gamma))
        c4_terms.append(g1_exp(capsule.c4[i], gamma))
    num = pair(sk.sk2, capsule.c1)
    for j, terms in enumerate(by_slot):
        num = num * pair(_g1_product(terms), capsule.c3[j])
    return num / pair(_g1_product(c4_terms), sk.sk3)


def _g1_product(terms):
    acc = groups.g1_identity()
    for t in terms:
        acc = acc * t
    return acc


def recover_granules(mpk: MasterPublicKey, capsule: DataCapsule, task: Task,
                     pt1: GTElement, pt2: GTElement) -> dict[int, bytes]:
    """Message recovery from both halves of the unmasking key."""
    H = mpk.hashes
    pt = pt1 * pt2
    p2 = H.H2(task.t2 / pt)
    return {
        w: xor_bytes(capsule.c2, tw1, H.H2(tw2 / pt), p2)
        for w, (tw1, tw2) in sorted(task.entries.items())
    }


def dec_dc(mpk: MasterPublicKey, sk: SPSecretKey, dci: G2Element, capsule: DataCapsule,
           task: Task, pt1: GTElement) -> dict[int, bytes]:
    """Verify, decrypt and unmask the task's granules.

    Raises :class:`TamperDetected` when the capsule fails its integrity
    equation and :class:`PolicyNotSatisfied` when the key's attributes do not
    satisfy the policy.
    """
    if not verify_integrity(mpk, dci, capsule):
        raise TamperDetected("capsule does not verify against its identifier")
    pt2 = fabeo_decrypt(mpk, sk, capsule)
    return recover_granules(mpk, capsule, task, pt1, pt2)


# -- cloud store side --------------------------------------------------------

def download_dc(token: DownloadToken, pt1: GTElement, now: float | None = None) -> None:
    """Gate check: raises unless ``pt1`` matches the token before expiry."""
    now = time.time() if now is None else now
    if groups.encode_element(pt1) != groups.encode_element(token.d1):
        raise TokenMismatch("download parameter does not match")
    if not now < token.expires:
        raise TokenExpired("download token expired")


def update_dc(mpk: MasterPublicKey, dci: G2Element, capsule: DataCapsule, token: RevocationToken):
    """Re-anchor a capsule to a new identifier; returns ``(dci', capsule')``."""
    c2 = xor_bytes(capsule.c2, token.r3)
    dci_new = token.r2
    delta = groups.capsule_digest(dci_new, capsule.c1, c2, capsule.c3, capsule.c4)
    updated = DataCapsule(capsule.policy, capsule.c1, c2, capsule.c3, capsule.c4, g1_exp(token.r1, delta))
    return dci_new, updated
