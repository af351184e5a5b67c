"""Authority, data owner and service provider actors plus a scenario driver.

The driver runs the three system phases (initialization, sharing,
decryption) against any store object with the :class:`CloudStore` methods,
so the same seeded scenario can run in-process or against the HTTP service.

Payloads are framed before encapsulation: every granule starts with a
4-byte CRC32 over its index and body, so a recovered granule can be told
apart from garbage without access to the owner's plaintext.
"""

from __future__ import annotations

import random
import struct
import zlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import encoding, groups, scheme
from .csstore import CloudStore
from .errors import ChecksumMismatch, DecodeError, PolicyNotSatisfied, TamperDetected, TdcssError
from .granules import GranuleSet, join_payload, split_payload
from .policy import compile_lsss, parse_formula
from .service import ManualClock

TAG_BYTES = 4
DEFAULT_START = 1_700_000_000.0


# -- granule framing ---------------------------------------------------------

def _tag(w: int, body: bytes) -> bytes:
    return zlib.crc32(struct.pack(">I", w) + body).to_bytes(TAG_BYTES, "big")


def frame_payload(data: bytes, ell: int) -> GranuleSet:
    inner = split_payload(data, ell - 8 * TAG_BYTES)
    return GranuleSet(tuple(_tag(w, g) + g for w, g in enumerate(inner.granules, 1)), ell)


def unframe_granule(w: int, granule: bytes) -> bytes | None:
    """Body of granule ``w``, or None when its checksum does not match."""
    tag, body = granule[:TAG_BYTES], granule[TAG_BYTES:]
    return body if tag == _tag(w, body) else None


def granule_count(first_body: bytes, ell: int) -> int:
    """Number of granules implied by the length header in granule 1."""
    width = ell // 8 - TAG_BYTES
    return -(-(8 + int.from_bytes(first_body[:8], "big")) // width)


def assemble(recovered: dict[int, bytes], ell: int) -> bytes:
    """Checked bodies of the recovered granules, in index order.

    With granule 1 present the length header is known, so the header and
    trailing padding are cut away; a complete set gives back the original
    bytes.  Without it the bodies are returned as they are.
    """
    bodies = {}
    for w, g in sorted(recovered.items()):
        body = unframe_granule(w, g)
        if body is None:
            raise ChecksumMismatch(f"granule {w} failed its checksum")
        bodies[w] = body
    if 1 not in bodies:
        return b"".join(bodies.values())
    if sorted(bodies) == list(range(1, granule_count(bodies[1], ell) + 1)):
        return join_payload(GranuleSet(tuple(bodies.values()), ell - 8 * TAG_BYTES))
    width = ell // 8 - TAG_BYTES
    end = 8 + int.from_bytes(bodies[1][:8], "big")   # payload is framed[8:end]
    out = []
    for w, body in bodies.items():
        lo = (w - 1) * width
        out.append(body[max(8 - lo, 0):max(end - lo, 0)])
    return b"".join(out)


# -- actors ------------------------------------------------------------------

class TrustedAuthority:
    def __init__(self, universe, *, ell: int = groups.DEFAULT_ELL, rng=None):
        self.rng = rng
        self.mpk, self._msk = scheme.setup(universe, ell=ell, rng=rng)
        self.issued: Counter = Counter()

    def issue_sp_key(self, sp_id: str, attributes) -> scheme.SPSecretKey:
        key = scheme.keygen_sp(self.mpk, self._msk, sp_id, attributes, rng=self.rng)
        self.issued[sp_id] += 1
        return key

    def issue_pdo_key(self, psi):
        return scheme.pkeygen_pdo(self.mpk, psi, rng=self.rng)


class SeededOwner:
    """A data owner between seed generation and key completion."""

    def __init__(self, mpk, pdo_id: str, rng=None):
        self.mpk, self.id, self.rng = mpk, pdo_id, rng
        self._seed = scheme.gen_seed(mpk, pdo_id, rng=rng)

    @property
    def psi(self):
        return self._seed.psi

    def complete(self, pk, beta) -> "DataOwner":
        sk = scheme.skeygen_pdo(self._seed.gamma, beta)
        if self.mpk.params.g2 ** sk != pk:
            raise ValueError("public key from the authority does not match the seed")
        return DataOwner(self.mpk, self.id, scheme.PDOKeyMaterial(pk, beta, sk), self.rng)


@dataclass
class OwnedCapsule:
    granules: GranuleSet
    local: scheme.LocalSecret
    policy: str
    original: scheme.DataCapsule   # as uploaded, before any update


class DataOwner:
    def __init__(self, mpk, pdo_id, keys: scheme.PDOKeyMaterial, rng=None):
        self.mpk, self.id, self.keys, self.rng = mpk, pdo_id, keys, rng
        self.capsules: dict[str, OwnedCapsule] = {}

    @property
    def pk(self):
        return self.keys.pk

    def encapsulate(self, data: bytes, policy_text: str):
        """Returns ``(capsule_id, dci, capsule)``; the id is stable across updates."""
        formula = parse_formula(policy_text, self.mpk.universe)
        granules = frame_payload(data, self.mpk.ell)
        dci, local, capsule = scheme.encapsulate(self.mpk, self.keys.sk, granules, compile_lsss(formula), rng=self.rng)
        cid = encoding.b64(groups.encode_element(dci))
        self.capsules[cid] = OwnedCapsule(granules, local, policy_text, capsule)
        return cid, dci, capsule

    def issue_task(self, capsule_id: str, sp_id: str, indices, expires: float, now: float):
        owned = self.capsules[capsule_id]
        dci = owned.local.dci
        task, revocation, download, owned.local = scheme.task_issue(
            self.mpk, self.keys.sk, sp_id, owned.granules, indices, owned.local, expires, rng=self.rng, now=now)
        return dci, task, revocation, download


@dataclass(frozen=True)
class Delivery:
    pk: object
    dci: object
    task: scheme.Task


class ServiceProvider:
    def __init__(self, sp_id: str, key: scheme.SPSecretKey):
        self.id, self.key = sp_id, key
        self.inbox: list[Delivery] = []

    def receive(self, delivery: Delivery) -> None:
        self.inbox.append(delivery)

    def download_parameter(self, mpk, delivery: Delivery):
        return scheme.access_dc(mpk, self.key, delivery.dci, delivery.task, delivery.pk)

    def fetch(self, mpk, store, delivery: Delivery):
        return store.handle_download(delivery.dci, self.download_parameter(mpk, delivery))

    def decrypt(self, mpk, delivery: Delivery, capsule) -> dict[int, bytes]:
        p1 = self.download_parameter(mpk, delivery)
        return scheme.dec_dc(mpk, self.key, delivery.dci, capsule, delivery.task, p1)


# -- world and phases --------------------------------------------------------

@dataclass
class World:
    ta: TrustedAuthority
    store: object
    clock: ManualClock
    rng: random.Random
    owners: dict = field(default_factory=dict)
    providers: dict = field(default_factory=dict)
    restart_hook: object = None

    @property
    def mpk(self):
        return self.ta.mpk

    def now(self) -> float:
        return self.clock()

    def sync_clock(self) -> None:
        if hasattr(self.store, "set_clock"):
            self.store.set_clock(self.clock())

    def advance(self, seconds: float) -> None:
        self.clock.advance(seconds)
        self.sync_clock()

    def restart_store(self) -> None:
        if self.restart_hook is not None:
            self.store = self.restart_hook(self)
            self.sync_clock()


@dataclass
class ShareHandle:
    owner: str
    capsule_id: str
    sp: str
    indices: tuple
    delivery: Delivery
    n: int


def run_initialization(universe, sp_specs: dict, pdo_ids, *, store_factory=None, rng=None,
                       clock: ManualClock | None = None, ell: int = groups.DEFAULT_ELL) -> World:
    """Authority setup, one key per provider, and the owner key handshake.

    ``store_factory(mpk, clock)`` builds the store; default is an in-memory
    :class:`CloudStore` on the world's clock.
    """
    rng = rng if rng is not None else random.Random()
    clock = clock if clock is not None else ManualClock(DEFAULT_START)
    ta = TrustedAuthority(universe, ell=ell, rng=rng)
    store = store_factory(ta.mpk, clock) if store_factory else CloudStore(ta.mpk, clock=clock)
    world = World(ta, store, clock, rng)
    world.sync_clock()
    for sp_id, attrs in sp_specs.items():
        world.providers[sp_id] = ServiceProvider(sp_id, ta.issue_sp_key(sp_id, attrs))
    for pdo_id in pdo_ids:
        pending = SeededOwner(ta.mpk, pdo_id, rng)
        pk, beta = ta.issue_pdo_key(pending.psi)
        world.owners[pdo_id] = pending.complete(pk, beta)
    return world


def run_sharing(world: World, pdo_id: str, data: bytes | None, policy: str | None, sp_id: str,
                indices, ttl: float, capsule_id: str | None = None) -> ShareHandle:
    """Encapsulate (unless ``capsule_id`` names an existing capsule), issue a task, register tokens.

    ``indices=None`` shares every granule.
    """
    owner = world.owners[pdo_id]
    if sp_id not in world.providers:
        raise KeyError(f"unknown service provider {sp_id!r}")
    if capsule_id is None:
        capsule_id, dci, capsule = owner.encapsulate(data, policy)
        world.store.store_capsule(dci, capsule)
    if indices is None:
        indices = range(1, len(owner.capsules[capsule_id].granules) + 1)
    now = world.now()
    dci, task, revocation, download = owner.issue_task(capsule_id, sp_id, indices, now + ttl, now)
    world.store.register_tokens(dci, revocation, download)
    delivery = Delivery(owner.pk, dci, task)
    world.providers[sp_id].receive(delivery)
    return ShareHandle(pdo_id, capsule_id, sp_id, task.indices, delivery,
                       len(owner.capsules[capsule_id].granules))


def run_decryption(world: World, sp_id: str, handle: ShareHandle) -> bytes:
    sp = world.providers[sp_id]
    capsule = sp.fetch(world.mpk, world.store, handle.delivery)
    recovered = sp.decrypt(world.mpk, handle.delivery, capsule)
    return assemble(recovered, world.mpk.ell)


# -- attacks -----------------------------------------------------------------

@dataclass
class AttackReport:
    kind: str
    trials: int = 0
    successes: int = 0
    outcomes: Counter = field(default_factory=Counter)
    served_bytes: int = 0

    def as_dict(self) -> dict:
        return {"kind": self.kind, "trials": self.trials, "successes": self.successes,
                "outcomes": dict(sorted(self.outcomes.items())), "served_bytes": self.served_bytes}


ATTACKS = ("type1", "type2", "type3", "collusion", "tamper", "edos_flood")


def _attack_cast(world: World):
    """Owner, policy and three providers: holder (task, too few attributes),
    qualified (enough attributes, no task), outsider (neither)."""
    u = world.mpk.universe
    if len(u) < 3:
        raise ValueError("attack scenarios need a universe of at least 3 attributes")
    if "attacker-pdo" not in world.owners:
        pending = SeededOwner(world.mpk, "attacker-pdo", world.rng)
        world.owners["attacker-pdo"] = pending.complete(*world.ta.issue_pdo_key(pending.psi))
    for sp_id, attrs in (("holder", [u[0]]), ("qualified", [u[0], u[1]]), ("outsider", [u[2]])):
        if sp_id not in world.providers:
            world.providers[sp_id] = ServiceProvider(sp_id, world.ta.issue_sp_key(sp_id, attrs))
    return f"{u[0]} AND {u[1]}"


def _recovers(recovered: dict[int, bytes], truth: GranuleSet) -> bool:
    return any(unframe_granule(w, g) is not None and g == truth[w] for w, g in recovered.items())


TAMPER_TARGETS = ("c1", "c2", "c3", "c4", "v", "dci")


def _flip_random_bit(env: dict, rng, name: str) -> dict:
    body = dict(env["body"])
    if isinstance(body[name], list):
        items = list(body[name])
        j = rng.randrange(len(items))
        items[j] = _flip_b64(items[j], rng)
        body[name] = items
    else:
        body[name] = _flip_b64(body[name], rng)
    return {**env, "body": body}


def _flip_b64(text: str, rng) -> str:
    raw = bytearray(encoding.unb64(text))
    bit = rng.randrange(len(raw) * 8)
    raw[bit // 8] ^= 1 << (bit % 8)
    return encoding.b64(bytes(raw))


def open_capsule(env: dict):
    """Decode a capsule received from the store; undecodable means tampered."""
    try:
        return encoding.from_envelope(env, "DataCapsule")
    except DecodeError as exc:
        raise TamperDetected(f"capsule does not decode: {exc}") from exc


def run_attack(world: World, kind: str, trials: int = 1, flood: int = 10_000) -> AttackReport:
    """Run ``trials`` rounds of one attack; every round is expected to fail."""
    if kind not in ATTACKS:
        raise ValueError(f"unknown attack {kind!r}")
    policy = _attack_cast(world)
    owner = world.owners["attacker-pdo"]
    holder, qualified, outsider = (world.providers[k] for k in ("holder", "qualified", "outsider"))
    report = AttackReport(kind)
    mpk, rng = world.mpk, world.rng

    for _ in range(trials):
        report.trials += 1
        data = rng.randbytes(rng.randrange(1, 48))
        target = qualified if kind == "tamper" else holder
        handle = run_sharing(world, owner.id, data, policy, target.id, [1], ttl=3600)
        truth = owner.capsules[handle.capsule_id].granules
        delivery = handle.delivery
        target.inbox.remove(delivery)

        def note(exc):
            report.outcomes[type(exc).__name__] += 1

        if kind == "type1":
            capsule = holder.fetch(mpk, world.store, delivery)
            try:
                got = holder.decrypt(mpk, delivery, capsule)
                report.successes += _recovers(got, truth)
            except PolicyNotSatisfied as exc:
                note(exc)
        elif kind in ("type2", "type3"):
            attacker = qualified if kind == "type2" else outsider
            try:
                # intercepted task, evaluated under the attacker's own key
                world.store.handle_download(delivery.dci, attacker.download_parameter(mpk, delivery))
                report.successes += 1
            except TdcssError as exc:
                note(exc)
            if kind == "type3":
                # even a leaked capsule does not open for an outsider
                capsule = owner.capsules[handle.capsule_id].original
                try:
                    got = outsider.decrypt(mpk, delivery, capsule)
                    report.successes += _recovers(got, truth)
                except PolicyNotSatisfied as exc:
                    note(exc)
        elif kind == "collusion":
            p1 = holder.download_parameter(mpk, delivery)
            capsule = world.store.handle_download(delivery.dci, p1)
            p2 = scheme.fabeo_decrypt(mpk, qualified.key, capsule)
            got = scheme.recover_granules(mpk, capsule, delivery.task, p1, p2)
            if _recovers(got, truth):
                report.successes += 1
            else:
                report.outcomes["garbage"] += 1
        elif kind == "tamper":
            capsule = qualified.fetch(mpk, world.store, delivery)
            target_field = TAMPER_TARGETS[(report.trials - 1) % len(TAMPER_TARGETS)]
            report.outcomes["field:" + target_field] += 1
            try:
                if target_field == "dci":
                    # the store indexed the capsule under a corrupted identifier
                    raw = _flip_b64(encoding.b64(groups.encode_element(delivery.dci)), rng)
                    try:
                        bad = groups.decode_g2(encoding.unb64(raw))
                    except DecodeError as exc:
                        raise TamperDetected("capsule identifier does not decode") from exc
                    delivery = Delivery(delivery.pk, bad, delivery.task)
                else:
                    env = _flip_random_bit(encoding.to_envelope(capsule), rng, target_field)
                    capsule = open_capsule(env)
                got = qualified.decrypt(mpk, delivery, capsule)
                report.successes += _recovers(got, truth)
            except TamperDetected as exc:
                note(exc)
        elif kind == "edos_flood":
            _flood(world, delivery, report, flood)
            capsule = holder.fetch(mpk, world.store, delivery)
            report.outcomes["served_to_holder"] += 1
            try:
                holder.fetch(mpk, world.store, delivery)
                report.outcomes["replay_served"] += 1
            except TdcssError as exc:
                note(exc)
    return report


def _flood(world: World, delivery: Delivery, report: AttackReport, count: int) -> None:
    params = [world.rng.randbytes(groups.GT_BYTES) for _ in range(count)]

    def attempt(param):
        try:
            capsule = world.store.handle_download(delivery.dci, param)
            return len(encoding.dumps(capsule)), None
        except TdcssError as exc:
            return 0, type(exc).__name__

    with ThreadPoolExecutor(max_workers=8) as pool:
        for served, err in pool.map(attempt, params):
            report.served_bytes += served
            if err:
                report.outcomes[err] += 1
            else:
                report.successes += 1


# -- declarative scenarios ---------------------------------------------------

def run_scenario(config: dict, *, store_factory=None, restart_hook=None) -> dict:
    """Run a scenario description and return a JSON-ready report.

    ``config`` keys: ``seed``, ``universe_size``, ``providers`` (id -> attribute
    list), ``owners``, and ``actions``: a list of steps, each with ``do`` set to
    ``share``, ``decrypt``, ``advance``, ``sweep``, ``restart`` or ``attack``.
    """
    rng = random.Random(config.get("seed", 0))
    universe = [f"attr{i}" for i in range(int(config.get("universe_size", 10)))]
    clock = ManualClock(config.get("start_time", DEFAULT_START))
    world = run_initialization(universe, config.get("providers", {}), config.get("owners", []),
                               store_factory=store_factory, rng=rng, clock=clock,
                               ell=int(config.get("ell", groups.DEFAULT_ELL)))
    world.restart_hook = restart_hook
    handles: dict[str, ShareHandle] = {}
    results = []
    for step in config.get("actions", []):
        do = step["do"]
        res = {"do": do}
        try:
            if do == "share":
                data = step["data"].encode() if "data" in step else rng.randbytes(int(step.get("size", 40)))
                reuse = handles[step["capsule_of"]].capsule_id if "capsule_of" in step else None
                h = run_sharing(world, step["owner"], data, step.get("policy"), step["sp"],
                                None if step.get("indices", "all") == "all" else step["indices"],
                                float(step.get("ttl", 60)), capsule_id=reuse)
                handles[step["id"]] = h
                res["share"] = step["id"]
            elif do == "decrypt":
                h = handles[step["share"]]
                res["share"] = step["share"]
                res["recovered"] = run_decryption(world, step.get("sp", h.sp), h).hex()
            elif do == "advance":
                world.advance(float(step["seconds"]))
            elif do == "sweep":
                res["expired"] = world.store.expire_sweep()
            elif do == "restart":
                world.restart_store()
            elif do == "attack":
                res["report"] = run_attack(world, step["kind"], int(step.get("trials", 1)),
                                           int(step.get("flood", 10_000))).as_dict()
            else:
                raise ValueError(f"unknown action {do!r}")
            res["ok"] = True
        except TdcssError as exc:
            res.update(ok=False, error=type(exc).__name__)
        results.append(res)
    return {"seed": config.get("seed", 0), "results": results}
