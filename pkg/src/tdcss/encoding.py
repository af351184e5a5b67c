"""Versioned JSON envelopes for keys, capsules, tasks and tokens.

An envelope looks like::

    {"format": "tdcss/1", "kind": "DataCapsule", "curve": "BLS12-381", "body": {...}}

Group elements and scalars inside ``body`` are base64 of their canonical
bytes (see FORMATS.md).  :func:`dumps` is deterministic.
"""

from __future__ import annotations

import base64
import binascii
import json

from . import groups
from .errors import DecodeError
from .granules import GranuleSet
from .policy import LsssPolicy
from .scheme import (
    DataCapsule,
    DownloadToken,
    LocalSecret,
    MasterPublicKey,
    MasterSecretKey,
    RevocationToken,
    SeedPair,
    SPSecretKey,
    Task,
)

FORMAT = "tdcss/1"


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text) -> bytes:
    if not isinstance(text, str):
        raise DecodeError("expected a base64 string")
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as exc:
        raise DecodeError("invalid base64") from exc


def el(x) -> str:
    return b64(groups.encode_element(x))


def sc(k: int) -> str:
    return b64(groups.encode_scalar(k))


def _g1(s):
    return groups.decode_g1(unb64(s))


def _g2(s):
    return groups.decode_g2(unb64(s))


def _gt(s):
    return groups.decode_gt(unb64(s))


def _sc(s):
    return groups.decode_scalar(unb64(s))


def _policy_body(p: LsssPolicy) -> dict:
    return {"formula": p.formula, "matrix": [list(r) for r in p.matrix], "rows": list(p.rows)}


def _policy(body: dict) -> LsssPolicy:
    try:
        matrix = tuple(tuple(int(v) for v in row) for row in body["matrix"])
        return LsssPolicy(matrix, tuple(str(a) for a in body["rows"]), str(body.get("formula", "")))
    except (KeyError, TypeError, ValueError) as exc:
        raise DecodeError(f"bad policy: {exc}") from exc


# -- per-kind body codecs ----------------------------------------------------

def _enc_mpk(m: MasterPublicKey):
    return {"security": m.params.security, "g2_alpha": el(m.g2_alpha),
            "universe": list(m.universe), "ell": m.ell}


def _dec_mpk(b):
    params = groups.group_setup(int(b["security"]))
    return MasterPublicKey(params, _g2(b["g2_alpha"]), tuple(b["universe"]), int(b["ell"]))


def _enc_sk(k: SPSecretKey):
    return {"id": k.id, "attributes": sorted(k.attributes),
            "sk1": {a: el(k.sk1[a]) for a in sorted(k.sk1)},
            "sk2": el(k.sk2), "sk3": el(k.sk3), "sk4": el(k.sk4)}


def _dec_sk(b):
    sk1 = {str(a): _g1(v) for a, v in b["sk1"].items()}
    attrs = frozenset(b["attributes"])
    if set(sk1) != attrs:
        raise DecodeError("sk1 keys do not match the attribute set")
    return SPSecretKey(str(b["id"]), attrs, sk1, _g1(b["sk2"]), _g2(b["sk3"]), _g1(b["sk4"]))


def _enc_dc(c: DataCapsule):
    return {"policy": _policy_body(c.policy), "c1": el(c.c1), "c2": b64(c.c2),
            "c3": [el(x) for x in c.c3], "c4": [el(x) for x in c.c4], "v": el(c.v)}


def _dec_dc(b):
    policy = _policy(b["policy"])
    c3 = tuple(_g2(x) for x in b["c3"])
    c4 = tuple(_g1(x) for x in b["c4"])
    if len(c3) != policy.tau or len(c4) != policy.n1:
        raise DecodeError("capsule component counts do not match its policy")
    return DataCapsule(policy, _g2(b["c1"]), unb64(b["c2"]), c3, c4, _g1(b["v"]))


def _enc_task(t: Task):
    return {"target": t.target, "dci": el(t.dci), "t1": el(t.t1), "t2": el(t.t2),
            "entries": [{"w": w, "t_w1": b64(a), "t_w2": el(z)} for w, (a, z) in sorted(t.entries.items())]}


def _dec_task(b):
    entries = {int(e["w"]): (unb64(e["t_w1"]), _gt(e["t_w2"])) for e in b["entries"]}
    if not entries:
        raise DecodeError("task has no granule entries")
    return Task(_g1(b["t1"]), _gt(b["t2"]), entries, str(b["target"]), _g2(b["dci"]))


_CODECS = {
    "MasterPublicKey": (MasterPublicKey, _enc_mpk, _dec_mpk),
    "MasterSecretKey": (MasterSecretKey, lambda m: {"alpha": sc(m.alpha)},
                        lambda b: MasterSecretKey(_sc(b["alpha"]))),
    "SPSecretKey": (SPSecretKey, _enc_sk, _dec_sk),
    "SeedPair": (SeedPair, lambda s: {"gamma": sc(s.gamma), "psi": el(s.psi)},
                 lambda b: SeedPair(_sc(b["gamma"]), _g2(b["psi"]))),
    "DataCapsule": (DataCapsule, _enc_dc, _dec_dc),
    "LocalSecret": (LocalSecret,
                    lambda l: {"dci": el(l.dci), "p1": b64(l.p1), "d": sc(l.d), "y": sc(l.y)},
                    lambda b: LocalSecret(_g2(b["dci"]), unb64(b["p1"]), _sc(b["d"]), _sc(b["y"]))),
    "Task": (Task, _enc_task, _dec_task),
    "GranuleSet": (GranuleSet, lambda g: {"ell": g.ell, "granules": [b64(x) for x in g.granules]},
                   lambda b: GranuleSet(tuple(unb64(x) for x in b["granules"]), int(b["ell"]))),
    "RevocationToken": (RevocationToken,
                        lambda r: {"r1": el(r.r1), "r2": el(r.r2), "r3": b64(r.r3)},
                        lambda b: RevocationToken(_g1(b["r1"]), _g2(b["r2"]), unb64(b["r3"]))),
    "DownloadToken": (DownloadToken,
                      lambda d: {"d1": el(d.d1), "expires": d.expires},
                      lambda b: DownloadToken(_gt(b["d1"]), float(b["expires"]))),
}

# bare group elements and scalars wrapped under a named kind
_ELEMENT_KINDS = {
    "CapsuleId": _g2,              # DCI
    "PublicKey": _g2,              # pk_PDO
    "SeedPoint": _g2,              # psi, sent to the authority
    "DownloadParameter": _gt,      # P_T1
    "Scalar": _sc,                 # beta, sk_PDO
}


def to_envelope(obj, kind: str | None = None) -> dict:
    """Wrap ``obj``; bare elements and ints need an explicit ``kind``."""
    if kind in _ELEMENT_KINDS:
        body = {"value": sc(obj) if kind == "Scalar" else el(obj)}
    else:
        for name, (cls, enc, _) in _CODECS.items():
            if isinstance(obj, cls):
                kind, body = name, enc(obj)
                break
        else:
            raise TypeError(f"no envelope kind for {type(obj).__name__}")
    return {"format": FORMAT, "kind": kind, "curve": groups.CURVE, "body": body}


def from_envelope(env, expect: str | None = None):
    if not isinstance(env, dict) or env.get("format") != FORMAT:
        raise DecodeError(f"not a {FORMAT} envelope")
    kind = env.get("kind")
    if expect is not None and kind != expect:
        raise DecodeError(f"expected a {expect} envelope, got {kind}")
    if env.get("curve") != groups.CURVE:
        raise DecodeError(f"unsupported curve {env.get('curve')!r}")
    body = env.get("body")
    try:
        if kind in _ELEMENT_KINDS:
            return _ELEMENT_KINDS[kind](body["value"])
        if kind not in _CODECS:
            raise DecodeError(f"unknown envelope kind {kind!r}")
        return _CODECS[kind][2](body)
    except DecodeError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise DecodeError(f"malformed {kind} body: {exc}") from exc


def dumps(obj, kind: str | None = None) -> str:
    return json.dumps(to_envelope(obj, kind), sort_keys=True, indent=1) + "\n"


def loads(text, expect: str | None = None):
    try:
        env = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DecodeError(f"envelope is not JSON: {exc}") from exc
    return from_envelope(env, expect)


def kind_of(text) -> str:
    try:
        return json.loads(text)["kind"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DecodeError("not an envelope") from exc


def count_elements(text: str) -> dict:
    """Classify the group elements of a serialized capsule body by group.

    Works on the wire form only, so it measures what is actually stored.
    """
    body = json.loads(text)["body"]
    sizes = {groups.G1_BYTES: "G1", groups.G2_BYTES: "G2", groups.GT_BYTES: "GT"}
    counts = {"G1": 0, "G2": 0, "GT": 0}
    for key in ("c1", "c3", "c4", "v"):
        for item in body[key] if isinstance(body[key], list) else [body[key]]:
            counts[sizes[len(unb64(item))]] += 1
    counts["bits"] = len(unb64(body["c2"])) * 8
    counts["policy_rows"] = len(body["policy"]["rows"])
    return counts
