"""Semi-trusted cloud store: capsule archive, download gate and revocation.

Each capsule record keeps a FIFO of pending ``(revocation, download)`` token
pairs.  A download token is only honoured while the capsule sits at the
state the token was issued against; consuming it (or letting it expire)
applies the sibling revocation token, which moves the capsule to its next
identifier.  Tokens addressed to a later state therefore fail with
:class:`TokenMismatch` until every earlier token has been resolved.

The store never sees owner secrets: its API takes only the capsule, its
identifier and the two tokens.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import encoding, groups
from .errors import (
    DuplicateCapsule,
    IntegrityFailure,
    TokenConsumed,
    TokenExpired,
    TokenMismatch,
    TokenRejected,
    UnknownCapsule,
)
from .scheme import DataCapsule, DownloadToken, MasterPublicKey, RevocationToken, update_dc, verify_integrity

log = logging.getLogger(__name__)

LOG_FORMAT = "tdcss-store/1"
ACTIVE, CONSUMED, EXPIRED = "active", "consumed", "expired"


def dci_key(dci) -> bytes:
    return dci if isinstance(dci, bytes) else groups.encode_element(dci)


def gt_key(z) -> bytes:
    return z if isinstance(z, bytes) else groups.encode_element(z)


@dataclass
class TokenEntry:
    download: DownloadToken
    revocation: RevocationToken
    target: bytes          # DCI bytes of the state the token unlocks
    state: str = ACTIVE


@dataclass
class CapsuleRecord:
    dci: bytes
    capsule: DataCapsule
    pending: list = field(default_factory=list)   # TokenEntry, FIFO
    tokens: dict = field(default_factory=dict)    # D1 bytes -> TokenEntry
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def tail(self) -> bytes:
        return groups.encode_element(self.pending[-1].revocation.r2) if self.pending else self.dci


@dataclass(frozen=True)
class PublicGroup:
    """The only system parameters the store needs: the group itself."""

    params: groups.GroupParams


class CloudStore:
    """In-process store; ``data_dir`` enables the append-only log.

    ``clock`` is any zero-argument callable returning seconds.  ``mpk`` is
    optional since integrity checks and updates only use the group.
    """

    def __init__(self, mpk: MasterPublicKey | None = None, data_dir=None, clock=time.time):
        self.mpk = mpk if mpk is not None else PublicGroup(groups.group_setup())
        self.clock = clock
        self._index: dict[bytes, CapsuleRecord] = {}
        self._index_lock = threading.Lock()
        self._log_lock = threading.Lock()
        self.stats = {"served_bytes": 0, "served": 0, "rejected": 0}
        self._stats_lock = threading.Lock()
        self._log = None
        if data_dir is not None:
            path = Path(data_dir)
            path.mkdir(parents=True, exist_ok=True)
            self._log_path = path / "store.log"
            if self._log_path.exists():
                self._replay(self._log_path)
            else:
                self._log_path.write_text(json.dumps({"format": LOG_FORMAT}) + "\n")
            self._log = open(self._log_path, "a", encoding="utf-8")

    def close(self):
        if self._log is not None:
            self._log.close()
            self._log = None

    # -- public API ----------------------------------------------------------

    def store_capsule(self, dci, capsule: DataCapsule) -> None:
        key = dci_key(dci)
        dci_el = groups.decode_g2(key)
        if not verify_integrity(self.mpk, dci_el, capsule):
            raise IntegrityFailure("uploaded capsule does not verify against its identifier")
        with self._index_lock:
            if key in self._index:
                raise DuplicateCapsule("a capsule is already stored under this identifier")
            self._index[key] = CapsuleRecord(key, capsule)
        self._append({"op": "store", "dci": encoding.b64(key), "capsule": encoding.to_envelope(capsule)})

    def register_tokens(self, dci, revocation: RevocationToken, download: DownloadToken) -> None:
        key = dci_key(dci)
        rec = self._record(key)
        with rec.lock:
            if key != rec.tail:
                raise UnknownCapsule("tokens must address the capsule's latest pending state")
            if not self.clock() < download.expires:
                raise TokenRejected("download token is already expired")
            d1 = gt_key(download.d1)
            if d1 in rec.tokens:
                raise TokenRejected("download token already registered")
            self._add_tokens(rec, key, revocation, download)
            self._append({"op": "tokens", "dci": encoding.b64(key),
                          "revocation": encoding.to_envelope(revocation),
                          "download": encoding.to_envelope(download)})

    def handle_download(self, dci, param) -> DataCapsule:
        """Serve the capsule iff ``param`` opens an active token at its current state."""
        key = dci_key(dci)
        d1 = gt_key(param)
        rec = self._record(key)
        with rec.lock:
            entry = rec.tokens.get(d1)
            if entry is None or (entry.state == ACTIVE and entry.target != rec.dci):
                self._bump("rejected")
                raise TokenMismatch("download parameter does not open any active token")
            if entry.state == CONSUMED:
                self._bump("rejected")
                raise TokenConsumed("task already used")
            if entry.state == EXPIRED:
                self._bump("rejected")
                raise TokenExpired("task expired")
            if not self.clock() < entry.download.expires:
                self._resolve(rec, entry, EXPIRED)
                self._bump("rejected")
                raise TokenExpired("task expired")
            snapshot = rec.capsule
            self._resolve(rec, entry, CONSUMED)
        self._bump("served")
        self._bump("served_bytes", len(encoding.dumps(snapshot)))
        return snapshot

    def expire_sweep(self, now: float | None = None) -> int:
        """Expire overdue active tokens and apply any revocations they release."""
        now = self.clock() if now is None else now
        with self._index_lock:
            records = {id(r): r for r in self._index.values()}.values()
        count = 0
        for rec in records:
            with rec.lock:
                for entry in list(rec.pending):
                    if entry.state == ACTIVE and not now < entry.download.expires:
                        self._resolve(rec, entry, EXPIRED)
                        count += 1
        return count

    def current(self, dci) -> tuple[bytes, DataCapsule]:
        """Current ``(dci bytes, capsule)`` of the record reachable from ``dci``."""
        rec = self._record(dci_key(dci))
        with rec.lock:
            return rec.dci, rec.capsule

    def pending_count(self, dci) -> int:
        rec = self._record(dci_key(dci))
        with rec.lock:
            return len(rec.pending)

    def token_state(self, dci, param) -> str:
        rec = self._record(dci_key(dci))
        with rec.lock:
            entry = rec.tokens.get(gt_key(param))
            if entry is None:
                raise TokenMismatch("unknown download parameter")
            return entry.state

    # -- internals -----------------------------------------------------------

    def _bump(self, name: str, n: int = 1) -> None:
        with self._stats_lock:
            self.stats[name] += n

    def _record(self, key: bytes) -> CapsuleRecord:
        with self._index_lock:
            rec = self._index.get(key)
        if rec is None:
            raise UnknownCapsule("no capsule stored under this identifier")
        return rec

    def _add_tokens(self, rec, target, revocation, download):
        entry = TokenEntry(download, revocation, target)
        rec.pending.append(entry)
        rec.tokens[gt_key(download.d1)] = entry
        with self._index_lock:
            self._index[groups.encode_element(revocation.r2)] = rec

    def _resolve(self, rec: CapsuleRecord, entry: TokenEntry, state: str, replay: bool = False):
        entry.state = state
        if not replay:
            self._append({"op": state, "dci": encoding.b64(rec.dci),
                          "d1": encoding.b64(gt_key(entry.download.d1))})
        # apply released revocations strictly in issue order
        while rec.pending and rec.pending[0].state != ACTIVE:
            head = rec.pending.pop(0)
            dci_el = groups.decode_g2(rec.dci)
            new_dci, rec.capsule = update_dc(self.mpk, dci_el, rec.capsule, head.revocation)
            rec.dci = groups.encode_element(new_dci)
            log.debug("capsule advanced after %s token", head.state)

    def _append(self, event: dict) -> None:
        if self._log is None:
            return
        line = json.dumps(event, sort_keys=True)
        with self._log_lock:
            self._log.write(line + "\n")
            self._log.flush()
            os.fsync(self._log.fileno())

    def _replay(self, path: Path) -> None:
        text = path.read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines[-1]:
            # crash mid-append: drop the torn record so later appends stay line-aligned
            log.warning("%s: dropping torn trailing record", path)
            path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        lines = [ln for ln in lines[:-1] if ln]
        if not lines or json.loads(lines[0]).get("format") != LOG_FORMAT:
            raise ValueError(f"{path} is not a {LOG_FORMAT} log")
        for line in lines[1:]:
            ev = json.loads(line)
            key = encoding.unb64(ev["dci"])
            if ev["op"] == "store":
                self._index[key] = CapsuleRecord(key, encoding.from_envelope(ev["capsule"], "DataCapsule"))
            elif ev["op"] == "tokens":
                self._add_tokens(self._index[key], key,
                                 encoding.from_envelope(ev["revocation"], "RevocationToken"),
                                 encoding.from_envelope(ev["download"], "DownloadToken"))
            else:
                rec = self._index[key]
                self._resolve(rec, rec.tokens[encoding.unb64(ev["d1"])], ev["op"], replay=True)
