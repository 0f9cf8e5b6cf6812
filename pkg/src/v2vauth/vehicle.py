"""On-board unit: pseudonyms, the receive pipeline, and the cluster member role."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import codec
from .authority import BlacklistEntry, BlacklistMode, ClusterInfo, Credentials, QSet
from .codec import Envelope, advance_t
from .errors import CapabilityError, InsufficientSharesError, JoinAborted, LifetimeError, ProtocolError
from .numtheory import legendre
from .ops import OpCounters
from .polyalg import Family, SharePoint, UniPoly, eval_uni, interpolate_free_coeff


class Reason(str, enum.Enum):
    BLACKLISTED = "BLACKLISTED"
    INTEGRITY = "INTEGRITY"
    REPLAY = "REPLAY"
    NOT_QR = "NOT_QR"
    Y_BINDING = "Y_BINDING"


@dataclass(frozen=True)
class Verdict:
    reason: Reason | None = None
    bad_tid: int | None = None

    @property
    def accepted(self) -> bool:
        return self.reason is None

    def __str__(self):
        return "ACCEPT" if self.accepted else f"REJECT({self.reason.value})"


ACCEPT = Verdict()


def idnt(pseudonym: int, entry: BlacklistEntry, eno: int, y_free: UniPoly | None = None,
         eno_range: int | None = None) -> bool:
    """True when ``pseudonym`` was produced by the blacklisted ``entry``.

    SHARE_COMPARISON evaluates the published share row.  PAPER_LITERAL strips
    the x-free terms over the integers and tests divisibility by the tid;
    that only works where no value wraps around M, so it is refused unless
    the world advertises a bounded hash range.
    """
    if entry.mode is BlacklistMode.SHARE_COMPARISON:
        return eval_uni(entry.share_row, eno) == pseudonym
    if y_free is None or eno_range is None or not 0 <= eno < eno_range:
        raise CapabilityError("literal identification needs the wraparound-free toy profile")
    stripped = pseudonym - sum(c * eno**k for k, c in enumerate(y_free.coeffs))
    return stripped % entry.tid == 0


@dataclass
class MemberRecord:
    cluster: ClusterInfo
    c_val: int
    cluster_share: UniPoly
    h_c: int
    xuth: bytes
    rand: int | None = None
    epoch: int = 0

    def y_of(self, t: int) -> int:
        return (self.cluster.cluster_id ^ t) % self.cluster.field_prime


def _seal_block(values: list[int], width: int) -> bytes:
    return codec.pad16(b"".join(v.to_bytes(width, "big") for v in values))


class Vehicle:
    """One vehicle's state; a single owner drives it."""

    def __init__(self, creds: Credentials, name: str = ""):
        self.creds = creds
        self.name = name
        self.replay_cache: set[int] = set()
        self.last_t_seen: int | None = None
        self.clusters: dict[int, MemberRecord] = {}
        self.bad_list: list[BlacklistEntry] = []
        self.counters = OpCounters()

    @property
    def M(self) -> int:
        return self.creds.modulus

    def reprovision(self, creds: Credentials) -> None:
        self.creds = creds
        self.clusters.clear()

    # clock -------------------------------------------------------------------

    def t_at(self, now: int) -> int:
        return advance_t(self.creds.secrets, now).t

    def sync(self, now: int) -> int:
        t = self.t_at(now)
        if t != self.last_t_seen:
            self.on_t_update(t)
        return t

    def on_t_update(self, new_t: int) -> None:
        self.replay_cache.clear()
        self.last_t_seen = new_t

    def load_bad_list(self, entries) -> None:
        if isinstance(entries, str):
            from .authority import parse_bad_list
            entries = parse_bad_list(entries)
        self.bad_list = list(entries)

    # broadcast -------------------------------------------------------------

    def eno(self, t: int, m: bytes) -> int:
        self.counters.hashes += 1
        return codec.eno_of(t, m, self.creds.hash_range)

    def pseudonym(self, t: int, m: bytes) -> tuple[int, int]:
        eno = self.eno(t, m)
        self.counters.poly_evals += 1
        return eno, eval_uni(self.creds.share, eno)

    def broadcast(self, m: bytes, now: int) -> Envelope:
        t = self.sync(now)
        _, pseudonym = self.pseudonym(t, m)
        self.counters.hashes += 1
        vno = codec.vno_of(t, m, pseudonym, self.M)
        return Envelope(m, pseudonym, vno, now)

    # receive -------------------------------------------------------------

    def idnt(self, pseudonym: int, entry: BlacklistEntry, eno: int) -> bool:
        self.counters.idnt_evals += 1
        return idnt(pseudonym, entry, eno, self.creds.y_free_part, self.creds.eno_range)

    def verify(self, env: Envelope, now: int) -> Verdict:
        """Blacklist, integrity, replay, then residuosity, in that order."""
        t = self.sync(now)
        eno = self.eno(t, env.payload)
        for entry in self.bad_list:
            if self.idnt(env.pseudonym, entry, eno):
                return Verdict(Reason.BLACKLISTED, entry.tid)
        self.counters.hashes += 1
        if codec.vno_of(t, env.payload, env.pseudonym, self.M) != env.vno:
            return Verdict(Reason.INTEGRITY)
        if env.vno in self.replay_cache:
            return Verdict(Reason.REPLAY)
        if self.creds.family is Family.HOMOMORPHIC:
            self.counters.poly_evals += 1
            value = (eval_uni(self.creds.share, eno) + env.pseudonym) % self.M
            fail = Reason.Y_BINDING
        else:
            value, fail = env.pseudonym, Reason.NOT_QR
        symbols = [legendre(value, p) for p in self.creds.class_primes]
        self.counters.exps += len(symbols)
        if any(s != 1 for s in symbols):
            return Verdict(fail)
        self.replay_cache.add(env.vno)
        return ACCEPT

    # clusters --------------------------------------------------------------

    def make_cfm(self, t: int) -> int:
        self.counters.poly_evals += 1
        return eval_uni(self.creds.share, t % self.M)

    def possession_proof(self, now: int, nonce: bytes) -> Envelope:
        return self.broadcast(b"pop:" + nonce, now)

    def check_possession(self, env: Envelope, now: int) -> bool:
        t = self.t_at(now)
        self.counters.hashes += 1
        return codec.vno_of(t, env.payload, env.pseudonym, self.M) == env.vno

    def accept_qset(self, qset: QSet, t: int) -> MemberRecord:
        info = qset.cluster
        self.counters.poly_evals += 1
        c = eval_uni(self.creds.share, (info.cluster_id ^ t) % self.M)
        share = UniPoly.make((m ^ c for m in qset.masked_share), info.field_prime)
        rec = MemberRecord(info, c, share, qset.h_c, qset.xuth, epoch=qset.epoch)
        self.clusters[info.cluster_id] = rec
        return rec

    def membership_proof(self, cluster_id: int, t: int) -> int:
        rec = self.clusters[cluster_id]
        self.counters.hashes += 1
        return codec.cluster_auth(rec.rand, cluster_id ^ t, self.M)

    def sponsor_response(self, cluster_id: int, xuth: bytes, t: int) -> tuple[int, int]:
        """Unmask the joiner's x coordinate and answer with (c' xor c_j, s')."""
        rec = self.clusters[cluster_id]
        self.counters.prp_calls += 1
        c_j = int.from_bytes(codec.prp_inv(codec.key_from_int(rec.rand), xuth), "big")
        self.counters.poly_evals += 1
        s = eval_uni(rec.cluster_share, rec.y_of(t))
        return rec.c_val ^ c_j, s

    def join_cluster(self, qset: QSet, sponsors: list["Vehicle"], now: int) -> MemberRecord:
        t = self.sync(now)
        rec = self.accept_qset(qset, t)
        need = rec.cluster.w - 1
        if len(sponsors) < need:
            raise InsufficientSharesError(f"need {need} sponsors, got {len(sponsors)}")
        cid = rec.cluster.cluster_id
        points = [SharePoint(rec.c_val, eval_uni(rec.cluster_share, rec.y_of(t)))]
        self.counters.poly_evals += 1
        for sponsor in sponsors[:need]:
            nonce = codec.int_bytes(cid) + self.name.encode()
            if not (sponsor.check_possession(self.possession_proof(now, nonce), now)
                    and self.check_possession(sponsor.possession_proof(now, nonce), now)):
                raise JoinAborted("NO_POSSESSION")
            if sponsor.membership_proof(cid, t) != rec.h_c:
                raise JoinAborted("UNTRUSTED_SPONSOR")
            masked, s = sponsor.sponsor_response(cid, rec.xuth, t)
            points.append(SharePoint(masked ^ rec.c_val, s))
        self.counters.interpolations += 1
        rand = interpolate_free_coeff(points, rec.cluster.field_prime)
        self.counters.hashes += 1
        if codec.cluster_auth(rand, cid ^ t, self.M) != rec.h_c:
            del self.clusters[cid]
            raise JoinAborted("BAD_SHARES")
        rec.rand = rand
        return rec

    def _key(self, rec: MemberRecord) -> bytes:
        return codec.key_from_int(rec.rand)

    def token_pair(self, cluster_id: int, new_t: int) -> bytes:
        """This member's (c, s) for the next epoch, sealed under the current token."""
        rec = self.clusters[cluster_id]
        self.counters.poly_evals += 1
        s = eval_uni(rec.cluster_share, rec.y_of(new_t))
        width = (rec.cluster.field_prime.bit_length() + 7) // 8
        self.counters.prp_calls += 1
        return codec.prp(self._key(rec), _seal_block([rec.c_val, s], width))

    def open_pair(self, rec: MemberRecord, sealed: bytes) -> SharePoint | None:
        width = (rec.cluster.field_prime.bit_length() + 7) // 8
        self.counters.prp_calls += 1
        try:
            raw = codec.unpad16(codec.prp_inv(self._key(rec), sealed))
        except Exception:
            return None
        if len(raw) != 2 * width:
            return None
        return SharePoint(int.from_bytes(raw[:width], "big"), int.from_bytes(raw[width:], "big"))

    def update_token(self, cluster_id: int, received: list[bytes], new_t: int) -> int:
        """Interpolate the next token from at least w-1 peer pairs plus our own."""
        rec = self.clusters[cluster_id]
        if rec.epoch >= rec.cluster.l:
            raise LifetimeError("cluster expired; members must form a new cluster")
        peers: dict[int, SharePoint] = {}
        for sealed in received:
            pt = self.open_pair(rec, sealed)
            if pt is not None and pt.x_coord != rec.c_val:
                peers.setdefault(pt.x_coord, pt)
        need = rec.cluster.w - 1
        if len(peers) < need:
            raise InsufficientSharesError(f"need {need} peer pairs, got {len(peers)}")
        self.counters.poly_evals += 1
        own = SharePoint(rec.c_val, eval_uni(rec.cluster_share, rec.y_of(new_t)))
        points = [own] + sorted(peers.values(), key=lambda p: p.x_coord)[:need]
        self.counters.interpolations += 1
        rec.rand = interpolate_free_coeff(points, rec.cluster.field_prime)
        rec.epoch += 1
        return rec.rand

    def leave_cluster(self, cluster_id: int) -> None:
        if cluster_id not in self.clusters:
            raise ProtocolError("not a member")
        del self.clusters[cluster_id]
