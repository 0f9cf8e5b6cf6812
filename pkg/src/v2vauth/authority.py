"""The authentication authority: world setup, provisioning, tracing, revocation, clusters."""
from __future__ import annotations

import enum
import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable

from . import codec
from .codec import BroadcastSecrets
from .errors import (CapabilityError, DuplicateError, IdentificationError, LifetimeError,
                     ParameterError, ProtocolError, UnknownTidError)
from .numtheory import (Modulus, crt_basis, crt_product, enumerate_qr,
                        gen_prime, legendre, poly_roots_mod_composite, poly_roots_mod_prime,
                        sqrt_mod_prime)
from .ops import OpCounters
from .polyalg import (BiPoly, Family, SharePoint, UniPoly, eval_bi, eval_uni, gen_bipoly,
                      inner_partial_y, partial_x, partial_y, y_free_part)

log = logging.getLogger(__name__)


class Profile(str, enum.Enum):
    TOY = "toy"
    DEMO = "demo"


class BlacklistMode(str, enum.Enum):
    PAPER_LITERAL = "paper_literal"
    SHARE_COMPARISON = "share_comparison"


class VoteKind(str, enum.Enum):
    EXIT = "exit"
    VOTE = "vote"


# -- tid pools for the homomorphic variant ------------------------------------

def sum_clique(p: int, size: int) -> tuple[int, ...]:
    """Greedy set of residues mod p whose pairwise sums are all residues.

    Scans upward from 1; for p = 1 mod 8 doubling keeps residues residues,
    so the set also works with repeated elements.
    """
    clique: list[int] = []
    for x in range(1, p):
        if len(clique) == size:
            break
        if legendre(x, p) != 1:
            continue
        if all(legendre(x + y, p) == 1 for y in clique):
            clique.append(x)
    return tuple(clique)


@dataclass(frozen=True)
class QRPool:
    """tids for one class: CRT combinations of per-prime sum cliques.

    Global index g is decoded in mixed radix over the clique sizes; class c
    owns the indices with g % class_count == c.
    """

    cliques: tuple[tuple[int, ...], ...]
    factors: tuple[int, ...]
    class_index: int
    class_count: int

    @property
    def total(self) -> int:
        return math.prod(len(c) for c in self.cliques)

    @property
    def size(self) -> int:
        n, u = self.total, self.class_count
        return n // u + (1 if self.class_index < n % u else 0)

    def element(self, index: int) -> int:
        g = (index % self.size) * self.class_count + self.class_index
        residues = []
        for clique in self.cliques:
            g, digit = divmod(g, len(clique))
            residues.append(clique[digit])
        basis = crt_basis(self.factors)
        return sum(r * e for r, e in zip(residues, basis)) % math.prod(self.factors)

    def members(self) -> list[int]:
        return sorted(self.element(i) for i in range(self.size))


# -- public/secret data ------------------------------------------------------

@dataclass(frozen=True)
class ClassDef:
    id: int
    primes: tuple[int, ...]
    qr_pool: QRPool | None = None


@dataclass(frozen=True)
class SystemParams:
    modulus: Modulus
    master_key: bytes
    classes: tuple[ClassDef, ...]
    poly: BiPoly
    secrets: BroadcastSecrets
    profile: Profile
    collusion_threshold: int
    seed: int = 0
    eno_range: int | None = None  # set only for the wraparound-free literal world

    @property
    def M(self) -> int:
        return self.modulus.value

    @property
    def family(self) -> Family:
        return self.poly.family

    @property
    def b(self) -> int:
        return len(self.classes[0].primes)

    def public_view(self) -> dict:
        return {
            "M": hex(self.M),
            "profile": self.profile.value,
            "family": self.family.value,
            "classes": len(self.classes),
            "primes_per_class": self.b,
            "d": self.poly.x_terms,
            "q": self.poly.y_terms,
            "collusion_threshold": self.collusion_threshold,
        }

    def secret_view(self) -> dict:
        return {
            "WARNING": "plain-text secret store for toy/demo use only; protect or delete",
            **self.public_view(),
            "seed": self.seed,
            "factors": [hex(p) for p in self.modulus.factors],
            "master_key": self.master_key.hex(),
            "class_primes": [[hex(p) for p in c.primes] for c in self.classes],
            "poly": [[hex(c) for c in row] for row in self.poly.coeffs],
            "secrets": {"t": self.secrets.t, "alpha": self.secrets.alpha, "gamma": self.secrets.gamma},
        }


@dataclass(frozen=True)
class Credentials:
    tid: int
    share: UniPoly
    class_id: int
    class_primes: tuple[int, ...]
    secrets: BroadcastSecrets
    modulus: int
    family: Family
    y_free_part: UniPoly | None = None
    eno_range: int | None = None

    @property
    def hash_range(self) -> int:
        return self.eno_range or self.modulus


@dataclass(frozen=True)
class BlacklistEntry:
    tid: int
    mode: BlacklistMode
    share_row: UniPoly | None = None

    def __post_init__(self):
        if (self.share_row is not None) != (self.mode is BlacklistMode.SHARE_COMPARISON):
            raise ParameterError("share_row present iff mode is SHARE_COMPARISON")

    def to_record(self) -> str:
        rec = {"tid": hex(self.tid), "mode": self.mode.value}
        if self.share_row is not None:
            rec["modulus"] = hex(self.share_row.modulus)
            rec["share_row"] = [hex(c) for c in self.share_row.coeffs]
        return json.dumps(rec, sort_keys=True)

    @classmethod
    def from_record(cls, line: str) -> "BlacklistEntry":
        rec = json.loads(line)
        row = None
        if "share_row" in rec:
            row = UniPoly.make((int(c, 16) for c in rec["share_row"]), int(rec["modulus"], 16))
        return cls(int(rec["tid"], 16), BlacklistMode(rec["mode"]), row)


def parse_bad_list(text: str) -> list[BlacklistEntry]:
    return [BlacklistEntry.from_record(line) for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class Identification:
    tid: int | None
    candidates: tuple[int, ...] = ()

    @property
    def ambiguous(self) -> bool:
        """More than one QR root: a counterexample to the uniqueness claim."""
        return len(self.candidates) > 1


@dataclass(frozen=True)
class ClusterInfo:
    cluster_id: int
    field_prime: int
    w: int
    l: int


@dataclass
class ClusterState:
    cluster_id: int
    field_prime: int
    poly: BiPoly
    w: int
    l: int
    e: int
    founders: tuple[int, ...]
    t0: int = 0  # broadcast secret at formation
    alpha: int = 1
    ledger: list[tuple[int, VoteKind]] = field(default_factory=list)
    members: dict[int, int] = field(default_factory=dict)  # x coordinate -> tid
    alive: bool = True

    @property
    def info(self) -> ClusterInfo:
        return ClusterInfo(self.cluster_id, self.field_prime, self.w, self.l)

    def y_of(self, t: int) -> int:
        return (self.cluster_id ^ t) % self.field_prime


@dataclass(frozen=True)
class QSet:
    """What a joining vehicle receives: xuth, h_c and the masked cluster share."""

    cluster: ClusterInfo
    xuth: bytes
    h_c: int
    masked_share: tuple[int, ...]
    epoch: int


@dataclass
class VehicleRecord:
    pid: bytes
    tid: int
    class_id: int
    share: UniPoly
    blacklisted: bool = False


# -- setup ---------------------------------------------------------------------

def _distinct_primes(count: int, bits: int, rng: random.Random, residue=None) -> list[int]:
    primes: list[int] = []
    tries = 0
    while len(primes) < count:
        p = gen_prime(bits, rng, residue)
        if p not in primes:
            primes.append(p)
        tries += 1
        if tries > 100 * count + 1000:
            raise ParameterError(f"cannot find {count} distinct {bits}-bit primes")
    return primes


def setup(u: int, b: int, prime_bits: int, d: int, q: int, family: Family | str = Family.SQUARED,
          seed: int = 0, profile: Profile | str = Profile.TOY, j: int | None = None,
          gamma: int = 10_000, clique_size: int = 4) -> SystemParams:
    """Build the authority's world from a seed.

    ``j`` is the number of prime factors of M (defaults to u*b); the classes
    take disjoint runs of b factors in order.
    """
    family, profile = Family(family), Profile(profile)
    if u < 1 or b < 1:
        raise ParameterError("need at least one class and one prime per class")
    if d < 2 or q < 2:
        raise ParameterError("d and q must be at least 2")
    j = u * b if j is None else j
    if u * b > j:
        raise ParameterError(f"u*b = {u * b} classes' primes do not fit in j = {j} factors")
    rng = random.Random(seed)
    residue = (1, 8) if family is Family.HOMOMORPHIC else None
    factors = _distinct_primes(j, prime_bits, rng, residue)
    modulus = Modulus.from_factors(factors)
    cliques = None
    if family is Family.HOMOMORPHIC:
        cliques = tuple(sum_clique(p, clique_size) for p in factors)
    classes = []
    for i in range(u):
        pool = QRPool(cliques, tuple(factors), i, u) if cliques else None
        classes.append(ClassDef(i, tuple(factors[i * b:(i + 1) * b]), pool))
    master_key = rng.randbytes(32)
    poly = gen_bipoly(family, d, q, modulus.value, rng)
    secrets = BroadcastSecrets(t=rng.getrandbits(32), alpha=rng.randrange(1, 2**16), gamma=gamma)
    return SystemParams(modulus, master_key, tuple(classes), poly, secrets, profile,
                        collusion_threshold=d - 1, seed=seed)


# Monomials of the worked identification example: (x power, y power).
WORKED_EXAMPLE_TERMS = ((2, 8), (1, 5), (0, 3), (1, 2), (0, 4), (0, 1))


def setup_literal(seed: int = 0, prime_bits: int = 64, primes: int = 4, coeff_bits: int = 8,
                  eno_range: int = 256, gamma: int = 10_000) -> SystemParams:
    """Wraparound-free toy world for the literal divisibility test.

    P has exactly the worked example's monomials with small coefficients,
    tids are squares of small primes and message hashes land in
    [0, eno_range), so every pseudonym equals its value over the integers.
    """
    rng = random.Random(seed)
    modulus = Modulus.from_factors(_distinct_primes(primes, prime_bits, rng))
    rows = [[0] * 9 for _ in range(3)]
    for a, bdeg in WORKED_EXAMPLE_TERMS:
        rows[a][bdeg] = rng.randrange(1, 2**coeff_bits)
    poly = BiPoly(tuple(tuple(r) for r in rows), modulus.value, Family.GENERIC)
    params = SystemParams(modulus, rng.randbytes(32), (ClassDef(0, modulus.factors[:1]),), poly,
                          BroadcastSecrets(rng.getrandbits(32), rng.randrange(1, 2**16), gamma),
                          Profile.TOY, collusion_threshold=2, seed=seed, eno_range=eno_range)
    bound = literal_value_bound(poly, LITERAL_TID_ROOTS[-1] ** 2, eno_range - 1)
    if bound >= modulus.value:
        raise ParameterError("literal world would wrap around modulo M")
    return params


LITERAL_TID_ROOTS = (3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61)


def literal_value_bound(P: BiPoly, tid_max: int, eno_max: int) -> int:
    """Largest integer value P can take over [0, tid_max] x [0, eno_max]."""
    return sum(c * tid_max**a * eno_max**bdeg for a, row in enumerate(P.coeffs) for bdeg, c in enumerate(row))


# -- the authority -----------------------------------------------------------

class AuthenticationAuthority:
    """Single-owner state machine for everything the authority does.

    ``authenticate`` stands in for the real vehicle authentication step; it
    receives the permanent id and returns whether to proceed.
    """

    def __init__(self, params: SystemParams, *, founding_threshold: int = 3, w: int = 2, l: int = 4,
                 blacklist_mode: BlacklistMode | str = BlacklistMode.SHARE_COMPARISON,
                 authenticate: Callable[[bytes], bool] | None = None):
        self.params = params
        self.founding_threshold = founding_threshold
        self.w, self.l = w, l
        self.blacklist_mode = BlacklistMode(blacklist_mode)
        self.authenticate = authenticate or (lambda pid: True)
        self.audit: list[tuple[str, bytes, bool]] = []
        self.rng = random.Random(f"aa-{params.seed}")
        self.by_pid: dict[bytes, int] = {}
        self.by_tid: dict[int, VehicleRecord] = {}
        self.bad: dict[int, BlacklistEntry] = {}
        self.clusters: dict[int, ClusterState] = {}
        self.counters = OpCounters()
        self.ambiguities = 0
        self.identifications = 0
        self._qr_sorted: tuple[int, ...] | None = None

    @property
    def M(self) -> int:
        return self.params.M

    # provisioning ------------------------------------------------------

    def _sorted_candidates(self, class_id: int) -> list[int] | tuple[int, ...]:
        cls = self.params.classes[class_id]
        if cls.qr_pool is not None:
            return cls.qr_pool.members()
        if self._qr_sorted is None:
            self._qr_sorted = enumerate_qr(self.params.modulus)
        return self._qr_sorted

    def _tid_from_block(self, block: bytes, class_id: int) -> int:
        idx = int.from_bytes(block, "big")
        params = self.params
        M = self.M
        cls = params.classes[class_id]
        if params.eno_range is not None:
            roots = LITERAL_TID_ROOTS
            for k in range(len(roots)):
                tid = roots[(idx + k) % len(roots)] ** 2
                if tid not in self.by_tid:
                    return tid
            raise CapabilityError("literal world tid pool exhausted")
        if params.profile is Profile.TOY:
            pool = self._sorted_candidates(class_id)
            for k in range(len(pool)):
                tid = pool[(idx + k) % len(pool)]
                if tid not in self.by_tid:
                    return tid
            raise CapabilityError("toy tid pool exhausted")
        if cls.qr_pool is not None:
            for k in range(min(cls.qr_pool.size, 4096)):
                tid = cls.qr_pool.element(idx + k)
                if tid not in self.by_tid:
                    return tid
            raise CapabilityError("tid pool exhausted")
        counter = 0
        while True:
            s = codec.hash_to_zm(codec.TAG_TID, [block, counter.to_bytes(4, "big")], M)
            counter += 1
            if math.gcd(s, M) != 1:
                continue
            tid = s * s % M
            if tid not in self.by_tid:
                return tid

    def _credentials(self, rec: VehicleRecord) -> Credentials:
        params = self.params
        yfree = y_free_part(params.poly) if params.family is Family.GENERIC else None
        return Credentials(rec.tid, rec.share, rec.class_id, params.classes[rec.class_id].primes,
                           params.secrets, self.M, params.family, yfree, params.eno_range)

    def provision(self, pid: bytes) -> Credentials:
        ok = bool(self.authenticate(pid))
        self.audit.append(("authenticate", pid, ok))
        if not ok:
            raise ProtocolError("vehicle authentication failed")
        if pid in self.by_pid:
            rec = self.by_tid[self.by_pid[pid]]
            if not rec.blacklisted:
                raise DuplicateError(f"pid {pid!r} already provisioned")
            return self.rejoin(self.bad[rec.tid])
        class_id = self.rng.randrange(len(self.params.classes))
        block = codec.prp(self.params.master_key, codec.pad16(pid))
        self.counters.prp_calls += 1
        tid = self._tid_from_block(block, class_id)
        rec = VehicleRecord(pid, tid, class_id, partial_x(self.params.poly, tid))
        self.by_pid[pid] = tid
        self.by_tid[tid] = rec
        return self._credentials(rec)

    def forget(self, pid: bytes) -> None:
        """Drop a vehicle from the registry entirely (used to re-derive a tid)."""
        tid = self.by_pid.pop(pid)
        self.by_tid.pop(tid, None)
        self.bad.pop(tid, None)

    def record(self, tid: int) -> VehicleRecord:
        try:
            return self.by_tid[tid]
        except KeyError:
            raise UnknownTidError(f"unknown tid {tid:#x}") from None

    # tracing -------------------------------------------------------------

    def qr_roots(self, pseudonym: int, eno: int) -> list[int]:
        """Every x in QR_M with P(x, eno) = pseudonym."""
        params = self.params
        P, m = params.poly, params.modulus
        keep = lambda r, p: legendre(r, p) == 1  # noqa: E731
        if P.family is not Family.SQUARED:
            target = partial_y(P, eno) - UniPoly.make([pseudonym], m.value)
            if not target.coeffs:
                raise CapabilityError("P(., eno) is constant and equal to the pseudonym")
            return poly_roots_mod_composite(target.coeffs, m, keep=keep)
        inner = inner_partial_y(P, eno)
        per_prime = []
        for p in m.factors:
            roots_p: set[int] = set()
            for r in sqrt_mod_prime(pseudonym, p) or ():
                coeffs = list(inner.coeffs) or [0]
                coeffs[0] = (coeffs[0] - r) % p
                if all(c % p == 0 for c in coeffs):
                    raise CapabilityError("R(., eno) is constant modulo a factor")
                roots_p.update(x for x in poly_roots_mod_prime(coeffs, p) if keep(x, p))
            if not roots_p:
                return []
            per_prime.append(sorted(roots_p))
        return crt_product(per_prime, m.factors)

    def identify(self, pseudonym: int, eno: int) -> Identification:
        """Trace a pseudonym to its tid.

        A unique QR root is returned as is.  Several QR roots are reported
        in ``candidates`` and resolved against the registry when exactly one
        of them was ever issued.
        """
        self.identifications += 1
        roots = tuple(self.qr_roots(pseudonym, eno))
        if len(roots) > 1:
            self.ambiguities += 1
            log.debug("uniqueness violated: %d QR roots", len(roots))
        if len(roots) == 1:
            return Identification(roots[0], roots)
        issued = [r for r in roots if r in self.by_tid]
        return Identification(issued[0] if len(issued) == 1 else None, roots)

    # revocation ------------------------------------------------------------

    def blacklist(self, tid: int, mode: BlacklistMode | str | None = None) -> BlacklistEntry:
        rec = self.record(tid)
        if tid in self.bad:
            return self.bad[tid]
        mode = BlacklistMode(mode) if mode is not None else self.blacklist_mode
        row = rec.share if mode is BlacklistMode.SHARE_COMPARISON else None
        entry = BlacklistEntry(tid, mode, row)
        rec.blacklisted = True
        self.bad[tid] = entry
        return entry

    def rejoin(self, entry: BlacklistEntry) -> Credentials:
        """Fresh tid and share for a blacklisted vehicle; the old tid stays bad."""
        if entry.tid not in self.bad:
            raise ProtocolError(f"tid {entry.tid:#x} is not blacklisted")
        old = self.record(entry.tid)
        k2 = codec.prp(self.params.master_key, self.params.master_key)
        block = codec.prp(k2, codec.int_block(old.tid, self.M))
        self.counters.prp_calls += 2
        tid = self._tid_from_block(block, old.class_id)
        rec = VehicleRecord(old.pid, tid, old.class_id, partial_x(self.params.poly, tid))
        self.by_pid[old.pid] = tid
        self.by_tid[tid] = rec
        return self._credentials(rec)

    def export_bad_list(self) -> str:
        return "".join(e.to_record() + "\n" for e in self.bad.values())

    # clusters --------------------------------------------------------------

    def _cluster(self, cluster_id: int) -> ClusterState:
        try:
            return self.clusters[cluster_id]
        except KeyError:
            raise ProtocolError(f"unknown cluster {cluster_id:#x}") from None

    def _traced_tid(self, cfm: int, t: int, index: int = 0) -> int:
        ident = self.identify(cfm, t % self.M)
        if ident.tid is None or ident.tid not in self.by_tid:
            raise IdentificationError(index)
        return ident.tid

    def form_cluster(self, cfms: Iterable[int], t: int) -> ClusterState:
        cfms = list(cfms)
        if len(cfms) < self.founding_threshold:
            raise ParameterError(f"need {self.founding_threshold} cluster-forming messages, got {len(cfms)}")
        tids = tuple(self._traced_tid(c, t, i) for i, c in enumerate(cfms))
        cid = codec.cluster_id_of(sum(tids) % self.M, t, self.M)
        if cid in self.clusters:
            return self.clusters[cid]
        field_prime = gen_prime(max(127, self.M.bit_length() + 1), self.rng)
        poly = gen_bipoly(Family.GENERIC, self.w, self.l, field_prime, self.rng)
        state = ClusterState(cid, field_prime, poly, self.w, self.l, self.founding_threshold, tids,
                             t0=t, alpha=self.params.secrets.alpha)
        self.clusters[cid] = state
        return state

    def epoch_of(self, cluster: ClusterState, t: int) -> int:
        """1-based token epoch of broadcast secret t; more than l is an error."""
        if t < cluster.t0:
            raise ProtocolError("broadcast secret predates the cluster")
        epoch = (t - cluster.t0) // cluster.alpha + 1
        if epoch > cluster.l:
            raise LifetimeError(f"cluster {cluster.cluster_id:#x} used all {cluster.l} token epochs")
        return epoch

    def token(self, cluster_id: int, t: int) -> int:
        """The membership token for broadcast secret t (authority-side oracle)."""
        cluster = self._cluster(cluster_id)
        return eval_bi(cluster.poly, 0, cluster.y_of(t))

    def on_share_curve(self, cluster_id: int, t: int, point: SharePoint) -> bool:
        cluster = self._cluster(cluster_id)
        return eval_bi(cluster.poly, point.x_coord, cluster.y_of(t)) == point.value

    def issue_membership(self, cfm: int, cluster_id: int, t: int) -> QSet:
        cluster = self._cluster(cluster_id)
        if not cluster.alive:
            raise ProtocolError("cluster dissolved")
        epoch = self.epoch_of(cluster, t)
        tid = self._traced_tid(cfm, t)
        share_v = self.by_tid[tid].share
        c = eval_uni(share_v, (cluster.cluster_id ^ t) % self.M)
        if c % cluster.field_prime == 0 or cluster.members.get(c, tid) != tid:
            raise ProtocolError("degenerate cluster x coordinate; retry next epoch")
        cluster.members[c] = tid
        share = partial_x(cluster.poly, c)
        masked = tuple(coef ^ c for coef in share.padded(cluster.l))
        rand = eval_bi(cluster.poly, 0, cluster.y_of(t))
        h_c = codec.cluster_auth(rand, cluster.cluster_id ^ t, self.M)
        xuth = codec.prp(codec.key_from_int(rand), codec.int_block(c, self.M))
        self.counters.prp_calls += 1
        return QSet(cluster.info, xuth, h_c, masked, epoch)

    def dissolution_vote(self, cluster_id: int, founder_tid: int, kind: VoteKind | str) -> bool:
        cluster = self._cluster(cluster_id)
        if not cluster.alive:
            raise ProtocolError("cluster already dissolved")
        if founder_tid not in cluster.founders:
            raise ProtocolError("only founding members may exit-vote")
        cluster.ledger.append((founder_tid, VoteKind(kind)))
        if len({tid for tid, _ in cluster.ledger}) >= cluster.e:
            cluster.alive = False
        return cluster.alive

    def current_clusters(self) -> list[ClusterInfo]:
        return [c.info for c in self.clusters.values() if c.alive]

    def export_clusters(self) -> str:
        return "".join(json.dumps({"cluster_id": hex(c.cluster_id), "field_prime": hex(c.field_prime),
                                   "w": c.w, "l": c.l}, sort_keys=True) + "\n"
                       for c in self.current_clusters())
