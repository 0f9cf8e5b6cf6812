"""Deterministic discrete-event harness: authority, honest vehicles, adversaries.

A scenario is a YAML document::

    seed: 7
    profile: toy              # toy | demo
    vehicles: 6
    classes: {u: 2, b: 2, prime_bits: 6}
    degrees: {d: 3, q: 3}
    variant: base             # base | homomorphic
    family: squared           # optional; generic for collusion experiments
    cluster: {e: 3, w: 2, l: 4}
    gamma_ms: 10000
    duration_ms: 60000
    audit_identify: false     # authority traces every honest broadcast
    loss: 0.0                 # delivery loss probability
    latency_ms: 0
    neighborhood: null        # or a list of neighbour lists, one per vehicle
    blacklist_mode: share_comparison
    n_prime: null             # coalition bound; defaults to d - 1
    assumption_violating: false
    script:
      - {at: 0, op: broadcast, vehicle: 0, payload: hello}

Ops: broadcast, broadcast_all, blacklist, rejoin, form_cluster,
join_cluster, dissolve_vote, forge, reuse, replay, tamper, collude.
Time is integer milliseconds.  The trace is a list of JSON-ready dicts.
"""
from __future__ import annotations

import copy
import heapq
import json
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Any

import yaml

from . import codec
from .authority import AuthenticationAuthority, BlacklistMode, Profile, setup
from .codec import Envelope
from .errors import ProtocolError, SchemaError, V2VError
from .ops import OpCounters
from .polyalg import BiPoly, Family, eval_bi, eval_uni
from .vehicle import Reason, Vehicle, Verdict

OPS = {"broadcast", "broadcast_all", "blacklist", "rejoin", "form_cluster", "join_cluster",
       "dissolve_vote", "forge", "reuse", "replay", "tamper", "collude"}

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "profile": "toy",
    "vehicles": 4,
    "classes": {"u": 2, "b": 2, "prime_bits": 6},
    "degrees": {"d": 3, "q": 3},
    "variant": "base",
    "family": None,
    "cluster": {"e": 3, "w": 2, "l": 4},
    "gamma_ms": 10_000,
    "duration_ms": 0,
    "audit_identify": False,
    "loss": 0.0,
    "latency_ms": 0,
    "neighborhood": None,
    "blacklist_mode": "share_comparison",
    "n_prime": None,
    "assumption_violating": False,
    "script": [],
}


@dataclass
class Scenario:
    seed: int
    profile: str
    vehicles: int
    classes: dict
    degrees: dict
    variant: str
    family: str | None
    cluster: dict
    gamma_ms: int
    duration_ms: int
    audit_identify: bool
    loss: float
    latency_ms: int
    neighborhood: list | None
    blacklist_mode: str
    n_prime: int | None
    assumption_violating: bool
    script: list

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise SchemaError("scenario must be a mapping")
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise SchemaError(f"unknown scenario keys: {sorted(unknown)}")
        merged = copy.deepcopy(DEFAULTS)
        for k, v in doc.items():
            if isinstance(merged.get(k), dict) and isinstance(v, dict):
                merged[k].update(v)
            else:
                merged[k] = v
        sc = cls(**merged)
        sc.validate()
        return sc

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            try:
                doc = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise SchemaError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(doc or {})

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def resolved_family(self) -> Family:
        if self.variant == "homomorphic":
            return Family.HOMOMORPHIC
        return Family(self.family or "squared")

    @property
    def n_prime_value(self) -> int:
        return self.n_prime if self.n_prime is not None else self.degrees["d"] - 1

    def validate(self) -> None:
        try:
            if self.profile not in ("toy", "demo"):
                raise SchemaError("profile must be toy or demo")
            if self.variant not in ("base", "homomorphic"):
                raise SchemaError("variant must be base or homomorphic")
            if self.family is not None:
                Family(self.family)
            if self.variant == "homomorphic" and self.family not in (None, "homomorphic"):
                raise SchemaError("homomorphic variant implies the homomorphic family")
            BlacklistMode(self.blacklist_mode)
            if int(self.vehicles) < 0 or int(self.gamma_ms) <= 0:
                raise SchemaError("vehicles must be >= 0 and gamma_ms > 0")
            for key in ("u", "b", "prime_bits"):
                int(self.classes[key])
            for key in ("d", "q"):
                int(self.degrees[key])
            for key in ("e", "w", "l"):
                int(self.cluster[key])
            if not 0.0 <= float(self.loss) <= 1.0:
                raise SchemaError("loss must be a probability")
            if self.neighborhood is not None and len(self.neighborhood) != self.vehicles:
                raise SchemaError("neighborhood needs one list per vehicle")
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(str(exc)) from exc
        if not isinstance(self.script, list):
            raise SchemaError("script must be a list")
        for i, ev in enumerate(self.script):
            if not isinstance(ev, dict) or "op" not in ev or "at" not in ev:
                raise SchemaError(f"script[{i}] needs 'op' and 'at'")
            if ev["op"] not in OPS:
                raise SchemaError(f"script[{i}]: unknown op {ev['op']!r}")
            for key in ("vehicle", "vehicles", "sponsors"):
                refs = ev.get(key)
                refs = refs if isinstance(refs, list) else [] if refs is None else [refs]
                for r in refs:
                    if not isinstance(r, int) or not 0 <= r < self.vehicles:
                        raise SchemaError(f"script[{i}]: vehicle {r!r} does not exist")
            if ev["op"] == "collude":
                size = int(ev.get("size", 0))
                if size > self.vehicles:
                    raise SchemaError(f"script[{i}]: coalition larger than the fleet")
                if size > self.n_prime_value and not self.assumption_violating:
                    raise SchemaError(f"script[{i}]: coalition of {size} exceeds n' = {self.n_prime_value}; "
                                      "mark the scenario assumption_violating")


@dataclass
class Metrics:
    verifications: int = 0
    accepts: int = 0
    rejects: dict = field(default_factory=dict)
    broadcasts: int = 0
    forge_trials: int = 0
    forge_verifications: int = 0
    forge_accepts: int = 0
    reuse_verifications: int = 0
    reuse_accepts: int = 0
    tamper_verifications: int = 0
    tamper_integrity: int = 0
    replay_within: int = 0
    replay_detected: int = 0
    replay_across: int = 0
    replay_across_integrity: int = 0
    identifications: int = 0
    identify_success: int = 0
    identify_ambiguous: int = 0
    token_updates: int = 0
    token_converged: int = 0
    clusters_formed: int = 0
    joins: int = 0
    collusions: list = field(default_factory=list)
    sender_ops: dict = field(default_factory=dict)
    receiver_ops: dict = field(default_factory=dict)
    token_ops: dict = field(default_factory=dict)
    t_updates: int = 0

    @property
    def forge_pass_rate(self) -> float:
        return self.forge_accepts / self.forge_verifications if self.forge_verifications else 0.0

    def record(self, verdict: Verdict) -> None:
        self.verifications += 1
        if verdict.accepted:
            self.accepts += 1
        else:
            key = verdict.reason.value
            self.rejects[key] = self.rejects.get(key, 0) + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["forge_pass_rate"] = self.forge_pass_rate
        d["rejects"] = dict(sorted(self.rejects.items()))
        return d


def _hex(x: int) -> str:
    return hex(x)


class Simulation:
    """World state plus the event loop; everything is driven by one seeded rng."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        cls, deg = scenario.classes, scenario.degrees
        self.params = setup(int(cls["u"]), int(cls["b"]), int(cls["prime_bits"]), int(deg["d"]), int(deg["q"]),
                            scenario.resolved_family, seed=scenario.seed, profile=Profile(scenario.profile),
                            gamma=int(scenario.gamma_ms))
        cl = scenario.cluster
        self.aa = AuthenticationAuthority(self.params, founding_threshold=int(cl["e"]), w=int(cl["w"]),
                                          l=int(cl["l"]), blacklist_mode=scenario.blacklist_mode)
        self.rng = random.Random(f"simnet-{scenario.seed}")
        self.vehicles = [Vehicle(self.aa.provision(f"vehicle-{i}".encode()), f"v{i}")
                         for i in range(scenario.vehicles)]
        self.trace: list[dict] = []
        self.metrics = Metrics()
        self.now = 0
        self.clusters: list[int] = []
        self._expired: set[int] = set()
        self._queue: list = []
        self._seq = 0
        self._msg = 0
        self._t = self.params.secrets.t
        self._sender_ops = OpCounters()
        self._receiver_ops = OpCounters()
        self._honest_sends = 0
        self._receives = 0
        self._token_ops = OpCounters()
        self._token_member_updates = 0

    # plumbing ------------------------------------------------------------

    @property
    def M(self) -> int:
        return self.params.M

    def emit(self, kind: str, **rec) -> None:
        self.trace.append({"type": kind, "time": self.now, **rec})

    def schedule(self, at: int, kind: str, payload: dict) -> None:
        heapq.heappush(self._queue, (int(at), self._seq, kind, payload))
        self._seq += 1

    def current_t(self) -> int:
        return codec.advance_t(self.params.secrets, self.now).t

    def neighbours(self, i: int) -> list[int]:
        if self.sc.neighborhood is not None:
            return [j for j in self.sc.neighborhood[i] if j != i]
        return [j for j in range(len(self.vehicles)) if j != i]

    def _deliver(self, env: Envelope, receivers, sender: str, msg: int, category: str) -> list[Verdict]:
        verdicts = []
        for r in receivers:
            if self.sc.loss and self.rng.random() < self.sc.loss:
                self.emit("lost", receiver=r, msg=msg)
                continue
            v = self.vehicles[r]
            before = v.counters.snapshot()
            verdict = v.verify(env, self.now)
            if category == "honest":
                self._receiver_ops.add(v.counters.since(before))
                self._receives += 1
            self.metrics.record(verdict)
            verdicts.append(verdict)
            self.emit("verdict", receiver=r, sender=sender, msg=msg, category=category,
                      sent_at=env.sent_at, verdict="ACCEPT" if verdict.accepted else "REJECT",
                      reason=None if verdict.accepted else verdict.reason.value)
        return verdicts

    def _next_msg(self) -> int:
        self._msg += 1
        return self._msg

    def _t_boundary(self) -> int:
        s = self.params.secrets
        k = (self.now - s.last_update) // s.gamma + 1
        return s.last_update + k * s.gamma

    # honest traffic --------------------------------------------------------

    def send(self, i: int, payload: bytes, deliver: bool = True) -> tuple[Envelope, int]:
        v = self.vehicles[i]
        before = v.counters.snapshot()
        env = v.broadcast(payload, self.now)
        self._sender_ops.add(v.counters.since(before))
        self._honest_sends += 1
        msg = self._next_msg()
        self.metrics.broadcasts += 1
        self.emit("broadcast", sender=i, msg=msg, payload=payload.hex(), pseudonym=_hex(env.pseudonym),
                  vno=_hex(env.vno))
        if self.sc.audit_identify:
            eno = codec.eno_of(self.current_t(), payload, v.creds.hash_range)
            ident = self.aa.identify(env.pseudonym, eno)
            self.metrics.identifications += 1
            self.metrics.identify_success += ident.tid == v.creds.tid
            self.metrics.identify_ambiguous += ident.ambiguous
            self.emit("identify", msg=msg, ok=ident.tid == v.creds.tid, candidates=len(ident.candidates))
        if deliver:
            self.schedule(self.now + self.sc.latency_ms, "deliver",
                          {"env": env, "receivers": self.neighbours(i), "sender": f"v{i}", "msg": msg,
                           "category": "honest"})
        return env, msg

    def op_broadcast(self, ev):
        self.send(int(ev["vehicle"]), str(ev.get("payload", f"msg-{self._msg}")).encode())

    def op_broadcast_all(self, ev):
        base = str(ev.get("payload", "beacon"))
        for i in range(len(self.vehicles)):
            self.send(i, f"{base}/{i}/{self.now}".encode())

    def op_blacklist(self, ev):
        i = int(ev["vehicle"])
        entry = self.aa.blacklist(self.vehicles[i].creds.tid, ev.get("mode"))
        bad = self.aa.export_bad_list()
        for v in self.vehicles:
            v.load_bad_list(bad)
        self.emit("blacklist", vehicle=i, tid=_hex(entry.tid), mode=entry.mode.value)

    def op_rejoin(self, ev):
        i = int(ev["vehicle"])
        v = self.vehicles[i]
        creds = self.aa.rejoin(self.aa.bad[v.creds.tid])
        old = v.creds.tid
        v.reprovision(creds)
        self.emit("rejoin", vehicle=i, old_tid=_hex(old), tid=_hex(creds.tid))

    # clusters --------------------------------------------------------------

    def op_form_cluster(self, ev):
        t = self.current_t()
        members = [int(x) for x in ev["vehicles"]]
        try:
            state = self.aa.form_cluster([self.vehicles[i].make_cfm(t) for i in members], t)
        except V2VError as exc:
            self.emit("cluster_error", op="form", error=type(exc).__name__, detail=str(exc))
            return
        self.clusters.append(state.cluster_id)
        self.metrics.clusters_formed += 1
        self.emit("cluster_formed", cluster=len(self.clusters) - 1, cluster_id=_hex(state.cluster_id),
                  founders=members)
        # founders obtain their Q-sets; the first w of them bootstrap the token together
        joined = []
        for i in members:
            v = self.vehicles[i]
            q = self.aa.issue_membership(v.make_cfm(t), state.cluster_id, t)
            rec = v.accept_qset(q, t)
            rec.rand = self.aa.token(state.cluster_id, t)  # founders are seeded directly by the authority
            joined.append(i)
        self.emit("cluster_seeded", cluster=len(self.clusters) - 1, members=joined)

    def op_join_cluster(self, ev):
        idx = int(ev["cluster"])
        cid = self.clusters[idx]
        i = int(ev["vehicle"])
        v = self.vehicles[i]
        t = self.current_t()
        sponsors = [self.vehicles[s] for s in ev.get("sponsors", [])]
        if not sponsors:
            sponsors = [u for u in self.vehicles if u is not v and cid in u.clusters][: self.aa.w - 1]
        try:
            q = self.aa.issue_membership(v.make_cfm(t), cid, t)
            rec = v.join_cluster(q, sponsors, self.now)
        except V2VError as exc:
            self.emit("join", cluster=idx, vehicle=i, ok=False, error=getattr(exc, "reason", type(exc).__name__))
            return
        ok = rec.rand == self.aa.token(cid, t)
        self.metrics.joins += 1
        self.emit("join", cluster=idx, vehicle=i, ok=ok)

    def op_dissolve_vote(self, ev):
        idx = int(ev["cluster"])
        cid = self.clusters[idx]
        i = int(ev["vehicle"])
        try:
            alive = self.aa.dissolution_vote(cid, self.vehicles[i].creds.tid, ev.get("kind", "vote"))
        except ProtocolError as exc:
            self.emit("dissolve_vote", cluster=idx, vehicle=i, accepted=False, detail=str(exc))
            return
        self.emit("dissolve_vote", cluster=idx, vehicle=i, accepted=True, alive=alive)

    def on_t_update(self):
        t = self.current_t()
        self.metrics.t_updates += 1
        self.emit("t_update", t=t)
        for v in self.vehicles:
            v.sync(self.now)
        for idx, cid in enumerate(self.clusters):
            state = self.aa.clusters[cid]
            if not state.alive or cid in self._expired:
                continue
            members = [v for v in self.vehicles if cid in v.clusters and v.clusters[cid].rand is not None]
            if not members:
                continue
            sealed = {v.name: v.token_pair(cid, t) for v in members}
            results = {}
            for v in members:
                peers = [blob for name, blob in sealed.items() if name != v.name]
                before = v.counters.snapshot()
                try:
                    results[v.name] = v.update_token(cid, peers, t)
                except V2VError as exc:
                    results[v.name] = type(exc).__name__
                else:
                    self._token_ops.add(v.counters.since(before))
                    self._token_member_updates += 1
            self.metrics.token_updates += 1
            try:
                expected = self.aa.token(cid, t) if self.aa.epoch_of(state, t) else None
            except V2VError:
                expected = None
            converged = expected is not None and all(r == expected for r in results.values())
            self.metrics.token_converged += converged
            errors = sorted({r for r in results.values() if isinstance(r, str)})
            self.emit("token_update", cluster=idx, members=len(members), converged=converged, errors=errors)
            if "LifetimeError" in errors:
                self._expired.add(cid)
                self.emit("cluster_expired", cluster=idx)

    # adversaries -----------------------------------------------------------

    def honest_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.vehicles) if v.creds.tid not in self.aa.bad]

    def adversary_forge(self, trials: int, receivers=None) -> float:
        """External actor holding t: random pseudonyms with a self-consistent vno.

        By default each forgery goes to one verifier, so every verdict is an
        independent Bernoulli trial; ``receivers="all"`` floods every honest
        vehicle instead.
        """
        if receivers is None:
            receivers = self.honest_indices()[:1]
        elif receivers == "all":
            receivers = self.honest_indices()
        t = self.current_t()
        before = self.metrics.forge_accepts, self.metrics.forge_verifications
        for k in range(trials):
            payload = f"forged/{self.now}/{k}".encode()
            pseudo = self.rng.randrange(self.M)
            env = Envelope(payload, pseudo, codec.vno_of(t, payload, pseudo, self.M), self.now)
            msg = self._next_msg()
            verdicts = self._deliver(env, receivers, "external", msg, "forge")
            self.metrics.forge_trials += 1
            self.metrics.forge_verifications += len(verdicts)
            self.metrics.forge_accepts += sum(v.accepted for v in verdicts)
        acc = self.metrics.forge_accepts - before[0]
        ver = self.metrics.forge_verifications - before[1]
        return acc / ver if ver else 0.0

    def adversary_reuse(self, trials: int, insider: int = 0, recompute_vno: bool = True) -> int:
        """Insider attaches the pseudonym of one message to a different message."""
        v = self.vehicles[insider]
        t = self.current_t()
        receivers = [r for r in self.neighbours(insider) if r in self.honest_indices()]
        accepted = 0
        for k in range(trials):
            original = v.broadcast(f"orig/{self.now}/{k}".encode(), self.now)
            forged_payload = f"reused/{self.now}/{k}".encode()
            vno = codec.vno_of(t, forged_payload, original.pseudonym, self.M) if recompute_vno else original.vno
            env = Envelope(forged_payload, original.pseudonym, vno, self.now)
            verdicts = self._deliver(env, receivers, f"v{insider}", self._next_msg(), "reuse")
            self.metrics.reuse_verifications += len(verdicts)
            got = sum(x.accepted for x in verdicts)
            self.metrics.reuse_accepts += got
            accepted += got
        return accepted

    def adversary_tamper(self, trials: int, sender: int = 0) -> int:
        """Flip one payload bit of an honest envelope in flight."""
        receivers = self.neighbours(sender)
        hits = 0
        for k in range(trials):
            env = self.vehicles[sender].broadcast(f"tamper/{self.now}/{k}".encode(), self.now)
            data = bytearray(env.payload)
            bit = self.rng.randrange(len(data) * 8)
            data[bit // 8] ^= 1 << (bit % 8)
            bad = Envelope(bytes(data), env.pseudonym, env.vno, env.sent_at)
            verdicts = self._deliver(bad, receivers, f"v{sender}", self._next_msg(), "tamper")
            self.metrics.tamper_verifications += len(verdicts)
            n = sum(x.reason is Reason.INTEGRITY for x in verdicts)
            self.metrics.tamper_integrity += n
            hits += n
        return hits

    def adversary_replay(self, trials: int) -> list:
        """Capture honest envelopes, replay them now, and again after the next t update."""
        honest = self.honest_indices()
        captured = []
        for k in range(trials):
            s = honest[k % len(honest)]
            r = [x for x in self.neighbours(s) if x in honest][k % max(1, len(honest) - 1)]
            env = self.vehicles[s].broadcast(f"replay/{self.now}/{k}".encode(), self.now)
            first = self._deliver(env, [r], f"v{s}", self._next_msg(), "replay-original")
            again = self._deliver(env, [r], f"v{s}", self._next_msg(), "replay")
            if first and first[0].accepted and again:
                self.metrics.replay_within += 1
                self.metrics.replay_detected += again[0].reason is Reason.REPLAY
            captured.append((s, r, env))
        self.schedule(self._t_boundary(), "replay_late", {"captured": captured})
        return captured

    def replay_late(self, captured) -> None:
        for s, r, env in captured:
            verdicts = self._deliver(env, [r], f"v{s}", self._next_msg(), "replay-late")
            if verdicts:
                self.metrics.replay_across += 1
                self.metrics.replay_across_integrity += verdicts[0].reason is Reason.INTEGRITY

    def adversary_collude(self, size: int, target: int | None = None) -> dict:
        """Pool ``size`` shares and interpolate P(x, y) row by row modulo M.

        The coalition works modulo M without knowing its factors, so it
        needs the pairwise tid differences to be invertible.  With at least
        d members of a GENERIC world the reconstruction is exact, which lets
        the coalition link any later pseudonym to a tid it knows.
        """
        P = self.params.poly
        result = {"size": size, "d": P.x_terms, "family": P.family.value, "reconstructed": False,
                  "linked": False, "detail": ""}
        coalition = list(range(size))
        if P.family is not Family.GENERIC:
            result["detail"] = "collusion reconstruction implemented for the generic family only"
        else:
            tids = [self.vehicles[i].creds.tid for i in coalition]
            shares = [self.vehicles[i].creds.share for i in coalition]
            try:
                guess = _reconstruct(tids, shares, self.M, P.y_terms)
            except ValueError as exc:
                result["detail"] = str(exc)
            else:
                rows = max(len(guess.coeffs), P.x_terms)
                pad = lambda cs: [tuple(r) for r in cs] + [(0,) * P.y_terms] * (rows - len(cs))  # noqa: E731
                result["reconstructed"] = pad(guess.coeffs) == pad(P.coeffs)
                tgt = target if target is not None else len(self.vehicles) - 1
                if tgt not in coalition:
                    tv = self.vehicles[tgt]
                    payload = b"collude-target"
                    env = tv.broadcast(payload, self.now)
                    eno = codec.eno_of(self.current_t(), payload, tv.creds.hash_range)
                    result["linked"] = eval_bi(guess, tv.creds.tid, eno) == env.pseudonym
        self.metrics.collusions.append(result)
        self.emit("collude", **result)
        return result

    def op_forge(self, ev):
        rate = self.adversary_forge(int(ev.get("trials", 100)), ev.get("receivers"))
        self.emit("attack", name="forge", pass_rate=rate)

    def op_reuse(self, ev):
        got = self.adversary_reuse(int(ev.get("trials", 10)), int(ev.get("vehicle", 0)),
                                   bool(ev.get("recompute_vno", True)))
        self.emit("attack", name="reuse", accepted=got)

    def op_replay(self, ev):
        self.adversary_replay(int(ev.get("trials", 10)))

    def op_tamper(self, ev):
        self.emit("attack", name="tamper", integrity=self.adversary_tamper(int(ev.get("trials", 10)),
                                                                              int(ev.get("vehicle", 0))))

    def op_collude(self, ev):
        self.adversary_collude(int(ev["size"]), ev.get("target"))

    # loop --------------------------------------------------------------------

    def run(self) -> tuple[list[dict], Metrics]:
        for ev in self.sc.script:
            self.schedule(int(ev["at"]), "script", ev)
        end = max([int(self.sc.duration_ms)] + [int(ev["at"]) for ev in self.sc.script]) if self.sc.script else -1
        # t boundaries inside the run
        s = self.params.secrets
        b = s.last_update + s.gamma
        while b <= end:
            self.schedule(b, "t_update", {})
            b += s.gamma
        while self._queue:
            at, _, kind, payload = heapq.heappop(self._queue)
            self.now = at
            if kind == "script":
                getattr(self, "op_" + payload["op"])(payload)
            elif kind == "deliver":
                self._deliver(payload["env"], payload["receivers"], payload["sender"], payload["msg"],
                              payload["category"])
            elif kind == "t_update":
                self.on_t_update()
            elif kind == "replay_late":
                self.replay_late(payload["captured"])
        self.metrics.sender_ops = _per(self._sender_ops, self._honest_sends)
        self.metrics.receiver_ops = _per(self._receiver_ops, self._receives)
        self.metrics.token_ops = _per(self._token_ops, self._token_member_updates)
        return self.trace, self.metrics


def _per(total: OpCounters, n: int) -> dict:
    d = total.as_dict()
    d["count"] = n
    return d


def _reconstruct(tids: list[int], shares, M: int, q: int) -> BiPoly:
    """Lagrange in x, coefficientwise in y, modulo the composite M."""
    n = len(tids)
    # coefficients of each Lagrange basis polynomial in x
    rows = [[0] * q for _ in range(n)]
    for i, xi in enumerate(tids):
        basis = [1]
        denom = 1
        for j, xj in enumerate(tids):
            if i == j:
                continue
            basis = [(a - xj * b) % M for a, b in zip([0] + basis, basis + [0])]
            denom = denom * (xi - xj) % M
        if math.gcd(denom, M) != 1:
            raise ValueError("coalition tid differences are not invertible modulo M")
        inv = pow(denom, -1, M)
        coeffs = shares[i].padded(q)
        for a, ba in enumerate(basis):
            for bdeg in range(q):
                rows[a][bdeg] = (rows[a][bdeg] + ba * inv * coeffs[bdeg]) % M
    return BiPoly(tuple(tuple(r) for r in rows), M, Family.GENERIC)


def run(scenario: Scenario | dict) -> tuple[list[dict], Metrics]:
    if isinstance(scenario, dict):
        scenario = Scenario.from_dict(scenario)
    return Simulation(scenario).run()


def dump_trace(trace: list[dict], scenario: Scenario | None = None) -> str:
    """JSON lines; with a scenario the first line is a header that allows re-running."""
    lines = [json.dumps(rec, sort_keys=True, default=str) for rec in trace]
    if scenario is not None:
        lines.insert(0, json.dumps({"type": "header", "scenario": scenario.to_dict()}, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def load_trace(text: str) -> list[dict]:
    """Parse a dumped trace; the header record stays first."""
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"trace line {n}: {exc}") from exc
    if not out or out[0].get("type") != "header":
        raise SchemaError("trace must start with a header record")
    return out


def reverify(trace: list[dict]) -> list[tuple[int, dict, dict]]:
    """Re-run the scenario in a trace header; return every mismatching record."""
    scenario = Scenario.from_dict(trace[0]["scenario"])
    fresh, _ = run(scenario)
    again = load_trace(dump_trace(fresh, scenario))
    mismatches = []
    for k in range(max(len(trace), len(again))):
        a = trace[k] if k < len(trace) else {}
        b = again[k] if k < len(again) else {}
        if a != b:
            mismatches.append((k, a, b))
    return mismatches
