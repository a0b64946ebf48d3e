"""
Numeric SRP-3 over a prime field.

  q    prime modulus, all group math is done modulo q
  g    generator
  s    salt
  P    cleartext password
  x    private key, H(s, P) reduced mod q-1
  v    verifier, g^x mod q
  a,b  secret ephemeral exponents
  A    g^a
  B    v + g^b mod q
  u    random scrambling parameter chosen by the server
  K    session key, H(g^(b(a + ux)))
  M1   H(A, B, K), sent by the client
  M2   H(A, M1, K), sent by the server
"""
import hashlib
import logging
import random
import string
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from tqdm import tqdm

logger = logging.getLogger(__name__)

# RFC 5054 2048-bit group
RFC5054_2048_HEX = (
    "AC6BDB41324A9A9BF166DE5E1389582FAF72B6651987EE07FC3192943DB56050A37329CBB4"
    "A099ED8193E0757767A13DD52312AB4B03310DCD7F48A9DA04FD50E8083969EDB767B0CF60"
    "95179A163AB3661A05FBD5FAAAE82918A9962F0B93B855F97993EC975EEAA80D740ADBF4FF"
    "747359D041D5C33EA71D281E446B14773BCA97B43A23FB801676BD207A436C6481F1D2B907"
    "8717461A5B9D32E688F87748544523B524B0D57D5EA77A2775D2ECFA032CFBDBF52FB37861"
    "60279004E57AE6AF874E7303CE53299CCC041C7BC308D82A5698F3A8D0C38271AE35F8E9DB"
    "FBB694B5C803D89F7AE435DE236D525F54759B65E372FCD68EF20FA7111F9E4AFF73"
)

SALT_BYTES = 16
DEFAULT_PROFILE = "test"
TAMPER_FIELDS = ("A", "B", "M1", "M2")


class SRPError(Exception):
    """Base class for SRP-3 reference errors."""


class RegistrationError(SRPError):
    pass


class SRPAbort(SRPError):
    """A party refused to continue the run."""

    def __init__(self, side: str, reason: str):
        super().__init__(f"{side} aborted: {reason}")
        self.side = side
        self.reason = reason


@dataclass(frozen=True)
class GroupParams:
    name: str
    q: int
    g: int

    @property
    def order(self) -> int:
        return self.q - 1

    def exp(self, base: int, e: int) -> int:
        return pow(base, e % self.order, self.q)


GROUP_PROFILES: Dict[str, GroupParams] = {
    "toy": GroupParams("toy", 23, 5),
    "test": GroupParams("test", 2 ** 61 - 1, 37),
    "rfc5054-2048": GroupParams("rfc5054-2048", int(RFC5054_2048_HEX, 16), 2),
}


def get_profile(name: str) -> GroupParams:
    try:
        return GROUP_PROFILES[name]
    except KeyError:
        raise SRPError(f"unknown group profile {name!r}; expected one of {', '.join(GROUP_PROFILES)}") from None


# ---------------------------------------------------------------------------
# Hashing
# ---------------------------------------------------------------------------

def _encode(value) -> bytes:
    if isinstance(value, bool):
        raise TypeError("booleans are not hashable protocol values")
    if isinstance(value, int):
        tag, body = b"i", value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")
    elif isinstance(value, bytes):
        tag, body = b"b", value
    elif isinstance(value, str):
        tag, body = b"s", value.encode("utf-8")
    else:
        raise TypeError(f"cannot hash value of type {type(value).__name__}")
    return tag + len(body).to_bytes(4, "big") + body


def hash_values(*values) -> bytes:
    """SHA-256 over the length-prefixed encodings of the values."""
    h = hashlib.sha256()
    for value in values:
        h.update(_encode(value))
    return h.digest()


def _nonzero_exponent(group: GroupParams, label: str, *values) -> int:
    e = int.from_bytes(hash_values(*values), "big") % group.order
    counter = 0
    while e == 0:
        counter += 1
        e = int.from_bytes(hash_values(label, counter, *values), "big") % group.order
    return e


def derive_x(group: GroupParams, salt: bytes, password: str) -> int:
    return _nonzero_exponent(group, "srp3-x", salt, password)


def compute_verifier(group: GroupParams, x: int) -> int:
    if x % group.order == 0:
        raise RegistrationError("private key exponent is zero")
    return group.exp(group.g, x)


# ---------------------------------------------------------------------------
# Secrets and records
# ---------------------------------------------------------------------------

class SecretVault:
    """Holds a client's secrets and counts every read of them."""

    def __init__(self, password: str):
        self._password = password
        self._x: Optional[int] = None
        self._a: Optional[int] = None
        self.reads = 0

    @property
    def password(self) -> str:
        self.reads += 1
        return self._password

    @property
    def x(self) -> Optional[int]:
        self.reads += 1
        return self._x

    @x.setter
    def x(self, value: int):
        self._x = value

    @property
    def a(self) -> Optional[int]:
        self.reads += 1
        return self._a

    @a.setter
    def a(self, value: int):
        self._a = value


@dataclass(frozen=True)
class ServerRecord:
    client_id: str
    salt: bytes
    verifier: int


@dataclass(frozen=True)
class Registration:
    salt: bytes
    x: int
    verifier: int

    def record(self, client_id: str) -> ServerRecord:
        return ServerRecord(client_id, self.salt, self.verifier)


def register(password: str, group: GroupParams, rng: random.Random, salt: Optional[bytes] = None) -> Registration:
    """Salt, private key and verifier for a password."""
    if not password:
        raise RegistrationError("password must not be empty")
    if salt is None:
        salt = bytes(rng.getrandbits(8) for _ in range(SALT_BYTES))
    x = derive_x(group, salt, password)
    return Registration(salt, x, compute_verifier(group, x))


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------

def _random_exponent(group: GroupParams, rng: random.Random) -> int:
    return rng.randrange(1, group.order)


def _check_element(group: GroupParams, value: int, side: str, label: str):
    if not 1 <= value < group.q:
        raise SRPAbort(side, f"{label} outside [1, q-1]")


def client_key(group: GroupParams, B: int, v: int, a: int, u: int, x: int) -> bytes:
    """H(((B - v) mod q)^(a + ux) mod q)"""
    base = (B - v) % group.q
    return hash_values(group.exp(base, a + u * x))


def server_key(group: GroupParams, A: int, v: int, u: int, b: int) -> bytes:
    """H((A * v^u)^b mod q)"""
    base = A * group.exp(v, u) % group.q
    return hash_values(group.exp(base, b))


def client_proof(A: int, B: int, key: bytes) -> bytes:
    return hash_values(A, B, key)


def server_proof(A: int, m1: bytes, key: bytes) -> bytes:
    return hash_values(A, m1, key)


class ClientSession:
    side = "client"

    def __init__(self, group: GroupParams, client_id: str, vault: SecretVault):
        self.group = group
        self.client_id = client_id
        self.vault = vault
        self.A: Optional[int] = None
        self.B: Optional[int] = None
        self.key: Optional[bytes] = None
        self.m1: Optional[bytes] = None

    def start(self, rng: random.Random, a: Optional[int] = None) -> int:
        self.vault.a = a if a is not None else _random_exponent(self.group, rng)
        self.A = self.group.exp(self.group.g, self.vault.a)
        return self.A

    def receive_challenge(self, salt: bytes, B: int, u: int, x: Optional[int] = None) -> bytes:
        """Phase I on the client: compute K from the server's challenge and return M1."""
        _check_element(self.group, B, self.side, "B")
        if u % self.group.order == 0:
            raise SRPAbort(self.side, "scrambling parameter is zero")
        if x is None:
            x = derive_x(self.group, salt, self.vault.password)
        self.vault.x = x
        v = compute_verifier(self.group, x)
        if (B - v) % self.group.q == 0:
            raise SRPAbort(self.side, "B - v is zero")
        self.B = B
        self.key = client_key(self.group, B, v, self.vault.a, u, self.vault.x)
        self.m1 = client_proof(self.A, B, self.key)
        return self.m1

    def verify_server(self, m2: bytes) -> bool:
        return m2 == server_proof(self.A, self.m1, self.key)


class ServerSession:
    side = "server"

    def __init__(self, group: GroupParams, record: ServerRecord):
        self.group = group
        self.record = record
        self.A: Optional[int] = None
        self.B: Optional[int] = None
        self.b: Optional[int] = None
        self.u: Optional[int] = None
        self.key: Optional[bytes] = None

    def _fresh(self, rng: random.Random) -> Tuple[int, int]:
        while True:
            b = _random_exponent(self.group, rng)
            u = _random_exponent(self.group, rng)
            if b != u and (self.record.verifier + self.group.exp(self.group.g, b)) % self.group.q != 0:
                return b, u

    def respond(self, A: int, rng: random.Random, b: Optional[int] = None,
                u: Optional[int] = None) -> Tuple[bytes, int, int]:
        """Phase I on the server: salt, B and u for a received A."""
        _check_element(self.group, A, self.side, "A")
        if b is None or u is None:
            fresh_b, fresh_u = self._fresh(rng)
            b = fresh_b if b is None else b
            u = fresh_u if u is None else u
        if u % self.group.order == 0:
            raise SRPAbort(self.side, "scrambling parameter is zero")
        if b == u:
            raise SRPAbort(self.side, "b equals u")
        B = (self.record.verifier + self.group.exp(self.group.g, b)) % self.group.q
        if B == 0:
            raise SRPAbort(self.side, "B is zero")
        self.A, self.B, self.b, self.u = A, B, b, u
        self.key = server_key(self.group, A, self.record.verifier, u, b)
        logger.debug(f"server session for {self.record.client_id}: B={B:x} u={u:x}")
        return self.record.salt, B, u

    def verify_client(self, m1: bytes) -> Optional[bytes]:
        """M2 when M1 checks out, None otherwise."""
        if m1 != client_proof(self.A, self.B, self.key):
            return None
        return server_proof(self.A, m1, self.key)


# ---------------------------------------------------------------------------
# Transcripts
# ---------------------------------------------------------------------------

@dataclass
class Transcript:
    client_id: str
    salt: bytes
    A: int
    B: int
    u: int
    m1: bytes
    m2: Optional[bytes]
    verdict: str
    client_absent: bool = False

    @property
    def accepted(self) -> bool:
        return self.verdict == "accept"

    def to_text(self) -> str:
        lines = [
            f"I {self.client_id.encode('utf-8').hex()}",
            f"s {self.salt.hex()}",
            f"A {self.A:x}",
            f"B {self.B:x} u {self.u:x}",
            f"M1 {self.m1.hex()}",
            f"M2 {self.m2.hex() if self.m2 is not None else '-'}",
            f"verdict {self.verdict}",
            f"client-absent {'yes' if self.client_absent else 'no'}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Transcript":
        fields = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            parts = line.split()
            fields[parts[0]] = parts[1:]
        try:
            b_line = fields["B"]
            if len(b_line) != 3 or b_line[1] != "u":
                raise ValueError("malformed B line")
            m2 = fields["M2"][0]
            return cls(
                client_id=bytes.fromhex(fields["I"][0]).decode("utf-8"),
                salt=bytes.fromhex(fields["s"][0]),
                A=int(fields["A"][0], 16),
                B=int(b_line[0], 16),
                u=int(b_line[2], 16),
                m1=bytes.fromhex(fields["M1"][0]),
                m2=None if m2 == "-" else bytes.fromhex(m2),
                verdict=fields["verdict"][0],
                client_absent=fields["client-absent"][0] == "yes",
            )
        except (KeyError, IndexError, ValueError) as exc:
            raise SRPError(f"malformed transcript: {exc}") from exc


@dataclass
class HandshakeResult:
    transcript: Transcript
    client_key: Optional[bytes]
    server_key: Optional[bytes]

    @property
    def keys_agree(self) -> bool:
        return self.client_key is not None and self.client_key == self.server_key


def _flip_int(value: int, group: GroupParams, rng: random.Random) -> int:
    return value ^ (1 << rng.randrange(group.q.bit_length()))


def _flip_bytes(value: bytes, rng: random.Random) -> bytes:
    bit = rng.randrange(len(value) * 8)
    out = bytearray(value)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


def run_handshake(group: GroupParams, password: str, rng: random.Random, client_id: str = "alice",
                  tamper: Optional[str] = None, registration: Optional[Registration] = None,
                  a: Optional[int] = None, b: Optional[int] = None, u: Optional[int] = None) -> HandshakeResult:
    """One complete run. `tamper` names a wire field whose bit the network flips."""
    if tamper is not None and tamper not in TAMPER_FIELDS:
        raise SRPError(f"unknown tamper field {tamper!r}; expected one of {', '.join(TAMPER_FIELDS)}")
    if registration is None:
        registration = register(password, group, rng)
    vault = SecretVault(password)
    client = ClientSession(group, client_id, vault)
    server = ServerSession(group, registration.record(client_id))

    A = client.start(rng, a)
    A_wire = _flip_int(A, group, rng) if tamper == "A" else A
    salt, B, u_wire, m1, m2 = registration.salt, 0, 0, b"", None
    verdict = "accept"
    try:
        salt, B, u_wire = server.respond(A_wire, rng, b, u)
        B_wire = _flip_int(B, group, rng) if tamper == "B" else B
        m1 = client.receive_challenge(salt, B_wire, u_wire)
        m1_wire = _flip_bytes(m1, rng) if tamper == "M1" else m1
        m2 = server.verify_client(m1_wire)
        if m2 is None:
            verdict = "reject-M1"
        else:
            m2_wire = _flip_bytes(m2, rng) if tamper == "M2" else m2
            if not client.verify_server(m2_wire):
                verdict = "reject-M2"
            m2 = m2_wire
    except SRPAbort as exc:
        logger.debug(f"handshake aborted: {exc}")
        verdict = f"abort-{exc.side}"
    transcript = Transcript(client_id, salt, A_wire, B, u_wire, m1, m2, verdict)
    return HandshakeResult(transcript, client.key, server.key)


def malicious_server_transcript(record: ServerRecord, group: GroupParams, rng: random.Random,
                                a: Optional[int] = None, b: Optional[int] = None,
                                u: Optional[int] = None,
                                client: Optional[ClientSession] = None) -> Transcript:
    """
    A full accepted session fabricated from the server's record alone.

    The forger plays both ends and derives K the way an honest server does;
    the honest server logic it talks to accepts the run. `client` is the
    victim's session; the forger holds it but takes nothing from it.
    """
    if client is not None:
        logger.debug(f"Forging a session for {client.client_id} without its secrets")
    a = a if a is not None else _random_exponent(group, rng)
    A = group.exp(group.g, a)
    honest = ServerSession(group, record)
    if b is None or u is None:
        fresh_b, fresh_u = honest._fresh(rng)
        b = fresh_b if b is None else b
        u = fresh_u if u is None else u
    salt, B, u = honest.respond(A, rng, b, u)
    key = server_key(group, A, record.verifier, u, b)
    m1 = client_proof(A, B, key)
    m2 = honest.verify_client(m1)
    if m2 is None or m2 != server_proof(A, m1, key):
        verdict = "reject-M1" if m2 is None else "reject-M2"
    else:
        verdict = "accept"
    return Transcript(record.client_id, salt, A, B, u, m1, m2, verdict, client_absent=True)


def replay_transcript(transcript: Transcript, record: ServerRecord, group: GroupParams, b: int) -> bool:
    """Feed a transcript's messages to an honest server that drew the same b and u."""
    server = ServerSession(group, record)
    server.respond(transcript.A, random.Random(0), b, transcript.u)
    return server.verify_client(transcript.m1) == transcript.m2


# ---------------------------------------------------------------------------
# Randomized trials
# ---------------------------------------------------------------------------

@dataclass
class TrialSummary:
    name: str
    trials: int
    passed: int = 0
    secret_reads: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.trials and not self.failures


def random_password(rng: random.Random, length: int = 12) -> str:
    return "".join(rng.choice(string.ascii_letters + string.digits) for _ in range(length))


def run_key_agreement_trials(group: GroupParams, trials: int = 1000, seed: int = 0,
                             progress: bool = True) -> TrialSummary:
    """Honest runs: keys must agree and both proofs must verify."""
    rng = random.Random(seed)
    summary = TrialSummary("key-agreement", trials)
    for i in tqdm(range(trials), desc="key agreement", disable=not progress):
        result = run_handshake(group, random_password(rng), rng)
        if result.keys_agree and result.transcript.accepted:
            summary.passed += 1
        else:
            summary.failures.append(f"trial {i}: verdict {result.transcript.verdict}")
    logger.info(f"key agreement: {summary.passed}/{trials} runs agreed")
    return summary


Forger = Callable[..., Transcript]


def run_malserver_trials(group: GroupParams, trials: int = 1000, seed: int = 0,
                         progress: bool = True, forge: Forger = malicious_server_transcript) -> TrialSummary:
    """Forged sessions: all must be accepted without reading a client secret."""
    rng = random.Random(seed)
    summary = TrialSummary("malserver", trials)
    for i in tqdm(range(trials), desc="malicious server", disable=not progress):
        vault = SecretVault(random_password(rng))
        registration = register(vault.password, group, rng)
        victim = ClientSession(group, f"client-{i}", vault)
        baseline = vault.reads
        transcript = forge(registration.record(victim.client_id), group, rng, client=victim)
        summary.secret_reads += vault.reads - baseline
        if transcript.accepted:
            summary.passed += 1
        else:
            summary.failures.append(f"trial {i}: verdict {transcript.verdict}")
    if summary.secret_reads:
        summary.failures.append(f"{summary.secret_reads} client secret read(s) during forgery")
    logger.info(f"malicious server: {summary.passed}/{trials} forged sessions accepted")
    return summary


def run_tamper_trials(group: GroupParams, tamper: str, trials: int = 1000, seed: int = 0,
                      progress: bool = True) -> TrialSummary:
    """Runs with one flipped bit in `tamper`; a pass is a rejection."""
    rng = random.Random(seed)
    summary = TrialSummary(f"tamper-{tamper}", trials)
    for _ in tqdm(range(trials), desc=f"tamper {tamper}", disable=not progress):
        result = run_handshake(group, random_password(rng), rng, tamper=tamper)
        if not result.transcript.accepted:
            summary.passed += 1
    logger.info(f"tamper {tamper}: {summary.passed}/{trials} runs rejected")
    return summary
