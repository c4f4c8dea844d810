import hashlib

# Stage names fanned out from the single run seed
STAGES = ("split", "init", "shuffle", "synth", "latency")


def derive_seed(seed: int, stage: str) -> int:
    """Per-stage seed: first 8 bytes of sha256("{seed}:{stage}"), big-endian."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
