"""Counter-based seed derivation.

Every random choice in the package is a pure function of a 64-bit key and a
64-bit counter, mixed with the SplitMix64 finalizer:

    stream_key(master, tag)        = mix64(master ^ fnv1a64(tag))
    derive_seed(master, tag, i)    = mix64(stream_key(master, tag) + (i + 1) * GOLDEN)
    uniform                        = (derive_seed(...) >> 11) * 2**-53

All arithmetic is modulo 2**64, so results are identical on every platform and
independent of the order in which sites are filled.
"""
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

# Stream tags used by the samplers.  Changing one changes every sampled field.
TAG_OMEGA_COMPONENT = "omega.component"
TAG_OMEGA_VALUE = "omega.value"
TAG_ALPHA = "alpha"
TAG_PAIR = "pair"
TAG_MARK_COMPONENT = "mark.component"
TAG_MARK_VALUE = "mark.value"
TAG_WALKER = "walker"
TAG_REPLICA = "replica"
TAG_WEB_IN_NET = "web-in-net"


def fnv1a64(tag):
    h = _FNV_OFFSET
    for byte in tag.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & MASK64
    return h


def mix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(master, tag):
    return mix64((int(master) & MASK64) ^ fnv1a64(tag))


def derive_seed(master, stream_tag, index):
    """Deterministic 64-bit seed for item ``index`` of stream ``stream_tag``."""
    key = stream_key(master, stream_tag)
    return mix64(key + ((int(index) + 1) & MASK64) * GOLDEN)


def to_unit(h):
    return (int(h) >> 11) * (1.0 / 9007199254740992.0)


def replica_seeds(master, replicas, start=0):
    """Seeds of replicas ``start .. start+replicas-1`` as a uint64 array."""
    return derive_seeds(master, TAG_REPLICA, np.arange(start, start + replicas))


# vectorized forms ---------------------------------------------------------

def mix64_array(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def hash_counters(key, counters):
    """mix64(key + (counter + 1) * GOLDEN) elementwise."""
    c = np.asarray(counters, dtype=np.uint64)
    return mix64_array(np.uint64(key) + (c + np.uint64(1)) * np.uint64(GOLDEN))


def unit_array(h):
    return (np.asarray(h, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * (
        1.0 / 9007199254740992.0
    )


def uniforms(key, counters):
    return unit_array(hash_counters(key, counters))


def derive_seeds(master, stream_tag, indices):
    idx = np.asarray(indices, dtype=np.int64).astype(np.uint64)
    return hash_counters(stream_key(master, stream_tag), idx)


def site_counters(x, t):
    """Counter identifying lattice site (x, t); window independent."""
    x = np.asarray(x, dtype=np.int64).astype(np.uint64) & np.uint64(0xFFFFFFFF)
    t = np.asarray(t, dtype=np.int64).astype(np.uint64) & np.uint64(0xFFFFFFFF)
    return (t << np.uint64(32)) | x


def site_counter(x, t):
    return ((int(t) & 0xFFFFFFFF) << 32) | (int(x) & 0xFFFFFFFF)
