# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled exchange-graph engine.

Drop-in twin of the pure-Python backend: same classes of bundle witnesses,
same queries, same determinism contract (ascending item scans, layer-complete
breadth-first search, lowest-id target at the shallowest depth).  The test
suite requires the two backends to produce bit-identical results.

Bundles are C 64-bit masks, so this engine handles up to 64 items and
assignment valuations with up to 64 sub-agents; the :func:`Engine` factory
silently hands anything larger to the pure backend.
"""

from cpython.mem cimport PyMem_Malloc, PyMem_Free
from libc.string cimport memset

from .common import NonRedundancyError
from . import pybackend

BACKEND_NAME = "c"

ctypedef unsigned long long u64

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    #define HF_POPCOUNT(x) __builtin_popcountll(x)
    #define HF_CTZ(x) __builtin_ctzll(x)
    #else
    static int HF_POPCOUNT(unsigned long long x)
    { int c = 0; while (x) { x &= x - 1; ++c; } return c; }
    static int HF_CTZ(unsigned long long x)
    { int c = 0; while (!(x & 1ULL)) { x >>= 1; ++c; } return c; }
    #endif
    """
    int HF_POPCOUNT(u64 x) nogil
    int HF_CTZ(u64 x) nogil

cdef u64 _ONE = 1


# -- bundle witnesses --------------------------------------------------------

cdef class _CAgent:
    cdef u64 bundle

    cdef int marginal(self, int g, int exclude) except -1:
        raise NotImplementedError

    cdef int exchange_ok(self, int g_out, int g_in, int exclude) except -1:
        raise NotImplementedError

    cdef int add(self, int g) except -1:
        raise NotImplementedError

    cdef int remove(self, int g) except -1:
        raise NotImplementedError


cdef class _CBinary(_CAgent):
    cdef u64 approved

    def __cinit__(self, approved):
        self.approved = approved
        self.bundle = 0

    cdef int marginal(self, int g, int exclude) except -1:
        return (self.approved >> g) & 1

    cdef int exchange_ok(self, int g_out, int g_in, int exclude) except -1:
        return ((self.approved >> g_out) & 1) == ((self.approved >> g_in) & 1)

    cdef int add(self, int g) except -1:
        if not (self.approved >> g) & 1:
            return 0
        self.bundle |= _ONE << g
        return 1

    cdef int remove(self, int g) except -1:
        self.bundle &= ~(_ONE << g)
        return 0


cdef class _CCapped(_CAgent):
    cdef u64 approved
    cdef int cap
    cdef int count  # approved items currently held

    def __cinit__(self, approved, cap):
        self.approved = approved
        self.cap = cap
        self.bundle = 0
        self.count = 0

    cdef int _eff(self, int exclude):
        if (
            exclude >= 0
            and (self.bundle >> exclude) & 1
            and (self.approved >> exclude) & 1
        ):
            return self.count - 1
        return self.count

    cdef int marginal(self, int g, int exclude) except -1:
        return ((self.approved >> g) & 1) and self._eff(exclude) < self.cap

    cdef int exchange_ok(self, int g_out, int g_in, int exclude) except -1:
        cdef int c = self._eff(exclude)
        cdef int a_out = (self.approved >> g_out) & 1
        cdef int a_in = (self.approved >> g_in) & 1
        return min(c - a_out + a_in, self.cap) == min(c, self.cap)

    cdef int add(self, int g) except -1:
        if not self.marginal(g, -1):
            return 0
        self.bundle |= _ONE << g
        self.count += 1
        return 1

    cdef int remove(self, int g) except -1:
        self.bundle &= ~(_ONE << g)
        if (self.approved >> g) & 1:
            self.count -= 1
        return 0


cdef class _CUniform(_CAgent):
    cdef int cap
    cdef int size

    def __cinit__(self, cap):
        self.cap = cap
        self.bundle = 0
        self.size = 0

    cdef int marginal(self, int g, int exclude) except -1:
        cdef int eff = self.size
        if exclude >= 0 and (self.bundle >> exclude) & 1:
            eff -= 1
        return eff < self.cap

    cdef int exchange_ok(self, int g_out, int g_in, int exclude) except -1:
        return 1

    cdef int add(self, int g) except -1:
        if self.size >= self.cap:
            return 0
        self.bundle |= _ONE << g
        self.size += 1
        return 1

    cdef int remove(self, int g) except -1:
        self.bundle &= ~(_ONE << g)
        self.size -= 1
        return 0


cdef class _CAssignment(_CAgent):
    cdef u64* subs
    cdef int* item_of
    cdef int nsubs
    cdef int sub_of[64]

    def __cinit__(self, payload):
        cdef int i
        self.nsubs = len(payload)
        self.subs = <u64*> PyMem_Malloc((self.nsubs or 1) * sizeof(u64))
        self.item_of = <int*> PyMem_Malloc((self.nsubs or 1) * sizeof(int))
        if self.subs == NULL or self.item_of == NULL:
            raise MemoryError()
        for i in range(self.nsubs):
            self.subs[i] = payload[i]
            self.item_of[i] = -1
        for i in range(64):
            self.sub_of[i] = -1
        self.bundle = 0

    def __dealloc__(self):
        PyMem_Free(self.subs)
        PyMem_Free(self.item_of)

    cdef int _free_path(self, int g, int ex1, int ex2, u64* visited):
        # does an augmenting path exist for item g, with ex1/ex2 treated as
        # absent
        cdef int s, h
        for s in range(self.nsubs):
            if not (self.subs[s] >> g) & 1 or (visited[0] >> s) & 1:
                continue
            visited[0] |= _ONE << s
            h = self.item_of[s]
            if h == -1 or h == ex1 or h == ex2:
                return 1
            if self._free_path(h, ex1, ex2, visited):
                return 1
        return 0

    cdef int marginal(self, int g, int exclude) except -1:
        cdef u64 visited = 0
        return self._free_path(g, exclude, -1, &visited)

    cdef int exchange_ok(self, int g_out, int g_in, int exclude) except -1:
        cdef u64 visited = 0
        return self._free_path(g_in, g_out, exclude, &visited)

    cdef int _place(self, int g, u64* visited):
        cdef int s, h
        for s in range(self.nsubs):
            if not (self.subs[s] >> g) & 1 or (visited[0] >> s) & 1:
                continue
            visited[0] |= _ONE << s
            h = self.item_of[s]
            if h == -1 or self._place(h, visited):
                self.item_of[s] = g
                self.sub_of[g] = s
                return 1
        return 0

    cdef int add(self, int g) except -1:
        cdef u64 visited = 0
        if not self._place(g, &visited):
            return 0
        self.bundle |= _ONE << g
        return 1

    cdef int remove(self, int g) except -1:
        cdef int s = self.sub_of[g]
        if s < 0:
            raise KeyError(g)
        self.sub_of[g] = -1
        self.item_of[s] = -1
        self.bundle &= ~(_ONE << g)
        return 0


cdef class _CGroup(_CAgent):
    cdef list members
    cdef int member_of[64]

    def __cinit__(self, members):
        cdef int i
        self.members = list(members)
        self.bundle = 0
        for i in range(64):
            self.member_of[i] = -1

    cdef int _ex_for(self, int mi, int exclude):
        if exclude >= 0 and self.member_of[exclude] == mi:
            return exclude
        return -1

    cdef object _local_path(self, u64 target_mask, int exclude):
        """Shortest member-level path ending at a target item, or None.

        Returns (absorbing member, [h1, ..., hk]) where hk is the target.
        """
        cdef u64 scope = self.bundle | target_mask
        cdef u64 sources = 0, rest, hits, visited, frontier, layer, fr, cand, c2
        cdef int absorber[64]
        cdef int parent[64]
        cdef int h, h2, mi, ex, t, p, nmem = len(self.members)
        cdef _CAgent mem
        if exclude >= 0:
            scope &= ~(_ONE << exclude)
        rest = scope
        while rest:
            h = HF_CTZ(rest)
            rest &= rest - 1
            for mi in range(nmem):
                mem = <_CAgent> self.members[mi]
                if (mem.bundle >> h) & 1:
                    continue
                if self.member_of[h] == mi:
                    continue
                if mem.marginal(h, self._ex_for(mi, exclude)):
                    sources |= _ONE << h
                    absorber[h] = mi
                    break
        if sources == 0:
            return None
        hits = sources & target_mask
        if hits:
            t = HF_CTZ(hits)
            return absorber[t], [t]
        for h in range(64):
            parent[h] = -1
        visited = sources
        frontier = sources
        while frontier:
            layer = 0
            fr = frontier
            while fr:
                h = HF_CTZ(fr)
                fr &= fr - 1
                mi = self.member_of[h]
                if mi < 0:
                    continue
                mem = <_CAgent> self.members[mi]
                ex = self._ex_for(mi, exclude)
                c2 = scope & ~visited & ~layer
                while c2:
                    h2 = HF_CTZ(c2)
                    c2 &= c2 - 1
                    if self.member_of[h2] == mi:
                        continue
                    if mem.exchange_ok(h, h2, ex):
                        parent[h2] = h
                        layer |= _ONE << h2
            if layer == 0:
                return None
            hits = layer & target_mask
            if hits:
                t = HF_CTZ(hits)
                path = [t]
                p = t
                while parent[p] >= 0:
                    p = parent[p]
                    path.append(p)
                path.reverse()
                return absorber[p], path
            visited |= layer
            frontier = layer
        return None

    cdef int marginal(self, int g, int exclude) except -1:
        return self._local_path(_ONE << g, exclude) is not None

    cdef int exchange_ok(self, int g_out, int g_in, int exclude) except -1:
        if exclude >= 0:
            raise ValueError("groups cannot nest")
        return self._local_path(_ONE << g_in, g_out) is not None

    cdef int add(self, int g) except -1:
        cdef int mi0, mo, i, ok
        found = self._local_path(_ONE << g, -1)
        if found is None:
            return 0
        mi0 = found[0]
        path = found[1]
        owners = [self.member_of[h] for h in path]
        for i in range(len(path)):
            mo = owners[i]
            if mo >= 0:
                (<_CAgent> self.members[mo]).remove(path[i])
        ok = (<_CAgent> self.members[mi0]).add(path[0])
        if not ok:
            raise AssertionError("group witness lost while absorbing")
        self.member_of[<int> path[0]] = mi0
        for i in range(1, len(path)):
            ok = (<_CAgent> self.members[owners[i - 1]]).add(path[i])
            if not ok:
                raise AssertionError("group witness lost while shifting")
            self.member_of[<int> path[i]] = owners[i - 1]
        self.bundle |= _ONE << g
        return 1

    cdef int remove(self, int g) except -1:
        cdef int mo = self.member_of[g]
        if mo < 0:
            raise KeyError(g)
        self.member_of[g] = -1
        (<_CAgent> self.members[mo]).remove(g)
        self.bundle &= ~(_ONE << g)
        return 0

    cdef tuple c_member_bundles(self):
        cdef int mi
        return tuple(
            (<_CAgent> self.members[mi]).bundle for mi in range(len(self.members))
        )


cdef _CAgent _build_agent(descriptor, bint nested):
    kind = descriptor[0]
    if kind == "binary":
        return _CBinary(descriptor[1])
    if kind == "capped":
        return _CCapped(descriptor[1], descriptor[2])
    if kind == "uniform":
        return _CUniform(descriptor[1])
    if kind == "assignment":
        return _CAssignment(tuple(descriptor[1]))
    if kind == "group":
        if nested:
            raise ValueError("groups cannot nest")
        return _CGroup([_build_agent(d, True) for d in descriptor[1]])
    raise ValueError(f"unknown valuation descriptor {kind!r}")


# -- capability checks -------------------------------------------------------

def _mask_fits(mask) -> bool:
    return isinstance(mask, int) and 0 <= mask and mask.bit_length() <= 64


def _descriptor_fits(descriptor) -> bool:
    kind = descriptor[0]
    if kind == "binary":
        return _mask_fits(descriptor[1])
    if kind == "capped":
        return _mask_fits(descriptor[1])
    if kind == "uniform":
        return True
    if kind == "assignment":
        subs = descriptor[1]
        return len(subs) <= 64 and all(_mask_fits(s) for s in subs)
    if kind == "group":
        return all(
            d[0] != "group" and _descriptor_fits(d) for d in descriptor[1]
        )
    return False


def descriptor_rank(descriptor, mask):
    """Rank of an item mask under a descriptor, independent of any engine state."""
    cdef _CAgent agent
    cdef u64 rest
    cdef int g
    if not _mask_fits(mask) or not _descriptor_fits(descriptor):
        return pybackend.descriptor_rank(descriptor, mask)
    kind = descriptor[0]
    if kind == "binary":
        return HF_POPCOUNT(<u64> (descriptor[1] & mask))
    if kind == "capped":
        return min(HF_POPCOUNT(<u64> (descriptor[1] & mask)), descriptor[2])
    if kind == "uniform":
        return min(HF_POPCOUNT(<u64> mask), descriptor[1])
    agent = _build_agent(descriptor, False)
    rest = <u64> mask
    while rest:
        g = HF_CTZ(rest)
        rest &= rest - 1
        agent.add(g)
    return HF_POPCOUNT(agent.bundle)


# -- the engine --------------------------------------------------------------

cdef class CEngine:
    """Exchange-graph state over one set of agents (compiled core).

    Same contract as the pure-Python engine: construct with the item count
    and one valuation descriptor per agent, call :meth:`load` once with the
    starting bundles, then drive it with marginal / exchange / shortest-path
    / augment queries.  All bundles are kept non-redundant throughout;
    :meth:`load` raises :class:`NonRedundancyError` if a starting bundle is
    not.
    """

    cdef readonly int m
    cdef readonly int k
    cdef readonly tuple descriptors
    cdef list agents
    cdef int owner_arr[64]
    cdef u64 universe
    cdef u64 _pool
    cdef int* version
    cdef int* fver
    cdef u64* fmask
    cdef int* ex_ver
    cdef signed char* ex
    cdef bint _loaded

    def __cinit__(self, int m, descriptors):
        cdef int a, g
        if not 0 <= m <= 64:
            raise ValueError("compiled engine handles at most 64 items")
        self.m = m
        self.descriptors = tuple(descriptors)
        self.agents = [_build_agent(d, False) for d in self.descriptors]
        self.k = len(self.agents)
        for g in range(64):
            self.owner_arr[g] = -2  # -2 outside universe, -1 pool, >=0 agent
        self.universe = 0
        self._pool = 0
        self.version = <int*> PyMem_Malloc((self.k or 1) * sizeof(int))
        self.fver = <int*> PyMem_Malloc((self.k or 1) * sizeof(int))
        self.fmask = <u64*> PyMem_Malloc((self.k or 1) * sizeof(u64))
        self.ex_ver = <int*> PyMem_Malloc((self.k or 1) * sizeof(int))
        self.ex = <signed char*> PyMem_Malloc((self.k or 1) * 4096)
        if (
            self.version == NULL
            or self.fver == NULL
            or self.fmask == NULL
            or self.ex_ver == NULL
            or self.ex == NULL
        ):
            raise MemoryError()
        for a in range(self.k):
            self.version[a] = 0
            self.fver[a] = -1
            self.fmask[a] = 0
            self.ex_ver[a] = -1
        self._loaded = False

    def __dealloc__(self):
        PyMem_Free(self.version)
        PyMem_Free(self.fver)
        PyMem_Free(self.fmask)
        PyMem_Free(self.ex_ver)
        PyMem_Free(self.ex)

    # -- setup --------------------------------------------------------------

    def load(self, bundles, pool_mask=0):
        cdef int a, g
        cdef u64 rest
        cdef _CAgent agent
        if self._loaded:
            raise RuntimeError("engine already loaded")
        blist = list(bundles)
        if len(blist) != self.k:
            raise ValueError("one bundle per agent required")
        uni = pool_mask
        for mask in blist:
            if mask & uni:
                raise ValueError("bundles and pool must be disjoint")
            uni |= mask
        if self.m < uni.bit_length():
            raise ValueError("item id beyond universe size")
        self.universe = <u64> uni
        self._pool = <u64> pool_mask
        rest = self._pool
        while rest:
            g = HF_CTZ(rest)
            rest &= rest - 1
            self.owner_arr[g] = -1
        for a in range(self.k):
            agent = <_CAgent> self.agents[a]
            rest = <u64> blist[a]
            while rest:
                g = HF_CTZ(rest)
                rest &= rest - 1
                if not agent.add(g):
                    raise NonRedundancyError(
                        f"agent {a} cannot use item {g} on top of its bundle"
                    )
                self.owner_arr[g] = a
        self._loaded = True

    # -- accessors ----------------------------------------------------------

    def pool_mask(self):
        return self._pool

    def bundle_mask(self, int a):
        return (<_CAgent> self.agents[a]).bundle

    def utility(self, int a):
        return HF_POPCOUNT((<_CAgent> self.agents[a]).bundle)

    def owner_of(self, int g):
        return self.owner_arr[g]

    def member_bundles(self, int a):
        agent = self.agents[a]
        if not isinstance(agent, _CGroup):
            raise ValueError(f"agent {a} is not a group")
        return (<_CGroup> agent).c_member_bundles()

    # -- kernel queries ------------------------------------------------------

    def rank(self, int a, mask):
        return descriptor_rank(self.descriptors[a], mask)

    def marginal(self, int a, int g):
        return bool((<_CAgent> self.agents[a]).marginal(g, -1))

    cdef int _exchange_cached(self, int a, int g_out, int g_in) except -1:
        cdef Py_ssize_t base = (<Py_ssize_t> a) * 4096
        cdef signed char hit
        if self.ex_ver[a] != self.version[a]:
            memset(self.ex + base, 0xFF, 4096)
            self.ex_ver[a] = self.version[a]
        hit = self.ex[base + (g_out << 6 | g_in)]
        if hit < 0:
            hit = 1 if (<_CAgent> self.agents[a]).exchange_ok(g_out, g_in, -1) else 0
            self.ex[base + (g_out << 6 | g_in)] = hit
        return hit

    def exchange_ok(self, int a, int g_out, int g_in):
        return bool(self._exchange_cached(a, g_out, g_in))

    cdef u64 _f_mask_c(self, int a) except? 0:
        cdef u64 mask, rest
        cdef int g
        cdef _CAgent agent
        if self.fver[a] == self.version[a]:
            return self.fmask[a]
        agent = <_CAgent> self.agents[a]
        mask = 0
        rest = self.universe & ~agent.bundle
        while rest:
            g = HF_CTZ(rest)
            rest &= rest - 1
            if agent.marginal(g, -1):
                mask |= _ONE << g
        self.fmask[a] = mask
        self.fver[a] = self.version[a]
        return mask

    def f_mask(self, int a):
        """Items whose addition would raise agent a's utility."""
        return self._f_mask_c(a)

    def shortest_path(self, int x, target_mask):
        """Shortest exchange path from agent x's gain set to a target item.

        Traverses every loaded item; whether an agent still takes turns is
        its caller's business, its bundle stays exchangeable either way.
        Returns the item sequence ending at the target, or None.  Ties:
        shallowest breadth-first layer first, lowest item id within the
        layer.
        """
        cdef u64 tmask = <u64> (target_mask & 0xFFFFFFFFFFFFFFFF)
        cdef u64 sources = self._f_mask_c(x)
        cdef u64 hits, visited, frontier, layer, fr, cand, c2
        cdef int parent[64]
        cdef int g, g2, a, t, p
        if sources == 0:
            return None
        hits = sources & tmask
        if hits:
            return [HF_CTZ(hits)]
        for g in range(64):
            parent[g] = -1
        visited = sources
        frontier = sources
        while frontier:
            layer = 0
            fr = frontier
            while fr:
                g = HF_CTZ(fr)
                fr &= fr - 1
                a = self.owner_arr[g]
                if a == -1:
                    cand = self.universe & ~self._pool & ~visited & ~layer
                else:
                    cand = (
                        self.universe
                        & ~(<_CAgent> self.agents[a]).bundle
                        & ~visited
                        & ~layer
                    )
                c2 = cand
                while c2:
                    g2 = HF_CTZ(c2)
                    c2 &= c2 - 1
                    if a >= 0 and not self._exchange_cached(a, g, g2):
                        continue
                    parent[g2] = g
                    layer |= _ONE << g2
            if layer == 0:
                return None
            hits = layer & tmask
            if hits:
                t = HF_CTZ(hits)
                path = [t]
                p = t
                while parent[p] >= 0:
                    p = parent[p]
                    path.append(p)
                path.reverse()
                return path
            visited |= layer
            frontier = layer
        return None

    def augment(self, int x, path):
        """Shift items along `path`: agent x absorbs the first item, each
        item's owner takes over the next one, the last owner releases.
        Returns the applied moves as (item, from, to) with -1 for the pool.
        """
        cdef int i, g, frm, to, a
        if not path:
            raise ValueError("empty path")
        owners = [self.owner_arr[<int> g] for g in path]
        moves = [(path[0], owners[0], x)]
        for i in range(1, len(path)):
            moves.append((path[i], owners[i], owners[i - 1]))
        for g, frm, _ in moves:
            if frm >= 0:
                (<_CAgent> self.agents[frm]).remove(g)
        for g, frm, to in moves:
            if to >= 0:
                if not (<_CAgent> self.agents[to]).add(g):
                    raise AssertionError("exchange path broke a bundle witness")
            if frm == -1:
                self._pool &= ~(_ONE << g)
            if to == -1:
                self._pool |= _ONE << g
            self.owner_arr[g] = to
        self.version[x] += 1
        for a in owners:
            if a >= 0:
                self.version[a] += 1
        return moves


def Engine(m, descriptors):
    """Engine factory: the compiled core when the instance fits in 64-bit
    masks, the pure-Python engine otherwise.  Both honor the same contract.
    """
    descs = tuple(descriptors)
    if m <= 64 and all(_descriptor_fits(d) for d in descs):
        return CEngine(m, descs)
    return pybackend.Engine(m, descs)
