"""Pure-Python exchange-graph engine.

Bundles are bit masks over item ids.  The engine maintains, for every agent,
a witness that its bundle is non-redundant (a saturating sub-agent matching
for assignment valuations, a member split for group valuations) and answers
the three kernel queries the solvers are built from: marginal gain of an
item, validity of a one-for-one exchange, and breadth-first shortest
transfer paths through the exchange graph.

Determinism contract (shared with the compiled backend): items are scanned
in ascending id order everywhere, breadth-first layers are completed before
a target is chosen, and the lowest-id target reached at the shallowest depth
wins.
"""

from __future__ import annotations

from .common import NonRedundancyError, iter_bits, lowest_bit

BACKEND_NAME = "py"


class _Binary:
    __slots__ = ("approved", "bundle")

    def __init__(self, approved: int):
        self.approved = approved
        self.bundle = 0

    def marginal(self, g: int, exclude: int = -1) -> bool:
        return bool(self.approved >> g & 1)

    def exchange_ok(self, g_out: int, g_in: int, exclude: int = -1) -> bool:
        return (self.approved >> g_out & 1) == (self.approved >> g_in & 1)

    def add(self, g: int) -> bool:
        if not self.approved >> g & 1:
            return False
        self.bundle |= 1 << g
        return True

    def remove(self, g: int) -> None:
        self.bundle &= ~(1 << g)


class _Capped:
    __slots__ = ("approved", "cap", "bundle", "count")

    def __init__(self, approved: int, cap: int):
        self.approved = approved
        self.cap = cap
        self.bundle = 0
        self.count = 0  # approved items currently held

    def _eff(self, exclude: int) -> int:
        if exclude >= 0 and self.bundle >> exclude & 1 and self.approved >> exclude & 1:
            return self.count - 1
        return self.count

    def marginal(self, g: int, exclude: int = -1) -> bool:
        return bool(self.approved >> g & 1) and self._eff(exclude) < self.cap

    def exchange_ok(self, g_out: int, g_in: int, exclude: int = -1) -> bool:
        c = self._eff(exclude)
        a_out = self.approved >> g_out & 1
        a_in = self.approved >> g_in & 1
        return min(c - a_out + a_in, self.cap) == min(c, self.cap)

    def add(self, g: int) -> bool:
        if not self.marginal(g):
            return False
        self.bundle |= 1 << g
        self.count += 1
        return True

    def remove(self, g: int) -> None:
        self.bundle &= ~(1 << g)
        if self.approved >> g & 1:
            self.count -= 1


class _Uniform:
    __slots__ = ("cap", "bundle", "size")

    def __init__(self, cap: int):
        self.cap = cap
        self.bundle = 0
        self.size = 0

    def marginal(self, g: int, exclude: int = -1) -> bool:
        eff = self.size - (1 if exclude >= 0 and self.bundle >> exclude & 1 else 0)
        return eff < self.cap

    def exchange_ok(self, g_out: int, g_in: int, exclude: int = -1) -> bool:
        return True

    def add(self, g: int) -> bool:
        if self.size >= self.cap:
            return False
        self.bundle |= 1 << g
        self.size += 1
        return True

    def remove(self, g: int) -> None:
        self.bundle &= ~(1 << g)
        self.size -= 1


class _Assignment:
    __slots__ = ("subs", "bundle", "sub_of", "item_of")

    def __init__(self, subs: tuple[int, ...]):
        self.subs = subs
        self.bundle = 0
        self.sub_of: dict[int, int] = {}
        self.item_of = [-1] * len(subs)

    def _free_path(self, g: int, ex1: int, ex2: int, visited: set[int]) -> bool:
        # does an augmenting path exist for item g, with ex1/ex2 treated as absent
        for s, mask in enumerate(self.subs):
            if not mask >> g & 1 or s in visited:
                continue
            visited.add(s)
            h = self.item_of[s]
            if h == -1 or h == ex1 or h == ex2 or self._free_path(h, ex1, ex2, visited):
                return True
        return False

    def marginal(self, g: int, exclude: int = -1) -> bool:
        return self._free_path(g, exclude, -1, set())

    def exchange_ok(self, g_out: int, g_in: int, exclude: int = -1) -> bool:
        return self._free_path(g_in, g_out, exclude, set())

    def _place(self, g: int, visited: set[int]) -> bool:
        for s, mask in enumerate(self.subs):
            if not mask >> g & 1 or s in visited:
                continue
            visited.add(s)
            h = self.item_of[s]
            if h == -1 or self._place(h, visited):
                self.item_of[s] = g
                self.sub_of[g] = s
                return True
        return False

    def add(self, g: int) -> bool:
        if not self._place(g, set()):
            return False
        self.bundle |= 1 << g
        return True

    def remove(self, g: int) -> None:
        s = self.sub_of.pop(g)
        self.item_of[s] = -1
        self.bundle &= ~(1 << g)


class _Group:
    """A subtree of concrete valuations acting as one agent.

    The group's rank of a bundle is the best utilitarian split of the bundle
    among its members; the member split is the maintained witness.  Marginal
    and exchange queries run a local breadth-first search through the
    group-internal exchange graph.
    """

    __slots__ = ("members", "bundle", "member_of")

    def __init__(self, members: tuple):
        self.members = members
        self.bundle = 0
        self.member_of: dict[int, int] = {}

    def _ex_for(self, mi: int, exclude: int) -> int:
        if exclude >= 0 and self.member_of.get(exclude) == mi:
            return exclude
        return -1

    def _local_path(self, target_mask: int, exclude: int = -1):
        """Shortest member-level path ending at a target item, or None.

        Returns (absorbing member, [h1, ..., hk]) where hk is the target.
        """
        scope = self.bundle | target_mask
        if exclude >= 0:
            scope &= ~(1 << exclude)
        sources = 0
        absorber: dict[int, int] = {}
        for h in iter_bits(scope):
            for mi, mem in enumerate(self.members):
                if mem.bundle >> h & 1:
                    continue
                if self.member_of.get(h) == mi:
                    continue
                if mem.marginal(h, self._ex_for(mi, exclude)):
                    sources |= 1 << h
                    absorber[h] = mi
                    break
        if not sources:
            return None
        hits = sources & target_mask
        if hits:
            t = lowest_bit(hits)
            return absorber[t], [t]
        visited = sources
        parent: dict[int, int] = {}
        frontier = list(iter_bits(sources))
        while frontier:
            layer = 0
            for h in frontier:
                mi = self.member_of.get(h)
                if mi is None:
                    continue
                mem = self.members[mi]
                ex = self._ex_for(mi, exclude)
                for h2 in iter_bits(scope & ~visited & ~layer):
                    if self.member_of.get(h2) == mi:
                        continue
                    if mem.exchange_ok(h, h2, ex):
                        parent[h2] = h
                        layer |= 1 << h2
            if not layer:
                return None
            hits = layer & target_mask
            if hits:
                t = lowest_bit(hits)
                path = [t]
                while path[-1] in parent:
                    path.append(parent[path[-1]])
                path.reverse()
                return absorber[path[0]], path
            visited |= layer
            frontier = list(iter_bits(layer))
        return None

    def marginal(self, g: int, exclude: int = -1) -> bool:
        return self._local_path(1 << g, exclude) is not None

    def exchange_ok(self, g_out: int, g_in: int, exclude: int = -1) -> bool:
        if exclude >= 0:
            raise ValueError("groups cannot nest")
        return self._local_path(1 << g_in, g_out) is not None

    def add(self, g: int) -> bool:
        found = self._local_path(1 << g)
        if found is None:
            return False
        mi0, path = found
        owners = [self.member_of.get(h) for h in path]
        for h, mo in zip(path, owners):
            if mo is not None:
                self.members[mo].remove(h)
        ok = self.members[mi0].add(path[0])
        assert ok, "group witness lost while absorbing"
        self.member_of[path[0]] = mi0
        for i in range(1, len(path)):
            ok = self.members[owners[i - 1]].add(path[i])
            assert ok, "group witness lost while shifting"
            self.member_of[path[i]] = owners[i - 1]
        self.bundle |= 1 << g
        return True

    def remove(self, g: int) -> None:
        mo = self.member_of.pop(g)
        self.members[mo].remove(g)
        self.bundle &= ~(1 << g)

    def member_bundles(self) -> tuple[int, ...]:
        return tuple(mem.bundle for mem in self.members)


def build_agent(descriptor: tuple, nested: bool = False):
    kind = descriptor[0]
    if kind == "binary":
        return _Binary(descriptor[1])
    if kind == "capped":
        return _Capped(descriptor[1], descriptor[2])
    if kind == "uniform":
        return _Uniform(descriptor[1])
    if kind == "assignment":
        return _Assignment(tuple(descriptor[1]))
    if kind == "group":
        if nested:
            raise ValueError("groups cannot nest")
        return _Group(tuple(build_agent(d, nested=True) for d in descriptor[1]))
    raise ValueError(f"unknown valuation descriptor {kind!r}")


def descriptor_rank(descriptor: tuple, mask: int) -> int:
    """Rank of an item mask under a descriptor, independent of any engine state."""
    kind = descriptor[0]
    if kind == "binary":
        return (descriptor[1] & mask).bit_count()
    if kind == "capped":
        return min((descriptor[1] & mask).bit_count(), descriptor[2])
    if kind == "uniform":
        return min(mask.bit_count(), descriptor[1])
    agent = build_agent(descriptor)
    for g in iter_bits(mask):
        agent.add(g)
    return agent.bundle.bit_count()


class Engine:
    """Exchange-graph state over one set of agents.

    Construct with the item count and one valuation descriptor per agent,
    call :meth:`load` once with the starting bundles, then drive it with
    marginal / exchange / shortest-path / augment queries.  All bundles are
    kept non-redundant throughout; :meth:`load` raises
    :class:`NonRedundancyError` if a starting bundle is not.
    """

    def __init__(self, m: int, descriptors):
        self.m = m
        self.descriptors = tuple(descriptors)
        self.agents = [build_agent(d) for d in self.descriptors]
        self.k = len(self.agents)
        self.owner = [-2] * m  # -2 outside universe, -1 pool, >=0 agent
        self.universe = 0
        self._pool = 0
        self._version = [0] * self.k
        self._f_cache: list = [(-1, 0)] * self.k
        self._ex_cache: list = [(-1, None)] * self.k
        self._loaded = False

    # -- setup --------------------------------------------------------------

    def load(self, bundles, pool_mask: int = 0) -> None:
        if self._loaded:
            raise RuntimeError("engine already loaded")
        bundles = list(bundles)
        if len(bundles) != self.k:
            raise ValueError("one bundle per agent required")
        uni = pool_mask
        for a, mask in enumerate(bundles):
            if mask & uni:
                raise ValueError("bundles and pool must be disjoint")
            uni |= mask
        if self.m < uni.bit_length():
            raise ValueError("item id beyond universe size")
        self.universe = uni
        self._pool = pool_mask
        for g in iter_bits(pool_mask):
            self.owner[g] = -1
        for a, mask in enumerate(bundles):
            agent = self.agents[a]
            for g in iter_bits(mask):
                if not agent.add(g):
                    raise NonRedundancyError(
                        f"agent {a} cannot use item {g} on top of its bundle"
                    )
                self.owner[g] = a
        self._loaded = True

    # -- accessors ----------------------------------------------------------

    def pool_mask(self) -> int:
        return self._pool

    def bundle_mask(self, a: int) -> int:
        return self.agents[a].bundle

    def utility(self, a: int) -> int:
        return self.agents[a].bundle.bit_count()

    def owner_of(self, g: int) -> int:
        return self.owner[g]

    def member_bundles(self, a: int) -> tuple[int, ...]:
        agent = self.agents[a]
        if not isinstance(agent, _Group):
            raise ValueError(f"agent {a} is not a group")
        return agent.member_bundles()

    # -- kernel queries ------------------------------------------------------

    def rank(self, a: int, mask: int) -> int:
        return descriptor_rank(self.descriptors[a], mask)

    def marginal(self, a: int, g: int) -> bool:
        return self.agents[a].marginal(g)

    def exchange_ok(self, a: int, g_out: int, g_in: int) -> bool:
        ver, cache = self._ex_cache[a]
        if ver != self._version[a]:
            cache = {}
            self._ex_cache[a] = (self._version[a], cache)
        key = g_out << 20 | g_in
        hit = cache.get(key)
        if hit is None:
            hit = self.agents[a].exchange_ok(g_out, g_in)
            cache[key] = hit
        return hit

    def f_mask(self, a: int) -> int:
        """Items whose addition would raise agent a's utility."""
        ver, mask = self._f_cache[a]
        if ver == self._version[a]:
            return mask
        agent = self.agents[a]
        mask = 0
        for g in iter_bits(self.universe & ~agent.bundle):
            if agent.marginal(g):
                mask |= 1 << g
        self._f_cache[a] = (self._version[a], mask)
        return mask

    def shortest_path(self, x: int, target_mask: int):
        """Shortest exchange path from agent x's gain set to a target item.

        Traverses every loaded item; whether an agent still takes turns is
        its caller's business, its bundle stays exchangeable either way.
        Returns the item sequence ending at the target, or None.  Ties:
        shallowest breadth-first layer first, lowest item id within the
        layer.
        """
        sources = self.f_mask(x)
        if not sources:
            return None
        hits = sources & target_mask
        if hits:
            return [lowest_bit(hits)]
        visited = sources
        parent: dict[int, int] = {}
        frontier = list(iter_bits(sources))
        while frontier:
            layer = 0
            for g in frontier:
                a = self.owner[g]
                if a == -1:
                    cand = self.universe & ~self._pool & ~visited & ~layer
                else:
                    cand = self.universe & ~self.agents[a].bundle & ~visited & ~layer
                for g2 in iter_bits(cand):
                    if a >= 0 and not self.exchange_ok(a, g, g2):
                        continue
                    parent[g2] = g
                    layer |= 1 << g2
            if not layer:
                return None
            hits = layer & target_mask
            if hits:
                t = lowest_bit(hits)
                path = [t]
                while path[-1] in parent:
                    path.append(parent[path[-1]])
                path.reverse()
                return path
            visited |= layer
            frontier = list(iter_bits(layer))
        return None

    def augment(self, x: int, path):
        """Shift items along `path`: agent x absorbs the first item, each
        item's owner takes over the next one, the last owner releases.
        Returns the applied moves as (item, from, to) with -1 for the pool.
        """
        if not path:
            raise ValueError("empty path")
        owners = [self.owner[g] for g in path]
        moves = [(path[0], owners[0], x)]
        for i in range(1, len(path)):
            moves.append((path[i], owners[i], owners[i - 1]))
        for g, frm, _ in moves:
            if frm >= 0:
                self.agents[frm].remove(g)
        for g, frm, to in moves:
            if to >= 0:
                ok = self.agents[to].add(g)
                assert ok, "exchange path broke a bundle witness"
            if frm == -1:
                self._pool &= ~(1 << g)
            if to == -1:
                self._pool |= 1 << g
            self.owner[g] = to
        touched = {x}
        touched.update(a for a in owners if a >= 0)
        for a in touched:
            self._version[a] += 1
        return moves
