"""Per-group lifecycle of the chain of key generators.

A group master periodically broadcasts key-generation info; every holder of
the group key derives the same chain of generators from it. Each chain
element keys one time interval. Verifiers keep the current chain plus one
previous chain so tickets issued late in the old epoch stay verifiable
until their staggered reissue window comes around (the moving window).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from . import crypto
from .crypto import KeyMaterial, NodeId
from .errors import InvalidArgument, ProtocolError, TreeSearchMiss


@dataclass(frozen=True)
class KeyChain:
    group_id: int
    epoch: int
    generators: tuple[KeyMaterial, ...]  # length L + 1
    td: int
    created_at: int

    @property
    def length(self) -> int:
        return len(self.generators) - 1

    @property
    def interval_len(self) -> int:
        return self.td // self.length


@dataclass(frozen=True)
class KeyMsg:
    sender: NodeId
    td: int
    n0_group: int
    epoch: int


@dataclass
class GroupContext:
    group_id: int
    master: NodeId
    members: frozenset[NodeId]
    group_key: KeyMaterial
    epoch: int = 0
    current: KeyChain | None = None
    previous: KeyChain | None = None

    def chain_for_epoch(self, epoch: int) -> KeyChain | None:
        for chain in (self.current, self.previous):
            if chain is not None and chain.epoch == epoch:
                return chain
        return None


def build_chain(group_id: int, epoch: int, key_msg: KeyMsg, length: int, now: int) -> KeyChain:
    if length < 1:
        raise InvalidArgument("chain length must be >= 1")
    if key_msg.td % length != 0:
        raise InvalidArgument("td must be divisible by the chain length")
    zeta0 = crypto.derive_commitment_generator(key_msg.td, key_msg.n0_group)
    generators = tuple(crypto.extend_chain(zeta0, length + 1))
    return KeyChain(group_id, epoch, generators, key_msg.td, now)


def start_epoch(ctx: GroupContext, key_msg: KeyMsg, length: int, now: int) -> GroupContext:
    """Roll the group to a new epoch from a master's key-generation broadcast.

    Deterministic: every member handed the same KeyMsg derives a
    byte-identical chain. The outgoing chain is retained for one epoch.
    """
    if key_msg.sender != ctx.master:
        raise ProtocolError(f"key message from non-master {key_msg.sender}")
    epoch = ctx.epoch + 1
    chain = build_chain(ctx.group_id, epoch, key_msg, length, now)
    return replace(ctx, epoch=epoch, current=chain, previous=ctx.current)


def interval_at(chain: KeyChain, t: int) -> int:
    """Interval index active at local time t, clamped to the last interval."""
    if t < chain.created_at:
        raise InvalidArgument("time precedes chain creation")
    return min((t - chain.created_at) // chain.interval_len, chain.length - 1)


# ---------------------------------------------------------------------------
# Index vector (mode-01 retrieval) and binary hash tree (mode-03 retrieval)


@dataclass(frozen=True)
class IndexVector:
    values: tuple[bytes, ...]

    def find(self, index: bytes) -> int | None:
        for k, value in enumerate(self.values):
            if value == index:
                return k
        return None


def build_index_vector(chain: KeyChain) -> IndexVector:
    return IndexVector(tuple(crypto.index_value(k) for k in range(chain.length)))


@dataclass(frozen=True)
class HashTree:
    """Merkle tree over an index vector; levels[0] is [root], last is leaves."""

    levels: tuple[tuple[bytes, ...], ...]

    @property
    def root(self) -> bytes:
        return self.levels[0][0]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def leaf_count(self) -> int:
        return len(self.levels[-1])


def build_hash_tree(v: IndexVector) -> HashTree:
    n = len(v.values)
    if n < 4 or n & (n - 1):
        raise InvalidArgument("index vector length must be a power of two >= 4")
    level = tuple(crypto.hash_bytes(value) for value in v.values)
    levels = [level]
    while len(level) > 1:
        level = tuple(
            crypto.hash_bytes(level[i] + level[i + 1]) for i in range(0, len(level), 2)
        )
        levels.append(level)
    return HashTree(tuple(reversed(levels)))


def select_hash_vector(tree: HashTree, k: int) -> tuple[bytes, ...]:
    """Digests a verifier needs to descend toward leaf k.

    These are the siblings along the root-to-leaf path, from the top down,
    stopping two levels short of the leaves: the search ends on a node that
    covers four leaves and the appended index value disambiguates among them.
    """
    depth = tree.depth
    if not 0 <= k < tree.leaf_count:
        raise InvalidArgument(f"leaf index {k} out of range")
    return tuple(tree.levels[d][(k >> (depth - d)) ^ 1] for d in range(1, depth - 1))


def search_tree(tree: HashTree, hash_vector: Iterable[bytes], appended_index: bytes) -> int:
    """Locate the interval whose index value was appended to a ticket.

    Descends from the root following the child whose sibling matches the
    next digest in hash_vector; at two levels above the leaves, picks the
    leaf whose value hashes to a leaf digest and equals the appended index.
    Raises TreeSearchMiss when no consistent path exists (forged or stale).
    """
    depth = tree.depth
    vector = tuple(hash_vector)
    if len(vector) != depth - 2:
        raise TreeSearchMiss("hash vector has wrong length for this tree")
    node = 0
    for d in range(1, depth - 1):
        left, right = tree.levels[d][2 * node], tree.levels[d][2 * node + 1]
        sibling = vector[d - 1]
        if sibling == left:
            node = 2 * node + 1
        elif sibling == right:
            node = 2 * node
        else:
            raise TreeSearchMiss("no consistent path for hash vector")
    leaf_digest = crypto.hash_bytes(appended_index)
    first = node << 2
    for j in range(first, first + 4):
        if tree.levels[depth][j] == leaf_digest:
            return j
    raise TreeSearchMiss("appended index not under the selected subtree")


# ---------------------------------------------------------------------------
# Moving-window reissue schedule


@dataclass
class SinkKeyState:
    """Chain material a verifier keeps, with moving-window bookkeeping."""

    group_id: int
    group_key: KeyMaterial
    current: KeyChain | None = None
    previous: KeyChain | None = None
    vectors: dict[int, IndexVector] = field(default_factory=dict)  # epoch -> vector
    trees: dict[int, HashTree] = field(default_factory=dict)
    group_hash: KeyMaterial | None = None  # set only in multi-group deployments
    include_root: bool = True
    window_step: int = 0

    def adopt(self, chain: KeyChain, with_tree: bool) -> None:
        """Install a freshly derived chain as current, demoting the old one."""
        stale = [e for e in self.vectors if self.current is None or e < self.current.epoch]
        for epoch in stale:
            self.vectors.pop(epoch, None)
            self.trees.pop(epoch, None)
        self.previous = self.current
        self.current = chain
        self.vectors[chain.epoch] = build_index_vector(chain)
        if with_tree:
            self.trees[chain.epoch] = build_hash_tree(self.vectors[chain.epoch])
        self.window_step = 1

    def chains(self) -> list[KeyChain]:
        return [c for c in (self.current, self.previous) if c is not None]


def moving_window_step(
    state: SinkKeyState, auth_intervals: Mapping[NodeId, int], step: int
) -> list[NodeId]:
    """Run one step of the staggered reissue schedule.

    Step 1 is the epoch roll itself (performed by adopt); steps 2..L+1 name
    the peers authenticated at interval step-2, whose ticket and session key
    must be reissued under the new chain. After the final step no retained
    material references the discarded chain.
    """
    if state.current is None:
        raise ProtocolError("no current chain")
    last = state.current.length + 1
    if step != state.window_step + 1 or not 2 <= step <= last:
        raise ProtocolError(f"window step {step} out of order (at {state.window_step})")
    interval = step - 2
    due = sorted(
        (peer for peer, k in auth_intervals.items() if k == interval),
        key=lambda p: (p.kind, p.id),
    )
    state.window_step = step
    if step == last:
        state.previous = None
        for epoch in [e for e in state.vectors if e < state.current.epoch]:
            state.vectors.pop(epoch, None)
            state.trees.pop(epoch, None)
    return due
