import logging
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from splaynetsim.const import PKG_NAME
from splaynetsim.exceptions import EmptyTreeError, NodeNotFoundError, TreeStructureError
from splaynetsim.models import InvariantReport

_LOGGER = logging.getLogger(PKG_NAME)

Links = Tuple[Optional[int], Optional[int], Optional[int]]


class TreeNode:
    """
    Node of the binary search tree network: links and the id interval of its subtree
    """

    __slots__ = ("id", "parent", "left", "right", "lo", "hi")

    def __init__(
        self,
        node_id: int,
        parent: Optional[int] = None,
        left: Optional[int] = None,
        right: Optional[int] = None,
    ):
        self.id = node_id
        self.parent = parent
        self.left = left
        self.right = right
        self.lo = node_id
        self.hi = node_id

    def __repr__(self):
        return (
            f"TreeNode(id={self.id}, parent={self.parent}, left={self.left}, "
            f"right={self.right}, interval=[{self.lo}, {self.hi}])"
        )


class Tree:
    """
    Binary search tree over integer node ids.

    The tree owns its nodes; rotations mutate links and intervals in place. Subtree sizes are
    derived from intervals and the in-order position of every id, which never changes because
    rotations preserve the in-order sequence.
    """

    def __init__(self, nodes: Dict[int, TreeNode], root: int):
        if not nodes:
            raise EmptyTreeError()
        self._nodes = nodes
        self.root = root
        self._ids = sorted(nodes)
        self._position = {node_id: index for index, node_id in enumerate(self._ids)}

    def __contains__(self, node_id) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def __repr__(self):
        return f"Tree(n={self.n}, root={self.root})"

    @property
    def n(self) -> int:
        return len(self._nodes)

    @property
    def ids(self) -> List[int]:
        return list(self._ids)

    def node(self, node_id: int) -> TreeNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise NodeNotFoundError(f"Node id: '{node_id}'")

    def parent(self, node_id: int) -> Optional[int]:
        return self.node(node_id).parent

    def left(self, node_id: int) -> Optional[int]:
        return self.node(node_id).left

    def right(self, node_id: int) -> Optional[int]:
        return self.node(node_id).right

    def children(self, node_id: int) -> List[int]:
        node = self.node(node_id)
        return [child for child in (node.left, node.right) if child is not None]

    def neighbors(self, node_id: int) -> List[int]:
        node = self.node(node_id)
        return [x for x in (node.parent, node.left, node.right) if x is not None]

    def interval(self, node_id: int) -> Tuple[int, int]:
        node = self.node(node_id)
        return node.lo, node.hi

    def ancestors(self, node_id: int) -> Iterator[int]:
        """
        Proper ancestors of a node, nearest first
        """
        current = self.node(node_id).parent
        while current is not None:
            yield current
            current = self._nodes[current].parent

    def depth(self, node_id: int) -> int:
        return sum(1 for _ in self.ancestors(node_id))

    def subtree_size(self, node_id: int) -> int:
        node = self.node(node_id)
        return self._position[node.hi] - self._position[node.lo] + 1

    def recompute_interval(self, node_id: int) -> None:
        """
        Recompute the interval of a node from its children. A missing child contributes the
        node's own id.
        """
        node = self._nodes[node_id]
        node.lo = self._nodes[node.left].lo if node.left is not None else node_id
        node.hi = self._nodes[node.right].hi if node.right is not None else node_id

    def replace_child(self, parent: Optional[int], old: int, new: Optional[int]) -> None:
        """
        Point the link of `parent` that referenced `old` to `new`; a missing parent means `new`
        becomes the root.
        """
        if parent is None:
            self.root = new
            return None
        node = self._nodes[parent]
        if node.left == old:
            node.left = new
        elif node.right == old:
            node.right = new
        else:
            raise TreeStructureError(f"Node {old} is not a child of {parent}")
        return None

    def inorder(self) -> List[int]:
        result = []
        stack = []
        current = self.root
        while stack or current is not None:
            while current is not None:
                stack.append(current)
                current = self._nodes[current].left
            current = stack.pop()
            result.append(current)
            current = self._nodes[current].right
        return result

    def links(self) -> Dict[int, Links]:
        """
        Snapshot of all links: id -> (parent, left, right)
        """
        return {
            node_id: (node.parent, node.left, node.right) for node_id, node in self._nodes.items()
        }

    def copy(self) -> "Tree":
        nodes = {}
        for node_id, node in self._nodes.items():
            clone = TreeNode(node_id, node.parent, node.left, node.right)
            clone.lo, clone.hi = node.lo, node.hi
            nodes[node_id] = clone
        return Tree(nodes, self.root)

    def iter_nodes(self) -> Iterator[TreeNode]:
        return iter(self._nodes.values())


def build_balanced_tree(n: int, ids: Optional[Sequence[int]] = None) -> Tree:
    """
    Build a balanced binary search tree by recursive median split.

    :param n: number of nodes
    :param ids: sorted distinct node ids [Default: 1..n]
    :return: tree with the median (upper median for even counts) of every range as its root
    """
    if n < 1:
        raise EmptyTreeError(f"Requested {n} nodes")
    if ids is None:
        ids = list(range(1, n + 1))
    else:
        ids = list(ids)
        if len(ids) != n:
            raise TreeStructureError(f"Expected {n} ids, got {len(ids)}")
        if any(a >= b for a, b in zip(ids, ids[1:])):
            raise TreeStructureError("Ids must be sorted and distinct")

    nodes = {node_id: TreeNode(node_id) for node_id in ids}

    def _build(lo: int, hi: int, parent: Optional[int]) -> Optional[int]:
        if lo > hi:
            return None
        mid = (lo + hi + 1) // 2
        node = nodes[ids[mid]]
        node.parent = parent
        node.left = _build(lo, mid - 1, node.id)
        node.right = _build(mid + 1, hi, node.id)
        node.lo = ids[lo]
        node.hi = ids[hi]
        return node.id

    root = _build(0, n - 1, None)
    _LOGGER.debug(f"Built balanced tree with {n} nodes, root: {root}")
    return Tree(nodes, root)


def build_tree(root: int, children: Dict[int, Tuple[Optional[int], Optional[int]]]) -> Tree:
    """
    Build a tree from explicit child links and validate it.

    :param root: id of the root
    :param children: id -> (left, right); leaves may be omitted if they appear as children
    :return: validated tree
    """
    node_ids = {root}
    for parent, (left, right) in children.items():
        node_ids.add(parent)
        node_ids.update(child for child in (left, right) if child is not None)
    nodes = {node_id: TreeNode(node_id) for node_id in node_ids}
    for parent, (left, right) in children.items():
        nodes[parent].left = left
        nodes[parent].right = right
        for child in (left, right):
            if child is not None:
                nodes[child].parent = parent
    tree = Tree(nodes, root)
    for node_id in _postorder_or_fail(tree):
        tree.recompute_interval(node_id)
    report = check_invariants(tree)
    if not report.ok:
        raise TreeStructureError(f"{report.violation} at nodes {report.nodes}")
    return tree


def _postorder_or_fail(tree: Tree) -> List[int]:
    order = []
    stack = [(tree.root, False)]
    seen = set()
    while stack:
        node_id, expanded = stack.pop()
        if expanded:
            order.append(node_id)
            continue
        if node_id in seen:
            raise TreeStructureError(f"cycle at node {node_id}")
        seen.add(node_id)
        stack.append((node_id, True))
        for child in tree.children(node_id):
            stack.append((child, False))
    return order


def is_in_subtree(t: Tree, x: int, y: int) -> bool:
    """
    Check whether y lies in the subtree rooted at x (x itself included)
    """
    if y not in t:
        return False
    lo, hi = t.interval(x)
    return lo <= y <= hi


def lca(t: Tree, a: int, b: int) -> int:
    """
    Lowest common ancestor of two nodes (a node is its own ancestor)
    """
    t.node(b)
    current = a
    while not is_in_subtree(t, current, b):
        current = t.node(current).parent
    return current


def distance(t: Tree, a: int, b: int) -> int:
    """
    Number of edges on the tree path between two nodes
    """
    common = lca(t, a, b)
    hops = 0
    for node_id in (a, b):
        while node_id != common:
            node_id = t.node(node_id).parent
            hops += 1
    return hops


def check_invariants(t: Tree) -> InvariantReport:
    """
    Check root uniqueness, link symmetry, acyclicity, reachability, BST order and intervals.

    :param t: tree to check
    :return: report naming the first violation found and the nodes involved
    """
    roots = [node.id for node in t.iter_nodes() if node.parent is None]
    if roots != [t.root]:
        return InvariantReport(ok=False, violation="single root", nodes=sorted(roots))

    for node in t.iter_nodes():
        for child in (node.left, node.right):
            if child is None:
                continue
            if child not in t:
                return InvariantReport(ok=False, violation="dangling link", nodes=[node.id, child])
            if t.node(child).parent != node.id:
                return InvariantReport(ok=False, violation="link symmetry", nodes=[node.id, child])
        if node.parent is not None:
            if node.parent not in t:
                return InvariantReport(
                    ok=False, violation="dangling link", nodes=[node.id, node.parent]
                )
            if node.id not in t.children(node.parent):
                return InvariantReport(
                    ok=False, violation="link symmetry", nodes=[node.parent, node.id]
                )
        if node.left is not None and node.left == node.right:
            return InvariantReport(ok=False, violation="link symmetry", nodes=[node.id])

    seen = set()
    stack = [t.root]
    while stack:
        node_id = stack.pop()
        if node_id in seen:
            return InvariantReport(ok=False, violation="cycle", nodes=[node_id])
        seen.add(node_id)
        stack.extend(t.children(node_id))
    if len(seen) != t.n:
        missing = sorted(set(t.ids) - seen)
        return InvariantReport(ok=False, violation="unreachable", nodes=missing)

    order = t.inorder()
    for a, b in zip(order, order[1:]):
        if a >= b:
            return InvariantReport(ok=False, violation="BST order", nodes=[a, b])

    expected = {}
    for node_id in _postorder_or_fail(t):
        node = t.node(node_id)
        lo = expected[node.left][0] if node.left is not None else node_id
        hi = expected[node.right][1] if node.right is not None else node_id
        expected[node_id] = (lo, hi)
        if (node.lo, node.hi) != (lo, hi):
            return InvariantReport(ok=False, violation="interval", nodes=[node_id])

    return InvariantReport(ok=True)
