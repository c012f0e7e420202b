"""
Disjoint-set forest over integer ids (path compression, union by size).
"""

from typing import Dict, Iterable, List


class UnionFind:
    parents: Dict[int, int]
    sizes: Dict[int, int]
    num_components: int

    def __init__(self, items: Iterable[int] = ()) -> None:
        self.parents = {}
        self.sizes = {}
        self.num_components = 0
        for item in items:
            self.add(item)

    def __contains__(self, item: int) -> bool:
        return item in self.parents

    def __len__(self) -> int:
        return len(self.parents)

    def add(self, item: int) -> None:
        if item in self.parents:
            return
        self.parents[item] = item
        self.sizes[item] = 1
        self.num_components += 1

    def find(self, item: int) -> int:
        if item not in self.parents:
            raise KeyError(f"Item {item} was never added")
        root: int = item
        while root != self.parents[root]:
            root = self.parents[root]

        # compress so every node on the path points at the root
        while item != root:
            next_item: int = self.parents[item]
            self.parents[item] = root
            item = next_item
        return root

    def union(self, a: int, b: int) -> int:
        root_a: int = self.find(a)
        root_b: int = self.find(b)
        if root_a == root_b:
            return root_a
        # larger set survives; on equal size the smaller id does
        if self.sizes[root_a] < self.sizes[root_b] or (
            self.sizes[root_a] == self.sizes[root_b] and root_b < root_a
        ):
            root_a, root_b = root_b, root_a
        self.parents[root_b] = root_a
        self.sizes[root_a] += self.sizes.pop(root_b)
        self.num_components -= 1
        return root_a

    def connected(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)

    def components(self) -> List[List[int]]:
        """
        Member lists of every set, each sorted, ordered by smallest member.
        """
        groups: Dict[int, List[int]] = {}
        for item in sorted(self.parents):
            groups.setdefault(self.find(item), []).append(item)
        return sorted(groups.values(), key=lambda members: members[0])
