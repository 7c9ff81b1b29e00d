"""Group-average agglomerative clustering over a pair-score table.

Pairs scoring below the filter threshold contribute zero similarity (they
are zeroed, not excluded, so a lone surviving pair cannot merge two large
clusters), and missing pairs are treated the same way.  Merging stops when
the best group-average similarity drops below the stop threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping


class ClusterError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterSet:
    """Partition of mention ids; cluster ids are stable creation-order ids."""

    clusters: dict[int, frozenset[str]]

    def __post_init__(self):
        seen: set[str] = set()
        for cid, members in self.clusters.items():
            if not members:
                raise ClusterError(f"cluster {cid} is empty")
            if seen & members:
                raise ClusterError("clusters overlap")
            seen |= members

    @classmethod
    def from_sets(cls, groups: Iterable[Iterable[str]]) -> "ClusterSet":
        return cls({i: frozenset(g) for i, g in enumerate(groups)})

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, Iterable[str]]) -> "ClusterSet":
        return cls({int(k): frozenset(v) for k, v in mapping.items()})

    def mentions(self) -> frozenset[str]:
        out: set[str] = set()
        for members in self.clusters.values():
            out |= members
        return frozenset(out)

    def mention_to_cluster(self) -> dict[str, int]:
        return {m: cid for cid, members in self.clusters.items() for m in members}

    def restrict(self, universe: frozenset[str] | set[str]) -> "ClusterSet":
        kept = {
            cid: members & frozenset(universe)
            for cid, members in self.clusters.items()
            if members & frozenset(universe)
        }
        return ClusterSet(kept)

    def __len__(self) -> int:
        return len(self.clusters)


def agglomerate(
    mentions: Iterable[str],
    scores: Mapping[tuple[str, str], float],
    filter_threshold: float = 0.5,
    stop_threshold: float = 0.7,
) -> ClusterSet:
    """Greedy group-average agglomeration with deterministic tie-breaking.

    Starts from singletons (creation-order ids over sorted mention ids) and
    repeatedly merges the pair of clusters with the highest mean cross-pair
    similarity; ties go to the smallest (id_a, id_b).
    """
    mentions = sorted(set(mentions))
    sim: dict[tuple[str, str], float] = {}
    for (a, b), s in scores.items():
        if not 0.0 <= s <= 1.0:
            raise ClusterError(f"score {s} for pair ({a}, {b}) outside [0, 1]")
        key = (a, b) if a <= b else (b, a)
        sim[key] = s if s >= filter_threshold else 0.0

    members: dict[int, frozenset[str]] = {i: frozenset([m]) for i, m in enumerate(mentions)}
    next_id = len(mentions)
    # pairwise similarity sums between active clusters (group average = sum / (na * nb))
    sums: dict[tuple[int, int], float] = {}
    ids = sorted(members)
    for i, ca in enumerate(ids):
        (ma,) = members[ca]
        for cb in ids[i + 1:]:
            (mb,) = members[cb]
            sums[(ca, cb)] = sim.get((ma, mb) if ma <= mb else (mb, ma), 0.0)

    while len(members) > 1:
        best_pair = None
        best_avg = -1.0
        active = sorted(members)
        for i, ca in enumerate(active):
            for cb in active[i + 1:]:
                avg = sums[(ca, cb)] / (len(members[ca]) * len(members[cb]))
                if avg > best_avg:
                    best_avg = avg
                    best_pair = (ca, cb)
        if best_avg < stop_threshold:
            break
        ca, cb = best_pair
        merged = members[ca] | members[cb]
        del members[ca], members[cb]
        new_sums = {}
        for cid in members:
            lo_a, hi_a = (cid, ca) if cid < ca else (ca, cid)
            lo_b, hi_b = (cid, cb) if cid < cb else (cb, cid)
            new_sums[(cid, next_id)] = sums[(lo_a, hi_a)] + sums[(lo_b, hi_b)]
        sums = {k: v for k, v in sums.items() if ca not in k and cb not in k}
        sums.update(new_sums)
        members[next_id] = merged
        next_id += 1
    return ClusterSet(dict(members))


def save_clusters(clusters: ClusterSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cid in sorted(clusters.clusters):
            rec = {"cluster_id": cid, "mention_ids": sorted(clusters.clusters[cid])}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_clusters(path: str | Path) -> ClusterSet:
    clusters: dict[int, frozenset[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                clusters[int(rec["cluster_id"])] = frozenset(rec["mention_ids"])
    return ClusterSet(clusters)
