//! Tree decomposition of the action subgraph.
//!
//! Width here is the *maximum bag size* (one more than the conventional
//! treewidth); every complexity bound downstream uses this convention.
//! Decomposition uses min-fill elimination with lowest-id tie-breaking, which
//! is deterministic and exact on chordal graphs. Disconnected graphs produce
//! one decomposition per component, joined into a single rooted tree by edges
//! between variable-disjoint bags, which preserves running intersection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ActionSubgraph;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeDecomposition {
    bags: Vec<Vec<usize>>,
    tree_edges: Vec<(usize, usize)>,
    root: usize,
    width: usize,
}

impl TreeDecomposition {
    pub fn new(bags: Vec<Vec<usize>>, tree_edges: Vec<(usize, usize)>, root: usize) -> Self {
        let width = bags.iter().map(Vec::len).max().unwrap_or(0);
        let bags = bags
            .into_iter()
            .map(|b| {
                let set: BTreeSet<usize> = b.into_iter().collect();
                set.into_iter().collect()
            })
            .collect();
        Self { bags, tree_edges, root, width }
    }

    pub fn bags(&self) -> &[Vec<usize>] {
        &self.bags
    }

    pub fn n_bags(&self) -> usize {
        self.bags.len()
    }

    pub fn tree_edges(&self) -> &[(usize, usize)] {
        &self.tree_edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Maximum bag size.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Rooted view: postorder, parents, and per-bag separators
    /// (intersection with the parent bag).
    pub fn rooted(&self) -> RootedDecomposition {
        let n = self.bags.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &self.tree_edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for nbrs in adjacency.iter_mut() {
            nbrs.sort_unstable();
        }
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut postorder = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        // Iterative DFS from the root; children visited in ascending index order.
        let mut stack = vec![(self.root, false)];
        visited[self.root] = true;
        while let Some((bag, expanded)) = stack.pop() {
            if expanded {
                postorder.push(bag);
                continue;
            }
            stack.push((bag, true));
            for &next in adjacency[bag].iter().rev() {
                if !visited[next] {
                    visited[next] = true;
                    parent[next] = Some(bag);
                    children[bag].push(next);
                    stack.push((next, false));
                }
            }
        }
        for ch in children.iter_mut() {
            ch.sort_unstable();
        }
        assert_eq!(postorder.len(), n, "tree edges must connect all bags");

        let separator: Vec<Vec<usize>> = (0..n)
            .map(|bag| match parent[bag] {
                None => Vec::new(),
                Some(p) => {
                    let pb: BTreeSet<usize> = self.bags[p].iter().copied().collect();
                    self.bags[bag].iter().copied().filter(|v| pb.contains(v)).collect()
                }
            })
            .collect();
        let free: Vec<Vec<usize>> = (0..n)
            .map(|bag| {
                let sep: BTreeSet<usize> = separator[bag].iter().copied().collect();
                self.bags[bag].iter().copied().filter(|v| !sep.contains(v)).collect()
            })
            .collect();
        RootedDecomposition { postorder, parent, children, separator, free }
    }
}

/// Rooted structure derived from a decomposition.
#[derive(Debug, Clone)]
pub struct RootedDecomposition {
    /// Children before parents; the root is last.
    pub postorder: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Bag ∩ parent bag (empty at the root).
    pub separator: Vec<Vec<usize>>,
    /// Bag minus separator: the variables this bag optimizes.
    pub free: Vec<Vec<usize>>,
}

/// A violated decomposition invariant, with a witness.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("vertex {vertex} is not covered by any bag")]
    UncoveredVertex { vertex: usize },
    #[error("edge ({0}, {1}) has no bag containing both endpoints", edge.0, edge.1)]
    UncoveredEdge { edge: (usize, usize) },
    #[error("bags containing vertex {vertex} do not form a connected subtree")]
    RunningIntersection { vertex: usize },
    #[error("tree edges do not form a tree: {detail}")]
    NotATree { detail: String },
}

/// Min-fill tree decomposition. The result always satisfies all four
/// decomposition invariants (see [`validate`]).
pub fn decompose(graph: &ActionSubgraph) -> TreeDecomposition {
    assert!(!graph.vertices.is_empty(), "graph must have at least one vertex");
    let mut adjacency: BTreeMap<usize, BTreeSet<usize>> =
        graph.vertices.iter().map(|&v| (v, BTreeSet::new())).collect();
    for &(a, b) in &graph.edges {
        adjacency.get_mut(&a).expect("edge endpoint not in vertex set").insert(b);
        adjacency.get_mut(&b).expect("edge endpoint not in vertex set").insert(a);
    }

    // Min-fill elimination, lowest id first on ties.
    let mut elim_order: Vec<usize> = Vec::with_capacity(graph.vertices.len());
    let mut elim_pos: BTreeMap<usize, usize> = BTreeMap::new();
    let mut raw_bags: Vec<BTreeSet<usize>> = Vec::new();
    let mut remaining: BTreeSet<usize> = graph.vertices.iter().copied().collect();
    while !remaining.is_empty() {
        let mut best: Option<(usize, usize)> = None; // (fill, vertex)
        for &v in &remaining {
            let nbrs: Vec<usize> = adjacency[&v].iter().copied().collect();
            let mut fill = 0usize;
            for (i, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[i + 1..] {
                    if !adjacency[&a].contains(&b) {
                        fill += 1;
                    }
                }
            }
            if best.is_none_or(|(bf, _)| fill < bf) {
                best = Some((fill, v));
            }
        }
        let (_, v) = best.unwrap();
        let nbrs: Vec<usize> = adjacency[&v].iter().copied().collect();
        let mut bag: BTreeSet<usize> = nbrs.iter().copied().collect();
        bag.insert(v);
        raw_bags.push(bag);
        elim_pos.insert(v, elim_order.len());
        elim_order.push(v);
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adjacency.get_mut(&a).unwrap().insert(b);
                adjacency.get_mut(&b).unwrap().insert(a);
            }
        }
        for &a in &nbrs {
            adjacency.get_mut(&a).unwrap().remove(&v);
        }
        adjacency.remove(&v);
        remaining.remove(&v);
    }

    // Clique-tree edges: each bag attaches to the bag of its earliest
    // subsequently-eliminated member.
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (i, bag) in raw_bags.iter().enumerate() {
        let v = elim_order[i];
        let next = bag.iter().filter(|&&u| u != v).map(|u| elim_pos[u]).min();
        if let Some(j) = next {
            debug_assert!(j > i);
            edges.push((i, j));
        }
    }

    // Absorb bags subsumed by a tree neighbor.
    let mut alive: Vec<bool> = vec![true; raw_bags.len()];
    loop {
        let mut merged = false;
        'outer: for e in 0..edges.len() {
            let (a, b) = edges[e];
            if !alive[a] || !alive[b] {
                continue;
            }
            let (sub, sup) = if raw_bags[a].is_subset(&raw_bags[b]) {
                (a, b)
            } else if raw_bags[b].is_subset(&raw_bags[a]) {
                (b, a)
            } else {
                continue;
            };
            alive[sub] = false;
            edges.swap_remove(e);
            for edge in edges.iter_mut() {
                if edge.0 == sub {
                    edge.0 = sup;
                }
                if edge.1 == sub {
                    edge.1 = sup;
                }
            }
            merged = true;
            break 'outer;
        }
        if !merged {
            break;
        }
    }

    // Renumber surviving bags and join components into one tree.
    let mut index = vec![usize::MAX; raw_bags.len()];
    let mut bags: Vec<Vec<usize>> = Vec::new();
    for (i, bag) in raw_bags.iter().enumerate() {
        if alive[i] {
            index[i] = bags.len();
            bags.push(bag.iter().copied().collect());
        }
    }
    let mut tree_edges: Vec<(usize, usize)> = edges
        .iter()
        .map(|&(a, b)| {
            let (a, b) = (index[a], index[b]);
            (a.min(b), a.max(b))
        })
        .collect();
    let mut component = (0..bags.len()).collect::<Vec<usize>>();
    fn find(component: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while component[root] != root {
            root = component[root];
        }
        let mut cur = x;
        while component[cur] != root {
            let next = component[cur];
            component[cur] = root;
            cur = next;
        }
        root
    }
    for &(a, b) in &tree_edges {
        let (ra, rb) = (find(&mut component, a), find(&mut component, b));
        if ra != rb {
            component[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut representatives: Vec<usize> = Vec::new();
    for bag in 0..bags.len() {
        if find(&mut component, bag) == bag {
            representatives.push(bag);
        }
    }
    for pair in representatives.windows(2) {
        tree_edges.push((pair[0], pair[1]));
    }
    tree_edges.sort_unstable();

    TreeDecomposition::new(bags, tree_edges, 0)
}

/// Checks the four decomposition invariants against a graph, returning every
/// violation found (empty means valid).
pub fn validate(td: &TreeDecomposition, graph: &ActionSubgraph) -> Vec<Violation> {
    let mut violations = Vec::new();
    let n = td.n_bags();

    for &(a, b) in td.tree_edges() {
        if a >= n || b >= n {
            violations.push(Violation::NotATree {
                detail: format!("edge ({a}, {b}) references a missing bag"),
            });
            return violations;
        }
    }

    for &v in &graph.vertices {
        if !td.bags().iter().any(|bag| bag.contains(&v)) {
            violations.push(Violation::UncoveredVertex { vertex: v });
        }
    }

    for &(a, b) in &graph.edges {
        if !td.bags().iter().any(|bag| bag.contains(&a) && bag.contains(&b)) {
            violations.push(Violation::UncoveredEdge { edge: (a, b) });
        }
    }

    // Tree check: acyclic and connected.
    let mut component = (0..n).collect::<Vec<usize>>();
    fn find(component: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while component[root] != root {
            root = component[root];
        }
        let mut cur = x;
        while component[cur] != root {
            let next = component[cur];
            component[cur] = root;
            cur = next;
        }
        root
    }
    let mut cyclic = false;
    for &(a, b) in td.tree_edges() {
        let (ra, rb) = (find(&mut component, a), find(&mut component, b));
        if ra == rb {
            cyclic = true;
        } else {
            component[ra.max(rb)] = ra.min(rb);
        }
    }
    if cyclic {
        violations.push(Violation::NotATree { detail: "tree edges contain a cycle".into() });
    }
    let roots = (0..n).filter(|&b| find(&mut component, b) == b).count();
    if roots > 1 {
        violations.push(Violation::NotATree {
            detail: format!("bags form {roots} components instead of one"),
        });
    }

    // Running intersection (only meaningful on a tree).
    if !cyclic && roots <= 1 {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in td.tree_edges() {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut vars: BTreeSet<usize> = BTreeSet::new();
        for bag in td.bags() {
            vars.extend(bag.iter().copied());
        }
        for &v in &vars {
            let holding: Vec<usize> = (0..n).filter(|&b| td.bags()[b].contains(&v)).collect();
            if holding.is_empty() {
                continue;
            }
            let mut seen = vec![false; n];
            let mut stack = vec![holding[0]];
            seen[holding[0]] = true;
            let mut reached = 0usize;
            while let Some(bag) = stack.pop() {
                reached += 1;
                for &next in &adjacency[bag] {
                    if !seen[next] && td.bags()[next].contains(&v) {
                        seen[next] = true;
                        stack.push(next);
                    }
                }
            }
            if reached != holding.len() {
                violations.push(Violation::RunningIntersection { vertex: v });
            }
        }
    }

    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn path3() -> ActionSubgraph {
        ActionSubgraph::new(vec![0, 1, 2], vec![(0, 1), (1, 2)])
    }

    #[test]
    fn path_gives_edge_bags() {
        let td = decompose(&path3());
        assert_eq!(td.bags(), &[vec![0, 1], vec![1, 2]]);
        assert_eq!(td.tree_edges(), &[(0, 1)]);
        assert_eq!(td.width(), 2);
        assert!(validate(&td, &path3()).is_empty());
    }

    #[test]
    fn edgeless_gives_singletons() {
        let g = ActionSubgraph::new(vec![0, 1, 2], vec![]);
        let td = decompose(&g);
        assert_eq!(td.bags(), &[vec![0], vec![1], vec![2]]);
        assert_eq!(td.width(), 1);
        assert_eq!(td.tree_edges().len(), 2, "components joined into one tree");
        assert!(validate(&td, &g).is_empty());
    }

    #[test]
    fn triangle_gives_single_bag() {
        let g = ActionSubgraph::new(vec![0, 1, 2], vec![(0, 1), (0, 2), (1, 2)]);
        let td = decompose(&g);
        assert_eq!(td.bags(), &[vec![0, 1, 2]]);
        assert_eq!(td.width(), 3);
        assert!(validate(&td, &g).is_empty());
    }

    #[test]
    fn missing_bag_and_vertex_detected() {
        let td = TreeDecomposition::new(vec![vec![0], vec![2]], vec![(0, 1)], 0);
        let violations = validate(&td, &path3());
        assert!(violations.contains(&Violation::UncoveredVertex { vertex: 1 }));
        assert!(violations.contains(&Violation::UncoveredEdge { edge: (0, 1) }));
        assert!(violations.contains(&Violation::UncoveredEdge { edge: (1, 2) }));
    }

    #[test]
    fn cycle_detected() {
        let td = TreeDecomposition::new(
            vec![vec![0, 1], vec![1, 2], vec![0, 2]],
            vec![(0, 1), (1, 2), (0, 2)],
            0,
        );
        let g = ActionSubgraph::new(vec![0, 1, 2], vec![(0, 1), (1, 2), (0, 2)]);
        assert!(validate(&td, &g)
            .iter()
            .any(|v| matches!(v, Violation::NotATree { .. })));
    }

    #[test]
    fn broken_running_intersection_detected() {
        // Vertex 0 appears in two bags that are not adjacent in the tree.
        let td = TreeDecomposition::new(
            vec![vec![0, 1], vec![1, 2], vec![0, 2]],
            vec![(0, 1), (1, 2)],
            0,
        );
        let g = ActionSubgraph::new(vec![0, 1, 2], vec![(0, 1), (1, 2), (0, 2)]);
        assert!(validate(&td, &g)
            .iter()
            .any(|v| matches!(v, Violation::RunningIntersection { vertex: 0 })));
    }

    fn random_graph(rng: &mut StdRng, n: usize, p: f64) -> ActionSubgraph {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random_bool(p) {
                    edges.push((a, b));
                }
            }
        }
        ActionSubgraph::new((0..n).collect(), edges)
    }

    #[test]
    fn decompose_valid_on_random_graphs() {
        let mut rng = StdRng::seed_from_u64(7);
        for trial in 0..1000 {
            let n = rng.random_range(4..=12);
            let p = if trial % 2 == 0 { 0.2 } else { 0.5 };
            let g = random_graph(&mut rng, n, p);
            let td = decompose(&g);
            let violations = validate(&td, &g);
            assert!(violations.is_empty(), "graph {g:?} -> {violations:?}");
            let actual = td.bags().iter().map(Vec::len).max().unwrap();
            assert_eq!(td.width(), actual);
        }
    }

    #[test]
    fn corrupted_decompositions_are_flagged() {
        let mut rng = StdRng::seed_from_u64(11);
        let mut flagged = 0usize;
        for _ in 0..1000 {
            let n = rng.random_range(4..=10);
            let g = random_graph(&mut rng, n, 0.4);
            let td = decompose(&g);
            // Drop one variable from a random bag.
            let bag = rng.random_range(0..td.n_bags());
            let mut bags = td.bags().to_vec();
            let drop_at = rng.random_range(0..bags[bag].len());
            bags[bag].remove(drop_at);
            let corrupted = TreeDecomposition::new(bags, td.tree_edges().to_vec(), td.root());
            if !validate(&corrupted, &g).is_empty() {
                flagged += 1;
            }
        }
        assert_eq!(flagged, 1000);
    }

    #[test]
    fn trees_have_width_two_and_edge_bags() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(2..=10);
            let edges: Vec<(usize, usize)> =
                (1..n).map(|v| (rng.random_range(0..v), v)).collect();
            let g = ActionSubgraph::new((0..n).collect(), edges.clone());
            let td = decompose(&g);
            assert_eq!(td.width(), 2);
            assert_eq!(td.n_bags(), edges.len());
            assert!(validate(&td, &g).is_empty());
        }
    }
}
