use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use super::{check_endpoint, Path, PlanError};
use crate::grid::{GridMap, NodeId};

/// Node-count guard for the cubic all-pairs search.
pub const FLOYD_WARSHALL_MAX_NODES: usize = 1000;

fn walk_back(grid: &GridMap, parent: &[Option<usize>], dst: usize) -> Vec<NodeId> {
    let mut nodes = vec![grid.node_at(dst)];
    let mut cur = dst;
    while let Some(p) = parent[cur] {
        nodes.push(grid.node_at(p));
        cur = p;
    }
    nodes.reverse();
    nodes
}

/// Best-first search shared by Dijkstra (`heuristic = 0`) and A*.
///
/// Ties on priority are broken by the smaller `NodeId`; a node's parent only
/// changes on a strict improvement, and neighbours are expanded E, N, W, S.
fn best_first<H>(grid: &GridMap, src: NodeId, dst: NodeId, heuristic: H) -> Result<Path, PlanError>
where
    H: Fn(NodeId) -> u32,
{
    check_endpoint(grid, src)?;
    check_endpoint(grid, dst)?;

    let n = grid.node_count();
    let mut dist = vec![u32::MAX; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    let s = grid.index(src);
    dist[s] = 0;
    open.push(Reverse((heuristic(src), src)));

    while let Some(Reverse((_, node))) = open.pop() {
        let u = grid.index(node);
        if closed[u] {
            continue;
        }
        closed[u] = true;
        if node == dst {
            return Ok(Path::from_nodes(walk_back(grid, &parent, u)));
        }
        for (_, next) in grid.neighbors_iter(node) {
            let v = grid.index(next);
            let g = dist[u] + 1;
            if !closed[v] && g < dist[v] {
                dist[v] = g;
                parent[v] = Some(u);
                open.push(Reverse((g + heuristic(next), next)));
            }
        }
    }
    Err(PlanError::NoPath { from: src, to: dst })
}

pub fn dijkstra(grid: &GridMap, src: NodeId, dst: NodeId) -> Result<Path, PlanError> {
    best_first(grid, src, dst, |_| 0)
}

/// A* with the Manhattan heuristic, admissible and consistent on a
/// 4-connected unit grid.
pub fn astar(grid: &GridMap, src: NodeId, dst: NodeId) -> Result<Path, PlanError> {
    best_first(grid, src, dst, |n| n.manhattan(dst))
}

/// Single-source hop distances by edge relaxation. Unreachable nodes are absent.
pub fn bellman_ford(grid: &GridMap, src: NodeId) -> BTreeMap<NodeId, u32> {
    let mut cost = BTreeMap::new();
    if !grid.contains(src) || grid.is_blocked(src) {
        return cost;
    }
    let n = grid.node_count();
    let mut dist = vec![u32::MAX; n];
    dist[grid.index(src)] = 0;

    let edges: Vec<(usize, usize)> = grid
        .nodes()
        .filter(|u| !grid.is_blocked(*u))
        .flat_map(|u| grid.neighbors_iter(u).map(move |(_, v)| (u, v)))
        .map(|(u, v)| (grid.index(u), grid.index(v)))
        .collect();

    for _ in 1..n.max(2) {
        let mut changed = false;
        for &(u, v) in &edges {
            if dist[u] != u32::MAX && dist[u] + 1 < dist[v] {
                dist[v] = dist[u] + 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    for (i, d) in dist.into_iter().enumerate() {
        if d != u32::MAX {
            cost.insert(grid.node_at(i), d);
        }
    }
    cost
}

/// All-pairs hop distances over a grid's nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    nx: u16,
    ny: u16,
    dist: Vec<Option<u32>>,
}

impl DistanceMatrix {
    fn idx(&self, node: NodeId) -> Option<usize> {
        if node.ix < self.nx && node.iy < self.ny {
            Some(node.iy as usize * self.nx as usize + node.ix as usize)
        } else {
            None
        }
    }

    pub fn node_count(&self) -> usize {
        self.nx as usize * self.ny as usize
    }

    /// Minimal hops from `a` to `b`; `None` when unreachable or off-grid.
    pub fn get(&self, a: NodeId, b: NodeId) -> Option<u32> {
        let (i, j) = (self.idx(a)?, self.idx(b)?);
        self.dist[i * self.node_count() + j]
    }
}

pub fn floyd_warshall(grid: &GridMap) -> Result<DistanceMatrix, PlanError> {
    let n = grid.node_count();
    if n > FLOYD_WARSHALL_MAX_NODES {
        return Err(PlanError::GridTooLarge { nodes: n, limit: FLOYD_WARSHALL_MAX_NODES });
    }
    let mut d = vec![u32::MAX; n * n];
    for i in 0..n {
        d[i * n + i] = 0;
        let node = grid.node_at(i);
        if grid.is_blocked(node) {
            continue;
        }
        for (_, m) in grid.neighbors_iter(node) {
            d[i * n + grid.index(m)] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik == u32::MAX {
                continue;
            }
            for j in 0..n {
                let dkj = d[k * n + j];
                if dkj != u32::MAX && dik + dkj < d[i * n + j] {
                    d[i * n + j] = dik + dkj;
                }
            }
        }
    }
    Ok(DistanceMatrix {
        nx: grid.nx(),
        ny: grid.ny(),
        dist: d.into_iter().map(|v| (v != u32::MAX).then_some(v)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn n(ix: u16, iy: u16) -> NodeId {
        NodeId::new(ix, iy)
    }

    fn grid9() -> GridMap {
        GridMap::new(2.0, 2.0, 0.25).unwrap()
    }

    /// Plain breadth-first hop count, written independently of the planners.
    fn bfs(grid: &GridMap, src: NodeId, dst: NodeId) -> Option<u32> {
        let mut seen = std::collections::HashMap::new();
        let mut q = VecDeque::from([src]);
        seen.insert(src, 0u32);
        while let Some(u) = q.pop_front() {
            if u == dst {
                return seen.get(&u).copied();
            }
            let d = seen[&u];
            for m in grid.neighbors(u) {
                seen.entry(m).or_insert_with(|| {
                    q.push_back(m);
                    d + 1
                });
            }
        }
        None
    }

    #[test]
    fn dijkstra_trivial_and_straight() {
        let g = grid9();
        let p = dijkstra(&g, n(3, 3), n(3, 3)).unwrap();
        assert_eq!((p.nodes.clone(), p.cost), (vec![n(3, 3)], 0));
        let p = dijkstra(&g, n(0, 0), n(2, 0)).unwrap();
        assert_eq!(p.nodes, vec![n(0, 0), n(1, 0), n(2, 0)]);
        assert_eq!(p.cost, 2);
    }

    #[test]
    fn dijkstra_detours_around_block() {
        let mut g = grid9();
        g.block(n(1, 0)).unwrap();
        assert_eq!(bfs(&g, n(0, 0), n(2, 0)), Some(4));
        let p = dijkstra(&g, n(0, 0), n(2, 0)).unwrap();
        assert_eq!(p.cost, 4);
        assert!(p.is_valid_on(&g));
    }

    #[test]
    fn unreachable_and_invalid() {
        let mut g = grid9();
        g.block(n(1, 0)).unwrap();
        g.block(n(0, 1)).unwrap();
        assert_eq!(dijkstra(&g, n(0, 0), n(5, 5)), Err(PlanError::NoPath { from: n(0, 0), to: n(5, 5) }));
        assert_eq!(astar(&g, n(0, 0), n(1, 0)), Err(PlanError::InvalidNode(n(1, 0))));
        assert_eq!(astar(&g, n(0, 0), n(9, 0)), Err(PlanError::InvalidNode(n(9, 0))));
        assert_eq!(bellman_ford(&g, n(0, 0)).len(), 1);
    }

    #[test]
    fn astar_matches_manhattan_on_empty_grid() {
        let g = grid9();
        assert_eq!(astar(&g, n(0, 0), n(8, 8)).unwrap().cost, 16);
        assert_eq!(astar(&g, n(2, 5), n(2, 5)).unwrap().cost, 0);
    }

    #[test]
    fn bellman_ford_distances() {
        let g = grid9();
        let d = bellman_ford(&g, n(0, 0));
        assert_eq!(d[&n(8, 8)], 16);
        assert_eq!(d[&n(0, 0)], 0);
        assert_eq!(d.len(), 81);
    }

    #[test]
    fn floyd_warshall_small_grid() {
        let g = GridMap::new(1.0, 1.0, 0.5).unwrap();
        let m = floyd_warshall(&g).unwrap();
        assert_eq!(m.get(n(0, 0), n(2, 2)), Some(4));
        for a in g.nodes() {
            assert_eq!(m.get(a, a), Some(0));
            for b in g.nodes() {
                assert_eq!(m.get(a, b), m.get(b, a));
            }
        }
    }

    #[test]
    fn floyd_warshall_guard() {
        let g = GridMap::new(4.0, 4.0, 0.1).unwrap();
        assert!(matches!(floyd_warshall(&g), Err(PlanError::GridTooLarge { nodes: 1681, .. })));
    }

    #[test]
    fn random_grids_agree_with_bfs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut g = grid9();
            let frac: f64 = rng.gen_range(0.0..0.3);
            for node in g.nodes().collect::<Vec<_>>() {
                if rng.gen_bool(frac) {
                    g.block(node).unwrap();
                }
            }
            let free: Vec<_> = g.nodes().filter(|x| !g.is_blocked(*x)).collect();
            let src = free[rng.gen_range(0..free.len())];
            let dst = free[rng.gen_range(0..free.len())];
            let fw = floyd_warshall(&g).unwrap();
            let bf = bellman_ford(&g, src);
            let expect = bfs(&g, src, dst);
            match expect {
                Some(c) => {
                    let dj = dijkstra(&g, src, dst).unwrap();
                    let a = astar(&g, src, dst).unwrap();
                    assert!(dj.is_valid_on(&g) && a.is_valid_on(&g));
                    assert_eq!((dj.cost, a.cost, bf[&dst], fw.get(src, dst)), (c, c, c, Some(c)));
                }
                None => {
                    assert!(dijkstra(&g, src, dst).is_err());
                    assert!(astar(&g, src, dst).is_err());
                    assert!(!bf.contains_key(&dst));
                    assert_eq!(fw.get(src, dst), None);
                }
            }
        }
    }
}
