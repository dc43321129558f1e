//! Finite weighted graphs with directed-edge bookkeeping.
//!
//! A [`WeightedGraph`] is a finite connected undirected graph with symmetric
//! positive edge weights and a distinguished root vertex. Every undirected
//! edge `{i,j}` is carried together with its two directed versions `(i,j)`
//! and `(j,i)`; the direction from the smaller to the larger endpoint is the
//! edge's *counting direction*. On top of the graph live spanning-tree
//! enumeration, the weighted tree polynomial (cross-checked against the
//! matrix-tree determinant), fundamental cycles of a reference tree, the
//! cycle overlap matrix, and the coordinate maps between sourceless edge
//! currents and their restriction to non-tree directed edges.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use thiserror::Error;

/// Hard cap on exhaustive spanning-tree enumeration.
pub const TREE_ENUMERATION_BUDGET: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph is not connected")]
    Disconnected,
    #[error("edge ({0},{1}) has non-positive weight {2}")]
    InvalidWeight(usize, usize, f64),
    #[error("duplicate edge ({0},{1})")]
    DuplicateEdge(usize, usize),
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("vertex {0} out of range ({1} vertices)")]
    VertexOutOfRange(usize, usize),
    #[error("graph needs at least 2 vertices and 1 edge")]
    TooSmall,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("spanning-tree enumeration exceeded budget of {budget} trees")]
pub struct EnumerationBudgetExceeded {
    pub budget: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("current has nonzero divergence {divergence} at vertex {vertex}, outside tolerance {tolerance}")]
pub struct NotInH {
    pub vertex: usize,
    pub divergence: f64,
    pub tolerance: f64,
}

/// Undirected edge with its two endpoints ordered `a < b` and a positive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor {
    pub vertex: usize,
    pub edge: usize,
    /// Directed-edge id of the outgoing edge (self -> vertex).
    pub dir_out: usize,
}

/// Undirected spanning tree, stored as a sorted list of edge ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpanningTree {
    pub edges: Vec<usize>,
}

/// Spanning tree directed toward a root: every non-root vertex stores the
/// next vertex on its unique path to the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DirectedTree {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
}

impl DirectedTree {
    /// Builds a directed tree from `(vertex, parent)` pairs. Verifies that the
    /// edges exist in `g`, reach every vertex, and are acyclic toward `root`.
    pub fn from_parent_pairs(
        g: &WeightedGraph,
        root: usize,
        pairs: &[(usize, usize)],
    ) -> Option<DirectedTree> {
        let n = g.vertex_count();
        let mut parent = vec![None; n];
        if root >= n || pairs.len() != n - 1 {
            return None;
        }
        for &(v, p) in pairs {
            if v >= n || v == root || parent[v].is_some() || g.dir_edge(v, p).is_none() {
                return None;
            }
            parent[v] = Some(p);
        }
        let t = DirectedTree { root, parent };
        t.is_spanning_toward(g, root).then_some(t)
    }

    /// True when the parent map is a spanning tree of `g` directed toward `toward`.
    pub fn is_spanning_toward(&self, g: &WeightedGraph, toward: usize) -> bool {
        let n = g.vertex_count();
        if self.root != toward || self.parent.len() != n || self.parent[toward].is_some() {
            return false;
        }
        for v in 0..n {
            if v == toward {
                continue;
            }
            // Walk to the root; a walk longer than n vertices means a cycle.
            let mut cur = v;
            let mut steps = 0;
            while cur != toward {
                match self.parent[cur] {
                    Some(p) if g.dir_edge(cur, p).is_some() => cur = p,
                    _ => return false,
                }
                steps += 1;
                if steps > n {
                    return false;
                }
            }
        }
        true
    }

    /// Undirected edge ids of the tree, sorted.
    pub fn shadow(&self, g: &WeightedGraph) -> SpanningTree {
        let mut edges: Vec<usize> = (0..self.parent.len())
            .filter(|&v| v != self.root)
            .map(|v| g.dir_edge(v, self.parent[v].unwrap()).unwrap() / 2)
            .collect();
        edges.sort_unstable();
        SpanningTree { edges }
    }

    /// Directed-edge ids `(v -> parent(v))` for all non-root vertices, in vertex order.
    pub fn dir_edges(&self, g: &WeightedGraph) -> Vec<usize> {
        (0..self.parent.len())
            .filter(|&v| v != self.root)
            .map(|v| g.dir_edge(v, self.parent[v].unwrap()).unwrap())
            .collect()
    }

    /// Vertices ordered by decreasing depth, so that children always precede
    /// their parents. Used for exact back-substitution along the tree.
    pub fn vertices_by_decreasing_depth(&self) -> Vec<usize> {
        let n = self.parent.len();
        let mut depth = vec![0usize; n];
        for v in 0..n {
            let mut cur = v;
            while let Some(p) = self.parent[cur] {
                depth[v] += 1;
                cur = p;
            }
        }
        let mut order: Vec<usize> = (0..n).filter(|&v| v != self.root).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(depth[v]));
        order
    }
}

/// Real-valued function on directed edges, indexed by directed-edge id.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentVector {
    pub values: Vec<f64>,
}

impl CurrentVector {
    pub fn zero(g: &WeightedGraph) -> Self {
        CurrentVector {
            values: vec![0.0; g.directed_edge_count()],
        }
    }

    /// Net outflow at each vertex.
    pub fn divergence(&self, g: &WeightedGraph) -> Vec<f64> {
        let mut div = vec![0.0; g.vertex_count()];
        for (e, edge) in g.edges().iter().enumerate() {
            let fwd = self.values[2 * e];
            let rev = self.values[2 * e + 1];
            div[edge.a] += fwd - rev;
            div[edge.b] += rev - fwd;
        }
        div
    }
}

/// Nonnegative-integer crossing counts on directed edges, together with the
/// source/sink pattern they are supposed to satisfy (`source == sink` means a
/// balanced current with zero divergence everywhere).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntegerCurrent {
    pub values: Vec<u64>,
    pub source: usize,
    pub sink: usize,
}

impl IntegerCurrent {
    pub fn new(values: Vec<u64>, source: usize, sink: usize) -> Self {
        IntegerCurrent {
            values,
            source,
            sink,
        }
    }

    pub fn divergence(&self, g: &WeightedGraph) -> Vec<i64> {
        let mut div = vec![0i64; g.vertex_count()];
        for (e, edge) in g.edges().iter().enumerate() {
            let fwd = self.values[2 * e] as i64;
            let rev = self.values[2 * e + 1] as i64;
            div[edge.a] += fwd - rev;
            div[edge.b] += rev - fwd;
        }
        div
    }

    /// Total departures from each vertex (sum of outgoing crossing counts).
    pub fn departures(&self, g: &WeightedGraph) -> Vec<u64> {
        let mut out = vec![0u64; g.vertex_count()];
        for d in 0..g.directed_edge_count() {
            out[g.dir_tail(d)] += self.values[d];
        }
        out
    }

    /// Exact check of the inhomogeneous Kirchhoff rules for the stored
    /// source/sink pattern.
    pub fn satisfies_kirchhoff(&self, g: &WeightedGraph) -> bool {
        check_kirchhoff_int(g, self, Some(self.source), Some(self.sink))
    }
}

/// True iff the integer current's divergence matches the unit source/sink
/// pattern, or vanishes identically when both are absent.
pub fn check_kirchhoff_int(
    g: &WeightedGraph,
    c: &IntegerCurrent,
    source: Option<usize>,
    sink: Option<usize>,
) -> bool {
    let div = c.divergence(g);
    div.iter().enumerate().all(|(i, &d)| {
        let expect = (source == Some(i)) as i64 - (sink == Some(i)) as i64;
        d == expect
    })
}

/// Tolerance-based Kirchhoff check for real currents. The tolerance is
/// absolute, scaled by the caller against the magnitude of the current.
pub fn check_kirchhoff_real(
    g: &WeightedGraph,
    c: &CurrentVector,
    source: Option<usize>,
    sink: Option<usize>,
    tol: f64,
) -> bool {
    let div = c.divergence(g);
    div.iter().enumerate().all(|(i, &d)| {
        let expect = (source == Some(i)) as i64 as f64 - (sink == Some(i)) as i64 as f64;
        (d - expect).abs() <= tol
    })
}

/// Oriented fundamental cycle of a non-tree edge: the chord in its counting
/// direction followed by the tree path closing the loop. Each entry is an
/// undirected edge id with `+1` when the cycle traverses it along its
/// counting direction.
#[derive(Debug, Clone)]
pub struct FundamentalCycle {
    pub chord: usize,
    pub entries: Vec<(usize, i8)>,
}

#[derive(Debug)]
pub struct WeightedGraph {
    vertex_count: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<Neighbor>>,
    /// Flattened adjacency (weight folded in) for the simulator hot loop.
    flat_adj: Vec<FlatNeighbor>,
    flat_offsets: Vec<u32>,
    root: usize,
    trees: OnceLock<Result<Vec<SpanningTree>, EnumerationBudgetExceeded>>,
}

#[derive(Debug, Clone, Copy)]
pub struct FlatNeighbor {
    pub vertex: u32,
    pub dir_out: u32,
    pub weight: f64,
}

/// Validates and builds a graph from an undirected edge list.
pub fn build_graph(
    edge_list: &[(usize, usize, f64)],
    root: usize,
) -> Result<WeightedGraph, GraphError> {
    if edge_list.is_empty() {
        return Err(GraphError::TooSmall);
    }
    let mut edges = Vec::with_capacity(edge_list.len());
    for &(i, j, w) in edge_list {
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(GraphError::InvalidWeight(i, j, w));
        }
        let (a, b) = (i.min(j), i.max(j));
        if edges.iter().any(|e: &Edge| e.a == a && e.b == b) {
            return Err(GraphError::DuplicateEdge(a, b));
        }
        edges.push(Edge { a, b, weight: w });
    }
    let n = edges.iter().map(|e| e.b + 1).max().unwrap();
    if n < 2 {
        return Err(GraphError::TooSmall);
    }
    if root >= n {
        return Err(GraphError::VertexOutOfRange(root, n));
    }
    edges.sort_by_key(|e| (e.a, e.b));
    let mut adj: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
    for (e, edge) in edges.iter().enumerate() {
        adj[edge.a].push(Neighbor {
            vertex: edge.b,
            edge: e,
            dir_out: 2 * e,
        });
        adj[edge.b].push(Neighbor {
            vertex: edge.a,
            edge: e,
            dir_out: 2 * e + 1,
        });
    }
    for list in &mut adj {
        list.sort_by_key(|nb| nb.vertex);
    }
    let mut flat_adj = Vec::new();
    let mut flat_offsets = Vec::with_capacity(n + 1);
    flat_offsets.push(0);
    for (v, list) in adj.iter().enumerate() {
        for nb in list {
            flat_adj.push(FlatNeighbor {
                vertex: nb.vertex as u32,
                dir_out: nb.dir_out as u32,
                weight: edges[nb.edge].weight,
            });
        }
        let _ = v;
        flat_offsets.push(flat_adj.len() as u32);
    }
    let g = WeightedGraph {
        vertex_count: n,
        edges,
        adj,
        flat_adj,
        flat_offsets,
        root,
        trees: OnceLock::new(),
    };
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    Ok(g)
}

impl WeightedGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn directed_edge_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn neighbors(&self, v: usize) -> &[Neighbor] {
        &self.adj[v]
    }

    /// Flattened adjacency slice for the simulator hot loop.
    #[inline]
    pub fn flat_neighbors(&self, v: usize) -> &[FlatNeighbor] {
        &self.flat_adj[self.flat_offsets[v] as usize..self.flat_offsets[v + 1] as usize]
    }

    pub fn weight(&self, edge: usize) -> f64 {
        self.edges[edge].weight
    }

    /// Directed-edge id of `(i -> j)`, if `{i,j}` is an edge.
    pub fn dir_edge(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.vertex_count || j >= self.vertex_count {
            return None;
        }
        self.adj[i]
            .iter()
            .find(|nb| nb.vertex == j)
            .map(|nb| nb.dir_out)
    }

    pub fn dir_tail(&self, dir: usize) -> usize {
        let e = &self.edges[dir / 2];
        if dir % 2 == 0 {
            e.a
        } else {
            e.b
        }
    }

    pub fn dir_head(&self, dir: usize) -> usize {
        let e = &self.edges[dir / 2];
        if dir % 2 == 0 {
            e.b
        } else {
            e.a
        }
    }

    pub fn dir_reverse(&self, dir: usize) -> usize {
        dir ^ 1
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for nb in &self.adj[v] {
                if !seen[nb.vertex] {
                    seen[nb.vertex] = true;
                    count += 1;
                    stack.push(nb.vertex);
                }
            }
        }
        count == self.vertex_count
    }

    /// Exhaustive, duplicate-free list of undirected spanning trees, cached
    /// after the first call. Fails once the enumeration would exceed
    /// [`TREE_ENUMERATION_BUDGET`].
    pub fn spanning_trees(&self) -> Result<&[SpanningTree], EnumerationBudgetExceeded> {
        self.trees
            .get_or_init(|| enumerate_spanning_trees_impl(self, TREE_ENUMERATION_BUDGET))
            .as_ref()
            .map(|v| v.as_slice())
            .map_err(|e| e.clone())
    }

    /// Weighted spanning-tree sum for positive edge weights `omega`.
    ///
    /// Computed by exhaustive enumeration when the tree list fits the budget
    /// and always by the matrix-tree cofactor determinant; the two routes are
    /// asserted to agree to a relative 1e-10 before the enumeration value is
    /// returned. Past the enumeration budget only the determinant is used.
    pub fn tree_polynomial(&self, omega: &[f64]) -> f64 {
        assert_eq!(omega.len(), self.edges.len());
        debug_assert!(omega.iter().all(|&w| w > 0.0));
        let det = self.tree_polynomial_det(omega);
        match self.spanning_trees() {
            Ok(trees) => {
                let sum: f64 = trees
                    .iter()
                    .map(|t| t.edges.iter().map(|&e| omega[e]).product::<f64>())
                    .sum();
                assert!(
                    (sum - det).abs() <= 1e-10 * sum.abs().max(det.abs()),
                    "matrix-tree mismatch: enumeration {sum} vs determinant {det}"
                );
                sum
            }
            Err(_) => det,
        }
    }

    /// Matrix-tree route: cofactor of the weighted Laplacian at the root.
    pub fn tree_polynomial_det(&self, omega: &[f64]) -> f64 {
        let n = self.vertex_count;
        let keep: Vec<usize> = (0..n).filter(|&v| v != self.root).collect();
        let mut m = DMatrix::<f64>::zeros(n - 1, n - 1);
        for (e, edge) in self.edges.iter().enumerate() {
            let (a, b, w) = (edge.a, edge.b, omega[e]);
            let ia = keep.iter().position(|&v| v == a);
            let ib = keep.iter().position(|&v| v == b);
            if let Some(ia) = ia {
                m[(ia, ia)] += w;
            }
            if let Some(ib) = ib {
                m[(ib, ib)] += w;
            }
            if let (Some(ia), Some(ib)) = (ia, ib) {
                m[(ia, ib)] -= w;
                m[(ib, ia)] -= w;
            }
        }
        m.lu().determinant()
    }

    /// All spanning trees oriented toward `i1`, in bijection with the
    /// undirected list.
    pub fn directed_trees_toward(
        &self,
        i1: usize,
    ) -> Result<Vec<DirectedTree>, EnumerationBudgetExceeded> {
        Ok(self
            .spanning_trees()?
            .iter()
            .map(|t| self.orient_toward(t, i1))
            .collect())
    }

    /// Orients an undirected spanning tree toward `toward`.
    pub fn orient_toward(&self, tree: &SpanningTree, toward: usize) -> DirectedTree {
        let n = self.vertex_count;
        let mut tree_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &e in &tree.edges {
            let edge = &self.edges[e];
            tree_adj[edge.a].push(edge.b);
            tree_adj[edge.b].push(edge.a);
        }
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        seen[toward] = true;
        let mut queue = std::collections::VecDeque::from([toward]);
        while let Some(v) = queue.pop_front() {
            for &w in &tree_adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(v);
                    queue.push_back(w);
                }
            }
        }
        debug_assert!(seen.iter().all(|&s| s));
        DirectedTree {
            root: toward,
            parent,
        }
    }

    /// Deterministic reference tree: BFS from the root with neighbors explored
    /// in ascending vertex order, oriented toward the root.
    pub fn reference_tree(&self) -> DirectedTree {
        let n = self.vertex_count;
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        seen[self.root] = true;
        let mut queue = std::collections::VecDeque::from([self.root]);
        while let Some(v) = queue.pop_front() {
            for nb in &self.adj[v] {
                if !seen[nb.vertex] {
                    seen[nb.vertex] = true;
                    parent[nb.vertex] = Some(v);
                    queue.push_back(nb.vertex);
                }
            }
        }
        DirectedTree {
            root: self.root,
            parent,
        }
    }

    /// Fundamental cycles of the non-tree edges of `t0`, one per chord,
    /// oriented so the chord appears in its counting direction.
    pub fn fundamental_cycles(&self, t0: &DirectedTree) -> Vec<FundamentalCycle> {
        let tree_edges: std::collections::HashSet<usize> =
            t0.dir_edges(self).iter().map(|&d| d / 2).collect();
        let mut cycles = Vec::new();
        for (e, edge) in self.edges.iter().enumerate() {
            if tree_edges.contains(&e) {
                continue;
            }
            // Chord a->b in counting direction, then tree path b -> a.
            let mut entries = vec![(e, 1i8)];
            let path_a = self.tree_path_to_root(t0, edge.a);
            let path_b = self.tree_path_to_root(t0, edge.b);
            // Strip the common suffix toward the tree root.
            let mut la = path_a.len();
            let mut lb = path_b.len();
            while la > 0 && lb > 0 && path_a[la - 1] == path_b[lb - 1] {
                la -= 1;
                lb -= 1;
            }
            // b upward to the meeting point: traversal direction v -> parent(v).
            for &v in path_b[..lb].iter() {
                let p = t0.parent[v].unwrap();
                let d = self.dir_edge(v, p).unwrap();
                entries.push((d / 2, if d % 2 == 0 { 1 } else { -1 }));
            }
            // Meeting point down to a: traversal direction parent(v) -> v.
            for &v in path_a[..la].iter().rev() {
                let p = t0.parent[v].unwrap();
                let d = self.dir_edge(p, v).unwrap();
                entries.push((d / 2, if d % 2 == 0 { 1 } else { -1 }));
            }
            cycles.push(FundamentalCycle { chord: e, entries });
        }
        cycles
    }

    /// Vertices strictly between `v` and the tree root, starting at `v`.
    fn tree_path_to_root(&self, t0: &DirectedTree, v: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = v;
        while t0.parent[cur].is_some() {
            path.push(cur);
            cur = t0.parent[cur].unwrap();
        }
        path
    }

    /// Cycle overlap matrix over the non-tree edges of `t0`:
    /// `B[e][e] = sum over the cycle of 1/omega'` and `B[e][f]` sums
    /// `±1/omega'` over shared edges, positive when both cycles traverse the
    /// shared edge in the same direction. Symmetric positive definite.
    pub fn cycle_matrix(&self, t0: &DirectedTree, omega_prime: &[f64]) -> DMatrix<f64> {
        assert_eq!(omega_prime.len(), self.edges.len());
        let cycles = self.fundamental_cycles(t0);
        let m = cycles.len();
        // Signed indicator of each cycle over undirected edges.
        let mut chi = vec![vec![0i8; self.edges.len()]; m];
        for (c, cycle) in cycles.iter().enumerate() {
            for &(e, s) in &cycle.entries {
                chi[c][e] = s;
            }
        }
        let mut b = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut sum = 0.0;
                for e in 0..self.edges.len() {
                    if chi[i][e] != 0 && chi[j][e] != 0 {
                        sum += f64::from(chi[i][e] * chi[j][e]) / omega_prime[e];
                    }
                }
                b[(i, j)] = sum;
            }
        }
        b
    }

    /// Directed-edge ids not in the reference tree, ascending. These index the
    /// free coordinates of a sourceless current.
    pub fn nontree_dir_edges(&self, t0: &DirectedTree) -> Vec<usize> {
        let tree_dirs: std::collections::HashSet<usize> =
            t0.dir_edges(self).iter().copied().collect();
        (0..self.directed_edge_count())
            .filter(|d| !tree_dirs.contains(d))
            .collect()
    }
}

fn enumerate_spanning_trees_impl(
    g: &WeightedGraph,
    budget: usize,
) -> Result<Vec<SpanningTree>, EnumerationBudgetExceeded> {
    // Include/exclude recursion over the edge list with union-find state and
    // a connectivity feasibility prune; equivalent to contraction/deletion.
    struct Dsu {
        parent: Vec<usize>,
    }
    impl Dsu {
        fn find(&mut self, mut v: usize) -> usize {
            while self.parent[v] != v {
                self.parent[v] = self.parent[self.parent[v]];
                v = self.parent[v];
            }
            v
        }
        fn union(&mut self, a: usize, b: usize) -> bool {
            let (ra, rb) = (self.find(a), self.find(b));
            if ra == rb {
                return false;
            }
            self.parent[ra] = rb;
            true
        }
    }

    fn feasible(g: &WeightedGraph, chosen: &[usize], from: usize) -> bool {
        // Chosen edges plus all still-available edges must connect the graph.
        let mut dsu = Dsu {
            parent: (0..g.vertex_count()).collect(),
        };
        let mut comps = g.vertex_count();
        for &e in chosen {
            if dsu.union(g.edges()[e].a, g.edges()[e].b) {
                comps -= 1;
            }
        }
        for e in from..g.edge_count() {
            if dsu.union(g.edges()[e].a, g.edges()[e].b) {
                comps -= 1;
            }
        }
        comps == 1
    }

    fn recurse(
        g: &WeightedGraph,
        from: usize,
        chosen: &mut Vec<usize>,
        out: &mut Vec<SpanningTree>,
        budget: usize,
    ) -> Result<(), EnumerationBudgetExceeded> {
        let need = g.vertex_count() - 1;
        if chosen.len() == need {
            if out.len() >= budget {
                return Err(EnumerationBudgetExceeded { budget });
            }
            out.push(SpanningTree {
                edges: chosen.clone(),
            });
            return Ok(());
        }
        if from == g.edge_count() || !feasible(g, chosen, from) {
            return Ok(());
        }
        // Include edge `from` unless it closes a cycle among chosen edges.
        let mut dsu = Dsu {
            parent: (0..g.vertex_count()).collect(),
        };
        for &e in chosen.iter() {
            dsu.union(g.edges()[e].a, g.edges()[e].b);
        }
        if dsu.find(g.edges()[from].a) != dsu.find(g.edges()[from].b) {
            chosen.push(from);
            recurse(g, from + 1, chosen, out, budget)?;
            chosen.pop();
        }
        recurse(g, from + 1, chosen, out, budget)
    }

    let mut out = Vec::new();
    let mut chosen = Vec::new();
    recurse(g, 0, &mut chosen, &mut out, budget)?;
    out.sort();
    Ok(out)
}

/// Restriction of a sourceless current to the non-tree directed edges of the
/// reference tree. Fails with [`NotInH`] when the divergence exceeds an
/// absolute tolerance scaled to the current's magnitude.
pub fn iota(
    g: &WeightedGraph,
    t0: &DirectedTree,
    c: &CurrentVector,
) -> Result<Vec<f64>, NotInH> {
    let scale = c.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;
    let div = c.divergence(g);
    for (v, &d) in div.iter().enumerate() {
        if d.abs() > tol {
            return Err(NotInH {
                vertex: v,
                divergence: d,
                tolerance: tol,
            });
        }
    }
    Ok(g.nontree_dir_edges(t0)
        .iter()
        .map(|&d| c.values[d])
        .collect())
}

/// Inverse of [`iota`]: reconstructs the full current from its non-tree
/// coordinates by back-substitution along the tree, so the homogeneous
/// Kirchhoff rules hold exactly at every non-root vertex.
pub fn iota_inv(g: &WeightedGraph, t0: &DirectedTree, coords: &[f64]) -> CurrentVector {
    CurrentVector {
        values: iota_inv_values(g, t0, coords, 0.0f64),
    }
}

/// Integer-lattice version of [`iota_inv`]; back-substitution stays in `i64`.
pub fn iota_inv_int(g: &WeightedGraph, t0: &DirectedTree, coords: &[i64]) -> Vec<i64> {
    iota_inv_values(g, t0, coords, 0i64)
}

fn iota_inv_values<T>(g: &WeightedGraph, t0: &DirectedTree, coords: &[T], zero: T) -> Vec<T>
where
    T: Copy + std::ops::AddAssign + std::ops::SubAssign,
{
    let free = g.nontree_dir_edges(t0);
    assert_eq!(coords.len(), free.len());
    let mut values = vec![zero; g.directed_edge_count()];
    for (k, &d) in free.iter().enumerate() {
        values[d] = coords[k];
    }
    // Children before parents: at vertex v the only unknown is v -> parent(v).
    for v in t0.vertices_by_decreasing_depth() {
        let p = t0.parent[v].unwrap();
        let up = g.dir_edge(v, p).unwrap();
        let mut balance = zero;
        for nb in g.neighbors(v) {
            if nb.dir_out != up {
                balance += values[g.dir_reverse(nb.dir_out)];
                balance -= values[nb.dir_out];
            } else {
                balance += values[g.dir_reverse(up)];
            }
        }
        values[up] = balance;
    }
    values
}

/// Fixture graphs used across tests and examples: unit weights, root 0.
pub mod fixtures {
    use super::{build_graph, WeightedGraph};

    pub fn k2() -> WeightedGraph {
        build_graph(&[(0, 1, 1.0)], 0).unwrap()
    }

    pub fn path3() -> WeightedGraph {
        build_graph(&[(0, 1, 1.0), (1, 2, 1.0)], 0).unwrap()
    }

    pub fn triangle() -> WeightedGraph {
        build_graph(&[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 0).unwrap()
    }

    pub fn cycle4() -> WeightedGraph {
        build_graph(&[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)], 0).unwrap()
    }

    pub fn cycle4_chord() -> WeightedGraph {
        build_graph(
            &[
                (0, 1, 1.0),
                (1, 2, 1.0),
                (2, 3, 1.0),
                (0, 3, 1.0),
                (0, 2, 1.0),
            ],
            0,
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn build_rejects_bad_input() {
        assert_eq!(
            build_graph(&[(0, 1, -1.0)], 0).unwrap_err(),
            GraphError::InvalidWeight(0, 1, -1.0)
        );
        assert_eq!(
            build_graph(&[(0, 0, 1.0)], 0).unwrap_err(),
            GraphError::SelfLoop(0)
        );
        assert_eq!(
            build_graph(&[(0, 1, 1.0), (1, 0, 2.0)], 0).unwrap_err(),
            GraphError::DuplicateEdge(0, 1)
        );
        assert_eq!(
            build_graph(&[(0, 1, 1.0), (2, 3, 1.0)], 0).unwrap_err(),
            GraphError::Disconnected
        );
    }

    #[test]
    fn k2_has_two_directed_edges() {
        let g = k2();
        assert_eq!(g.directed_edge_count(), 2);
        assert_eq!(g.dir_edge(0, 1), Some(0));
        assert_eq!(g.dir_edge(1, 0), Some(1));
    }

    #[test]
    fn triangle_has_six_directed_edges() {
        let g = triangle();
        assert_eq!(g.directed_edge_count(), 6);
    }

    #[test]
    fn spanning_tree_counts() {
        assert_eq!(k2().spanning_trees().unwrap().len(), 1);
        assert_eq!(triangle().spanning_trees().unwrap().len(), 3);
        // Matrix-tree oracle for the 4-cycle: cofactor of the Laplacian is 4.
        let g = cycle4();
        let det = g.tree_polynomial_det(&vec![1.0; g.edge_count()]);
        assert_relative_eq!(det, 4.0, max_relative = 1e-12);
        assert_eq!(g.spanning_trees().unwrap().len(), 4);
    }

    #[test]
    fn tree_polynomial_matches_examples() {
        let g = triangle();
        assert_relative_eq!(g.tree_polynomial(&[1.0, 1.0, 1.0]), 3.0, epsilon = 1e-12);
        let g = k2();
        assert_relative_eq!(g.tree_polynomial(&[0.5]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn directed_trees_examples() {
        let g = k2();
        let trees = g.directed_trees_toward(1).unwrap();
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].parent, vec![Some(1), None]);

        let g = triangle();
        assert_eq!(g.directed_trees_toward(0).unwrap().len(), 3);

        let g = path3();
        let trees = g.directed_trees_toward(2).unwrap();
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].parent, vec![Some(1), Some(2), None]);
    }

    #[test]
    fn fundamental_cycle_examples() {
        let g = triangle();
        let t0 = DirectedTree::from_parent_pairs(&g, 0, &[(1, 0), (2, 0)]).unwrap();
        let cycles = g.fundamental_cycles(&t0);
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].entries.len(), 3);

        assert!(k2().fundamental_cycles(&k2().reference_tree()).is_empty());

        let g = cycle4_chord();
        let cycles = g.fundamental_cycles(&g.reference_tree());
        assert_eq!(cycles.len(), g.edge_count() - g.vertex_count() + 1);
        assert_eq!(cycles.len(), 2);
    }

    #[test]
    fn cycle_matrix_triangle() {
        let g = triangle();
        let t0 = DirectedTree::from_parent_pairs(&g, 0, &[(1, 0), (2, 0)]).unwrap();
        let b = g.cycle_matrix(&t0, &[0.5, 0.5, 0.5]);
        assert_eq!(b.nrows(), 1);
        assert_relative_eq!(b[(0, 0)], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn cycle_matrix_det_is_tree_polynomial_over_weight_product() {
        // det(B) * prod(omega) == tree polynomial, for every fixture with cycles.
        for g in [triangle(), cycle4(), cycle4_chord()] {
            let omega: Vec<f64> = (0..g.edge_count()).map(|e| 0.3 + 0.2 * e as f64).collect();
            let t0 = g.reference_tree();
            let b = g.cycle_matrix(&t0, &omega);
            let det = b.clone().lu().determinant();
            let prod: f64 = omega.iter().product();
            assert_relative_eq!(det * prod, g.tree_polynomial(&omega), max_relative = 1e-10);
            assert!(b.cholesky().is_some(), "cycle matrix must be positive definite");
        }
    }

    #[test]
    fn kirchhoff_check_examples() {
        let g = k2();
        let zero = IntegerCurrent::new(vec![0, 0], 0, 0);
        assert!(check_kirchhoff_int(&g, &zero, None, None));
        let unit = IntegerCurrent::new(vec![1, 0], 0, 1);
        assert!(check_kirchhoff_int(&g, &unit, Some(0), Some(1)));
        assert!(!check_kirchhoff_int(&g, &unit, None, None));
    }

    #[test]
    fn iota_roundtrip_k2() {
        let g = k2();
        let t0 = g.reference_tree();
        // Coordinate x on the single non-tree directed edge forces both
        // directed values equal by Kirchhoff at the non-root vertex.
        let c = iota_inv(&g, &t0, &[2.5]);
        assert_eq!(c.values, vec![2.5, 2.5]);
        let coords = iota(&g, &t0, &c).unwrap();
        assert_eq!(coords, vec![2.5]);
    }

    #[test]
    fn iota_rejects_sourceful_current() {
        let g = k2();
        let t0 = g.reference_tree();
        let c = CurrentVector {
            values: vec![1.0, 0.0],
        };
        assert!(iota(&g, &t0, &c).is_err());
    }

    #[test]
    fn iota_inv_triangle_unit_cycle() {
        let g = triangle();
        let t0 = DirectedTree::from_parent_pairs(&g, 0, &[(1, 0), (2, 0)]).unwrap();
        // Unit flow around the cycle 0 -> 1 -> 2 -> 0.
        let mut c = CurrentVector::zero(&g);
        c.values[g.dir_edge(0, 1).unwrap()] = 1.0;
        c.values[g.dir_edge(1, 2).unwrap()] = 1.0;
        c.values[g.dir_edge(2, 0).unwrap()] = 1.0;
        let coords = iota(&g, &t0, &c).unwrap();
        let back = iota_inv(&g, &t0, &coords);
        for d in 0..g.directed_edge_count() {
            assert_relative_eq!(back.values[d], c.values[d], epsilon = 1e-12);
        }
    }

    #[test]
    fn fundamental_cycles_lie_in_h() {
        for g in [triangle(), cycle4(), cycle4_chord()] {
            let t0 = g.reference_tree();
            for cycle in g.fundamental_cycles(&t0) {
                let mut c = CurrentVector::zero(&g);
                for &(e, s) in &cycle.entries {
                    let d = if s > 0 { 2 * e } else { 2 * e + 1 };
                    c.values[d] += 1.0;
                }
                assert!(check_kirchhoff_real(&g, &c, None, None, 1e-12));
            }
        }
    }

    #[test]
    fn reference_measure_independent_of_tree_choice() {
        // The change of coordinates between two reference trees has det ±1.
        for g in [triangle(), cycle4(), cycle4_chord(), path3()] {
            let trees = g.spanning_trees().unwrap().to_vec();
            let t_a = g.orient_toward(&trees[0], g.root());
            let t_b = g.orient_toward(trees.last().unwrap(), (g.vertex_count() - 1).min(2));
            let dim = g.directed_edge_count() - (g.vertex_count() - 1);
            let mut m = DMatrix::<f64>::zeros(dim, dim);
            for k in 0..dim {
                let mut coords = vec![0.0; dim];
                coords[k] = 1.0;
                let c = iota_inv(&g, &t_a, &coords);
                let image = iota(&g, &t_b, &c).unwrap();
                for (r, val) in image.iter().enumerate() {
                    m[(r, k)] = *val;
                }
            }
            let det = m.lu().determinant();
            assert_relative_eq!(det.abs(), 1.0, epsilon = 1e-10);
        }
    }
}
