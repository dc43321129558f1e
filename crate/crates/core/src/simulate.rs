//! Exact event-driven simulation of the vertex-reinforced jump process and
//! its time-changed version.
//!
//! The raw process sits at a vertex `i` and jumps to a neighbor `j` with
//! hazard `W_ij * L_j(t)`, where `L_j` is one plus the time spent at `j`.
//! While the process sits still every neighbor's local time is frozen, so
//! holding times are exactly exponential and targets are chosen with
//! probabilities proportional to `W_ij * L_j` — no discretization anywhere.
//! The time change `D(t) = sum_i (L_i(t)^2 - 1)` is pushed through in closed
//! form: between jumps only one local time grows linearly, so `D` is a known
//! quadratic on each sojourn and its inverse is a quadratic formula. The
//! two-window observable extraction streams over sojourns in O(|V| + |E|)
//! memory, splitting the sojourn that straddles a window boundary exactly.
//!
//! Randomness comes from per-trajectory counter-based streams: the master
//! seed keys the cipher and the trajectory index selects the stream, so
//! ensembles are reproducible independently of scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::graph::{DirectedTree, IntegerCurrent, WeightedGraph};

/// A single jump of the raw process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    /// Raw-process time of the jump, strictly increasing.
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

/// Stored trajectory of the raw process up to a fixed time horizon.
#[derive(Debug, Clone)]
pub struct JumpTrajectory {
    pub start: usize,
    pub events: Vec<JumpEvent>,
    pub final_time: f64,
    /// Local times with offset one at `final_time`, so all entries are >= 1
    /// and their excess over one sums to the elapsed time.
    pub local_times_with_offset: Vec<f64>,
}

/// A jump of the time-changed process, carrying both clocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZJumpEvent {
    pub y_time: f64,
    pub z_time: f64,
    pub from: usize,
    pub to: usize,
}

/// Trajectory of the time-changed process obtained from a stored raw
/// trajectory via the closed-form clock map.
#[derive(Debug, Clone)]
pub struct TimeChangedTrajectory {
    pub start: usize,
    pub events: Vec<ZJumpEvent>,
    pub final_y_time: f64,
    pub final_z_time: f64,
}

/// Last-exit structure of a time window: a spanning tree directed toward the
/// window endpoint when every vertex was visited, or `Incomplete`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LastExit {
    Tree(DirectedTree),
    Incomplete,
}

impl LastExit {
    pub fn as_tree(&self) -> Option<&DirectedTree> {
        match self {
            LastExit::Tree(t) => Some(t),
            LastExit::Incomplete => None,
        }
    }
}

/// Raw two-window observable: crossing counts, local times, endpoints and
/// last-exit trees of the two consecutive windows `[0, sigma]` and
/// `[sigma, sigma + sigma']` in time-changed time.
#[derive(Debug, Clone)]
pub struct ObservableRecord {
    pub sigma: f64,
    pub sigma_prime: f64,
    pub k: IntegerCurrent,
    pub k_prime: IntegerCurrent,
    pub l: Vec<f64>,
    pub l_prime: Vec<f64>,
    pub end1: usize,
    pub end2: usize,
    pub tree1: LastExit,
    pub tree2: LastExit,
    pub in_o: bool,
}

/// Image of a record under the rescaling map: centered, normalized crossing
/// currents and the log-scale local-time fields, all vanishing at the root.
#[derive(Debug, Clone)]
pub struct RescaledObservables {
    pub kappa: crate::graph::CurrentVector,
    pub kappa_prime: crate::graph::CurrentVector,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub end1: usize,
    pub end2: usize,
    pub tree1: DirectedTree,
    pub tree2: DirectedTree,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("record lies outside the positive-local-time spanning-tree event")]
pub struct RescaleError;

/// Deterministic per-trajectory random stream: the master seed keys the
/// generator, the trajectory index picks the stream.
pub fn trajectory_rng(master_seed: u64, trajectory: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trajectory);
    rng
}

#[inline]
fn draw_holding<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

#[inline]
fn total_rate(g: &WeightedGraph, at: usize, local: &[f64]) -> f64 {
    g.flat_neighbors(at)
        .iter()
        .map(|nb| nb.weight * local[nb.vertex as usize])
        .sum()
}

#[inline]
fn choose_target<R: Rng>(
    g: &WeightedGraph,
    at: usize,
    local: &[f64],
    rate: f64,
    rng: &mut R,
) -> (usize, usize) {
    let nbs = g.flat_neighbors(at);
    if nbs.len() == 1 {
        return (nbs[0].vertex as usize, nbs[0].dir_out as usize);
    }
    let mut x: f64 = rng.random::<f64>() * rate;
    let mut chosen = nbs[nbs.len() - 1];
    for nb in nbs {
        x -= nb.weight * local[nb.vertex as usize];
        if x <= 0.0 {
            chosen = *nb;
            break;
        }
    }
    (chosen.vertex as usize, chosen.dir_out as usize)
}

/// Simulates the raw process from `start` up to raw time `t_max`, storing
/// every jump.
pub fn simulate_vrjp<R: Rng>(
    g: &WeightedGraph,
    start: usize,
    t_max: f64,
    rng: &mut R,
) -> JumpTrajectory {
    assert!(t_max > 0.0);
    let n = g.vertex_count();
    let mut local = vec![1.0f64; n];
    let mut t = 0.0;
    let mut at = start;
    let mut events = Vec::new();
    loop {
        let rate = total_rate(g, at, &local);
        let dt = draw_holding(rng, rate);
        if t + dt >= t_max {
            local[at] += t_max - t;
            break;
        }
        t += dt;
        local[at] += dt;
        let (to, _) = choose_target(g, at, &local, rate, rng);
        events.push(JumpEvent { time: t, from: at, to });
        at = to;
    }
    JumpTrajectory {
        start,
        events,
        final_time: t_max,
        local_times_with_offset: local,
    }
}

/// Maps a stored raw trajectory through the clock change. Jump times are
/// computed in closed form since exactly one local time grows per sojourn.
pub fn time_change(g: &WeightedGraph, traj: &JumpTrajectory) -> TimeChangedTrajectory {
    let n = g.vertex_count();
    let mut local = vec![1.0f64; n];
    let mut z = 0.0;
    let mut t_prev = 0.0;
    let mut at = traj.start;
    let mut events = Vec::with_capacity(traj.events.len());
    for ev in &traj.events {
        debug_assert_eq!(ev.from, at);
        let dt = ev.time - t_prev;
        z += dt * (2.0 * local[at] + dt);
        local[at] += dt;
        events.push(ZJumpEvent {
            y_time: ev.time,
            z_time: z,
            from: ev.from,
            to: ev.to,
        });
        at = ev.to;
        t_prev = ev.time;
    }
    let dt = traj.final_time - t_prev;
    z += dt * (2.0 * local[at] + dt);
    TimeChangedTrajectory {
        start: traj.start,
        events,
        final_y_time: traj.final_time,
        final_z_time: z,
    }
}

impl TimeChangedTrajectory {
    /// Vertex occupied at the given time-changed time.
    pub fn position_at(&self, z: f64) -> usize {
        let mut at = self.start;
        for ev in &self.events {
            if ev.z_time > z {
                break;
            }
            at = ev.to;
        }
        at
    }

    /// Local times of the time-changed process by direct accounting of its
    /// own clock over sojourns up to `z`.
    pub fn local_times_at(&self, z: f64) -> Vec<f64> {
        let n = 1 + self
            .events
            .iter()
            .map(|e| e.from.max(e.to))
            .max()
            .unwrap_or(self.start)
            .max(self.start);
        let mut l = vec![0.0f64; n];
        let mut at = self.start;
        let mut z_prev = 0.0;
        for ev in &self.events {
            if ev.z_time >= z {
                break;
            }
            l[at] += ev.z_time - z_prev;
            z_prev = ev.z_time;
            at = ev.to;
        }
        l[at] += z - z_prev;
        l
    }

    /// Local times at `z` through the raw-process route: one plus the raw
    /// local time at the inverted clock, squared, minus one.
    pub fn local_times_via_raw(&self, g: &WeightedGraph, z: f64) -> Vec<f64> {
        let n = g.vertex_count();
        let mut local = vec![1.0f64; n];
        let mut z_prev = 0.0;
        let mut t_prev = 0.0;
        let mut at = self.start;
        for ev in &self.events {
            if ev.z_time >= z {
                break;
            }
            local[at] += ev.y_time - t_prev;
            t_prev = ev.y_time;
            z_prev = ev.z_time;
            at = ev.to;
        }
        // Partial sojourn at `at`: invert the quadratic clock segment.
        let need = z - z_prev;
        let delta = need / (local[at] + (local[at] * local[at] + need).sqrt());
        local[at] += delta;
        local.iter().map(|li| li * li - 1.0).collect()
    }
}

/// Last-exit structure of the window `(sigma1, sigma2]` of a stored
/// time-changed trajectory: for every vertex visited in the window except
/// the endpoint, the directed edge of its final departure. Spanning exactly
/// when every vertex of the graph is visited.
pub fn last_exit_tree(
    g: &WeightedGraph,
    tc: &TimeChangedTrajectory,
    sigma1: f64,
    sigma2: f64,
) -> LastExit {
    let n = g.vertex_count();
    let mut visited = vec![false; n];
    let mut last_to: Vec<Option<usize>> = vec![None; n];
    let mut at = tc.position_at(sigma1);
    visited[at] = true;
    for ev in &tc.events {
        if ev.z_time <= sigma1 {
            continue;
        }
        if ev.z_time > sigma2 {
            break;
        }
        last_to[ev.from] = Some(ev.to);
        visited[ev.to] = true;
        at = ev.to;
    }
    let end = at;
    if !visited.iter().all(|&v| v) {
        return LastExit::Incomplete;
    }
    let mut parent = vec![None; n];
    for i in 0..n {
        if i != end {
            match last_to[i] {
                Some(p) => parent[i] = Some(p),
                None => return LastExit::Incomplete,
            }
        }
    }
    let tree = DirectedTree { root: end, parent };
    debug_assert!(tree.is_spanning_toward(g, end));
    LastExit::Tree(tree)
}

struct WindowAccumulator {
    k: Vec<u64>,
    l: Vec<f64>,
    last_exit: Vec<Option<usize>>,
}

impl WindowAccumulator {
    fn new(g: &WeightedGraph) -> Self {
        WindowAccumulator {
            k: vec![0; g.directed_edge_count()],
            l: vec![0.0; g.vertex_count()],
            last_exit: vec![None; g.vertex_count()],
        }
    }

    fn into_parts(
        self,
        g: &WeightedGraph,
        source: usize,
        end: usize,
    ) -> (IntegerCurrent, Vec<f64>, LastExit) {
        let current = IntegerCurrent::new(self.k, source, end);
        let all_visited = self.l.iter().all(|&x| x > 0.0);
        let tree = if all_visited {
            let mut parent = vec![None; g.vertex_count()];
            let mut ok = true;
            for i in 0..g.vertex_count() {
                if i != end {
                    match self.last_exit[i] {
                        Some(dir) => parent[i] = Some(g.dir_head(dir)),
                        None => ok = false,
                    }
                }
            }
            if ok {
                let t = DirectedTree { root: end, parent };
                debug_assert!(t.is_spanning_toward(g, end));
                LastExit::Tree(t)
            } else {
                LastExit::Incomplete
            }
        } else {
            LastExit::Incomplete
        };
        (current, self.l, tree)
    }
}

/// Simulates both windows in a single pass, splitting the boundary sojourns
/// exactly, and extracts the raw two-window observable. Memory stays
/// O(|V| + |E|) regardless of window length.
pub fn simulate_two_scales<R: Rng>(
    g: &WeightedGraph,
    i0: usize,
    sigma: f64,
    sigma_prime: f64,
    rng: &mut R,
) -> ObservableRecord {
    assert!(sigma > 0.0 && sigma_prime > 0.0);
    let n = g.vertex_count();
    let targets = [sigma, sigma + sigma_prime];
    let mut acc = [WindowAccumulator::new(g), WindowAccumulator::new(g)];
    let mut local = vec![1.0f64; n];
    let mut z = 0.0f64;
    let mut at = i0;
    let mut window = 0usize;
    let mut end1 = usize::MAX;
    'outer: loop {
        let rate = total_rate(g, at, &local);
        let mut remaining = draw_holding(rng, rate);
        loop {
            let l_at = local[at];
            let z_inc = remaining * (2.0 * l_at + remaining);
            if z + z_inc < targets[window] {
                acc[window].l[at] += z_inc;
                z += z_inc;
                local[at] += remaining;
                break;
            }
            // The sojourn straddles the window boundary: split it exactly.
            let need = targets[window] - z;
            let delta = need / (l_at + (l_at * l_at + need).sqrt());
            acc[window].l[at] += need;
            local[at] += delta;
            z = targets[window];
            remaining -= delta;
            if window == 1 {
                break 'outer;
            }
            end1 = at;
            window = 1;
        }
        let (to, dir) = choose_target(g, at, &local, rate, rng);
        acc[window].k[dir] += 1;
        acc[window].last_exit[at] = Some(dir);
        at = to;
    }
    let end2 = at;
    let [acc1, acc2] = acc;
    let (k, l, tree1) = acc1.into_parts(g, i0, end1);
    let (k_prime, l_prime, tree2) = acc2.into_parts(g, end1, end2);
    let in_o = l.iter().all(|&x| x > 0.0)
        && l_prime.iter().all(|&x| x > 0.0)
        && matches!(tree1, LastExit::Tree(_))
        && matches!(tree2, LastExit::Tree(_));
    ObservableRecord {
        sigma,
        sigma_prime,
        k,
        k_prime,
        l,
        l_prime,
        end1,
        end2,
        tree1,
        tree2,
        in_o,
    }
}

/// First-window observable on its own: crossings, local times, endpoint and
/// last-exit tree of `[0, sigma]`. Its law does not depend on any second
/// window, so single-time statistics can be collected without paying for
/// one.
#[derive(Debug, Clone)]
pub struct SingleScaleRecord {
    pub sigma: f64,
    pub k: IntegerCurrent,
    pub l: Vec<f64>,
    pub end1: usize,
    pub tree1: LastExit,
}

impl SingleScaleRecord {
    /// True when every vertex was visited and the last-exit tree spans.
    pub fn complete(&self) -> bool {
        self.l.iter().all(|&x| x > 0.0) && matches!(self.tree1, LastExit::Tree(_))
    }

    /// Rescaled single-scale coordinates `(kappa, v)`; `None` unless the
    /// window is complete.
    pub fn rescaled(&self, g: &WeightedGraph, i0: usize) -> Option<(crate::graph::CurrentVector, Vec<f64>)> {
        if !self.complete() {
            return None;
        }
        let n = g.vertex_count();
        let l0 = self.l[i0];
        let sqrt_l0 = l0.sqrt();
        let mut v = vec![0.0; n];
        for i in 0..n {
            if i != i0 {
                v[i] = 0.5 * (self.l[i] / l0).ln();
            }
        }
        let mut kappa = vec![0.0; g.directed_edge_count()];
        for d in 0..g.directed_edge_count() {
            let e = &g.edges()[d / 2];
            let center = 0.5 * e.weight * (self.l[e.a] * self.l[e.b]).sqrt();
            kappa[d] = (self.k.values[d] as f64 - center) / sqrt_l0;
        }
        Some((crate::graph::CurrentVector { values: kappa }, v))
    }
}

/// Simulates just the first window `[0, sigma]` in changed time.
pub fn simulate_single_scale<R: Rng>(
    g: &WeightedGraph,
    i0: usize,
    sigma: f64,
    rng: &mut R,
) -> SingleScaleRecord {
    assert!(sigma > 0.0);
    let n = g.vertex_count();
    let mut acc = WindowAccumulator::new(g);
    let mut local = vec![1.0f64; n];
    let mut z = 0.0f64;
    let mut at = i0;
    loop {
        let rate = total_rate(g, at, &local);
        let remaining = draw_holding(rng, rate);
        let l_at = local[at];
        let z_inc = remaining * (2.0 * l_at + remaining);
        if z + z_inc >= sigma {
            let need = sigma - z;
            acc.l[at] += need;
            break;
        }
        acc.l[at] += z_inc;
        z += z_inc;
        local[at] += remaining;
        let (to, dir) = choose_target(g, at, &local, rate, rng);
        acc.k[dir] += 1;
        acc.last_exit[at] = Some(dir);
        at = to;
    }
    let (k, l, tree1) = acc.into_parts(g, i0, at);
    SingleScaleRecord {
        sigma,
        k,
        l,
        end1: at,
        tree1,
    }
}

/// Rescales a record onto the sigma-model coordinates. Requires every local
/// time positive and both last-exit trees spanning.
pub fn rescale(
    g: &WeightedGraph,
    rec: &ObservableRecord,
    i0: usize,
) -> Result<RescaledObservables, RescaleError> {
    if !rec.in_o {
        return Err(RescaleError);
    }
    let (tree1, tree2) = match (rec.tree1.as_tree(), rec.tree2.as_tree()) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => return Err(RescaleError),
    };
    if rec.l.iter().any(|&x| !(x > 0.0)) || rec.l_prime.iter().any(|&x| !(x > 0.0)) {
        return Err(RescaleError);
    }
    let n = g.vertex_count();
    let l0 = rec.l[i0];
    let l0p = rec.l_prime[i0];
    let sqrt_l0 = l0.sqrt();
    let sqrt_l0p = l0p.sqrt();
    let mut v = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut s = vec![0.0; n];
    for i in 0..n {
        if i != i0 {
            v[i] = 0.5 * (rec.l[i] / l0).ln();
            u[i] = 0.5 * (rec.l_prime[i] / l0p).ln();
            s[i] = sqrt_l0 * (u[i] - v[i]);
        }
    }
    let mut kappa = vec![0.0; g.directed_edge_count()];
    let mut kappa_prime = vec![0.0; g.directed_edge_count()];
    for d in 0..g.directed_edge_count() {
        let e = &g.edges()[d / 2];
        let center = 0.5 * e.weight * (rec.l[e.a] * rec.l[e.b]).sqrt();
        kappa[d] = (rec.k.values[d] as f64 - center) / sqrt_l0;
        let center_p = 0.5 * e.weight * (rec.l_prime[e.a] * rec.l_prime[e.b]).sqrt();
        kappa_prime[d] = (rec.k_prime.values[d] as f64 - center_p) / sqrt_l0p;
    }
    Ok(RescaledObservables {
        kappa: crate::graph::CurrentVector { values: kappa },
        kappa_prime: crate::graph::CurrentVector {
            values: kappa_prime,
        },
        s,
        v,
        u,
        end1: rec.end1,
        end2: rec.end2,
        tree1,
        tree2,
    })
}

/// Truncation event: every rescaled component bounded by `m` in absolute
/// value.
pub fn within_truncation(resc: &RescaledObservables, m: f64) -> bool {
    resc.kappa
        .values
        .iter()
        .chain(resc.kappa_prime.values.iter())
        .chain(resc.s.iter())
        .chain(resc.u.iter())
        .chain(resc.v.iter())
        .all(|x| x.abs() <= m)
}
