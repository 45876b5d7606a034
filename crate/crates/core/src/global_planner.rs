//! Global motion planning.
//!
//! Two planners share this module. The offline planner is an optimizing
//! RRT that uses the finite-horizon LQR value function both as its
//! distance metric and as its steering law, with choose-parent and rewire
//! steps. The real-time planner is a kinodynamic RRT over a small set of
//! constant-wrench motion primitives, guided by a weighted Euclidean
//! metric. A shortcut pass smooths either planner's output by splicing in
//! LQR connections and re-tracking the tail, so the result stays
//! dynamically consistent.

use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::rc::Rc;

use nalgebra::{SMatrix, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    self, ErrorState, InertialParams, InputVec, LtvMatrices, QuadraticCost, State, Wrench,
    WrenchLimits, NU, NX,
};
use crate::error::{Error, Result};
use crate::trajectory::{Knot, Trajectory};
use crate::world::{CheckMode, CheckResolution, WorldModel};

/// Finite-horizon value function `V_k(dx) = 1/2 dx'S_k dx + dx's_k + c_k`
/// with the associated feedback policy `du_k = -K_k dx - k_k`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub s_mat: Vec<SMatrix<f64, NX, NX>>,
    pub s_vec: Vec<ErrorState>,
    pub c: Vec<f64>,
    pub gains: Vec<SMatrix<f64, NU, NX>>,
    pub feedforward: Vec<InputVec>,
}

impl RiccatiSolution {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// Value of the metric at stage 0.
    pub fn value(&self, dx: &ErrorState) -> f64 {
        0.5 * dx.dot(&(self.s_mat[0] * dx)) + self.s_vec[0].dot(dx) + self.c[0]
    }

    /// Policy at stage `k`. Beyond the horizon the stage-0 policy is
    /// held, the receding-horizon reading: late-stage gains are myopic
    /// and destabilize long rollouts.
    pub fn control(&self, k: usize, dx: &ErrorState) -> InputVec {
        let k = if k < self.gains.len() { k } else { 0 };
        -(self.gains[k] * dx) - self.feedforward[k]
    }

    /// Stationary (stage-0) policy.
    pub fn control_stationary(&self, dx: &ErrorState) -> InputVec {
        -(self.gains[0] * dx) - self.feedforward[0]
    }
}

/// Backward Riccati recursion for the affine LTV system
/// `dx+ = A dx + B du + g` under a quadratic cost with linear and cross
/// terms. Returns value-function coefficients and gains for every stage.
pub fn riccati_backward(ltv: &[LtvMatrices], cost: &QuadraticCost) -> Result<RiccatiSolution> {
    let n = ltv.len();
    if n == 0 {
        return Err(Error::Invalid("riccati horizon must be at least 1".into()));
    }
    if cost.r.cholesky().is_none() {
        return Err(Error::Invalid("input weight R must be positive definite".into()));
    }
    let mut s_mat = vec![SMatrix::<f64, NX, NX>::zeros(); n + 1];
    let mut s_vec = vec![ErrorState::zeros(); n + 1];
    let mut c = vec![0.0; n + 1];
    let mut gains = vec![SMatrix::<f64, NU, NX>::zeros(); n];
    let mut feedforward = vec![InputVec::zeros(); n];

    s_mat[n] = cost.h_terminal;
    s_vec[n] = cost.h_lin;
    for k in (0..n).rev() {
        let (a, b, g) = (&ltv[k].a, &ltv[k].b, &ltv[k].g);
        let sp = s_mat[k + 1];
        let m = cost.r + b.transpose() * sp * b;
        let m_inv = m
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular input Hessian in Riccati recursion".into()))?;
        let l = b.transpose() * sp * a + cost.p_cross;
        let sg = sp * g + s_vec[k + 1];
        let mv = b.transpose() * sg + cost.r_lin;
        gains[k] = m_inv * l;
        feedforward[k] = m_inv * mv;
        let s = cost.q + a.transpose() * sp * a - l.transpose() * m_inv * l;
        s_mat[k] = 0.5 * (s + s.transpose());
        s_vec[k] = cost.q_lin + a.transpose() * sg - l.transpose() * (m_inv * mv);
        c[k] = c[k + 1] + 0.5 * g.dot(&(sp * g)) + s_vec[k + 1].dot(g)
            - 0.5 * mv.dot(&(m_inv * mv));
    }
    Ok(RiccatiSolution {
        s_mat,
        s_vec,
        c,
        gains,
        feedforward,
    })
}

/// Riccati solution for steering toward `x_to`: LTI linearization about
/// the target with zero nominal wrench, rolled out for `horizon` steps.
pub fn steering_riccati(
    x_to: &State,
    p: &InertialParams,
    cost: &QuadraticCost,
    dt: f64,
    horizon: usize,
) -> Result<RiccatiSolution> {
    let ltv = dynamics::linearize_discretize(x_to, &Wrench::zero(0.0), p, dt)?;
    let seq = vec![ltv; horizon];
    riccati_backward(&seq, cost)
}

/// Small LRU cache of steering Riccati solutions, keyed by the target
/// state bit pattern. Repeated steers toward one sample (nearest, near
/// set, rewire) reuse the same solution.
pub struct RiccatiCache {
    capacity: usize,
    map: HashMap<u64, Rc<RiccatiSolution>>,
    order: VecDeque<u64>,
}

impl RiccatiCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            map: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    fn key(x: &State) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in x.r.iter().chain(x.v.iter()).chain(x.w.iter()) {
            v.to_bits().hash(&mut h);
        }
        for v in x.q.coords.iter() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn get_or_compute(
        &mut self,
        x_to: &State,
        p: &InertialParams,
        cost: &QuadraticCost,
        dt: f64,
        horizon: usize,
    ) -> Result<Rc<RiccatiSolution>> {
        let key = Self::key(x_to);
        if let Some(hit) = self.map.get(&key) {
            return Ok(hit.clone());
        }
        let sol = Rc::new(steering_riccati(x_to, p, cost, dt, horizon)?);
        if self.map.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.map.remove(&old);
            }
        }
        self.map.insert(key, sol.clone());
        self.order.push_back(key);
        Ok(sol)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Closed-loop LQR rollout from `x_from` toward `x_to`, saturated to the
/// wrench limits and truncated at `t_max`. The endpoint is wherever the
/// rollout gets to, not necessarily `x_to`.
pub fn lqr_steer(
    x_from: &State,
    x_to: &State,
    ric: &RiccatiSolution,
    p: &InertialParams,
    limits: &WrenchLimits,
    dt: f64,
    t_max: f64,
) -> Result<Trajectory> {
    let steps = ((t_max / dt).floor() as usize).max(1);
    let mut x = *x_from;
    let mut knots = Vec::with_capacity(steps + 1);
    for k in 0..steps {
        let dx = x.error_from(x_to);
        if dx.amax() < 1e-6 {
            break;
        }
        let u = dynamics::saturate(
            &Wrench::from_vec(&ric.control_stationary(&dx), k as f64 * dt),
            limits,
        );
        knots.push(Knot {
            stamp: k as f64 * dt,
            state: x,
            wrench: u,
        });
        x = dynamics::step_rk4(&x, &u, p, dt)?;
        if !x.is_finite() {
            return Err(Error::Numerical("steering rollout diverged".into()));
        }
    }
    let stamp = knots.len() as f64 * dt;
    knots.push(Knot {
        stamp,
        state: x,
        wrench: Wrench::zero(stamp),
    });
    Trajectory::new(knots)
}

/// Running LQR cost of a trajectory measured about `dest`, time-weighted.
pub fn path_cost(traj: &Trajectory, dest: &State, cost: &QuadraticCost) -> f64 {
    let mut total = 0.0;
    for pair in traj.knots().windows(2) {
        let dt = pair[1].stamp - pair[0].stamp;
        let dx = pair[0].state.error_from(dest);
        let du = pair[0].wrench.to_vec();
        total += dt * cost.running(&dx, &du);
    }
    total
}

/// Search tree shared by both planners.
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub state: State,
    pub parent: Option<usize>,
    /// Trajectory from the parent's state to this node's state.
    pub edge: Option<Trajectory>,
    pub edge_cost: f64,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct PlanTree {
    pub nodes: Vec<TreeNode>,
}

impl PlanTree {
    pub fn rooted_at(x0: &State) -> Self {
        Self {
            nodes: vec![TreeNode {
                state: *x0,
                parent: None,
                edge: None,
                edge_cost: 0.0,
                cost: 0.0,
            }],
        }
    }

    pub fn add(&mut self, parent: usize, state: State, edge: Trajectory, edge_cost: f64) -> usize {
        let cost = self.nodes[parent].cost + edge_cost;
        self.nodes.push(TreeNode {
            state,
            parent: Some(parent),
            edge: Some(edge),
            edge_cost,
            cost,
        });
        self.nodes.len() - 1
    }

    pub fn is_ancestor(&self, candidate: usize, of: usize) -> bool {
        let mut i = of;
        while let Some(p) = self.nodes[i].parent {
            if p == candidate {
                return true;
            }
            i = p;
        }
        false
    }

    /// Re-derive every cost from the root after a rewire.
    pub fn recompute_costs(&mut self) {
        let n = self.nodes.len();
        let mut children = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                children[p].push(i);
            }
        }
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            for &ch in &children[i] {
                self.nodes[ch].cost = self.nodes[i].cost + self.nodes[ch].edge_cost;
                stack.push(ch);
            }
        }
    }

    /// Concatenated trajectory from the root to node `i`.
    pub fn path_to(&self, i: usize) -> Result<Trajectory> {
        let mut chain = Vec::new();
        let mut cur = i;
        loop {
            match self.nodes[cur].parent {
                Some(p) => {
                    chain.push(cur);
                    cur = p;
                }
                None => break,
            }
        }
        chain.reverse();
        let root = &self.nodes[0];
        let mut traj = Trajectory::hold(&root.state, 0.0, 1.0, 1);
        for idx in chain {
            let edge = self.nodes[idx]
                .edge
                .as_ref()
                .ok_or_else(|| Error::Invalid("non-root node missing its edge".into()))?;
            traj = traj.concat(edge)?;
        }
        Ok(traj)
    }

    /// One JSON object per node, for offline inspection.
    pub fn dump_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            let line = serde_json::json!({
                "id": i,
                "parent": node.parent,
                "cost": node.cost,
                "state": node.state,
            });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Nearest tree node to `x_rand` under the value-function metric; ties
/// break toward the lowest index.
pub fn lqr_nearest(tree: &PlanTree, x_rand: &State, ric: &RiccatiSolution) -> usize {
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (i, node) in tree.nodes.iter().enumerate() {
        let v = ric.value(&node.state.error_from(x_rand));
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// Terminal tolerance for reaching a target state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GoalTolerance {
    pub pos: f64,
    pub vel: f64,
    pub att: f64,
    pub ang_vel: f64,
}

impl Default for GoalTolerance {
    fn default() -> Self {
        Self {
            pos: 0.05,
            vel: 0.05,
            att: 10f64.to_radians(),
            ang_vel: 0.1,
        }
    }
}

impl GoalTolerance {
    pub fn satisfied(&self, x: &State, goal: &State) -> bool {
        (x.r - goal.r).norm() <= self.pos
            && (x.v - goal.v).norm() <= self.vel
            && x.q.angle_to(&goal.q) <= self.att
            && (x.w - goal.w).norm() <= self.ang_vel
    }
}

#[derive(Debug, Clone)]
pub struct RrtConfig {
    pub max_samples: usize,
    pub seed: u64,
    /// Constant in the near-set radius `gamma (log n / n)^(1/NX)`.
    pub gamma: f64,
    pub goal_bias: f64,
    pub steer_dt: f64,
    pub steer_t_max: f64,
    pub riccati_horizon: usize,
    /// Velocity sampling box half-width, m/s.
    pub vel_box: f64,
    /// Yaw sampling half-range, rad (attitude sampling is planar).
    pub yaw_range: f64,
    pub goal_tol: GoalTolerance,
    pub cost: QuadraticCost,
    pub limits: WrenchLimits,
    pub resolution: CheckResolution,
    pub cache_capacity: usize,
}

impl Default for RrtConfig {
    fn default() -> Self {
        let mut q = SMatrix::<f64, NX, NX>::zeros();
        for i in 0..3 {
            q[(i, i)] = 10.0;
            q[(i + 3, i + 3)] = 2.0;
            q[(i + 6, i + 6)] = 5.0;
            q[(i + 9, i + 9)] = 1.0;
        }
        let r = SMatrix::<f64, NU, NU>::identity() * 20.0;
        Self {
            max_samples: 2000,
            seed: 0,
            gamma: 2.5,
            goal_bias: 0.05,
            steer_dt: 0.2,
            steer_t_max: 12.0,
            riccati_horizon: 60,
            vel_box: 0.1,
            yaw_range: 0.5,
            goal_tol: GoalTolerance::default(),
            cost: QuadraticCost::new(q, r, q),
            limits: WrenchLimits::astrobee_2000rpm(),
            resolution: CheckResolution::default(),
            cache_capacity: 64,
        }
    }
}

fn sample_state(world: &WorldModel, cfg: &RrtConfig, rng: &mut ChaCha8Rng) -> State {
    let (lo, hi) = (world.keep_in.min, world.keep_in.max);
    let r = Vector3::new(
        rng.gen_range(lo.x..hi.x),
        rng.gen_range(lo.y..hi.y),
        rng.gen_range(lo.z..hi.z),
    );
    let v = Vector3::new(
        rng.gen_range(-cfg.vel_box..cfg.vel_box),
        rng.gen_range(-cfg.vel_box..cfg.vel_box),
        rng.gen_range(-cfg.vel_box..cfg.vel_box),
    );
    let yaw = if cfg.yaw_range > 0.0 {
        rng.gen_range(-cfg.yaw_range..cfg.yaw_range)
    } else {
        0.0
    };
    State {
        r,
        q: UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, yaw)),
        v,
        w: Vector3::zeros(),
    }
}

/// Offline optimizing planner: value-function nearest, LQR steering,
/// choose-parent over the near set, rewire, stop on the first trajectory
/// that reaches the goal tolerance.
pub fn lqr_rrt_star(
    x0: &State,
    x_goal: &State,
    world: &WorldModel,
    p: &InertialParams,
    cfg: &RrtConfig,
) -> Result<(Trajectory, PlanTree)> {
    if !world.point_free(&x0.r) {
        return Err(Error::Invalid("start state is in collision".into()));
    }
    if !world.point_free(&x_goal.r) {
        return Err(Error::NoPath("goal state is in collision".into()));
    }
    let mode = CheckMode::PointInflated;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cache = RiccatiCache::new(cfg.cache_capacity);
    let mut tree = PlanTree::rooted_at(x0);
    let goal_ric = cache.get_or_compute(x_goal, p, &cfg.cost, cfg.steer_dt, cfg.riccati_horizon)?;
    let mut best_goal_dist = f64::INFINITY;

    for _ in 0..cfg.max_samples {
        let x_rand = if rng.gen::<f64>() < cfg.goal_bias {
            *x_goal
        } else {
            sample_state(world, cfg, &mut rng)
        };
        let ric = cache.get_or_compute(&x_rand, p, &cfg.cost, cfg.steer_dt, cfg.riccati_horizon)?;
        let nearest = lqr_nearest(&tree, &x_rand, &ric);
        let edge = lqr_steer(
            &tree.nodes[nearest].state,
            &x_rand,
            &ric,
            p,
            &cfg.limits,
            cfg.steer_dt,
            cfg.steer_t_max,
        )?;
        let x_new = edge.last().unwrap().state;
        if !world.trajectory_free(&edge, &cfg.resolution, mode)? {
            continue;
        }

        // choose-parent over the value-metric near set around x_new
        let new_ric = cache.get_or_compute(&x_new, p, &cfg.cost, cfg.steer_dt, cfg.riccati_horizon)?;
        let n = tree.nodes.len() as f64;
        let radius = cfg.gamma * ((n.ln().max(1.0)) / n).powf(1.0 / NX as f64);
        let near: Vec<usize> = tree
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, node)| new_ric.value(&node.state.error_from(&x_new)) <= radius)
            .map(|(i, _)| i)
            .collect();

        let mut parent = nearest;
        let mut parent_edge = edge;
        let mut parent_edge_cost = path_cost(&parent_edge, &x_new, &cfg.cost);
        let mut parent_total = tree.nodes[nearest].cost + parent_edge_cost;
        for &i in &near {
            if i == nearest {
                continue;
            }
            let cand = lqr_steer(
                &tree.nodes[i].state,
                &x_new,
                &new_ric,
                p,
                &cfg.limits,
                cfg.steer_dt,
                cfg.steer_t_max,
            )?;
            let end = cand.last().unwrap().state;
            if !cfg.goal_tol.satisfied(&end, &x_new) {
                continue;
            }
            let c = path_cost(&cand, &x_new, &cfg.cost);
            if tree.nodes[i].cost + c < parent_total
                && world.trajectory_free(&cand, &cfg.resolution, mode)?
            {
                parent = i;
                parent_edge_cost = c;
                parent_total = tree.nodes[i].cost + c;
                parent_edge = cand;
            }
        }
        let x_added = parent_edge.last().unwrap().state;
        let new_idx = tree.add(parent, x_added, parent_edge, parent_edge_cost);

        // rewire near nodes through the new node
        for &i in &near {
            if i == parent || tree.is_ancestor(i, new_idx) {
                continue;
            }
            let target = tree.nodes[i].state;
            let near_ric =
                cache.get_or_compute(&target, p, &cfg.cost, cfg.steer_dt, cfg.riccati_horizon)?;
            let cand = lqr_steer(
                &x_added,
                &target,
                &near_ric,
                p,
                &cfg.limits,
                cfg.steer_dt,
                cfg.steer_t_max,
            )?;
            let end = cand.last().unwrap().state;
            if !cfg.goal_tol.satisfied(&end, &target) {
                continue;
            }
            let c = path_cost(&cand, &target, &cfg.cost);
            if tree.nodes[new_idx].cost + c + 1e-12 < tree.nodes[i].cost
                && world.trajectory_free(&cand, &cfg.resolution, mode)?
            {
                tree.nodes[i].parent = Some(new_idx);
                tree.nodes[i].edge = Some(cand);
                tree.nodes[i].edge_cost = c;
                tree.recompute_costs();
            }
        }

        best_goal_dist = best_goal_dist.min((x_added.r - x_goal.r).norm());
        if cfg.goal_tol.satisfied(&x_added, x_goal) {
            return Ok((tree.path_to(new_idx)?, tree));
        }
        // direct goal connection attempt from the new node
        let reach = lqr_steer(
            &x_added,
            x_goal,
            &goal_ric,
            p,
            &cfg.limits,
            cfg.steer_dt,
            cfg.steer_t_max,
        )?;
        let end = reach.last().unwrap().state;
        if cfg.goal_tol.satisfied(&end, x_goal)
            && world.trajectory_free(&reach, &cfg.resolution, mode)?
        {
            let c = path_cost(&reach, x_goal, &cfg.cost);
            let goal_idx = tree.add(new_idx, end, reach, c);
            return Ok((tree.path_to(goal_idx)?, tree));
        }
    }
    Err(Error::NoPath(format!(
        "sample budget exhausted: {} nodes, best goal distance {:.3} m",
        tree.nodes.len(),
        best_goal_dist
    )))
}

#[derive(Debug, Clone)]
pub struct ShortcutConfig {
    pub iterations: usize,
    pub seed: u64,
    pub cost: QuadraticCost,
    pub limits: WrenchLimits,
    pub resolution: CheckResolution,
    pub mode: CheckMode,
    pub riccati_horizon: usize,
}

impl Default for ShortcutConfig {
    fn default() -> Self {
        let base = RrtConfig::default();
        Self {
            iterations: 60,
            seed: 0,
            cost: base.cost,
            limits: base.limits,
            resolution: base.resolution,
            mode: CheckMode::PointInflated,
            riccati_horizon: 60,
        }
    }
}

/// Total cost used to rank shortcut candidates: time-weighted running
/// cost about the trajectory's own endpoint plus the terminal penalty
/// for missing it.
fn shortcut_cost(traj: &Trajectory, goal: &State, cost: &QuadraticCost) -> f64 {
    let end = traj.last().unwrap().state;
    path_cost(traj, goal, cost) + cost.terminal(&end.error_from(goal))
}

/// Iterative shortcut smoothing: sample two knots, splice in an LQR
/// connection between them, re-track the remaining tail with feedback so
/// the result is one consistent rollout, accept on lower cost and a clean
/// collision check.
pub fn shortcut(
    traj: &Trajectory,
    world: &WorldModel,
    p: &InertialParams,
    cfg: &ShortcutConfig,
) -> Result<Trajectory> {
    if traj.len() < 4 {
        return Ok(traj.clone());
    }
    let goal = traj.last().unwrap().state;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cache = RiccatiCache::new(64);
    let mut best = traj.clone();
    let mut best_cost = shortcut_cost(&best, &goal, &cfg.cost);

    for _ in 0..cfg.iterations {
        let n = best.len();
        if n < 4 {
            break;
        }
        let a = rng.gen_range(0..n - 2);
        let b = rng.gen_range(a + 2..n);
        let x_a = best.knots()[a].state;
        let x_b = best.knots()[b].state;
        let dt = best.knots()[a + 1].stamp - best.knots()[a].stamp;
        let span = best.knots()[b].stamp - best.knots()[a].stamp;
        let ric = cache.get_or_compute(&x_b, p, &cfg.cost, dt, cfg.riccati_horizon)?;
        let bridge = lqr_steer(&x_a, &x_b, &ric, p, &cfg.limits, dt, span)?;

        // re-track the tail from wherever the bridge ends so the patched
        // trajectory stays a single consistent rollout
        let mut knots: Vec<Knot> = best.knots()[..a].to_vec();
        let offset = best.knots()[a].stamp;
        for k in bridge.knots()[..bridge.len() - 1].iter() {
            knots.push(Knot {
                stamp: k.stamp + offset,
                state: k.state,
                wrench: Wrench {
                    stamp: k.stamp + offset,
                    ..k.wrench
                },
            });
        }
        let mut x = bridge.last().unwrap().state;
        let mut stamp = offset + bridge.last().unwrap().stamp;
        let track_gain = ric.gains[0];
        for k in b..n {
            let knot_ref = &best.knots()[k];
            let du = -(track_gain * x.error_from(&knot_ref.state));
            let u = dynamics::saturate(
                &Wrench::from_vec(&(knot_ref.wrench.to_vec() + du), stamp),
                &cfg.limits,
            );
            knots.push(Knot {
                stamp,
                state: x,
                wrench: u,
            });
            if k + 1 < n {
                let step = best.knots()[k + 1].stamp - best.knots()[k].stamp;
                x = dynamics::step_rk4(&x, &u, p, step)?;
                stamp += step;
            }
        }
        let candidate = match Trajectory::new(knots) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let c = shortcut_cost(&candidate, &goal, &cfg.cost);
        if c < best_cost && world.trajectory_free(&candidate, &cfg.resolution, cfg.mode)? {
            best = candidate;
            best_cost = c;
        }
    }
    Ok(best)
}

/// Constant-wrench action set: the zero action plus a +/- action per
/// force and torque axis, `2m + 1` in total.
#[derive(Debug, Clone)]
pub struct MotionPrimitiveSet {
    pub actions: Vec<Wrench>,
    /// Duration each action is held, s.
    pub t_a: f64,
    /// Scale applied to the per-axis limits, in [0, 1].
    pub c: f64,
}

impl MotionPrimitiveSet {
    pub fn axis_aligned(limits: &WrenchLimits, c: f64, t_a: f64) -> Self {
        let mut actions = vec![Wrench::zero(0.0)];
        let lim = limits.to_vec();
        for axis in 0..NU {
            for sign in [1.0, -1.0] {
                let mut u = InputVec::zeros();
                u[axis] = sign * c * lim[axis];
                actions.push(Wrench::from_vec(&u, 0.0));
            }
        }
        Self { actions, t_a, c }
    }
}

/// Diagonal weights of the kinodynamic nearest metric over the error
/// state `[dr, dphi, dv, dw]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricWeights {
    pub pos: f64,
    pub att: f64,
    pub vel: f64,
    pub ang_vel: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            pos: 1.0,
            att: 0.5,
            vel: 3.0,
            ang_vel: 0.5,
        }
    }
}

impl MetricWeights {
    pub fn metric(&self, x: &State, target: &State) -> f64 {
        let e = x.error_from(target);
        let mut total = 0.0;
        for i in 0..3 {
            total += self.pos * e[i] * e[i]
                + self.att * e[i + 3] * e[i + 3]
                + self.vel * e[i + 6] * e[i + 6]
                + self.ang_vel * e[i + 9] * e[i + 9];
        }
        total
    }
}

#[derive(Debug, Clone)]
pub struct KinoConfig {
    pub max_iterations: usize,
    pub seed: u64,
    pub goal_bias: f64,
    /// Integration sub-step within one action, s.
    pub substep_dt: f64,
    pub weights: MetricWeights,
    pub goal_tol: GoalTolerance,
    pub vel_box: f64,
    pub yaw_range: f64,
    pub mode: CheckMode,
}

impl Default for KinoConfig {
    fn default() -> Self {
        Self {
            max_iterations: 6000,
            seed: 0,
            goal_bias: 0.1,
            substep_dt: 0.2,
            weights: MetricWeights::default(),
            goal_tol: GoalTolerance::default(),
            vel_box: 0.1,
            yaw_range: 0.5,
            mode: CheckMode::EllipsoidOnEllipsoid,
        }
    }
}

/// Forward-integrate every primitive from `x_from` for `t_a`, discard
/// colliding rollouts, and return the primitive whose endpoint is closest
/// to `x_target` under the weighted metric.
pub fn guided_steer(
    x_from: &State,
    x_target: &State,
    mp: &MotionPrimitiveSet,
    p: &InertialParams,
    world: &WorldModel,
    cfg: &KinoConfig,
) -> Result<Option<(usize, Trajectory)>> {
    let substeps = (mp.t_a / cfg.substep_dt).round().max(1.0) as usize;
    let mut best: Option<(usize, Trajectory, f64)> = None;
    for (idx, action) in mp.actions.iter().enumerate() {
        let mut x = *x_from;
        let mut knots = vec![Knot {
            stamp: 0.0,
            state: x,
            wrench: Wrench { stamp: 0.0, ..*action },
        }];
        let mut feasible = true;
        for s in 0..substeps {
            x = dynamics::step_rk4(&x, action, p, cfg.substep_dt)?;
            if !x.is_finite() || !world.position_free(&x.r, cfg.mode) {
                feasible = false;
                break;
            }
            let stamp = (s + 1) as f64 * cfg.substep_dt;
            knots.push(Knot {
                stamp,
                state: x,
                wrench: Wrench { stamp, ..*action },
            });
        }
        if !feasible {
            continue;
        }
        let score = cfg.weights.metric(&x, x_target);
        if best.as_ref().map_or(true, |(_, _, s)| score < *s) {
            best = Some((idx, Trajectory::new(knots)?, score));
        }
    }
    Ok(best.map(|(i, t, _)| (i, t)))
}

/// Real-time kinodynamic planner over the motion-primitive set, with
/// goal-biased sampling and the weighted Euclidean nearest metric.
pub fn kino_rrt(
    x0: &State,
    x_goal: &State,
    world: &WorldModel,
    p: &InertialParams,
    mp: &MotionPrimitiveSet,
    cfg: &KinoConfig,
) -> Result<(Trajectory, PlanTree)> {
    if !world.position_free(&x0.r, cfg.mode) {
        return Err(Error::Invalid("start state is in collision".into()));
    }
    let tree = PlanTree::rooted_at(x0);
    if cfg.goal_tol.satisfied(x0, x_goal) {
        return Ok((Trajectory::hold(x0, 0.0, 1.0, 1), tree));
    }
    if !world.position_free(&x_goal.r, cfg.mode) {
        return Err(Error::NoPath("goal state is in collision".into()));
    }
    let mut tree = tree;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rrt_sampling = RrtConfig {
        vel_box: cfg.vel_box,
        yaw_range: cfg.yaw_range,
        ..RrtConfig::default()
    };
    let mut best_goal_dist = f64::INFINITY;

    for _ in 0..cfg.max_iterations {
        let x_rand = if rng.gen::<f64>() < cfg.goal_bias {
            *x_goal
        } else {
            // resample until free
            let mut s = sample_state(world, &rrt_sampling, &mut rng);
            for _ in 0..50 {
                if world.position_free(&s.r, cfg.mode) {
                    break;
                }
                s = sample_state(world, &rrt_sampling, &mut rng);
            }
            s
        };
        let mut nearest = 0;
        let mut nearest_score = f64::INFINITY;
        for (i, node) in tree.nodes.iter().enumerate() {
            let s = cfg.weights.metric(&node.state, &x_rand);
            if s < nearest_score {
                nearest_score = s;
                nearest = i;
            }
        }
        let Some((_, edge)) = guided_steer(&tree.nodes[nearest].state, &x_rand, mp, p, world, cfg)?
        else {
            continue;
        };
        let x_new = edge.last().unwrap().state;
        let edge_cost = edge.duration();
        let idx = tree.add(nearest, x_new, edge, edge_cost);
        best_goal_dist = best_goal_dist.min((x_new.r - x_goal.r).norm());
        if cfg.goal_tol.satisfied(&x_new, x_goal) {
            return Ok((tree.path_to(idx)?, tree));
        }
    }
    Err(Error::NoPath(format!(
        "iteration budget exhausted: {} nodes, best goal distance {:.3} m",
        tree.nodes.len(),
        best_goal_dist
    )))
}
