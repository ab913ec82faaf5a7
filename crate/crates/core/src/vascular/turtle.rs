//! 3D turtle interpretation of bracketed instruction strings.
//!
//! | symbol | action |
//! |--------|--------|
//! | `F` | draw one segment |
//! | `+` `-` | yaw left / right (about the up axis) |
//! | `&` `^` | pitch down / up (about the left axis) |
//! | `\` `/` | roll left / right (about the heading) |
//! | `[` `]` | push / pop turtle state |
//!
//! Other symbols are ignored. Turns collected since the last `F` decide the
//! direction of the bend; its magnitude is drawn uniformly from
//! `angle_range`, so every bend (and so every bifurcation angle) lies inside
//! that range. Daughter diameters follow Murray's law with a random flow split.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::surface::TriangleMesh;
use super::tree::VesselTree;
use crate::error::{Error, Result};
use crate::geometry::{any_perpendicular, axis_rotation, Pose3, Vec3};
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyProbs {
    #[serde(default)]
    pub aneurysm: f64,
    #[serde(default)]
    pub stenosis: f64,
}

impl Default for AnomalyProbs {
    fn default() -> Self {
        Self {
            aneurysm: 0.0,
            stenosis: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurtleParams {
    /// Root segment length in meters.
    pub step_length: f64,
    /// Length multiplier per bracket generation.
    pub length_ratio: f64,
    pub root_diameter: f64,
    pub murray_exponent: f64,
    /// Bend angle bounds in degrees.
    pub angle_range: [f64; 2],
    /// Flow share bounds for one daughter at a bifurcation.
    pub flow_split: [f64; 2],
    pub anomaly_probs: AnomalyProbs,
    pub origin: [f64; 3],
    #[serde(skip)]
    pub boundary: Option<TriangleMesh>,
}

impl Default for TurtleParams {
    fn default() -> Self {
        Self {
            step_length: 4e-3,
            length_ratio: 0.8,
            root_diameter: 2e-3,
            murray_exponent: 3.0,
            angle_range: [35.0, 55.0],
            flow_split: [0.3, 0.7],
            anomaly_probs: AnomalyProbs::default(),
            origin: [0.0; 3],
            boundary: None,
        }
    }
}

impl TurtleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.step_length > 0.0) {
            return bad("step_length must be positive");
        }
        if !(self.length_ratio > 0.0 && self.length_ratio <= 1.0) {
            return bad("length_ratio must lie in (0, 1]");
        }
        if !(self.root_diameter > 0.0) {
            return bad("root_diameter must be positive");
        }
        if !(self.murray_exponent > 0.0) {
            return bad("murray_exponent must be positive");
        }
        let [lo, hi] = self.angle_range;
        if !(lo > 0.0 && lo <= hi && hi < 90.0) {
            return bad("angle_range must satisfy 0 < min <= max < 90 degrees");
        }
        let [slo, shi] = self.flow_split;
        if !(slo > 0.0 && slo <= shi && shi < 1.0) {
            return bad("flow_split must satisfy 0 < min <= max < 1");
        }
        let p = self.anomaly_probs;
        for v in [p.aneurysm, p.stenosis] {
            if !(0.0..=1.0).contains(&v) {
                return bad("anomaly probabilities must lie in [0, 1]");
            }
        }
        if p.aneurysm + p.stenosis > 1.0 {
            return bad("anomaly probabilities sum above 1");
        }
        Ok(())
    }
}

/// Split a parent diameter so that `d_p^m = sum d_i^m` with the given flow shares.
pub fn murray_split(parent_diameter: f64, shares: &[f64], exponent: f64) -> Vec<f64> {
    let total: f64 = shares.iter().sum();
    shares
        .iter()
        .map(|s| parent_diameter * (s / total).powf(1.0 / exponent))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Turn {
    Yaw(f64),
    Pitch(f64),
    Roll(f64),
}

#[derive(Debug, Clone, PartialEq)]
enum Item {
    Forward,
    Turn(Turn),
    Branch(Vec<Item>),
}

fn parse(instructions: &str) -> Result<Vec<Item>> {
    let mut stack: Vec<Vec<Item>> = vec![Vec::new()];
    for (pos, c) in instructions.chars().enumerate() {
        let item = match c {
            'F' => Item::Forward,
            '+' => Item::Turn(Turn::Yaw(1.0)),
            '-' => Item::Turn(Turn::Yaw(-1.0)),
            '&' => Item::Turn(Turn::Pitch(1.0)),
            '^' => Item::Turn(Turn::Pitch(-1.0)),
            '\\' => Item::Turn(Turn::Roll(1.0)),
            '/' => Item::Turn(Turn::Roll(-1.0)),
            '[' => {
                stack.push(Vec::new());
                continue;
            }
            ']' => {
                if stack.len() < 2 {
                    return Err(Error::UnbalancedBrackets(pos));
                }
                let body = stack.pop().unwrap();
                Item::Branch(body)
            }
            _ => continue,
        };
        stack.last_mut().unwrap().push(item);
    }
    if stack.len() != 1 {
        return Err(Error::UnbalancedBrackets(instructions.chars().count()));
    }
    Ok(stack.pop().unwrap())
}

fn draws(items: &[Item]) -> bool {
    items.iter().any(|it| match it {
        Item::Forward => true,
        Item::Branch(b) => draws(b),
        Item::Turn(_) => false,
    })
}

#[derive(Clone)]
struct TurtleState {
    pose: Pose3,
    diameter: f64,
    step: f64,
    node: usize,
    pending: Vec<Turn>,
    stopped: bool,
}

struct Interpreter<'a> {
    params: &'a TurtleParams,
    rng: ChaCha20Rng,
    tree: VesselTree,
}

impl Interpreter<'_> {
    fn sample_angle(&mut self) -> f64 {
        let [lo, hi] = self.params.angle_range;
        self.rng.random_range(lo..=hi).to_radians()
    }

    /// Diameters for the drawing branches between `start` and the next `F`,
    /// plus the diameter of that continuation `F`.
    fn assign(&mut self, items: &[Item], start: usize, diameter: f64) -> (Vec<(usize, f64)>, f64) {
        let mut children = Vec::new();
        let mut continuation = false;
        for (i, it) in items.iter().enumerate().skip(start) {
            match it {
                Item::Forward => {
                    continuation = true;
                    break;
                }
                Item::Branch(b) if draws(b) => children.push(i),
                _ => {}
            }
        }
        let count = children.len() + usize::from(continuation);
        if count < 2 {
            return (children.into_iter().map(|i| (i, diameter)).collect(), diameter);
        }
        let [lo, hi] = self.params.flow_split;
        let shares: Vec<f64> = if count == 2 {
            let s = self.rng.random_range(lo..=hi);
            vec![s, 1.0 - s]
        } else {
            (0..count).map(|_| self.rng.random_range(lo..=hi)).collect()
        };
        let diameters = murray_split(diameter, &shares, self.params.murray_exponent);
        let cont = if continuation { diameters[count - 1] } else { diameter };
        (children.into_iter().zip(diameters).collect(), cont)
    }

    fn run(&mut self, items: &[Item], mut state: TurtleState) {
        let (mut branch_diams, mut cont_diam) = self.assign(items, 0, state.diameter);
        for (i, item) in items.iter().enumerate() {
            match item {
                Item::Turn(t) => state.pending.push(*t),
                Item::Branch(body) => {
                    let mut child = state.clone();
                    child.step *= self.params.length_ratio;
                    if let Some(&(_, d)) = branch_diams.iter().find(|(idx, _)| *idx == i) {
                        child.diameter = d;
                    }
                    self.run(body, child);
                }
                Item::Forward => {
                    state.diameter = cont_diam;
                    self.forward(&mut state);
                    (branch_diams, cont_diam) = self.assign(items, i + 1, state.diameter);
                }
            }
        }
    }

    fn apply_pending(&mut self, state: &mut TurtleState) {
        if state.pending.is_empty() {
            return;
        }
        let nominal = 0.5 * (self.params.angle_range[0] + self.params.angle_range[1]).to_radians();
        let mut probe = state.pose;
        for t in &state.pending {
            match *t {
                Turn::Yaw(s) => probe.rotate_local(2, s * nominal),
                Turn::Pitch(s) => probe.rotate_local(1, s * nominal),
                Turn::Roll(s) => probe.rotate_local(0, s * nominal),
            }
        }
        let pending = std::mem::take(&mut state.pending);
        for t in &pending {
            if let Turn::Roll(s) = *t {
                let a = self.sample_angle();
                state.pose.rotate_local(0, s * a);
            }
        }
        let h = state.pose.heading();
        let h_new = probe.heading();
        if (h_new - h).norm() < 1e-12 {
            return;
        }
        let cross = h.cross(&h_new);
        let axis = if cross.norm() < 1e-12 {
            any_perpendicular(&h)
        } else {
            cross.normalize()
        };
        let theta = self.sample_angle();
        state.pose.orientation = axis_rotation(&axis, theta) * state.pose.orientation;
    }

    fn forward(&mut self, state: &mut TurtleState) {
        if state.stopped {
            state.pending.clear();
            return;
        }
        self.apply_pending(state);
        let from = state.pose.position;
        let mut to = from + state.pose.heading() * state.step;
        if let Some(boundary) = &self.params.boundary {
            if let Some(t) = boundary.first_crossing(&from, &to) {
                to = from + (to - from) * (t * (1.0 - 1e-6));
                state.stopped = true;
            }
        }
        let anomaly = self.sample_anomaly();
        if (to - from).norm() <= 1e-12 * state.step {
            return;
        }
        state.node = self.tree.add_segment(state.node, to, state.diameter, anomaly);
        state.pose.position = to;
    }

    fn sample_anomaly(&mut self) -> f64 {
        let p = self.params.anomaly_probs;
        let u: f64 = self.rng.random();
        if u < p.aneurysm {
            self.rng.random_range(1.5..=2.5)
        } else if u < p.aneurysm + p.stenosis {
            self.rng.random_range(0.3..=0.6)
        } else {
            1.0
        }
    }
}

/// Walk the instruction string and build the vessel skeleton.
pub fn interpret(instructions: &str, params: &TurtleParams, seed: RngSeed) -> Result<VesselTree> {
    params.validate()?;
    let items = parse(instructions)?;
    let origin = Vec3::from(params.origin);
    let mut interp = Interpreter {
        params,
        rng: seed.stream("turtle"),
        tree: VesselTree::new(origin),
    };
    let state = TurtleState {
        pose: Pose3::heading_z(origin),
        diameter: params.root_diameter,
        step: params.step_length,
        node: 0,
        pending: Vec::new(),
        stopped: false,
    };
    interp.run(&items, state);
    if interp.tree.is_empty() {
        return Err(Error::DegenerateTree("no segments were drawn".into()));
    }
    Ok(interp.tree)
}
