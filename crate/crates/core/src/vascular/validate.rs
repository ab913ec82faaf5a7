use serde::Serialize;

use super::tree::VesselTree;
use super::turtle::TurtleParams;

/// Measurements at one branching node (a node with two or more outgoing segments
/// and an incoming parent segment).
#[derive(Debug, Clone, Serialize)]
pub struct BifurcationReport {
    pub node: usize,
    pub parent_segment: usize,
    pub children: Vec<usize>,
    /// Angle between the parent direction and each daughter, degrees.
    pub angles_deg: Vec<f64>,
    /// `|d_p^m - sum d_c^m| / d_p^m` on nominal diameters.
    pub murray_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub bifurcations: Vec<BifurcationReport>,
    pub boundary_violations: usize,
    pub diameter_violations: usize,
    pub connected: bool,
    pub angles_ok: bool,
    pub murray_ok: bool,
    pub boundary_ok: bool,
    pub diameters_ok: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.connected && self.angles_ok && self.murray_ok && self.boundary_ok && self.diameters_ok
    }
}

pub const MURRAY_TOLERANCE: f64 = 0.01;
const ANGLE_SLACK_DEG: f64 = 1e-7;

pub fn validate_tree(tree: &VesselTree, params: &TurtleParams) -> ValidationReport {
    let incoming = tree.incoming();
    let outgoing = tree.outgoing();
    let m = params.murray_exponent;
    let [amin, amax] = params.angle_range;

    let mut bifurcations = Vec::new();
    let mut diameter_violations = 0;
    for (node, out) in outgoing.iter().enumerate() {
        let Some(parent) = incoming[node] else { continue };
        let dp = tree.segments[parent].diameter;
        diameter_violations += out
            .iter()
            .filter(|&&c| tree.segments[c].diameter > dp * (1.0 + 1e-12))
            .count();
        if out.len() < 2 {
            continue;
        }
        let pdir = tree.direction(parent).normalize();
        let angles_deg = out
            .iter()
            .map(|&c| {
                let cdir = tree.direction(c).normalize();
                pdir.dot(&cdir).clamp(-1.0, 1.0).acos().to_degrees()
            })
            .collect();
        let sum: f64 = out.iter().map(|&c| tree.segments[c].diameter.powf(m)).sum();
        let dpm = dp.powf(m);
        bifurcations.push(BifurcationReport {
            node,
            parent_segment: parent,
            children: out.clone(),
            angles_deg,
            murray_residual: (dpm - sum).abs() / dpm,
        });
    }

    let boundary_violations = params
        .boundary
        .as_ref()
        .map(|b| tree.nodes.iter().filter(|n| !b.contains(n)).count())
        .unwrap_or(0);

    let angles_ok = bifurcations.iter().all(|b| {
        b.angles_deg
            .iter()
            .all(|&a| a >= amin - ANGLE_SLACK_DEG && a <= amax + ANGLE_SLACK_DEG)
    });
    let murray_ok = bifurcations.iter().all(|b| b.murray_residual <= MURRAY_TOLERANCE);

    ValidationReport {
        bifurcations,
        boundary_violations,
        diameter_violations,
        connected: is_connected_tree(tree, &incoming, &outgoing),
        angles_ok,
        murray_ok,
        boundary_ok: boundary_violations == 0,
        diameters_ok: diameter_violations == 0,
    }
}

fn is_connected_tree(tree: &VesselTree, incoming: &[Option<usize>], outgoing: &[Vec<usize>]) -> bool {
    if incoming[tree.root].is_some() {
        return false;
    }
    // every non-root node has exactly one parent segment
    let mut in_count = vec![0usize; tree.nodes.len()];
    for s in &tree.segments {
        in_count[s.child] += 1;
    }
    if in_count
        .iter()
        .enumerate()
        .any(|(n, &c)| if n == tree.root { c != 0 } else { c != 1 })
    {
        return false;
    }
    let mut seen = vec![false; tree.nodes.len()];
    let mut stack = vec![tree.root];
    while let Some(n) = stack.pop() {
        if std::mem::replace(&mut seen[n], true) {
            return false;
        }
        stack.extend(outgoing[n].iter().map(|&s| tree.segments[s].child));
    }
    seen.into_iter().all(|s| s)
}
