use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{read_sections, take_section, write_sections, Header, Payload, Section};
use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Vec3};
use crate::grid::{GridSpec, ScalarGrid, VectorGrid};
use crate::vascular::VesselTree;

/// Inlet cross-section: a disk on a plane whose normal points into the vessel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InletPlane {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub radius: f64,
}

impl InletPlane {
    pub fn new(point: Vec3, normal: Vec3, radius: f64) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0) || !(radius > 0.0) {
            return Err(Error::Flow("inlet needs a nonzero normal and positive radius".into()));
        }
        Ok(Self {
            point: point.into(),
            normal: (normal / n).into(),
            radius,
        })
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from(self.point)
    }

    pub fn unit_normal(&self) -> Vec3 {
        Vec3::from(self.normal).normalize()
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.center()).dot(&self.unit_normal())
    }

    pub fn radial_distance(&self, p: &Vec3) -> f64 {
        let d = p - self.center();
        (d - self.unit_normal() * d.dot(&self.unit_normal())).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fluid {
    /// kg/m^3
    pub density: f64,
    /// m^2/s
    pub kinematic_viscosity: f64,
}

impl Default for Fluid {
    /// Blood.
    fn default() -> Self {
        Self {
            density: 1056.0,
            kinematic_viscosity: 3.27e-6,
        }
    }
}

/// Regular-grid velocity field with vessel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub velocity: VectorGrid,
    pub mask: ScalarGrid,
    pub inlet: InletPlane,
    pub fluid: Fluid,
}

/// Straight tube used for analytic fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub radius: f64,
}

impl Tube {
    pub fn axis(&self) -> Vec3 {
        (Vec3::from(self.end) - Vec3::from(self.start)).normalize()
    }

    /// Whether `p` lies in the closed tube (between the end caps, within the radius).
    pub fn contains(&self, p: &Vec3) -> bool {
        let (a, b) = (Vec3::from(self.start), Vec3::from(self.end));
        let (d, t) = point_segment_distance(p, &a, &b);
        let ab = b - a;
        let raw_t = (p - a).dot(&ab) / ab.norm_squared();
        d <= self.radius && (0.0..=1.0).contains(&raw_t) && (0.0..=1.0).contains(&t)
    }

    pub fn volume(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius * (Vec3::from(self.end) - Vec3::from(self.start)).norm()
    }
}

/// Axial Poiseuille flow `v(r) = v_max (1 - r^2 / R^2)` inside a straight tube.
pub fn poiseuille_field(tube: &Tube, v_max: f64, spec: &GridSpec) -> Result<FlowField> {
    if !(tube.radius > 0.0) || !(v_max > 0.0) {
        return Err(Error::Flow("Poiseuille tube needs R > 0 and v_max > 0".into()));
    }
    let (a, b) = (Vec3::from(tube.start), Vec3::from(tube.end));
    if (b - a).norm() <= 0.0 {
        return Err(Error::Flow("tube has zero length".into()));
    }
    if !spec.contains(&a) || !spec.contains(&b) {
        return Err(Error::Flow("grid does not contain the tube".into()));
    }
    let axis = tube.axis();
    let mut velocity = VectorGrid::filled(*spec, Vec3::zeros());
    let mut mask = ScalarGrid::filled(*spec, 0.0);
    let r2 = tube.radius * tube.radius;
    for off in 0..spec.len() {
        let p = spec.position_of(off);
        let t = (p - a).dot(&(b - a)) / (b - a).norm_squared();
        if !(0.0..=1.0).contains(&t) {
            continue;
        }
        let radial = p - (a + (b - a) * t);
        let rr = radial.norm_squared();
        if rr <= r2 {
            mask.data[off] = 1.0;
            velocity.data[off] = axis * (v_max * (1.0 - rr / r2));
        }
    }
    Ok(FlowField {
        velocity,
        mask,
        inlet: InletPlane::new(a, axis, tube.radius)?,
        fluid: Fluid::default(),
    })
}

/// Piecewise Poiseuille flow through a vessel skeleton. Each segment carries
/// a parabolic profile along its axis with flux `Q ~ d^m` (Murray), so the
/// peak speed is `peak * (d / d_root)^m * (R_root / R)^2` using effective radii.
/// Interior joints are filled with capsules; the root start and the leaf ends
/// are cut flat. Where segments overlap the one with the smaller `r / R` wins.
pub fn tree_flow_field(tree: &VesselTree, peak: f64, murray_exponent: f64, spec: &GridSpec) -> Result<FlowField> {
    if tree.is_empty() {
        return Err(Error::Flow("vessel tree has no segments".into()));
    }
    if !(peak > 0.0) || !(murray_exponent > 0.0) {
        return Err(Error::Flow("peak velocity and Murray exponent must be > 0".into()));
    }
    let incoming = tree.incoming();
    let outgoing = tree.outgoing();
    let root_seg = outgoing[tree.root]
        .first()
        .copied()
        .ok_or_else(|| Error::Flow("root node has no outgoing segment".into()))?;
    let root = tree.segments[root_seg];
    let mut best = vec![f64::INFINITY; spec.len()];
    let mut velocity = VectorGrid::filled(*spec, Vec3::zeros());
    let mut mask = ScalarGrid::filled(*spec, 0.0);
    for (s, seg) in tree.segments.iter().enumerate() {
        let (a, b) = (tree.nodes[seg.parent], tree.nodes[seg.child]);
        let r = seg.radius();
        let ab = b - a;
        let len2 = ab.norm_squared();
        if !(r > 0.0) || len2 == 0.0 {
            return Err(Error::Flow(format!("segment {s} is degenerate")));
        }
        let axis = ab / len2.sqrt();
        let v = peak * (seg.diameter / root.diameter).powf(murray_exponent) * (root.radius() / r).powi(2);
        let open_start = incoming[seg.parent].is_some();
        let open_end = !outgoing[seg.child].is_empty();
        let lo = spec.to_index_space(&a.inf(&b).add_scalar(-r));
        let hi = spec.to_index_space(&a.sup(&b).add_scalar(r));
        let range = |p: usize| {
            let l = lo[p].ceil().max(0.0) as usize;
            let h = hi[p].floor().min((spec.dims[p] - 1) as f64);
            if h < l as f64 {
                l..l
            } else {
                l..h as usize + 1
            }
        };
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    let p = spec.position(i, j, k);
                    let t = (p - a).dot(&ab) / len2;
                    if (t < 0.0 && !open_start) || (t > 1.0 && !open_end) {
                        continue;
                    }
                    let (d, _) = point_segment_distance(&p, &a, &b);
                    let q = (d / r).powi(2);
                    let off = spec.index(i, j, k);
                    if q <= 1.0 && q < best[off] {
                        best[off] = q;
                        mask.data[off] = 1.0;
                        velocity.data[off] = axis * (v * (1.0 - q));
                    }
                }
            }
        }
    }
    let a = tree.nodes[root.parent];
    let field = FlowField {
        velocity,
        mask,
        inlet: InletPlane::new(a, tree.direction(root_seg), root.radius())?,
        fluid: Fluid::default(),
    };
    field.check()?;
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImportReport {
    /// Velocity samples found outside the mask and zeroed.
    pub zeroed_outside_mask: usize,
}

fn write_spec(header: &mut Header, prefix: &str, spec: &GridSpec) {
    header.set(
        &format!("{prefix}_dims"),
        format!("{},{},{}", spec.dims[0], spec.dims[1], spec.dims[2]),
    );
    header.set_f64_list(&format!("{prefix}_spacing"), &spec.spacing);
    header.set_f64_list(&format!("{prefix}_origin"), &spec.origin);
}

fn read_spec(header: &Header, prefix: &str) -> Result<GridSpec> {
    let mut h = Header::new();
    for key in ["dims", "spacing", "origin"] {
        h.set(key, header.require(&format!("{prefix}_{key}"))?);
    }
    GridSpec::from_header(&h)
}

impl FlowField {
    pub fn spec(&self) -> &GridSpec {
        &self.velocity.spec
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = Header::new().with("kind", "flow_field");
        write_spec(&mut header, "velocity", &self.velocity.spec);
        write_spec(&mut header, "mask", &self.mask.spec);
        header.set_f64_list("inlet_point", &self.inlet.point);
        header.set_f64_list("inlet_normal", &self.inlet.normal);
        header.set("inlet_radius", format!("{:?}", self.inlet.radius));
        header.set("fluid_density", format!("{:?}", self.fluid.density));
        header.set(
            "fluid_kinematic_viscosity",
            format!("{:?}", self.fluid.kinematic_viscosity),
        );
        let sections = [
            Section::new("velocity", Payload::F64(self.velocity.flatten())),
            Section::new("mask", Payload::F64(self.mask.data.clone())),
        ];
        write_sections(path, &header, &sections)
    }

    /// Load a field, zeroing (and counting) velocities outside the mask.
    pub fn import(path: &Path) -> Result<(Self, ImportReport)> {
        let (header, mut sections) = read_sections(path)?;
        let vspec = read_spec(&header, "velocity")?;
        let mspec = read_spec(&header, "mask")?;
        if vspec != mspec {
            return Err(Error::DimMismatch(format!(
                "velocity grid {:?}/{:?} vs mask grid {:?}/{:?}",
                vspec.dims, vspec.spacing, mspec.dims, mspec.spacing
            )));
        }
        let inlet = (|| -> Result<InletPlane> {
            let p = header.get_f64_list("inlet_point")?;
            let n = header.get_f64_list("inlet_normal")?;
            let r = header.get_f64("inlet_radius")?;
            if p.len() != 3 || n.len() != 3 {
                return Err(Error::Header("inlet vectors need 3 components".into()));
            }
            InletPlane::new(Vec3::new(p[0], p[1], p[2]), Vec3::new(n[0], n[1], n[2]), r)
        })()
        .map_err(|e| Error::Flow(format!("missing inlet descriptor: {e}")))?;
        let fluid = Fluid {
            density: header.get_f64("fluid_density").unwrap_or(Fluid::default().density),
            kinematic_viscosity: header
                .get_f64("fluid_kinematic_viscosity")
                .unwrap_or(Fluid::default().kinematic_viscosity),
        };
        let vflat = take_section(&mut sections, "velocity")?
            .to_f64_vec()
            .ok_or_else(|| Error::Flow("velocity must be real".into()))?;
        let mdata = take_section(&mut sections, "mask")?
            .to_f64_vec()
            .ok_or_else(|| Error::Flow("mask must be real".into()))?;
        let mut velocity = VectorGrid::unflatten(vspec, &vflat).map_err(|e| Error::DimMismatch(e.to_string()))?;
        let mask = ScalarGrid::from_data(mspec, mdata).map_err(|e| Error::DimMismatch(e.to_string()))?;
        let mut zeroed = 0;
        for (v, &m) in velocity.data.iter_mut().zip(&mask.data) {
            if m == 0.0 && *v != Vec3::zeros() {
                *v = Vec3::zeros();
                zeroed += 1;
            }
        }
        if zeroed > 0 {
            log::warn!("{zeroed} velocity samples outside the vessel mask were zeroed");
        }
        let field = Self {
            velocity,
            mask,
            inlet,
            fluid,
        };
        field.check()?;
        Ok((
            field,
            ImportReport {
                zeroed_outside_mask: zeroed,
            },
        ))
    }

    /// Mask non-empty and the inlet disk center inside the grid.
    pub fn check(&self) -> Result<()> {
        if !self.mask.data.iter().any(|&m| m != 0.0) {
            return Err(Error::Flow("vessel mask is empty".into()));
        }
        if !self.spec().contains(&self.inlet.center()) {
            return Err(Error::Flow("inlet plane lies outside the grid".into()));
        }
        Ok(())
    }

    /// Trilinear interpolation of the velocity.
    pub fn sample_velocity(&self, p: &Vec3) -> Result<Vec3> {
        if !self.spec().contains(p) {
            return Err(Error::OutOfBounds { point: (*p).into() });
        }
        Ok(trilinear(&self.velocity.spec, &self.velocity.data, p, Vec3::zeros()))
    }

    /// Velocity with the boundary values extended outside the grid, so trial
    /// stages of a step that overshoots the domain stay well defined.
    #[inline]
    pub fn velocity_clamped(&self, p: &Vec3) -> Vec3 {
        trilinear(&self.velocity.spec, &self.velocity.data, p, Vec3::zeros())
    }

    /// Field sampled from a closure on every node, with a full mask.
    pub fn from_fn(spec: GridSpec, inlet: InletPlane, v: impl Fn(&Vec3) -> Vec3) -> Self {
        let data = (0..spec.len()).map(|i| v(&spec.position_of(i))).collect();
        Self {
            velocity: VectorGrid { spec, data },
            mask: ScalarGrid::filled(spec, 1.0),
            inlet,
            fluid: Fluid::default(),
        }
    }

    /// Interpolated mask value, 0 outside the grid.
    pub fn mask_value(&self, p: &Vec3) -> f64 {
        if self.mask.spec.contains(p) {
            trilinear(&self.mask.spec, &self.mask.data, p, 0.0)
        } else {
            0.0
        }
    }

    pub fn inside(&self, p: &Vec3) -> bool {
        self.mask_value(p) >= 0.5
    }
}

/// Trilinear interpolation; axes with a single node are constant.
pub(crate) fn trilinear<T>(spec: &GridSpec, data: &[T], p: &Vec3, zero: T) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let u = spec.to_index_space(p);
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let n = spec.dims[a];
        if n == 1 {
            continue;
        }
        let x = u[a].clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        base[a] = i;
        frac[a] = x - i as f64;
    }
    let mut acc = zero;
    for corner in 0..8 {
        let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let mut w = 1.0;
        let mut idx = [0usize; 3];
        for a in 0..3 {
            if spec.dims[a] == 1 {
                if off[a] == 1 {
                    w = 0.0;
                }
                idx[a] = 0;
                continue;
            }
            w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            idx[a] = base[a] + off[a];
        }
        if w != 0.0 {
            acc = acc + data[spec.index(idx[0], idx[1], idx[2])] * w;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tube_grid() -> (Tube, GridSpec) {
        let tube = Tube {
            start: [0.0, 0.0, 0.0],
            end: [0.0, 0.0, 10e-3],
            radius: 1e-3,
        };
        let spec = GridSpec::new([21, 21, 41], [0.125e-3, 0.125e-3, 0.25e-3], [-1.25e-3, -1.25e-3, 0.0]).unwrap();
        (tube, spec)
    }

    #[test]
    fn tree_field_single_segment_is_poiseuille() {
        let (tube, spec) = tube_grid();
        let mut tree = VesselTree::new(Vec3::from(tube.start));
        tree.add_segment(0, Vec3::from(tube.end), 2.0 * tube.radius, 1.0);
        let a = tree_flow_field(&tree, 0.2, 3.0, &spec).unwrap();
        let b = poiseuille_field(&tube, 0.2, &spec).unwrap();
        assert_eq!(a.mask, b.mask);
        for (u, v) in a.velocity.data.iter().zip(&b.velocity.data) {
            assert!((u - v).norm() < 1e-12);
        }
        assert_eq!(a.inlet, b.inlet);
    }

    #[test]
    fn tree_field_conserves_flux_at_bifurcation() {
        let d = crate::vascular::murray_split(1e-3, &[0.35, 0.65], 3.0);
        let mut tree = VesselTree::new(Vec3::zeros());
        let j = tree.add_segment(0, Vec3::new(0.0, 0.0, 2e-3), 1e-3, 1.0);
        tree.add_segment(j, Vec3::new(-2e-3, 0.0, 2e-3), d[0], 1.0);
        tree.add_segment(j, Vec3::new(2e-3, 0.0, 2e-3), d[1], 1.0);
        let spec = GridSpec::new([51, 11, 31], [1e-4; 3], [-2.5e-3, -0.5e-3, -0.2e-3]).unwrap();
        let f = tree_flow_field(&tree, 0.1, 3.0, &spec).unwrap();
        let at = |x: f64, z: f64| f.sample_velocity(&Vec3::new(x, 0.0, z)).unwrap();
        let v0 = at(0.0, 1e-3);
        let (v1, v2) = (at(-1e-3, 2e-3), at(1e-3, 2e-3));
        assert!((v0 - Vec3::new(0.0, 0.0, 0.1)).norm() < 1e-12);
        assert!(v1[0] < 0.0 && v2[0] > 0.0);
        // flux Q = v_max pi R^2 / 2
        let q = |v: Vec3, dia: f64| v.norm() * dia * dia;
        let balance = q(v1, d[0]) + q(v2, d[1]) - q(v0, 1e-3);
        assert!(balance.abs() < 1e-12 * q(v0, 1e-3), "{balance}");
        // healthy segments: speed scales with diameter
        assert!((v1.norm() - 0.1 * d[0] / 1e-3).abs() < 1e-12);
    }

    #[test]
    fn tree_field_rejects_empty_tree() {
        let (_, spec) = tube_grid();
        assert!(tree_flow_field(&VesselTree::new(Vec3::zeros()), 0.1, 3.0, &spec).is_err());
    }

    #[test]
    fn poiseuille_profile_values() {
        let (tube, spec) = tube_grid();
        let f = poiseuille_field(&tube, 0.2, &spec).unwrap();
        let c = f.sample_velocity(&Vec3::new(0.0, 0.0, 5e-3)).unwrap();
        assert!((c - Vec3::new(0.0, 0.0, 0.2)).norm() < 1e-12);
        let wall = f.sample_velocity(&Vec3::new(1e-3, 0.0, 5e-3)).unwrap();
        assert!(wall.norm() < 1e-12);
        let half = f.sample_velocity(&Vec3::new(0.5e-3, 0.0, 5e-3)).unwrap();
        assert!((half[2] - 0.75 * 0.2).abs() < 1e-12);
    }

    #[test]
    fn poiseuille_needs_tube_inside_grid() {
        let (mut tube, spec) = tube_grid();
        tube.end = [0.0, 0.0, 20e-3];
        assert!(poiseuille_field(&tube, 0.2, &spec).is_err());
    }

    #[test]
    fn interpolation_reproduces_nodes_and_edge_midpoints() {
        let (tube, spec) = tube_grid();
        let f = poiseuille_field(&tube, 0.2, &spec).unwrap();
        for off in [0, 17, 441 * 3 + 10 * 21 + 7, spec.len() - 1] {
            let p = spec.position_of(off);
            assert_eq!(f.sample_velocity(&p).unwrap(), f.velocity.data[off]);
        }
        let a = spec.index(10, 12, 7);
        let b = spec.index(11, 12, 7);
        let mid = (spec.position_of(a) + spec.position_of(b)) / 2.0;
        let expect = (f.velocity.data[a] + f.velocity.data[b]) / 2.0;
        assert!((f.sample_velocity(&mid).unwrap() - expect).norm() < 1e-15);
    }

    #[test]
    fn outside_mask_is_zero_and_out_of_bounds_errors() {
        let (tube, spec) = tube_grid();
        let f = poiseuille_field(&tube, 0.2, &spec).unwrap();
        assert_eq!(
            f.sample_velocity(&Vec3::new(1.2e-3, 1.2e-3, 5e-3)).unwrap(),
            Vec3::zeros()
        );
        assert!(matches!(
            f.sample_velocity(&Vec3::new(0.0, 0.0, 11e-3)),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.fqf");
        let (tube, spec) = tube_grid();
        let f = poiseuille_field(&tube, 0.2, &spec).unwrap();
        f.save(&path).unwrap();
        let (g, report) = FlowField::import(&path).unwrap();
        assert_eq!(report.zeroed_outside_mask, 0);
        assert_eq!(f, g);
    }

    #[test]
    fn import_zeroes_outside_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.fqf");
        let (tube, spec) = tube_grid();
        let mut f = poiseuille_field(&tube, 0.2, &spec).unwrap();
        let outside: Vec<usize> = (0..spec.len()).filter(|&i| f.mask.data[i] == 0.0).take(5).collect();
        for &i in &outside {
            f.velocity.data[i] = Vec3::new(1.0, 0.0, 0.0);
        }
        f.save(&path).unwrap();
        let (g, report) = FlowField::import(&path).unwrap();
        assert_eq!(report.zeroed_outside_mask, 5);
        assert!(outside.iter().all(|&i| g.velocity.data[i] == Vec3::zeros()));
    }

    #[test]
    fn import_rejects_dim_mismatch_and_missing_inlet() {
        let dir = tempfile::tempdir().unwrap();
        let (tube, spec) = tube_grid();
        let f = poiseuille_field(&tube, 0.2, &spec).unwrap();
        let path = dir.path().join("bad.fqf");
        let mut header = Header::new();
        write_spec(&mut header, "velocity", &spec);
        let small = GridSpec::new([2, 2, 2], spec.spacing, spec.origin).unwrap();
        write_spec(&mut header, "mask", &small);
        header.set_f64_list("inlet_point", &f.inlet.point);
        header.set_f64_list("inlet_normal", &f.inlet.normal);
        header.set("inlet_radius", 1e-3);
        let sections = [
            Section::new("velocity", Payload::F64(f.velocity.flatten())),
            Section::new("mask", Payload::F64(vec![1.0; 8])),
        ];
        write_sections(&path, &header, &sections).unwrap();
        assert!(matches!(FlowField::import(&path), Err(Error::DimMismatch(_))));

        let mut header = Header::new();
        write_spec(&mut header, "velocity", &spec);
        write_spec(&mut header, "mask", &spec);
        let sections = [
            Section::new("velocity", Payload::F64(f.velocity.flatten())),
            Section::new("mask", Payload::F64(f.mask.data.clone())),
        ];
        write_sections(&path, &header, &sections).unwrap();
        assert!(matches!(FlowField::import(&path), Err(Error::Flow(_))));
    }
}
