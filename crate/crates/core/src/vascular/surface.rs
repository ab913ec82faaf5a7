//! Closed triangulated surfaces used as growth boundaries.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub triangles: Vec<[Vec3; 3]>,
}

// Irrational-ish direction so rays do not graze axis-aligned edges.
const RAY_DIR: [f64; 3] = [0.573_576_436, 0.352_627_618, 0.739_462_981];

impl TriangleMesh {
    pub fn new(triangles: Vec<[Vec3; 3]>) -> Self {
        Self { triangles }
    }

    /// Axis-aligned box with outward-facing triangles.
    pub fn cuboid(min: Vec3, max: Vec3) -> Self {
        let c = |x: usize, y: usize, z: usize| {
            Vec3::new(
                if x == 0 { min[0] } else { max[0] },
                if y == 0 { min[1] } else { max[1] },
                if z == 0 { min[2] } else { max[2] },
            )
        };
        let quads = [
            [c(0, 0, 0), c(0, 1, 0), c(1, 1, 0), c(1, 0, 0)],
            [c(0, 0, 1), c(1, 0, 1), c(1, 1, 1), c(0, 1, 1)],
            [c(0, 0, 0), c(1, 0, 0), c(1, 0, 1), c(0, 0, 1)],
            [c(0, 1, 0), c(0, 1, 1), c(1, 1, 1), c(1, 1, 0)],
            [c(0, 0, 0), c(0, 0, 1), c(0, 1, 1), c(0, 1, 0)],
            [c(1, 0, 0), c(1, 1, 0), c(1, 1, 1), c(1, 0, 1)],
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Self { triangles }
    }

    /// UV sphere approximation.
    pub fn sphere(center: Vec3, radius: f64, rings: usize, sectors: usize) -> Self {
        let rings = rings.max(2);
        let sectors = sectors.max(3);
        let vertex = |r: usize, s: usize| {
            let theta = std::f64::consts::PI * r as f64 / rings as f64;
            let phi = 2.0 * std::f64::consts::PI * s as f64 / sectors as f64;
            center + radius * Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
        };
        let mut triangles = Vec::new();
        for r in 0..rings {
            for s in 0..sectors {
                let (a, b) = (vertex(r, s), vertex(r, s + 1));
                let (c, d) = (vertex(r + 1, s), vertex(r + 1, s + 1));
                if r > 0 {
                    triangles.push([a, c, b]);
                }
                if r + 1 < rings {
                    triangles.push([b, c, d]);
                }
            }
        }
        Self { triangles }
    }

    /// Parse an ASCII STL file.
    pub fn read_ascii_stl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_ascii_stl(&text)
    }

    pub fn parse_ascii_stl(text: &str) -> Result<Self> {
        let mut triangles = Vec::new();
        let mut pending: Vec<Vec3> = Vec::with_capacity(3);
        let mut saw_solid = false;
        for (lineno, line) in text.lines().enumerate() {
            let mut words = line.split_whitespace();
            match words.next() {
                Some("solid") => saw_solid = true,
                Some("vertex") => {
                    let coords: Vec<f64> = words
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::invalid(format!("STL line {}: bad vertex", lineno + 1)))?;
                    if coords.len() != 3 {
                        return Err(Error::invalid(format!(
                            "STL line {}: vertex needs 3 coordinates",
                            lineno + 1
                        )));
                    }
                    pending.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("endloop") => {
                    if pending.len() != 3 {
                        return Err(Error::invalid(format!(
                            "STL line {}: facet with {} vertices",
                            lineno + 1,
                            pending.len()
                        )));
                    }
                    triangles.push([pending[0], pending[1], pending[2]]);
                    pending.clear();
                }
                _ => {}
            }
        }
        if !saw_solid {
            return Err(Error::invalid("not an ASCII STL file (missing `solid`)"));
        }
        if triangles.is_empty() {
            return Err(Error::invalid("STL file has no facets"));
        }
        Ok(Self { triangles })
    }

    pub fn to_ascii_stl(&self, name: &str) -> String {
        let mut out = format!("solid {name}\n");
        for t in &self.triangles {
            let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
            let n = if n.norm() > 0.0 { n.normalize() } else { n };
            out.push_str(&format!(
                "  facet normal {:e} {:e} {:e}\n    outer loop\n",
                n[0], n[1], n[2]
            ));
            for v in t {
                out.push_str(&format!("      vertex {:e} {:e} {:e}\n", v[0], v[1], v[2]));
            }
            out.push_str("    endloop\n  endfacet\n");
        }
        out.push_str(&format!("endsolid {name}\n"));
        out
    }

    /// Ray-crossing parity test.
    pub fn contains(&self, p: &Vec3) -> bool {
        let dir = Vec3::from(RAY_DIR);
        let hits = self
            .triangles
            .iter()
            .filter(|t| ray_triangle(p, &dir, t).is_some_and(|s| s > 0.0))
            .count();
        hits % 2 == 1
    }

    /// Smallest parameter `t` in `(0, 1]` where the segment `a -> b` crosses the surface.
    pub fn first_crossing(&self, a: &Vec3, b: &Vec3) -> Option<f64> {
        let dir = b - a;
        self.triangles
            .iter()
            .filter_map(|t| ray_triangle(a, &dir, t))
            .filter(|&s| s > 1e-12 && s <= 1.0)
            .min_by(f64::total_cmp)
    }
}

/// Moller-Trumbore; returns the ray parameter of the hit.
fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(inv * e2.dot(&q))
}
