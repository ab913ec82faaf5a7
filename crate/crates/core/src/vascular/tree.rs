use std::path::Path;

use crate::container::{read_sections, take_section, write_sections, Header, Payload, Section};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub parent: usize,
    pub child: usize,
    /// Nominal (Murray) diameter in meters.
    pub diameter: f64,
    /// Multiplicative anomaly: > 1 aneurysm, < 1 stenosis, 1 healthy.
    pub anomaly: f64,
}

impl Segment {
    pub fn effective_diameter(&self) -> f64 {
        self.diameter * self.anomaly
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.effective_diameter()
    }
}

/// Directed vessel skeleton rooted at `root`.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselTree {
    pub nodes: Vec<Vec3>,
    pub segments: Vec<Segment>,
    pub root: usize,
}

impl VesselTree {
    pub fn new(root: Vec3) -> Self {
        Self {
            nodes: vec![root],
            segments: Vec::new(),
            root: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn add_segment(&mut self, parent: usize, end: Vec3, diameter: f64, anomaly: f64) -> usize {
        self.nodes.push(end);
        let child = self.nodes.len() - 1;
        self.segments.push(Segment {
            parent,
            child,
            diameter,
            anomaly,
        });
        child
    }

    /// Segment ending at `node`, if any.
    pub fn incoming(&self) -> Vec<Option<usize>> {
        let mut incoming = vec![None; self.nodes.len()];
        for (s, seg) in self.segments.iter().enumerate() {
            incoming[seg.child] = Some(s);
        }
        incoming
    }

    /// Segments leaving each node.
    pub fn outgoing(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (s, seg) in self.segments.iter().enumerate() {
            out[seg.parent].push(s);
        }
        out
    }

    pub fn direction(&self, segment: usize) -> Vec3 {
        let s = &self.segments[segment];
        self.nodes[s.child] - self.nodes[s.parent]
    }

    pub fn length(&self, segment: usize) -> f64 {
        self.direction(segment).norm()
    }

    pub fn min_radius(&self) -> Option<f64> {
        self.segments.iter().map(Segment::radius).min_by(f64::total_cmp)
    }

    /// Axis-aligned bounds of all nodes padded by the largest radius.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let pad = self.segments.iter().map(Segment::radius).fold(0.0, f64::max);
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for n in &self.nodes {
            lo = lo.inf(n);
            hi = hi.sup(n);
        }
        (lo.add_scalar(-pad), hi.add_scalar(pad))
    }

    pub fn to_sections(&self, header: &mut Header) -> Vec<Section> {
        header.set("kind", "vessel_tree");
        header.set("root", self.root);
        header.set("node_count", self.nodes.len());
        header.set("segment_count", self.segments.len());
        header.set("segment_layout", "parent,child,diameter,anomaly");
        let nodes = self.nodes.iter().flat_map(|n| [n[0], n[1], n[2]]).collect();
        let segs = self
            .segments
            .iter()
            .flat_map(|s| [s.parent as f64, s.child as f64, s.diameter, s.anomaly])
            .collect();
        vec![
            Section::new("nodes", Payload::F64(nodes)),
            Section::new("segments", Payload::F64(segs)),
        ]
    }

    pub fn save(&self, path: &Path, mut header: Header) -> Result<()> {
        let sections = self.to_sections(&mut header);
        write_sections(path, &header, &sections)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, mut sections) = read_sections(path)?;
        let nodes = take_section(&mut sections, "nodes")?
            .to_f64_vec()
            .ok_or_else(|| Error::Header("nodes must be real".into()))?;
        let segs = take_section(&mut sections, "segments")?
            .to_f64_vec()
            .ok_or_else(|| Error::Header("segments must be real".into()))?;
        if nodes.len() % 3 != 0 || segs.len() % 4 != 0 {
            return Err(Error::SizeMismatch("vessel table lengths".into()));
        }
        let nodes: Vec<Vec3> = nodes.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let segments: Vec<Segment> = segs
            .chunks_exact(4)
            .map(|c| Segment {
                parent: c[0] as usize,
                child: c[1] as usize,
                diameter: c[2],
                anomaly: c[3],
            })
            .collect();
        if segments
            .iter()
            .any(|s| s.parent >= nodes.len() || s.child >= nodes.len())
        {
            return Err(Error::SizeMismatch("segment references a missing node".into()));
        }
        let root = header.get_usize("root")?;
        if root >= nodes.len() {
            return Err(Error::SizeMismatch("root out of range".into()));
        }
        Ok(Self { nodes, segments, root })
    }
}
