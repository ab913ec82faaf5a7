//! Regular voxel grids with x-fastest (row-major in p-order) storage.

use serde::{Deserialize, Serialize};

use crate::container::{Header, Payload, Section};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Geometry of a regular grid: node `(i, j, k)` sits at `origin + (i, j, k) * spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let spec = Self { dims, spacing, origin };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid whose nodes span `[min, max]` with `dims` nodes per axis.
    /// Axes with a single node sit at the midpoint and get spacing `max - min`
    /// (or 1 when the extent is zero).
    pub fn spanning(min: Vec3, max: Vec3, dims: [usize; 3]) -> Result<Self> {
        let mut spacing = [0.0; 3];
        let mut origin = [0.0; 3];
        for p in 0..3 {
            if dims[p] == 0 {
                return Err(Error::InvalidGrid(format!("dims[{p}] = 0")));
            }
            let extent = max[p] - min[p];
            if dims[p] == 1 {
                origin[p] = 0.5 * (min[p] + max[p]);
                spacing[p] = if extent > 0.0 { extent } else { 1.0 };
            } else {
                origin[p] = min[p];
                spacing[p] = extent / (dims[p] - 1) as f64;
            }
        }
        Self::new(dims, spacing, origin)
    }

    pub fn validate(&self) -> Result<()> {
        for p in 0..3 {
            if self.dims[p] < 1 {
                return Err(Error::InvalidGrid(format!("dims[{p}] must be >= 1")));
            }
            if !(self.spacing[p] > 0.0) || !self.spacing[p].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "spacing[{p}] = {} must be positive",
                    self.spacing[p]
                )));
            }
            if !self.origin[p].is_finite() {
                return Err(Error::InvalidGrid(format!("origin[{p}] is not finite")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn unravel(&self, offset: usize) -> [usize; 3] {
        let i = offset % self.dims[0];
        let rest = offset / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    pub fn position_of(&self, offset: usize) -> Vec3 {
        let [i, j, k] = self.unravel(offset);
        self.position(i, j, k)
    }

    /// Continuous grid coordinate of a physical point.
    #[inline]
    pub fn to_index_space(&self, p: &Vec3) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    pub fn min_corner(&self) -> Vec3 {
        Vec3::from(self.origin)
    }

    pub fn max_corner(&self) -> Vec3 {
        self.position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Whether `p` lies inside the node bounding box (inclusive, with a
    /// relative slack of 1e-9 cell).
    pub fn contains(&self, p: &Vec3) -> bool {
        let u = self.to_index_space(p);
        (0..3).all(|a| u[a] >= -1e-9 && u[a] <= (self.dims[a] - 1) as f64 + 1e-9)
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub(crate) fn write_header(&self, header: &mut Header) {
        header.set("dims", format!("{},{},{}", self.dims[0], self.dims[1], self.dims[2]));
        header.set_f64_list("spacing", &self.spacing);
        header.set_f64_list("origin", &self.origin);
    }

    pub(crate) fn from_header(header: &Header) -> Result<Self> {
        let dims_raw = header.require("dims")?;
        let dims: Vec<usize> = dims_raw
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Header(format!("bad dims {dims_raw:?}")))?;
        let spacing = header.get_f64_list("spacing")?;
        let origin = header.get_f64_list("origin")?;
        if dims.len() != 3 || spacing.len() != 3 || origin.len() != 3 {
            return Err(Error::Header("grid keys must have 3 components".into()));
        }
        Self::new(
            [dims[0], dims[1], dims[2]],
            [spacing[0], spacing[1], spacing[2]],
            [origin[0], origin[1], origin[2]],
        )
    }
}

/// Data sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    pub spec: GridSpec,
    pub data: Vec<T>,
}

pub type ScalarGrid = VoxelGrid<f64>;
pub type VectorGrid = VoxelGrid<Vec3>;

impl<T: Clone> VoxelGrid<T> {
    pub fn filled(spec: GridSpec, value: T) -> Self {
        Self {
            data: vec![value; spec.len()],
            spec,
        }
    }
}

impl<T> VoxelGrid<T> {
    pub fn from_data(spec: GridSpec, data: Vec<T>) -> Result<Self> {
        spec.validate()?;
        if data.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                spec.dims
            )));
        }
        Ok(Self { spec, data })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> &T {
        &self.data[self.spec.index(i, j, k)]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize, k: usize) -> &mut T {
        let idx = self.spec.index(i, j, k);
        &mut self.data[idx]
    }
}

impl ScalarGrid {
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_section(&self, name: &str, header: &mut Header) -> Section {
        self.spec.write_header(header);
        Section::new(name, Payload::F64(self.data.clone()))
    }

    pub fn from_payload(header: &Header, payload: &Payload) -> Result<Self> {
        let spec = GridSpec::from_header(header)?;
        let data = payload
            .to_f64_vec()
            .ok_or_else(|| Error::SizeMismatch("scalar grid payload must be real".into()))?;
        Self::from_data(spec, data)
    }

    /// Single-payload FQF1 file with the grid keys in the header.
    pub fn save(&self, path: &std::path::Path, mut header: Header) -> Result<()> {
        self.spec.write_header(&mut header);
        crate::container::write_container(path, &header, Payload::F64(self.data.clone()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (header, payload) = crate::container::read_container(path)?;
        Self::from_payload(&header, &payload)
    }
}

impl VectorGrid {
    pub fn flatten(&self) -> Vec<f64> {
        self.data.iter().flat_map(|v| [v[0], v[1], v[2]]).collect()
    }

    pub fn unflatten(spec: GridSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != 3 * spec.len() {
            return Err(Error::InvalidGrid(format!(
                "vector data length {} does not match 3 x {}",
                flat.len(),
                spec.len()
            )));
        }
        let data = flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        Self::from_data(spec, data)
    }
}

/// Single-channel 2D image, row-major. Columns map to lateral x, rows to depth z.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image2 {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "image data length {} does not match {width} x {height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample with edge clamping.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = (xc.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (yc.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (xc - x0 as f64, yc - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn to_section(&self, name: &str, header: &mut Header) -> Section {
        header.set("width", self.width);
        header.set("height", self.height);
        Section::new(name, Payload::F64(self.data.clone()))
    }

    pub fn from_payload(header: &Header, payload: &Payload) -> Result<Self> {
        let data = payload
            .to_f64_vec()
            .ok_or_else(|| Error::SizeMismatch("image payload must be real".into()))?;
        Self::new(header.get_usize("width")?, header.get_usize("height")?, data)
    }
}
