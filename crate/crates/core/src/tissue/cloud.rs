use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::container::{read_sections, take_section, write_sections, Header, Payload, Section};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Label {
    Tissue = 0,
    Blood = 1,
}

impl Label {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Tissue),
            1 => Ok(Label::Blood),
            other => Err(Error::Header(format!("unknown scatterer label {other}"))),
        }
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Region {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self {
            min: min.into(),
            max: max.into(),
        }
    }

    pub fn extent(&self) -> Vec3 {
        (Vec3::from(self.max) - Vec3::from(self.min)).map(|e| e.max(0.0))
    }

    pub fn volume(&self) -> f64 {
        self.extent().product()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Amplitude distribution for reflection coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReflectivityLaw {
    Gaussian { std: f64 },
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

impl Default for ReflectivityLaw {
    fn default() -> Self {
        ReflectivityLaw::Gaussian { std: 1.0 }
    }
}

impl ReflectivityLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ReflectivityLaw::Gaussian { std } if !(std >= 0.0) => Err(Error::invalid("reflectivity std must be >= 0")),
            ReflectivityLaw::Uniform { low, high } if !(low <= high) => {
                Err(Error::invalid("reflectivity range must satisfy low <= high"))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ReflectivityLaw::Gaussian { std } => {
                if std == 0.0 {
                    0.0
                } else {
                    Normal::new(0.0, std).expect("validated").sample(rng)
                }
            }
            ReflectivityLaw::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    rng.random_range(low..high)
                }
            }
            ReflectivityLaw::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudParams {
    /// Scatterers per wavelength squared in the lateral-axial plane.
    pub per_lambda2_density: f64,
    /// Elevation slab thickness in wavelengths over which the planar density applies.
    pub slab_wavelengths: f64,
    pub reflectivity: ReflectivityLaw,
    /// Refuse to generate more scatterers than this.
    pub max_scatterers: u64,
}

impl Default for CloudParams {
    fn default() -> Self {
        Self {
            per_lambda2_density: 10.0,
            slab_wavelengths: 15.0,
            reflectivity: ReflectivityLaw::default(),
            max_scatterers: 50_000_000,
        }
    }
}

impl CloudParams {
    /// Expected count for a region (x lateral, y elevation, z axial).
    pub fn expected_count(&self, region: &Region, wavelength: f64) -> f64 {
        let e = region.extent();
        let planar = self.per_lambda2_density * e[0] * e[2] / (wavelength * wavelength);
        planar * e[1] / (self.slab_wavelengths * wavelength)
    }
}

/// Point scatterers with reflection coefficients and tissue/blood labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScattererCloud {
    pub positions: Vec<Vec3>,
    pub reflectivity: Vec<f64>,
    pub label: Vec<Label>,
}

impl ScattererCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, p: Vec3, r: f64, label: Label) {
        self.positions.push(p);
        self.reflectivity.push(r);
        self.label.push(label);
    }

    pub fn count(&self, label: Label) -> usize {
        self.label.iter().filter(|&&l| l == label).count()
    }

    pub fn extend(&mut self, other: &ScattererCloud) {
        self.positions.extend_from_slice(&other.positions);
        self.reflectivity.extend_from_slice(&other.reflectivity);
        self.label.extend_from_slice(&other.label);
    }

    /// Blood scatterers at the given positions with reflectivities from `law`
    /// scaled by a power contrast in dB.
    pub fn blood<R: Rng + ?Sized>(positions: &[Vec3], law: &ReflectivityLaw, contrast_db: f64, rng: &mut R) -> Self {
        let amp = 10f64.powf(contrast_db / 20.0);
        Self {
            positions: positions.to_vec(),
            reflectivity: positions.iter().map(|_| amp * law.sample(rng)).collect(),
            label: vec![Label::Blood; positions.len()],
        }
    }

    pub fn save(&self, path: &Path, mut header: Header) -> Result<()> {
        header.set("kind", "scatterer_cloud");
        header.set("count", self.len());
        let pos: Vec<f32> = self
            .positions
            .iter()
            .flat_map(|p| [p[0] as f32, p[1] as f32, p[2] as f32])
            .collect();
        let sections = [
            Section::new("positions", Payload::F32(pos)),
            Section::new(
                "reflectivity",
                Payload::F32(self.reflectivity.iter().map(|&r| r as f32).collect()),
            ),
            Section::new("label", Payload::U8(self.label.iter().map(|&l| l as u8).collect())),
        ];
        write_sections(path, &header, &sections)
    }

    pub fn load(path: &Path) -> Result<(Self, Header)> {
        let (header, mut sections) = read_sections(path)?;
        let pos = take_section(&mut sections, "positions")?
            .to_f64_vec()
            .ok_or_else(|| Error::Header("positions must be real".into()))?;
        let refl = take_section(&mut sections, "reflectivity")?
            .to_f64_vec()
            .ok_or_else(|| Error::Header("reflectivity must be real".into()))?;
        let labels = take_section(&mut sections, "label")?;
        let labels = labels
            .as_u8()
            .ok_or_else(|| Error::Header("labels must be u8".into()))?;
        if pos.len() != 3 * refl.len() || refl.len() != labels.len() {
            return Err(Error::SizeMismatch("cloud arrays have different lengths".into()));
        }
        let cloud = Self {
            positions: pos.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
            reflectivity: refl,
            label: labels.iter().map(|&l| Label::from_u8(l)).collect::<Result<_>>()?,
        };
        Ok((cloud, header))
    }
}

/// Uniform tissue cloud with a Poisson-distributed count.
pub fn generate_cloud(region: &Region, wavelength: f64, params: &CloudParams, seed: RngSeed) -> Result<ScattererCloud> {
    if !(wavelength > 0.0) {
        return Err(Error::invalid("wavelength must be > 0"));
    }
    if !(params.per_lambda2_density >= 0.0) || !(params.slab_wavelengths > 0.0) {
        return Err(Error::invalid("scatterer density must be >= 0 and slab thickness > 0"));
    }
    params.reflectivity.validate()?;
    let mean = params.expected_count(region, wavelength);
    if mean > params.max_scatterers as f64 {
        return Err(Error::TooManyScatterers {
            requested: mean.round() as u64,
            cap: params.max_scatterers,
        });
    }
    let mut rng = seed.stream("tissue");
    let n = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::invalid(format!("scatterer count: {e}")))?
            .sample(&mut rng) as u64
    } else {
        0
    };
    if n > params.max_scatterers {
        return Err(Error::TooManyScatterers {
            requested: n,
            cap: params.max_scatterers,
        });
    }
    let (lo, ext) = (Vec3::from(region.min), region.extent());
    let mut cloud = ScattererCloud {
        positions: Vec::with_capacity(n as usize),
        reflectivity: Vec::with_capacity(n as usize),
        label: Vec::with_capacity(n as usize),
    };
    for _ in 0..n {
        let u = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
        let r = params.reflectivity.sample(&mut rng);
        cloud.push(lo + ext.component_mul(&u), r, Label::Tissue);
    }
    Ok(cloud)
}
