use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layout {
    /// Elements along x, centered on the origin.
    Linear { count: usize, pitch: f64 },
    /// `nx * ny` grid in the x-y plane, x fastest.
    Matrix { nx: usize, ny: usize, pitch: f64 },
}

/// Two-Gaussian elevation apodization: `sum_g A_g exp(-B_g (y/h)^2)` with `h`
/// the half height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElevationCoeffs {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Default for ElevationCoeffs {
    fn default() -> Self {
        Self {
            a: [3.0, -2.093],
            b: [1.755, 3.726],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transducer {
    pub name: String,
    pub layout: Layout,
    /// Azimuthal element width (2b), m.
    pub element_width: f64,
    /// Elevation aperture height, m.
    pub element_height: f64,
    /// Elevation lens focus, m; `None` for unfocused.
    pub elevation_focus: Option<f64>,
    pub sub_elements: usize,
    pub center_frequency: f64,
    /// -6 dB fractional bandwidth.
    pub fractional_bandwidth: f64,
    #[serde(default)]
    pub elevation: ElevationCoeffs,
}

const PRESET_L11_4V: &str = include_str!("../../presets/l11-4v.json");
const PRESET_MATRIX: &str = include_str!("../../presets/matrix-32x32.json");

pub const PRESET_NAMES: [&str; 2] = ["L11-4v", "matrix-32x32"];

impl Transducer {
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "L11-4v" => PRESET_L11_4V,
            "matrix-32x32" => PRESET_MATRIX,
            other => {
                return Err(Error::invalid(format!(
                    "unknown transducer preset `{other}` (known: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        let t: Transducer = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn l11_4v() -> Self {
        Self::preset("L11-4v").expect("bundled preset is valid")
    }

    pub fn matrix_32x32() -> Self {
        Self::preset("matrix-32x32").expect("bundled preset is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let ok_layout = match self.layout {
            Layout::Linear { count, pitch } => count > 0 && pitch > 0.0,
            Layout::Matrix { nx, ny, pitch } => nx > 0 && ny > 0 && pitch > 0.0,
        };
        if !ok_layout {
            return Err(Error::invalid("transducer layout needs elements and a positive pitch"));
        }
        if !(self.element_width > 0.0) || !(self.element_height > 0.0) {
            return Err(Error::invalid("element width and height must be > 0"));
        }
        if self.sub_elements == 0 {
            return Err(Error::invalid("sub-element count must be >= 1"));
        }
        if !(self.center_frequency > 0.0) || !(self.fractional_bandwidth > 0.0) {
            return Err(Error::invalid("center frequency and bandwidth must be > 0"));
        }
        if let Some(f) = self.elevation_focus {
            if !(f > 0.0) {
                return Err(Error::invalid("elevation focus must be > 0"));
            }
        }
        Ok(())
    }

    pub fn element_count(&self) -> usize {
        match self.layout {
            Layout::Linear { count, .. } => count,
            Layout::Matrix { nx, ny, .. } => nx * ny,
        }
    }

    pub fn pitch(&self) -> f64 {
        match self.layout {
            Layout::Linear { pitch, .. } | Layout::Matrix { pitch, .. } => pitch,
        }
    }

    /// Azimuthal half-width `b`.
    pub fn half_width(&self) -> f64 {
        0.5 * self.element_width
    }

    pub fn elements(&self) -> Vec<Vec3> {
        match self.layout {
            Layout::Linear { count, pitch } => (0..count)
                .map(|i| Vec3::new((i as f64 - 0.5 * (count as f64 - 1.0)) * pitch, 0.0, 0.0))
                .collect(),
            Layout::Matrix { nx, ny, pitch } => (0..nx * ny)
                .map(|i| {
                    let (ix, iy) = (i % nx, i / nx);
                    Vec3::new(
                        (ix as f64 - 0.5 * (nx as f64 - 1.0)) * pitch,
                        (iy as f64 - 0.5 * (ny as f64 - 1.0)) * pitch,
                        0.0,
                    )
                })
                .collect(),
        }
    }

    /// Azimuthal offsets of the sub-elements relative to their element center,
    /// tiled uniformly across the element width.
    pub fn sub_element_offsets(&self) -> Vec<f64> {
        let v = self.sub_elements as f64;
        (0..self.sub_elements)
            .map(|m| ((m as f64 + 0.5) / v - 0.5) * self.element_width)
            .collect()
    }

    pub fn wavelength(&self, c: f64) -> f64 {
        c / self.center_frequency
    }
}

/// Element directivity `sin(x) / x` with `x = k b sin(theta)`.
pub fn directivity(theta: f64, k: f64, b: f64) -> f64 {
    let x = k * b * theta.sin();
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Elevation factor of a focused line aperture: Fresnel integral of the
/// two-Gaussian apodization with a lens phase, for elevation offset `y` at
/// range `r` and wavenumber `k`. Tends to `sum(A)` in the near field.
pub fn elevation_factor(
    y: f64,
    r: f64,
    k: f64,
    height: f64,
    focus: Option<f64>,
    coeffs: &ElevationCoeffs,
) -> Complex64 {
    let [a, b] = elevation_terms(y, r, k, height, focus, coeffs);
    a + b
}

/// The two Gaussian contributions to [`elevation_factor`].
pub fn elevation_terms(
    y: f64,
    r: f64,
    k: f64,
    height: f64,
    focus: Option<f64>,
    coeffs: &ElevationCoeffs,
) -> [Complex64; 2] {
    let h = 0.5 * height;
    let i = Complex64::i();
    let lens = focus.map_or(0.0, |f| k / (2.0 * f));
    let pre = (Complex64::new(k, 0.0) / (2.0 * std::f64::consts::PI * i * r)).sqrt();
    let term = |g: usize| {
        let q = Complex64::new(coeffs.b[g] / (h * h), lens - k / (2.0 * r));
        let gauss = (-(k * k * y * y) / (4.0 * q * r * r)).exp();
        coeffs.a[g] * pre * (std::f64::consts::PI / q).sqrt() * gauss
    };
    [term(0), term(1)]
}

/// Natural logarithms of [`elevation_terms`], continuous in `k`. A zero
/// coefficient gives a real part of `-inf`.
pub fn elevation_log_terms(
    y: f64,
    r: f64,
    k: f64,
    height: f64,
    focus: Option<f64>,
    coeffs: &ElevationCoeffs,
) -> [Complex64; 2] {
    let h = 0.5 * height;
    let i = Complex64::i();
    let lens = focus.map_or(0.0, |f| k / (2.0 * f));
    let term = |g: usize| {
        let q = Complex64::new(coeffs.b[g] / (h * h), lens - k / (2.0 * r));
        let amp = Complex64::new(coeffs.a[g], 0.0).ln();
        amp + 0.5 * (Complex64::new(k, 0.0) / (2.0 * i * r * q)).ln() - (k * k * y * y) / (4.0 * q * r * r)
    };
    [term(0), term(1)]
}

/// One plane-wave transmit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxEvent {
    /// Steering angle in the x-z plane, rad.
    pub angle: f64,
    /// Per-element transmit delays, s (minimum 0).
    pub delays: Vec<f64>,
    /// Per-element apodization.
    pub apodization: Vec<f64>,
}

impl TxEvent {
    /// Arrival time of the plane wavefront at `p`, consistent with `delays`.
    pub fn arrival_time(&self, p: &Vec3, elements: &[Vec3], c: f64) -> f64 {
        let s = self.angle.sin();
        let min = elements.iter().map(|e| e[0] * s).fold(f64::INFINITY, f64::min);
        (p[0] * s + p[2] * self.angle.cos() - min) / c
    }
}

/// Steered plane wave: `delay_n = x_n sin(angle) / c`, shifted to a zero minimum.
pub fn plane_wave_delays(transducer: &Transducer, angle: f64, c: f64) -> Result<TxEvent> {
    if !(angle.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(Error::invalid("plane-wave angle must satisfy |angle| < pi/2"));
    }
    if !(c > 0.0) {
        return Err(Error::invalid("speed of sound must be > 0"));
    }
    let raw: Vec<f64> = transducer.elements().iter().map(|e| e[0] * angle.sin() / c).collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TxEvent {
        angle,
        delays: raw.iter().map(|d| d - min).collect(),
        apodization: vec![1.0; raw.len()],
    })
}
