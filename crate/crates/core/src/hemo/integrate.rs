//! Adaptive Bogacki-Shampine 2(3) integration of `dp/dt = v(t, p)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

use super::field::FlowField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    /// meters
    pub abs_tol: f64,
    /// seconds
    pub min_step: f64,
    /// seconds; `None` means unbounded
    pub max_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            min_step: 1e-9,
            max_step: None,
        }
    }
}

const SAFETY: f64 = 0.9;
const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.1;

/// What ended an integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// Reached the requested duration.
    Completed,
    /// Left the domain at the given elapsed time.
    Exited { time: f64 },
    /// A user event fired (e.g. plane crossing) at the given elapsed time.
    Event { time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Elapsed times, starting at 0.
    pub times: Vec<f64>,
    pub points: Vec<Vec3>,
    pub stop: Stop,
}

impl Trajectory {
    pub fn end(&self) -> Vec3 {
        *self.points.last().expect("trajectory has at least its start point")
    }

    pub fn exit_time(&self) -> Option<f64> {
        match self.stop {
            Stop::Exited { time } => Some(time),
            _ => None,
        }
    }
}

/// One Bogacki-Shampine step. Returns (third-order solution, error vector, k4).
#[inline]
fn bs23_step<V: Fn(f64, &Vec3) -> Vec3>(v: &V, t: f64, p: &Vec3, k1: &Vec3, h: f64) -> (Vec3, Vec3, Vec3) {
    let k2 = v(t + 0.5 * h, &(p + k1 * (0.5 * h)));
    let k3 = v(t + 0.75 * h, &(p + k2 * (0.75 * h)));
    let y3 = p + (k1 * (2.0 / 9.0) + k2 * (1.0 / 3.0) + k3 * (4.0 / 9.0)) * h;
    let k4 = v(t + h, &y3);
    let y2 = p + (k1 * (7.0 / 24.0) + k2 * 0.25 + k3 * (1.0 / 3.0) + k4 * 0.125) * h;
    (y3, y3 - y2, k4)
}

/// Classification of a point for the driver.
pub(crate) enum Check {
    Continue,
    Exit,
}

/// Integrate from `p0` at absolute time `t0` for `duration` seconds.
///
/// `inside` is evaluated at every accepted point; the first point that fails
/// stops the integration, with the exit time refined by bisection along the
/// accepted step. `event` is a signed function: a sign change from positive to
/// non-positive across an accepted step stops integration at the linearly
/// interpolated crossing. `record` receives each accepted (elapsed, point).
pub(crate) fn drive<V, I, E, R>(
    v: V,
    inside: I,
    event: Option<E>,
    p0: Vec3,
    t0: f64,
    duration: f64,
    opts: &IntegratorOptions,
    mut record: R,
) -> Result<(Vec3, Stop)>
where
    V: Fn(f64, &Vec3) -> Vec3,
    I: Fn(&Vec3) -> Check,
    E: Fn(&Vec3) -> f64,
    R: FnMut(f64, &Vec3),
{
    if !(duration >= 0.0) {
        return Err(Error::invalid("integration duration must be >= 0"));
    }
    let mut p = p0;
    let mut t = 0.0;
    record(0.0, &p);
    if duration == 0.0 {
        return Ok((p, Stop::Completed));
    }
    let mut k1 = v(t0, &p);
    let mut h = initial_step(&p, &k1, duration, opts);
    let mut g_prev = event.as_ref().map(|e| e(&p));
    loop {
        let remaining = duration - t;
        let last = h >= remaining;
        let step = if last { remaining } else { h };
        let (y, err, k4) = bs23_step(&v, t0 + t, &p, &k1, step);
        let tol = opts.abs_tol + opts.rel_tol * p.norm();
        let en = err.norm();
        if !y.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite);
        }
        if en <= tol {
            let t_new = if last { duration } else { t + step };
            if let (Some(e), Some(g0)) = (event.as_ref(), g_prev) {
                let g1 = e(&y);
                if g0 > 0.0 && g1 <= 0.0 {
                    let s = g0 / (g0 - g1);
                    let q = p + (y - p) * s;
                    let tc = t + step * s;
                    record(tc, &q);
                    return Ok((q, Stop::Event { time: tc }));
                }
                g_prev = Some(g1);
            }
            if let Check::Exit = inside(&y) {
                let (q, s) = bisect_exit(&inside, &p, &y);
                let te = t + step * s;
                record(te, &q);
                return Ok((q, Stop::Exited { time: te }));
            }
            p = y;
            t = t_new;
            k1 = k4;
            record(t, &p);
            if last {
                return Ok((p, Stop::Completed));
            }
            let factor = if en == 0.0 {
                MAX_GROWTH
            } else {
                (SAFETY * (tol / en).cbrt()).min(MAX_GROWTH)
            };
            // only grow from the step actually taken when it was not clipped
            h = if last { h } else { step * factor.max(MIN_SHRINK) };
        } else {
            let factor = (SAFETY * (tol / en).cbrt()).clamp(MIN_SHRINK, 0.5);
            h = step * factor;
        }
        if let Some(max) = opts.max_step {
            h = h.min(max);
        }
        if h < opts.min_step && duration - t > opts.min_step {
            return Err(Error::StepUnderflow {
                step: h,
                min: opts.min_step,
                t: t0 + t,
            });
        }
        if h < opts.min_step {
            h = opts.min_step;
        }
    }
}

fn initial_step(p: &Vec3, v0: &Vec3, duration: f64, opts: &IntegratorOptions) -> f64 {
    let tol = opts.abs_tol + opts.rel_tol * p.norm();
    let speed = v0.norm();
    let mut h = if speed > 0.0 {
        // about a hundred tolerance lengths per step; the controller adjusts from there
        (100.0 * tol / speed).max(opts.min_step * 10.0)
    } else {
        duration
    };
    h = h.min(duration);
    if let Some(max) = opts.max_step {
        h = h.min(max);
    }
    h
}

/// Exit point along the chord from an inside point `a` to an outside point `b`.
fn bisect_exit<I: Fn(&Vec3) -> Check>(inside: &I, a: &Vec3, b: &Vec3) -> (Vec3, f64) {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        match inside(&(a + (b - a) * mid)) {
            Check::Continue => lo = mid,
            Check::Exit => hi = mid,
        }
    }
    (a + (b - a) * hi, hi)
}

/// Integrate a general time-dependent velocity without a domain.
pub fn integrate_fn<V: Fn(f64, &Vec3) -> Vec3>(
    v: V,
    p0: Vec3,
    t0: f64,
    duration: f64,
    opts: &IntegratorOptions,
) -> Result<Vec3> {
    drive(
        v,
        |_: &Vec3| Check::Continue,
        None::<fn(&Vec3) -> f64>,
        p0,
        t0,
        duration,
        opts,
        |_, _| {},
    )
    .map(|(p, _)| p)
}

fn field_inside(field: &FlowField) -> impl Fn(&Vec3) -> Check + '_ {
    move |p| {
        if field.spec().contains(p) && field.inside(p) {
            Check::Continue
        } else {
            Check::Exit
        }
    }
}

/// Trace a streamline through a flow field, recording every accepted step.
pub fn integrate_trajectory(
    field: &FlowField,
    p0: Vec3,
    duration: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if !field.spec().contains(&p0) || !field.inside(&p0) {
        return Err(Error::Flow("trajectory must start inside the vessel mask".into()));
    }
    let mut times = Vec::new();
    let mut points = Vec::new();
    let (_, stop) = drive(
        |_, p: &Vec3| field.velocity_clamped(p),
        field_inside(field),
        None::<fn(&Vec3) -> f64>,
        p0,
        0.0,
        duration,
        opts,
        |t, p| {
            times.push(t);
            points.push(*p);
        },
    )?;
    Ok(Trajectory { times, points, stop })
}

/// Advance a point without recording intermediate steps.
pub fn advance(field: &FlowField, p0: Vec3, duration: f64, opts: &IntegratorOptions) -> Result<(Vec3, Stop)> {
    drive(
        |_, p: &Vec3| field.velocity_clamped(p),
        field_inside(field),
        None::<fn(&Vec3) -> f64>,
        p0,
        0.0,
        duration,
        opts,
        |_, _| {},
    )
}

/// Integrate backwards (`dp/dt = -v`) until the path crosses the plane where
/// `signed` changes sign from positive to non-positive.
pub(crate) fn trace_back_to<E: Fn(&Vec3) -> f64>(
    field: &FlowField,
    p0: Vec3,
    max_time: f64,
    signed: E,
    opts: &IntegratorOptions,
) -> Result<(Vec3, Stop)> {
    drive(
        |_, p: &Vec3| -field.velocity_clamped(p),
        field_inside(field),
        Some(signed),
        p0,
        0.0,
        max_time,
        opts,
        |_, _| {},
    )
}

/// Fixed-step third-order Bogacki-Shampine solution, for convergence studies.
pub fn integrate_fixed<V: Fn(f64, &Vec3) -> Vec3>(v: V, p0: Vec3, t0: f64, duration: f64, steps: usize) -> Vec3 {
    let h = duration / steps.max(1) as f64;
    let mut p = p0;
    let mut k1 = v(t0, &p);
    for i in 0..steps.max(1) {
        let (y, _, k4) = bs23_step(&v, t0 + i as f64 * h, &p, &k1, h);
        p = y;
        k1 = k4;
    }
    p
}
