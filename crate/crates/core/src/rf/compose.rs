use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::tissue::{advect, Boundary, Label, MotionModel, Region, ScattererCloud};

use super::frame::RfFrame;
use super::synth::{simulate_rf_chunked, Acquisition, Chunking, MediumParams};
use super::transducer::{Transducer, TxEvent};

/// Scene for a frame sequence: a tissue cloud with a motion model and blood
/// scatterers with fixed reflectivity at per-frame positions.
pub struct Scene<'a> {
    pub tissue: &'a ScattererCloud,
    pub motion: &'a MotionModel,
    pub region: Region,
    pub boundary: Boundary,
    pub blood_positions: &'a [Vec<Vec3>],
    pub blood_reflectivity: &'a [f64],
    pub frame_interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ComposeReport {
    pub frames: usize,
    /// Number of tissue-cloud RF simulations (one per transmit when static).
    pub tissue_simulations: usize,
    pub blood_simulations: usize,
}

/// Simulate `frames` frames of every transmit, handing each to `sink(frame, tx, rf)`.
/// RF is linear in the scatterers, so tissue and blood are simulated
/// separately and summed; static tissue is simulated once per transmit.
#[allow(clippy::too_many_arguments)]
pub fn compose_frames(
    scene: &Scene,
    frames: usize,
    transducer: &Transducer,
    txs: &[TxEvent],
    medium: &MediumParams,
    acq: &Acquisition,
    chunking: Chunking,
    mut sink: impl FnMut(usize, usize, RfFrame) -> Result<()>,
) -> Result<ComposeReport> {
    if !scene.blood_positions.is_empty() && scene.blood_positions.len() < frames {
        return Err(Error::DimMismatch(format!(
            "{} blood frames for {frames} RF frames",
            scene.blood_positions.len()
        )));
    }
    if scene
        .blood_positions
        .iter()
        .any(|f| f.len() != scene.blood_reflectivity.len())
    {
        return Err(Error::DimMismatch(
            "blood positions and reflectivity differ in length".into(),
        ));
    }
    let mut report = ComposeReport {
        frames,
        ..Default::default()
    };
    let sim = |cloud: &ScattererCloud, tx: &TxEvent| {
        simulate_rf_chunked(cloud, transducer, tx, medium, acq, chunking).map(|(f, _)| f)
    };
    let is_static = scene.motion.is_static();
    let mut static_rf = Vec::new();
    if is_static {
        for tx in txs {
            static_rf.push(sim(scene.tissue, tx)?);
            report.tissue_simulations += 1;
        }
    }
    let mut tissue = scene.tissue.clone();
    for i in 0..frames {
        if !is_static && i > 0 {
            advect(
                &mut tissue,
                scene.motion,
                &scene.region,
                scene.boundary,
                (i - 1) as f64 * scene.frame_interval,
                scene.frame_interval,
            )?;
        }
        let blood = scene.blood_positions.get(i).map(|pos| ScattererCloud {
            positions: pos.clone(),
            reflectivity: scene.blood_reflectivity.to_vec(),
            label: vec![Label::Blood; pos.len()],
        });
        for (k, tx) in txs.iter().enumerate() {
            let mut rf = if is_static {
                static_rf[k].clone()
            } else {
                report.tissue_simulations += 1;
                sim(&tissue, tx)?
            };
            if let Some(b) = blood.as_ref().filter(|b| !b.is_empty()) {
                rf.add(&sim(b, tx)?)?;
                report.blood_simulations += 1;
            }
            rf.frame = i;
            sink(i, k, rf)?;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rf::synth::simulate_rf;
    use crate::rf::synth::tests::{acq, small_probe};
    use crate::rf::transducer::plane_wave_delays;

    fn tissue() -> ScattererCloud {
        let mut c = ScattererCloud::default();
        for i in 0..5 {
            c.push(
                Vec3::new(i as f64 * 0.4e-3 - 1e-3, 0.0, 4e-3 + i as f64 * 0.5e-3),
                1.0,
                Label::Tissue,
            );
        }
        c
    }

    #[test]
    fn static_tissue_simulated_once_per_transmit() {
        let t = small_probe();
        let txs: Vec<_> = [-0.05, 0.05]
            .iter()
            .map(|&a| plane_wave_delays(&t, a, 1540.0).unwrap())
            .collect();
        let tis = tissue();
        let blood: Vec<Vec<Vec3>> = (0..4)
            .map(|i| vec![Vec3::new(0.0, 0.0, 5e-3 + i as f64 * 1e-5)])
            .collect();
        let refl = [0.1];
        let scene = Scene {
            tissue: &tis,
            motion: &MotionModel::Static,
            region: Region::new(Vec3::new(-3e-3, -1e-3, 0.0), Vec3::new(3e-3, 1e-3, 9e-3)),
            boundary: Boundary::Freeze,
            blood_positions: &blood,
            blood_reflectivity: &refl,
            frame_interval: 1e-3,
        };
        let mut out = Vec::new();
        let rep = compose_frames(
            &scene,
            4,
            &t,
            &txs,
            &MediumParams::default(),
            &acq(),
            Chunking::Blocks(1),
            |i, k, f| {
                out.push((i, k, f));
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(rep.tissue_simulations, 2);
        assert_eq!(rep.blood_simulations, 8);
        assert_eq!(out.len(), 8);
        // equals the direct simulation of the combined cloud
        let (i, k, f) = &out[5];
        let mut all = tis.clone();
        all.push(blood[*i][0], 0.1, Label::Blood);
        let direct = simulate_rf(&all, &t, &txs[*k], &MediumParams::default(), &acq()).unwrap();
        let peak = direct.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in f.samples.iter().zip(&direct.samples) {
            assert!((a - b).abs() <= 1e-9 * peak);
        }
        assert_eq!(f.frame, *i);
    }

    #[test]
    fn moving_tissue_simulated_every_frame() {
        let t = small_probe();
        let txs = vec![plane_wave_delays(&t, 0.0, 1540.0).unwrap()];
        let tis = tissue();
        let scene = Scene {
            tissue: &tis,
            motion: &MotionModel::Constant {
                velocity: [0.0, 0.0, 4e-3],
            },
            region: Region::new(Vec3::new(-3e-3, -1e-3, 0.0), Vec3::new(3e-3, 1e-3, 9e-3)),
            boundary: Boundary::Freeze,
            blood_positions: &[],
            blood_reflectivity: &[],
            frame_interval: 1e-3,
        };
        let mut frames = Vec::new();
        let rep = compose_frames(
            &scene,
            3,
            &t,
            &txs,
            &MediumParams::default(),
            &acq(),
            Chunking::Blocks(1),
            |_, _, f| {
                frames.push(f);
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(rep.tissue_simulations, 3);
        assert_ne!(frames[0], frames[1]);
    }
}
