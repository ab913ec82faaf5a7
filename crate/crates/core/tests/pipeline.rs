use updsim::pipeline::{output_tree_hashes, run, RunConfig, Stage, StageStatus};
use updsim::post::read_pgm;

#[test]
fn quick_pipeline_end_to_end_with_caching() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::quick(dir.path());
    let first = run(&cfg, None).unwrap();
    assert_eq!(first.ran(), Stage::ALL.to_vec());

    let out = dir.path();
    let csv = std::fs::read_to_string(out.join("metrics/metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("mse,psnr,ssim"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(row[0] > 0.0 && row[0] < 1.0 && row[2] <= 1.0, "{row:?}");
    let pd = read_pgm(&out.join("post/pd_mip.pgm")).unwrap();
    let [nx, _, nz] = cfg.beamform.grid.dims;
    assert_eq!((pd.width, pd.height), (nx, nz));
    for f in 0..cfg.particles.frames {
        for t in 0..cfg.rf.angles_deg.len() {
            assert!(out.join(format!("rf/rf_{f:05}_{t:02}.fqf")).is_file());
        }
        assert!(out.join(format!("beamform/Frame_{f}.fqf")).is_file());
    }

    let again = run(&cfg, None).unwrap();
    assert!(again.ran().is_empty(), "{:?}", again.stages);

    // only the selected stages run; the rest are left alone
    let mut changed = cfg.clone();
    changed.beamform.f_number = 2.0;
    let hashes = output_tree_hashes(out).unwrap();
    let partial = run(&changed, Some(&[Stage::Beamform, Stage::Post])).unwrap();
    assert_eq!(partial.ran(), vec![Stage::Beamform, Stage::Post]);
    assert_eq!(partial.status(Stage::Rf), Some(StageStatus::NotSelected));
    assert_eq!(partial.status(Stage::Metrics), Some(StageStatus::NotSelected));
    let after = output_tree_hashes(out).unwrap();
    let rf_unchanged = |h: &Vec<(String, String)>| {
        h.iter()
            .filter(|(p, _)| p.starts_with("rf/"))
            .cloned()
            .collect::<Vec<_>>()
    };
    assert_eq!(rf_unchanged(&hashes), rf_unchanged(&after));
    assert_ne!(hashes, after);
}
