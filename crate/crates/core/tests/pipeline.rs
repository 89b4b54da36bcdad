mod common;

use common::{random_image, rng};
use salient_core::error::Stage;
use salient_core::lowlevel::LowLevelMap;
use salient_core::pipeline::{load_sidecars, run_batch, run_pipeline, run_pipeline_with, timing_report, write_outputs, OutputOptions, STAGE_NAMES};
use salient_core::saliency::{Prune, StepSize};
use salient_core::synth::{class_names, generate_dataset};
use salient_core::{Error, Execution, ImageRgb, Network, PipelineConfig, SaliencyMap};

const SEQ: Execution = Execution::Sequential;

fn net(size: usize) -> Network {
    Network::desk_scale(size, size, class_names(4), 31).unwrap()
}

fn sample(size: usize, seed: u64) -> ImageRgb {
    generate_dataset(1, 4, size, seed, SEQ).unwrap().remove(0).image
}

#[test]
fn repeated_runs_are_bit_identical() {
    let net = net(32);
    let x = sample(32, 1);
    let cfg = PipelineConfig::default();
    let first = run_pipeline(&net, &x, "x", &cfg, SEQ).unwrap();
    for _ in 0..5 {
        for exec in [Execution::Sequential, Execution::Parallel] {
            let again = run_pipeline(&net, &x, "x", &cfg, exec).unwrap();
            assert_eq!(again.raw, first.raw);
            assert_eq!(again.smoothed, first.smoothed);
            assert_eq!(again.refined, first.refined);
            assert_eq!(again.metadata.cost_trace, first.metadata.cost_trace);
        }
    }
}

#[test]
fn zero_step_gives_empty_maps() {
    let mut cfg = PipelineConfig::default();
    cfg.saliency.step = StepSize::Fixed(0.0);
    let out = run_pipeline(&net(32), &sample(32, 2), "x", &cfg, SEQ).unwrap();
    assert!(out.raw.is_zero() && out.smoothed.is_zero() && out.refined.is_zero());
}

#[test]
fn constant_lowlevel_map_passes_smoothed_through() {
    let cfg = PipelineConfig { refine_theta: Prune::Absolute(0.0), ..Default::default() };
    let alpha = cfg.lowlevel.alpha;
    let out = run_pipeline_with(&net(32), &sample(32, 3), "x", &cfg, SEQ, |sp, a| {
        let map = SaliencyMap::new(sp.width(), sp.height(), vec![1.0 + a; sp.width() * sp.height()])?;
        Ok(Some(LowLevelMap { alpha: a, map }))
    })
    .unwrap();
    assert_eq!(out.lowlevel.alpha, alpha);
    let want = out.smoothed.clone().max_normalized();
    for (r, s) in out.refined.data().iter().zip(want.data()) {
        assert!((r - s).abs() <= 1e-15);
    }
}

#[test]
fn metadata_records_stages_in_order() {
    let out = run_pipeline(&net(32), &sample(32, 4), "img", &PipelineConfig::default(), SEQ).unwrap();
    let m = &out.metadata;
    let names: Vec<&str> = m.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, STAGE_NAMES);
    let sum: f64 = m.stages.iter().map(|s| s.seconds).sum();
    assert!(sum <= m.total_seconds && sum >= 0.9 * m.total_seconds, "{sum} vs {}", m.total_seconds);
    assert_eq!(m.cost_trace.len(), 11);
    assert_eq!(m.label_name, class_names(4)[m.label]);
}

#[test]
fn errors_name_their_stage() {
    let err = run_pipeline(&net(32), &random_image(16, 16, &mut rng(5)), "x", &PipelineConfig::default(), SEQ).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: Stage::Saliency, .. }), "{err}");
    assert!(err.to_string().starts_with("saliency stage failed"));

    let mut bad = random_image(32, 32, &mut rng(6));
    bad.data_mut()[0] = 1.5;
    let err = run_pipeline(&net(32), &bad, "x", &PipelineConfig::default(), SEQ).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: Stage::Smoothing, .. }), "{err}");
}

#[test]
fn desk_scale_image_finishes_within_budget() {
    let out = run_pipeline(&net(64), &sample(64, 7), "x", &PipelineConfig::default(), Execution::default()).unwrap();
    assert!(out.metadata.total_seconds < 5.0, "{}", out.metadata.total_seconds);
}

#[test]
fn batch_outputs_and_timing_report() {
    let net = net(32);
    let images: Vec<(String, ImageRgb)> = (0..3).map(|i| (format!("im{i}"), sample(32, 10 + i))).collect();
    let cfg = PipelineConfig::default();
    let seq = run_batch(&net, &images, &cfg, Execution::Sequential);
    let par = run_batch(&net, &images, &cfg, Execution::Parallel);
    let dir = tempfile::tempdir().unwrap();
    let opts = OutputOptions { intermediates: true, ..Default::default() };
    for (a, b) in seq.iter().zip(&par) {
        let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
        assert_eq!(a.refined, b.refined);
        write_outputs(dir.path(), a, &cfg, opts).unwrap();
    }
    for stage in ["raw", "smoothed", "refined", "lowlevel", "labels"] {
        assert_eq!(std::fs::read_dir(dir.path().join(stage)).unwrap().count(), 3, "{stage}");
    }
    let loaded = SaliencyMap::load(dir.path().join("refined/im0.png")).unwrap();
    assert_eq!(loaded.to_gray8(), seq[0].as_ref().unwrap().refined.to_gray8());

    let sidecars = load_sidecars(dir.path()).unwrap();
    assert_eq!(sidecars.len(), 3);
    assert_eq!(sidecars[1], seq[1].as_ref().unwrap().metadata);
    let report = timing_report(&sidecars).unwrap();
    let mean_total = sidecars.iter().map(|m| m.total_seconds).sum::<f64>() / 3.0;
    assert!((report.mean.total - mean_total).abs() < 1e-12);
}

#[test]
fn single_stage_selection_writes_one_directory() {
    let cfg = PipelineConfig { stages: "smoothed".parse().unwrap(), ..Default::default() };
    let out = run_pipeline(&net(32), &sample(32, 8), "only", &cfg, SEQ).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &out, &cfg, OutputOptions::default()).unwrap();
    assert!(dir.path().join("smoothed/only.png").exists());
    assert!(!dir.path().join("raw").exists() && !dir.path().join("refined").exists());
    assert!(dir.path().join("only.json").exists());
}
