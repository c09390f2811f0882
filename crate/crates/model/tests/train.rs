use trackedit_model::scene::ToySceneConfig;
use trackedit_model::denoiser::TrackMode;
use trackedit_model::train::*;
use trackedit_core::VideoClip;

fn tiny() -> ToyTrainConfig {
    ToyTrainConfig {
        scene: ToySceneConfig { frames: 4, height: 8, width: 8, tracks: 12, ..ToySceneConfig::default() },
        pairs: 6,
        held_out: 2,
        epochs: 3,
        d: 8,
        denoiser_heads: 2,
        blocks: 1,
        patch: (2, 4, 4),
        eval_steps: 2,
        threads: 2,
        ..ToyTrainConfig::default()
    }
}

fn metrics(m: &EpochMetrics) -> (usize, f64, Option<f64>) {
    (m.epoch, m.loss, m.val_epe)
}

#[test]
fn default_config_is_valid() {
    ToyTrainConfig::default().validate().unwrap();
    tiny().validate().unwrap();
    let bad = ToyTrainConfig { patch: (3, 4, 4), ..ToyTrainConfig::default() };
    assert!(bad.validate().is_err());
    let bad = ToyTrainConfig { held_out: 200, ..ToyTrainConfig::default() };
    assert!(bad.validate().is_err());
}

#[test]
fn config_json_rejects_unknown_fields() {
    let cfg: ToyTrainConfig = serde_json::from_str(r#"{"epochs": 4, "scene": {"tracks": 32}}"#).unwrap();
    assert_eq!((cfg.epochs, cfg.scene.tracks, cfg.pairs), (4, 32, 200));
    assert!(serde_json::from_str::<ToyTrainConfig>(r#"{"epoch": 4}"#).is_err());
}

#[test]
fn training_is_reproducible_and_thread_independent() {
    let cfg = tiny();
    let data = generate_dataset(&cfg);
    let (train, held) = split(&data, cfg.held_out);
    let a = train_loop(&cfg, train, held, TrackMode::Full, |_| {});
    let one = ToyTrainConfig { threads: 1, ..cfg.clone() };
    let data1 = generate_dataset(&one);
    let (train1, held1) = split(&data1, one.held_out);
    let b = train_loop(&one, train1, held1, TrackMode::Full, |_| {});
    assert_eq!(a.model, b.model);
    assert_eq!(a.metrics.iter().map(metrics).collect::<Vec<_>>(), b.metrics.iter().map(metrics).collect::<Vec<_>>());
    assert_eq!(a.metrics.len(), cfg.epochs);
    assert!(a.metrics[..cfg.epochs - 1].iter().all(|m| m.val_epe.is_none()));
    assert!(a.final_epe().unwrap().is_finite());
}

#[test]
fn seeds_change_the_run() {
    let cfg = tiny();
    let other = ToyTrainConfig { seed: 1, ..cfg.clone() };
    let run = |c: &ToyTrainConfig| {
        let data = generate_dataset(c);
        let (train, held) = split(&data, c.held_out);
        train_loop(c, train, held, TrackMode::Zeroed, |_| {}).final_loss()
    };
    assert_ne!(run(&cfg), run(&other));
}

#[test]
fn loss_falls_on_a_tiny_set() {
    let cfg = ToyTrainConfig { epochs: 30, lr: 3e-3, eval_every: 0, ..tiny() };
    let data = generate_dataset(&cfg);
    let (train, held) = split(&data, cfg.held_out);
    let out = train_loop(&cfg, train, held, TrackMode::Full, |_| {});
    assert!(out.smoothed_final_loss() < smoothed_loss(&out.metrics, 1));
}

#[test]
fn smoothing_averages_a_trailing_window() {
    let ms: Vec<EpochMetrics> = (1..=8).map(|e| EpochMetrics { epoch: e, loss: e as f64, val_epe: None }).collect();
    assert_eq!(smoothed_loss(&ms, 1), 1.0);
    assert_eq!(smoothed_loss(&ms, 3), 2.0);
    assert_eq!(smoothed_loss(&ms, 8), (4.0 + 5.0 + 6.0 + 7.0 + 8.0) / 5.0);
}

#[test]
fn ground_truth_target_scores_near_zero() {
    let cfg = ToyTrainConfig::default();
    let data = generate_dataset(&ToyTrainConfig { pairs: 8, held_out: 1, ..cfg });
    for p in &data {
        let target = p.sample.pair.target_video.as_ref().unwrap();
        assert!(blob_epe(target, &p.sample) < 2.0);
    }
}

#[test]
fn blob_centroid_of_a_square_is_its_center() {
    let mut clip = VideoClip::from_data(1, 10, 12, vec![0.5; 10 * 12 * 3]).unwrap();
    for r in 2..6 {
        for c in 3..9 {
            clip.set_pixel(0, r, c, [1.0, 0.0, 0.0]);
        }
    }
    let [x, y] = blob_centroid(&clip, 0, [1.0, 0.0, 0.0]).unwrap();
    // The grey background leaks a negligible weight towards the frame center.
    assert!((x - 6.0).abs() < 1e-3 && (y - 4.0).abs() < 1e-3, "{x} {y}");
    let black = VideoClip::from_data(1, 4, 4, vec![0.0; 48]).unwrap();
    assert!(blob_centroid(&black, 0, [1.0, 1.0, 1.0]).is_none());
}
