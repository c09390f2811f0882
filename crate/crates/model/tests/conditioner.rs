mod oracle;

use oracle::{max_diff, rows_of};
use proptest::prelude::*;
use trackedit_core::rng::derive;
use trackedit_core::ProjectedTracks;
use trackedit_model::conditioner::{condition_tokens, ConditionerConfig, ConditionerParams, TokenGrid};
use trackedit_model::gradcheck::{random_grid, random_tracks, SmallCase};
use trackedit_model::layers::{CrossAttention, Linear, Params};
use trackedit_model::tensor::Mat;

fn small() -> (ConditionerConfig, ConditionerParams) {
    let cfg = ConditionerConfig::new(8, 2, 8);
    let params = ConditionerParams::new(&cfg, &mut derive(3, "conditioner/params"));
    (cfg, params)
}

fn frame_major(rows: &[oracle::Rows]) -> oracle::Rows {
    rows.iter().flat_map(|r| r.iter().cloned()).collect()
}

#[test]
fn attend_matches_scalar_loops() {
    let (cfg, p) = small();
    let mut rng = derive(4, "attend");
    let q = Mat::uniform(3, 8, 1.0, &mut rng);
    let k = Mat::uniform(2, 8, 1.0, &mut rng);
    let v = Mat::uniform(2, 8, 1.0, &mut rng);
    let (out, cache) = p.sample.forward(&q, &k, &v, cfg.heads);
    let expected = oracle::attend(&rows_of(&q), &rows_of(&k), &rows_of(&v), &p.sample, cfg.heads);
    assert!(max_diff(&expected, &out) < 1e-12);
    for probs in &cache.probs {
        for r in 0..probs.rows {
            assert!((probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn single_key_returns_projected_value() {
    let (cfg, p) = small();
    let mut rng = derive(5, "attend");
    let q = Mat::uniform(4, 8, 1.0, &mut rng);
    let k = Mat::uniform(1, 8, 1.0, &mut rng);
    let v = Mat::uniform(1, 8, 1.0, &mut rng);
    let (out, _) = p.sample.forward(&q, &k, &v, cfg.heads);
    let projected = p.sample.out.forward(&v);
    for r in 0..4 {
        for c in 0..8 {
            assert!((out.at(r, c) - projected.at(0, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn identical_keys_average_values() {
    let (cfg, p) = small();
    let mut rng = derive(6, "attend");
    let q = Mat::uniform(3, 8, 1.0, &mut rng);
    let key = Mat::uniform(1, 8, 1.0, &mut rng);
    let k = Mat::vstack(&[&key, &key, &key, &key]);
    let v = Mat::uniform(4, 8, 1.0, &mut rng);
    let (out, cache) = p.sample.forward(&q, &k, &v, cfg.heads);
    for probs in &cache.probs {
        assert!(probs.data.iter().all(|&w| (w - 0.25).abs() < 1e-12));
    }
    let mut mean = v.sum_rows();
    mean.scale(0.25);
    let projected = p.sample.out.forward(&mean);
    for r in 0..3 {
        for c in 0..8 {
            assert!((out.at(r, c) - projected.at(0, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_has_no_score_bias() {
    let ca = CrossAttention::new(8, 8, &mut derive(0, "names"));
    let names: Vec<String> = ca.named().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["q.w", "q.b", "k.w", "k.b", "out.w", "out.b"]);
    // Every tensor is a linear map, its offset, or a layer-norm scale/shift.
    let (_, p) = small();
    for (name, _) in p.named() {
        let leaf = name.rsplit('.').next().unwrap();
        let parent = name.rsplit('.').nth(1).unwrap();
        match leaf {
            "w" | "b" => assert!(["q", "k", "out", "qkv", "proj", "ff1", "ff2", "depth"].contains(&parent), "{name}"),
            "gain" | "bias" => assert!(parent.starts_with("ln"), "{name}"),
            _ => panic!("unexpected tensor {name}"),
        }
    }
    let blocks: std::collections::BTreeSet<_> = p.named().into_iter().filter_map(|(n, _)| n.strip_prefix("temporal.").map(|r| r[..1].to_string())).collect();
    assert_eq!(blocks.len(), 2);
}

#[test]
fn sample_context_matches_scalar_loops() {
    let (cfg, p) = small();
    let mut rng = derive(7, "sample");
    let vid = random_grid(2, 2, 2, 8, &mut rng);
    let pt = random_tracks(2, 2, &mut rng);
    let (tt, _) = p.sample_context(&cfg, &pt, &vid);
    let expected = frame_major(&oracle::sample_context(&p, &cfg, &pt, &vid));
    assert!(max_diff(&expected, &tt.data) < 1e-12);
}

#[test]
fn constant_video_gives_constant_track_sequence() {
    let (cfg, p) = small();
    let mut rng = derive(8, "sample");
    let token = Mat::uniform(1, 8, 1.0, &mut rng);
    let vid = TokenGrid::new(3, 2, 2, Mat::vstack(&vec![&token; 12]));
    let pt = random_tracks(3, 1, &mut rng);
    let (tt, _) = p.sample_context(&cfg, &pt, &vid);
    let projected = rows_of(&p.sample.out.forward(&token));
    let mut seq = vec![projected[0].clone(); 3];
    for b in &p.temporal {
        seq = oracle::block(&seq, b, cfg.heads);
    }
    assert!(max_diff(&seq, &tt.data) < 1e-12);
}

#[test]
fn zero_depth_projection_is_identity_and_additive() {
    let (cfg, mut p) = small();
    let mut rng = derive(9, "depth");
    let vid = random_grid(2, 2, 2, 8, &mut rng);
    let pt = random_tracks(2, 3, &mut rng);
    let (tt, _) = p.sample_context(&cfg, &pt, &vid);
    let z: Vec<f64> = pt.coords().iter().map(|c| c[2]).collect();
    let (injected, _) = p.inject_depth(&cfg, &tt, &z);
    let mut zero = tt.clone();
    zero.data.fill(0.0);
    let (offset, _) = p.inject_depth(&cfg, &zero, &z);
    for i in 0..tt.data.len() {
        assert!((injected.data.data[i] - offset.data.data[i] - tt.data.data[i]).abs() < 1e-12);
    }
    let (same, _) = p.inject_depth(&cfg, &tt, &z);
    assert_eq!(same, injected);
    p.depth = Linear::zeros(8, 8);
    assert_eq!(p.inject_depth(&cfg, &tt, &z).0, tt);
}

#[test]
fn splat_matches_scalar_loops_and_single_track() {
    let (cfg, p) = small();
    let mut rng = derive(10, "splat");
    let vid = random_grid(2, 3, 2, 8, &mut rng);
    let pt = random_tracks(2, 3, &mut rng);
    let (tt, _) = p.sample_context(&cfg, &pt, &vid);
    let (grid, _) = p.splat(&cfg, &tt, &pt, 3, 2);
    let rows: Vec<oracle::Rows> = (0..2).map(|k| rows_of(&tt.frame(k))).collect();
    assert!(max_diff(&oracle::splat(&p, &cfg, &rows, &pt, 3, 2), &grid.data) < 1e-12);

    let one = pt.subset(&[1]);
    let (tt1, _) = p.sample_context(&cfg, &one, &vid);
    let (grid1, _) = p.splat(&cfg, &tt1, &one, 3, 2);
    for k in 0..2 {
        let projected = p.splat.out.forward(&tt1.frame(k));
        for cell in 0..6 {
            for c in 0..8 {
                assert!((grid1.data.at(k * 6 + cell, c) - projected.at(0, c)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn full_forward_matches_scalar_loops() {
    let case = SmallCase::new(21);
    let cfg = &case.cfg.conditioner;
    let p = &case.model.conditioner;
    let mut rng = derive(22, "forward");
    let vid = random_grid(2, 4, 4, 8, &mut rng);
    let (a, b, cache) = p.forward(cfg, &vid, &case.tracks_src, &case.tracks_tgt).unwrap();
    let (ea, eb) = oracle::conditioner_forward(p, cfg, &vid, &case.tracks_src, &case.tracks_tgt);
    assert!(max_diff(&ea, &a.data) < 1e-10);
    assert!(max_diff(&eb, &b.data) < 1e-10);
    for probs in cache.attention_weights() {
        for r in 0..probs.rows {
            assert!((probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn zero_values_give_zero_grids() {
    let (cfg, mut p) = small();
    p.sample.out = Linear::zeros(8, 8);
    p.splat.out = Linear::zeros(8, 8);
    for b in &mut p.temporal {
        b.proj = Linear::zeros(8, 8);
        b.ff2 = Linear::zeros(32, 8);
    }
    p.depth = Linear::zeros(8, 8);
    let mut rng = derive(11, "zero");
    let vid = TokenGrid::zeros(2, 2, 2, 8);
    let (a, b) = (random_tracks(2, 3, &mut rng), random_tracks(2, 3, &mut rng));
    let (ga, gb, _) = p.forward(&cfg, &vid, &a, &b).unwrap();
    assert!(ga.data.data.iter().chain(&gb.data.data).all(|&v| v == 0.0));
}

#[test]
fn sampling_is_linear_in_video_without_temporal_blocks() {
    let (cfg, mut p) = small();
    p.temporal.clear();
    p.sample.out.b.fill(0.0);
    let mut rng = derive(12, "linear");
    let vid = random_grid(2, 2, 2, 8, &mut rng);
    let mut doubled = vid.clone();
    doubled.data.scale(2.0);
    let pt = random_tracks(2, 3, &mut rng);
    let (a, _) = p.sample_context(&cfg, &pt, &vid);
    let (b, _) = p.sample_context(&cfg, &pt, &doubled);
    for (x, y) in a.data.data.iter().zip(&b.data.data) {
        assert!((2.0 * x - y).abs() < 1e-12);
    }
}

#[test]
fn shared_splat_weights_serve_both_branches() {
    let (cfg, p) = small();
    let mut rng = derive(13, "shared");
    let vid = random_grid(2, 2, 2, 8, &mut rng);
    let pt = random_tracks(2, 3, &mut rng);
    // With identical source and target tracks the two branches coincide.
    let (a, b, _) = p.forward(&cfg, &vid, &pt, &pt).unwrap();
    assert_eq!(a, b);
    let mut q = p.clone();
    q.splat.q.w.data[0] += 0.5;
    let (a2, b2, _) = q.forward(&cfg, &vid, &pt, &pt).unwrap();
    assert_ne!(a2, a);
    assert_eq!(a2, b2);
}

#[test]
fn condition_tokens_concatenates() {
    let mut rng = derive(14, "tokens");
    let (vs, vt) = (random_grid(2, 2, 3, 8, &mut rng), random_grid(2, 2, 3, 8, &mut rng));
    let zero = TokenGrid::zeros(2, 2, 3, 8);
    let seq = condition_tokens(&vs, &vt, &zero, &zero).unwrap();
    assert_eq!(seq.rows, 2 * 2 * 2 * 3);
    assert_eq!(seq, Mat::vstack(&[&vs.data, &vt.data]));
    let bad = TokenGrid::zeros(2, 3, 2, 8);
    assert!(condition_tokens(&vs, &vt, &bad, &zero).is_err());
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let (cfg, p) = small();
    let mut rng = derive(15, "zero-grad");
    let vid = random_grid(2, 2, 2, 8, &mut rng);
    let (a, b) = (random_tracks(2, 3, &mut rng), random_tracks(2, 3, &mut rng));
    let (ga, gb, cache) = p.forward(&cfg, &vid, &a, &b).unwrap();
    let mut grad = p.clone();
    grad.fill(0.0);
    let zeros = (TokenGrid::zeros(ga.f, ga.h, ga.w, 8), TokenGrid::zeros(gb.f, gb.h, gb.w, 8));
    let inputs = p.backward(&cfg, &cache, &zeros.0, &zeros.1, &mut grad);
    assert!(grad.named().iter().all(|(_, m)| m.data.iter().all(|&v| v == 0.0)));
    assert!(inputs.vid_src.data.iter().all(|&v| v == 0.0));
}

#[test]
fn mismatched_frames_are_rejected() {
    let (cfg, p) = small();
    let mut rng = derive(16, "shape");
    let vid = random_grid(2, 2, 2, 8, &mut rng);
    let pt3 = random_tracks(3, 2, &mut rng);
    let pt2 = random_tracks(2, 2, &mut rng);
    assert!(p.forward(&cfg, &vid, &pt3, &pt2).is_err());
}

#[test]
fn initial_sampling_and_splatting_are_local() {
    let cfg = trackedit_model::train::ToyTrainConfig::default().model_config().conditioner;
    let p = ConditionerParams::new(&cfg, &mut derive(0, "local"));
    let side = 8;
    let cells = [(0, 0), (3, 5), (7, 2), (6, 6)];
    let coords: Vec<[f64; 3]> = cells.iter().map(|&(i, j)| [(j as f64 + 0.5) / side as f64, (i as f64 + 0.5) / side as f64, 0.4]).collect();
    let pt = ProjectedTracks::new(1, cells.len(), coords, vec![true; cells.len()]).unwrap();
    let vid = random_grid(1, side, side, cfg.d, &mut derive(1, "local"));
    let (_, _, cache) = p.forward(&cfg, &vid, &pt, &pt).unwrap();
    let weights: Vec<&Mat> = cache.attention_weights().collect();
    let (sample, splat) = (weights[0], weights[1]);
    for (n, &(i, j)) in cells.iter().enumerate() {
        let row = sample.row(n);
        let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(best, i * side + j);
        assert!(row[best] > 0.9, "track {n} samples its cell with weight {}", row[best]);
        assert!(splat.row(i * side + j)[n] > 0.9);
    }
}

fn permuted(pt: &ProjectedTracks, perm: &[usize]) -> ProjectedTracks {
    pt.subset(perm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sampling_is_permutation_equivariant(seed in 0u64..1000, shift in 1usize..5) {
        let (cfg, p) = small();
        let mut rng = derive(seed, "perm");
        let vid = random_grid(2, 2, 3, 8, &mut rng);
        let pt = random_tracks(2, 5, &mut rng);
        let perm: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
        let (a, _) = p.sample_context(&cfg, &pt, &vid);
        let (b, _) = p.sample_context(&cfg, &permuted(&pt, &perm), &vid);
        for k in 0..2 {
            for (i, &j) in perm.iter().enumerate() {
                prop_assert_eq!(b.data.row(k * 5 + i), a.data.row(k * 5 + j));
            }
        }
    }

    #[test]
    fn splatting_is_permutation_invariant(seed in 0u64..1000, shift in 1usize..5) {
        let (cfg, p) = small();
        let mut rng = derive(seed, "perm-splat");
        let vid = random_grid(2, 2, 3, 8, &mut rng);
        let pt = random_tracks(2, 5, &mut rng);
        let perm: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
        let (tt, _) = p.sample_context(&cfg, &pt, &vid);
        let (a, _) = p.splat(&cfg, &tt, &pt, 2, 3);
        let (ttp, _) = p.sample_context(&cfg, &permuted(&pt, &perm), &vid);
        let (b, _) = p.splat(&cfg, &ttp, &permuted(&pt, &perm), 2, 3);
        for (x, y) in a.data.data.iter().zip(&b.data.data) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in 0u64..1000, scale in 0.1f64..50.0) {
        let (cfg, p) = small();
        let mut rng = derive(seed, "softmax");
        let mut vid = random_grid(2, 2, 2, 8, &mut rng);
        vid.data.scale(scale);
        let (a, b) = (random_tracks(2, 4, &mut rng), random_tracks(2, 4, &mut rng));
        let (_, _, cache) = p.forward(&cfg, &vid, &a, &b).unwrap();
        for probs in cache.attention_weights() {
            for r in 0..probs.rows {
                prop_assert!((probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }
}
