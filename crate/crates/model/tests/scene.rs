use trackedit_core::geometry::project;
use trackedit_model::scene::{gen_procedural_pair, ToySceneConfig};

#[test]
fn static_scripts_render_identical_clips() {
    let cfg = ToySceneConfig { animate: false, ..ToySceneConfig::default() };
    let s = gen_procedural_pair(7, &cfg);
    assert_eq!(Some(&s.pair.source_video), s.pair.target_video.as_ref());
    for f in 1..cfg.frames {
        assert_eq!(s.pair.source_video.frame(f), s.pair.source_video.frame(0));
    }
}

#[test]
fn visible_billboard_tracks_land_on_their_color() {
    let cfg = ToySceneConfig::default();
    let (mut hits, mut total) = (0usize, 0usize);
    for seed in 0..30 {
        let s = gen_procedural_pair(seed, &cfg);
        let target = s.pair.target_video.as_ref().unwrap();
        for (ts, cam, video) in [(&s.pair.source_tracks, &s.pair.source_camera, &s.pair.source_video), (&s.pair.target_tracks, &s.pair.target_camera, target)] {
            for f in 0..ts.num_frames() {
                for n in 0..ts.num_tracks() {
                    let id = ts.object_id(n);
                    if id == 0 || !ts.visibility()[f * ts.num_tracks() + n] {
                        continue;
                    }
                    let frame = cam.frame(f);
                    let p = project(ts.position(f, n), &frame.intrinsics, &frame.pose).unwrap();
                    let px = video.pixel(f, p.y.floor() as usize, p.x.floor() as usize);
                    total += 1;
                    if px == s.color_of(id).unwrap() {
                        hits += 1;
                    }
                }
            }
        }
    }
    assert!(total > 1000);
    assert!(hits as f64 >= 0.99 * total as f64, "{hits}/{total}");
}

#[test]
fn clips_share_background_where_both_unoccluded() {
    let cfg = ToySceneConfig { max_camera_travel: 0.0, ..ToySceneConfig::default() };
    for seed in 0..5 {
        let s = gen_procedural_pair(seed, &cfg);
        assert_eq!(s.pair.source_camera.frame(0), s.pair.target_camera.frame(0));
        let (src, tgt) = (&s.pair.source_video, s.pair.target_video.as_ref().unwrap());
        let (ms, mt) = (s.pair.masks.as_ref().unwrap(), &s.target_masks);
        let mut shared = 0;
        for f in 0..cfg.frames {
            for r in 0..cfg.height {
                for c in 0..cfg.width {
                    if ms.at(f, r, c) == 0 && mt.at(f, r, c) == 0 {
                        assert_eq!(src.pixel(f, r, c), tgt.pixel(f, r, c));
                        shared += 1;
                    }
                }
            }
        }
        assert!(shared > 0);
    }
}

#[test]
fn billboard_centers_stay_projectable() {
    let cfg = ToySceneConfig::default();
    for seed in 0..20 {
        let s = gen_procedural_pair(seed, &cfg);
        for (masks, frames) in [(s.pair.masks.as_ref().unwrap(), cfg.frames), (&s.target_masks, cfg.frames)] {
            for b in &s.billboards {
                // Every billboard covers at least one pixel of every frame
                // unless a nearer billboard hides it.
                let seen = (0..frames).filter(|&f| masks.frame(f).contains(&(b.object_id as u8))).count();
                assert!(seen > 0, "object {} never seen (seed {seed})", b.object_id);
            }
        }
    }
}
