//! Procedural scene pairs: flat colored billboards in front of a textured
//! background plane, rendered twice under different object and camera
//! scripts.

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use trackedit_core::geometry::{CameraFrame, CameraIntrinsics, CameraPath, RigidPose};
use trackedit_core::rng::{derive, Rng};
use trackedit_core::tracks::{ClipPair, DepthMaps, LabelMaps};
use trackedit_core::{TrackSet, VideoClip};

/// Saturated billboard colors; the background stays muted.
pub const PALETTE: [[f32; 3]; 6] = [
    [0.92, 0.16, 0.12],
    [0.12, 0.82, 0.22],
    [0.16, 0.30, 0.95],
    [0.95, 0.86, 0.10],
    [0.90, 0.20, 0.86],
    [0.10, 0.86, 0.92],
];

/// Fraction of a billboard's half-size within which tracks are placed, so
/// every pixel touching a track's projection is covered by the billboard.
const TRACK_INSET: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySceneConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub tracks: usize,
    pub min_billboards: usize,
    pub max_billboards: usize,
    /// Billboard depths are drawn from this range (meters).
    pub depth_range: [f64; 2],
    pub min_depth_gap: f64,
    pub background_depth: f64,
    /// Billboard side length range (meters).
    pub size_range: [f64; 2],
    /// Largest in-plane rotation over a clip (radians).
    pub max_spin: f64,
    /// Largest camera travel over a clip (meters).
    pub max_camera_travel: f64,
    pub foreground_fraction: f64,
    /// When false both clips share one static script.
    pub animate: bool,
}

impl Default for ToySceneConfig {
    fn default() -> Self {
        Self {
            frames: 16,
            height: 32,
            width: 32,
            tracks: 48,
            min_billboards: 1,
            max_billboards: 3,
            depth_range: [2.5, 4.5],
            min_depth_gap: 0.4,
            background_depth: 6.0,
            size_range: [0.8, 1.2],
            max_spin: 0.5,
            max_camera_travel: 0.3,
            foreground_fraction: 0.6,
            animate: true,
        }
    }
}

impl ToySceneConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.frames < 2 || self.height == 0 || self.width == 0 {
            return Err("need at least 2 frames and a nonempty frame".into());
        }
        if self.min_billboards == 0 || self.min_billboards > self.max_billboards || self.max_billboards > PALETTE.len() {
            return Err(format!("billboard count range must lie in 1..={}", PALETTE.len()));
        }
        let [near, far] = self.depth_range;
        if !(near > 0.5 && near <= far && far + self.min_depth_gap <= self.background_depth) {
            return Err("depths must satisfy 0.5 < near <= far < background".into());
        }
        if (self.max_billboards - 1) as f64 * self.min_depth_gap > far - near {
            return Err("depth range too narrow for distinct billboard depths".into());
        }
        if self.tracks < 2 * self.max_billboards + 1 {
            return Err("too few tracks for the billboards".into());
        }
        if !(0.0..=1.0).contains(&self.foreground_fraction) {
            return Err("foreground fraction must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        let (w, h) = (self.width as f64, self.height as f64);
        CameraIntrinsics::new(w, w, w / 2.0, h / 2.0, self.width as u32, self.height as u32).expect("positive frame size")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Billboard {
    pub object_id: u32,
    pub color: [f32; 3],
    pub size: f64,
    pub depth: f64,
}

/// Linear motion of a billboard center in its depth plane plus a constant
/// in-plane spin.
#[derive(Debug, Clone, PartialEq)]
struct MotionScript {
    start: [f64; 2],
    velocity: [f64; 2],
    angle: f64,
    spin: f64,
}

impl MotionScript {
    fn center(&self, f: usize, depth: f64) -> Vector3<f64> {
        Vector3::new(self.start[0] + self.velocity[0] * f as f64, self.start[1] + self.velocity[1] * f as f64, depth)
    }

    fn rotation(&self, f: usize) -> Matrix3<f64> {
        let (s, c) = (self.angle + self.spin * f as f64).sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ClipScript {
    motions: Vec<MotionScript>,
    camera_start: [f64; 2],
    camera_velocity: [f64; 2],
}

impl ClipScript {
    fn camera(&self, cfg: &ToySceneConfig) -> CameraPath {
        let intr = cfg.intrinsics();
        let frames = (0..cfg.frames)
            .map(|f| {
                let c = Vector3::new(self.camera_start[0] + self.camera_velocity[0] * f as f64, self.camera_start[1] + self.camera_velocity[1] * f as f64, 0.0);
                CameraFrame { intrinsics: intr, pose: RigidPose::new(Matrix3::identity(), -c).expect("identity rotation") }
            })
            .collect();
        CameraPath::new(frames).expect("consistent frames")
    }
}

/// Smooth, low-contrast background color at a world position on the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundTexture {
    pub base: [f32; 3],
    pub freq: [[f64; 2]; 3],
    pub phase: [f64; 3],
}

impl BackgroundTexture {
    fn random(rng: &mut Rng) -> Self {
        let grey = rng.random_range(0.35..0.55f32);
        Self {
            base: [0; 3].map(|_| grey + rng.random_range(-0.04..0.04f32)),
            freq: [0; 3].map(|_| [rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)]),
            phase: [0; 3].map(|_| rng.random_range(0.0..std::f64::consts::TAU)),
        }
    }

    pub fn color(&self, x: f64, y: f64) -> [f32; 3] {
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            let wave = (self.freq[c][0] * x + self.freq[c][1] * y + self.phase[c]).sin();
            out[c] = self.base[c] + 0.08 * wave as f32;
        }
        out
    }
}

/// One generated pair plus the scene facts evaluation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    /// Source depth and masks live on the pair.
    pub pair: ClipPair,
    pub target_depth: DepthMaps,
    pub target_masks: LabelMaps,
    pub billboards: Vec<Billboard>,
}

impl ToySample {
    pub fn color_of(&self, object_id: u32) -> Option<[f32; 3]> {
        self.billboards.iter().find(|b| b.object_id == object_id).map(|b| b.color)
    }
}

struct Scene {
    billboards: Vec<Billboard>,
    background: BackgroundTexture,
    background_depth: f64,
}

struct Render {
    video: VideoClip,
    depth: DepthMaps,
    labels: LabelMaps,
}

impl Scene {
    /// Nearest surface hit by the ray from `origin` along `dir`: camera depth,
    /// label and color.
    fn trace(&self, script: &ClipScript, f: usize, origin: &Vector3<f64>, dir: &Vector3<f64>) -> (f64, u8, [f32; 3]) {
        let s = (self.background_depth - origin.z) / dir.z;
        let hit = origin + dir * s;
        let mut best = (hit.z - origin.z, 0u8, self.background.color(hit.x, hit.y));
        for (b, m) in self.billboards.iter().zip(&script.motions) {
            let s = (b.depth - origin.z) / dir.z;
            let hit = origin + dir * s;
            let depth = hit.z - origin.z;
            if depth >= best.0 || depth <= 0.0 {
                continue;
            }
            let local = m.rotation(f).transpose() * (hit - m.center(f, b.depth));
            if local.x.abs() <= b.size / 2.0 && local.y.abs() <= b.size / 2.0 {
                best = (depth, b.object_id as u8, b.color);
            }
        }
        best
    }

    fn render(&self, cfg: &ToySceneConfig, script: &ClipScript, cam: &CameraPath) -> Render {
        let (nf, h, w) = (cfg.frames, cfg.height, cfg.width);
        let mut video = VideoClip::zeros(nf, h, w);
        let mut depth = vec![0.0f32; nf * h * w];
        let mut labels = vec![0u8; nf * h * w];
        for f in 0..nf {
            let frame = cam.frame(f);
            let origin = frame.pose.center();
            let rt = frame.pose.rotation.transpose();
            let intr = &frame.intrinsics;
            for r in 0..h {
                for c in 0..w {
                    let ray = Vector3::new((c as f64 + 0.5 - intr.cx) / intr.fx, (r as f64 + 0.5 - intr.cy) / intr.fy, 1.0);
                    let (d, label, color) = self.trace(script, f, &origin, &(rt * ray));
                    video.set_pixel(f, r, c, color);
                    depth[(f * h + r) * w + c] = d as f32;
                    labels[(f * h + r) * w + c] = label;
                }
            }
        }
        Render {
            video,
            depth: DepthMaps { frames: nf, height: h, width: w, data: depth },
            labels: LabelMaps { frames: nf, height: h, width: w, data: labels },
        }
    }

    /// Whether some billboard other than `own` lies strictly between the camera
    /// and `p` on frame `f`.
    fn occluded(&self, script: &ClipScript, cam: &CameraPath, f: usize, p: &Vector3<f64>, own: u32) -> bool {
        let origin = cam.frame(f).pose.center();
        let dir = p - origin;
        self.billboards.iter().zip(&script.motions).any(|(b, m)| {
            if b.object_id == own || b.depth >= p.z {
                return false;
            }
            let hit = origin + dir * ((b.depth - origin.z) / dir.z);
            let local = m.rotation(f).transpose() * (hit - m.center(f, b.depth));
            local.x.abs() <= b.size / 2.0 && local.y.abs() <= b.size / 2.0
        })
    }
}

/// Half extent of the visible region on a plane at `depth`, with a margin.
fn visible_half_extent(cfg: &ToySceneConfig, depth: f64, margin: f64) -> [f64; 2] {
    let intr = cfg.intrinsics();
    [intr.cx / intr.fx * depth * margin, intr.cy / intr.fy * depth * margin]
}

fn random_script(cfg: &ToySceneConfig, billboards: &[Billboard], rng: &mut Rng) -> ClipScript {
    let steps = (cfg.frames - 1) as f64;
    let motions = billboards
        .iter()
        .map(|b| {
            let [hx, hy] = visible_half_extent(cfg, b.depth, 0.55);
            let mut point = || [rng.random_range(-hx..hx), rng.random_range(-hy..hy)];
            let (start, end) = (point(), point());
            MotionScript {
                start,
                velocity: [(end[0] - start[0]) / steps, (end[1] - start[1]) / steps],
                angle: rng.random_range(-0.4..0.4),
                spin: rng.random_range(-cfg.max_spin..=cfg.max_spin) / steps,
            }
        })
        .collect();
    let travel = cfg.max_camera_travel / 2.0;
    let mut point = || [rng.random_range(-travel..=travel), rng.random_range(-travel..=travel)];
    let (start, end) = (point(), point());
    ClipScript { motions, camera_start: start, camera_velocity: [(end[0] - start[0]) / steps, (end[1] - start[1]) / steps] }
}

fn frozen(script: &ClipScript) -> ClipScript {
    let mut s = script.clone();
    for m in &mut s.motions {
        m.velocity = [0.0; 2];
        m.spin = 0.0;
    }
    s.camera_velocity = [0.0; 2];
    s
}

/// Material points: `(object id, local offset)`. Billboard points come in
/// antithetic pairs so each object's mean local offset is exactly zero.
fn sample_material_points(cfg: &ToySceneConfig, billboards: &[Billboard], rng: &mut Rng) -> Vec<(u32, Vector3<f64>)> {
    let fg_pairs = ((cfg.tracks as f64 * cfg.foreground_fraction) / 2.0).floor() as usize;
    let fg_pairs = fg_pairs.clamp(billboards.len(), (cfg.tracks - 1) / 2);
    let mut points = Vec::with_capacity(cfg.tracks);
    for i in 0..fg_pairs {
        let b = &billboards[i % billboards.len()];
        let half = b.size / 2.0 * TRACK_INSET;
        let p = Vector3::new(rng.random_range(-half..=half), rng.random_range(-half..=half), 0.0);
        points.push((b.object_id, p));
        points.push((b.object_id, -p));
    }
    let [hx, hy] = visible_half_extent(cfg, cfg.background_depth, 0.9);
    while points.len() < cfg.tracks {
        points.push((0, Vector3::new(rng.random_range(-hx..hx), rng.random_range(-hy..hy), cfg.background_depth)));
    }
    points
}

fn build_tracks(cfg: &ToySceneConfig, scene: &Scene, script: &ClipScript, cam: &CameraPath, points: &[(u32, Vector3<f64>)]) -> TrackSet {
    let (nf, nt) = (cfg.frames, points.len());
    let mut positions = Vec::with_capacity(nf * nt);
    let mut visibility = Vec::with_capacity(nf * nt);
    for f in 0..nf {
        let frame = cam.frame(f);
        for &(id, local) in points {
            let world = match scene.billboards.iter().position(|b| b.object_id == id) {
                Some(i) => {
                    let (b, m) = (&scene.billboards[i], &script.motions[i]);
                    m.center(f, b.depth) + m.rotation(f) * local
                }
                None => local,
            };
            let pc = frame.pose.transform_point(&world);
            let (x, y) = (frame.intrinsics.fx * pc.x / pc.z + frame.intrinsics.cx, frame.intrinsics.fy * pc.y / pc.z + frame.intrinsics.cy);
            visibility.push(frame.intrinsics.contains(x, y) && !scene.occluded(script, cam, f, &world, id));
            positions.push(world);
        }
    }
    let ids = points.iter().map(|p| p.0).collect();
    TrackSet::new(nf, nt, positions, ids, vec![true; nf * nt], visibility).expect("consistent shapes")
}

/// Renders a source/target pair of one random scene. Both clips share
/// billboards, background and material points; they differ in object
/// motion and camera travel unless `cfg.animate` is false.
pub fn gen_procedural_pair(seed: u64, cfg: &ToySceneConfig) -> ToySample {
    cfg.validate().expect("invalid toy scene config");
    let mut rng = derive(seed, "toy/scene");
    let count = rng.random_range(cfg.min_billboards..=cfg.max_billboards);
    let mut colors = PALETTE.to_vec();
    colors.shuffle(&mut rng);
    // Distinct depths: evenly spaced slots with the required gap, jittered
    // inside the leftover slack.
    let [near, far] = cfg.depth_range;
    let slack = (far - near) - (count - 1) as f64 * cfg.min_depth_gap;
    let mut offsets: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..=slack)).collect();
    offsets.sort_by(f64::total_cmp);
    let billboards: Vec<Billboard> = (0..count)
        .map(|i| Billboard {
            object_id: i as u32 + 1,
            color: colors[i],
            size: rng.random_range(cfg.size_range[0]..=cfg.size_range[1]),
            depth: near + offsets[i] + i as f64 * cfg.min_depth_gap,
        })
        .collect();
    let scene = Scene { billboards, background: BackgroundTexture::random(&mut rng), background_depth: cfg.background_depth };
    let (source_script, target_script) = if cfg.animate {
        let s = random_script(cfg, &scene.billboards, &mut rng);
        (s, random_script(cfg, &scene.billboards, &mut rng))
    } else {
        let s = frozen(&random_script(cfg, &scene.billboards, &mut rng));
        (s.clone(), s)
    };
    let points = sample_material_points(cfg, &scene.billboards, &mut rng);
    let (source_camera, target_camera) = (source_script.camera(cfg), target_script.camera(cfg));
    let src = scene.render(cfg, &source_script, &source_camera);
    let tgt = scene.render(cfg, &target_script, &target_camera);
    let pair = ClipPair {
        source_video: src.video,
        target_video: Some(tgt.video),
        source_tracks: build_tracks(cfg, &scene, &source_script, &source_camera, &points),
        target_tracks: build_tracks(cfg, &scene, &target_script, &target_camera, &points),
        source_camera,
        target_camera,
        depth: Some(src.depth),
        masks: Some(src.labels),
    };
    ToySample { pair, target_depth: tgt.depth, target_masks: tgt.labels, billboards: scene.billboards }
}
