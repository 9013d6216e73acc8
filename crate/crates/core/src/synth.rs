//! Deterministic synthetic multi-view scenes with planted scales.
//!
//! A scene is a set of textured planar patches in front of a canonical
//! conditioning camera at the world origin. Every scene also carries a
//! planted scale `s*`: the "dataset" (nominal) cameras of a sequence have
//! their translations divided by `s*`, so the true camera for a nominal one
//! is recovered with [`scale_relative_motion`] by `s*`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth_calib::DepthPairSample;
use crate::geometry::{scale_relative_motion, Camera, GeometryError, Intrinsics, PixelMatch, Pose, Z_MIN};
use crate::grid::{FlowField, Grid, Mask, ScalarGrid};
use crate::rng::{hash_str, keyed_rng, lattice_value};

/// Relative depth tolerance of the visibility z-test.
pub const DEPTH_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("no co-visible pixels between the two views")]
    NoCoVisibility,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Multi-octave value noise over normalized patch coordinates `[-1, 1]^2`,
/// interpolated with a quintic fade so it is C2 inside the lattice cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseTexture {
    pub seed: u64,
    /// Lattice cells across the patch along `u` and `v` at the coarsest octave.
    pub cells: [f64; 2],
    pub octaves: u32,
    pub persistence: f64,
}

#[inline]
fn fade(t: f64) -> (f64, f64) {
    let t2 = t * t;
    let v = t2 * t * (t * (6.0 * t - 15.0) + 10.0);
    let dv = 30.0 * t2 * (t * (t - 2.0) + 1.0);
    (v, dv)
}

impl NoiseTexture {
    /// Value in `[0, 1]` and its gradient with respect to `(nu, nv)`.
    pub fn eval(&self, nu: f64, nv: f64) -> (f64, Vector2<f64>) {
        let mut value = 0.0;
        let mut grad = Vector2::zeros();
        let mut amp = 1.0;
        let mut total = 0.0;
        let mut freq = 0.5;
        for octave in 0..self.octaves {
            let (fu, fv) = (freq * self.cells[0], freq * self.cells[1]);
            let x = (nu + 1.0) * fu;
            let y = (nv + 1.0) * fv;
            let (ix, iy) = (x.floor(), y.floor());
            let (fx, fy) = (x - ix, y - iy);
            let (ix, iy) = (ix as i64, iy as i64);
            let v00 = lattice_value(self.seed, octave, ix, iy);
            let v10 = lattice_value(self.seed, octave, ix + 1, iy);
            let v01 = lattice_value(self.seed, octave, ix, iy + 1);
            let v11 = lattice_value(self.seed, octave, ix + 1, iy + 1);
            let (sx, dsx) = fade(fx);
            let (sy, dsy) = fade(fy);
            let top = v00 + (v10 - v00) * sx;
            let bottom = v01 + (v11 - v01) * sx;
            value += amp * (top + (bottom - top) * sy);
            let dx = dsx * ((v10 - v00) * (1.0 - sy) + (v11 - v01) * sy);
            let dy = dsy * (bottom - top);
            grad += Vector2::new(dx * fu, dy * fv) * amp;
            total += amp;
            amp *= self.persistence;
            freq *= 2.0;
        }
        (value / total, grad / total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub center: Vector3<f64>,
    /// Unit in-plane axes; the normal is `axis_u x axis_v`.
    pub axis_u: Vector3<f64>,
    pub axis_v: Vector3<f64>,
    pub half_u: f64,
    pub half_v: f64,
    pub texture: NoiseTexture,
}

impl Patch {
    pub fn normal(&self) -> Vector3<f64> {
        self.axis_u.cross(&self.axis_v)
    }

    /// Ray parameter and normalized coordinates where `origin + l * dir`
    /// meets this patch's (unbounded) plane.
    #[inline]
    fn plane_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let n = self.normal();
        let denom = n.dot(dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        let l = n.dot(&(self.center - origin)) / denom;
        let r = origin + dir * l - self.center;
        Some((l, r.dot(&self.axis_u) / self.half_u, r.dot(&self.axis_v) / self.half_v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub patch: usize,
    /// Depth along the camera z-axis.
    pub depth: f64,
    pub nu: f64,
    pub nv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub id: String,
    pub patches: Vec<Patch>,
    pub planted_scale: f64,
    pub background: f64,
}

/// Distribution parameters for [`make_scene`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub min_patches: usize,
    pub max_patches: usize,
    /// Patch-center depth range in scene units.
    pub depth_range: (f64, f64),
    /// Planted scales are log-uniform over this range.
    pub scale_range: (f64, f64),
    /// Horizontal field of view of the canonical camera, used to place patches.
    pub fov_x_degrees: f64,
    /// First patch is a large wall at the far depth covering the whole view.
    pub backdrop: bool,
    /// Coarsest texture cell size as a fraction of the view width at the
    /// patch depth; finer octaves halve it.
    pub texture_feature: f64,
    pub texture_octaves: u32,
    pub texture_persistence: f64,
    pub max_tilt_degrees: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            min_patches: 3,
            max_patches: 8,
            depth_range: (1.0, 6.0),
            scale_range: ((-1.0f64).exp(), 1.0f64.exp()),
            fov_x_degrees: 60.0,
            backdrop: true,
            texture_feature: 0.2,
            texture_octaves: 3,
            texture_persistence: 0.5,
            max_tilt_degrees: 30.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.min_patches == 0 || self.max_patches < self.min_patches {
            return bad("patch count range must be non-empty and start at 1 or more");
        }
        let (d0, d1) = self.depth_range;
        if !(d0 > 0.0 && d1 >= d0) {
            return bad("depth range must be positive and ordered");
        }
        let (s0, s1) = self.scale_range;
        if !(s0 > 0.0 && s1 >= s0 && s1.is_finite()) {
            return bad("scale range must be positive and ordered");
        }
        if !(self.fov_x_degrees > 0.0 && self.fov_x_degrees < 180.0) {
            return bad("field of view must lie in (0, 180) degrees");
        }
        if !(self.texture_feature > 0.0) || self.texture_octaves == 0 {
            return bad("texture needs a positive feature size and at least one octave");
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn tilted_axes(rng: &mut impl Rng, max_tilt: f64) -> (Vector3<f64>, Vector3<f64>) {
    let rx = uniform(rng, -max_tilt, max_tilt);
    let ry = uniform(rng, -max_tilt, max_tilt);
    let rz = uniform(rng, -PI, PI);
    let r = Rotation3::from_euler_angles(rx, ry, rz);
    (r * Vector3::x(), r * Vector3::y())
}

/// Draws a scene deterministically from `rng`.
pub fn make_scene(id: &str, spec: &SceneSpec, rng: &mut impl Rng) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let (d0, d1) = spec.depth_range;
    let tan_half = (0.5 * spec.fov_x_degrees.to_radians()).tan();
    let count = if spec.max_patches > spec.min_patches {
        rng.random_range(spec.min_patches..=spec.max_patches)
    } else {
        spec.min_patches
    };
    let max_tilt = spec.max_tilt_degrees.to_radians();
    let mut patches = Vec::with_capacity(count);
    let texture = |rng: &mut dyn rand::RngCore, depth: f64, half_u: f64, half_v: f64| {
        let feature = spec.texture_feature * 2.0 * depth * tan_half;
        NoiseTexture {
            seed: rng.next_u64(),
            cells: [2.0 * half_u / feature, 2.0 * half_v / feature],
            octaves: spec.texture_octaves,
            persistence: spec.texture_persistence,
        }
    };
    for k in 0..count {
        if k == 0 && spec.backdrop {
            let depth = d1;
            let half = 2.0 * depth * tan_half;
            let (u, v) = tilted_axes(rng, 0.15 * max_tilt);
            patches.push(Patch {
                center: Vector3::new(0.0, 0.0, depth),
                axis_u: u,
                axis_v: v,
                half_u: half,
                half_v: half,
                texture: texture(rng, depth, half, half),
            });
            continue;
        }
        let hi = if spec.backdrop { d0 + 0.85 * (d1 - d0) } else { d1 };
        let depth = uniform(rng, d0, hi);
        let reach = 0.6 * depth * tan_half;
        let center = Vector3::new(uniform(rng, -reach, reach), uniform(rng, -reach, reach), depth);
        let (u, v) = tilted_axes(rng, max_tilt);
        let size = depth * tan_half;
        let (half_u, half_v) = (uniform(rng, 0.15, 0.4) * size, uniform(rng, 0.15, 0.4) * size);
        patches.push(Patch {
            center,
            axis_u: u,
            axis_v: v,
            half_u,
            half_v,
            texture: texture(rng, depth, half_u, half_v),
        });
    }
    let (s0, s1) = spec.scale_range;
    let planted_scale = if s1 > s0 {
        uniform(rng, s0.ln(), s1.ln()).exp()
    } else {
        s0
    };
    Ok(SyntheticScene {
        id: id.to_string(),
        patches,
        planted_scale,
        background: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub image: ScalarGrid,
    /// Camera-z depth; zero where nothing is visible.
    pub depth: ScalarGrid,
    pub visibility: Mask,
}

impl SyntheticScene {
    /// Nearest patch along the ray through `pixel`, ties to the lower index.
    pub fn trace(&self, cam: &Camera, pixel: &Vector2<f64>) -> Option<Hit> {
        let origin = cam.center();
        let dir = cam.ray_direction(pixel);
        let mut best: Option<Hit> = None;
        for (i, patch) in self.patches.iter().enumerate() {
            let Some((l, nu, nv)) = patch.plane_hit(&origin, &dir) else {
                continue;
            };
            // `dir` has unit camera-z, so the ray parameter is the depth.
            if l <= Z_MIN || nu.abs() > 1.0 || nv.abs() > 1.0 {
                continue;
            }
            if best.is_none_or(|b| l < b.depth) {
                best = Some(Hit {
                    patch: i,
                    depth: l,
                    nu,
                    nv,
                });
            }
        }
        best
    }

    pub fn intensity(&self, hit: &Hit) -> f64 {
        self.patches[hit.patch].texture.eval(hit.nu, hit.nv).0
    }

    /// Intensity of patch `patch`'s plane seen through subpixel `q` of `cam`,
    /// ignoring occluders and patch bounds, with its gradient in `q`.
    pub fn layer_intensity(&self, cam: &Camera, patch: usize, q: &Vector2<f64>) -> Option<(f64, Vector2<f64>)> {
        let p = &self.patches[patch];
        let origin = cam.center();
        let dir = cam.ray_direction(q);
        let n = p.normal();
        let denom = n.dot(&dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        let l = n.dot(&(p.center - origin)) / denom;
        if l <= Z_MIN {
            return None;
        }
        let r = origin + dir * l - p.center;
        let (nu, nv) = (r.dot(&p.axis_u) / p.half_u, r.dot(&p.axis_v) / p.half_v);
        let (value, g) = p.texture.eval(nu, nv);
        let rt = cam.pose.rotation.transpose();
        let k = &cam.intrinsics;
        let mut grad = Vector2::zeros();
        for (j, a) in [
            rt * Vector3::new(1.0 / k.fx, 0.0, 0.0),
            rt * Vector3::new(0.0, 1.0 / k.fy, 0.0),
        ]
        .iter()
        .enumerate()
        {
            let dx = (a - dir * (n.dot(a) / denom)) * l;
            grad[j] = g.x * dx.dot(&p.axis_u) / p.half_u + g.y * dx.dot(&p.axis_v) / p.half_v;
        }
        Some((value, grad))
    }

    /// Projection of `point` into `cam` when it is inside the image and not
    /// occluded.
    pub fn visible_projection(&self, cam: &Camera, point: &Vector3<f64>) -> Option<(Vector2<f64>, f64)> {
        let (q, z) = cam.project_with_depth(point)?;
        if !cam.intrinsics.contains(&q) {
            return None;
        }
        let hit = self.trace(cam, &q)?;
        ((hit.depth - z).abs() <= DEPTH_TOLERANCE * z).then_some((q, z))
    }

    /// Geometry and extents scaled by `c`; textures follow the patches.
    pub fn scaled(&self, c: f64) -> SyntheticScene {
        let mut out = self.clone();
        for p in &mut out.patches {
            p.center *= c;
            p.half_u *= c;
            p.half_v *= c;
        }
        out
    }

    /// The canonical conditioning camera at the world origin.
    pub fn conditioning_camera(intrinsics: Intrinsics) -> Camera {
        Camera::new(intrinsics, Pose::identity())
    }

    /// True camera for a nominal (dataset-scale) camera, relative to `reference`.
    pub fn true_camera(&self, reference: &Camera, nominal: &Camera) -> Camera {
        scale_relative_motion(reference, nominal, self.planted_scale).expect("planted scale is positive")
    }
}

pub fn render(scene: &SyntheticScene, cam: &Camera) -> RenderOutput {
    let (w, h) = (cam.intrinsics.width as usize, cam.intrinsics.height as usize);
    let rows: Vec<Vec<(f64, f64, bool)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| match scene.trace(cam, &Vector2::new(x as f64, y as f64)) {
                    Some(hit) => (scene.intensity(&hit), hit.depth, true),
                    None => (scene.background, 0.0, false),
                })
                .collect()
        })
        .collect();
    let cells: Vec<(f64, f64, bool)> = rows.concat();
    RenderOutput {
        image: Grid::from_vec(w, h, cells.iter().map(|c| c.0).collect()).expect("sized"),
        depth: Grid::from_vec(w, h, cells.iter().map(|c| c.1).collect()).expect("sized"),
        visibility: Grid::from_vec(w, h, cells.iter().map(|c| c.2).collect()).expect("sized"),
    }
}

/// Exact optical flow from `a` to `b`. Pixels seeing nothing in `a` get NaN
/// flow; the mask keeps pixels whose surface point is inside `b` and not
/// occluded there.
pub fn gt_flow(scene: &SyntheticScene, a: &Camera, b: &Camera) -> (FlowField, Mask) {
    let (w, h) = (a.intrinsics.width as usize, a.intrinsics.height as usize);
    let rows: Vec<Vec<(Vector2<f64>, bool)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let p = Vector2::new(x as f64, y as f64);
                    let nan = (Vector2::new(f64::NAN, f64::NAN), false);
                    let Some(hit) = scene.trace(a, &p) else {
                        return nan;
                    };
                    let point = a.unproject(&p, hit.depth);
                    let Some((q, z)) = b.project_with_depth(&point) else {
                        return nan;
                    };
                    let visible = b.intrinsics.contains(&q)
                        && scene
                            .trace(b, &q)
                            .is_some_and(|hb| (hb.depth - z).abs() <= DEPTH_TOLERANCE * z);
                    (q - p, visible)
                })
                .collect()
        })
        .collect();
    let cells = rows.concat();
    (
        Grid::from_vec(w, h, cells.iter().map(|c| c.0).collect()).expect("sized"),
        Grid::from_vec(w, h, cells.iter().map(|c| c.1).collect()).expect("sized"),
    )
}

/// `n` exact matches drawn uniformly (with replacement) from the pixels of
/// `a` whose surface point is visible in `b`.
pub fn correspondences(
    scene: &SyntheticScene,
    a: &Camera,
    b: &Camera,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PixelMatch>, SynthError> {
    let (w, h) = (a.intrinsics.width, a.intrinsics.height);
    let matched = |p: Vector2<f64>| -> Option<PixelMatch> {
        let hit = scene.trace(a, &p)?;
        let point = a.unproject(&p, hit.depth);
        let (q, _) = scene.visible_projection(b, &point)?;
        Some(PixelMatch::new(p, q))
    };
    let mut out = Vec::with_capacity(n);
    let max_attempts = 64 * n.max(1);
    let mut attempts = 0;
    while out.len() < n && attempts < max_attempts {
        attempts += 1;
        let p = Vector2::new(rng.random_range(0..w) as f64, rng.random_range(0..h) as f64);
        if let Some(m) = matched(p) {
            out.push(m);
        }
    }
    if out.len() == n {
        return Ok(out);
    }
    // Sparse overlap: enumerate the co-visible set and sample from it.
    let pool: Vec<PixelMatch> = (0..h)
        .flat_map(|y| (0..w).map(move |x| Vector2::new(x as f64, y as f64)))
        .filter_map(matched)
        .collect();
    if pool.is_empty() {
        return Err(SynthError::NoCoVisibility);
    }
    while out.len() < n {
        out.push(pool[rng.random_range(0..pool.len())]);
    }
    Ok(out)
}

/// Scale-noise model of a generator that is unsure about scene scale:
/// each sample moves the camera by the requested motion times
/// `s ~ LogNormal(0, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSim {
    pub scale_noise_sigma: f64,
    pub seed: u64,
}

impl GeneratorSim {
    pub fn new(scale_noise_sigma: f64, seed: u64) -> Result<Self, SynthError> {
        if !(scale_noise_sigma >= 0.0) || !scale_noise_sigma.is_finite() {
            return Err(SynthError::InvalidSpec(format!(
                "scale noise sigma must be >= 0, got {scale_noise_sigma}"
            )));
        }
        Ok(Self {
            scale_noise_sigma,
            seed,
        })
    }

    /// Scale for `(scene, sample_index)`, from its own counter-keyed stream.
    /// The same standard-normal draw is reused across sigmas.
    pub fn draw_scale(&self, scene_id: &str, sample_index: u64) -> f64 {
        let mut rng = keyed_rng(self.seed, &[hash_str(scene_id), sample_index]);
        let z: f64 = StandardNormal.sample(&mut rng);
        (self.scale_noise_sigma * z).exp()
    }

    /// Camera actually rendered for a sample, plus the drawn scale.
    pub fn sample_camera(
        &self,
        scene: &SyntheticScene,
        cond: &Camera,
        target: &Camera,
        sample_index: u64,
    ) -> (Camera, f64) {
        let s = self.draw_scale(&scene.id, sample_index);
        let cam = scale_relative_motion(cond, target, s).expect("log-normal scale is positive");
        (cam, s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnvsSample {
    pub render: RenderOutput,
    pub camera: Camera,
    pub drawn_scale: f64,
    pub fwd: FlowField,
    pub bwd: FlowField,
}

/// One simulated generation of the `cond -> target` view with exact flows
/// between the conditioning camera and the sample.
pub fn simulate_gnvs_sample(
    scene: &SyntheticScene,
    cond: &Camera,
    target: &Camera,
    gen: &GeneratorSim,
    sample_index: u64,
) -> GnvsSample {
    let (camera, drawn_scale) = gen.sample_camera(scene, cond, target, sample_index);
    GnvsSample {
        render: render(scene, &camera),
        camera,
        drawn_scale,
        fwd: gt_flow(scene, cond, &camera).0,
        bwd: gt_flow(scene, &camera, cond).0,
    }
}

/// A scene with a nominal camera trajectory; frame 0 is the conditioning view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSequence {
    pub scene: SyntheticScene,
    /// Nominal (dataset-scale) cameras.
    pub frames: Vec<Camera>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    pub frames: usize,
    /// Nominal distance between consecutive camera centers.
    pub step: f64,
    pub max_total_yaw_degrees: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            frames: 15,
            step: 0.025,
            max_total_yaw_degrees: 3.0,
        }
    }
}

/// Straight nominal trajectory from the origin along a mostly lateral
/// direction, with a slow yaw.
pub fn make_sequence(
    scene: SyntheticScene,
    intrinsics: Intrinsics,
    spec: &TrajectorySpec,
    rng: &mut impl Rng,
) -> Result<SceneSequence, SynthError> {
    if spec.frames < 2 || !(spec.step > 0.0) {
        return Err(SynthError::InvalidSpec(
            "trajectory needs at least 2 frames and a positive step".into(),
        ));
    }
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let dir = Vector3::new(sign, uniform(rng, -0.3, 0.3), uniform(rng, -0.2, 0.6)).normalize();
    let total_yaw = uniform(rng, -1.0, 1.0) * spec.max_total_yaw_degrees.to_radians();
    let frames = (0..spec.frames)
        .map(|k| {
            let f = k as f64 / (spec.frames - 1) as f64;
            let center = dir * (spec.step * k as f64);
            let rotation: Matrix3<f64> = Rotation3::from_axis_angle(&Vector3::y_axis(), total_yaw * f).into_inner();
            Camera::new(
                intrinsics,
                Pose {
                    rotation,
                    translation: -(rotation * center),
                },
            )
        })
        .collect();
    Ok(SceneSequence { scene, frames })
}

impl SceneSequence {
    pub fn conditioning(&self) -> &Camera {
        &self.frames[0]
    }

    pub fn true_frame(&self, k: usize) -> Camera {
        self.scene.true_camera(&self.frames[0], &self.frames[k])
    }

    /// Nominal distance between the camera centers of frame 0 and frame `k`.
    pub fn nominal_distance(&self, k: usize) -> f64 {
        (self.frames[k].center() - self.frames[0].center()).norm()
    }

    /// Frame whose nominal distance is closest to `magnitude`; ties go to
    /// the earlier frame. Frame 0 is never selected.
    pub fn closest_frame(&self, magnitude: f64) -> usize {
        let mut best = 1;
        let mut best_gap = f64::INFINITY;
        for k in 1..self.frames.len() {
            let gap = (self.nominal_distance(k) - magnitude).abs();
            if gap < best_gap {
                best = k;
                best_gap = gap;
            }
        }
        best
    }
}

/// Builds `count` scenes and sequences, each from its own keyed stream.
pub fn make_sequences(
    count: usize,
    seed: u64,
    spec: &SceneSpec,
    trajectory: &TrajectorySpec,
    intrinsics: Intrinsics,
) -> Result<Vec<SceneSequence>, SynthError> {
    (0..count)
        .map(|i| {
            let mut rng = keyed_rng(seed, &[0x5ce, i as u64]);
            let scene = make_scene(&format!("scene_{i:04}"), spec, &mut rng)?;
            make_sequence(scene, intrinsics, trajectory, &mut rng)
        })
        .collect()
}

/// Paired sparse (nominal-unit) and monocular (metric) depths for one scene.
/// Monocular depths carry multiplicative log-normal noise of std `mono_noise`.
pub fn synthesize_depth_pairs(
    seq: &SceneSequence,
    points_per_view: usize,
    mono_noise: f64,
    rng: &mut impl Rng,
) -> Vec<(usize, DepthPairSample)> {
    let mut out = Vec::new();
    for k in 0..seq.frames.len() {
        let cam = seq.true_frame(k);
        let (w, h) = (cam.intrinsics.width, cam.intrinsics.height);
        let mut drawn = 0;
        let mut attempts = 0;
        while drawn < points_per_view && attempts < 64 * points_per_view {
            attempts += 1;
            let p = Vector2::new(rng.random_range(0..w) as f64, rng.random_range(0..h) as f64);
            let Some(hit) = seq.scene.trace(&cam, &p) else {
                continue;
            };
            let noise: f64 = StandardNormal.sample(rng);
            out.push((
                k,
                DepthPairSample {
                    sparse_depth: hit.depth / seq.scene.planted_scale,
                    mono_depth: hit.depth * (mono_noise * noise).exp(),
                },
            ));
            drawn += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_metrics::{fb_consistency_mask, MaskConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_intrinsics() -> Intrinsics {
        Intrinsics::centered(64, 60f64.to_radians())
    }

    fn scene(seed: u64) -> SyntheticScene {
        make_scene("s", &SceneSpec::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn fronto_wall(depth: f64) -> SyntheticScene {
        SyntheticScene {
            id: "wall".into(),
            patches: vec![Patch {
                center: Vector3::new(0.0, 0.0, depth),
                axis_u: Vector3::x(),
                axis_v: Vector3::y(),
                half_u: 100.0,
                half_v: 100.0,
                texture: NoiseTexture {
                    seed: 1,
                    cells: [40.0, 40.0],
                    octaves: 2,
                    persistence: 0.5,
                },
            }],
            planted_scale: 1.0,
            background: 0.0,
        }
    }

    #[test]
    fn texture_gradient_matches_finite_differences() {
        let t = NoiseTexture {
            seed: 9,
            cells: [4.0, 3.0],
            octaves: 3,
            persistence: 0.5,
        };
        let h = 1e-6;
        for &(u, v) in &[(0.1, 0.2), (-0.7, 0.33), (0.91, -0.5)] {
            let (_, g) = t.eval(u, v);
            let du = (t.eval(u + h, v).0 - t.eval(u - h, v).0) / (2.0 * h);
            let dv = (t.eval(u, v + h).0 - t.eval(u, v - h).0) / (2.0 * h);
            assert!((g.x - du).abs() < 1e-6 * (1.0 + du.abs()));
            assert!((g.y - dv).abs() < 1e-6 * (1.0 + dv.abs()));
            assert!((0.0..=1.0).contains(&t.eval(u, v).0));
        }
    }

    #[test]
    fn make_scene_is_deterministic_and_valid() {
        let a = scene(4);
        let b = scene(4);
        assert_eq!(a, b);
        assert!((3..=8).contains(&a.patches.len()));
        for p in &a.patches {
            assert!(p.center.z >= 1.0 && p.center.z <= 6.0);
        }
        let spec = SceneSpec {
            scale_range: (1.0, 1.0),
            ..SceneSpec::default()
        };
        let s = make_scene("x", &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.planted_scale, 1.0);
        let bad = SceneSpec {
            min_patches: 0,
            max_patches: 0,
            ..SceneSpec::default()
        };
        assert!(make_scene("x", &bad, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn planted_log_scales_are_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let logs: Vec<f64> = (0..100)
            .map(|i| {
                make_scene(&i.to_string(), &SceneSpec::default(), &mut rng)
                    .unwrap()
                    .planted_scale
                    .ln()
            })
            .collect();
        let mean = logs.iter().sum::<f64>() / 100.0;
        let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!(mean.abs() < 3.0 * sd / 10.0, "mean {mean} sd {sd}");
    }

    #[test]
    fn fronto_wall_has_constant_depth() {
        let cam = SyntheticScene::conditioning_camera(test_intrinsics());
        let out = render(&fronto_wall(2.0), &cam);
        assert_eq!(out.visibility.count_true(), 64 * 64);
        assert!(out.depth.data().iter().all(|&d| (d - 2.0).abs() < 1e-12));
    }

    #[test]
    fn nearer_patch_wins() {
        // Painter's order: draw far then near, the near one must remain.
        let mut s = fronto_wall(4.0);
        let mut near = s.patches[0].clone();
        near.center = Vector3::new(0.0, 0.0, 2.0);
        near.half_u = 0.3;
        near.half_v = 0.3;
        near.texture.seed = 2;
        s.patches.push(near);
        let cam = SyntheticScene::conditioning_camera(test_intrinsics());
        let out = render(&s, &cam);
        let mut painter = Grid::filled(64, 64, f64::INFINITY);
        for p in [&s.patches[0], &s.patches[1]] {
            for y in 0..64 {
                for x in 0..64 {
                    let dir = cam.ray_direction(&Vector2::new(x as f64, y as f64));
                    let l = (p.center.z) / dir.z;
                    let r = dir * l - p.center;
                    if (r.x / p.half_u).abs() <= 1.0 && (r.y / p.half_v).abs() <= 1.0 && l < *painter.get(x, y) {
                        *painter.get_mut(x, y) = l;
                    }
                }
            }
        }
        for (a, b) in out.depth.data().iter().zip(painter.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((out.depth.get(32, 32) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn forward_motion_flow_oracle() {
        // Centered coordinates: cx = cy = 0, pixel (30, 0) on a wall at depth 2,
        // camera moves 0.5 forward: magnification 2 / 1.5.
        let k = Intrinsics::new(50.0, 50.0, 0.0, 0.0, 64, 64).unwrap();
        let a = Camera::new(k, Pose::identity());
        let b = Camera::new(k, Pose::from_translation(Vector3::new(0.0, 0.0, -0.5)));
        let (flow, mask) = gt_flow(&fronto_wall(2.0), &a, &b);
        let f = flow.get(30, 0);
        assert!((f.x - 10.0).abs() < 1e-9 && f.y.abs() < 1e-9);
        assert!(*mask.get(30, 0));
    }

    #[test]
    fn identity_flow_is_zero() {
        let s = scene(1);
        let cam = SyntheticScene::conditioning_camera(test_intrinsics());
        let (flow, mask) = gt_flow(&s, &cam, &cam);
        let vis = render(&s, &cam).visibility;
        assert_eq!(mask, vis);
        for (v, &m) in flow.data().iter().zip(mask.data()) {
            if m {
                assert!(v.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn round_trip_flows_are_cycle_consistent() {
        let s = scene(2);
        let k = test_intrinsics();
        let a = SyntheticScene::conditioning_camera(k);
        let b = Camera::new(k, Pose::from_translation(Vector3::new(-0.08, 0.02, 0.05)));
        let (fwd, mask) = gt_flow(&s, &a, &b);
        let mut checked = 0;
        for (x, y, &m) in mask.iter_indexed() {
            if !m {
                continue;
            }
            let f = *fwd.get(x, y);
            let q = Vector2::new(x as f64, y as f64) + f;
            // Exact cycle: trace the backward flow at the subpixel target.
            let hit = s.trace(&b, &q).unwrap();
            let back = a.project(&b.unproject(&q, hit.depth)).unwrap() - q;
            assert!((f + back).norm() < 1e-6);
            checked += 1;
        }
        assert!(checked > 1000);
    }

    #[test]
    fn cycle_mask_agrees_with_oracle_visibility() {
        let k = Intrinsics::centered(128, 60f64.to_radians());
        let a = SyntheticScene::conditioning_camera(k);
        for seed in 0..4 {
            let s = scene(100 + seed);
            let b = Camera::new(k, Pose::from_translation(Vector3::new(-0.05, 0.0, 0.01)));
            let (fwd, gt_mask) = gt_flow(&s, &a, &b);
            let (bwd, _) = gt_flow(&s, &b, &a);
            let m = fb_consistency_mask(&fwd, &bwd, &MaskConfig::default()).unwrap();
            let agree = m.data().iter().zip(gt_mask.data()).filter(|(x, y)| x == y).count();
            let frac = agree as f64 / m.len() as f64;
            assert!(frac >= 0.99, "seed {seed}: agreement {frac}");
        }
    }

    #[test]
    fn gauge_invariance() {
        let s = scene(3);
        let k = test_intrinsics();
        let a = SyntheticScene::conditioning_camera(k);
        let b = Camera::new(k, Pose::from_translation(Vector3::new(-0.1, 0.05, 0.1)));
        let base = render(&s, &b);
        let (flow, _) = gt_flow(&s, &a, &b);
        for c in [0.5, 2.0, std::f64::consts::E] {
            let sc = s.scaled(c);
            let bc = crate::geometry::scale_translation(&b, c).unwrap();
            let r = render(&sc, &bc);
            let max_diff = r
                .image
                .data()
                .iter()
                .zip(base.image.data())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(max_diff < 1e-9, "c={c}: {max_diff}");
            let (fc, _) = gt_flow(&sc, &a, &bc);
            for (u, v) in fc.data().iter().zip(flow.data()) {
                if u.x.is_finite() {
                    assert!((u - v).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn correspondences_are_exact() {
        let s = scene(5);
        let k = test_intrinsics();
        let a = SyntheticScene::conditioning_camera(k);
        let b = Camera::new(k, Pose::from_translation(Vector3::new(0.1, -0.1, 0.05)));
        let f = crate::geometry::fundamental_between(&a, &b);
        let ms = correspondences(&s, &a, &b, 200, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(ms.len(), 200);
        for m in &ms {
            assert!(crate::geometry::symmetric_epipolar_distance(&f, m) < 1e-6);
        }
        let one = correspondences(&s, &a, &b, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(
            one,
            correspondences(&s, &a, &b, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
        );
        let same = correspondences(&s, &a, &a, 20, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(same.iter().all(|m| (m.p1 - m.p2).norm() < 1e-9));
    }

    #[test]
    fn no_covisibility_is_an_error() {
        let s = fronto_wall(2.0);
        let k = test_intrinsics();
        let a = SyntheticScene::conditioning_camera(k);
        // Looking away from the wall.
        let away = Camera::new(
            k,
            Pose::new(
                *Rotation3::from_axis_angle(&Vector3::y_axis(), PI).matrix(),
                Vector3::zeros(),
            )
            .unwrap(),
        );
        assert_eq!(
            correspondences(&s, &a, &away, 5, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(SynthError::NoCoVisibility)
        );
    }

    #[test]
    fn generator_sim_cases() {
        let s = scene(6);
        let k = test_intrinsics();
        let cond = SyntheticScene::conditioning_camera(k);
        let target = Camera::new(k, Pose::from_translation(Vector3::new(-0.1, 0.0, 0.0)));
        let exact = GeneratorSim::new(0.0, 1).unwrap();
        let sample = simulate_gnvs_sample(&s, &cond, &target, &exact, 3);
        assert_eq!(sample.drawn_scale, 1.0);
        assert_eq!(sample.render, render(&s, &target));
        let (fwd, _) = gt_flow(&s, &cond, &target);
        assert_eq!(format!("{:?}", sample.fwd), format!("{:?}", fwd));

        let noisy = GeneratorSim::new(0.3, 1).unwrap();
        assert_eq!(noisy.draw_scale("a", 5), noisy.draw_scale("a", 5));
        let logs: Vec<f64> = (0..1000).map(|i| noisy.draw_scale("a", i).ln()).collect();
        let mean = logs.iter().sum::<f64>() / 1000.0;
        let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
        assert!((sd - 0.3).abs() < 0.05 * 0.3, "sd {sd}");
        assert!(GeneratorSim::new(-0.1, 0).is_err());
    }

    #[test]
    fn layer_gradient_matches_finite_differences() {
        let s = scene(8);
        let cam = Camera::new(test_intrinsics(), Pose::from_translation(Vector3::new(0.1, 0.0, 0.0)));
        let h = 1e-5;
        for patch in 0..s.patches.len() {
            let q = Vector2::new(20.3, 41.7);
            let Some((_, g)) = s.layer_intensity(&cam, patch, &q) else {
                continue;
            };
            let f = |q: Vector2<f64>| s.layer_intensity(&cam, patch, &q).unwrap().0;
            let dx = (f(q + Vector2::new(h, 0.0)) - f(q - Vector2::new(h, 0.0))) / (2.0 * h);
            let dy = (f(q + Vector2::new(0.0, h)) - f(q - Vector2::new(0.0, h))) / (2.0 * h);
            assert!((g.x - dx).abs() < 1e-6 * (1.0 + dx.abs()), "{} vs {}", g.x, dx);
            assert!((g.y - dy).abs() < 1e-6 * (1.0 + dy.abs()));
        }
    }

    #[test]
    fn sequence_frame_selection() {
        let seqs = make_sequences(
            2,
            3,
            &SceneSpec::default(),
            &TrajectorySpec::default(),
            test_intrinsics(),
        )
        .unwrap();
        let seq = &seqs[0];
        assert_eq!(seq.frames.len(), 15);
        assert!((seq.nominal_distance(4) - 0.1).abs() < 1e-12);
        assert_eq!(seq.closest_frame(0.1), 4);
        // 0.0375 is equidistant from frames 1 and 2.
        assert_eq!(seq.closest_frame(0.0375), 1);
        let t = seq.true_frame(4);
        assert!(((t.center() - seq.frames[0].center()).norm() - 0.1 * seq.scene.planted_scale).abs() < 1e-12);
    }
}
