//! Synthetic subjects and noisy landmark streams.
//!
//! A subject is the embedded mean face plus seeded per-landmark offsets.
//! Frames apply a random similarity pose (which alignment must undo),
//! Gaussian landmark jitter in image pixels, and the gate-triggering
//! corruptions configured in [`NoiseConfig`]. Everything is a pure function
//! of the seeds, so a dataset can be regenerated byte for byte.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LandmarkFrame, Point, LANDMARK_COUNT, LEFT_EYE};
use crate::wire::write_frame;

/// Mean face in a 200×200 box; eye centres at (70, 70) and (130, 70), axis
/// at x = 100, eye clusters mirror images of each other.
pub const MEAN_FACE: [(f64, f64); LANDMARK_COUNT] = [
    // jaw 0..=16
    (38.0, 78.0), (40.0, 96.0), (43.0, 114.0), (48.0, 131.0), (55.0, 147.0), (65.0, 160.0),
    (76.0, 170.0), (88.0, 177.0), (100.0, 179.0), (112.0, 177.0), (124.0, 170.0),
    (135.0, 160.0), (145.0, 147.0), (152.0, 131.0), (157.0, 114.0), (160.0, 96.0),
    (162.0, 78.0),
    // brows 17..=26
    (50.0, 55.0), (58.0, 50.0), (67.0, 49.0), (76.0, 51.0), (84.0, 55.0),
    (116.0, 55.0), (124.0, 51.0), (133.0, 49.0), (142.0, 50.0), (150.0, 55.0),
    // nose 27..=35
    (100.0, 66.0), (100.0, 78.0), (100.0, 90.0), (100.0, 101.0),
    (90.0, 108.0), (95.0, 110.0), (100.0, 112.0), (105.0, 110.0), (110.0, 108.0),
    // left eye 36..=41
    (58.0, 70.0), (64.0, 66.0), (76.0, 66.0), (82.0, 70.0), (76.0, 74.0), (64.0, 74.0),
    // right eye 42..=47
    (118.0, 70.0), (124.0, 66.0), (136.0, 66.0), (142.0, 70.0), (136.0, 74.0), (124.0, 74.0),
    // outer lip 48..=59
    (80.0, 132.0), (87.0, 127.0), (94.0, 124.0), (100.0, 127.0), (106.0, 124.0),
    (113.0, 127.0), (120.0, 132.0), (113.0, 139.0), (106.0, 142.0), (100.0, 143.0),
    (94.0, 142.0), (87.0, 139.0),
    // inner lip 60..=67
    (84.0, 132.0), (94.0, 129.0), (100.0, 130.0), (106.0, 129.0), (116.0, 132.0),
    (106.0, 135.0), (100.0, 136.0), (94.0, 135.0),
];

/// Right-eye partner of each left-eye landmark 36..=41 under x ↦ 200 − x.
const EYE_MIRROR: [usize; 6] = [45, 44, 43, 42, 47, 46];

const TEMPLATE_CENTER: Point = Point::new(100.0, 100.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseConfigError {
    #[error("{0} must be a probability in [0, 1]")]
    BadProbability(&'static str),
    #[error("jitter sigma must be finite and non-negative")]
    BadSigma,
    #[error("pose scale range must satisfy 0 < min <= max")]
    BadScaleRange,
    #[error("pose rotation bound must be finite and non-negative")]
    BadRotation,
}

/// Per-frame corruption model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Standard deviation of per-coordinate Gaussian jitter, in image pixels.
    pub jitter_sigma_px: f64,
    pub pose_rotation_max_rad: f64,
    /// Image pixels per template pixel, drawn uniformly per frame.
    pub pose_scale_range: (f64, f64),
    /// Randomize the face position inside the image.
    pub pose_translate: bool,
    pub invalid_frame_rate: f64,
    pub nonfrontal_rate: f64,
    /// Probability of a predictor misfire that collapses both eye clusters.
    pub degenerate_rate: f64,
    pub image_size: (u32, u32),
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseConfig {
    /// Identity pose, no jitter, no corrupted frames.
    pub fn noiseless() -> Self {
        Self {
            jitter_sigma_px: 0.0,
            pose_rotation_max_rad: 0.0,
            pose_scale_range: (1.0, 1.0),
            pose_translate: false,
            invalid_frame_rate: 0.0,
            nonfrontal_rate: 0.0,
            degenerate_rate: 0.0,
            image_size: (640, 480),
        }
    }

    /// A webcam-like pose distribution: faces 96–144 px between the eyes,
    /// tilted up to ±0.25 rad, anywhere in a 640×480 frame.
    pub fn webcam(jitter_sigma_px: f64) -> Self {
        Self {
            jitter_sigma_px,
            pose_rotation_max_rad: 0.25,
            pose_scale_range: (1.6, 2.4),
            pose_translate: true,
            ..Self::noiseless()
        }
    }

    pub fn validate(&self) -> Result<(), NoiseConfigError> {
        for (name, p) in [
            ("invalid_frame_rate", self.invalid_frame_rate),
            ("nonfrontal_rate", self.nonfrontal_rate),
            ("degenerate_rate", self.degenerate_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(NoiseConfigError::BadProbability(name));
            }
        }
        if !(self.jitter_sigma_px >= 0.0 && self.jitter_sigma_px.is_finite()) {
            return Err(NoiseConfigError::BadSigma);
        }
        let (lo, hi) = self.pose_scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(NoiseConfigError::BadScaleRange);
        }
        if !(self.pose_rotation_max_rad >= 0.0 && self.pose_rotation_max_rad.is_finite()) {
            return Err(NoiseConfigError::BadRotation);
        }
        Ok(())
    }
}

/// Ground-truth landmark geometry of one synthetic subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectTemplate {
    pub subject_id: String,
    pub base_landmarks: Vec<Point>,
    pub rng_seed: u64,
}

/// Mean face plus uniform offsets in `[-spread_px, spread_px]`; eye offsets
/// are mirrored so a noiseless rendering is frontal.
pub fn new_subject(subject_id: impl Into<String>, rng_seed: u64, spread_px: f64) -> SubjectTemplate {
    assert!(spread_px >= 0.0 && spread_px.is_finite(), "spread must be non-negative");
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let offset = |rng: &mut ChaCha20Rng| {
        if spread_px == 0.0 {
            0.0
        } else {
            rng.random_range(-spread_px..=spread_px)
        }
    };
    let mut lm: Vec<Point> = MEAN_FACE.iter().map(|&(x, y)| Point::new(x, y)).collect();
    for (i, p) in lm.iter_mut().enumerate() {
        if (42..=47).contains(&i) {
            continue;
        }
        p.x += offset(&mut rng);
        p.y += offset(&mut rng);
    }
    for (k, &j) in EYE_MIRROR.iter().enumerate() {
        let src = lm[36 + k];
        lm[j] = Point::new(200.0 - src.x, src.y);
    }
    SubjectTemplate {
        subject_id: subject_id.into(),
        base_landmarks: lm,
        rng_seed,
    }
}

/// Renders one frame of `subject`. Draws from `rng` in a fixed order.
pub fn render_frame<R: Rng>(
    subject: &SubjectTemplate,
    noise: &NoiseConfig,
    frame_id: u64,
    rng: &mut R,
) -> LandmarkFrame {
    let mut lm = subject.base_landmarks.clone();

    if rng.random_bool(noise.nonfrontal_rate) {
        // stretch one eye's outer corner sideways
        let push = rng.random_range(3.0..6.0);
        if rng.random_bool(0.5) {
            lm[36].x -= push;
        } else {
            lm[45].x += push;
        }
    }
    if rng.random_bool(noise.degenerate_rate) {
        let c = Point::new(100.0, 70.0);
        for p in &mut lm[*LEFT_EYE.start()..=47] {
            *p = c;
        }
    }

    let (lo, hi) = noise.pose_scale_range;
    let scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let phi = if noise.pose_rotation_max_rad > 0.0 {
        rng.random_range(-noise.pose_rotation_max_rad..=noise.pose_rotation_max_rad)
    } else {
        0.0
    };
    let (w, h) = (f64::from(noise.image_size.0), f64::from(noise.image_size.1));
    let center = if noise.pose_translate {
        let margin = 100.0 * scale * std::f64::consts::SQRT_2;
        let mut span = |extent: f64| {
            let free = (extent / 2.0 - margin).max(0.0);
            extent / 2.0 + rng.random_range(-free..=free)
        };
        Point::new(span(w), span(h))
    } else {
        TEMPLATE_CENTER
    };
    let (sin, cos) = phi.sin_cos();
    let jitter = Normal::new(0.0, noise.jitter_sigma_px).expect("sigma validated");
    for p in &mut lm {
        let (x, y) = (p.x - TEMPLATE_CENTER.x, p.y - TEMPLATE_CENTER.y);
        p.x = scale * (cos * x - sin * y) + center.x;
        p.y = scale * (sin * x + cos * y) + center.y;
        if noise.jitter_sigma_px > 0.0 {
            p.x += jitter.sample(rng);
            p.y += jitter.sample(rng);
        }
    }

    let face_count = if rng.random_bool(noise.invalid_frame_rate) {
        if rng.random_bool(0.5) {
            0
        } else {
            2
        }
    } else {
        1
    };

    LandmarkFrame::new(
        subject.subject_id.clone(),
        frame_id,
        face_count,
        noise.image_size,
        lm,
    )
    .expect("rendered landmarks are finite")
}

/// Endless stream of frames of one subject.
pub struct FrameStream {
    subject: SubjectTemplate,
    noise: NoiseConfig,
    rng: ChaCha20Rng,
    next_id: u64,
}

impl FrameStream {
    pub fn new(subject: SubjectTemplate, noise: NoiseConfig, rng: ChaCha20Rng) -> Self {
        Self {
            subject,
            noise,
            rng,
            next_id: 0,
        }
    }

    pub fn subject(&self) -> &SubjectTemplate {
        &self.subject
    }
}

impl Iterator for FrameStream {
    type Item = LandmarkFrame;

    fn next(&mut self) -> Option<LandmarkFrame> {
        let frame = render_frame(&self.subject, &self.noise, self.next_id, &mut self.rng);
        self.next_id += 1;
        Some(frame)
    }
}

/// Inter-subject landmark variation used when none is specified.
pub const DEFAULT_SPREAD_PX: f64 = 6.0;

/// A seeded population of subjects with reproducible frame streams.
///
/// Subject `i` gets template seed and frame stream from independent ChaCha
/// streams keyed by `i`, so any subset can be regenerated in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub master_seed: u64,
    pub spread_px: f64,
}

impl Population {
    pub fn new(master_seed: u64, spread_px: f64) -> Self {
        Self {
            master_seed,
            spread_px,
        }
    }

    pub fn subject_id(index: u64) -> String {
        format!("subject-{index:05}")
    }

    pub fn subject(&self, index: u64) -> SubjectTemplate {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index);
        new_subject(Self::subject_id(index), rng.random(), self.spread_px)
    }

    /// Frame stream for subject `index`; `frame_seed` selects the session.
    pub fn frames(&self, index: u64, noise: &NoiseConfig, frame_seed: u64) -> FrameStream {
        let mut rng = ChaCha20Rng::seed_from_u64(frame_seed ^ 0x5eed_f4a3_e000_0000);
        rng.set_stream(index);
        FrameStream::new(self.subject(index), noise.clone(), rng)
    }
}

/// Writes `n_subjects × frames_per_subject` frames as JSONL, grouped by subject.
pub fn generate_dataset<W: Write>(
    population: &Population,
    n_subjects: u64,
    frames_per_subject: usize,
    noise: &NoiseConfig,
    frame_seed: u64,
    out: &mut W,
) -> std::io::Result<()> {
    for i in 0..n_subjects {
        for frame in population.frames(i, noise, frame_seed).take(frames_per_subject) {
            write_frame(out, &frame)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::binding::{distance_vector, frame_digest, quantize};
    use crate::config::PipelineConfig;
    use crate::geometry::{eye_centers, validate_frame, Rejection};
    use crate::wire::read_frames;

    fn cfg() -> PipelineConfig {
        PipelineConfig::default()
    }

    #[test]
    fn mean_face_is_symmetric_and_canonical() {
        let subject = new_subject("m", 1, 0.0);
        let expected: Vec<Point> = MEAN_FACE.iter().map(|&(x, y)| Point::new(x, y)).collect();
        assert_eq!(subject.base_landmarks, expected);
        let frame = render_frame(&subject, &NoiseConfig::noiseless(), 0, &mut ChaCha20Rng::seed_from_u64(0));
        let (l, r) = eye_centers(&frame);
        assert_eq!((l, r), (Point::new(70.0, 70.0), Point::new(130.0, 70.0)));
        for (k, &j) in EYE_MIRROR.iter().enumerate() {
            let (a, b) = (MEAN_FACE[36 + k], MEAN_FACE[j]);
            assert_eq!((200.0 - a.0, a.1), b);
        }
        assert!(validate_frame(&frame, 0).is_ok());
    }

    #[test]
    fn mean_face_avoids_bin_edges() {
        let frame = render_frame(&new_subject("m", 0, 0.0), &NoiseConfig::noiseless(), 0, &mut ChaCha20Rng::seed_from_u64(0));
        let aligned = validate_frame(&frame, 0).unwrap();
        for d in distance_vector(&aligned, &cfg().prominent_indices) {
            let r = d % 8.0;
            assert!(r.min(8.0 - r) > 0.2, "distance {d} sits on a bin edge");
        }
    }

    #[test]
    fn subjects_are_reproducible() {
        assert_eq!(new_subject("a", 7, 6.0), new_subject("a", 7, 6.0));
        assert_ne!(new_subject("a", 7, 6.0), new_subject("a", 8, 6.0));
        let pop = Population::new(3, 6.0);
        assert_eq!(pop.subject(4), Population::new(3, 6.0).subject(4));
    }

    #[test]
    fn noiseless_subjects_pass_gates() {
        let pop = Population::new(10, 6.0);
        for i in 0..200 {
            let frame = pop.frames(i, &NoiseConfig::noiseless(), 0).next().unwrap();
            assert!(validate_frame(&frame, 0).is_ok(), "subject {i}");
        }
    }

    #[test]
    fn distinct_seeds_quantize_differently() {
        let pipeline = cfg();
        let q_vector = |seed: u64| {
            let s = new_subject("x", seed, 6.0);
            let f = render_frame(&s, &NoiseConfig::noiseless(), 0, &mut ChaCha20Rng::seed_from_u64(0));
            let aligned = validate_frame(&f, 0).unwrap();
            quantize(&distance_vector(&aligned, &pipeline.prominent_indices), pipeline.q)
        };
        let differing = (0..100u64)
            .filter(|&k| q_vector(2 * k) != q_vector(2 * k + 1))
            .count();
        assert_eq!(differing, 100);
    }

    #[test]
    fn pose_does_not_change_digest() {
        let pop = Population::new(21, 6.0);
        let subject = pop.subject(0);
        let reference = frame_digest(
            &render_frame(&subject, &NoiseConfig::noiseless(), 0, &mut ChaCha20Rng::seed_from_u64(0)),
            "salt",
            &cfg(),
        )
        .unwrap();
        let noise = NoiseConfig {
            pose_rotation_max_rad: std::f64::consts::FRAC_PI_8,
            ..NoiseConfig::webcam(0.0)
        };
        for frame in pop.frames(0, &noise, 5).take(200) {
            assert_eq!(frame_digest(&frame, "salt", &cfg()).unwrap(), reference);
        }
    }

    #[test]
    fn all_invalid_frames_are_rejected() {
        let noise = NoiseConfig {
            invalid_frame_rate: 1.0,
            ..NoiseConfig::webcam(1.0)
        };
        let pop = Population::new(1, 6.0);
        for f in pop.frames(0, &noise, 0).take(100) {
            assert_eq!(validate_frame(&f, 0), Err(Rejection::NotExactlyOneFace));
        }
    }

    #[test]
    fn invalid_rate_is_respected() {
        let noise = NoiseConfig {
            invalid_frame_rate: 0.5,
            ..NoiseConfig::noiseless()
        };
        let invalid = Population::new(2, 6.0)
            .frames(0, &noise, 9)
            .take(1000)
            .filter(|f| f.face_count != 1)
            .count();
        // binomial(1000, 0.5): [450, 550] is beyond 6 sigma
        assert!((450..=550).contains(&invalid), "{invalid}");
    }

    #[test]
    fn gate_coverage() {
        let noise = NoiseConfig {
            invalid_frame_rate: 0.1,
            nonfrontal_rate: 0.1,
            degenerate_rate: 0.05,
            ..NoiseConfig::webcam(0.0)
        };
        let seen: HashSet<_> = Population::new(4, 6.0)
            .frames(0, &noise, 1)
            .take(1000)
            .filter_map(|f| validate_frame(&f, 0).err())
            .collect();
        assert_eq!(seen.len(), 3, "{seen:?}");
    }

    #[test]
    fn nonfrontal_frames_are_caught() {
        let noise = NoiseConfig {
            nonfrontal_rate: 1.0,
            ..NoiseConfig::webcam(0.0)
        };
        for f in Population::new(8, 6.0).frames(0, &noise, 0).take(200) {
            assert_eq!(validate_frame(&f, 0), Err(Rejection::NotFrontal));
        }
    }

    #[test]
    fn heavy_jitter_makes_digests_vary() {
        let noise = NoiseConfig::webcam(32.0);
        let digests: HashSet<_> = Population::new(5, 6.0)
            .frames(0, &noise, 0)
            .take(300)
            .filter_map(|f| frame_digest(&f, "s", &PipelineConfig { frontality_tolerance_px: 1000, ..cfg() }).ok())
            .map(|d| *d.as_bytes())
            .collect();
        assert!(digests.len() > 1);
    }

    #[test]
    fn dataset_is_reproducible_and_parseable() {
        let pop = Population::new(42, 6.0);
        let noise = NoiseConfig::webcam(1.0);
        let mut a = Vec::new();
        generate_dataset(&pop, 2, 3, &noise, 7, &mut a).unwrap();
        let mut b = Vec::new();
        generate_dataset(&pop, 2, 3, &noise, 7, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 6);
        let frames = read_frames(a.as_slice()).unwrap();
        assert_eq!(frames.len(), 6);
        assert_eq!(frames[0].subject_id, frames[2].subject_id);
        assert_ne!(frames[2].subject_id, frames[3].subject_id);
        assert_eq!(frames.iter().map(|f| f.frame_id).collect::<Vec<_>>(), vec![0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn noise_config_validation() {
        assert!(NoiseConfig::webcam(2.0).validate().is_ok());
        let bad = NoiseConfig { invalid_frame_rate: 1.5, ..NoiseConfig::noiseless() };
        assert_eq!(bad.validate(), Err(NoiseConfigError::BadProbability("invalid_frame_rate")));
        let bad = NoiseConfig { jitter_sigma_px: -1.0, ..NoiseConfig::noiseless() };
        assert_eq!(bad.validate(), Err(NoiseConfigError::BadSigma));
        let bad = NoiseConfig { pose_scale_range: (2.0, 1.0), ..NoiseConfig::noiseless() };
        assert_eq!(bad.validate(), Err(NoiseConfigError::BadScaleRange));
    }
}
