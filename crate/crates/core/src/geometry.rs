//! Landmark frames, eye geometry and eye-anchored alignment.
//!
//! Alignment works on the 68 landmark coordinates directly; no pixels are
//! warped. Every valid frame is mapped by a similarity transform that puts
//! the left eye centre on (70, 70) and the right eye centre on (130, 70) of
//! a 200×200 canonical face space, so the inter-eye midpoint lands on
//! [`CANONICAL_MIDPOINT`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of points produced by a 68-point landmark predictor.
pub const LANDMARK_COUNT: usize = 68;

/// Landmarks 36..=41 outline the left eye (image left).
pub const LEFT_EYE: std::ops::RangeInclusive<usize> = 36..=41;
/// Landmarks 42..=47 outline the right eye (image right).
pub const RIGHT_EYE: std::ops::RangeInclusive<usize> = 42..=47;

/// Canonical destination of the left eye centre.
pub const CANONICAL_LEFT_EYE: Point = Point::new(70.0, 70.0);
/// Canonical destination of the right eye centre.
pub const CANONICAL_RIGHT_EYE: Point = Point::new(130.0, 70.0);
/// Canonical position of the inter-eye midpoint.
pub const CANONICAL_MIDPOINT: Point = Point::new(100.0, 70.0);
/// Distance between the canonical eye centres.
pub const CANONICAL_EYE_DISTANCE: f64 = 60.0;

/// Eye centres closer than this are treated as a failed detection.
pub const DEGENERATE_EYE_DISTANCE: f64 = 1e-9;

/// A 2-D point in pixel coordinates. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn mean(points: &[Point]) -> Point {
        let n = points.len() as f64;
        let (sx, sy) = points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("expected {LANDMARK_COUNT} landmarks, found {0}")]
    WrongLandmarkCount(usize),
    #[error("landmark {0} has a non-finite coordinate")]
    NonFiniteLandmark(usize),
    #[error("frame dimensions must be positive, got {width}x{height}")]
    BadDimensions { width: u32, height: u32 },
}

/// One capture event: 68 landmarks plus the detector's face count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrame")]
pub struct LandmarkFrame {
    pub subject_id: String,
    pub frame_id: u64,
    pub face_count: u32,
    pub width: u32,
    pub height: u32,
    landmarks: Vec<Point>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    subject_id: String,
    frame_id: u64,
    face_count: u32,
    width: u32,
    height: u32,
    landmarks: Vec<Point>,
}

impl TryFrom<RawFrame> for LandmarkFrame {
    type Error = FrameError;

    fn try_from(raw: RawFrame) -> Result<Self, Self::Error> {
        LandmarkFrame::new(
            raw.subject_id,
            raw.frame_id,
            raw.face_count,
            (raw.width, raw.height),
            raw.landmarks,
        )
    }
}

impl LandmarkFrame {
    pub fn new(
        subject_id: impl Into<String>,
        frame_id: u64,
        face_count: u32,
        (width, height): (u32, u32),
        landmarks: Vec<Point>,
    ) -> Result<Self, FrameError> {
        if landmarks.len() != LANDMARK_COUNT {
            return Err(FrameError::WrongLandmarkCount(landmarks.len()));
        }
        if let Some(i) = landmarks.iter().position(|p| !p.is_finite()) {
            return Err(FrameError::NonFiniteLandmark(i));
        }
        if width == 0 || height == 0 {
            return Err(FrameError::BadDimensions { width, height });
        }
        Ok(Self {
            subject_id: subject_id.into(),
            frame_id,
            face_count,
            width,
            height,
            landmarks,
        })
    }

    pub fn landmarks(&self) -> &[Point] {
        &self.landmarks
    }

    /// Returns a copy with every landmark passed through `f`.
    ///
    /// Non-finite results are rejected the same way as in [`LandmarkFrame::new`].
    pub fn map_landmarks(&self, f: impl FnMut(Point) -> Point) -> Result<Self, FrameError> {
        LandmarkFrame::new(
            self.subject_id.clone(),
            self.frame_id,
            self.face_count,
            (self.width, self.height),
            self.landmarks.iter().copied().map(f).collect(),
        )
    }
}

/// Centres of both eyes: the mean of landmarks 36–41 and of 42–47.
pub fn eye_centers(frame: &LandmarkFrame) -> (Point, Point) {
    let lm = frame.landmarks();
    (Point::mean(&lm[LEFT_EYE]), Point::mean(&lm[RIGHT_EYE]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeGeometry {
    pub left_center: Point,
    pub right_center: Point,
    pub dx: f64,
    pub dy: f64,
    pub d: f64,
    pub theta: f64,
}

impl EyeGeometry {
    pub fn midpoint(&self) -> Point {
        Point::new(
            (self.left_center.x + self.right_center.x) / 2.0,
            (self.left_center.y + self.right_center.y) / 2.0,
        )
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("eye centres coincide; detection is degenerate")]
pub struct DegenerateEyes;

pub fn eye_geometry(left: Point, right: Point) -> Result<EyeGeometry, DegenerateEyes> {
    let dx = right.x - left.x;
    let dy = right.y - left.y;
    let d = dx.hypot(dy);
    // Written negated so NaN distances are rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(d >= DEGENERATE_EYE_DISTANCE) {
        return Err(DegenerateEyes);
    }
    Ok(EyeGeometry {
        left_center: left,
        right_center: right,
        dx,
        dy,
        d,
        theta: dy.atan2(dx),
    })
}

/// Scale-rotate about the raw midpoint, then shift the midpoint to canonical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentTransform {
    pub alpha: f64,
    pub theta: f64,
    /// Row-major 2×3 matrix `[[αcosθ, αsinθ, tx], [−αsinθ, αcosθ, ty]]`.
    pub m: [[f64; 3]; 2],
    pub canonical_shift: (f64, f64),
    pub canonical_midpoint: Point,
}

impl AlignmentTransform {
    pub fn from_geometry(geom: &EyeGeometry) -> Self {
        let alpha = CANONICAL_EYE_DISTANCE / geom.d;
        let (sin, cos) = geom.theta.sin_cos();
        let (a_cos, a_sin) = (alpha * cos, alpha * sin);
        let c = geom.midpoint();
        let tx = (1.0 - a_cos) * c.x - a_sin * c.y;
        let ty = a_sin * c.x + (1.0 - a_cos) * c.y;
        Self {
            alpha,
            theta: geom.theta,
            m: [[a_cos, a_sin, tx], [-a_sin, a_cos, ty]],
            canonical_shift: (CANONICAL_MIDPOINT.x - c.x, CANONICAL_MIDPOINT.y - c.y),
            canonical_midpoint: CANONICAL_MIDPOINT,
        }
    }

    pub fn apply_point(&self, p: Point) -> Point {
        let [r0, r1] = self.m;
        Point::new(
            r0[0] * p.x + r0[1] * p.y + r0[2] + self.canonical_shift.0,
            r1[0] * p.x + r1[1] * p.y + r1[2] + self.canonical_shift.1,
        )
    }

    pub fn apply(&self, frame: &LandmarkFrame) -> AlignedFrame {
        AlignedFrame {
            frame_id: frame.frame_id,
            landmarks: frame.landmarks().iter().map(|&p| self.apply_point(p)).collect(),
            midpoint: self.canonical_midpoint,
        }
    }
}

/// Convenience for [`AlignmentTransform::from_geometry`].
pub fn alignment_transform(geom: &EyeGeometry) -> AlignmentTransform {
    AlignmentTransform::from_geometry(geom)
}

/// Convenience for [`AlignmentTransform::apply`].
pub fn apply_transform(t: &AlignmentTransform, frame: &LandmarkFrame) -> AlignedFrame {
    t.apply(frame)
}

/// Landmarks in canonical 200×200 face space.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFrame {
    pub frame_id: u64,
    pub landmarks: Vec<Point>,
    pub midpoint: Point,
}

impl AlignedFrame {
    /// Horizontal span of one eye: farthest minus closest landmark from the
    /// midpoint, on integer-rounded horizontal distances.
    fn eye_span(&self, eye: std::ops::RangeInclusive<usize>) -> i64 {
        let dists = self.landmarks[eye]
            .iter()
            .map(|p| (p.x - self.midpoint.x).abs().round() as i64);
        let (lo, hi) = dists.fold((i64::MAX, i64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    pub fn eye_spans(&self) -> (i64, i64) {
        (self.eye_span(LEFT_EYE), self.eye_span(RIGHT_EYE))
    }
}

pub fn frontality_check(aligned: &AlignedFrame, tolerance_px: u32) -> bool {
    let (left, right) = aligned.eye_spans();
    (left - right).unsigned_abs() <= u64::from(tolerance_px)
}

/// Why a frame was dropped by the acquisition gates.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rejection {
    #[error("detector did not report exactly one face")]
    NotExactlyOneFace,
    #[error("eye centres are degenerate")]
    DegenerateEyes,
    #[error("eye spans differ; subject is not frontal")]
    NotFrontal,
}

impl From<DegenerateEyes> for Rejection {
    fn from(_: DegenerateEyes) -> Self {
        Rejection::DegenerateEyes
    }
}

/// Runs the face-count, eye-geometry and frontality gates and returns the
/// aligned landmarks of an accepted frame.
pub fn validate_frame(frame: &LandmarkFrame, tolerance_px: u32) -> Result<AlignedFrame, Rejection> {
    if frame.face_count != 1 {
        return Err(Rejection::NotExactlyOneFace);
    }
    let (left, right) = eye_centers(frame);
    let geom = eye_geometry(left, right)?;
    let aligned = AlignmentTransform::from_geometry(&geom).apply(frame);
    if !frontality_check(&aligned, tolerance_px) {
        return Err(Rejection::NotFrontal);
    }
    Ok(aligned)
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}
