//! Entropy bounds, collision estimates and binding metrics over datasets.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use zeroize::Zeroize;

use crate::binding::{
    distance_vector, frame_digest, majority_vote, quantize, salted_hash, VseedDigest,
    PROMINENT_COUNT,
};
use crate::config::PipelineConfig;
use crate::geometry::{validate_frame, LandmarkFrame};
use crate::keymat::KeyError;

/// Security level targeted for a single authenticator, in bits.
pub const AAL2_SECURITY_BITS: f64 = 112.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("histogram for coordinate {0} is empty")]
    EmptyHistogram(usize),
    #[error("expected {PROMINENT_COUNT} histograms, got {0}")]
    WrongHistogramCount(usize),
    #[error("mismatched inputs: {0}")]
    MismatchedInputs(String),
    #[error("subject {subject}: only {valid} of {needed} enrollment frames are valid")]
    EnrollmentShort {
        subject: usize,
        valid: usize,
        needed: usize,
    },
    #[error(transparent)]
    Key(#[from] KeyError),
}

/// Subject counts per quantized value of one coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinHistogram {
    pub coordinate_index: usize,
    pub counts: BTreeMap<u8, u64>,
    pub total: u64,
}

impl BinHistogram {
    pub fn new(coordinate_index: usize) -> Self {
        Self {
            coordinate_index,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn add(&mut self, bin: u8) {
        *self.counts.entry(bin).or_default() += 1;
        self.total += 1;
    }

    pub fn max_count(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.values().filter(|&&c| c > 0).count()
    }
}

/// `-log2(max_k Pr[bin = k])`.
pub fn min_entropy(hist: &BinHistogram) -> Result<f64, AnalysisError> {
    if hist.total == 0 {
        return Err(AnalysisError::EmptyHistogram(hist.coordinate_index));
    }
    Ok(min_entropy_of_max_frequency(hist.max_count() as f64 / hist.total as f64))
}

pub fn min_entropy_of_max_frequency(p_max: f64) -> f64 {
    // Clamp away the -0.0 from p_max = 1.
    (-p_max.log2()).max(0.0)
}

/// Sum of per-coordinate min-entropies, a lower bound assuming independence.
pub fn joint_entropy_bound(hists: &[BinHistogram]) -> Result<f64, AnalysisError> {
    if hists.len() != PROMINENT_COUNT {
        return Err(AnalysisError::WrongHistogramCount(hists.len()));
    }
    hists.iter().map(min_entropy).sum()
}

/// Bits the memorized secret must add to reach the AAL2 target.
pub fn secret_supplement_bits(joint_bits: f64) -> f64 {
    (AAL2_SECURITY_BITS - joint_bits).max(0.0)
}

/// Probability that an unrelated attempt reproduces a Vseed.
pub fn collision_probability(p_bio_per_coord: f64, n_coords: u32, p_secret: f64) -> f64 {
    p_bio_per_coord.powi(n_coords as i32) * p_secret
}

/// Per-coordinate histograms over one quantized vector per subject.
pub fn histograms<'a>(vectors: impl IntoIterator<Item = &'a [u8]>) -> Vec<BinHistogram> {
    let mut hists: Vec<BinHistogram> = (0..PROMINENT_COUNT).map(BinHistogram::new).collect();
    for v in vectors {
        for (h, &bin) in hists.iter_mut().zip(v) {
            h.add(bin);
        }
    }
    hists
}

/// Histograms from a dataset, using each subject's first valid frame as its
/// representative.
pub fn bin_frequencies(
    frames: impl IntoIterator<Item = LandmarkFrame>,
    config: &PipelineConfig,
) -> Vec<BinHistogram> {
    let mut seen = HashMap::new();
    let mut order = Vec::new();
    for frame in frames {
        if seen.contains_key(&frame.subject_id) {
            continue;
        }
        let Ok(aligned) = validate_frame(&frame, config.frontality_tolerance_px) else {
            continue;
        };
        let q = quantize(&distance_vector(&aligned, &config.prominent_indices), config.q);
        order.push(frame.subject_id.clone());
        seen.insert(frame.subject_id, q);
    }
    histograms(order.iter().map(|id| seen[id].as_slice()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub per_coord_bits: Vec<f64>,
    pub joint_bits: f64,
    pub secret_supplement_bits: f64,
    pub n_subjects: u64,
    pub q: u32,
}

impl EntropyReport {
    pub fn from_histograms(hists: &[BinHistogram], q: u32) -> Result<Self, AnalysisError> {
        let per_coord_bits = hists.iter().map(min_entropy).collect::<Result<Vec<_>, _>>()?;
        let joint_bits = joint_entropy_bound(hists)?;
        Ok(Self {
            per_coord_bits,
            joint_bits,
            secret_supplement_bits: secret_supplement_bits(joint_bits),
            n_subjects: hists.first().map_or(0, |h| h.total),
            q,
        })
    }

    pub fn render_table(&self, prominent: &[u8]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>5}  {:>8}  {:>10}", "coord", "landmark", "H_min bits");
        for (i, bits) in self.per_coord_bits.iter().enumerate() {
            let lm = prominent.get(i).map_or(String::from("?"), u8::to_string);
            let _ = writeln!(out, "{i:>5}  {lm:>8}  {bits:>10.4}");
        }
        let _ = writeln!(out, "{:>17}  {:>10.4}", "joint bound", self.joint_bits);
        let _ = writeln!(out, "{:>17}  {:>10.4}", "secret supplement", self.secret_supplement_bits);
        let _ = writeln!(out, "subjects: {}  q: {}", self.n_subjects, self.q);
        out
    }
}

/// Genuine and impostor outcome rates for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingMetrics {
    pub match_rate: f64,
    /// Impostor frames with the impostor's own salt.
    pub c_far: f64,
    /// Impostor frames with the victim's salt.
    pub c_far_victim_salt: f64,
    pub c_frr: f64,
    pub n_subjects: usize,
    pub attempts_per_subject: usize,
    pub impostor_attempts: usize,
}

impl BindingMetrics {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("match", self.match_rate),
            ("c_far (own salt)", self.c_far),
            ("c_far (victim salt)", self.c_far_victim_salt),
            ("c_frr", self.c_frr),
        ];
        for (name, v) in rows {
            let _ = writeln!(out, "{name:>20}  {:>8.4}%", v * 100.0);
        }
        let _ = writeln!(
            out,
            "subjects: {}  attempts/subject: {}  impostor attempts: {}",
            self.n_subjects, self.attempts_per_subject, self.impostor_attempts
        );
        out
    }
}

/// Runs the enrollment vote for one subject. The caller owns the secret.
fn enrolled_vseed(
    subject: usize,
    frames: &[LandmarkFrame],
    salt: &str,
    config: &PipelineConfig,
) -> Result<VseedDigest, AnalysisError> {
    let needed = config.enroll_frames;
    let mut digests = Vec::with_capacity(needed);
    digests.extend(
        frames
            .iter()
            .filter_map(|f| frame_digest(f, salt, config).ok())
            .take(needed),
    );
    if digests.len() < needed {
        let valid = digests.len();
        digests.zeroize();
        return Err(AnalysisError::EnrollmentShort {
            subject,
            valid,
            needed,
        });
    }
    let vseed = majority_vote(&digests).expect("non-empty");
    digests.zeroize();
    Ok(vseed)
}

/// Quantized vectors of the valid frames an authentication attempt would
/// consider, in order.
fn quantized_attempt(frames: &[LandmarkFrame], config: &PipelineConfig) -> Vec<Vec<u8>> {
    frames
        .iter()
        .filter_map(|f| validate_frame(f, config.frontality_tolerance_px).ok())
        .take(config.auth_max_frames)
        .map(|a| quantize(&distance_vector(&a, &config.prominent_indices), config.q))
        .collect()
}

/// Whether the authentication loop over `attempt` with `salt` would derive
/// the key seeded by `target`. Keys are a pure function of the seed, so a
/// digest match is a key match.
fn recovers(attempt: &[Vec<u8>], salt: &str, target: &VseedDigest) -> bool {
    attempt.iter().any(|q| salted_hash(q, salt) == *target)
}

/// Match rate, C-FRR and both C-FAR variants.
///
/// A genuine attempt matches when some frame among its first
/// `auth_max_frames` valid ones reproduces the enrolled Vseed. Impostor
/// attempt `(a, b)` runs subject `a`'s first attempt against victim `b`.
/// `impostors_per_victim` caps how many other subjects try each victim.
pub fn binding_metrics(
    enroll_streams: &[Vec<LandmarkFrame>],
    auth_streams: &[Vec<Vec<LandmarkFrame>>],
    salts: &[String],
    config: &PipelineConfig,
    impostors_per_victim: Option<usize>,
) -> Result<BindingMetrics, AnalysisError> {
    let n = enroll_streams.len();
    if n == 0 || auth_streams.len() != n || salts.len() != n {
        return Err(AnalysisError::MismatchedInputs(format!(
            "{n} enrollment streams, {} auth stream sets, {} salts",
            auth_streams.len(),
            salts.len()
        )));
    }
    let attempts = auth_streams[0].len();
    if attempts == 0 || auth_streams.iter().any(|a| a.len() != attempts) {
        return Err(AnalysisError::MismatchedInputs(
            "every subject needs the same non-zero number of auth attempts".into(),
        ));
    }

    let mut vseeds = Vec::with_capacity(n);
    let mut first_attempts = Vec::with_capacity(n);
    let mut genuine_matches = 0usize;
    for (i, frames) in enroll_streams.iter().enumerate() {
        let vseed = enrolled_vseed(i, frames, &salts[i], config)?;
        for (k, attempt) in auth_streams[i].iter().enumerate() {
            let q = quantized_attempt(attempt, config);
            genuine_matches += usize::from(recovers(&q, &salts[i], &vseed));
            if k == 0 {
                first_attempts.push(q);
            }
        }
        vseeds.push(vseed);
    }

    let per_victim = impostors_per_victim.unwrap_or(n - 1).min(n - 1);
    let (mut own, mut victim) = (0usize, 0usize);
    for (b, target) in vseeds.iter().enumerate() {
        for k in 1..=per_victim {
            let a = (b + k) % n;
            own += usize::from(recovers(&first_attempts[a], &salts[a], target));
            victim += usize::from(recovers(&first_attempts[a], &salts[b], target));
        }
    }

    let genuine_total = n * attempts;
    let impostor_total = n * per_victim;
    let rate = |hits: usize| {
        if impostor_total == 0 {
            0.0
        } else {
            hits as f64 / impostor_total as f64
        }
    };
    Ok(BindingMetrics {
        match_rate: genuine_matches as f64 / genuine_total as f64,
        c_far: rate(own),
        c_far_victim_salt: rate(victim),
        c_frr: (genuine_total - genuine_matches) as f64 / genuine_total as f64,
        n_subjects: n,
        attempts_per_subject: attempts,
        impostor_attempts: impostor_total,
    })
}

/// Groups frames by subject id in order of first appearance.
pub fn group_by_subject(frames: impl IntoIterator<Item = LandmarkFrame>) -> Vec<(String, Vec<LandmarkFrame>)> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(String, Vec<LandmarkFrame>)> = Vec::new();
    for frame in frames {
        let slot = *index.entry(frame.subject_id.clone()).or_insert_with(|| {
            groups.push((frame.subject_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(frame);
    }
    groups
}

/// Splits a stream into `n` contiguous attempts of equal length, dropping
/// the remainder.
pub fn split_attempts(frames: Vec<LandmarkFrame>, n: usize) -> Vec<Vec<LandmarkFrame>> {
    let len = frames.len().checked_div(n).unwrap_or(0);
    if len == 0 {
        return Vec::new();
    }
    let mut frames = frames;
    frames.truncate(len * n);
    let mut out = Vec::with_capacity(n);
    while !frames.is_empty() {
        let rest = frames.split_off(len);
        out.push(std::mem::replace(&mut frames, rest));
    }
    out
}
