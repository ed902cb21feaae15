//! Synthetic longitudinal cohorts with a controllable subject fingerprint.
//!
//! Each scan's feature vector is
//!
//! ```text
//! fingerprint(subject) + stage_level · sigma_stage · u + noise
//! ```
//!
//! where the fingerprint is drawn once per subject from N(0, sigma_subject²·I),
//! `u` is the fixed unit vector (1, …, 1)/√d, `stage_level` is 0, 1, 2 for
//! CN, MCI, AD, and noise is drawn per scan from N(0, sigma_noise²·I). With a
//! large fingerprint and a weak stage signal, a memorizing classifier scores
//! well only when a test subject also appears in training.
//!
//! Stage sequences are monotone. Each consecutive visit pair is a transition
//! independently with probability `transition_prob` (at most two per subject,
//! since AD is absorbing); the initial stage is then drawn from
//! `initial_stage_distribution` restricted to the stages that leave room for
//! the subject's transitions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, DiagnosisLabel, ScanRecord};
use crate::features::FeatureMatrix;
use crate::rng::{self, stream};

/// Scans in the reference cohort.
pub const REFERENCE_SCANS: usize = 2731;
/// Subjects in the reference cohort.
pub const REFERENCE_SUBJECTS: usize = 657;
/// Diagnosis changes between consecutive visits in the reference cohort.
pub const REFERENCE_TRANSITIONS: usize = 152;
/// Subjects whose change happens between their last two visits.
pub const REFERENCE_LAST_VISIT_TRANSITIONS: usize = 52;
/// Test-set ground-truth counts (AD, MCI, CN) of the reference by-subject run.
pub const REFERENCE_TEST_MARGINALS: [usize; 3] = [175, 279, 203];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("transition profile cannot be realized: {0}")]
    Infeasible(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub visits_min: usize,
    pub visits_max: usize,
    /// When set, per-subject visit counts are nudged (within
    /// `[visits_min, visits_max]`) until they sum to exactly this value.
    pub total_scans: Option<usize>,
    pub feature_dim: usize,
    pub sigma_subject: f64,
    pub sigma_stage: f64,
    pub sigma_noise: f64,
    pub transition_prob: f64,
    /// Probabilities for CN, MCI, AD.
    pub initial_stage_distribution: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        calibrate_defaults()
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_subjects == 0 {
            return bad("n_subjects must be at least 1".into());
        }
        if self.visits_min == 0 || self.visits_min > self.visits_max {
            return bad(format!("visit range [{}, {}] is invalid", self.visits_min, self.visits_max));
        }
        if let Some(total) = self.total_scans {
            let (lo, hi) = (self.n_subjects * self.visits_min, self.n_subjects * self.visits_max);
            if total < lo || total > hi {
                return bad(format!("total_scans {total} outside reachable range [{lo}, {hi}]"));
            }
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1".into());
        }
        for (name, v) in [
            ("sigma_subject", self.sigma_subject),
            ("sigma_stage", self.sigma_stage),
            ("sigma_noise", self.sigma_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.transition_prob) {
            return bad(format!("transition_prob must be in [0,1], got {}", self.transition_prob));
        }
        let d = self.initial_stage_distribution;
        if d.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (d.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("initial_stage_distribution must be non-negative and sum to 1, got {d:?}"));
        }
        Ok(())
    }

    /// Expected scans per subject before any `total_scans` adjustment.
    pub fn mean_visits(&self) -> f64 {
        match self.total_scans {
            Some(t) => t as f64 / self.n_subjects as f64,
            None => (self.visits_min + self.visits_max) as f64 / 2.0,
        }
    }
}

/// Sizes and rates taken from the reference cohort: 657 subjects, 2,731
/// scans, 4–5 visits each, a per-pair transition rate of 152 / 2,074, and
/// initial stages distributed like the reference test-set ground truth.
/// Feature scales default to a strong fingerprint (10) over a weak stage
/// signal (1) and per-scan noise (0.5) in 32 dimensions.
pub fn calibrate_defaults() -> SynthConfig {
    let n = REFERENCE_SUBJECTS as f64;
    let [ad, mci, cn] = REFERENCE_TEST_MARGINALS.map(|c| c as f64 / n);
    SynthConfig {
        n_subjects: REFERENCE_SUBJECTS,
        visits_min: 4,
        visits_max: 5,
        total_scans: Some(REFERENCE_SCANS),
        feature_dim: 32,
        sigma_subject: 10.0,
        sigma_stage: 1.0,
        sigma_noise: 0.5,
        transition_prob: REFERENCE_TRANSITIONS as f64 / (REFERENCE_SCANS - REFERENCE_SUBJECTS) as f64,
        initial_stage_distribution: [cn, mci, ad],
    }
}

/// Exact transition counts for [`generate_exact`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactProfile {
    pub total_transitions: usize,
    pub last_visit_transitions: usize,
}

impl ExactProfile {
    pub fn reference() -> Self {
        Self { total_transitions: REFERENCE_TRANSITIONS, last_visit_transitions: REFERENCE_LAST_VISIT_TRANSITIONS }
    }
}

fn draw_visit_counts(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut counts: Vec<usize> = (0..config.n_subjects)
        .map(|_| rng.random_range(config.visits_min..=config.visits_max))
        .collect();
    if let Some(total) = config.total_scans {
        let mut sum: usize = counts.iter().sum();
        while sum != total {
            let grow = sum < total;
            let eligible: Vec<usize> = (0..counts.len())
                .filter(|&i| if grow { counts[i] < config.visits_max } else { counts[i] > config.visits_min })
                .collect();
            let i = *eligible.choose(rng).expect("total validated against visit range");
            if grow {
                counts[i] += 1;
                sum += 1;
            } else {
                counts[i] -= 1;
                sum -= 1;
            }
        }
    }
    counts
}

/// Initial level drawn from the distribution restricted to levels that
/// leave room for `transitions` more steps.
fn draw_initial_level(dist: &[f64; 3], transitions: usize, rng: &mut ChaCha8Rng) -> usize {
    let max_level = 2usize.saturating_sub(transitions);
    let weights: Vec<f64> = (0..=max_level).map(|l| dist[l]).collect();
    match WeightedIndex::new(&weights) {
        Ok(w) => w.sample(rng),
        // All admissible stages have zero mass.
        Err(_) => 0,
    }
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(4)
}

/// Turns per-subject transition indicators into records and features.
fn realize(
    config: &SynthConfig,
    transitions: &[Vec<bool>],
    rng: &mut ChaCha8Rng,
) -> Result<(Cohort, FeatureMatrix), SynthError> {
    let d = config.feature_dim;
    let direction = 1.0 / (d as f64).sqrt();
    let fingerprint_dist = Normal::new(0.0, config.sigma_subject).expect("validated scale");
    let noise_dist = Normal::new(0.0, config.sigma_noise).expect("validated scale");
    let width = id_width(config.n_subjects);

    let mut records = Vec::new();
    let mut features = FeatureMatrix::new(d).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    for (s, pairs) in transitions.iter().enumerate() {
        let n_trans = pairs.iter().filter(|&&t| t).count();
        let mut level = draw_initial_level(&config.initial_stage_distribution, n_trans, rng);
        let fingerprint: Vec<f64> = (0..d).map(|_| fingerprint_dist.sample(rng)).collect();
        let subject = format!("SUBJ{s:0width$}");
        for visit in 0..=pairs.len() {
            if visit > 0 && pairs[visit - 1] {
                level = (level + 1).min(2);
            }
            let label = DiagnosisLabel::from_level(level).expect("level in 0..=2");
            let scan = format!("{subject}-V{visit:02}");
            let shift = level as f64 * config.sigma_stage * direction;
            let row: Vec<f64> = fingerprint.iter().map(|f| f + shift + noise_dist.sample(rng)).collect();
            features
                .insert(scan.as_str().into(), row)
                .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
            records.push(ScanRecord::new(scan, subject.as_str(), visit as u32, label));
        }
    }
    let cohort = Cohort::build(records).expect("generated ids are unique");
    Ok((cohort, features))
}

/// Generates a cohort and its feature matrix. Deterministic in
/// `(config, seed)`.
pub fn generate(config: &SynthConfig, seed: u64) -> Result<(Cohort, FeatureMatrix), SynthError> {
    config.validate()?;
    let mut rng = rng::seeded(seed, stream::SYNTH);
    let counts = draw_visit_counts(config, &mut rng);
    let transitions: Vec<Vec<bool>> = counts
        .iter()
        .map(|&len| {
            let mut remaining = 2usize;
            (0..len - 1)
                .map(|_| {
                    let hit = rng.random_bool(config.transition_prob) && remaining > 0;
                    remaining -= usize::from(hit);
                    hit
                })
                .collect()
        })
        .collect();
    realize(config, &transitions, &mut rng)
}

/// Like [`generate`], but places exactly `profile.total_transitions`
/// transitions, `profile.last_visit_transitions` of them on subjects' final
/// visit pairs. `transition_prob` is ignored.
pub fn generate_exact(
    config: &SynthConfig,
    profile: ExactProfile,
    seed: u64,
) -> Result<(Cohort, FeatureMatrix), SynthError> {
    config.validate()?;
    if profile.last_visit_transitions > profile.total_transitions {
        return Err(SynthError::Infeasible("more last-visit transitions than transitions".into()));
    }
    let mut rng = rng::seeded(seed, stream::SYNTH_EXACT);
    let counts = draw_visit_counts(config, &mut rng);
    let mut transitions: Vec<Vec<bool>> = counts.iter().map(|&len| vec![false; len - 1]).collect();

    let mut multi: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] >= 2).collect();
    if multi.len() < profile.last_visit_transitions {
        return Err(SynthError::Infeasible(format!(
            "{} last-visit transitions requested, only {} subjects have two visits",
            profile.last_visit_transitions,
            multi.len()
        )));
    }
    multi.shuffle(&mut rng);
    for &s in &multi[..profile.last_visit_transitions] {
        *transitions[s].last_mut().expect("two visits") = true;
    }

    let mut slots: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .flat_map(|(s, &len)| (0..len.saturating_sub(2)).map(move |p| (s, p)))
        .collect();
    slots.shuffle(&mut rng);
    let mut needed = profile.total_transitions - profile.last_visit_transitions;
    for (s, p) in slots {
        if needed == 0 {
            break;
        }
        if transitions[s].iter().filter(|&&t| t).count() < 2 {
            transitions[s][p] = true;
            needed -= 1;
        }
    }
    if needed > 0 {
        return Err(SynthError::Infeasible(format!("{needed} transitions could not be placed")));
    }
    realize(config, &transitions, &mut rng)
}
