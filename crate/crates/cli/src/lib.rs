//! `cohortsplit` command-line interface.
//!
//! Exit codes: 0 success, 1 bad input or configuration, 2 leakage found
//! under `audit --forbid-leakage`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cohortsplit_core::audit::{audit_split, compare_counts, ExpectedCounts, PartitionGroup};
use cohortsplit_core::baseline::{carry_forward_predict, majority_class_predict, nearest_neighbor_predict};
use cohortsplit_core::cohort::{count_transitions, filter_transition_subjects, Cohort, DiagnosisLabel};
use cohortsplit_core::demo::{run_demo, DemoSettings};
use cohortsplit_core::eval::{evaluate, evaluate_partitions, EvalReport};
use cohortsplit_core::manifest::{
    parse_features, parse_predictions, read_assignment, read_cohort, to_document, write_assignment,
    write_features, write_manifest, write_predictions, SplitMetadata,
};
use cohortsplit_core::split::{
    group_kfold, split_by_subject, split_by_visit_history, split_random_by_scan, Partition, SplitAssignment,
    SplitRatios, DEFAULT_VAL_FRACTION_OF_TRAIN,
};
use cohortsplit_core::synth::{calibrate_defaults, generate, generate_exact, ExactProfile, SynthConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_LEAKAGE: u8 = 2;

/// Fallback seed when neither `--seed` nor `COHORTSPLIT_SEED` is given.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Parser, Debug)]
#[command(name = "cohortsplit", version, about = "Subject-aware splitting and leakage auditing for longitudinal cohorts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SchemeArg {
    RandomByScan,
    BySubject,
    ByVisitHistory,
    GroupKfold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum BaselineArg {
    CarryForward,
    MajorityClass,
    NearestNeighbor,
}

impl BaselineArg {
    fn name(self) -> &'static str {
        match self {
            BaselineArg::CarryForward => "carry_forward",
            BaselineArg::MajorityClass => "majority_class",
            BaselineArg::NearestNeighbor => "nearest_neighbor",
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split a manifest into train/val/test and write the assignment files.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        /// train,val,test fractions (random_by_scan, by_subject). Defaults to
        /// 657/2731 test with 15% of the remainder for validation.
        #[arg(long)]
        ratios: Option<String>,
        /// Validation share of the non-test scans (by_visit_history).
        #[arg(long, default_value_t = DEFAULT_VAL_FRACTION_OF_TRAIN)]
        val_fraction: f64,
        /// Number of folds (group_kfold).
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Stratify subjects by final-visit label (by_subject).
        #[arg(long)]
        stratify: bool,
        #[arg(long, env = "COHORTSPLIT_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an assignment for subject-level leakage.
    Audit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        /// Metadata sidecar of the assignment; restores scheme and seed.
        #[arg(long)]
        metadata: Option<PathBuf>,
        /// Exit with status 2 when any subject spans train/val and test.
        #[arg(long)]
        forbid_leakage: bool,
        /// Compare counts against 2,074 train+val / 657 test scans.
        #[arg(long)]
        expect_reference_counts: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print cohort size and diagnosis-transition statistics.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a label-only or memorizing baseline on an assignment.
    Baseline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long, value_enum)]
        baseline: BaselineArg,
        /// Feature matrix (required for nearest_neighbor).
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Score only subjects whose last two visits differ in label.
        #[arg(long)]
        transition_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predictions file against a manifest and assignment.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leakage demonstration on synthetic cohorts across all three schemes.
    Demo {
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
        seeds: Vec<u64>,
        /// Run seeds concurrently; output is identical to a sequential run.
        #[arg(long)]
        parallel: bool,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic manifest and feature matrix.
    Generate {
        #[arg(long, env = "COHORTSPLIT_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        scans: Option<usize>,
        #[arg(long)]
        visits_min: Option<usize>,
        #[arg(long)]
        visits_max: Option<usize>,
        #[arg(long)]
        feature_dim: Option<usize>,
        #[arg(long)]
        transition_prob: Option<f64>,
        /// Place exactly this many transitions (needs --exact-last-visit).
        #[arg(long, requires = "exact_last_visit")]
        exact_transitions: Option<usize>,
        #[arg(long, requires = "exact_transitions")]
        exact_last_visit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Result of a successful command.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Leakage,
}

fn read_text(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_cohort(path: &Path) -> Result<Cohort> {
    let text = read_text(path, "manifest")?;
    read_cohort(&text).with_context(|| format!("invalid manifest {}", path.display()))
}

fn load_assignment(path: &Path, metadata: Option<&Path>, cohort: &Cohort) -> Result<SplitAssignment> {
    let meta = metadata
        .map(|m| -> Result<SplitMetadata> {
            let text = read_text(m, "metadata")?;
            SplitMetadata::from_document(&text).with_context(|| format!("invalid metadata {}", m.display()))
        })
        .transpose()?;
    let text = read_text(path, "assignment")?;
    read_assignment(&text, meta.as_ref(), cohort).with_context(|| format!("invalid assignment {}", path.display()))
}

fn write_split(dir: &Path, assignment: &SplitAssignment, cohort: &Cohort, config: serde_json::Value) -> Result<SplitMetadata> {
    let (text, mut meta) = write_assignment(assignment, cohort)?;
    meta.config = Some(config);
    write_text(&dir.join("assignment.csv"), &text)?;
    write_text(&dir.join("metadata.json"), &meta.to_document())?;
    Ok(meta)
}

fn print_counts(dir: &Path, meta: &SplitMetadata) {
    println!(
        "{}: train {} / val {} / test {} scans ({} / {} / {} subjects)",
        dir.display(),
        meta.counts_train,
        meta.counts_val,
        meta.counts_test,
        meta.subjects_train,
        meta.subjects_val,
        meta.subjects_test
    );
}

#[allow(clippy::too_many_arguments)]
fn cmd_split(
    manifest: &Path,
    scheme: SchemeArg,
    ratios: Option<&str>,
    val_fraction: f64,
    k: usize,
    stratify: bool,
    seed: u64,
    out: &Path,
) -> Result<Outcome> {
    let cohort = load_cohort(manifest)?;
    let ratios = match ratios {
        Some(r) => r.parse::<SplitRatios>()?,
        None => SplitRatios::reference(),
    };
    let mut config = json!({
        "command": "split",
        "manifest": manifest.display().to_string(),
        "seed": seed,
    });
    let cfg = config.as_object_mut().expect("object literal");
    match scheme {
        SchemeArg::RandomByScan | SchemeArg::BySubject => {
            let (assignment, name) = if scheme == SchemeArg::RandomByScan {
                (split_random_by_scan(&cohort, ratios, seed)?, "random_by_scan")
            } else {
                cfg.insert("stratify".into(), json!(stratify));
                (split_by_subject(&cohort, ratios, seed, stratify)?, "by_subject")
            };
            cfg.insert("scheme".into(), json!(name));
            cfg.insert("ratios".into(), json!([ratios.train, ratios.val, ratios.test]));
            let dir = out.join(format!("{name}-seed{seed}"));
            let meta = write_split(&dir, &assignment, &cohort, config)?;
            print_counts(&dir, &meta);
        }
        SchemeArg::ByVisitHistory => {
            let split = split_by_visit_history(&cohort, val_fraction, seed)?;
            cfg.insert("scheme".into(), json!("by_visit_history"));
            cfg.insert("val_fraction_of_train".into(), json!(val_fraction));
            let excluded: Vec<&str> = split.excluded_subjects.iter().map(|s| s.as_str()).collect();
            cfg.insert("excluded_single_visit_subjects".into(), json!(excluded));
            let dir = out.join(format!("by_visit_history-seed{seed}"));
            let meta = write_split(&dir, &split.assignment, &cohort, config)?;
            print_counts(&dir, &meta);
            println!("test scans = {} included subjects", meta.counts_test);
            if !excluded.is_empty() {
                eprintln!(
                    "warning: {} single-visit subject(s) kept out of test: {}",
                    excluded.len(),
                    excluded.join(",")
                );
            }
        }
        SchemeArg::GroupKfold => {
            let folds = group_kfold(&cohort, k, seed)?;
            cfg.insert("scheme".into(), json!("group_kfold"));
            cfg.insert("k".into(), json!(k));
            let root = out.join(format!("group_kfold-k{k}-seed{seed}"));
            for (i, fold) in folds.iter().enumerate() {
                let dir = root.join(format!("fold{i}"));
                let meta = write_split(&dir, fold, &cohort, config.clone())?;
                print_counts(&dir, &meta);
            }
        }
    }
    Ok(Outcome::Done)
}

fn cmd_audit(
    manifest: &Path,
    assignment: &Path,
    metadata: Option<&Path>,
    forbid_leakage: bool,
    expect_reference_counts: bool,
    out: Option<&Path>,
) -> Result<Outcome> {
    let cohort = load_cohort(manifest)?;
    let assignment = load_assignment(assignment, metadata, &cohort)?;
    let report = audit_split(&cohort, &assignment);
    let mismatches = if expect_reference_counts {
        compare_counts(&report, &ExpectedCounts::reference_scans())
    } else {
        Vec::new()
    };

    println!("inferred scheme:          {}", report.inferred_scheme);
    println!("subject disjoint:         {}", report.subject_disjoint);
    println!("visit-history consistent: {}", report.visit_history_consistent);
    println!("leaked subjects:          {}", report.leaked_subjects.len());
    for g in [PartitionGroup::Train, PartitionGroup::Val, PartitionGroup::Test] {
        let c = report.partition_counts[&g];
        println!("{:<26}{} scans, {} subjects", format!("{g}:"), c.scans, c.subjects);
    }
    for m in &mismatches {
        println!("count mismatch: {m}");
    }

    if let Some(out) = out {
        let doc = json!({
            "report": report,
            "count_mismatches": mismatches,
            "version": cohortsplit_core::TOOL_VERSION,
        });
        write_text(&out.join("audit.json"), &to_document(&doc))?;
    }
    if forbid_leakage && report.is_leaky() {
        eprintln!("leakage: {} subject(s) span train/val and test", report.leaked_subjects.len());
        return Ok(Outcome::Leakage);
    }
    Ok(Outcome::Done)
}

fn cmd_stats(manifest: &Path, out: Option<&Path>) -> Result<Outcome> {
    let cohort = load_cohort(manifest)?;
    let stats = count_transitions(&cohort);
    let single = cohort.subjects().filter(|s| s.len() == 1).count();
    let transition_subjects = filter_transition_subjects(&cohort);
    let mut labels = [0usize; 3];
    for s in cohort.scans() {
        labels[s.label.level()] += 1;
    }

    println!("scans:                  {}", cohort.n_scans());
    println!("subjects:               {}", cohort.n_subjects());
    println!("single-visit subjects:  {single}");
    println!("consecutive pairs:      {}", stats.consecutive_pairs);
    println!("transitions:            {}", stats.total_transitions);
    println!("last-visit transitions: {}", stats.last_visit_transitions);
    for (kind, n) in stats.kind_table() {
        println!("  {kind:<8} {n}");
    }

    if let Some(out) = out {
        let label_counts: serde_json::Map<String, serde_json::Value> = DiagnosisLabel::ALL
            .iter()
            .map(|l| (l.as_str().to_owned(), json!(labels[l.level()])))
            .collect();
        let doc = json!({
            "n_scans": cohort.n_scans(),
            "n_subjects": cohort.n_subjects(),
            "single_visit_subjects": single,
            "consecutive_pairs": stats.consecutive_pairs,
            "total_transitions": stats.total_transitions,
            "last_visit_transitions": stats.last_visit_transitions,
            "per_transition_kind": stats.kind_table(),
            "label_counts": label_counts,
            "transition_subjects": transition_subjects,
            "version": cohortsplit_core::TOOL_VERSION,
        });
        write_text(&out.join("stats.json"), &to_document(&doc))?;
    }
    Ok(Outcome::Done)
}

fn cmd_baseline(
    manifest: &Path,
    assignment_path: &Path,
    baseline: BaselineArg,
    features: Option<&Path>,
    k: usize,
    transition_only: bool,
    out: &Path,
) -> Result<Outcome> {
    let cohort = load_cohort(manifest)?;
    let assignment = load_assignment(assignment_path, None, &cohort)?;
    let predictions = match baseline {
        BaselineArg::CarryForward => carry_forward_predict(&cohort, &assignment),
        BaselineArg::MajorityClass => majority_class_predict(&cohort, &assignment),
        BaselineArg::NearestNeighbor => {
            let Some(path) = features else {
                bail!("nearest_neighbor needs --features");
            };
            let text = read_text(path, "features")?;
            let features = parse_features(&text).with_context(|| format!("invalid features {}", path.display()))?;
            nearest_neighbor_predict(&features, &cohort, &assignment, k)?
        }
    };

    let report = if transition_only {
        let keep = filter_transition_subjects(&cohort);
        let scans: Vec<_> = assignment
            .scans_in(Partition::Test)
            .filter(|s| cohort.scan(s.as_str()).is_some_and(|r| keep.contains(&r.subject_id)))
            .cloned()
            .collect();
        cohortsplit_core::eval::evaluate_scans(&predictions, &cohort, &scans, "test[transition_only]")?
    } else {
        evaluate(&predictions, &cohort, &assignment)?
    };

    let dir = out.join(baseline.name());
    write_text(&dir.join("predictions.csv"), &write_predictions(&predictions))?;
    write_text(&dir.join("report.json"), &to_document(&report))?;
    println!("{}: accuracy {:.4} on {} scans", report.provenance, report.accuracy, report.n_scored);
    print!("{}", report.confusion.to_table());
    Ok(Outcome::Done)
}

fn cmd_eval(manifest: &Path, assignment: &Path, predictions: &Path, out: &Path) -> Result<Outcome> {
    let cohort = load_cohort(manifest)?;
    let assignment = load_assignment(assignment, None, &cohort)?;
    let text = read_text(predictions, "predictions")?;
    let predictions = parse_predictions(&text, &predictions.display().to_string())?;

    let test = evaluate(&predictions, &cohort, &assignment)?;
    // Train accuracy is reported when the file covers those scans too.
    let optional = |parts: &[Partition]| -> Option<EvalReport> {
        evaluate_partitions(&predictions, &cohort, &assignment, parts).ok().filter(|r| r.n_scored > 0)
    };
    let train = optional(&[Partition::Train]);
    let train_val = optional(&[Partition::Train, Partition::Val]);

    println!("test accuracy:  {:.4} ({} scans)", test.accuracy, test.n_scored);
    if let Some(r) = &train {
        println!("train accuracy: {:.4} ({} scans)", r.accuracy, r.n_scored);
    }
    if let Some(r) = &train_val {
        println!("train+val accuracy: {:.4} ({} scans)", r.accuracy, r.n_scored);
    }
    print!("{}", test.confusion.to_table());
    let doc = json!({ "test": test, "train": train, "train_val": train_val });
    write_text(&out.join("report.json"), &to_document(&doc))?;
    Ok(Outcome::Done)
}

fn cmd_demo(seeds: Vec<u64>, parallel: bool, k: usize, out: Option<&Path>) -> Result<Outcome> {
    let settings = DemoSettings { seeds, k, ..DemoSettings::default() };
    let report = run_demo(&settings, parallel)?;
    print!("{}", report.to_table());
    println!(
        "ordering random_by_scan > by_visit_history > by_subject: {}",
        if report.strictly_ordered() { "holds" } else { "VIOLATED" }
    );
    if let Some(out) = out {
        write_text(&out.join("demo.json"), &to_document(&report))?;
    }
    Ok(Outcome::Done)
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    seed: u64,
    subjects: Option<usize>,
    scans: Option<usize>,
    visits_min: Option<usize>,
    visits_max: Option<usize>,
    feature_dim: Option<usize>,
    transition_prob: Option<f64>,
    exact: Option<ExactProfile>,
    out: &Path,
) -> Result<Outcome> {
    let mut config: SynthConfig = calibrate_defaults();
    if let Some(n) = subjects {
        config.n_subjects = n;
        // The calibrated scan total only applies to the calibrated size.
        config.total_scans = None;
    }
    config.total_scans = scans.or(config.total_scans);
    config.visits_min = visits_min.unwrap_or(config.visits_min);
    config.visits_max = visits_max.unwrap_or(config.visits_max);
    config.feature_dim = feature_dim.unwrap_or(config.feature_dim);
    config.transition_prob = transition_prob.unwrap_or(config.transition_prob);

    let (cohort, features) = match exact {
        Some(profile) => generate_exact(&config, profile, seed)?,
        None => generate(&config, seed)?,
    };
    write_text(&out.join("manifest.csv"), &write_manifest(&cohort))?;
    write_text(&out.join("features.csv"), &write_features(&features))?;
    let doc = json!({
        "config": config,
        "exact_profile": exact,
        "seed": seed,
        "version": cohortsplit_core::TOOL_VERSION,
    });
    write_text(&out.join("synth.json"), &to_document(&doc))?;
    println!("{}: {} scans, {} subjects", out.display(), cohort.n_scans(), cohort.n_subjects());
    Ok(Outcome::Done)
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Split { manifest, scheme, ratios, val_fraction, k, stratify, seed, out } => {
            cmd_split(&manifest, scheme, ratios.as_deref(), val_fraction, k, stratify, seed, &out)
        }
        Command::Audit { manifest, assignment, metadata, forbid_leakage, expect_reference_counts, out } => cmd_audit(
            &manifest,
            &assignment,
            metadata.as_deref(),
            forbid_leakage,
            expect_reference_counts,
            out.as_deref(),
        ),
        Command::Stats { manifest, out } => cmd_stats(&manifest, out.as_deref()),
        Command::Baseline { manifest, assignment, baseline, features, k, transition_only, out } => {
            cmd_baseline(&manifest, &assignment, baseline, features.as_deref(), k, transition_only, &out)
        }
        Command::Eval { manifest, assignment, predictions, out } => cmd_eval(&manifest, &assignment, &predictions, &out),
        Command::Demo { seeds, parallel, k, out } => cmd_demo(seeds, parallel, k, out.as_deref()),
        Command::Generate {
            seed,
            subjects,
            scans,
            visits_min,
            visits_max,
            feature_dim,
            transition_prob,
            exact_transitions,
            exact_last_visit,
            out,
        } => {
            let exact = exact_transitions.zip(exact_last_visit).map(|(total_transitions, last_visit_transitions)| {
                ExactProfile { total_transitions, last_visit_transitions }
            });
            cmd_generate(seed, subjects, scans, visits_min, visits_max, feature_dim, transition_prob, exact, &out)
        }
    }
}

/// Parses `args`, runs the command, and maps the result to an exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::Leakage) => EXIT_LEAKAGE,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}
