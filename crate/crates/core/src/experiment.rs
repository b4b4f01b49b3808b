//! The multi-seed comparison of the six teacher/student regimes.
//!
//! # Config grammar
//!
//! TOML. Top-level keys `seed`, `n_seeds` and optionally `seed_step`
//! (default 1; run `k` uses `seed + k·seed_step`). Sections:
//!
//! * `[data]`: `task`, `samples_per_subclass`, `difficulty`, `feature_dim`,
//!   `sigma`, `train_fraction`, optional `centers`.
//! * `[teacher]`, `[student]`: `hidden`, `epochs`, `batch_size`, `lr`,
//!   `weight_decay`, `lr_decay`.
//! * `[kd]`, `[skd]`: `tau`, `lambda`.
//!
//! Unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize};

use crate::dataset::{generate_synthetic, split_dataset, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::hierarchy::{LabelLevel, TaskPreset};
use crate::info_bits::{label_bits_report, BitsRow, TaskConfusions};
use crate::losses::{DistillConfig, StudentMode};
use crate::train_eval::{
    evaluate, run_seeds, train_student, train_teacher, Metrics, RunSummary, TrainConfig, TrainedModel,
};

fn de_preset<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<TaskPreset, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn ser_preset<S: serde::Serializer>(p: &TaskPreset, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(p.name())
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(deserialize_with = "de_preset", serialize_with = "ser_preset")]
    pub task: TaskPreset,
    pub samples_per_subclass: Vec<usize>,
    #[serde(default)]
    pub difficulty: Vec<f64>,
    #[serde(default)]
    pub centers: Option<Vec<Vec<f64>>>,
    pub feature_dim: usize,
    pub sigma: f64,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleSection {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSection {
    pub tau: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_seeds: usize,
    #[serde(default = "one")]
    pub seed_step: u64,
    pub data: DataSection,
    pub teacher: RoleSection,
    pub student: RoleSection,
    pub kd: DistillSection,
    pub skd: DistillSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |e: Error| Error::Config(e.to_string());
        if self.n_seeds < 2 {
            return Err(Error::Config(format!("n_seeds must be at least 2, got {}", self.n_seeds)));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::Config("data.train_fraction must lie in (0, 1)".into()));
        }
        self.synthetic_spec(self.seed).resolved_centers().map_err(bad)?;
        self.train_config(LabelLevel::Class, None, self.seed).validate().map_err(bad)?;
        for mode in StudentMode::ALL {
            let cfg = self.train_config(mode.level(), Some(mode), self.seed);
            cfg.validate().map_err(bad)?;
            cfg.distill.validate().map_err(bad)?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64)
            .map(|k| self.seed.wrapping_add(k.wrapping_mul(self.seed_step)))
            .collect()
    }

    pub fn synthetic_spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            hierarchy: self.data.task.hierarchy(),
            samples_per_subclass: self.data.samples_per_subclass.clone(),
            centers: self.data.centers.clone(),
            difficulty: self.data.difficulty.clone(),
            feature_dim: self.data.feature_dim,
            sigma: self.data.sigma,
            seed,
        }
    }

    /// Generates and splits the data of one run.
    pub fn make_data(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let full = generate_synthetic(&self.synthetic_spec(seed))?;
        split_dataset(&full, self.data.train_fraction, seed)
    }

    /// Training settings for a teacher (`mode = None`) or a student.
    pub fn train_config(&self, level: LabelLevel, mode: Option<StudentMode>, seed: u64) -> TrainConfig {
        let role = if mode.is_some() { &self.student } else { &self.teacher };
        let distill = match mode {
            Some(StudentMode::ConventionalKd) => (self.kd.tau, self.kd.lambda),
            Some(StudentMode::Skd) => (self.skd.tau, self.skd.lambda),
            _ => (1.0, 1.0),
        };
        let mode = mode.unwrap_or(match level {
            LabelLevel::Class => StudentMode::Baseline,
            LabelLevel::Subclass => StudentMode::SubclassLabelsOnly,
        });
        TrainConfig {
            hidden: role.hidden.clone(),
            epochs: role.epochs,
            batch_size: role.batch_size,
            lr: role.lr,
            weight_decay: role.weight_decay,
            lr_decay: role.lr_decay,
            seed,
            distill: DistillConfig {
                tau: distill.0,
                lambda: distill.1,
                mode,
            },
        }
    }
}

/// The rows of the comparison, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TeacherClass,
    TeacherSubclass,
    StudentBaseline,
    StudentSubclass,
    StudentKd,
    StudentSkd,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::TeacherClass,
        Method::TeacherSubclass,
        Method::StudentBaseline,
        Method::StudentSubclass,
        Method::StudentKd,
        Method::StudentSkd,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::TeacherClass => "Teacher (using class labels)",
            Method::TeacherSubclass => "Teacher (using subclass labels)",
            Method::StudentBaseline => "Student (baseline)",
            Method::StudentSubclass => "Student (using subclass labels)",
            Method::StudentKd => "Student + KD",
            Method::StudentSkd => "Student + SKD",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Method::TeacherClass => "teacher_class",
            Method::TeacherSubclass => "teacher_subclass",
            Method::StudentBaseline => "student_baseline",
            Method::StudentSubclass => "student_subclass",
            Method::StudentKd => "student_kd",
            Method::StudentSkd => "student_skd",
        }
    }

    pub fn level(self) -> LabelLevel {
        match self {
            Method::TeacherClass | Method::StudentBaseline | Method::StudentKd => LabelLevel::Class,
            _ => LabelLevel::Subclass,
        }
    }

    pub fn student_mode(self) -> Option<StudentMode> {
        match self {
            Method::TeacherClass | Method::TeacherSubclass => None,
            Method::StudentBaseline => Some(StudentMode::Baseline),
            Method::StudentSubclass => Some(StudentMode::SubclassLabelsOnly),
            Method::StudentKd => Some(StudentMode::ConventionalKd),
            Method::StudentSkd => Some(StudentMode::Skd),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub level: LabelLevel,
    /// Test-set metrics.
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub run: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub methods: Vec<MethodOutcome>,
    /// Label bits of the two teachers, from their training-set confusions.
    pub label_bits: Vec<BitsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub label: String,
    pub runs: usize,
    pub binary_f1: Option<RunSummary>,
    pub macro_f1: Option<RunSummary>,
    pub accuracy: Option<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: String,
    pub task: String,
    pub seeds: Vec<u64>,
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<SeedRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub run: usize,
    pub seed: u64,
    pub method: Method,
    pub seconds: f64,
}

/// Wall-clock data, kept out of the report so that reports are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingLog {
    pub total_seconds: f64,
    pub runs: Vec<RunTiming>,
}

fn train_confusions(model: &TrainedModel, train: &Dataset, task: &str) -> Result<TaskConfusions> {
    let m = evaluate(&model.network, train, model.level)?;
    let h = train.hierarchy().clone();
    match m.subclass_confusion {
        Some(sub) => TaskConfusions::from_subclass_confusion(task, h, m.class_confusion, &sub),
        None => {
            let k = h.num_classes();
            let flat = crate::hierarchy::LabelHierarchy::flat(k)?;
            let counts = m.class_confusion.iter().map(|r| r.iter().sum()).collect();
            Ok(TaskConfusions {
                task: task.to_string(),
                hierarchy: flat,
                class_confusion: m.class_confusion,
                subclass_confusions: vec![None; k],
                subclass_counts: counts,
            })
        }
    }
}

/// Trains and evaluates all six regimes for one seed.
pub fn run_single_seed(cfg: &ExperimentConfig, run: usize, seed: u64) -> (SeedRun, Vec<RunTiming>) {
    let mut out = SeedRun {
        run,
        seed,
        error: None,
        methods: Vec::with_capacity(Method::ALL.len()),
        label_bits: Vec::new(),
    };
    let mut timings = Vec::new();
    let (train, test) = match cfg.make_data(seed) {
        Ok(d) => d,
        Err(e) => {
            out.error = Some(e.to_string());
            return (out, timings);
        }
    };

    let mut teachers: [Option<TrainedModel>; 2] = [None, None];
    for method in Method::ALL {
        let start = Instant::now();
        let level = method.level();
        let trained = match method.student_mode() {
            None => train_teacher(&train, &cfg.train_config(level, None, seed), level),
            Some(mode) => {
                let teacher = match mode {
                    StudentMode::ConventionalKd => teachers[0].as_ref(),
                    StudentMode::Skd => teachers[1].as_ref(),
                    _ => None,
                };
                if mode.needs_teacher() && teacher.is_none() {
                    Err(Error::invalid("teacher training failed"))
                } else {
                    train_student(&train, &cfg.train_config(level, Some(mode), seed), teacher)
                }
            }
        };
        let result = trained.and_then(|model| {
            let metrics = evaluate(&model.network, &test, level)?;
            Ok((model, metrics))
        });
        timings.push(RunTiming {
            run,
            seed,
            method,
            seconds: start.elapsed().as_secs_f64(),
        });
        let outcome = match result {
            Ok((model, metrics)) => {
                match method {
                    Method::TeacherClass => teachers[0] = Some(model),
                    Method::TeacherSubclass => teachers[1] = Some(model),
                    _ => {}
                }
                MethodOutcome {
                    method,
                    level,
                    metrics: Some(metrics),
                    error: None,
                }
            }
            Err(e) => MethodOutcome {
                method,
                level,
                metrics: None,
                error: Some(e.to_string()),
            },
        };
        out.methods.push(outcome);
    }

    let mut tasks = Vec::new();
    let confusions = [
        (&teachers[0], TaskPreset::ClassLevel.name()),
        (&teachers[1], cfg.data.task.name()),
    ];
    for (teacher, name) in confusions {
        if let Some(t) = teacher {
            match train_confusions(t, &train, name) {
                Ok(c) => tasks.push(c),
                Err(e) => out.error = Some(format!("label bits: {e}")),
            }
        }
    }
    if !tasks.is_empty() {
        match label_bits_report(&tasks) {
            Ok(r) => out.label_bits = r.rows,
            Err(e) => out.error = Some(format!("label bits: {e}")),
        }
    }
    (out, timings)
}

fn summarize(runs: &[SeedRun]) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::with_capacity(Method::ALL.len());
    for (i, method) in Method::ALL.into_iter().enumerate() {
        let done: Vec<(u64, &Metrics)> = runs
            .iter()
            .filter_map(|r| r.methods.get(i).and_then(|m| m.metrics.as_ref()).map(|m| (r.seed, m)))
            .collect();
        let seeds: Vec<u64> = done.iter().map(|d| d.0).collect();
        let summary = |f: fn(&Metrics) -> f64| -> Result<Option<RunSummary>> {
            if done.is_empty() {
                return Ok(None);
            }
            RunSummary::from_values(seeds.clone(), done.iter().map(|d| f(d.1)).collect()).map(Some)
        };
        rows.push(SummaryRow {
            method,
            label: method.label().to_string(),
            runs: done.len(),
            binary_f1: summary(|m| m.binary_f1)?,
            macro_f1: summary(|m| m.macro_f1)?,
            accuracy: summary(|m| m.accuracy)?,
        });
    }
    Ok(rows)
}

/// Runs every seed on up to `jobs` threads; per-seed failures are recorded, not raised.
pub fn run_experiment(cfg: &ExperimentConfig, config_text: &str, jobs: usize) -> Result<(ExperimentReport, TimingLog)> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds = cfg.seeds();
    let results = run_seeds(cfg.n_seeds, 0, jobs, |k| {
        Ok(run_single_seed(cfg, k as usize, seeds[k as usize]))
    })?;
    let mut runs = Vec::with_capacity(results.len());
    let mut timing = Vec::new();
    for r in results {
        let (run, t) = r?;
        runs.push(run);
        timing.extend(t);
    }
    let report = ExperimentReport {
        config: config_text.to_string(),
        task: cfg.data.task.name().to_string(),
        seeds,
        summary: summarize(&runs)?,
        runs,
    };
    Ok((
        report,
        TimingLog {
            total_seconds: start.elapsed().as_secs_f64(),
            runs: timing,
        },
    ))
}

fn fmt_opt(s: &Option<RunSummary>) -> (String, String) {
    match s {
        Some(s) => (format!("{:.6}", s.mean), format!("{:.6}", s.std)),
        None => (String::new(), String::new()),
    }
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Table-shaped summary: one row per method, mean and std per metric.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "method,label,runs,binary_f1_mean,binary_f1_std,macro_f1_mean,macro_f1_std,accuracy_mean,accuracy_std\n",
        );
        for row in &self.summary {
            let (bm, bs) = fmt_opt(&row.binary_f1);
            let (mm, ms) = fmt_opt(&row.macro_f1);
            let (am, as_) = fmt_opt(&row.accuracy);
            out.push_str(&format!(
                "{},\"{}\",{},{bm},{bs},{mm},{ms},{am},{as_}\n",
                row.method.slug(),
                row.label,
                row.runs
            ));
        }
        out
    }

    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "{:<34} {:>5} {:>24} {:>24}\n",
            "method", "runs", "binary F1 (mean ± std)", "macro F1 (mean ± std)"
        );
        for row in &self.summary {
            let cell = |s: &Option<RunSummary>| match s {
                Some(s) => format!("{:.6} ± {:.6}", s.mean, s.std),
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "{:<34} {:>5} {:>24} {:>24}\n",
                row.label,
                row.runs,
                cell(&row.binary_f1),
                cell(&row.macro_f1)
            ));
        }
        out
    }

    pub fn row(&self, method: Method) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method)
    }

    pub fn failures(&self) -> usize {
        self.runs
            .iter()
            .map(|r| r.error.is_some() as usize + r.methods.iter().filter(|m| m.error.is_some()).count())
            .sum()
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `runs/run_NNN.json`, then `report.json`, `summary.csv` and `timing.json`.
pub fn write_experiment(dir: impl AsRef<Path>, report: &ExperimentReport, timing: &TimingLog) -> Result<()> {
    let dir = dir.as_ref();
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    for run in &report.runs {
        let text = serde_json::to_string_pretty(run)?;
        write(&runs_dir.join(format!("run_{:03}.json", run.run)), &text)?;
    }
    write(&dir.join("report.json"), &report.to_json())?;
    write(&dir.join("summary.csv"), &report.summary_csv())?;
    write(&dir.join("timing.json"), &serde_json::to_string_pretty(timing)?)?;
    Ok(())
}
