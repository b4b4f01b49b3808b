//! Labelled feature datasets: synthetic generation, stratified splitting and
//! CSV storage.
//!
//! # Synthetic geometry
//!
//! Each subclass is an isotropic Gaussian with standard deviation `sigma`.
//! With automatic centers, the subclasses are laid out as "slots" on a circle
//! in the plane of the first two feature axes, interleaving classes
//! round-robin (subclass 0 of every class, then subclass 1 of every class, ...)
//! so that neighbouring slots belong to different classes whenever the
//! hierarchy allows it. A subclass with difficulty `δ` gets the separation
//!
//! ```text
//! s = s_max·(1 − δ) + s_min·δ,   s_max = 6σ, s_min = 1σ
//! ```
//!
//! and sits at radius `s / (2·sin(π/M))` for `M` slots, which makes the chord
//! to a neighbouring slot of equal difficulty exactly `s`. Remaining feature
//! axes are pure noise. With two classes split into two subclasses each this
//! is an XOR-like layout: classes are not linearly separable, subclasses are.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{LabelHierarchy, LabelLevel};
use crate::rng::{self, Domain};

pub const MAX_SEPARATION_SIGMAS: f64 = 6.0;
pub const MIN_SEPARATION_SIGMAS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub subclass: usize,
    pub class: usize,
}

impl Sample {
    pub fn label(&self, level: LabelLevel) -> usize {
        match level {
            LabelLevel::Class => self.class,
            LabelLevel::Subclass => self.subclass,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    hierarchy: LabelHierarchy,
    feature_dim: usize,
}

impl Dataset {
    /// Validates feature dimensions and label consistency.
    pub fn new(samples: Vec<Sample>, hierarchy: LabelHierarchy, feature_dim: usize) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_dim {
                return Err(Error::shape(format!(
                    "sample {i} has {} features, expected {feature_dim}",
                    s.features.len()
                )));
            }
            match hierarchy.class_of(s.subclass) {
                None => {
                    return Err(Error::invalid(format!(
                        "sample {i}: subclass {} outside hierarchy of {} subclasses",
                        s.subclass,
                        hierarchy.num_subclasses()
                    )))
                }
                Some(c) if c != s.class => {
                    return Err(Error::invalid(format!(
                        "sample {i}: subclass {} belongs to class {c}, labelled {}",
                        s.subclass, s.class
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Self {
            samples,
            hierarchy,
            feature_dim,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn hierarchy(&self) -> &LabelHierarchy {
        &self.hierarchy
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self, level: LabelLevel) -> Vec<usize> {
        self.samples.iter().map(|s| s.label(level)).collect()
    }

    /// Per-subclass sample counts (N_S for every global subclass).
    pub fn subclass_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.hierarchy.num_subclasses()];
        for s in &self.samples {
            counts[s.subclass] += 1;
        }
        counts
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.hierarchy.num_classes()];
        for s in &self.samples {
            counts[s.class] += 1;
        }
        counts
    }
}

/// Parameters of a synthetic Gaussian-mixture dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub hierarchy: LabelHierarchy,
    /// One count per global subclass.
    pub samples_per_subclass: Vec<usize>,
    /// Explicit per-subclass centers; `None` selects the circular layout.
    pub centers: Option<Vec<Vec<f64>>>,
    /// One difficulty in [0, 1] per global subclass. Ignored for explicit centers.
    pub difficulty: Vec<f64>,
    pub feature_dim: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let n_sub = self.hierarchy.num_subclasses();
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be at least 1"));
        }
        if self.samples_per_subclass.len() != n_sub {
            return Err(Error::shape(format!(
                "samples_per_subclass has {} entries, hierarchy has {n_sub} subclasses",
                self.samples_per_subclass.len()
            )));
        }
        if self.samples_per_subclass.iter().sum::<usize>() == 0 {
            return Err(Error::invalid("synthetic spec requests zero samples"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        match &self.centers {
            Some(centers) => {
                if centers.len() != n_sub {
                    return Err(Error::shape(format!(
                        "{} explicit centers for {n_sub} subclasses",
                        centers.len()
                    )));
                }
                if let Some(k) = centers.iter().position(|c| c.len() != self.feature_dim) {
                    return Err(Error::shape(format!(
                        "center {k} has dimension {}, expected {}",
                        centers[k].len(),
                        self.feature_dim
                    )));
                }
            }
            None => {
                if self.difficulty.len() != n_sub {
                    return Err(Error::shape(format!(
                        "difficulty has {} entries, hierarchy has {n_sub} subclasses",
                        self.difficulty.len()
                    )));
                }
                if let Some(d) = self.difficulty.iter().find(|d| !(0.0..=1.0).contains(*d)) {
                    return Err(Error::invalid(format!("difficulty {d} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Per-subclass Gaussian centers, explicit or laid out on the circle.
    pub fn resolved_centers(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        if let Some(c) = &self.centers {
            return Ok(c.clone());
        }
        Ok(auto_centers(
            &self.hierarchy,
            &self.difficulty,
            self.feature_dim,
            self.sigma,
        ))
    }
}

pub fn separation(difficulty: f64, sigma: f64) -> f64 {
    sigma * (MAX_SEPARATION_SIGMAS * (1.0 - difficulty) + MIN_SEPARATION_SIGMAS * difficulty)
}

fn auto_centers(h: &LabelHierarchy, difficulty: &[f64], dim: usize, sigma: f64) -> Vec<Vec<f64>> {
    let max_sub = h.subclasses_per_class().iter().copied().max().unwrap_or(1);
    let mut slots = Vec::with_capacity(h.num_subclasses());
    for j in 0..max_sub {
        for c in 0..h.num_classes() {
            if j < h.subclasses_per_class()[c] {
                slots.push(h.subclass_range(c).start + j);
            }
        }
    }
    let m = slots.len();
    let mut centers = vec![vec![0.0; dim]; h.num_subclasses()];
    if m < 2 {
        return centers;
    }
    let chord_factor = 2.0 * (PI / m as f64).sin();
    for (slot, &sub) in slots.iter().enumerate() {
        let radius = separation(difficulty[sub], sigma) / chord_factor;
        let angle = 2.0 * PI * slot as f64 / m as f64;
        centers[sub][0] = radius * angle.cos();
        if dim > 1 {
            centers[sub][1] = radius * angle.sin();
        }
    }
    centers
}

/// Draws the dataset described by `spec`.
///
/// Subclass `k` draws from its own random stream keyed by `(seed, k)`, so its
/// samples do not depend on the other subclasses' counts.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let centers = spec.resolved_centers()?;
    let h = &spec.hierarchy;
    let total: usize = spec.samples_per_subclass.iter().sum();
    let mut samples = Vec::with_capacity(total);
    for (sub, (&count, center)) in spec.samples_per_subclass.iter().zip(&centers).enumerate() {
        let class = h.class_of(sub).expect("subclass in range");
        let mut rng = rng::stream(spec.seed, Domain::Generate, sub as u64);
        for _ in 0..count {
            let features = center
                .iter()
                .map(|&mu| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu + spec.sigma * z
                })
                .collect();
            samples.push(Sample {
                features,
                subclass: sub,
                class,
            });
        }
    }
    Dataset::new(samples, h.clone(), spec.feature_dim)
}

/// Stratified split: every subclass contributes `round(n·fraction)` samples
/// to the first part (clamped so both parts keep at least one), the rest to
/// the second. Empty subclasses are skipped.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_subclass: Vec<Vec<usize>> = vec![Vec::new(); ds.hierarchy.num_subclasses()];
    for (i, s) in ds.samples.iter().enumerate() {
        by_subclass[s.subclass].push(i);
    }
    let mut in_train = vec![false; ds.len()];
    for (sub, idx) in by_subclass.iter_mut().enumerate() {
        match idx.len() {
            0 => continue,
            1 => {
                return Err(Error::invalid(format!(
                    "subclass {sub} has a single sample and cannot be split"
                )))
            }
            n => {
                let mut rng = rng::stream(seed, Domain::Split, sub as u64);
                idx.shuffle(&mut rng);
                let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
                for &i in &idx[..n_train] {
                    in_train[i] = true;
                }
            }
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, keep) in ds.samples.iter().zip(in_train) {
        if keep {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    Ok((
        Dataset::new(train, ds.hierarchy.clone(), ds.feature_dim)?,
        Dataset::new(test, ds.hierarchy.clone(), ds.feature_dim)?,
    ))
}

/// Renders the dataset as CSV: `f0,...,f{d-1},subclass,class`.
///
/// Features use the shortest decimal form that parses back to the same `f64`.
pub fn dataset_to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    for k in 0..ds.feature_dim {
        out.push_str(&format!("f{k},"));
    }
    out.push_str("subclass,class\n");
    for s in &ds.samples {
        for x in &s.features {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{},{}\n", s.subclass, s.class));
    }
    out
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(dataset_to_csv(ds).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>, hierarchy: &LabelHierarchy) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset_csv(&text, hierarchy).map_err(|(line, message)| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })
}

/// Parses dataset CSV text; errors carry the 1-based line number.
pub fn parse_dataset_csv(
    text: &str,
    hierarchy: &LabelHierarchy,
) -> std::result::Result<Dataset, (usize, String)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err((1, "no samples".into())),
        Some(r) => r.map_err(|e| (1, e.to_string()))?,
    };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 3 || cols[cols.len() - 2] != "subclass" || cols[cols.len() - 1] != "class" {
        return Err((1, "header must be f0,...,f{d-1},subclass,class".into()));
    }
    let dim = cols.len() - 2;
    for (k, c) in cols[..dim].iter().enumerate() {
        if *c != format!("f{k}") {
            return Err((1, format!("expected column 'f{k}', found '{c}'")));
        }
    }
    let mut samples = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| (e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != dim + 2 {
            return Err((line, format!("expected {} fields, found {}", dim + 2, rec.len())));
        }
        let mut features = Vec::with_capacity(dim);
        for field in rec.iter().take(dim) {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| (line, format!("invalid feature value '{field}'")))?;
            if !x.is_finite() {
                return Err((line, format!("non-finite feature value '{field}'")));
            }
            features.push(x);
        }
        let parse_label = |field: &str, what: &str| -> std::result::Result<usize, (usize, String)> {
            field
                .trim()
                .parse()
                .map_err(|_| (line, format!("invalid {what} label '{field}'")))
        };
        let subclass = parse_label(&rec[dim], "subclass")?;
        let class = parse_label(&rec[dim + 1], "class")?;
        match hierarchy.class_of(subclass) {
            None => {
                return Err((
                    line,
                    format!(
                        "subclass {subclass} out of range (hierarchy has {} subclasses)",
                        hierarchy.num_subclasses()
                    ),
                ))
            }
            Some(c) if c != class => {
                return Err((
                    line,
                    format!("subclass {subclass} belongs to class {c}, row says class {class}"),
                ))
            }
            Some(_) => {}
        }
        samples.push(Sample {
            features,
            subclass,
            class,
        });
    }
    if samples.is_empty() {
        return Err((1, "no samples".into()));
    }
    Dataset::new(samples, hierarchy.clone(), dim).map_err(|e| (0, e.to_string()))
}
