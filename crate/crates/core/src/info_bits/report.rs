//! Label-bit reports from training-set confusion matrices.

use serde::{Deserialize, Serialize};

use super::bounds::{
    estimate_accuracy_params, theorem1_bound, theorem2_bound, weighted_subclass_bits,
    BitsBreakdown, DetectionParams, HierarchyBitsParams,
};
use super::capacity::{bac_capacity, blahut_arimoto, qsc_capacity_flagged, BA_MAX_ITERS, BA_TOL};
use super::ChannelSpec;
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;

/// Confusion matrices of one task, computed on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfusions {
    pub task: String,
    pub hierarchy: LabelHierarchy,
    /// True class × predicted class counts.
    pub class_confusion: Vec<Vec<u64>>,
    /// Per class: true subclass × predicted subclass counts within that class;
    /// `None` for single-subclass classes.
    pub subclass_confusions: Vec<Option<Vec<Vec<u64>>>>,
    /// Training samples per global subclass.
    pub subclass_counts: Vec<u64>,
}

impl TaskConfusions {
    /// Builds the per-class blocks and counts from a full subclass confusion matrix.
    pub fn from_subclass_confusion(
        task: impl Into<String>,
        hierarchy: LabelHierarchy,
        class_confusion: Vec<Vec<u64>>,
        subclass_confusion: &[Vec<u64>],
    ) -> Result<Self> {
        let subclass_confusions = within_class_confusions(subclass_confusion, &hierarchy)?;
        let subclass_counts = subclass_confusion.iter().map(|r| r.iter().sum()).collect();
        Ok(Self {
            task: task.into(),
            hierarchy,
            class_confusion,
            subclass_confusions,
            subclass_counts,
        })
    }
}

/// Diagonal blocks of a global subclass confusion matrix: for every class with
/// at least two subclasses, the counts of its samples predicted as each of its
/// own subclasses.
pub fn within_class_confusions(
    subclass_confusion: &[Vec<u64>],
    hierarchy: &LabelHierarchy,
) -> Result<Vec<Option<Vec<Vec<u64>>>>> {
    let n = hierarchy.num_subclasses();
    if subclass_confusion.len() != n || subclass_confusion.iter().any(|r| r.len() != n) {
        return Err(Error::shape(format!(
            "subclass confusion must be {n}x{n} for this hierarchy"
        )));
    }
    Ok((0..hierarchy.num_classes())
        .map(|c| {
            let range = hierarchy.subclass_range(c);
            (range.len() >= 2).then(|| {
                subclass_confusion[range.clone()]
                    .iter()
                    .map(|row| row[range.clone()].to_vec())
                    .collect()
            })
        })
        .collect())
}

/// Fitted accuracies behind a report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParams {
    /// Sample-weighted mean diagonal of the class confusion.
    pub class_accuracy: f64,
    /// Per-class diagonal of the row-normalized class confusion (P_H0, P_H1 for detection).
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Per class, fitted subclass accuracy (`None` for single-subclass classes).
    pub subclass_accuracy: Vec<Option<f64>>,
    /// Fitted accuracies below chance, where the closed form is not a capacity.
    pub below_chance: Vec<String>,
}

/// Blahut–Arimoto capacities of the raw empirical matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCapacities {
    pub class_capacity: Option<f64>,
    pub subclass_capacities: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitsRow {
    pub task: String,
    /// "theorem1" (Q-ary class term) or "theorem2" (binary asymmetric class term).
    pub bound: String,
    pub bits: BitsBreakdown,
    pub fitted: FittedParams,
    pub empirical: EmpiricalCapacities,
    pub class_counts: Vec<u64>,
    pub subclass_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitsReport {
    pub rows: Vec<BitsRow>,
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

impl BitsReport {
    /// `task,class_bits,subclass_bits,total_bits`; an absent subclass term is an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,class_bits,subclass_bits,total_bits\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.task,
                fmt6(r.bits.class_bits()),
                r.bits.subclass_bits().map(fmt6).unwrap_or_default(),
                fmt6(r.bits.total_bits())
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table for terminals; absent subclass terms print as `|`.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>16} {:>19} {:>16}\n",
            "Task", "Class label bits", "Subclass label bits", "Total label bits"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>16} {:>19} {:>16}\n",
                r.task,
                fmt6(r.bits.class_bits()),
                r.bits.subclass_bits().map(fmt6).unwrap_or_else(|| "|".into()),
                fmt6(r.bits.total_bits())
            ));
        }
        out
    }
}

fn empirical_capacity(counts: &[Vec<u64>]) -> Option<f64> {
    let ch = ChannelSpec::from_counts(counts).ok()?;
    blahut_arimoto(&ch, BA_TOL, BA_MAX_ITERS).ok().map(|r| r.capacity)
}

fn row_accuracy(counts: &[Vec<u64>]) -> Vec<Option<f64>> {
    counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let s: u64 = row.iter().sum();
            (s > 0).then(|| row[i] as f64 / s as f64)
        })
        .collect()
}

fn report_row(task: &TaskConfusions) -> Result<BitsRow> {
    let h = &task.hierarchy;
    let nc = h.num_classes();
    if task.class_confusion.len() != nc || task.class_confusion.iter().any(|r| r.len() != nc) {
        return Err(Error::shape(format!(
            "task {}: class confusion must be {nc}x{nc}",
            task.task
        )));
    }
    if task.subclass_confusions.len() != nc {
        return Err(Error::shape(format!(
            "task {}: {} subclass blocks for {nc} classes",
            task.task,
            task.subclass_confusions.len()
        )));
    }
    if task.subclass_counts.len() != h.num_subclasses() {
        return Err(Error::shape(format!(
            "task {}: {} subclass counts for {} subclasses",
            task.task,
            task.subclass_counts.len(),
            h.num_subclasses()
        )));
    }

    let class_accuracy = estimate_accuracy_params(&task.class_confusion)?;
    let per_class_accuracy = row_accuracy(&task.class_confusion);
    let mut below_chance = Vec::new();
    let mut subclass_accuracy = Vec::with_capacity(nc);
    for (c, block) in task.subclass_confusions.iter().enumerate() {
        let n_sub = h.subclasses_per_class()[c];
        match (n_sub, block) {
            (1, _) => subclass_accuracy.push(None),
            (n, Some(b)) => {
                if b.len() != n || b.iter().any(|r| r.len() != n) {
                    return Err(Error::shape(format!(
                        "task {}: subclass block of class {c} must be {n}x{n}",
                        task.task
                    )));
                }
                if b.iter().flatten().all(|&x| x == 0) {
                    below_chance.push(format!("class {c} has no within-class predictions; subclass accuracy set to 1/{n}"));
                    subclass_accuracy.push(Some(1.0 / n as f64));
                    continue;
                }
                let p = estimate_accuracy_params(b)?;
                if qsc_capacity_flagged(n, p)?.1 {
                    below_chance.push(format!("class {c} subclass accuracy {p:.6} < 1/{n}"));
                }
                subclass_accuracy.push(Some(p));
            }
            (_, None) => {
                return Err(Error::shape(format!(
                    "task {}: class {c} has {n_sub} subclasses but no subclass confusion",
                    task.task
                )))
            }
        }
    }
    if nc >= 2 && qsc_capacity_flagged(nc, class_accuracy)?.1 {
        below_chance.push(format!("class accuracy {class_accuracy:.6} < 1/{nc}"));
    }

    let class_counts: Vec<u64> = (0..nc)
        .map(|c| task.subclass_counts[h.subclass_range(c)].iter().sum())
        .collect();
    let p_sub: Vec<f64> = subclass_accuracy.iter().map(|p| p.unwrap_or(1.0)).collect();
    let multi: Vec<usize> = (0..nc).filter(|&c| h.subclasses_per_class()[c] > 1).collect();

    let (bound, bits) = if nc == 2 {
        let acc = |c: usize| {
            per_class_accuracy[c].ok_or_else(|| {
                Error::invalid(format!("task {}: class {c} has no training samples", task.task))
            })
        };
        // The closed form needs accuracies in (0, 1]; a class that is never
        // predicted correctly falls back to the same channel's numeric capacity.
        let mut class_term = |p_h0: f64, p_h1: f64| -> Result<f64> {
            if p_h0 > 0.0 && p_h1 > 0.0 {
                return bac_capacity(p_h0, p_h1);
            }
            below_chance.push(format!(
                "per-class accuracy {p_h0:.6}/{p_h1:.6}: class term from blahut-arimoto"
            ));
            let ch = ChannelSpec::binary_asymmetric(p_h0, p_h1)?;
            Ok(blahut_arimoto(&ch, BA_TOL, BA_MAX_ITERS)?.capacity)
        };
        match multi.as_slice() {
            [] => (
                "theorem2",
                BitsBreakdown::new(class_term(acc(1)?, acc(0)?)?, None)?,
            ),
            [alt] if acc(0)? == 0.0 || acc(1)? == 0.0 => {
                let class_bits = class_term(acc(1 - alt)?, acc(*alt)?)?;
                let sub = weighted_subclass_bits(h, &p_sub, &task.subclass_counts)?;
                ("theorem2", BitsBreakdown::new(class_bits, Some(sub))?)
            }
            [alt] => {
                let null = 1 - alt;
                let params = DetectionParams {
                    p_h0: acc(null)?,
                    p_h1: acc(*alt)?,
                    n_h0: class_counts[null],
                    n_h1: class_counts[*alt],
                    n_s: h.subclasses_per_class()[*alt],
                    p_s: p_sub[*alt],
                };
                ("theorem2", theorem2_bound(&params)?)
            }
            _ => {
                // Both hypotheses split: binary asymmetric class term, weighted
                // Q-ary subclass term over both classes.
                let class_bits = class_term(acc(1)?, acc(0)?)?;
                let sub = weighted_subclass_bits(h, &p_sub, &task.subclass_counts)?;
                ("theorem2", BitsBreakdown::new(class_bits, Some(sub))?)
            }
        }
    } else {
        let b = theorem1_bound(&HierarchyBitsParams {
            hierarchy: h.clone(),
            class_accuracy,
            subclass_accuracy: p_sub,
            subclass_counts: task.subclass_counts.clone(),
        })?;
        let b = if h.is_flat() {
            BitsBreakdown::new(b.class_bits(), None)?
        } else {
            b
        };
        ("theorem1", b)
    };

    Ok(BitsRow {
        task: task.task.clone(),
        bound: bound.to_string(),
        bits,
        fitted: FittedParams {
            class_accuracy,
            per_class_accuracy,
            subclass_accuracy,
            below_chance,
        },
        empirical: EmpiricalCapacities {
            class_capacity: empirical_capacity(&task.class_confusion),
            subclass_capacities: task
                .subclass_confusions
                .iter()
                .map(|b| b.as_deref().and_then(empirical_capacity))
                .collect(),
        },
        class_counts,
        subclass_counts: task.subclass_counts.clone(),
    })
}

/// One row per task: fitted accuracies, the matching bound, and the raw
/// empirical capacities for comparison.
pub fn label_bits_report(tasks: &[TaskConfusions]) -> Result<BitsReport> {
    Ok(BitsReport {
        rows: tasks.iter().map(report_row).collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::TaskPreset;
    use crate::info_bits::qsc_capacity;
    use approx::assert_abs_diff_eq;

    fn class_level() -> TaskConfusions {
        TaskConfusions::from_subclass_confusion(
            "ClassLevel",
            TaskPreset::ClassLevel.hierarchy(),
            vec![vec![80, 20], vec![10, 190]],
            &[vec![80, 20], vec![10, 190]],
        )
        .unwrap()
    }

    #[test]
    fn class_level_row_has_no_subclass_term() {
        let report = label_bits_report(&[class_level()]).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.bits.subclass_bits(), None);
        assert_eq!(row.bits.total_bits(), row.bits.class_bits());
        assert_abs_diff_eq!(row.bits.class_bits(), bac_capacity(0.95, 0.8).unwrap(), epsilon = 1e-15);
        assert!(report.to_csv().contains("ClassLevel,"));
        assert!(report.to_csv().lines().nth(1).unwrap().contains(",,"));
        assert!(report.to_table().contains('|'));
    }

    #[test]
    fn detection_row_matches_theorem2() {
        // SL21: class 0 (alternative) split in two; class 1 single.
        let sub = vec![vec![40, 10, 5], vec![8, 30, 2], vec![6, 4, 190]];
        let class = vec![vec![88, 7], vec![10, 190]];
        let t = TaskConfusions::from_subclass_confusion("SL21", TaskPreset::Sl21.hierarchy(), class, &sub)
            .unwrap();
        assert_eq!(t.subclass_counts, vec![55, 40, 200]);
        assert_eq!(t.subclass_confusions[0], Some(vec![vec![40, 10], vec![8, 30]]));
        let row = label_bits_report(&[t]).unwrap().rows.remove(0);
        let p_s = 70.0 / 88.0;
        let expected = theorem2_bound(&DetectionParams {
            p_h0: 190.0 / 200.0,
            p_h1: 88.0 / 95.0,
            n_h0: 200,
            n_h1: 95,
            n_s: 2,
            p_s,
        })
        .unwrap();
        assert_abs_diff_eq!(row.bits.class_bits(), expected.class_bits(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            row.bits.subclass_bits().unwrap(),
            expected.subclass_bits().unwrap(),
            epsilon = 1e-12
        );
        assert_eq!(row.bits.total_bits(), row.bits.class_bits() + row.bits.subclass_bits().unwrap());
        assert!(row.empirical.class_capacity.is_some());
    }

    #[test]
    fn multiclass_uses_theorem1() {
        let h = LabelHierarchy::new(vec![2, 1, 1]).unwrap();
        let sub = vec![
            vec![9, 1, 0, 0],
            vec![2, 8, 0, 0],
            vec![0, 0, 10, 0],
            vec![0, 0, 1, 9],
        ];
        let class = vec![vec![20, 0, 0], vec![0, 10, 0], vec![0, 1, 9]];
        let t = TaskConfusions::from_subclass_confusion("three", h, class, &sub).unwrap();
        let row = label_bits_report(&[t]).unwrap().rows.remove(0);
        assert_eq!(row.bound, "theorem1");
        assert_abs_diff_eq!(row.bits.class_bits(), qsc_capacity(3, 39.0 / 40.0).unwrap(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            row.bits.subclass_bits().unwrap(),
            0.5 * qsc_capacity(2, 0.85).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn better_teacher_gets_more_bits() {
        let make = |d: u64| {
            let off = 100 - d;
            let sub = vec![
                vec![d, off, 0, 0],
                vec![off, d, 0, 0],
                vec![0, 0, d, off],
                vec![0, 0, off, d],
            ];
            let class = vec![vec![d + 50, 150 - d], vec![150 - d, d + 50]];
            TaskConfusions::from_subclass_confusion("SL22", TaskPreset::Sl22.hierarchy(), class, &sub)
                .unwrap()
        };
        let mut prev = -1.0;
        for d in [60, 70, 80, 90, 100] {
            let total = label_bits_report(&[make(d)]).unwrap().rows[0].bits.total_bits();
            assert!(total >= prev);
            prev = total;
        }
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        let mut t = class_level();
        t.class_confusion = vec![vec![1, 2, 3]; 3];
        assert!(label_bits_report(&[t]).is_err());
        assert!(within_class_confusions(&[vec![1, 2]], &TaskPreset::Sl22.hierarchy()).is_err());
    }

    #[test]
    fn empty_within_class_block_counts_as_chance() {
        // Every class-0 sample is predicted as class 1.
        let sub = vec![vec![0, 0, 5, 5], vec![0, 0, 4, 6], vec![0, 0, 20, 0], vec![0, 0, 0, 20]];
        let class = vec![vec![0, 20], vec![0, 40]];
        let t = TaskConfusions::from_subclass_confusion("SL22", TaskPreset::Sl22.hierarchy(), class, &sub)
            .unwrap();
        let row = label_bits_report(&[t]).unwrap().rows.remove(0);
        assert_eq!(row.fitted.subclass_accuracy[0], Some(0.5));
        assert!(row.fitted.below_chance.iter().any(|n| n.contains("class 0")));
        assert_abs_diff_eq!(row.bits.class_bits(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(row.bits.subclass_bits().unwrap(), 2.0 / 3.0, epsilon = 1e-12);
    }
}
