//! Class/subclass label hierarchies.
//!
//! Global subclass indices are assigned class-major: all subclasses of class 0
//! come first, then those of class 1, and so on. Aggregating subclass
//! probabilities into class probabilities is therefore a sum over a
//! contiguous index range.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which label set a model is trained on (and therefore its output width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelLevel {
    Class,
    Subclass,
}

impl fmt::Display for LabelLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelLevel::Class => "class",
            LabelLevel::Subclass => "subclass",
        })
    }
}

impl FromStr for LabelLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "class" => Ok(LabelLevel::Class),
            "subclass" => Ok(LabelLevel::Subclass),
            other => Err(Error::invalid(format!("unknown label level '{other}'"))),
        }
    }
}

/// Number of classes, subclasses per class and the subclass→class map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HierarchyRepr", into = "HierarchyRepr")]
pub struct LabelHierarchy {
    subclasses_per_class: Vec<usize>,
    // offsets[c]..offsets[c + 1] is the global index range of class c.
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct HierarchyRepr {
    subclasses_per_class: Vec<usize>,
}

impl TryFrom<HierarchyRepr> for LabelHierarchy {
    type Error = Error;

    fn try_from(repr: HierarchyRepr) -> Result<Self> {
        LabelHierarchy::new(repr.subclasses_per_class)
    }
}

impl From<LabelHierarchy> for HierarchyRepr {
    fn from(h: LabelHierarchy) -> Self {
        HierarchyRepr {
            subclasses_per_class: h.subclasses_per_class,
        }
    }
}

impl LabelHierarchy {
    pub fn new(subclasses_per_class: Vec<usize>) -> Result<Self> {
        if subclasses_per_class.is_empty() {
            return Err(Error::invalid("hierarchy needs at least one class"));
        }
        if let Some(c) = subclasses_per_class.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("class {c} has no subclasses")));
        }
        let mut offsets = Vec::with_capacity(subclasses_per_class.len() + 1);
        offsets.push(0);
        for &n in &subclasses_per_class {
            offsets.push(offsets.last().unwrap() + n);
        }
        Ok(Self {
            subclasses_per_class,
            offsets,
        })
    }

    /// One subclass per class: subclass labels coincide with class labels.
    pub fn flat(num_classes: usize) -> Result<Self> {
        Self::new(vec![1; num_classes])
    }

    pub fn num_classes(&self) -> usize {
        self.subclasses_per_class.len()
    }

    pub fn num_subclasses(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn subclasses_per_class(&self) -> &[usize] {
        &self.subclasses_per_class
    }

    /// Global subclass indices belonging to `class`.
    pub fn subclass_range(&self, class: usize) -> Range<usize> {
        self.offsets[class]..self.offsets[class + 1]
    }

    /// Class of a global subclass index, or `None` when out of range.
    pub fn class_of(&self, subclass: usize) -> Option<usize> {
        if subclass >= self.num_subclasses() {
            return None;
        }
        // offsets is sorted; find the last offset <= subclass.
        Some(self.offsets.partition_point(|&o| o <= subclass) - 1)
    }

    /// The full subclass→class map, indexed by global subclass.
    pub fn subclass_to_class(&self) -> Vec<usize> {
        (0..self.num_classes())
            .flat_map(|c| std::iter::repeat_n(c, self.subclasses_per_class[c]))
            .collect()
    }

    pub fn is_flat(&self) -> bool {
        self.subclasses_per_class.iter().all(|&n| n == 1)
    }

    /// Output width of a model trained at `level`.
    pub fn width(&self, level: LabelLevel) -> usize {
        match level {
            LabelLevel::Class => self.num_classes(),
            LabelLevel::Subclass => self.num_subclasses(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("hierarchy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// The binary tasks built from difficulty-based subclasses.
///
/// Class 0 is the minority, lesion-like class (the SSA role); class 1 the
/// majority class (the HP role).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskPreset {
    /// Class labels only.
    ClassLevel,
    /// Class 0 split into easy/hard subclasses; class 1 unsplit.
    Sl21,
    /// Both classes split into easy/hard subclasses.
    Sl22,
    /// Class 0 unsplit; class 1 split into easy/hard subclasses.
    Sl12,
}

impl TaskPreset {
    pub const ALL: [TaskPreset; 4] = [
        TaskPreset::ClassLevel,
        TaskPreset::Sl21,
        TaskPreset::Sl22,
        TaskPreset::Sl12,
    ];

    pub fn hierarchy(self) -> LabelHierarchy {
        let counts = match self {
            TaskPreset::ClassLevel => vec![1, 1],
            TaskPreset::Sl21 => vec![2, 1],
            TaskPreset::Sl22 => vec![2, 2],
            TaskPreset::Sl12 => vec![1, 2],
        };
        LabelHierarchy::new(counts).expect("presets are valid")
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskPreset::ClassLevel => "ClassLevel",
            TaskPreset::Sl21 => "SL21",
            TaskPreset::Sl22 => "SL22",
            TaskPreset::Sl12 => "SL12",
        }
    }
}

impl fmt::Display for TaskPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "classlevel" | "class" => Ok(TaskPreset::ClassLevel),
            "sl21" | "subclasslevel21" => Ok(TaskPreset::Sl21),
            "sl22" | "subclasslevel22" => Ok(TaskPreset::Sl22),
            "sl12" | "subclasslevel12" => Ok(TaskPreset::Sl12),
            _ => Err(Error::invalid(format!("unknown task preset '{s}'"))),
        }
    }
}

pub fn build_task_preset(preset: TaskPreset) -> LabelHierarchy {
    preset.hierarchy()
}
