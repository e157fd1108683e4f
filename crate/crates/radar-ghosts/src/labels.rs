//! Mapping from ground-truth annotations to training targets.
//!
//! Six model configurations arise from crossing the class granularity
//! (pedestrian/cyclist vs a single merged object class) with the label set
//! (real only, detailed multi-path, merged ghost class).

use serde::{Deserialize, Serialize};

use crate::types::{Annotation, Label, ObjectClass};

/// Object-class granularity of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Granularity {
    /// Separate pedestrian and cyclist classes.
    PedCycl,
    /// Both VRU classes merged into one object class.
    Merged,
}

/// Which ghost labels a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelSet {
    /// Real objects only.
    RealOnly,
    /// Real objects plus the three specific multi-path kinds.
    DetailedMp,
    /// Real objects plus one merged ghost class.
    GhostMerged,
}

/// One of the six model configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassConfig {
    pub granularity: Granularity,
    pub labelset: LabelSet,
}

/// Training target of a single point: a class index (0 = background) or
/// ignore (no loss, no evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Ignore,
}

impl Target {
    pub const BACKGROUND: Target = Target::Class(0);

    pub fn class(self) -> Option<usize> {
        match self {
            Target::Class(c) => Some(c),
            Target::Ignore => None,
        }
    }

    pub fn is_ignore(self) -> bool {
        self == Target::Ignore
    }
}

impl ClassConfig {
    /// All six model configurations, pedestrian/cyclist variants first.
    pub fn all_six() -> [ClassConfig; 6] {
        let mut out = [ClassConfig {
            granularity: Granularity::PedCycl,
            labelset: LabelSet::RealOnly,
        }; 6];
        let mut i = 0;
        for granularity in [Granularity::PedCycl, Granularity::Merged] {
            for labelset in [LabelSet::RealOnly, LabelSet::DetailedMp, LabelSet::GhostMerged] {
                out[i] = ClassConfig {
                    granularity,
                    labelset,
                };
                i += 1;
            }
        }
        out
    }

    /// Number of foreground classes.
    pub fn num_foreground(&self) -> usize {
        let granularity = match self.granularity {
            Granularity::PedCycl => 2,
            Granularity::Merged => 1,
        };
        let groups = match self.labelset {
            LabelSet::RealOnly => 1,
            LabelSet::DetailedMp => 4,
            LabelSet::GhostMerged => 2,
        };
        granularity * groups
    }

    /// Total number of classes including background (index 0).
    pub fn num_classes(&self) -> usize {
        1 + self.num_foreground()
    }

    /// Human-readable class names, index-aligned with the training targets.
    pub fn class_names(&self) -> Vec<String> {
        let bases: &[&str] = match self.granularity {
            Granularity::PedCycl => &["ped", "cycl"],
            Granularity::Merged => &["obj"],
        };
        let suffixes: &[&str] = match self.labelset {
            LabelSet::RealOnly => &[""],
            LabelSet::DetailedMp => &["", "-12", "-22", "-23"],
            LabelSet::GhostMerged => &["", "-ghost"],
        };
        let mut names = vec!["background".to_string()];
        for base in bases {
            for suffix in suffixes {
                names.push(format!("{base}{suffix}"));
            }
        }
        names
    }

    /// Short identifier used in file names and reports.
    pub fn tag(&self) -> String {
        let g = match self.granularity {
            Granularity::PedCycl => "pedcycl",
            Granularity::Merged => "merged",
        };
        let l = match self.labelset {
            LabelSet::RealOnly => "real",
            LabelSet::DetailedMp => "detailed",
            LabelSet::GhostMerged => "ghost",
        };
        format!("{g}-{l}")
    }

    fn base_index(&self, class: ObjectClass) -> Option<usize> {
        match self.granularity {
            Granularity::PedCycl => match class {
                ObjectClass::Pedestrian => Some(0),
                ObjectClass::Cyclist => Some(1),
                _ => None,
            },
            Granularity::Merged => {
                if class.is_vru() {
                    Some(0)
                } else {
                    None
                }
            }
        }
    }

    fn group_count(&self) -> usize {
        match self.labelset {
            LabelSet::RealOnly => 1,
            LabelSet::DetailedMp => 4,
            LabelSet::GhostMerged => 2,
        }
    }
}

/// Map an annotation to its training target under a model configuration.
///
/// Total: every annotation maps to a class index or to ignore. Sketchy
/// annotations, explicit ignore regions, OMP and indistinguishable bounces
/// always map to ignore; multi-path labels additionally map to ignore under
/// the real-only label set, keeping ghost points out of both the loss and
/// the background class. Non-VRU object classes are not trained and map to
/// ignore as well.
pub fn map_labels(ann: &Annotation, cfg: &ClassConfig) -> Target {
    if ann.sketchy {
        return Target::Ignore;
    }
    match ann.label {
        Label::Ignore | Label::Omp | Label::Indistinguishable => Target::Ignore,
        Label::Background => Target::BACKGROUND,
        Label::Real => match cfg.base_index(ann.object_class) {
            Some(base) => Target::Class(1 + base * cfg.group_count()),
            None => Target::Ignore,
        },
        Label::Mp12 | Label::Mp22 | Label::Mp23 => {
            let base = match cfg.base_index(ann.object_class) {
                Some(base) => base,
                None => return Target::Ignore,
            };
            let group = match cfg.labelset {
                LabelSet::RealOnly => return Target::Ignore,
                LabelSet::DetailedMp => match ann.label {
                    Label::Mp12 => 1,
                    Label::Mp22 => 2,
                    _ => 3,
                },
                LabelSet::GhostMerged => 1,
            };
            Target::Class(1 + base * cfg.group_count() + group)
        }
    }
}
