//! Six-dimension expression taxonomy and category distributions.
//!
//! Labels are assigned by human coders; this module only validates and
//! aggregates them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Speed,
    Complexity,
    Flow,
    Binding,
    Dynamics,
    Focus,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::Speed,
        Dimension::Complexity,
        Dimension::Flow,
        Dimension::Binding,
        Dimension::Dynamics,
        Dimension::Focus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Speed => "speed",
            Self::Complexity => "complexity",
            Self::Flow => "flow",
            Self::Binding => "binding",
            Self::Dynamics => "dynamics",
            Self::Focus => "focus",
        }
    }

    /// Closed category set for the dimension.
    pub fn categories(self) -> &'static [&'static str] {
        match self {
            Self::Speed => &["slow", "normal", "fast"],
            Self::Complexity => &["single", "compound"],
            Self::Flow => &["continuous", "discrete", "combined"],
            Self::Binding => &["environment", "object", "person"],
            Self::Dynamics => &["dynamic", "static"],
            Self::Focus => &["focused", "unfocused"],
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A label as coders write it, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLabel {
    pub speed: String,
    pub complexity: String,
    pub flow: String,
    pub binding: String,
    pub dynamics: String,
    /// Required when `dynamics` is `dynamic`, e.g. "away from target".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    pub focus: String,
}

impl RawLabel {
    fn value(&self, dimension: Dimension) -> &str {
        match dimension {
            Dimension::Speed => &self.speed,
            Dimension::Complexity => &self.complexity,
            Dimension::Flow => &self.flow,
            Dimension::Binding => &self.binding,
            Dimension::Dynamics => &self.dynamics,
            Dimension::Focus => &self.focus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelIssue {
    pub dimension: Dimension,
    pub value: String,
    pub reason: &'static str,
}

impl fmt::Display for LabelIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: `{}` {}", self.dimension, self.value, self.reason)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("invalid label: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidLabel(Vec<LabelIssue>),
    #[error("distribution needs at least one label")]
    Empty,
}

pub fn validate_label(label: &RawLabel) -> Vec<LabelIssue> {
    let mut issues = Vec::new();
    for dimension in Dimension::ALL {
        let value = label.value(dimension);
        if !dimension.categories().contains(&value) {
            issues.push(LabelIssue {
                dimension,
                value: value.to_owned(),
                reason: "is not a category of this dimension",
            });
        }
    }
    match (label.dynamics.as_str(), label.direction.as_deref()) {
        ("dynamic", None) => issues.push(LabelIssue {
            dimension: Dimension::Dynamics,
            value: label.dynamics.clone(),
            reason: "requires a direction",
        }),
        ("dynamic", Some(d)) if d.trim().is_empty() => issues.push(LabelIssue {
            dimension: Dimension::Dynamics,
            value: label.dynamics.clone(),
            reason: "requires a non-empty direction",
        }),
        ("static", Some(_)) => issues.push(LabelIssue {
            dimension: Dimension::Dynamics,
            value: label.dynamics.clone(),
            reason: "cannot carry a direction",
        }),
        _ => {}
    }
    issues
}

macro_rules! closed_set {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$variant => $text),+ }
            }

            fn parse(s: &str) -> Option<Self> {
                match s { $($text => Some(Self::$variant),)+ _ => None }
            }
        }
    };
}

closed_set!(Speed { Slow => "slow", Normal => "normal", Fast => "fast" });
closed_set!(Complexity { Single => "single", Compound => "compound" });
closed_set!(Flow { Continuous => "continuous", Discrete => "discrete", Combined => "combined" });
closed_set!(Binding { Environment => "environment", Object => "object", Person => "person" });
closed_set!(Focus { Focused => "focused", Unfocused => "unfocused" });

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Dynamics {
    Dynamic { direction: String },
    Static,
}

/// A validated taxonomy label. Serializes in the [`RawLabel`] shape.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawLabel", into = "RawLabel")]
pub struct TaxonomyLabel {
    pub speed: Speed,
    pub complexity: Complexity,
    pub flow: Flow,
    pub binding: Binding,
    pub dynamics: Dynamics,
    pub focus: Focus,
}

impl TaxonomyLabel {
    pub fn category(&self, dimension: Dimension) -> &'static str {
        match dimension {
            Dimension::Speed => self.speed.as_str(),
            Dimension::Complexity => self.complexity.as_str(),
            Dimension::Flow => self.flow.as_str(),
            Dimension::Binding => self.binding.as_str(),
            Dimension::Dynamics => match self.dynamics {
                Dynamics::Dynamic { .. } => "dynamic",
                Dynamics::Static => "static",
            },
            Dimension::Focus => self.focus.as_str(),
        }
    }
}

impl TryFrom<RawLabel> for TaxonomyLabel {
    type Error = TaxonomyError;

    fn try_from(raw: RawLabel) -> Result<Self, Self::Error> {
        let issues = validate_label(&raw);
        if !issues.is_empty() {
            return Err(TaxonomyError::InvalidLabel(issues));
        }
        Ok(Self {
            speed: Speed::parse(&raw.speed).expect("validated"),
            complexity: Complexity::parse(&raw.complexity).expect("validated"),
            flow: Flow::parse(&raw.flow).expect("validated"),
            binding: Binding::parse(&raw.binding).expect("validated"),
            dynamics: match raw.direction {
                Some(direction) => Dynamics::Dynamic { direction },
                None => Dynamics::Static,
            },
            focus: Focus::parse(&raw.focus).expect("validated"),
        })
    }
}

impl From<TaxonomyLabel> for RawLabel {
    fn from(label: TaxonomyLabel) -> Self {
        let dynamics = label.category(Dimension::Dynamics).to_owned();
        Self {
            speed: label.speed.as_str().to_owned(),
            complexity: label.complexity.as_str().to_owned(),
            flow: label.flow.as_str().to_owned(),
            binding: label.binding.as_str().to_owned(),
            dynamics,
            direction: match label.dynamics {
                Dynamics::Dynamic { direction } => Some(direction),
                Dynamics::Static => None,
            },
            focus: label.focus.as_str().to_owned(),
        }
    }
}

pub type Distribution = BTreeMap<Dimension, BTreeMap<&'static str, f64>>;

/// Per-dimension share of each category observed in `labels`.
pub fn distribution(labels: &[TaxonomyLabel]) -> Result<Distribution, TaxonomyError> {
    if labels.is_empty() {
        return Err(TaxonomyError::Empty);
    }
    let total = labels.len() as f64;
    let mut out = Distribution::new();
    for dimension in Dimension::ALL {
        let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
        for label in labels {
            *counts.entry(label.category(dimension)).or_default() += 1;
        }
        out.insert(
            dimension,
            counts.into_iter().map(|(k, c)| (k, c as f64 / total)).collect(),
        );
    }
    Ok(out)
}
