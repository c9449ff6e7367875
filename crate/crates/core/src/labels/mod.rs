//! Survey ingestion and image-level group labels.
//!
//! Respondents rate each image on four 1–7 scales. Ratings are pooled per
//! image into average evaluation scores (AES) for all eligible respondents
//! and separately for the Democrat and Republican groups, then binned into
//! negative / neutral / positive categories.

mod aggregate;
mod export;
pub mod fixture;
mod gap;
mod ingest;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{aggregate_image_labels, category_counts, render_category_table};
pub use export::{export_labels, import_labels, labels_to_json, SCHEMA_VERSION};
pub use gap::{
    compute_group_gap, DensityEstimate, GapReport, GroupDistribution, Histogram, VariableGap,
};
pub use ingest::{ingest_path, ingest_responses, IngestOutcome, RowRejection};

pub const SCALE_MIN: f64 = 1.0;
pub const SCALE_MAX: f64 = 7.0;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("score {value} is outside the rating scale [1, 7]")]
    OutOfRange { value: f64 },
    #[error("survey source contains no data rows")]
    EmptyInput,
    #[error("survey source is missing required column `{0}`")]
    MissingColumn(String),
    #[error("no eligible respondents: every row was dropped or rejected")]
    NoEligibleRespondents,
    #[error("refusing to export an empty label set")]
    EmptyExport,
    #[error("label file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LabelError> = std::result::Result<T, E>;

/// Partisan self-identification of a respondent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    DemGroup,
    RepGroup,
    Other,
}

impl Party {
    /// Case-insensitive match on "democrat" / "republican"; anything else is `Other`.
    pub fn normalize(raw: &str) -> Self {
        let s = raw.trim();
        if s.eq_ignore_ascii_case("democrat") {
            Party::DemGroup
        } else if s.eq_ignore_ascii_case("republican") {
            Party::RepGroup
        } else {
            Party::Other
        }
    }
}

/// Respondent pool an AES is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    All,
    Dem,
    Rep,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::All, Group::Dem, Group::Rep];

    pub fn key(self) -> &'static str {
        match self {
            Group::All => "all",
            Group::Dem => "dem",
            Group::Rep => "rep",
        }
    }
}

/// The four survey scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Sentiment,
    SubjectOfHarm,
    ObjectOfHarm,
    Accuracy,
}

impl Variable {
    pub const ALL: [Variable; 4] = [
        Variable::Sentiment,
        Variable::SubjectOfHarm,
        Variable::ObjectOfHarm,
        Variable::Accuracy,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Variable::Sentiment => "sentiment",
            Variable::SubjectOfHarm => "subject_of_harm",
            Variable::ObjectOfHarm => "object_of_harm",
            Variable::Accuracy => "accuracy",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Variable::Sentiment => "Sentiment",
            Variable::SubjectOfHarm => "Subject of Harm",
            Variable::ObjectOfHarm => "Object of Harm",
            Variable::Accuracy => "Accuracy",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Variable {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variable::ALL
            .into_iter()
            .find(|v| v.key() == s)
            .ok_or_else(|| {
                format!("unknown variable `{s}` (expected sentiment, subject_of_harm, object_of_harm or accuracy)")
            })
    }
}

/// Sentiment class, ordered Negative < Neutral < Positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Negative,
    Neutral,
    Positive,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Negative, Category::Neutral, Category::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Category::ALL.get(i).copied()
    }

    pub fn key(self) -> &'static str {
        match self {
            Category::Negative => "negative",
            Category::Neutral => "neutral",
            Category::Positive => "positive",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Category::Negative => "Negative",
            Category::Neutral => "Neutral",
            Category::Positive => "Positive",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.key() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

pub fn check_scale(value: f64) -> Result<f64> {
    if (SCALE_MIN..=SCALE_MAX).contains(&value) {
        Ok(value)
    } else {
        Err(LabelError::OutOfRange { value })
    }
}

/// Maps an AES to its category: `<= 3` negative, `>= 5` positive, neutral between.
pub fn bin_aes(aes: f64) -> Result<Category> {
    let aes = check_scale(aes)?;
    Ok(if aes <= 3.0 {
        Category::Negative
    } else if aes >= 5.0 {
        Category::Positive
    } else {
        Category::Neutral
    })
}

/// One respondent's four ratings of one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratings {
    pub sentiment: f64,
    pub subject_of_harm: f64,
    pub object_of_harm: f64,
    pub accuracy: f64,
}

impl Ratings {
    pub fn get(&self, variable: Variable) -> f64 {
        match variable {
            Variable::Sentiment => self.sentiment,
            Variable::SubjectOfHarm => self.subject_of_harm,
            Variable::ObjectOfHarm => self.object_of_harm,
            Variable::Accuracy => self.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub respondent_id: String,
    pub party: Party,
    pub image_id: String,
    pub ratings: Ratings,
}

impl EvaluationRecord {
    /// Validates the record invariants: ratings on scale, non-empty image id.
    pub fn new(
        respondent_id: impl Into<String>,
        party: Party,
        image_id: impl Into<String>,
        ratings: Ratings,
    ) -> Result<Self> {
        let image_id = image_id.into();
        if image_id.trim().is_empty() {
            return Err(LabelError::Format("empty image_id".into()));
        }
        for v in Variable::ALL {
            check_scale(ratings.get(v))?;
        }
        Ok(Self {
            respondent_id: respondent_id.into(),
            party,
            image_id,
            ratings,
        })
    }
}

/// AES for one respondent pool together with its category and rater count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupLabel {
    pub aes: f64,
    pub category: Category,
    pub n_raters: usize,
}

impl GroupLabel {
    pub fn from_aes(aes: f64, n_raters: usize) -> Result<Self> {
        Ok(Self {
            aes,
            category: bin_aes(aes)?,
            n_raters,
        })
    }
}

/// Labels of one variable for each group; `None` when the group has no ratings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VariableLabels {
    pub all: Option<GroupLabel>,
    pub dem: Option<GroupLabel>,
    pub rep: Option<GroupLabel>,
}

impl VariableLabels {
    pub fn get(&self, group: Group) -> Option<&GroupLabel> {
        match group {
            Group::All => self.all.as_ref(),
            Group::Dem => self.dem.as_ref(),
            Group::Rep => self.rep.as_ref(),
        }
    }

    pub fn get_mut(&mut self, group: Group) -> &mut Option<GroupLabel> {
        match group {
            Group::All => &mut self.all,
            Group::Dem => &mut self.dem,
            Group::Rep => &mut self.rep,
        }
    }

    /// Dem/Rep pair when both groups rated the image.
    pub fn pair(&self) -> Option<(GroupLabel, GroupLabel)> {
        Some((self.dem?, self.rep?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLabelSet {
    pub image_id: String,
    variables: [VariableLabels; 4],
}

impl ImageLabelSet {
    pub fn new(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            variables: Default::default(),
        }
    }

    pub fn variable(&self, variable: Variable) -> &VariableLabels {
        &self.variables[variable.index()]
    }

    pub fn variable_mut(&mut self, variable: Variable) -> &mut VariableLabels {
        &mut self.variables[variable.index()]
    }

    pub fn label(&self, variable: Variable, group: Group) -> Option<&GroupLabel> {
        self.variable(variable).get(group)
    }
}
