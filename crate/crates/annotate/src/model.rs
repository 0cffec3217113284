use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LIKERT_MAX: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Agreement,
    PairQuality,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Agreement => "agreement",
            TaskKind::PairQuality => "pair_quality",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "agreement" => Ok(TaskKind::Agreement),
            "pair_quality" | "pair" => Ok(TaskKind::PairQuality),
            other => Err(format!("unknown task kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    /// Does the annotator agree with the teacher's 0-9 score for this meme?
    Agreement { meme_id: String, score_shown: u8 },
    /// Likert ratings of an augmented meme next to its source.
    PairQuality { original_id: String, augmented_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    #[serde(flatten)]
    pub spec: TaskSpec,
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self.spec {
            TaskSpec::Agreement { .. } => TaskKind::Agreement,
            TaskSpec::PairQuality { .. } => TaskKind::PairQuality,
        }
    }

    /// Meme ids whose images and captions the task shows.
    pub fn meme_ids(&self) -> Vec<&str> {
        match &self.spec {
            TaskSpec::Agreement { meme_id, .. } => vec![meme_id],
            TaskSpec::PairQuality {
                original_id,
                augmented_id,
            } => vec![original_id, augmented_id],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Agree,
    Disagree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratings {
    pub formatting: u8,
    pub background_alignment: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_alignment: Option<u8>,
    pub overall: u8,
}

/// A validated answer to one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Answer {
    Agreement {
        response: Verdict,
    },
    PairQuality {
        ratings: Ratings,
        caption_missing: bool,
    },
}

impl Answer {
    pub fn kind(&self) -> TaskKind {
        match self {
            Answer::Agreement { .. } => TaskKind::Agreement,
            Answer::PairQuality { .. } => TaskKind::PairQuality,
        }
    }

    /// Checks Likert ranges and the caption-missing rule.
    pub fn check(&self) -> Result<(), InvalidAnswer> {
        let Answer::PairQuality {
            ratings,
            caption_missing,
        } = self
        else {
            return Ok(());
        };
        let fields = [
            ("formatting", Some(ratings.formatting)),
            ("background_alignment", Some(ratings.background_alignment)),
            ("caption_alignment", ratings.caption_alignment),
            ("overall", Some(ratings.overall)),
        ];
        for (name, value) in fields {
            if let Some(v) = value {
                if v > LIKERT_MAX {
                    return Err(InvalidAnswer::OutOfRange { field: name, value: v.into() });
                }
            }
        }
        match (caption_missing, ratings.caption_alignment) {
            (true, Some(_)) => Err(InvalidAnswer::CaptionAlignmentWithMissingCaption),
            (false, None) => Err(InvalidAnswer::MissingField("caption_alignment")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvalidAnswer {
    #[error("{field} = {value} is outside 0-5")]
    OutOfRange { field: &'static str, value: i64 },
    #[error("caption_alignment must be omitted when caption_missing is set")]
    CaptionAlignmentWithMissingCaption,
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("{0} answer submitted for a {1} task")]
    WrongKind(TaskKind, TaskKind),
    #[error("empty annotator id")]
    NoAnnotator,
}

/// POST body. Agreement tasks send `response`; pair tasks send `ratings`
/// and optionally `caption_missing`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub annotator: String,
    #[serde(default)]
    pub response: Option<Verdict>,
    #[serde(default)]
    pub ratings: Option<RatingsInput>,
    #[serde(default)]
    pub caption_missing: bool,
}

/// Ratings as submitted; wide integers so out-of-range values reach
/// validation instead of failing to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingsInput {
    pub formatting: Option<i64>,
    pub background_alignment: Option<i64>,
    #[serde(default)]
    pub caption_alignment: Option<i64>,
    pub overall: Option<i64>,
}

fn likert(field: &'static str, value: Option<i64>) -> Result<Option<u8>, InvalidAnswer> {
    match value {
        None => Ok(None),
        Some(v) if (0..=i64::from(LIKERT_MAX)).contains(&v) => Ok(Some(v as u8)),
        Some(v) => Err(InvalidAnswer::OutOfRange { field, value: v }),
    }
}

impl Submission {
    pub fn into_answer(self, kind: TaskKind) -> Result<(String, Answer), InvalidAnswer> {
        if self.annotator.trim().is_empty() {
            return Err(InvalidAnswer::NoAnnotator);
        }
        let answer = match kind {
            TaskKind::Agreement => {
                if self.ratings.is_some() {
                    return Err(InvalidAnswer::WrongKind(TaskKind::PairQuality, kind));
                }
                Answer::Agreement {
                    response: self.response.ok_or(InvalidAnswer::MissingField("response"))?,
                }
            }
            TaskKind::PairQuality => {
                if self.response.is_some() {
                    return Err(InvalidAnswer::WrongKind(TaskKind::Agreement, kind));
                }
                let r = self.ratings.ok_or(InvalidAnswer::MissingField("ratings"))?;
                let required = |field, v| likert(field, v)?.ok_or(InvalidAnswer::MissingField(field));
                Answer::PairQuality {
                    ratings: Ratings {
                        formatting: required("formatting", r.formatting)?,
                        background_alignment: required("background_alignment", r.background_alignment)?,
                        caption_alignment: likert("caption_alignment", r.caption_alignment)?,
                        overall: required("overall", r.overall)?,
                    },
                    caption_missing: self.caption_missing,
                }
            }
        };
        answer.check()?;
        Ok((self.annotator, answer))
    }
}
