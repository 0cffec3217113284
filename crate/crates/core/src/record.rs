use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

/// Binary hatefulness label. Serialized as the integer `0` or `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    NotHateful,
    Hateful,
}

impl Label {
    pub fn from_bool(hateful: bool) -> Self {
        if hateful {
            Label::Hateful
        } else {
            Label::NotHateful
        }
    }

    pub fn is_hateful(self) -> bool {
        self == Label::Hateful
    }

    pub fn as_u8(self) -> u8 {
        self.into()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::NotHateful),
            1 => Ok(Label::Hateful),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        match label {
            Label::NotHateful => 0,
            Label::Hateful => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Augmented,
}

/// One image + caption + label sample.
///
/// Field names on the wire are the short manifest names (`img`, `text`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemeRecord {
    pub id: String,
    /// Path of the image bytes, relative to the manifest directory.
    #[serde(rename = "img")]
    pub image_ref: String,
    #[serde(rename = "text")]
    pub caption: String,
    pub label: Label,
    pub split: Split,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl MemeRecord {
    /// Checks the record-local invariants (everything except image resolution
    /// and id uniqueness, which need the surrounding manifest).
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |reason: &str| DatasetError::InvalidRecord {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        if self.caption.trim().is_empty() {
            return Err(invalid("caption is empty after trimming"));
        }
        if self.image_ref.is_empty() {
            return Err(invalid("empty image reference"));
        }
        match self.origin {
            Origin::Augmented => {
                if self.label != Label::NotHateful {
                    return Err(invalid("augmented records must carry label 0"));
                }
                if self.source_id.is_none() {
                    return Err(invalid("augmented records must name their source_id"));
                }
            }
            Origin::Original => {
                if self.source_id.is_some() {
                    return Err(invalid("original records cannot have a source_id"));
                }
            }
        }
        Ok(())
    }
}

/// Teacher-assigned hatefulness score on the 0-9 scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaledLabel {
    pub meme_id: String,
    pub score: u8,
    pub teacher_id: String,
    #[serde(default)]
    pub consistent: bool,
}

/// Image/caption hatefulness combination, image verdict first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Typology {
    HH,
    HN,
    NH,
    NN,
}

impl Typology {
    /// The only constructor: typology follows from the two modality verdicts.
    pub fn from_verdicts(background_hateful: bool, caption_hateful: bool) -> Self {
        match (background_hateful, caption_hateful) {
            (true, true) => Typology::HH,
            (true, false) => Typology::HN,
            (false, true) => Typology::NH,
            (false, false) => Typology::NN,
        }
    }
}

impl fmt::Display for Typology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Typology::HH => "HH",
            Typology::HN => "HN",
            Typology::NH => "NH",
            Typology::NN => "NN",
        };
        f.write_str(s)
    }
}
