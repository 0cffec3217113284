//! Modular classification prompts.
//!
//! Four text components (`simple`, `category`, `binary`, `scale`) live as
//! plain-text assets under `prompts/opt/`, together with `compose.txt`, which
//! lists the component order for each (strategy, label format) cell. Prompts
//! are the byte concatenation of their components.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningType {
    UnimodalFinetune,
    MultimodalPrompt,
    MultimodalFinetune,
}

impl LearningType {
    pub const ALL: [LearningType; 3] = [
        LearningType::UnimodalFinetune,
        LearningType::MultimodalPrompt,
        LearningType::MultimodalFinetune,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearningType::UnimodalFinetune => "unimodal_finetune",
            LearningType::MultimodalPrompt => "multimodal_prompt",
            LearningType::MultimodalFinetune => "multimodal_finetune",
        }
    }

    /// Whether the model sees the image as well as the caption.
    pub fn is_multimodal(self) -> bool {
        !matches!(self, LearningType::UnimodalFinetune)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Category,
    Simple,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Category, Strategy::Simple];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Category => "category",
            Strategy::Simple => "simple",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFormat {
    Binary,
    Scale,
}

impl LabelFormat {
    pub const ALL: [LabelFormat; 2] = [LabelFormat::Binary, LabelFormat::Scale];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelFormat::Binary => "binary",
            LabelFormat::Scale => "scale",
        }
    }
}

macro_rules! impl_from_str {
    ($ty:ty) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| format!("unknown {} {s:?}", stringify!($ty)))
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

impl_from_str!(LearningType);
impl_from_str!(Strategy);
impl_from_str!(LabelFormat);

/// One cell of the learning x strategy x label-format design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptConfig {
    pub learning: LearningType,
    pub strategy: Strategy,
    pub label_format: LabelFormat,
}

impl PromptConfig {
    /// `learning/strategy/label_format`, also used for output file names.
    pub fn name(&self) -> String {
        format!("{}/{}/{}", self.learning, self.strategy, self.label_format)
    }

    pub fn file_stem(&self) -> String {
        format!("{}__{}__{}", self.learning, self.strategy, self.label_format)
    }
}

impl fmt::Display for PromptConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for PromptConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() != 3 {
            return Err(format!("expected learning/strategy/label_format, got {s:?}"));
        }
        Ok(PromptConfig {
            learning: parts[0].parse()?,
            strategy: parts[1].parse()?,
            label_format: parts[2].parse()?,
        })
    }
}

/// All twelve cells, ordered by (learning, strategy, label format).
pub fn enumerate_configs() -> Vec<PromptConfig> {
    let mut out = Vec::with_capacity(12);
    for learning in LearningType::ALL {
        for strategy in Strategy::ALL {
            for label_format in LabelFormat::ALL {
                out.push(PromptConfig {
                    learning,
                    strategy,
                    label_format,
                });
            }
        }
    }
    out
}

/// Selects cells by a comma-separated list of `learning/strategy/label` patterns,
/// where any part may be `*`. `all` selects everything.
pub fn filter_configs(filter: &str) -> Result<Vec<PromptConfig>, String> {
    let all = enumerate_configs();
    if filter.trim() == "all" {
        return Ok(all);
    }
    let mut selected = Vec::new();
    for pattern in filter.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let parts: Vec<&str> = pattern.split('/').collect();
        if parts.len() != 3 {
            return Err(format!("bad cell pattern {pattern:?}"));
        }
        let matched: Vec<PromptConfig> = all
            .iter()
            .filter(|c| {
                (parts[0] == "*" || parts[0] == c.learning.as_str())
                    && (parts[1] == "*" || parts[1] == c.strategy.as_str())
                    && (parts[2] == "*" || parts[2] == c.label_format.as_str())
            })
            .copied()
            .collect();
        if matched.is_empty() {
            return Err(format!("cell pattern {pattern:?} matches nothing"));
        }
        for c in matched {
            if !selected.contains(&c) {
                selected.push(c);
            }
        }
    }
    selected.sort();
    Ok(selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Simple,
    Category,
    Binary,
    Scale,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Simple,
        Component::Category,
        Component::Binary,
        Component::Scale,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Simple => "simple",
            Component::Category => "category",
            Component::Binary => "binary",
            Component::Scale => "scale",
        }
    }
}

impl_from_str!(Component);

/// A composed prompt and the components it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub components: Vec<Component>,
}

#[derive(Debug, Error)]
pub enum PromptAssetError {
    #[error("missing prompt component {0}")]
    MissingComponent(&'static str),
    #[error("composition manifest line {line}: {reason}")]
    BadComposition { line: usize, reason: String },
    #[error("composition manifest has no entry for {0}")]
    MissingCell(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const SIMPLE: &str = include_str!("../prompts/opt/simple.txt");
const CATEGORY: &str = include_str!("../prompts/opt/category.txt");
const BINARY: &str = include_str!("../prompts/opt/binary.txt");
const SCALE: &str = include_str!("../prompts/opt/scale.txt");
const COMPOSE: &str = include_str!("../prompts/opt/compose.txt");

/// Component texts plus the per-cell composition order.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    components: BTreeMap<Component, String>,
    composition: BTreeMap<(Strategy, LabelFormat), Vec<Component>>,
}

impl PromptLibrary {
    /// The assets compiled into the crate from `prompts/opt/`.
    pub fn builtin() -> Self {
        let components = BTreeMap::from([
            (Component::Simple, SIMPLE.to_string()),
            (Component::Category, CATEGORY.to_string()),
            (Component::Binary, BINARY.to_string()),
            (Component::Scale, SCALE.to_string()),
        ]);
        Self::from_parts(components, COMPOSE).expect("builtin prompt assets are consistent")
    }

    /// Loads `{simple,category,binary,scale}.txt` and `compose.txt` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptAssetError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| PromptAssetError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let mut components = BTreeMap::new();
        for c in Component::ALL {
            components.insert(c, read(&format!("{}.txt", c.as_str()))?);
        }
        Self::from_parts(components, &read("compose.txt")?)
    }

    fn from_parts(
        components: BTreeMap<Component, String>,
        compose: &str,
    ) -> Result<Self, PromptAssetError> {
        for c in Component::ALL {
            if !components.contains_key(&c) {
                return Err(PromptAssetError::MissingComponent(c.as_str()));
            }
        }
        let mut composition = BTreeMap::new();
        for (idx, line) in compose.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| PromptAssetError::BadComposition {
                line: idx + 1,
                reason,
            };
            let (cell, parts) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `strategy+label = components`".into()))?;
            let (strategy, label) = cell
                .trim()
                .split_once('+')
                .ok_or_else(|| bad(format!("bad cell {cell:?}")))?;
            let strategy: Strategy = strategy.trim().parse().map_err(bad)?;
            let label: LabelFormat = label.trim().parse().map_err(bad)?;
            let order = parts
                .split_whitespace()
                .map(|p| p.parse::<Component>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(bad)?;
            composition.insert((strategy, label), order);
        }
        for strategy in Strategy::ALL {
            for label in LabelFormat::ALL {
                if !composition.contains_key(&(strategy, label)) {
                    return Err(PromptAssetError::MissingCell(format!("{strategy}+{label}")));
                }
            }
        }
        Ok(PromptLibrary {
            components,
            composition,
        })
    }

    pub fn component(&self, component: Component) -> &str {
        &self.components[&component]
    }

    pub fn compose(&self, strategy: Strategy, label_format: LabelFormat) -> PromptText {
        let components = self.composition[&(strategy, label_format)].clone();
        let text = components
            .iter()
            .map(|c| self.components[c].as_str())
            .collect::<String>();
        PromptText { text, components }
    }
}

/// Composes the prompt for one (strategy, label format) cell from the
/// builtin assets.
pub fn compose_prompt(strategy: Strategy, label_format: LabelFormat) -> PromptText {
    PromptLibrary::builtin().compose(strategy, label_format)
}
