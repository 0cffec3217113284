//! Agent prompts for the caption-neutralization pipeline (`prompts/aug/`).
//!
//! Placeholders are substituted verbatim; no escaping is applied.

pub const CAPTION_SLOT: &str = "<TEXT CAPTION>";
pub const DESCRIPTION_SLOT: &str = "<IMAGE DESCRIPTION>";
pub const NEW_CAPTION_SLOT: &str = "<NEW NON-HATEFUL TEXT CAPTION>";
pub const NEW_DESCRIPTION_SLOT: &str = "<NEW IMAGE DESCRIPTION>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentPrompts {
    pub describe: String,
    pub judge_caption: String,
    pub judge_background: String,
    pub rewrite: String,
    pub render: String,
    pub similarity: String,
}

impl Default for AugmentPrompts {
    fn default() -> Self {
        AugmentPrompts {
            describe: include_str!("../prompts/aug/describe.txt").to_string(),
            judge_caption: include_str!("../prompts/aug/judge_caption.txt").to_string(),
            judge_background: include_str!("../prompts/aug/judge_background.txt").to_string(),
            rewrite: include_str!("../prompts/aug/rewrite.txt").to_string(),
            render: include_str!("../prompts/aug/render.txt").to_string(),
            similarity: include_str!("../prompts/aug/similarity.txt").to_string(),
        }
    }
}

impl AugmentPrompts {
    pub fn describe(&self) -> String {
        self.describe.trim_end().to_string()
    }

    pub fn judge_caption(&self, caption: &str) -> String {
        self.judge_caption.trim_end().replace(CAPTION_SLOT, caption)
    }

    pub fn judge_background(&self, description: &str) -> String {
        self.judge_background
            .trim_end()
            .replace(DESCRIPTION_SLOT, description)
    }

    pub fn rewrite(&self, caption: &str, description: &str) -> String {
        // Description first so a caption containing the description slot text
        // is not substituted twice.
        self.rewrite
            .trim_end()
            .replace(DESCRIPTION_SLOT, description)
            .replacen(CAPTION_SLOT, caption, 1)
    }

    pub fn render(&self, description: &str, new_caption: &str) -> String {
        self.render
            .trim_end()
            .replace(DESCRIPTION_SLOT, description)
            .replacen(NEW_CAPTION_SLOT, new_caption, 1)
    }

    pub fn similarity(&self, old_description: &str, new_description: &str) -> String {
        self.similarity
            .trim_end()
            .replace(DESCRIPTION_SLOT, old_description)
            .replacen(NEW_DESCRIPTION_SLOT, new_description, 1)
    }
}
