use crate::error::DatasetError;
use crate::manifest::Manifest;
use crate::record::{Label, ScaledLabel};

/// Lowest score on the 0-9 scale that counts as hateful.
pub const HATEFUL_THRESHOLD: i64 = 5;

/// Maps a 0-9 hatefulness score onto the binary label: 5-9 hateful, 0-4 not.
pub fn scale_to_binary(score: i64) -> Result<Label, DatasetError> {
    if !(0..=9).contains(&score) {
        return Err(DatasetError::OutOfRange(score));
    }
    Ok(Label::from_bool(score >= HATEFUL_THRESHOLD))
}

/// Result of cross-checking teacher scores against binary ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterOutcome {
    /// Every input entry with its `consistent` flag set.
    pub annotated: Vec<ScaledLabel>,
    /// The entries whose mapped score agrees with the meme's label.
    pub kept: Vec<ScaledLabel>,
}

/// Keeps scaled labels whose thresholded score matches the binary label.
/// Disagreement in either direction drops the entry.
pub fn filter_consistent(
    scaled: &[ScaledLabel],
    manifest: &Manifest,
) -> Result<FilterOutcome, DatasetError> {
    let index = manifest.index();
    let mut annotated = Vec::with_capacity(scaled.len());
    let mut kept = Vec::new();
    for entry in scaled {
        let record = index
            .get(entry.meme_id.as_str())
            .ok_or_else(|| DatasetError::UnknownMeme(entry.meme_id.clone()))?;
        let mapped = scale_to_binary(entry.score.into())?;
        let mut entry = entry.clone();
        entry.consistent = mapped == record.label;
        if entry.consistent {
            kept.push(entry.clone());
        }
        annotated.push(entry);
    }
    Ok(FilterOutcome { annotated, kept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{MemeRecord, Origin, Split};

    fn manifest(labels: &[(&str, Label)]) -> Manifest {
        Manifest::new(
            labels
                .iter()
                .map(|(id, label)| MemeRecord {
                    id: id.to_string(),
                    image_ref: format!("{id}.png"),
                    caption: "c".into(),
                    label: *label,
                    split: Split::Train,
                    origin: Origin::Original,
                    source_id: None,
                })
                .collect(),
        )
    }

    fn scaled(id: &str, score: u8) -> ScaledLabel {
        ScaledLabel {
            meme_id: id.into(),
            score,
            teacher_id: "teacher".into(),
            consistent: false,
        }
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(scale_to_binary(0).unwrap(), Label::NotHateful);
        assert_eq!(scale_to_binary(4).unwrap(), Label::NotHateful);
        assert_eq!(scale_to_binary(5).unwrap(), Label::Hateful);
        assert_eq!(scale_to_binary(9).unwrap(), Label::Hateful);
        assert!(matches!(scale_to_binary(10), Err(DatasetError::OutOfRange(10))));
        assert!(matches!(scale_to_binary(-1), Err(DatasetError::OutOfRange(-1))));
    }

    #[test]
    fn filter_examples() {
        let m = manifest(&[
            ("a", Label::Hateful),
            ("b", Label::Hateful),
            ("c", Label::NotHateful),
        ]);
        let out = filter_consistent(&[scaled("a", 1), scaled("b", 7), scaled("c", 6)], &m).unwrap();
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].meme_id, "b");
        assert!(out.kept[0].consistent);
        let flags: Vec<bool> = out.annotated.iter().map(|s| s.consistent).collect();
        assert_eq!(flags, vec![false, true, false]);
    }

    #[test]
    fn unknown_meme() {
        let m = manifest(&[("a", Label::Hateful)]);
        assert!(matches!(
            filter_consistent(&[scaled("zz", 3)], &m),
            Err(DatasetError::UnknownMeme(id)) if id == "zz"
        ));
    }
}
