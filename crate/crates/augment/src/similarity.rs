use std::collections::BTreeSet;

/// Default pass threshold for the offline description comparison.
pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.2;

/// Lowercased alphanumeric tokens.
pub fn token_set(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// |A ∩ B| / |A ∪ B| over [`token_set`]s. Two empty texts count as identical.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let a = token_set(a);
    let b = token_set(b);
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_disjoint() {
        assert_eq!(jaccard("a park bench at sunset", "a park bench at sunset"), 1.0);
        assert_eq!(jaccard("red car", "blue boat"), 0.0);
        assert_eq!(jaccard("", ""), 1.0);
        assert_eq!(jaccard("x", ""), 0.0);
    }

    #[test]
    fn punctuation_and_case_ignored() {
        assert_eq!(jaccard("A Red, car!", "a red car"), 1.0);
    }
}
