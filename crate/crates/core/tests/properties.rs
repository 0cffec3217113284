use std::collections::HashMap;

use memeguard_core::{
    downsample_balance, filter_consistent, scale_to_binary, Label, Manifest, MemeRecord, Origin,
    ScaledLabel, Split,
};
use proptest::prelude::*;

fn arb_split() -> impl Strategy<Value = Split> {
    prop_oneof![Just(Split::Train), Just(Split::Val), Just(Split::Test)]
}

prop_compose! {
    fn arb_record(idx: usize)(
        caption in "[a-zA-Z0-9 «»'\"éü]{0,20}[a-z]",
        hateful: bool,
        split in arb_split(),
        augmented: bool,
        ext in "(png|jpg)",
    ) -> MemeRecord {
        let (origin, label, source_id) = if augmented {
            (Origin::Augmented, Label::NotHateful, Some(format!("src{idx}")))
        } else {
            (Origin::Original, Label::from_bool(hateful), None)
        };
        MemeRecord {
            id: format!("m{idx}"),
            image_ref: format!("images/{idx:064x}.{ext}"),
            caption,
            label,
            split,
            origin,
            source_id,
        }
    }
}

fn arb_manifest() -> impl Strategy<Value = Manifest> {
    (0usize..12)
        .prop_flat_map(|n| (0..n).map(arb_record).collect::<Vec<_>>())
        .prop_flat_map(|records| {
            let n = records.len();
            let scaled = if n == 0 {
                Just(Vec::new()).boxed()
            } else {
                prop::collection::vec((0..n, 0u8..=9, any::<bool>()), 0..8).boxed()
            };
            (Just(records), scaled)
        })
        .prop_map(|(records, scaled)| {
            let scaled_labels = scaled
                .into_iter()
                .map(|(i, score, consistent)| ScaledLabel {
                    meme_id: records[i].id.clone(),
                    score,
                    teacher_id: "teacher".into(),
                    consistent,
                })
                .collect();
            Manifest {
                records,
                scaled_labels,
                ..Manifest::default()
            }
        })
}

/// Reference filter written independently of the library path.
fn brute_force_filter(scaled: &[ScaledLabel], labels: &HashMap<String, u8>) -> Vec<String> {
    scaled
        .iter()
        .filter(|s| {
            let mapped = if s.score >= 5 { 1 } else { 0 };
            mapped == labels[&s.meme_id]
        })
        .map(|s| format!("{}:{}", s.meme_id, s.score))
        .collect()
}

proptest! {
    #[test]
    fn manifest_round_trip(manifest in arb_manifest()) {
        let text = manifest.to_jsonl();
        let parsed = Manifest::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &manifest);
        prop_assert_eq!(parsed.to_jsonl(), text);
    }

    #[test]
    fn filter_matches_reference_and_is_idempotent(manifest in arb_manifest()) {
        let labels: HashMap<String, u8> = manifest
            .records
            .iter()
            .map(|r| (r.id.clone(), r.label.as_u8()))
            .collect();
        let out = filter_consistent(&manifest.scaled_labels, &manifest).unwrap();
        let got: Vec<String> = out.kept.iter().map(|s| format!("{}:{}", s.meme_id, s.score)).collect();
        prop_assert_eq!(got, brute_force_filter(&manifest.scaled_labels, &labels));
        for e in &out.kept {
            prop_assert_eq!(scale_to_binary(e.score.into()).unwrap(), manifest.get(&e.meme_id).unwrap().label);
        }
        let again = filter_consistent(&out.kept, &manifest).unwrap();
        prop_assert_eq!(again.kept, out.kept);
    }

    #[test]
    fn downsample_balances_to_sub_multiset(labels in prop::collection::vec(any::<bool>(), 2..80), seed: u64) {
        let records: Vec<MemeRecord> = labels
            .iter()
            .enumerate()
            .map(|(i, hateful)| MemeRecord {
                id: format!("m{i}"),
                image_ref: format!("{i}.png"),
                caption: "c".into(),
                label: Label::from_bool(*hateful),
                split: Split::Train,
                origin: Origin::Original,
                source_id: None,
            })
            .collect();
        let n_pos = records.iter().filter(|r| r.label == Label::Hateful).count();
        let n_neg = records.len() - n_pos;
        prop_assume!(n_pos > 0 && n_neg > 0);
        let out = downsample_balance(&records, seed).unwrap();
        let out_pos = out.iter().filter(|r| r.label == Label::Hateful).count();
        prop_assert_eq!(out_pos, n_pos.min(n_neg));
        prop_assert_eq!(out.len() - out_pos, n_pos.min(n_neg));
        // Sub-multiset: every output record appears in the input, in input order.
        let mut it = records.iter();
        for r in &out {
            prop_assert!(it.any(|x| x == r));
        }
    }

    #[test]
    fn scale_mapping_is_monotone(a in 0i64..=9, b in 0i64..=9) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(scale_to_binary(lo).unwrap() <= scale_to_binary(hi).unwrap());
    }
}
