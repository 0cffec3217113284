#![allow(dead_code)]

use std::path::Path;

use memeguard_annotate::{init_store, sample_tasks, Store, StoreConfig, TaskKind};
use memeguard_core::{load_manifest, Label, Manifest, MemeRecord, Origin, ScaledLabel, Split};

/// Not a decodable image, but carries PNG magic so the store names it `.png`.
pub fn fake_png(seed: usize) -> Vec<u8> {
    let mut bytes = b"\x89PNG\r\n\x1a\n".to_vec();
    bytes.extend(format!("image {seed}").bytes());
    bytes
}

fn record(id: &str, source: Option<&str>) -> MemeRecord {
    MemeRecord {
        id: id.into(),
        image_ref: format!("img/{id}.png"),
        caption: format!("caption of {id}"),
        label: if source.is_some() { Label::NotHateful } else { Label::Hateful },
        split: Split::Test,
        origin: if source.is_some() { Origin::Augmented } else { Origin::Original },
        source_id: source.map(str::to_string),
    }
}

/// `n` hateful originals `m<i>`, each with an augmented `m<i>_aug` and a
/// consistent teacher score, written under `dir/source`.
pub fn source_manifest(dir: &Path, n: usize) -> std::path::PathBuf {
    let root = dir.join("source");
    std::fs::create_dir_all(root.join("img")).unwrap();
    let mut records = Vec::new();
    let mut scaled = Vec::new();
    for i in 0..n {
        let id = format!("m{i}");
        let aug = format!("m{i}_aug");
        records.push(record(&id, None));
        records.push(record(&aug, Some(&id)));
        std::fs::write(root.join(format!("img/{id}.png")), fake_png(2 * i)).unwrap();
        std::fs::write(root.join(format!("img/{aug}.png")), fake_png(2 * i + 1)).unwrap();
        scaled.push(ScaledLabel {
            meme_id: id,
            score: 5 + (i % 5) as u8,
            teacher_id: "teacher".into(),
            consistent: true,
        });
    }
    let mut m = Manifest::new(records);
    m.scaled_labels = scaled;
    let path = root.join("manifest.jsonl");
    m.save(&path).unwrap();
    path
}

/// Store with `n` tasks of each kind.
pub fn store(dir: &Path, n: usize, config: StoreConfig) -> Store {
    let manifest = load_manifest(&source_manifest(dir, n)).unwrap();
    let mut tasks = sample_tasks(&manifest.manifest, TaskKind::Agreement, n, 1).unwrap();
    tasks.extend(sample_tasks(&manifest.manifest, TaskKind::PairQuality, n, 1).unwrap());
    let store_dir = dir.join("store");
    init_store(&store_dir, &manifest, &tasks, &config).unwrap();
    Store::open(&store_dir).unwrap()
}
