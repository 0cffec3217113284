#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use memeguard_augment::{Agents, PipelineOptions, RenderMode, SimilarityMode};
use memeguard_core::{sha256_hex, ImageStore, Label, Manifest, MemeRecord, Origin, Split};
use memeguard_gateway::{mock_backend, AgentProfile, Gateway, MockScript, RequestParams, ResponseCache};

/// Scripted behaviour of one hateful meme.
#[derive(Debug, Clone, Copy)]
pub struct Spec {
    pub caption_hateful: bool,
    pub background_hateful: bool,
    pub rewrite_ok: bool,
    pub similar: bool,
}

impl Spec {
    pub fn typed(caption_hateful: bool, background_hateful: bool) -> Self {
        Spec {
            caption_hateful,
            background_hateful,
            rewrite_ok: true,
            similar: true,
        }
    }

    pub fn expect_verified(&self) -> bool {
        self.caption_hateful && !self.background_hateful && self.rewrite_ok && self.similar
    }
}

pub fn png(seed: u32) -> Vec<u8> {
    let img = image::RgbImage::from_fn(24, 16, |x, y| {
        image::Rgb([(seed * 37 % 251) as u8, (x * 7 + seed) as u8, (y * 11) as u8])
    });
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

pub struct Corpus {
    pub manifest: Manifest,
    pub describe: MockScript,
    pub judge: MockScript,
    pub rewrite: MockScript,
    pub similar: MockScript,
}

/// Builds manifest, images and mock scripts under `dir`. Hateful records get
/// ids `h<i>`; `extra_benign` non-hateful records are appended.
pub fn corpus(dir: &Path, specs: &[Spec], extra_benign: usize) -> Corpus {
    let store = ImageStore::open(dir).unwrap();
    let mut records = Vec::new();
    let mut describe = MockScript::with_default("a plain new scene");
    let judge = MockScript::with_default("No").rule("«HC»", "Yes").rule("«HB»", "Yes");
    let mut rewrite = MockScript::with_default("kind words for everyone");
    let similar = MockScript::with_default("Yes").rule("[dissimilar]", "No");
    for (i, spec) in specs.iter().enumerate() {
        let tag = format!("[h{i}]");
        let img = png(i as u32);
        let mut desc = format!("scene {tag}");
        if spec.background_hateful {
            desc.push_str(" «HB»");
        }
        if !spec.similar {
            desc.push_str(" [dissimilar]");
        }
        describe = describe.rule(format!("sha256:{}", sha256_hex(&img)), desc);
        let caption = if spec.caption_hateful {
            format!("caption {tag} «HC»")
        } else {
            format!("caption {tag}")
        };
        if !spec.rewrite_ok {
            rewrite = rewrite.rule(tag.clone(), format!("still «HC» {tag}"));
        }
        records.push(MemeRecord {
            id: format!("h{i}"),
            image_ref: store.put(&img, "png").unwrap(),
            caption,
            label: Label::Hateful,
            split: Split::Train,
            origin: Origin::Original,
            source_id: None,
        });
    }
    for j in 0..extra_benign {
        let img = png(10_000 + j as u32);
        records.push(MemeRecord {
            id: format!("b{j}"),
            image_ref: store.put(&img, "png").unwrap(),
            caption: format!("benign [b{j}]"),
            label: Label::NotHateful,
            split: Split::Train,
            origin: Origin::Original,
            source_id: None,
        });
    }
    let manifest = Manifest::new(records);
    manifest.save(&dir.join("manifest.jsonl")).unwrap();
    Corpus {
        manifest,
        describe,
        judge,
        rewrite,
        similar,
    }
}

pub fn gateway(c: &Corpus, cache: Option<&Path>) -> Gateway {
    let mut b = Gateway::builder();
    if let Some(dir) = cache {
        b = b.cache(ResponseCache::open(dir).unwrap());
    }
    b.route("describer", Arc::new(mock_backend(c.describe.clone())))
        .route("judge", Arc::new(mock_backend(c.judge.clone())))
        .route("rewriter", Arc::new(mock_backend(c.rewrite.clone())))
        .route("renderer", Arc::new(mock_backend(MockScript::with_default("no image today"))))
        .route("similar", Arc::new(mock_backend(c.similar.clone())))
        .build()
}

pub fn agents() -> Agents {
    let p = |m: &str| AgentProfile::new(m, RequestParams::default());
    Agents {
        describe: p("describer"),
        attribute: p("judge"),
        rewrite: p("rewriter"),
        render: Some(p("renderer")),
        similarity: Some(p("similar")),
    }
}

pub fn local_options() -> PipelineOptions {
    PipelineOptions {
        render: RenderMode::Local,
        similarity: SimilarityMode::Judge,
        workers: 4,
        ..PipelineOptions::default()
    }
}
