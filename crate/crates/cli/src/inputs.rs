use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use memeguard_core::manifest::resolve_image;
use memeguard_core::{load_manifest, LoadedManifest, Manifest, PromptConfig, PromptLibrary};
use memeguard_gateway::{Gateway, GatewayConfig};

/// Loads one manifest, or concatenates several (seen + unseen test sets).
/// Concatenated manifests carry absolute image paths.
pub fn load_inputs(paths: &[PathBuf]) -> Result<LoadedManifest> {
    match paths {
        [] => bail!("no manifest given"),
        [one] => load_manifest(one).with_context(|| format!("loading {}", one.display())),
        many => {
            let mut parts = Vec::with_capacity(many.len());
            for path in many {
                let loaded = load_manifest(path).with_context(|| format!("loading {}", path.display()))?;
                let base = std::path::absolute(&loaded.base_dir)?;
                let mut m = loaded.manifest;
                for r in &mut m.records {
                    r.image_ref = resolve_image(&base, &r.image_ref).display().to_string();
                }
                parts.push(m);
            }
            Ok(LoadedManifest {
                manifest: Manifest::concat(parts)?,
                base_dir: PathBuf::from("."),
            })
        }
    }
}

/// Loads a backend config and builds its gateway. Without a configured
/// cache directory, responses are cached under `default_cache`.
pub fn gateway(config_path: &Path, cache: Option<&Path>, default_cache: &Path) -> Result<(GatewayConfig, Gateway)> {
    let config = GatewayConfig::load(config_path).with_context(|| format!("loading {}", config_path.display()))?;
    let cache = cache
        .map(Path::to_path_buf)
        .or_else(|| config.cache_dir())
        .unwrap_or_else(|| default_cache.to_path_buf());
    let gateway = config.build_gateway(Some(&cache))?;
    Ok((config, gateway))
}

pub fn check(paths: &[PathBuf]) -> Result<()> {
    let loaded = load_inputs(paths)?;
    let m = &loaded.manifest;
    let mut counts: BTreeMap<(String, String, u8), usize> = BTreeMap::new();
    for r in &m.records {
        let origin = serde_json::to_value(r.origin)?.as_str().unwrap_or_default().to_string();
        *counts.entry((r.split.to_string(), origin, r.label.as_u8())).or_default() += 1;
    }
    println!("{} records, {} scaled labels", m.records.len(), m.scaled_labels.len());
    println!("{:<8} {:<10} {:>5} {:>7}", "split", "origin", "label", "count");
    for ((split, origin, label), n) in counts {
        println!("{split:<8} {origin:<10} {label:>5} {n:>7}");
    }
    Ok(())
}

pub fn show_prompt(cell: &str) -> Result<()> {
    let config: PromptConfig = cell.parse().map_err(anyhow::Error::msg)?;
    let prompt = PromptLibrary::builtin().compose(config.strategy, config.label_format);
    print!("{}", prompt.text);
    Ok(())
}
