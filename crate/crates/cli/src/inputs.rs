//! Locating datasets, images, maps and masks on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use xaiseg_core::attribution::Method;
use xaiseg_core::formats::{read_attr, read_image, read_mask};
use xaiseg_core::nn::{load_model, Network};
use xaiseg_core::synth::{parse_manifest, read_dataset, Dataset};
use xaiseg_core::{BinaryMask, Tensor};

use crate::config::RunConfig;
use crate::error::{io_err, CliError, Result};

pub fn dataset(cfg: &RunConfig, flag: Option<&Path>) -> Result<Dataset> {
    let path = flag
        .or(cfg.data.manifest.as_deref())
        .ok_or_else(|| CliError::config("no dataset: pass --data or set data.manifest"))?;
    info!("loading dataset {}", path.display());
    Ok(read_dataset(path)?)
}

pub fn model(flag: Option<&Path>, configured: Option<&Path>, what: &str) -> Result<Network> {
    let path = flag
        .or(configured)
        .ok_or_else(|| CliError::config(format!("no {what} model: pass a path or set it under [model]")))?;
    Ok(load_model(path)?)
}

/// Resolves a method tag. The configured method is used when its tag
/// matches; otherwise the method starts from its defaults. A `+augsmooth`
/// suffix wraps the base method.
pub fn method(tag: Option<&str>, cfg: &RunConfig) -> Result<Method> {
    let Some(tag) = tag else {
        return Ok(cfg.method.0.clone());
    };
    if cfg.method.0.tag() == tag {
        return Ok(cfg.method.0.clone());
    }
    if let Some(m) = cfg.methods.iter().find(|m| m.tag() == tag) {
        return Ok(m.clone());
    }
    if let Some(base) = tag.strip_suffix("+augsmooth") {
        return Ok(Method::AugSmooth {
            base: Box::new(method(Some(base), cfg)?),
            augment: Default::default(),
        });
    }
    toml::from_str(&format!("name = {tag:?}")).map_err(|_| CliError::config(format!("unknown method {tag:?}")))
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn manifest_rows(path: &Path) -> Result<(PathBuf, Vec<xaiseg_core::synth::ManifestRow>)> {
    let rows = parse_manifest(&fs::read(path).map_err(io_err(path))?)?;
    Ok((path.parent().unwrap_or(Path::new(".")).to_path_buf(), rows))
}

/// `(id, image)` pairs from a directory of graymaps or a manifest.
pub fn images(path: &Path) -> Result<Vec<(String, Tensor)>> {
    if path.is_dir() {
        return files_with_extension(path, "pgm")?
            .into_iter()
            .map(|p| Ok((stem(&p), read_image(&p)?)))
            .collect();
    }
    let (base, rows) = manifest_rows(path)?;
    rows.iter()
        .map(|r| Ok((stem(Path::new(&r.path)), read_image(&base.join(&r.path))?)))
        .collect()
}

/// Masks keyed by id, from a directory of graymaps or a manifest.
pub fn masks(path: &Path) -> Result<BTreeMap<String, BinaryMask>> {
    if path.is_dir() {
        return files_with_extension(path, "pgm")?
            .into_iter()
            .map(|p| Ok((stem(&p), read_mask(&p)?)))
            .collect();
    }
    let (base, rows) = manifest_rows(path)?;
    let mut out = BTreeMap::new();
    for r in rows {
        let image = base.join(&r.path);
        let mask = if r.mask_path.is_empty() {
            let (_, h, w) = read_image(&image)?.chw()?;
            BinaryMask::new(h, w)
        } else {
            read_mask(&base.join(&r.mask_path))?
        };
        out.insert(stem(Path::new(&r.path)), mask);
    }
    Ok(out)
}

pub fn attrs(dir: &Path) -> Result<Vec<(String, Tensor)>> {
    files_with_extension(dir, "attr")?
        .into_iter()
        .map(|p| Ok((stem(&p), read_attr(&p)?)))
        .collect()
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Directory holding `file`, for outputs named after a file.
pub fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
