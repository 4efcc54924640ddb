use std::path::Path;

use log::info;
use rayon::ThreadPool;
use xaiseg_core::attribution::Method;
use xaiseg_core::formats::{fixed, write_table};
use xaiseg_core::metrics::PixelConfusion;
use xaiseg_core::postproc::{postprocess, PostprocConfig, Threshold};
use xaiseg_core::synth::{Sample, Split};
use xaiseg_core::Tensor;

use super::maps::Models;
use super::{par_map, timed};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::inputs;

/// Post-processing variants scored for every method: the configured simple
/// threshold and the GMM, each with and without morphology.
fn variants(base: &PostprocConfig) -> Vec<(&'static str, PostprocConfig)> {
    let simple = match base.threshold {
        Threshold::Simple { .. } => base.threshold,
        Threshold::Gmm => Threshold::default(),
    };
    let mut out = Vec::new();
    for (name, threshold) in [("simple", simple), ("gmm", Threshold::Gmm)] {
        for morphology in [true, false] {
            let cfg = PostprocConfig {
                threshold,
                morphology,
                ..base.clone()
            };
            out.push((name, cfg));
        }
    }
    out
}

/// Scores every configured method on the test-split positives against the
/// ground-truth masks. Metrics are micro-averaged over pixels.
pub fn benchmark(
    cfg: &RunConfig,
    pool: &ThreadPool,
    data: Option<&Path>,
    model: Option<&Path>,
    explainer: Option<&Path>,
    out: &Path,
) -> Result<()> {
    cfg.write_to(out, "config.toml")?;
    let mut methods = cfg.methods.clone();
    let have_explainer = explainer.is_some() || cfg.model.explainer.is_some();
    if have_explainer && !methods.iter().any(Method::needs_explainer) {
        methods.push(Method::Explainer);
    }
    let models = Models::load(cfg, data, model, explainer, &methods)?;
    let attributor = models.attributor();
    let ds = inputs::dataset(cfg, data)?;
    let test: Vec<&Sample> = ds.split(Split::Test).iter().filter(|s| s.label > 0).collect();
    if test.is_empty() {
        return Err(CliError::config("the test split has no positive patches"));
    }
    info!("benchmarking {} methods on {} positives", methods.len(), test.len());

    let variants = variants(cfg.postproc());
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    let mut per_image = Vec::new();
    for method in &methods {
        let tag = method.tag();
        let maps: Vec<(Tensor, f64)> = par_map(pool, &test, |s| {
            let (map, secs) = timed(|| attributor.attribute(method, &s.image, s.label));
            Ok((map?.values, secs))
        })?;
        let total: f64 = maps.iter().map(|m| m.1).sum();
        for (s, (_, secs)) in test.iter().zip(&maps) {
            per_image.push(vec![tag.clone(), s.id.clone(), fixed(*secs)]);
        }
        timing.push(vec![
            tag.clone(),
            test.len().to_string(),
            fixed(total / test.len() as f64),
            fixed(total),
        ]);
        for (name, pp) in &variants {
            let per: Vec<PixelConfusion> =
                par_map(pool, &test.iter().zip(&maps).collect::<Vec<_>>(), |(s, (m, _))| {
                    Ok(PixelConfusion::from_masks(postprocess(m, pp)?.final_mask(), &s.mask)?)
                })?;
            let c: PixelConfusion = per.into_iter().sum();
            let m = c.metrics();
            rows.push(vec![
                tag.clone(),
                name.to_string(),
                if pp.morphology { "on" } else { "off" }.to_string(),
                fixed(m.f1),
                fixed(m.precision),
                fixed(m.recall),
                fixed(m.iou),
                test.len().to_string(),
            ]);
        }
        info!("{tag}: {:.3} s per image", total / test.len() as f64);
    }
    let header = [
        "method",
        "threshold",
        "morphology",
        "f1",
        "precision",
        "recall",
        "iou",
        "n_images",
    ];
    write_table(&out.join("benchmark.csv"), &header, &rows)?;
    write_table(&out.join("timing.csv"), &["method", "image_id", "seconds"], &per_image)?;
    write_table(
        &out.join("timing_summary.csv"),
        &["method", "n_images", "seconds_per_image", "total_seconds"],
        &timing,
    )?;
    println!("{}", header.join("\t"));
    for r in &rows {
        println!("{}", r.join("\t"));
    }
    Ok(())
}
