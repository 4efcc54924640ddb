use std::path::Path;

use log::{debug, info, warn};
use rayon::ThreadPool;
use xaiseg_core::attribution::{Attributor, Method};
use xaiseg_core::formats::{fixed, preview, write_attr, write_mask, write_pgm, write_table};
use xaiseg_core::metrics::{mae, mape, PixelConfusion};
use xaiseg_core::nn::{predict, Network};
use xaiseg_core::postproc::{postprocess as run_pipeline, STEP_NAMES};
use xaiseg_core::severity::severity_report;
use xaiseg_core::Tensor;

use super::{par_map, timed};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::inputs;

/// Classifier, explainer and baseline pool, loaded once per run.
pub(crate) struct Models {
    pub classifier: Network,
    pub explainer: Option<Network>,
    pub pool: Vec<Tensor>,
}

impl Models {
    pub fn load(
        cfg: &RunConfig,
        data: Option<&Path>,
        model: Option<&Path>,
        explainer: Option<&Path>,
        methods: &[Method],
    ) -> Result<Self> {
        let classifier = inputs::model(model, cfg.model.classifier.as_deref(), "classifier")?;
        let explainer = match explainer.or(cfg.model.explainer.as_deref()) {
            Some(p) => Some(inputs::model(Some(p), None, "explainer")?),
            None if methods.iter().any(Method::needs_explainer) => {
                return Err(CliError::config(
                    "the explainer method needs --explainer or model.explainer",
                ))
            }
            None => None,
        };
        let pool = if data.is_some() || cfg.data.manifest.is_some() {
            inputs::dataset(cfg, data)?.damage_free_pool()
        } else {
            Vec::new()
        };
        Ok(Self {
            classifier,
            explainer,
            pool,
        })
    }

    pub fn attributor(&self) -> Attributor<'_> {
        let a = Attributor::new(&self.classifier, &self.pool);
        match &self.explainer {
            Some(e) => a.with_explainer(e),
            None => a,
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn attribute(
    cfg: &RunConfig,
    pool: &ThreadPool,
    data: Option<&Path>,
    model: Option<&Path>,
    method_tag: Option<&str>,
    explainer: Option<&Path>,
    images: &Path,
    out: &Path,
) -> Result<()> {
    cfg.write_to(out, "config.toml")?;
    let method = inputs::method(method_tag, cfg)?;
    let models = Models::load(cfg, data, model, explainer, std::slice::from_ref(&method))?;
    let attributor = models.attributor();
    let items = inputs::images(images)?;
    let results = par_map(pool, &items, |(id, x)| {
        let class = predict(&models.classifier, x)?;
        if class == 0 {
            return Ok((class, None));
        }
        let (map, secs) = timed(|| attributor.attribute(&method, x, class));
        let map = map?;
        write_attr(&out.join(format!("{id}.attr")), &map.values)?;
        write_pgm(&out.join(format!("{id}.pgm")), &preview(&map.values)?)?;
        Ok((class, Some(secs)))
    })?;
    let mut index = Vec::new();
    let mut timing = Vec::new();
    for ((id, _), (class, secs)) in items.iter().zip(&results) {
        match secs {
            Some(s) => {
                index.push(vec![id.clone(), class.to_string(), format!("{id}.attr")]);
                timing.push(vec![id.clone(), method.tag(), fixed(*s)]);
            }
            None => {
                debug!("{id}: predicted negative, skipped");
                index.push(vec![id.clone(), class.to_string(), String::new()]);
            }
        }
    }
    write_table(
        &out.join("attributions.csv"),
        &["id", "predicted_class", "attr"],
        &index,
    )?;
    write_table(&out.join("timing.csv"), &["id", "method", "seconds"], &timing)?;
    info!(
        "{} of {} images attributed with {}",
        timing.len(),
        items.len(),
        method.tag()
    );
    Ok(())
}

fn metric_cells(c: &PixelConfusion) -> Vec<String> {
    let m = c.metrics();
    vec![fixed(m.f1), fixed(m.precision), fixed(m.recall), fixed(m.iou)]
}

pub fn postprocess(cfg: &RunConfig, pool: &ThreadPool, attrs: &Path, gt: Option<&Path>, out: &Path) -> Result<()> {
    cfg.write_to(out, "config.toml")?;
    let maps = inputs::attrs(attrs)?;
    let truth = gt.map(inputs::masks).transpose()?;
    let outputs = par_map(pool, &maps, |(id, map)| {
        let o = run_pipeline(map, cfg.postproc())?;
        write_mask(&out.join(format!("{id}.pgm")), o.final_mask())?;
        Ok(o)
    })?;
    let Some(truth) = truth else {
        return Ok(());
    };
    let mut per_step = [PixelConfusion::default(); 4];
    let mut matched = 0;
    for ((id, _), o) in maps.iter().zip(&outputs) {
        let Some(g) = truth.get(id) else {
            warn!("{id}: no ground-truth mask");
            continue;
        };
        matched += 1;
        for (acc, step) in per_step.iter_mut().zip(&o.steps) {
            *acc += PixelConfusion::from_masks(step, g)?;
        }
    }
    let rows: Vec<Vec<String>> = per_step
        .iter()
        .enumerate()
        .map(|(i, c)| [vec![i.to_string(), STEP_NAMES[i].to_string()], metric_cells(c)].concat())
        .collect();
    write_table(
        &out.join("steps.csv"),
        &["step", "name", "f1", "precision", "recall", "iou"],
        &rows,
    )?;
    info!("per-step metrics over {matched} masks");
    Ok(())
}

pub fn severity(cfg: &RunConfig, masks: &Path, calibration: Option<f64>, gt: Option<&Path>, out: &Path) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(c) = calibration {
        cfg.severity.mm_per_px = c;
        cfg.validate()?;
    }
    cfg.write_to(out, "config.toml")?;
    let mm = cfg.severity.mm_per_px;
    let pred = inputs::masks(masks)?;
    let truth = gt.map(inputs::masks).transpose()?;
    let mut header = vec!["image_id", "cpp", "area_px", "area_fraction", "width_px", "width_mm"];
    if truth.is_some() {
        header.extend(["gt_cpp", "gt_area_px", "gt_width_px"]);
    }
    let mut rows = Vec::new();
    let mut pairs: [(Vec<f64>, Vec<f64>); 3] = Default::default();
    for (id, m) in &pred {
        let r = severity_report(m, mm);
        let mut row = vec![
            id.clone(),
            r.cpp.to_string(),
            r.area_px.to_string(),
            fixed(r.area_fraction),
            fixed(r.max_width_px),
            fixed(r.max_width_mm),
        ];
        if let Some(t) = &truth {
            match t.get(id) {
                Some(g) => {
                    let gr = severity_report(g, mm);
                    row.extend([gr.cpp.to_string(), gr.area_px.to_string(), fixed(gr.max_width_px)]);
                    for (slot, (e, v)) in pairs.iter_mut().zip([
                        (r.cpp as f64, gr.cpp as f64),
                        (r.area_px as f64, gr.area_px as f64),
                        (r.max_width_px, gr.max_width_px),
                    ]) {
                        slot.0.push(e);
                        slot.1.push(v);
                    }
                }
                None => {
                    warn!("{id}: no ground-truth mask");
                    row.extend([String::new(), String::new(), String::new()]);
                }
            }
        }
        rows.push(row);
    }
    write_table(&out.join("severity.csv"), &header, &rows)?;
    if truth.is_some() {
        let mut err_rows = Vec::new();
        for (name, (est, tru)) in ["cpp", "area_px", "width_px"].iter().zip(&pairs) {
            if est.is_empty() {
                continue;
            }
            let (pct, skipped) = match mape(est, tru) {
                Ok((p, s)) => (fixed(p), s),
                Err(_) => (String::new(), est.len()),
            };
            err_rows.push(vec![name.to_string(), fixed(mae(est, tru)?), pct, skipped.to_string()]);
        }
        write_table(
            &out.join("severity_errors.csv"),
            &["quantity", "mae", "mape", "mape_skipped"],
            &err_rows,
        )?;
    }
    Ok(())
}
