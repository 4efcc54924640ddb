use std::path::Path;

use log::info;
use xaiseg_core::formats::{fixed, write_table};
use xaiseg_core::growth::{
    evaluate_growth, gen_trajectories, write_trajectories, GrowthSummary, LinearFit, MaskSource, TrajectoryMetrics,
};
use xaiseg_core::synth::{Sample, Split};

use super::maps::Models;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::inputs;

fn summary_row(s: &GrowthSummary) -> Vec<String> {
    vec![
        s.method.clone(),
        fixed(s.avg_r_area),
        fixed(s.mape_area),
        fixed(s.avg_r_width),
        fixed(s.mape_width),
        s.n_retained.to_string(),
    ]
}

fn slopes(f: Option<&(LinearFit, LinearFit)>) -> [String; 3] {
    match f {
        Some((t, e)) => [fixed(t.slope), fixed(e.slope), fixed(e.r)],
        None => Default::default(),
    }
}

fn trajectory_rows(source: &str, metrics: &[TrajectoryMetrics]) -> Vec<Vec<String>> {
    metrics
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let [ta, ea, ra] = slopes(m.area.as_ref());
            let [tw, ew, rw] = slopes(m.width.as_ref());
            vec![
                source.to_string(),
                i.to_string(),
                m.source_id.clone(),
                m.steps.len().to_string(),
                m.retained.to_string(),
                ta,
                ea,
                ra,
                tw,
                ew,
                rw,
            ]
        })
        .collect()
}

/// Synthetic growth study: oracle masks first, then the chosen method on
/// the steps the classifier calls positive.
pub fn growth(
    cfg: &RunConfig,
    data: Option<&Path>,
    model: Option<&Path>,
    method_tag: Option<&str>,
    explainer: Option<&Path>,
    n: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(n) = n {
        cfg.growth.n = n;
        cfg.validate()?;
    }
    cfg.write_to(out, "config.toml")?;
    let method = inputs::method(method_tag, &cfg)?;
    let models = Models::load(&cfg, data, model, explainer, std::slice::from_ref(&method))?;
    let ds = inputs::dataset(&cfg, data)?;
    let clean: Vec<Sample> = ds.split(Split::Test).iter().filter(|s| s.label == 0).cloned().collect();
    if clean.is_empty() {
        return Err(CliError::config(
            "the test split has no damage-free patches to grow cracks on",
        ));
    }
    let trajs = gen_trajectories(
        &clean,
        cfg.growth.n,
        &cfg.growth.crack,
        cfg.growth_params(),
        cfg.growth.seed,
    )?;
    write_trajectories(&out.join("trajectories"), &trajs)?;
    info!("{} trajectories written", trajs.len());

    let (oracle, oracle_metrics) = evaluate_growth("oracle", &trajs, None, &MaskSource::Oracle)?;
    let attributor = models.attributor();
    let source = MaskSource::Xai {
        attributor: &attributor,
        method: &method,
        postproc: cfg.postproc(),
    };
    let tag = method.tag();
    let (est, est_metrics) = evaluate_growth(&tag, &trajs, Some(&models.classifier), &source)?;

    let header = [
        "method",
        "avg_r_area",
        "mape_area",
        "avg_r_width",
        "mape_width",
        "n_retained",
    ];
    let rows = vec![summary_row(&oracle), summary_row(&est)];
    write_table(&out.join("growth_summary.csv"), &header, &rows)?;
    let mut per = trajectory_rows("oracle", &oracle_metrics);
    per.extend(trajectory_rows(&tag, &est_metrics));
    write_table(
        &out.join("growth_trajectories.csv"),
        &[
            "method",
            "trajectory",
            "source_id",
            "steps_used",
            "retained",
            "true_area_slope",
            "est_area_slope",
            "est_area_r",
            "true_width_slope",
            "est_width_slope",
            "est_width_r",
        ],
        &per,
    )?;
    println!("{}", header.join("\t"));
    for r in &rows {
        println!("{}", r.join("\t"));
    }
    Ok(())
}
