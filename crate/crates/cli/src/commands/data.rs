use std::path::Path;

use log::info;
use xaiseg_core::explainer::{explainer_network, train_explainer as fit_explainer};
use xaiseg_core::formats::{fixed, write_csv, write_table};
use xaiseg_core::metrics::cls_metrics;
use xaiseg_core::nn::{mini_vgg, predict, save_model, train_classifier, Network};
use xaiseg_core::synth::{gen_dataset, write_dataset, Sample, Split};

use crate::config::RunConfig;
use crate::error::Result;
use crate::inputs::{self, stem};

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.write_to(out, "config.toml")?;
    let data = gen_dataset(&cfg.synth)?;
    let manifest = write_dataset(out, &data)?;
    info!("wrote {} samples, manifest {}", data.len(), manifest.display());
    Ok(())
}

fn side_file(model: &Path, suffix: &str) -> std::path::PathBuf {
    inputs::parent_dir(model).join(format!("{}_{suffix}", stem(model)))
}

fn write_side_config(cfg: &RunConfig, model: &Path) -> Result<()> {
    cfg.write_to(&inputs::parent_dir(model), &format!("{}_config.toml", stem(model)))?;
    Ok(())
}

/// Balanced accuracy, TPR and TNR per split, as table rows.
fn classification_rows(net: &Network, splits: &[(&str, &[Sample])]) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for (name, samples) in splits {
        let preds = samples
            .iter()
            .map(|s| predict(net, &s.image))
            .collect::<Result<Vec<_>, _>>()?;
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        let m = cls_metrics(&preds, &labels)?;
        let cell = |v: Option<f64>| v.map(fixed).unwrap_or_default();
        rows.push(vec![
            name.to_string(),
            cell(m.balanced_accuracy),
            cell(m.tpr),
            cell(m.tnr),
        ]);
    }
    Ok(rows)
}

pub fn train(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> Result<()> {
    write_side_config(cfg, out)?;
    let ds = inputs::dataset(cfg, data)?;
    let shape = ds.train.first().map(|s| s.image.shape().to_vec()).unwrap_or_default();
    let net = mini_vgg(&shape, 2, cfg.train.seed)?;
    let (net, history) = train_classifier(net, &ds.train, &ds.val, &cfg.train)?;
    save_model(&net, out)?;
    write_csv(&side_file(out, "log.csv"), &history.epochs)?;
    let rows = classification_rows(
        &net,
        &[
            ("train", ds.split(Split::Train)),
            ("val", ds.split(Split::Val)),
            ("test", ds.split(Split::Test)),
        ],
    )?;
    let header = ["split", "balanced_accuracy", "tpr", "tnr"];
    write_table(&side_file(out, "metrics.csv"), &header, &rows)?;
    println!("best epoch {} of {}", history.best_epoch, history.epochs.len());
    println!("{:<6} {:>18} {:>9} {:>9}", header[0], header[1], header[2], header[3]);
    for r in &rows {
        println!("{:<6} {:>18} {:>9} {:>9}", r[0], r[1], r[2], r[3]);
    }
    Ok(())
}

pub fn train_explainer(cfg: &RunConfig, data: Option<&Path>, model: Option<&Path>, out: &Path) -> Result<()> {
    write_side_config(cfg, out)?;
    let f = inputs::model(model, cfg.model.classifier.as_deref(), "classifier")?;
    let ds = inputs::dataset(cfg, data)?;
    let k = f.num_outputs().saturating_sub(1);
    let e = explainer_network(f.input_shape(), k, cfg.explainer.train.seed)?;
    let (e, log) = fit_explainer(e, &f, &ds.train, &cfg.explainer.weights, &cfg.explainer.train)?;
    save_model(&e, out)?;
    write_csv(&side_file(out, "log.csv"), &log)?;
    if let Some(last) = log.last() {
        println!(
            "epoch {}: total {:.4} (L_C {:.4}, L_NC {:.4}, L_A {:.4}, L_TV {:.4})",
            last.epoch, last.total, last.l_c, last.l_nc, last.l_a, last.l_tv
        );
    }
    Ok(())
}
