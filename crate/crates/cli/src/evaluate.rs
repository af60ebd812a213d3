use std::path::{Path, PathBuf};

use semfocus_core::losses::{charbonnier, edge_loss, fft_loss, total_restoration_loss, tv_loss, MaskSpec};
use semfocus_core::metrics::{calinski_harabasz, davies_bouldin, psnr, silhouette_cosine, ssim, EmbeddingSet};
use semfocus_core::Image;
use serde::{Deserialize, Serialize};

use crate::artifacts::{csv_writer, pair_sorted, write_json, EVALUATE_DIR};
use crate::config::{Method, PipelineConfig};
use crate::error::{CliError, Result};
use crate::io::load_image;
use crate::sets::plan_sets;

const LOSS_COLUMNS: [&str; 5] = ["charbonnier", "edge", "tv", "total", "fft"];

/// Shortest round-trip formatting; infinities print as `inf`.
pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}

/// Paths under the output directory are written relative to it, so output
/// trees do not depend on where they were written.
pub(crate) fn shown(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

/// Column means of one evaluated set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub set: String,
    pub pairs: usize,
    pub paired: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// Means in the order charbonnier, edge, tv, total, fft (empty when disabled).
    pub losses: Vec<f64>,
}

struct Row {
    psnr: Option<f64>,
    ssim: Option<f64>,
    losses: Vec<f64>,
}

fn score(config: &PipelineConfig, test: &Image, reference: &Image) -> Result<Row> {
    let m = &config.metrics;
    let mut losses = Vec::new();
    if m.losses {
        let w = &config.loss_weights;
        losses.push(charbonnier(test, reference, w.epsilon)?.value);
        losses.push(edge_loss(test, reference)?.value);
        losses.push(tv_loss(test)?.value);
        losses.push(total_restoration_loss(test, reference, w)?.value);
        let full = MaskSpec::full(test.height(), test.width(), 1)?;
        losses.push(fft_loss(test, reference, &full)?);
    }
    Ok(Row {
        psnr: if m.psnr { Some(psnr(test, reference, 1.0)?) } else { None },
        ssim: if m.ssim { Some(ssim(test, reference)?) } else { None },
        losses,
    })
}

fn load_pair(test: &Path, reference: &Path) -> std::result::Result<(Image, Image), String> {
    let t = load_image(test).map_err(|_| "missing".to_string())?;
    let r = load_image(reference).map_err(|_| "missing".to_string())?;
    if t.shape() != r.shape() {
        return Err("shape_mismatch".into());
    }
    Ok((t, r))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn evaluate_set(
    config: &PipelineConfig,
    name: &str,
    pairs: &[(PathBuf, PathBuf)],
) -> Result<SetSummary> {
    let out = &config.output_dir;
    let path = out.join(EVALUATE_DIR).join(format!("{name}.csv"));
    let mut w = csv_writer(&path)?;
    let mut header = vec!["index", "test", "reference", "status", "psnr", "ssim"];
    if config.metrics.losses {
        header.extend(LOSS_COLUMNS);
    }
    w.write_record(&header)?;
    let (mut psnrs, mut ssims) = (Vec::new(), Vec::new());
    let mut losses: Vec<Vec<f64>> = vec![Vec::new(); LOSS_COLUMNS.len()];
    let mut paired = 0;
    for (i, (t, r)) in pairs.iter().enumerate() {
        let mut rec = vec![i.to_string(), shown(out, t), shown(out, r)];
        let row = match load_pair(t, r) {
            Ok((ti, ri)) => Some(score(config, &ti, &ri)?),
            Err(status) => {
                rec.push(status);
                None
            }
        };
        if let Some(row) = row {
            paired += 1;
            rec.push("ok".into());
            rec.push(row.psnr.map(num).unwrap_or_default());
            rec.push(row.ssim.map(num).unwrap_or_default());
            psnrs.extend(row.psnr);
            ssims.extend(row.ssim);
            for (col, v) in losses.iter_mut().zip(&row.losses) {
                col.push(*v);
            }
            rec.extend(row.losses.iter().map(|&v| num(v)));
        } else {
            rec.resize(header.len(), String::new());
        }
        w.write_record(&rec)?;
    }
    let summary = SetSummary {
        set: name.to_string(),
        pairs: pairs.len(),
        paired,
        psnr: mean(&psnrs),
        ssim: mean(&ssims),
        losses: if config.metrics.losses {
            losses.iter().map(|c| mean(c).unwrap_or(f64::NAN)).collect()
        } else {
            Vec::new()
        },
    };
    let mut rec = vec![
        "mean".to_string(),
        String::new(),
        String::new(),
        format!("{paired}/{} paired", pairs.len()),
        summary.psnr.map(num).unwrap_or_default(),
        summary.ssim.map(num).unwrap_or_default(),
    ];
    rec.extend(summary.losses.iter().map(|&v| num(v)));
    w.write_record(&rec)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(summary)
}

/// Scores every test set against the reference set, pairing by sorted index.
/// Writes `evaluate/<set>.csv` per set and `evaluate/summary.csv`.
pub fn run_evaluate(config: &PipelineConfig, method: Option<Method>) -> Result<Vec<SetSummary>> {
    config.validate(false)?;
    let plan = plan_sets(config, method)?;
    let reference = plan
        .reference
        .ok_or_else(|| CliError::Config("evaluation needs a reference set".into()))?;
    let mut summaries = Vec::new();
    for set in &plan.tests {
        let pairs = pair_sorted(&set.files, &reference.files)?;
        summaries.push(evaluate_set(config, &set.name, &pairs)?);
    }
    let path = config.output_dir.join(EVALUATE_DIR).join("summary.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["set", "pairs", "paired", "psnr", "ssim"];
    if config.metrics.losses {
        header.extend(LOSS_COLUMNS);
    }
    w.write_record(&header)?;
    for s in &summaries {
        let mut rec = vec![
            s.set.clone(),
            s.pairs.to_string(),
            s.paired.to_string(),
            s.psnr.map(num).unwrap_or_default(),
            s.ssim.map(num).unwrap_or_default(),
        ];
        rec.extend(s.losses.iter().map(|&v| num(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    if let Some(emb) = &config.embeddings {
        let scores = clustering_scores(&load_embeddings(emb)?)?;
        write_json(&config.output_dir.join(EVALUATE_DIR).join("clustering.json"), &scores)?;
    }
    Ok(summaries)
}

/// Reads `label,v0,v1,...` rows (with a header line) into an [`EmbeddingSet`].
pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    let mut dim = None;
    for rec in reader.records() {
        let rec = rec?;
        let bad = |what: &str| CliError::Data(format!("{}: bad {what} in embedding row", path.display()));
        let mut fields = rec.iter();
        labels.push(fields.next().ok_or_else(|| bad("label"))?.trim().parse::<usize>().map_err(|_| bad("label"))?);
        let before = vectors.len();
        for f in fields {
            vectors.push(f.trim().parse::<f64>().map_err(|_| bad("value"))?);
        }
        let d = vectors.len() - before;
        if *dim.get_or_insert(d) != d || d == 0 {
            return Err(bad("dimension"));
        }
    }
    Ok(EmbeddingSet::new(dim.unwrap_or(0), vectors, labels)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringScores {
    pub samples: usize,
    pub dim: usize,
    pub clusters: usize,
    pub silhouette_cosine: f64,
    pub davies_bouldin: f64,
    pub calinski_harabasz: f64,
}

pub fn clustering_scores(e: &EmbeddingSet) -> Result<ClusteringScores> {
    Ok(ClusteringScores {
        samples: e.len(),
        dim: e.dim(),
        clusters: e.num_clusters(),
        silhouette_cosine: silhouette_cosine(e)?,
        davies_bouldin: davies_bouldin(e)?,
        calinski_harabasz: calinski_harabasz(e)?,
    })
}
