use std::path::{Path, PathBuf};

use semfocus_core::metrology::{compare_report_sets, detect_edges, measure_with, ErrorSummary, MetrologyReport};
use serde::{Deserialize, Serialize};

use crate::artifacts::{csv_writer, pair_sorted, METROLOGY_DIR};
use crate::config::{Method, PipelineConfig};
use crate::error::{CliError, Result};
use crate::evaluate::{num, shown};
use crate::io::load_image;
use crate::sets::{plan_sets, ImageSet};

/// A measurement, or the reason there is none.
pub type Measured = std::result::Result<MetrologyReport, String>;

fn measure_file(config: &PipelineConfig, path: &Path) -> Result<Measured> {
    let img = load_image(path)?;
    let m = &config.metrology;
    Ok(detect_edges(&img, &m.detect)
        .and_then(|edges| measure_with(&edges, &m.measure))
        .map_err(|e| e.to_string()))
}

fn write_reports(config: &PipelineConfig, set: &ImageSet, reports: &[Measured]) -> Result<()> {
    let out = &config.output_dir;
    let dir = out.join(METROLOGY_DIR);
    let path = dir.join(format!("{}.csv", set.name));
    let mut w = csv_writer(&path)?;
    w.write_record(["index", "file", "status", "cd", "cd_std", "lwr", "ler", "psd_summary"])?;
    let psd_path = dir.join(format!("{}_psd.csv", set.name));
    let mut p = csv_writer(&psd_path)?;
    p.write_record(["index", "frequency", "power"])?;
    for (i, (file, rep)) in set.files.iter().zip(reports).enumerate() {
        let mut rec = vec![i.to_string(), shown(out, file)];
        match rep {
            Ok(r) => {
                rec.push("ok".into());
                rec.extend([r.cd, r.cd_std, r.lwr, r.ler].map(num));
                rec.push(r.psd_summary.map(num).unwrap_or_default());
                for pt in &r.psd {
                    p.write_record([i.to_string(), num(pt.frequency), num(pt.power)])?;
                }
            }
            Err(reason) => {
                rec.push(format!("unmeasurable: {reason}"));
                rec.resize(8, String::new());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    p.flush().map_err(|e| CliError::io(&psd_path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetComparison {
    pub set: String,
    pub images: usize,
    pub summary: ErrorSummary,
}

fn compare(
    config: &PipelineConfig,
    name: &str,
    pairs: &[(PathBuf, PathBuf)],
    test: &[Measured],
    reference: &[Measured],
) -> Result<SetComparison> {
    let out = &config.output_dir;
    let opt = |v: &[Measured]| v.iter().map(|r| r.as_ref().ok().cloned()).collect::<Vec<_>>();
    let (errors, summary) = compare_report_sets(&opt(test), &opt(reference))?;
    let path = out.join(METROLOGY_DIR).join(format!("{name}_errors.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["index", "test", "reference", "status", "cd", "cd_std", "lwr", "ler", "psd"])?;
    for (i, ((t, r), e)) in pairs.iter().zip(&errors).enumerate() {
        let mut rec = vec![i.to_string(), shown(out, t), shown(out, r)];
        match e {
            Some(e) => {
                rec.push("ok".into());
                rec.extend([e.cd, e.cd_std, e.lwr, e.ler].map(num));
                rec.push(e.psd.map(num).unwrap_or_default());
            }
            None => {
                rec.push("excluded".into());
                rec.resize(9, String::new());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(SetComparison {
        set: name.to_string(),
        images: pairs.len(),
        summary,
    })
}

/// Measures every image of every set. When a reference set exists, each test
/// set is compared to it by sorted index and summarized as CD(MAE) and
/// Avg(MAE) in `metrology/summary.csv`. Unmeasurable images are flagged and
/// excluded; the run continues.
pub fn run_metrology(config: &PipelineConfig, method: Option<Method>) -> Result<Vec<SetComparison>> {
    config.validate(false)?;
    let plan = plan_sets(config, method)?;
    let measure_set = |set: &ImageSet| -> Result<Vec<Measured>> {
        let reports = set
            .files
            .iter()
            .map(|f| measure_file(config, f))
            .collect::<Result<Vec<_>>>()?;
        write_reports(config, set, &reports)?;
        Ok(reports)
    };
    let reference = match &plan.reference {
        Some(set) => Some((set, measure_set(set)?)),
        None => None,
    };
    let mut comparisons = Vec::new();
    for set in &plan.tests {
        let reports = measure_set(set)?;
        if let Some((rset, rreports)) = &reference {
            let pairs = pair_sorted(&set.files, &rset.files)?;
            comparisons.push(compare(config, &set.name, &pairs, &reports, rreports)?);
        }
    }
    if reference.is_some() {
        let path = config.output_dir.join(METROLOGY_DIR).join("summary.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["set", "images", "measured", "cd_mae", "avg_mae", "excluded"])?;
        for c in &comparisons {
            let s = &c.summary;
            let excluded: Vec<String> = s.excluded.iter().map(|i| i.to_string()).collect();
            w.write_record([
                c.set.clone(),
                c.images.to_string(),
                (c.images - s.excluded.len()).to_string(),
                s.cd_mae.map(num).unwrap_or_default(),
                s.avg_mae.map(num).unwrap_or_default(),
                excluded.join(";"),
            ])?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(comparisons)
}
