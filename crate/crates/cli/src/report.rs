//! Plot-ready CSVs gathered from a run directory.

use std::path::Path;

use sentidrop_core::eval::METRIC_NAMES;
use sentidrop_core::preprocess::CorrelationMatrix;

use crate::commands::{read_json, AblationMetrics, CvMetrics, ABLATION_FILE, CORRELATION_FILE, CV_METRICS_FILE};
use crate::error::{CliError, CliResult};
use crate::manifest::MANIFEST_SUFFIX;

pub const REPORT_DIR: &str = "report";
pub const CORRELATION_REPORT: &str = "correlation_report.csv";
pub const CONFUSION_REPORT: &str = "confusion_report.csv";
pub const RADAR_REPORT: &str = "radar_metrics.csv";
pub const BOXPLOT_REPORT: &str = "boxplot_samples.csv";
pub const HEATMAP_REPORT: &str = "ablation_heatmap.csv";

fn has_manifest(dir: &Path) -> bool {
    std::fs::read_dir(dir).is_ok_and(|entries| {
        entries.filter_map(|e| e.ok()).any(|e| e.file_name().to_string_lossy().ends_with(MANIFEST_SUFFIX))
    })
}

fn writer(dir: &Path, name: &str) -> CliResult<csv::Writer<std::fs::File>> {
    let path = dir.join(name);
    let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn done(mut w: csv::Writer<std::fs::File>, name: &str) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(name, e))
}

/// Writes every report whose source artifact exists; returns the file names
/// relative to the run directory.
pub fn report(run_dir: &Path) -> CliResult<Vec<String>> {
    if !has_manifest(run_dir) {
        return Err(CliError::MissingArtifacts(format!("no run manifests in {}", run_dir.display())));
    }
    let dir = run_dir.join(REPORT_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut written = Vec::new();

    let corr_path = run_dir.join(CORRELATION_FILE);
    if corr_path.is_file() {
        let corr: CorrelationMatrix = read_json(&corr_path)?;
        let mut w = writer(&dir, CORRELATION_REPORT)?;
        let mut header = vec!["feature".to_string()];
        header.extend(corr.names.iter().cloned());
        w.write_record(&header)?;
        for (i, name) in corr.names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend((0..corr.names.len()).map(|j| corr.get(i, j).to_string()));
            w.write_record(&rec)?;
        }
        done(w, CORRELATION_REPORT)?;
        written.push(CORRELATION_REPORT);
    }

    let cv_path = run_dir.join(CV_METRICS_FILE);
    if cv_path.is_file() {
        let cv: CvMetrics = read_json(&cv_path)?;
        let mut w = writer(&dir, CONFUSION_REPORT)?;
        w.write_record(["model", "fold", "tp", "tn", "fp", "fn"])?;
        for tag in &cv.tags {
            let mut total = [0u64; 4];
            for f in &cv.folds {
                for r in f.reports.iter().filter(|r| &r.model == tag) {
                    let c = r.confusion;
                    total = [total[0] + c.tp, total[1] + c.tn, total[2] + c.fp, total[3] + c.fn_];
                    w.write_record([tag.clone(), f.fold.to_string(), c.tp.to_string(), c.tn.to_string(), c.fp.to_string(), c.fn_.to_string()])?;
                }
            }
            let mut rec = vec![tag.clone(), "all".to_string()];
            rec.extend(total.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        done(w, CONFUSION_REPORT)?;

        let mut w = writer(&dir, RADAR_REPORT)?;
        w.write_record(["model", "metric", "mean", "std"])?;
        for s in &cv.aggregate {
            w.write_record([s.model.clone(), s.metric.clone(), s.mean.to_string(), s.std.to_string()])?;
        }
        done(w, RADAR_REPORT)?;

        let mut w = writer(&dir, BOXPLOT_REPORT)?;
        w.write_record(["model", "fold", "metric", "value"])?;
        for f in &cv.folds {
            for r in &f.reports {
                for (name, v) in METRIC_NAMES.iter().zip(r.values()) {
                    w.write_record([r.model.clone(), f.fold.to_string(), name.to_string(), v.to_string()])?;
                }
            }
        }
        done(w, BOXPLOT_REPORT)?;
        written.extend([CONFUSION_REPORT, RADAR_REPORT, BOXPLOT_REPORT]);
    }

    let ab_path = run_dir.join(ABLATION_FILE);
    if ab_path.is_file() {
        let ab: AblationMetrics = read_json(&ab_path)?;
        let mut w = writer(&dir, HEATMAP_REPORT)?;
        w.write_record(["model", "metric", "arm", "value"])?;
        for r in &ab.rows {
            for (arm, v) in [("with_sentiment", r.with_sentiment), ("without_sentiment", r.without_sentiment)] {
                w.write_record([r.model.as_str(), r.metric.as_str(), arm, &v.to_string()])?;
            }
        }
        done(w, HEATMAP_REPORT)?;
        written.push(HEATMAP_REPORT);
    }

    if written.is_empty() {
        return Err(CliError::MissingArtifacts(format!(
            "{} contains none of {CORRELATION_FILE}, {CV_METRICS_FILE}, {ABLATION_FILE}",
            run_dir.display()
        )));
    }
    Ok(written.into_iter().map(|n| format!("{REPORT_DIR}/{n}")).collect())
}
