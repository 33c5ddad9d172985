//! On-disk artifact formats: dataset and cache CSVs, flip-record CSVs,
//! update reports, pairwise matrices, and run manifests.
//!
//! Everything written here is a deterministic function of its inputs, so a
//! rerun with the same config produces byte-identical files. The one
//! exception is the manifest's wall-clock line, which is excluded from the
//! manifest's own artifacts hash.

use std::fs;
use std::path::{Path, PathBuf};

use pct_core::data::{LabeledDataset, Sample};
use pct_core::ensemble::LogitsCache;
use pct_core::metrics::UpdateReport;

use crate::error::{LabError, Result};
use crate::textfmt::{csv_line, decimal_to_f64, f64_to_decimal, fnv64_hex, rate4};

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| LabError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

// ---------------------------------------------------------------------------
// Dataset CSV: id,label,x0,x1,...
// ---------------------------------------------------------------------------

pub fn dataset_to_csv(ds: &LabeledDataset) -> String {
    let mut header = vec!["id".to_string(), "label".to_string()];
    for i in 0..ds.dim {
        header.push(format!("x{i}"));
    }
    let mut out = csv_line(&header);
    out.push('\n');
    for s in &ds.samples {
        let mut fields = vec![s.id.to_string(), s.label.to_string()];
        fields.extend(s.features.iter().map(|&v| f64_to_decimal(v)));
        out.push_str(&csv_line(&fields));
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str) -> Result<LabeledDataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| LabError::runtime("empty dataset csv"))?;
    let dim = header.split(',').count().saturating_sub(2);
    let mut samples = Vec::new();
    let mut num_classes = 0;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(LabError::runtime(format!("bad dataset csv row: {line}")));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| LabError::runtime(format!("bad id in row: {line}")))?;
        let label: usize = fields[1]
            .parse()
            .map_err(|_| LabError::runtime(format!("bad label in row: {line}")))?;
        let features: Option<Vec<f64>> = fields[2..].iter().map(|s| decimal_to_f64(s)).collect();
        let features =
            features.ok_or_else(|| LabError::runtime(format!("bad feature in row: {line}")))?;
        num_classes = num_classes.max(label + 1);
        samples.push(Sample { id, features, label });
    }
    Ok(LabeledDataset { num_classes, dim, samples })
}

// ---------------------------------------------------------------------------
// Teacher logits cache CSV: id,l0,l1,...
// ---------------------------------------------------------------------------

pub fn cache_to_csv(cache: &LogitsCache, classes: usize) -> String {
    let mut header = vec!["id".to_string()];
    for k in 0..classes {
        header.push(format!("l{k}"));
    }
    let mut out = csv_line(&header);
    out.push('\n');
    for (id, logits) in cache.iter() {
        let mut fields = vec![id.to_string()];
        fields.extend(logits.iter().map(|&v| f64_to_decimal(v)));
        out.push_str(&csv_line(&fields));
        out.push('\n');
    }
    out
}

pub fn cache_from_csv(text: &str) -> Result<LogitsCache> {
    let mut cache = LogitsCache::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let id: usize = fields[0]
            .parse()
            .map_err(|_| LabError::runtime(format!("bad cache row: {line}")))?;
        let logits: Option<Vec<f64>> = fields[1..].iter().map(|s| decimal_to_f64(s)).collect();
        cache.insert(id, logits.ok_or_else(|| LabError::runtime("bad cache float"))?);
    }
    Ok(cache)
}

// ---------------------------------------------------------------------------
// Flip records CSV
// ---------------------------------------------------------------------------

pub fn flips_to_csv(report: &UpdateReport) -> String {
    let mut out = String::from("id,label,old_pred,new_pred,category,old_margin,displacement_norm\n");
    for r in &report.records {
        let margin = r.old_margin.map(f64_to_decimal).unwrap_or_default();
        let disp = r.displacement_norm.map(f64_to_decimal).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id,
            r.label,
            r.old_pred,
            r.new_pred,
            r.category.name(),
            margin,
            disp
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Update report (structured text, parsed back by the report command)
// ---------------------------------------------------------------------------

const REPORT_MAGIC: &str = "pctlab-update-report v1";

/// Metric lines of an update report; `config_echo` follows, indented.
pub struct ReportDoc {
    pub config_hash: String,
    pub pairing: usize,
    pub objective: String,
    pub objective_old: String,
    pub report: UpdateReport,
}

pub fn report_to_text(doc: &ReportDoc, config_echo: &str) -> String {
    let r = &doc.report;
    let mut out = String::new();
    out.push_str(REPORT_MAGIC);
    out.push('\n');
    out.push_str(&format!("config_hash = {}\n", doc.config_hash));
    out.push_str(&format!("pairing = {}\n", doc.pairing));
    out.push_str(&format!("objective = {}\n", doc.objective));
    out.push_str(&format!("objective_old = {}\n", doc.objective_old));
    out.push_str(&format!("old_tag = {}\n", r.old_tag));
    out.push_str(&format!("new_tag = {}\n", r.new_tag));
    out.push_str(&format!("samples = {}\n", r.samples));
    out.push_str(&format!("err_old = {}\n", r.err_old));
    out.push_str(&format!("err_new = {}\n", r.err_new));
    out.push_str(&format!("neg_flips = {}\n", r.neg_flips));
    out.push_str(&format!("pos_flips = {}\n", r.pos_flips));
    out.push_str(&format!("er_old = {}\n", rate4(r.er_old())));
    out.push_str(&format!("er_new = {}\n", rate4(r.er_new())));
    out.push_str(&format!("nfr = {}\n", rate4(r.nfr())));
    out.push_str(&format!("pfr = {}\n", rate4(r.pfr())));
    out.push_str(&format!("has_margins = {}\n", r.has_margins));
    out.push_str("config_echo:\n");
    for line in config_echo.lines() {
        out.push_str("  ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Parses the metric lines back; flip records are not reconstructed.
pub fn report_from_text(text: &str) -> Result<ReportDoc> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_MAGIC) {
        return Err(LabError::runtime("not an update report"));
    }
    let mut fields = std::collections::BTreeMap::new();
    for line in lines {
        if line == "config_echo:" {
            break;
        }
        if let Some((k, v)) = line.split_once(" = ") {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<String> {
        fields.get(k).cloned().ok_or_else(|| LabError::runtime(format!("report missing `{k}`")))
    };
    let get_u64 = |k: &str| -> Result<u64> {
        get(k)?.parse().map_err(|_| LabError::runtime(format!("report `{k}` not an integer")))
    };
    let report = UpdateReport {
        old_tag: get("old_tag")?,
        new_tag: get("new_tag")?,
        samples: get_u64("samples")?,
        err_old: get_u64("err_old")?,
        err_new: get_u64("err_new")?,
        neg_flips: get_u64("neg_flips")?,
        pos_flips: get_u64("pos_flips")?,
        has_margins: get("has_margins")? == "true",
        records: Vec::new(),
    };
    Ok(ReportDoc {
        config_hash: get("config_hash")?,
        pairing: get_u64("pairing")? as usize,
        objective: get("objective")?,
        objective_old: get("objective_old")?,
        report,
    })
}

// ---------------------------------------------------------------------------
// Pairwise NFR matrix CSV
// ---------------------------------------------------------------------------

pub fn nfr_matrix_to_csv(tags: &[String], matrix: &[Vec<f64>]) -> String {
    let mut header = vec!["old\\new".to_string()];
    header.extend(tags.iter().cloned());
    let mut out = csv_line(&header);
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        let mut fields = vec![tags[i].clone()];
        fields.extend(row.iter().map(|&v| rate4(v)));
        out.push_str(&csv_line(&fields));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

const MANIFEST_MAGIC: &str = "pctlab-manifest v1";

/// Record of one command run: artifacts produced, checkpoints consumed
/// during training, and warnings. `artifacts_hash` covers the artifact
/// contents (not the wall clock), so reruns can be compared cheaply.
#[derive(Debug, Default)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed_offset: u64,
    pub wall_clock_ms: u128,
    /// Paths relative to the output directory, in creation order.
    pub artifacts: Vec<PathBuf>,
    /// Checkpoints read as training inputs (teacher members, legacy
    /// references); the audit trail for reference usage.
    pub train_reads: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: &str, seed_offset: u64) -> Manifest {
        Manifest {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed_offset,
            ..Manifest::default()
        }
    }

    pub fn add_artifact(&mut self, path: impl Into<PathBuf>) {
        self.artifacts.push(path.into());
    }

    pub fn add_train_read(&mut self, path: impl Into<PathBuf>) {
        self.train_reads.push(path.into());
    }

    /// Hash over the artifact list and every artifact's content.
    pub fn artifacts_hash(&self, out_dir: &Path) -> Result<String> {
        let mut acc = String::new();
        let mut sorted = self.artifacts.clone();
        sorted.sort();
        for rel in &sorted {
            let content = fs::read(out_dir.join(rel)).map_err(|e| LabError::io(out_dir.join(rel), e))?;
            acc.push_str(&format!("{} {}\n", rel.display(), fnv64_hex(&content)));
        }
        Ok(fnv64_hex(acc.as_bytes()))
    }

    pub fn write(&self, out_dir: &Path, filename: &str) -> Result<PathBuf> {
        let mut out = String::new();
        out.push_str(MANIFEST_MAGIC);
        out.push('\n');
        out.push_str(&format!("command = {}\n", self.command));
        out.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("config_hash = {}\n", self.config_hash));
        out.push_str(&format!("seed_offset = {}\n", self.seed_offset));
        out.push_str(&format!("artifacts_hash = {}\n", self.artifacts_hash(out_dir)?));
        out.push_str(&format!("wall_clock_ms = {}\n", self.wall_clock_ms));
        for a in &self.artifacts {
            out.push_str(&format!("artifact = {}\n", a.display()));
        }
        for r in &self.train_reads {
            out.push_str(&format!("train_read = {}\n", r.display()));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning = {}\n", w));
        }
        let path = out_dir.join(filename);
        write_file(&path, &out)?;
        Ok(path)
    }
}

/// Parsed manifest, as consumed by the report command.
#[derive(Debug, Clone)]
pub struct ManifestDoc {
    pub command: String,
    pub config_hash: String,
    pub artifacts_hash: String,
    pub artifacts: Vec<PathBuf>,
    pub train_reads: Vec<PathBuf>,
    pub warnings: Vec<String>,
    /// Directory the artifact paths are relative to.
    pub base_dir: PathBuf,
}

pub fn manifest_from_file(path: &Path) -> Result<ManifestDoc> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_MAGIC) {
        return Err(LabError::integrity(path, "not a manifest"));
    }
    let mut doc = ManifestDoc {
        command: String::new(),
        config_hash: String::new(),
        artifacts_hash: String::new(),
        artifacts: Vec::new(),
        train_reads: Vec::new(),
        warnings: Vec::new(),
        base_dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    for line in lines {
        if let Some((k, v)) = line.split_once(" = ") {
            match k {
                "command" => doc.command = v.to_string(),
                "config_hash" => doc.config_hash = v.to_string(),
                "artifacts_hash" => doc.artifacts_hash = v.to_string(),
                "version" | "seed_offset" | "wall_clock_ms" => {}
                "artifact" => doc.artifacts.push(PathBuf::from(v)),
                "train_read" => doc.train_reads.push(PathBuf::from(v)),
                "warning" => doc.warnings.push(v.to_string()),
                _ => return Err(LabError::integrity(path, format!("unknown manifest line: {line}"))),
            }
        }
    }
    Ok(doc)
}
