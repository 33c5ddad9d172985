//! Structured-text model checkpoints.
//!
//! A checkpoint stores the architecture, the init seed, a provenance hash of
//! the producing config, and every parameter as a 17-significant-digit
//! decimal (exact `f64` round trip). The final line is an FNV checksum of
//! the body, so corruption is detected at load time. Because the float
//! rendering is canonical, load-then-save reproduces the file byte for
//! byte.

use std::fs;
use std::path::Path;

use pct_core::model::{Activation, MlpArch, MlpModel};
use pct_core::numerics::Matrix;

use crate::error::{LabError, Result};
use crate::textfmt::{decimal_to_f64, f64_to_decimal, fnv64_hex};

const MAGIC: &str = "pctlab-checkpoint v1";

/// Serializes `model` to the canonical checkpoint text.
pub fn encode(model: &MlpModel, config_hash: &str) -> String {
    let mut body = String::new();
    body.push_str(MAGIC);
    body.push('\n');
    body.push_str(&format!("config_hash = {config_hash}\n"));
    body.push_str(&format!("arch.input_dim = {}\n", model.arch.input_dim));
    let hidden: Vec<String> = model.arch.hidden.iter().map(|h| h.to_string()).collect();
    body.push_str(&format!("arch.hidden = {}\n", hidden.join(",")));
    body.push_str(&format!("arch.output_dim = {}\n", model.arch.output_dim));
    body.push_str(&format!("arch.activation = {}\n", model.arch.activation.name()));
    body.push_str(&format!("init_seed = {}\n", model.init_seed));
    for (l, (w, b)) in model.weights.iter().zip(&model.biases).enumerate() {
        body.push_str(&format!("layer = {l}\n"));
        body.push_str(&format!("weights = {} {}\n", w.rows(), w.cols()));
        for r in 0..w.rows() {
            let row: Vec<String> = w.row(r).iter().map(|&v| f64_to_decimal(v)).collect();
            body.push_str(&row.join(" "));
            body.push('\n');
        }
        body.push_str(&format!("biases = {}\n", b.len()));
        let bias: Vec<String> = b.iter().map(|&v| f64_to_decimal(v)).collect();
        body.push_str(&bias.join(" "));
        body.push('\n');
    }
    let checksum = fnv64_hex(body.as_bytes());
    format!("{body}checksum = {checksum}\n")
}

/// Writes `model` to `path`.
pub fn save(path: &Path, model: &MlpModel, config_hash: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    fs::write(path, encode(model, config_hash)).map_err(|e| LabError::io(path, e))
}

/// Reads a checkpoint, verifying its checksum. Returns the model and the
/// config hash it was produced under.
pub fn load(path: &Path) -> Result<(MlpModel, String)> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    decode(&text).map_err(|reason| LabError::integrity(path, reason))
}

fn decode(text: &str) -> std::result::Result<(MlpModel, String), String> {
    let body_end = text.rfind("checksum = ").ok_or("missing checksum line")?;
    let (body, checksum_line) = text.split_at(body_end);
    let stored = checksum_line
        .trim()
        .strip_prefix("checksum = ")
        .ok_or("malformed checksum line")?;
    let actual = fnv64_hex(body.as_bytes());
    if stored != actual {
        return Err(format!("checksum mismatch: stored {stored}, computed {actual}"));
    }

    let mut lines = body.lines();
    if lines.next() != Some(MAGIC) {
        return Err("bad magic line".into());
    }
    let mut config_hash = String::new();
    let mut input_dim = None;
    let mut hidden: Option<Vec<usize>> = None;
    let mut output_dim = None;
    let mut activation = None;
    let mut init_seed = None;

    let take_value = |line: &str, key: &str| -> Option<String> {
        line.strip_prefix(key).and_then(|rest| rest.strip_prefix(" = ")).map(str::to_string)
    };

    let mut line = lines.next();
    while let Some(current) = line {
        if current.starts_with("layer = ") {
            break;
        }
        if let Some(v) = take_value(current, "config_hash") {
            config_hash = v;
        } else if let Some(v) = take_value(current, "arch.input_dim") {
            input_dim = v.parse().ok();
        } else if let Some(v) = take_value(current, "arch.hidden") {
            let list: std::result::Result<Vec<usize>, _> = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<usize>())
                .collect();
            hidden = Some(list.map_err(|_| "bad hidden list")?);
        } else if let Some(v) = take_value(current, "arch.output_dim") {
            output_dim = v.parse().ok();
        } else if let Some(v) = take_value(current, "arch.activation") {
            activation = Activation::parse(&v);
        } else if let Some(v) = take_value(current, "init_seed") {
            init_seed = v.parse().ok();
        } else {
            return Err(format!("unexpected header line: {current}"));
        }
        line = lines.next();
    }

    let arch = MlpArch::new(
        input_dim.ok_or("missing input_dim")?,
        hidden.ok_or("missing hidden")?,
        output_dim.ok_or("missing output_dim")?,
        activation.ok_or("missing or bad activation")?,
    );
    let init_seed: u64 = init_seed.ok_or("missing init_seed")?;

    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let expected_layers = arch.num_layers();
    for layer in 0..expected_layers {
        let header = line.ok_or("missing layer header")?;
        if header != format!("layer = {layer}") {
            return Err(format!("expected layer {layer}, got: {header}"));
        }
        let wline = lines.next().ok_or("missing weights header")?;
        let dims = wline.strip_prefix("weights = ").ok_or("bad weights header")?;
        let mut parts = dims.split_whitespace();
        let rows: usize = parts.next().and_then(|s| s.parse().ok()).ok_or("bad weight rows")?;
        let cols: usize = parts.next().and_then(|s| s.parse().ok()).ok_or("bad weight cols")?;
        let mut w = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row_line = lines.next().ok_or("missing weight row")?;
            let values: Vec<f64> = row_line
                .split_whitespace()
                .map(|s| decimal_to_f64(s).ok_or("bad float"))
                .collect::<std::result::Result<_, _>>()?;
            if values.len() != cols {
                return Err(format!("weight row {r} has {} values, expected {cols}", values.len()));
            }
            for (c, v) in values.into_iter().enumerate() {
                w.set(r, c, v);
            }
        }
        let bline = lines.next().ok_or("missing biases header")?;
        let blen: usize = bline
            .strip_prefix("biases = ")
            .and_then(|s| s.parse().ok())
            .ok_or("bad biases header")?;
        let bias_line = lines.next().ok_or("missing bias values")?;
        let bias: Vec<f64> = bias_line
            .split_whitespace()
            .map(|s| decimal_to_f64(s).ok_or("bad float"))
            .collect::<std::result::Result<_, _>>()?;
        if bias.len() != blen {
            return Err("bias length mismatch".into());
        }
        weights.push(w);
        biases.push(bias);
        line = lines.next();
    }
    if line.is_some() {
        return Err("trailing content after last layer".into());
    }

    let model = MlpModel { arch, weights, biases, init_seed };
    let dims = model.arch.layer_dims();
    for (l, (fan_in, fan_out)) in dims.iter().enumerate() {
        if model.weights[l].rows() != *fan_out || model.weights[l].cols() != *fan_in {
            return Err(format!("layer {l} shape does not match arch"));
        }
    }
    Ok((model, config_hash))
}
