//! Manifest + per-pixel CSV storage.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/series/<pixel id>.csv   date,target[,lsm],<forcing...>
//! <dir>/truth/<pixel id>.csv    date,truth          (synthetic data only)
//! ```
//!
//! Numbers are written with 17 significant digits so a save/load cycle is
//! lossless.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{GridDataset, PixelSeries};
use crate::error::{Error, Result};
use crate::kernel::Matrix;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    rows: usize,
    cols: usize,
    start_date: String,
    n_days: usize,
    forcing_names: Vec<String>,
    attribute_names: Vec<String>,
    pixels: Vec<ManifestPixel>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestPixel {
    id: String,
    row: usize,
    col: usize,
    series_file: String,
    attributes: Vec<f64>,
    #[serde(default)]
    region: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_file: Option<String>,
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Writes `dataset` under `dir` (created if needed).
pub fn save_dataset(dataset: &GridDataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    let series_dir = dir.join("series");
    fs::create_dir_all(&series_dir).map_err(|e| Error::io(&series_dir, e))?;
    let has_truth = dataset.pixels.iter().any(|p| p.truth.is_some());
    if has_truth {
        let truth_dir = dir.join("truth");
        fs::create_dir_all(&truth_dir).map_err(|e| Error::io(&truth_dir, e))?;
    }

    let mut entries = Vec::with_capacity(dataset.pixels.len());
    for p in &dataset.pixels {
        let series_file = format!("series/{}.csv", p.id);
        let path = dir.join(&series_file);
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["date".to_string(), "target".to_string()];
        if p.lsm.is_some() {
            header.push("lsm".into());
        }
        header.extend(dataset.forcing_names.iter().cloned());
        w.write_record(&header)?;
        for t in 0..dataset.n_days {
            let mut rec = vec![dataset.date(t).to_string()];
            rec.push(if p.mask[t] { fmt_num(p.target[t]) } else { String::new() });
            if let Some(l) = &p.lsm {
                rec.push(fmt_num(l[t]));
            }
            rec.extend(p.forcing.row(t).iter().map(|&v| fmt_num(v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let truth_file = match &p.truth {
            Some(truth) => {
                let rel = format!("truth/{}.csv", p.id);
                let path = dir.join(&rel);
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["date", "truth"])?;
                for (t, v) in truth.iter().enumerate() {
                    w.write_record([dataset.date(t).to_string(), fmt_num(*v)])?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
                Some(rel)
            }
            None => None,
        };

        entries.push(ManifestPixel {
            id: p.id.clone(),
            row: p.row,
            col: p.col,
            series_file,
            attributes: p.attributes.clone(),
            region: p.region.clone(),
            truth_file,
        });
    }
    let manifest = Manifest {
        rows: dataset.rows,
        cols: dataset.cols,
        start_date: dataset.start_date.to_string(),
        n_days: dataset.n_days,
        forcing_names: dataset.forcing_names.clone(),
        attribute_names: dataset.attribute_names.clone(),
        pixels: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn load_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: u64, field: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| load_err(path, line, format!("column {field}: cannot parse {s:?} as a number")))?;
    if !v.is_finite() {
        return Err(load_err(path, line, format!("column {field}: non-finite value")));
    }
    Ok(v)
}

/// Loads a dataset from a manifest file or a directory containing
/// `manifest.json`.
pub fn load_dataset(path: &Path) -> Result<GridDataset> {
    let mpath = manifest_path(path);
    let base = mpath.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
        load_err(&mpath, e.line() as u64, format!("manifest schema violation: {e}"))
    })?;
    let start_date = NaiveDate::parse_from_str(&manifest.start_date, "%Y-%m-%d")
        .map_err(|e| load_err(&mpath, 0, format!("start_date: {e}")))?;

    let mut pixels = Vec::with_capacity(manifest.pixels.len());
    for mp in &manifest.pixels {
        let spath = base.join(&mp.series_file);
        if !spath.is_file() {
            return Err(Error::Structural(format!(
                "pixel {}: series file {} is missing",
                mp.id,
                spath.display()
            )));
        }
        pixels.push(read_series(&manifest, mp, &spath, start_date)?);
    }
    for (p, mp) in pixels.iter_mut().zip(&manifest.pixels) {
        if let Some(rel) = &mp.truth_file {
            let tpath = base.join(rel);
            if !tpath.is_file() {
                return Err(Error::Structural(format!(
                    "pixel {}: truth file {} is missing",
                    mp.id,
                    tpath.display()
                )));
            }
            p.truth = Some(read_truth(&tpath, manifest.n_days)?);
        }
    }

    let dataset = GridDataset {
        rows: manifest.rows,
        cols: manifest.cols,
        start_date,
        n_days: manifest.n_days,
        forcing_names: manifest.forcing_names,
        attribute_names: manifest.attribute_names,
        pixels,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn read_series(manifest: &Manifest, mp: &ManifestPixel, path: &Path, start: NaiveDate) -> Result<PixelSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header[0] != "date" || header[1] != "target" {
        return Err(load_err(path, 1, "header must start with date,target"));
    }
    let has_lsm = header.get(2).is_some_and(|h| h == "lsm");
    let first_forcing = if has_lsm { 3 } else { 2 };
    if header[first_forcing..] != manifest.forcing_names[..] {
        return Err(load_err(
            path,
            1,
            format!(
                "forcing columns {:?} do not match manifest order {:?}",
                &header[first_forcing..],
                manifest.forcing_names
            ),
        ));
    }

    let n = manifest.n_days;
    let nf = manifest.forcing_names.len();
    let mut forcing = Vec::with_capacity(n * nf);
    let mut target = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut lsm = has_lsm.then(|| Vec::with_capacity(n));
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| load_err(path, line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(load_err(path, line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        if i >= n {
            return Err(Error::Structural(format!(
                "pixel {}: series has more than the {n} days declared",
                mp.id
            )));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| load_err(path, line, format!("date: {e}")))?;
        if date != start + chrono::Duration::days(i as i64) {
            return Err(load_err(path, line, format!("date {date} out of sequence")));
        }
        if rec[1].trim().is_empty() {
            target.push(f64::NAN);
            mask.push(false);
        } else {
            let v = parse_f64(path, line, "target", &rec[1])?;
            if !(0.0..=1.0).contains(&v) {
                return Err(load_err(path, line, format!("target {v} outside [0, 1]")));
            }
            target.push(v);
            mask.push(true);
        }
        if let Some(l) = lsm.as_mut() {
            l.push(parse_f64(path, line, "lsm", &rec[2])?);
        }
        for (k, name) in manifest.forcing_names.iter().enumerate() {
            forcing.push(parse_f64(path, line, name, &rec[first_forcing + k])?);
        }
    }
    if target.len() != n {
        return Err(Error::Structural(format!(
            "pixel {}: series has {} days, manifest declares {n}",
            mp.id,
            target.len()
        )));
    }
    Ok(PixelSeries {
        id: mp.id.clone(),
        row: mp.row,
        col: mp.col,
        forcing: Matrix::from_vec(n, nf, forcing)?,
        lsm,
        attributes: mp.attributes.clone(),
        target,
        mask,
        region: mp.region.clone(),
        truth: None,
    })
}

fn read_truth(path: &Path, n: usize) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::with_capacity(n);
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| load_err(path, line, e.to_string()))?;
        let field = rec.get(1).ok_or_else(|| load_err(path, line, "missing truth column"))?;
        out.push(parse_f64(path, line, "truth", field)?);
    }
    if out.len() != n {
        return Err(Error::Structural(format!(
            "{}: {} truth rows, expected {n}",
            path.display(),
            out.len()
        )));
    }
    Ok(out)
}
