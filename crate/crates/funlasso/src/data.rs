//! Dataset persistence and the appliances-energy ingestion pipeline.
//!
//! A dataset on disk is a TOML manifest (block table, response column,
//! version tag) plus one CSV payload with a row per observation. Curve
//! blocks occupy consecutive columns `name__t<k>`, vector blocks
//! `name__v<k>`, scalars a single column. Floats are written with Rust's
//! shortest round-trip formatting, so save/load is bit-exact.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{BlockKind, BlockSpec, Coefficient, Dataset, SpaceSpec};
use crate::scalar::Scalar;

/// Current manifest format version.
pub const MANIFEST_VERSION: u32 = 1;

/// Block descriptor inside a manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockDescriptor {
    pub name: String,
    /// "curve", "vector" or "scalar".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

/// On-disk description of a dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    /// Payload CSV, relative to the manifest location.
    pub payload: String,
    pub n: usize,
    /// Name of the response column.
    pub response: String,
    #[serde(rename = "block")]
    pub blocks: Vec<BlockDescriptor>,
}

impl DatasetManifest {
    fn space<T: Scalar>(&self) -> Result<SpaceSpec<T>> {
        let mut specs = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let spec = match b.kind.as_str() {
                "curve" => {
                    let grid = b.grid.as_ref().ok_or_else(|| {
                        Error::Manifest(format!("curve block '{}' has no grid", b.name))
                    })?;
                    BlockSpec::curve(grid.iter().map(|&t| T::from_f64_lossy(t)).collect())?
                }
                "vector" => {
                    let dim = b.dim.ok_or_else(|| {
                        Error::Manifest(format!("vector block '{}' has no dim", b.name))
                    })?;
                    BlockSpec::vector(dim)?
                }
                "scalar" => BlockSpec::scalar(),
                other => {
                    return Err(Error::Manifest(format!(
                        "block '{}' has unknown kind '{other}'",
                        b.name
                    )))
                }
            };
            specs.push(spec);
        }
        Ok(SpaceSpec::new(specs))
    }
}

/// Column names of one block in the payload CSV.
fn block_columns(desc: &BlockDescriptor) -> Vec<String> {
    match desc.kind.as_str() {
        "curve" => {
            let g = desc.grid.as_ref().map_or(0, |g| g.len());
            (0..g).map(|k| format!("{}__t{k}", desc.name)).collect()
        }
        "vector" => {
            let d = desc.dim.unwrap_or(0);
            (0..d).map(|k| format!("{}__v{k}", desc.name)).collect()
        }
        _ => vec![desc.name.clone()],
    }
}

fn describe_block<T: Scalar>(name: &str, spec: &BlockSpec<T>) -> BlockDescriptor {
    match spec.kind() {
        BlockKind::Curve => BlockDescriptor {
            name: name.to_string(),
            kind: "curve".into(),
            grid: Some(
                spec.grid()
                    .expect("curve grid")
                    .iter()
                    .map(|t| t.to_f64().expect("grid value"))
                    .collect(),
            ),
            dim: None,
        },
        BlockKind::Vector => BlockDescriptor {
            name: name.to_string(),
            kind: "vector".into(),
            grid: None,
            dim: Some(spec.len()),
        },
        BlockKind::Scalar => BlockDescriptor {
            name: name.to_string(),
            kind: "scalar".into(),
            grid: None,
            dim: None,
        },
    }
}

/// Write a dataset as `<stem>.toml` + `<stem>.csv` in `dir`; returns the
/// manifest path. `names` has one entry per block.
pub fn save_dataset<T: Scalar>(
    data: &Dataset<T>,
    names: &[String],
    dir: &Path,
    stem: &str,
) -> Result<PathBuf> {
    if names.len() != data.n_blocks() {
        return Err(Error::InvalidParameter(format!(
            "{} names for {} blocks",
            names.len(),
            data.n_blocks()
        )));
    }
    fs::create_dir_all(dir)?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        payload: format!("{stem}.csv"),
        n: data.n(),
        response: "y".into(),
        blocks: names
            .iter()
            .enumerate()
            .map(|(j, name)| describe_block(name, data.space().block(j)))
            .collect(),
    };
    let manifest_path = dir.join(format!("{stem}.toml"));
    fs::write(
        &manifest_path,
        toml::to_string(&manifest).map_err(|e| Error::Manifest(e.to_string()))?,
    )?;

    let mut out = std::io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.csv")))?);
    let mut header: Vec<String> = Vec::new();
    for desc in &manifest.blocks {
        header.extend(block_columns(desc));
    }
    header.push(manifest.response.clone());
    writeln!(out, "{}", header.join(","))?;
    let n = data.n();
    for i in 0..n {
        let mut row = String::new();
        for j in 0..data.n_blocks() {
            let len = data.space().block(j).len();
            let mat = data.block_matrix(j);
            for g in 0..len {
                row.push_str(&format!("{},", mat[g * n + i]));
            }
        }
        row.push_str(&format!("{}", data.y()[i]));
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(manifest_path)
}

/// Load a dataset from its manifest. The result is not centered; call
/// `prepare` explicitly. Returns the dataset and the block names.
pub fn load_dataset<T: Scalar>(manifest_path: &Path) -> Result<(Dataset<T>, Vec<String>)> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: DatasetManifest =
        toml::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    let payload = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.payload);
    let space: SpaceSpec<T> = manifest.space()?;

    let mut reader = csv::Reader::from_path(&payload)?;
    let headers = reader.headers()?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: payload.display().to_string(),
            row: 1,
            column: name.to_string(),
            message: "column declared in manifest but absent from payload".into(),
        })
    };
    // Resolve every declared column up front.
    let mut block_cols: Vec<Vec<usize>> = Vec::with_capacity(manifest.blocks.len());
    for desc in &manifest.blocks {
        let cols = block_columns(desc);
        let idx: Result<Vec<usize>> = cols.iter().map(|c| col_index(c)).collect();
        block_cols.push(idx?);
    }
    let y_col = col_index(&manifest.response)?;

    let n = manifest.n;
    let mut blocks: Vec<Vec<T>> = (0..space.n_blocks())
        .map(|j| vec![T::zero(); space.block(j).len() * n])
        .collect();
    let mut y = vec![T::zero(); n];
    let mut rows_seen = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if i >= n {
            return Err(Error::Parse {
                path: payload.display().to_string(),
                row: i + 2,
                column: String::new(),
                message: format!("more rows than the declared n = {n}"),
            });
        }
        let parse = |col: usize, name: &str| -> Result<T> {
            let cell = record.get(col).ok_or_else(|| Error::Parse {
                path: payload.display().to_string(),
                row: i + 2,
                column: name.to_string(),
                message: "missing cell".into(),
            })?;
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: payload.display().to_string(),
                row: i + 2,
                column: name.to_string(),
                message: format!("not a number: '{cell}'"),
            })?;
            Ok(T::from_f64_lossy(v))
        };
        for (j, cols) in block_cols.iter().enumerate() {
            for (g, &c) in cols.iter().enumerate() {
                blocks[j][g * n + i] = parse(c, &headers[c])?;
            }
        }
        y[i] = parse(y_col, &manifest.response)?;
        rows_seen += 1;
    }
    if rows_seen != n {
        return Err(Error::Parse {
            path: payload.display().to_string(),
            row: rows_seen + 1,
            column: String::new(),
            message: format!("payload has {rows_seen} rows, manifest declares {n}"),
        });
    }
    let names = manifest.blocks.iter().map(|b| b.name.clone()).collect();
    Ok((Dataset::from_parts(space, blocks, y)?, names))
}

/// Write a coefficient as a one-row CSV using the block column scheme.
pub fn save_coefficient<T: Scalar>(
    coef: &Coefficient<T>,
    names: &[String],
    path: &Path,
) -> Result<()> {
    if names.len() != coef.n_blocks() {
        return Err(Error::InvalidParameter("name/block count mismatch".into()));
    }
    let mut header = Vec::new();
    let mut values = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let el = coef.block(j);
        let cols: Vec<String> = match el.spec().kind() {
            BlockKind::Curve => (0..el.spec().len()).map(|k| format!("{name}__t{k}")).collect(),
            BlockKind::Vector => (0..el.spec().len()).map(|k| format!("{name}__v{k}")).collect(),
            BlockKind::Scalar => vec![name.clone()],
        };
        header.extend(cols);
        values.extend(el.values().iter().map(|v| format!("{v}")));
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    writeln!(out, "{}", values.join(","))?;
    out.flush()?;
    Ok(())
}

/// Read a coefficient written by [`save_coefficient`], interpreted in the
/// given space.
pub fn load_coefficient<T: Scalar>(
    space: &SpaceSpec<T>,
    names: &[String],
    path: &Path,
) -> Result<Coefficient<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let record = reader
        .records()
        .next()
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            row: 2,
            column: String::new(),
            message: "coefficient file has no data row".into(),
        })??;
    let mut coef = Coefficient::zeros(space);
    for (j, name) in names.iter().enumerate() {
        let len = space.block(j).len();
        let cols: Vec<String> = match space.block(j).kind() {
            BlockKind::Curve => (0..len).map(|k| format!("{name}__t{k}")).collect(),
            BlockKind::Vector => (0..len).map(|k| format!("{name}__v{k}")).collect(),
            BlockKind::Scalar => vec![name.clone()],
        };
        for (g, col) in cols.iter().enumerate() {
            let c = headers.iter().position(|h| h == col).ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                row: 1,
                column: col.clone(),
                message: "missing coefficient column".into(),
            })?;
            let cell = record.get(c).unwrap_or("");
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row: 2,
                column: col.clone(),
                message: format!("not a number: '{cell}'"),
            })?;
            coef.block_mut(j).values_mut()[g] = T::from_f64_lossy(v);
        }
    }
    Ok(coef)
}

/// The 24 covariate columns of the energy application, in report order.
pub const ENERGY_VARIABLES: [&str; 24] = [
    "Appliances",
    "lights",
    "T1",
    "RH_1",
    "T2",
    "RH_2",
    "T3",
    "RH_3",
    "T4",
    "RH_4",
    "T5",
    "RH_5",
    "T6",
    "RH_6",
    "T7",
    "RH_7",
    "T8",
    "RH_8",
    "T9",
    "RH_9",
    "T_out",
    "Press_mm_hg",
    "RH_out",
    "Windspeed",
];

/// Configuration of the energy ingestion pipeline.
#[derive(Clone, Debug)]
pub struct EnergyConfig {
    pub raw_csv_path: PathBuf,
    /// Samples per day (10-minute resolution).
    pub samples_per_day: usize,
}

impl EnergyConfig {
    pub fn new(raw_csv_path: impl Into<PathBuf>) -> Self {
        Self { raw_csv_path: raw_csv_path.into(), samples_per_day: 144 }
    }
}

/// Prepared energy dataset with ingestion diagnostics.
#[derive(Clone, Debug)]
pub struct EnergyPrepared<T> {
    /// Range-scaled, centered dataset (one curve block per variable).
    pub dataset: Dataset<T>,
    pub names: Vec<String>,
    /// Complete days dropped because the following day had no samples.
    pub days_dropped: usize,
    /// Days discarded for having a sample count other than
    /// `samples_per_day`.
    pub incomplete_days: usize,
    /// Global max - min of each covariate after range scaling (before
    /// centering); 1 by construction unless a variable was constant.
    pub scaled_ranges: Vec<T>,
}

/// Build the daily-curve regression dataset from the raw 10-minute CSV.
///
/// Each complete day (midnight to midnight, exactly `samples_per_day`
/// rows) of the 24 monitored variables becomes one observation of 24
/// curves; the response is the log of the next calendar day's mean
/// appliance consumption (partial final days still provide a response
/// mean). Every covariate is divided by its global range, then everything
/// is centered.
pub fn prepare_energy<T: Scalar>(config: &EnergyConfig) -> Result<EnergyPrepared<T>> {
    let path = &config.raw_csv_path;
    let spd = config.samples_per_day;
    if spd < 2 {
        return Err(Error::InvalidParameter("samples_per_day must be at least 2".into()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let date_col = headers
        .iter()
        .position(|h| h.trim() == "date")
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            row: 1,
            column: "date".into(),
            message: "missing date column".into(),
        })?;
    let var_cols: Vec<usize> = ENERGY_VARIABLES
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    row: 1,
                    column: (*name).into(),
                    message: "missing variable column".into(),
                })
        })
        .collect::<Result<_>>()?;

    // Rows grouped by calendar day, ordered by time of day.
    let mut days: std::collections::BTreeMap<NaiveDate, Vec<(u32, Vec<f64>)>> =
        std::collections::BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let raw_date = record.get(date_col).unwrap_or("").trim().trim_matches('"');
        let stamp = NaiveDateTime::parse_from_str(raw_date, "%Y-%m-%d %H:%M:%S")
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                row: i + 2,
                column: "date".into(),
                message: format!("bad timestamp '{raw_date}': {e}"),
            })?;
        let mut vals = Vec::with_capacity(var_cols.len());
        for (&c, name) in var_cols.iter().zip(ENERGY_VARIABLES.iter()) {
            let cell = record.get(c).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row: i + 2,
                column: (*name).into(),
                message: format!("not a number: '{cell}'"),
            })?;
            vals.push(v);
        }
        let seconds = stamp.time().num_seconds_from_midnight();
        days.entry(stamp.date()).or_default().push((seconds, vals));
    }

    // Complete covariate days and per-day appliance means (any day with at
    // least one sample can serve as a response day).
    let mut complete: Vec<(NaiveDate, Vec<Vec<f64>>)> = Vec::new();
    let mut incomplete_days = 0usize;
    let mut appliance_mean: std::collections::BTreeMap<NaiveDate, f64> =
        std::collections::BTreeMap::new();
    for (date, mut rows) in days {
        rows.sort_by_key(|(s, _)| *s);
        let mean = rows.iter().map(|(_, v)| v[0]).sum::<f64>() / rows.len() as f64;
        appliance_mean.insert(date, mean);
        if rows.len() == spd {
            complete.push((date, rows.into_iter().map(|(_, v)| v).collect()));
        } else {
            incomplete_days += 1;
        }
    }

    // Pair each complete day with the next calendar day's mean.
    let mut kept: Vec<(&Vec<Vec<f64>>, f64)> = Vec::new();
    let mut days_dropped = 0usize;
    for (date, rows) in &complete {
        let next = date.succ_opt().ok_or_else(|| {
            Error::InvalidDataset(format!("no calendar successor for {date}"))
        })?;
        match appliance_mean.get(&next) {
            Some(&mean) if mean > 0.0 => kept.push((rows, mean.ln())),
            Some(_) => {
                return Err(Error::InvalidDataset(format!(
                    "nonpositive appliance mean on {next}; cannot take its log"
                )))
            }
            None => days_dropped += 1,
        }
    }
    let n = kept.len();
    if n < 2 {
        return Err(Error::InvalidDataset(format!(
            "only {n} usable day pairs after filtering"
        )));
    }

    // Global range per variable over the kept days.
    let p = ENERGY_VARIABLES.len();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); p];
    for (rows, _) in &kept {
        for row in rows.iter() {
            for (j, &v) in row.iter().enumerate() {
                ranges[j].0 = ranges[j].0.min(v);
                ranges[j].1 = ranges[j].1.max(v);
            }
        }
    }

    let grid: Vec<T> = (0..spd)
        .map(|k| T::from_f64_lossy(k as f64 / (spd - 1) as f64))
        .collect();
    let space = SpaceSpec::new(
        (0..p)
            .map(|_| BlockSpec::curve(grid.clone()))
            .collect::<Result<Vec<_>>>()?,
    );
    let mut blocks: Vec<Vec<T>> = (0..p).map(|_| vec![T::zero(); spd * n]).collect();
    let mut y = vec![T::zero(); n];
    for (i, (rows, resp)) in kept.iter().enumerate() {
        for (g, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let (lo, hi) = ranges[j];
                let scale = hi - lo;
                let scaled = if scale > 0.0 { v / scale } else { v };
                blocks[j][g * n + i] = T::from_f64_lossy(scaled);
            }
        }
        y[i] = T::from_f64_lossy(*resp);
    }
    let scaled_ranges = blocks
        .iter()
        .map(|mat| {
            let mut lo = T::infinity();
            let mut hi = T::neg_infinity();
            for &v in mat {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            hi - lo
        })
        .collect();

    let dataset = Dataset::from_parts(space, blocks, y)?.prepare()?;
    Ok(EnergyPrepared {
        dataset,
        names: ENERGY_VARIABLES.iter().map(|s| s.to_string()).collect(),
        days_dropped,
        incomplete_days,
        scaled_ranges,
    })
}

/// Support set rendered with 1-based block labels, for reports.
pub fn support_labels(support: &BTreeSet<usize>, names: &[String]) -> Vec<String> {
    support
        .iter()
        .map(|&j| names.get(j).cloned().unwrap_or_else(|| format!("block{}", j + 1)))
        .collect()
}
