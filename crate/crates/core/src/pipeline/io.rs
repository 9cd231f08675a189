//! File formats shared by the CLI verbs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::mode_extract::{ExtractedData, ExtractedMode};
use crate::norming::SpectralData;
use crate::trace_sim::ComplexTrace;

const TRACE_HEADER: [&str; 5] = ["t", "re0", "im0", "re1", "im1"];

/// Relative tolerance on the spacing of the time column.
const UNIFORM_TOL: f64 = 1e-9;

pub fn write_traces(path: &Path, r0: &ComplexTrace, r1: &ComplexTrace) -> Result<()> {
    if r0.samples.len() != r1.samples.len() || r0.t_obs != r1.t_obs {
        return Err(Error::InvalidInput("traces are not on a common grid".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", TRACE_HEADER.join(","))?;
    for (i, (a, b)) in r0.samples.iter().zip(&r1.samples).enumerate() {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r0.time(i),
            a.re,
            a.im,
            b.re,
            b.im
        )?;
    }
    w.flush()?;
    Ok(())
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(File::open(path)?))
}

fn check_header(reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Rows of numbers with the given header; errors carry 1-based file lines.
fn read_numeric(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv_reader(path)?;
    check_header(&mut reader, header)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line, msg: format!("invalid number `{f}`") })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(rows)
}

/// Time column must start at zero, increase strictly and be uniform.
fn check_time_column(t: &[f64]) -> Result<f64> {
    if t[0] != 0.0 {
        return Err(Error::Schema(format!("time column starts at {} instead of 0", t[0])));
    }
    if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Schema(format!("time column not increasing at row {}", i + 2)));
    }
    let t_obs = *t.last().unwrap();
    let dt = t_obs / (t.len() - 1) as f64;
    if let Some(i) = t
        .iter()
        .enumerate()
        .position(|(i, &ti)| (ti - i as f64 * dt).abs() > UNIFORM_TOL * t_obs)
    {
        return Err(Error::Schema(format!("time grid is not uniform at row {}", i + 1)));
    }
    Ok(t_obs)
}

pub fn read_traces(path: &Path) -> Result<(ComplexTrace, ComplexTrace)> {
    let rows = read_numeric(path, &TRACE_HEADER)?;
    let t: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let t_obs = check_time_column(&t)?;
    let r0 = rows.iter().map(|r| Complex64::new(r[1], r[2])).collect();
    let r1 = rows.iter().map(|r| Complex64::new(r[3], r[4])).collect();
    Ok((ComplexTrace::new(t_obs, r0)?, ComplexTrace::new(t_obs, r1)?))
}

/// Uniform-grid function from a CSV with header `x,<name>`.
pub fn read_grid_csv(path: &Path) -> Result<GridFunction> {
    let mut reader = csv_reader(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() != 2 || header[0] != "x" {
        return Err(Error::Schema(format!("expected header `x,<value>`, found `{}`", header.join(","))));
    }
    let names: Vec<&str> = header.iter().map(String::as_str).collect();
    drop(reader);
    let rows = read_numeric(path, &names)?;
    let x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let end = check_time_column(&x)?;
    if (end - 1.0).abs() > UNIFORM_TOL {
        return Err(Error::Schema(format!("grid ends at {end} instead of 1")));
    }
    GridFunction::new(rows.into_iter().map(|r| r[1]).collect())
}

pub fn write_grid_csv(path: &Path, name: &str, f: &GridFunction) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,{name}")?;
    for (x, v) in f.nodes().zip(f.values()) {
        writeln!(w, "{x:.16e},{v:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_source_csv(path: &Path, re: &GridFunction, im: &GridFunction) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,ahat_re,ahat_im")?;
    for ((x, a), b) in re.nodes().zip(re.values()).zip(im.values()) {
        writeln!(w, "{x:.16e},{a:.16e},{b:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedJson {
    pub lambda: Vec<f64>,
    pub p0_re: Vec<f64>,
    pub p0_im: Vec<f64>,
    pub p1_re: Vec<f64>,
    pub p1_im: Vec<f64>,
    pub residual: Vec<f64>,
}

impl From<&ExtractedData> for ExtractedJson {
    fn from(d: &ExtractedData) -> Self {
        let m = &d.modes;
        Self {
            lambda: m.iter().map(|x| x.lambda).collect(),
            p0_re: m.iter().map(|x| x.p0.re).collect(),
            p0_im: m.iter().map(|x| x.p0.im).collect(),
            p1_re: m.iter().map(|x| x.p1.re).collect(),
            p1_im: m.iter().map(|x| x.p1.im).collect(),
            residual: m.iter().map(|x| x.residual).collect(),
        }
    }
}

impl ExtractedJson {
    /// Mode data only; ranks and Gram deviation are not stored in the file.
    pub fn into_data(self) -> Result<ExtractedData> {
        let n = self.lambda.len();
        let lens = [
            self.p0_re.len(),
            self.p0_im.len(),
            self.p1_re.len(),
            self.p1_im.len(),
            self.residual.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Schema("extracted arrays have inconsistent lengths".into()));
        }
        let modes = (0..n)
            .map(|i| ExtractedMode {
                lambda: self.lambda[i],
                p0: Complex64::new(self.p0_re[i], self.p0_im[i]),
                p1: Complex64::new(self.p1_re[i], self.p1_im[i]),
                residual: self.residual[i],
            })
            .collect();
        Ok(ExtractedData {
            modes,
            rank_left: n,
            rank_right: n,
            gram_deviation: 0.0,
            warnings: Vec::new(),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Schema(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })
}

pub fn read_extracted(path: &Path) -> Result<ExtractedData> {
    read_json::<ExtractedJson>(path)?.into_data()
}

pub fn read_spectral(path: &Path) -> Result<SpectralData> {
    let sd: SpectralData = read_json(path)?;
    sd.validate()?;
    Ok(sd)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}
