//! Series files: CSV `k,re,im` (im optional) or JSON
//! `{"start_index":0,"samples":[[re,im],...]}`.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{NhssaError, Result};
use crate::scalar::Real;
use crate::signal::ComplexSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default)]
    pub start_index: i64,
    pub samples: Vec<[f64; 2]>,
}

impl SeriesFile {
    pub fn from_series<T: Real>(x: &ComplexSeries<T>, tag: Option<&str>) -> Self {
        let samples = x
            .samples()
            .iter()
            .map(|c| [to_f64(c.re), to_f64(c.im)])
            .collect();
        Self {
            tag: tag.map(str::to_owned),
            start_index: x.start_index(),
            samples,
        }
    }

    pub fn to_series<T: Real>(&self) -> Result<ComplexSeries<T>> {
        let samples = self
            .samples
            .iter()
            .map(|&[re, im]| Complex::new(T::lit(re), T::lit(im)))
            .collect();
        ComplexSeries::with_start(samples, self.start_index)
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    k: i64,
    re: f64,
    #[serde(default)]
    im: Option<f64>,
}

pub fn read_csv<T: Real, R: Read>(reader: R) -> Result<ComplexSeries<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut start = None;
    let mut samples = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row?;
        let k0 = *start.get_or_insert(row.k);
        if row.k != k0 + i as i64 {
            return Err(NhssaError::Parse(format!(
                "non-consecutive index k = {} at row {}",
                row.k,
                i + 1
            )));
        }
        let im = row.im.unwrap_or(0.0);
        samples.push(Complex::new(T::lit(row.re), T::lit(im)));
    }
    if samples.is_empty() {
        return Err(NhssaError::InvalidInput(
            "series file has no samples".into(),
        ));
    }
    ComplexSeries::with_start(samples, start.unwrap_or(0))
}

pub fn write_csv<T: Real, W: Write>(x: &ComplexSeries<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "re", "im"])?;
    for (i, c) in x.samples().iter().enumerate() {
        let k = x.start_index() + i as i64;
        w.write_record([k.to_string(), fmt(c.re), fmt(c.im)])?;
    }
    w.flush()?;
    Ok(())
}

fn to_f64<T: Real>(v: T) -> f64 {
    ToPrimitive::to_f64(&v).unwrap_or(f64::NAN)
}

fn fmt<T: Real>(v: T) -> String {
    format!("{:e}", to_f64(v))
}

pub fn read_json<T: Real, R: Read>(reader: R) -> Result<ComplexSeries<T>> {
    let file: SeriesFile = serde_json::from_reader(reader)?;
    if file.samples.is_empty() {
        return Err(NhssaError::InvalidInput(
            "series file has no samples".into(),
        ));
    }
    file.to_series()
}

pub fn write_json<T: Real, W: Write>(
    x: &ComplexSeries<T>,
    tag: Option<&str>,
    writer: W,
) -> Result<()> {
    serde_json::to_writer(writer, &SeriesFile::from_series(x, tag))?;
    Ok(())
}

/// Picks the format from the extension; anything but `.json` is read as CSV.
pub fn read_series<T: Real>(path: &Path) -> Result<ComplexSeries<T>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    if is_json(path) {
        read_json(reader)
    } else {
        read_csv(reader)
    }
}

pub fn write_series<T: Real>(x: &ComplexSeries<T>, tag: Option<&str>, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    if is_json(path) {
        write_json(x, tag, file)
    } else {
        write_csv(x, file)
    }
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}
