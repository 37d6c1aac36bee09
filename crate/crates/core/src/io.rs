//! On-disk formats: the `TSR1` series/tensor file (text or little-endian
//! binary), model JSON files, and CSV panels.
//!
//! A series file is one header line
//! `TSR1 d=<d> dims=<p1,…,pd> T=<T>` (plus ` format=f64le` for the binary
//! variant) followed by `T` records of `∏p_i` values in first-index-fastest
//! order. A single tensor is stored as a series with `T=1`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LrtarModel, TensorSeries};
use crate::tensor::DenseTensor;
use crate::tucker::TuckerDecomposition;

pub const MAGIC: &str = "TSR1";
const BINARY_TOKEN: &str = "format=f64le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesHeader {
    pub dims: Vec<usize>,
    pub len: usize,
    pub encoding: Encoding,
}

impl SeriesHeader {
    pub fn record_len(&self) -> usize {
        self.dims.iter().product()
    }

    fn render(&self) -> String {
        let dims: Vec<String> = self.dims.iter().map(|p| p.to_string()).collect();
        let mut s = format!(
            "{MAGIC} d={} dims={} T={}",
            self.dims.len(),
            dims.join(","),
            self.len
        );
        if self.encoding == Encoding::Binary {
            s.push(' ');
            s.push_str(BINARY_TOKEN);
        }
        s
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("series header: {msg} in {line:?}"));
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some(MAGIC) {
            return Err(bad("missing TSR1 magic"));
        }
        let (mut d, mut dims, mut len, mut encoding) = (None, None, None, Encoding::Text);
        for tok in tokens {
            if tok == BINARY_TOKEN {
                encoding = Encoding::Binary;
                continue;
            }
            let (key, value) = tok.split_once('=').ok_or_else(|| bad("malformed field"))?;
            match key {
                "d" => d = Some(value.parse::<usize>().map_err(|_| bad("bad order"))?),
                "dims" => {
                    let v: std::result::Result<Vec<usize>, _> =
                        value.split(',').map(str::parse).collect();
                    dims = Some(v.map_err(|_| bad("bad dims"))?);
                }
                "T" => len = Some(value.parse::<usize>().map_err(|_| bad("bad length"))?),
                _ => return Err(bad("unknown field")),
            }
        }
        let (d, dims, len) = match (d, dims, len) {
            (Some(d), Some(dims), Some(len)) => (d, dims, len),
            _ => return Err(bad("missing field")),
        };
        if dims.len() != d || d == 0 {
            return Err(bad("order does not match dims"));
        }
        if dims.contains(&0) {
            return Err(bad("dims must be positive"));
        }
        Ok(Self {
            dims,
            len,
            encoding,
        })
    }
}

/// Writes records (each of length `∏dims`) under a series header.
fn write_records<'a, W: Write>(
    w: &mut W,
    dims: &[usize],
    records: impl ExactSizeIterator<Item = &'a [f64]>,
    encoding: Encoding,
) -> Result<()> {
    let header = SeriesHeader {
        dims: dims.to_vec(),
        len: records.len(),
        encoding,
    };
    writeln!(w, "{}", header.render())?;
    for rec in records {
        match encoding {
            Encoding::Text => {
                let mut line = String::with_capacity(rec.len() * 20);
                for (i, x) in rec.iter().enumerate() {
                    if i > 0 {
                        line.push(' ');
                    }
                    line.push_str(&x.to_string());
                }
                writeln!(w, "{line}")?;
            }
            Encoding::Binary => {
                for x in rec {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_records<R: BufRead>(r: &mut R) -> Result<(SeriesHeader, Vec<Vec<f64>>)> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(Error::Parse("empty series file".into()));
    }
    let header = SeriesHeader::parse(line.trim_end())?;
    let n = header.record_len();
    let mut records = Vec::with_capacity(header.len);
    match header.encoding {
        Encoding::Text => {
            let mut values = Vec::with_capacity(n * header.len);
            for (lineno, l) in r.lines().enumerate() {
                let l = l?;
                for tok in l.split_whitespace() {
                    let x: f64 = tok.parse().map_err(|_| {
                        Error::Parse(format!("line {}: bad number {tok:?}", lineno + 2))
                    })?;
                    values.push(x);
                }
            }
            if values.len() != n * header.len {
                return Err(Error::Parse(format!(
                    "series body has {} values, header promises {}",
                    values.len(),
                    n * header.len
                )));
            }
            records.extend(values.chunks(n.max(1)).map(<[f64]>::to_vec));
        }
        Encoding::Binary => {
            let mut bytes = Vec::new();
            r.read_to_end(&mut bytes)?;
            if bytes.len() != 8 * n * header.len {
                return Err(Error::Parse(format!(
                    "binary series body has {} bytes, header promises {}",
                    bytes.len(),
                    8 * n * header.len
                )));
            }
            let values: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            records.extend(values.chunks(n.max(1)).map(<[f64]>::to_vec));
        }
    }
    Ok((header, records))
}

pub fn write_series<W: Write>(w: &mut W, series: &TensorSeries, encoding: Encoding) -> Result<()> {
    write_records(
        w,
        series.dims(),
        series.observations().iter().map(|o| o.data()),
        encoding,
    )
}

pub fn read_series<R: BufRead>(r: &mut R) -> Result<TensorSeries> {
    let (header, records) = read_records(r)?;
    let obs = records
        .into_iter()
        .map(|rec| DenseTensor::new(header.dims.clone(), rec))
        .collect::<Result<Vec<_>>>()?;
    TensorSeries::new(header.dims, obs)
}

pub fn write_tensor<W: Write>(w: &mut W, t: &DenseTensor, encoding: Encoding) -> Result<()> {
    write_records(w, t.dims(), std::iter::once(t.data()), encoding)
}

pub fn read_tensor<R: BufRead>(r: &mut R) -> Result<DenseTensor> {
    let (header, mut records) = read_records(r)?;
    if header.len != 1 {
        return Err(Error::Parse(format!(
            "tensor file must hold exactly one record, found T={}",
            header.len
        )));
    }
    DenseTensor::new(header.dims, records.pop().expect("one record"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn save_series(path: &Path, series: &TensorSeries, encoding: Encoding) -> Result<()> {
    write_series(&mut create(path)?, series, encoding)
}

pub fn load_series(path: &Path) -> Result<TensorSeries> {
    read_series(&mut open(path)?)
}

pub fn save_tensor(path: &Path, t: &DenseTensor, encoding: Encoding) -> Result<()> {
    write_tensor(&mut create(path)?, t, encoding)
}

pub fn load_tensor(path: &Path) -> Result<DenseTensor> {
    read_tensor(&mut open(path)?)
}

/// JSON form of an [`LrtarModel`]. `noise_cov` is stored row by row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub dims: Vec<usize>,
    pub transition: DenseTensor,
    pub noise_cov: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tucker: Option<TuckerDecomposition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_radius: Option<f64>,
}

impl ModelFile {
    pub fn from_model(model: &LrtarModel) -> Self {
        let s = model.noise_cov();
        Self {
            dims: model.state_dims().to_vec(),
            transition: model.transition().clone(),
            noise_cov: (0..s.nrows())
                .map(|i| s.row(i).iter().copied().collect())
                .collect(),
            tucker: model.tucker().cloned(),
            spectral_radius: Some(model.spectral_radius()),
        }
    }

    pub fn into_model(self) -> Result<LrtarModel> {
        let p = self.noise_cov.len();
        if self.noise_cov.iter().any(|r| r.len() != p) {
            return Err(Error::Parse(
                "noise_cov must be a square array of rows".into(),
            ));
        }
        let flat: Vec<f64> = self.noise_cov.concat();
        let noise = DMatrix::from_row_slice(p, p, &flat);
        let model = LrtarModel::new(self.transition, noise)?;
        if model.state_dims() != self.dims.as_slice() {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                found: model.state_dims().to_vec(),
            });
        }
        match self.tucker {
            Some(t) => model.with_tucker(t),
            None => Ok(model),
        }
    }
}

pub fn save_model(path: &Path, model: &LrtarModel) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &ModelFile::from_model(model))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LrtarModel> {
    let file: ModelFile = serde_json::from_reader(open(path)?)?;
    file.into_model()
}

/// Reads a CSV panel with one row per time point and `∏dims` columns, in
/// first-index-fastest order. A leading row that does not parse as numbers
/// is taken as a header. With `demean`, every column is centred.
pub fn read_csv_series<R: Read>(r: R, dims: &[usize], demean: bool) -> Result<TensorSeries> {
    let p: usize = dims.iter().product();
    if dims.is_empty() || p == 0 {
        return Err(Error::InvalidArgument(format!(
            "dims must be nonempty and positive, got {dims:?}"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("CSV: {e}")))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::Parse(format!(
                    "CSV row {}: non-numeric field",
                    i + 1
                )))
            }
        };
        if row.len() != p {
            return Err(Error::DimensionMismatch {
                expected: vec![p],
                found: vec![row.len()],
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("CSV has no data rows".into()));
    }
    if demean {
        let n = rows.len() as f64;
        for j in 0..p {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            for r in rows.iter_mut() {
                r[j] -= mean;
            }
        }
    }
    let obs = rows
        .into_iter()
        .map(|r| DenseTensor::new(dims.to_vec(), r))
        .collect::<Result<Vec<_>>>()?;
    TensorSeries::new(dims.to_vec(), obs)
}

/// Writes a series as a headerless CSV panel, one row per time point.
pub fn write_csv_series<W: Write>(w: W, series: &TensorSeries) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for obs in series.observations() {
        writer
            .write_record(obs.data().iter().map(|x| x.to_string()))
            .map_err(|e| Error::Parse(format!("CSV: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}
