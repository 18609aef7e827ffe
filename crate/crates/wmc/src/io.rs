//! On-disk formats.
//!
//! Real matrices are headerless CSV, one row per line. Matrices that may be
//! complex are JSON objects `{"rows", "cols", "re", "im"}` with row-major nested
//! arrays; `im` may be omitted for real data. Sample sets are JSON with
//! `[row, col]` pairs in draw order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wmc_core::{Mat, SampleSet, C64};

pub fn write_matrix_csv<W: Write>(out: W, x: &Mat<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in x.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<Mat<f64>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().with_context(|| format!("row {i}: bad number {f:?}")))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    from_rows(&rows)
}

fn from_rows<T: Copy + nalgebra::Scalar>(rows: &[Vec<T>]) -> Result<Mat<T>> {
    let n1 = rows.len();
    let n2 = rows.first().map_or(0, Vec::len);
    if n1 == 0 || n2 == 0 {
        bail!("empty matrix");
    }
    if let Some(i) = rows.iter().position(|r| r.len() != n2) {
        bail!("row {i} has {} entries, expected {n2}", rows[i].len());
    }
    Ok(Mat::from_fn(n1, n2, |k, l| rows[k][l]))
}

pub fn save_matrix_csv(path: &Path, x: &Mat<f64>) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_matrix_csv(f, x)
}

pub fn load_matrix_csv(path: &Path) -> Result<Mat<f64>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_matrix_csv(f).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

/// A matrix read from disk, real unless the file carried imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyMatrix {
    Real(Mat<f64>),
    Complex(Mat<C64>),
}

impl MatrixJson {
    pub fn from_real(x: &Mat<f64>) -> Self {
        MatrixJson {
            rows: x.nrows(),
            cols: x.ncols(),
            re: x.row_iter().map(|r| r.iter().copied().collect()).collect(),
            im: None,
        }
    }

    pub fn from_complex(x: &Mat<C64>) -> Self {
        MatrixJson {
            rows: x.nrows(),
            cols: x.ncols(),
            re: x.row_iter().map(|r| r.iter().map(|z| z.re).collect()).collect(),
            im: Some(x.row_iter().map(|r| r.iter().map(|z| z.im).collect()).collect()),
        }
    }

    pub fn into_matrix(self) -> Result<AnyMatrix> {
        let re = from_rows(&self.re)?;
        if re.shape() != (self.rows, self.cols) {
            bail!(
                "declared {}x{} but data is {}x{}",
                self.rows,
                self.cols,
                re.nrows(),
                re.ncols()
            );
        }
        match self.im {
            None => Ok(AnyMatrix::Real(re)),
            Some(im) => {
                let im = from_rows(&im)?;
                if im.shape() != re.shape() {
                    bail!("real and imaginary parts differ in shape");
                }
                Ok(AnyMatrix::Complex(re.zip_map(&im, C64::new)))
            }
        }
    }
}

/// Load a matrix by extension: `.json` in the pair format, anything else as CSV.
pub fn load_any_matrix(path: &Path) -> Result<AnyMatrix> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?;
        let parsed: MatrixJson = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        parsed.into_matrix()
    } else {
        load_matrix_csv(path).map(AnyMatrix::Real)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSetJson {
    pub n1: usize,
    pub n2: usize,
    pub with_replacement: bool,
    pub indices: Vec<[usize; 2]>,
}

impl From<&SampleSet> for SampleSetJson {
    fn from(s: &SampleSet) -> Self {
        SampleSetJson {
            n1: s.n1(),
            n2: s.n2(),
            with_replacement: s.with_replacement(),
            indices: s.indices().iter().map(|&(k, l)| [k, l]).collect(),
        }
    }
}

impl SampleSetJson {
    pub fn into_sample_set(self) -> Result<SampleSet> {
        let idx = self.indices.into_iter().map(|[k, l]| (k, l)).collect();
        Ok(SampleSet::new(self.n1, self.n2, idx, self.with_replacement)?)
    }
}

pub fn load_sample_set(path: &Path) -> Result<SampleSet> {
    let text = fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?;
    let parsed: SampleSetJson = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    parsed.into_sample_set()
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let x = Mat::from_row_slice(2, 3, &[0.1, -2.5e-300, 3.0, f64::MIN_POSITIVE, 1.0 / 3.0, -0.0]);
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &x).unwrap();
        assert_eq!(read_matrix_csv(buf.as_slice()).unwrap(), x);
    }

    #[test]
    fn ragged_csv_rejected() {
        assert!(read_matrix_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(read_matrix_csv("".as_bytes()).is_err());
    }

    #[test]
    fn complex_json_round_trip() {
        let x = Mat::from_fn(2, 2, |k, l| C64::new(k as f64, -(l as f64) / 7.0));
        let text = serde_json::to_string(&MatrixJson::from_complex(&x)).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_matrix().unwrap(), AnyMatrix::Complex(x));
    }

    #[test]
    fn declared_shape_checked() {
        let bad = MatrixJson {
            rows: 3,
            cols: 1,
            re: vec![vec![1.0]],
            im: None,
        };
        assert!(bad.into_matrix().is_err());
    }

    #[test]
    fn sample_set_round_trip() {
        let s = SampleSet::new(3, 3, vec![(0, 1), (2, 2), (0, 1)], true).unwrap();
        let j = SampleSetJson::from(&s);
        let text = serde_json::to_string(&j).unwrap();
        let back: SampleSetJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_sample_set().unwrap(), s);
    }
}
