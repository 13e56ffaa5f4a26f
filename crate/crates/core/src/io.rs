//! Versioned structured-text persistence.
//!
//! Every artifact is a line-oriented UTF-8 file: a magic+version first line,
//! `key value` header lines (with free-form `meta` provenance entries), then
//! one record per outcome in canonical order (ascending cardinality, then
//! ascending mask). Counts round-trip bit-exactly as decimal integers; every
//! real value is written with 17 significant digits, which round-trips an
//! IEEE double exactly. Writers are deterministic, so identical inputs yield
//! identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::distribution::{DenseDistribution, EmpiricalDataset};
use crate::error::{Error, Result};
use crate::hbm::HbmModel;
use crate::lattice::Lattice;
use crate::rbm::RbmModel;
use ndarray::{Array1, Array2};

const DIST_MAGIC: &str = "hobm-dist v1";
const HBM_MAGIC: &str = "hobm-hbm v1";
const RBM_MAGIC: &str = "hobm-rbm v1";

/// Ordered free-form provenance entries carried in file headers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance(pub BTreeMap<String, String>);

impl Provenance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    fn write(&self, out: &mut impl Write) -> Result<()> {
        for (key, value) in &self.0 {
            if key.contains(char::is_whitespace) || key.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "provenance key {key:?} must be a single token"
                )));
            }
            if value.contains('\n') {
                return Err(Error::InvalidArgument(format!(
                    "provenance value for {key:?} must be a single line"
                )));
            }
            writeln!(out, "meta {key} {value}")?;
        }
        Ok(())
    }
}

/// 17 significant digits: lossless for f64.
fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

struct LineParser<R: BufRead> {
    lines: std::iter::Enumerate<std::io::Lines<R>>,
}

impl<R: BufRead> LineParser<R> {
    fn new(reader: R) -> Self {
        Self {
            lines: reader.lines().enumerate(),
        }
    }

    fn next_line(&mut self) -> Result<(usize, String)> {
        match self.lines.next() {
            Some((idx, Ok(line))) => Ok((idx + 1, line)),
            Some((idx, Err(err))) => Err(Error::Parse {
                line: idx + 1,
                message: err.to_string(),
            }),
            None => Err(Error::Parse {
                line: 0,
                message: "unexpected end of file".into(),
            }),
        }
    }

    fn expect_magic(&mut self, magic: &str) -> Result<()> {
        let (line, text) = self.next_line()?;
        if text != magic {
            return Err(Error::Parse {
                line,
                message: format!("expected header {magic:?}, found {text:?}"),
            });
        }
        Ok(())
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {key} value {value:?}"),
    })
}

/// Header shared by the record-oriented formats.
struct Header {
    fields: BTreeMap<String, (usize, String)>,
    provenance: Provenance,
    records_line: usize,
    records: usize,
}

fn read_header<R: BufRead>(parser: &mut LineParser<R>, keys: &[&str]) -> Result<Header> {
    let mut fields = BTreeMap::new();
    let mut provenance = Provenance::new();
    loop {
        let (line, text) = parser.next_line()?;
        let (key, value) = text.split_once(' ').ok_or_else(|| Error::Parse {
            line,
            message: format!("malformed header line {text:?}"),
        })?;
        match key {
            "meta" => {
                let (mk, mv) = value.split_once(' ').unwrap_or((value, ""));
                provenance.0.insert(mk.to_string(), mv.to_string());
            }
            "records" => {
                let records = parse_field(line, "records", value)?;
                for &required in keys {
                    if !fields.contains_key(required) {
                        return Err(Error::Parse {
                            line,
                            message: format!("missing header field {required:?}"),
                        });
                    }
                }
                return Ok(Header {
                    fields,
                    provenance,
                    records_line: line,
                    records,
                });
            }
            known if keys.contains(&known) => {
                fields.insert(known.to_string(), (line, value.to_string()));
            }
            unknown => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown header field {unknown:?}"),
                });
            }
        }
    }
}

impl Header {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (line, value) = self.fields.get(key).expect("checked by read_header");
        parse_field(*line, key, value)
    }
}

/// Reads `records` lines of `mask value` covering every outcome exactly once,
/// returning a mask-indexed vector.
fn read_records<R: BufRead, T: Copy + std::str::FromStr>(
    parser: &mut LineParser<R>,
    n: usize,
    records: usize,
    records_line: usize,
) -> Result<Vec<T>> {
    let size = 1usize << n;
    if records != size {
        return Err(Error::Parse {
            line: records_line,
            message: format!("expected {size} records for n = {n}, header says {records}"),
        });
    }
    let mut values: Vec<Option<T>> = vec![None; size];
    for _ in 0..records {
        let (line, text) = parser.next_line()?;
        let (mask_text, value_text) = text.split_once(' ').ok_or_else(|| Error::Parse {
            line,
            message: format!("malformed record {text:?}"),
        })?;
        let mask: usize = parse_field(line, "mask", mask_text)?;
        if mask >= size {
            return Err(Error::Parse {
                line,
                message: format!("mask {mask} out of range for n = {n}"),
            });
        }
        if values[mask].is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate record for mask {mask}"),
            });
        }
        values[mask] = Some(parse_field(line, "value", value_text)?);
    }
    Ok(values.into_iter().map(|v| v.expect("all filled")).collect())
}

/// What a `hobm-dist` file holds.
#[derive(Clone, Debug)]
pub enum DistributionFile {
    Distribution(DenseDistribution, Provenance),
    Counts(EmpiricalDataset, Provenance),
}

pub fn write_distribution(
    out: &mut impl Write,
    dist: &DenseDistribution,
    provenance: &Provenance,
) -> Result<()> {
    writeln!(out, "{DIST_MAGIC}")?;
    writeln!(out, "n {}", dist.n())?;
    writeln!(out, "kind distribution")?;
    provenance.write(out)?;
    writeln!(out, "records {}", dist.len())?;
    for x in Lattice::new(dist.n())?.canonical_order() {
        writeln!(out, "{} {}", x.bits(), fmt_real(dist.prob(x)))?;
    }
    Ok(())
}

pub fn write_dataset(
    out: &mut impl Write,
    data: &EmpiricalDataset,
    provenance: &Provenance,
) -> Result<()> {
    writeln!(out, "{DIST_MAGIC}")?;
    writeln!(out, "n {}", data.n())?;
    writeln!(out, "kind counts")?;
    provenance.write(out)?;
    writeln!(out, "records {}", data.counts().len())?;
    for x in Lattice::new(data.n())?.canonical_order() {
        writeln!(out, "{} {}", x.bits(), data.counts()[x.index()])?;
    }
    Ok(())
}

pub fn read_distribution_file(reader: impl Read) -> Result<DistributionFile> {
    let mut parser = LineParser::new(BufReader::new(reader));
    parser.expect_magic(DIST_MAGIC)?;
    let header = read_header(&mut parser, &["n", "kind"])?;
    let n: usize = header.get("n")?;
    Lattice::new(n).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let kind: String = header.get("kind")?;
    match kind.as_str() {
        "distribution" => {
            let probs = read_records(&mut parser, n, header.records, header.records_line)?;
            Ok(DistributionFile::Distribution(
                DenseDistribution::new(probs)?,
                header.provenance,
            ))
        }
        "counts" => {
            let counts = read_records(&mut parser, n, header.records, header.records_line)?;
            Ok(DistributionFile::Counts(
                EmpiricalDataset::new(counts)?,
                header.provenance,
            ))
        }
        other => Err(Error::Parse {
            line: 0,
            message: format!("unknown kind {other:?}"),
        }),
    }
}

pub fn save_distribution(
    path: impl AsRef<Path>,
    dist: &DenseDistribution,
    provenance: &Provenance,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_distribution(&mut out, dist, provenance)?;
    out.flush()?;
    Ok(())
}

pub fn save_dataset(
    path: impl AsRef<Path>,
    data: &EmpiricalDataset,
    provenance: &Provenance,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_dataset(&mut out, data, provenance)?;
    out.flush()?;
    Ok(())
}

pub fn load_distribution_file(path: impl AsRef<Path>) -> Result<DistributionFile> {
    read_distribution_file(File::open(path)?)
}

/// Loads a counts file, rejecting the other kind.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(EmpiricalDataset, Provenance)> {
    match load_distribution_file(path)? {
        DistributionFile::Counts(data, prov) => Ok((data, prov)),
        DistributionFile::Distribution(..) => Err(Error::InvalidArgument(
            "expected a counts file, found a distribution".into(),
        )),
    }
}

pub fn write_hbm_model(
    out: &mut impl Write,
    model: &HbmModel,
    provenance: &Provenance,
) -> Result<()> {
    writeln!(out, "{HBM_MAGIC}")?;
    writeln!(out, "n {}", model.n())?;
    writeln!(out, "k {}", model.k())?;
    writeln!(out, "normalized {}", model.normalized())?;
    writeln!(out, "theta_bottom {}", fmt_real(model.theta_bottom()))?;
    provenance.write(out)?;
    writeln!(out, "records {}", model.index_set().len())?;
    for (s, &theta) in model.index_set().iter().zip(model.theta()) {
        writeln!(out, "{} {}", s.bits(), fmt_real(theta))?;
    }
    Ok(())
}

pub fn read_hbm_model(reader: impl Read) -> Result<(HbmModel, Provenance)> {
    let mut parser = LineParser::new(BufReader::new(reader));
    parser.expect_magic(HBM_MAGIC)?;
    let header = read_header(&mut parser, &["n", "k", "normalized", "theta_bottom"])?;
    let n: usize = header.get("n")?;
    let k: usize = header.get("k")?;
    let normalized: bool = header.get("normalized")?;
    let theta_bottom: f64 = header.get("theta_bottom")?;
    let index_set = crate::lattice::model_index_set(n, k).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    if header.records != index_set.len() {
        return Err(Error::Parse {
            line: header.records_line,
            message: format!(
                "expected {} records for n={n} k={k}, header says {}",
                index_set.len(),
                header.records
            ),
        });
    }
    let mut theta = vec![f64::NAN; index_set.len()];
    let mut seen = vec![false; index_set.len()];
    for _ in 0..header.records {
        let (line, text) = parser.next_line()?;
        let (mask_text, value_text) = text.split_once(' ').ok_or_else(|| Error::Parse {
            line,
            message: format!("malformed record {text:?}"),
        })?;
        let mask: u32 = parse_field(line, "mask", mask_text)?;
        let pos = index_set
            .iter()
            .position(|s| s.bits() == mask)
            .ok_or_else(|| Error::Parse {
                line,
                message: format!("mask {mask} not in the order-{k} index set"),
            })?;
        if seen[pos] {
            return Err(Error::Parse {
                line,
                message: format!("duplicate record for mask {mask}"),
            });
        }
        seen[pos] = true;
        theta[pos] = parse_field(line, "theta", value_text)?;
    }
    let model = HbmModel::from_theta(n, k, theta, theta_bottom, normalized)?;
    Ok((model, header.provenance))
}

pub fn save_hbm_model(
    path: impl AsRef<Path>,
    model: &HbmModel,
    provenance: &Provenance,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_hbm_model(&mut out, model, provenance)?;
    out.flush()?;
    Ok(())
}

pub fn load_hbm_model(path: impl AsRef<Path>) -> Result<(HbmModel, Provenance)> {
    read_hbm_model(File::open(path)?)
}

pub fn write_rbm_model(
    out: &mut impl Write,
    model: &RbmModel,
    provenance: &Provenance,
) -> Result<()> {
    writeln!(out, "{RBM_MAGIC}")?;
    writeln!(out, "n {}", model.n())?;
    writeln!(out, "m {}", model.m())?;
    provenance.write(out)?;
    let join = |values: &[f64]| {
        values
            .iter()
            .map(|&v| fmt_real(v))
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(out, "visible_bias {}", join(model.visible_bias().as_slice().unwrap()))?;
    writeln!(out, "hidden_bias {}", join(model.hidden_bias().as_slice().unwrap()))?;
    for i in 0..model.n() {
        let row: Vec<f64> = (0..model.m()).map(|j| model.weights()[(i, j)]).collect();
        writeln!(out, "weights_row {i} {}", join(&row))?;
    }
    Ok(())
}

pub fn read_rbm_model(reader: impl Read) -> Result<(RbmModel, Provenance)> {
    let mut parser = LineParser::new(BufReader::new(reader));
    parser.expect_magic(RBM_MAGIC)?;
    let mut n: Option<usize> = None;
    let mut m: Option<usize> = None;
    let mut provenance = Provenance::new();
    let mut visible_bias: Option<Vec<f64>> = None;
    let mut hidden_bias: Option<Vec<f64>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();

    let parse_reals = |line: usize, text: &str, expect: usize| -> Result<Vec<f64>> {
        let values: Vec<f64> = if text.is_empty() {
            Vec::new()
        } else {
            text.split(' ')
                .map(|tok| parse_field(line, "real", tok))
                .collect::<Result<_>>()?
        };
        if values.len() != expect {
            return Err(Error::Parse {
                line,
                message: format!("expected {expect} values, found {}", values.len()),
            });
        }
        Ok(values)
    };

    loop {
        let (line, text) = match parser.lines.next() {
            Some((idx, Ok(line))) => (idx + 1, line),
            Some((idx, Err(err))) => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: err.to_string(),
                })
            }
            None => break,
        };
        let (key, value) = text.split_once(' ').ok_or_else(|| Error::Parse {
            line,
            message: format!("malformed line {text:?}"),
        })?;
        match key {
            "n" => n = Some(parse_field(line, "n", value)?),
            "m" => m = Some(parse_field(line, "m", value)?),
            "meta" => {
                let (mk, mv) = value.split_once(' ').unwrap_or((value, ""));
                provenance.0.insert(mk.to_string(), mv.to_string());
            }
            "visible_bias" => {
                let n = n.ok_or(Error::Parse {
                    line,
                    message: "visible_bias before n".into(),
                })?;
                visible_bias = Some(parse_reals(line, value, n)?);
            }
            "hidden_bias" => {
                let m = m.ok_or(Error::Parse {
                    line,
                    message: "hidden_bias before m".into(),
                })?;
                hidden_bias = Some(parse_reals(line, value, m)?);
            }
            "weights_row" => {
                let m = m.ok_or(Error::Parse {
                    line,
                    message: "weights_row before m".into(),
                })?;
                let (idx_text, rest) = value.split_once(' ').unwrap_or((value, ""));
                let idx: usize = parse_field(line, "row index", idx_text)?;
                if idx != rows.len() {
                    return Err(Error::Parse {
                        line,
                        message: format!("weights_row {idx} out of order"),
                    });
                }
                rows.push(parse_reals(line, rest, m)?);
            }
            unknown => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown field {unknown:?}"),
                });
            }
        }
    }

    let n = n.ok_or(Error::Parse {
        line: 0,
        message: "missing n".into(),
    })?;
    let m = m.ok_or(Error::Parse {
        line: 0,
        message: "missing m".into(),
    })?;
    let visible_bias = visible_bias.ok_or(Error::Parse {
        line: 0,
        message: "missing visible_bias".into(),
    })?;
    let hidden_bias = hidden_bias.ok_or(Error::Parse {
        line: 0,
        message: "missing hidden_bias".into(),
    })?;
    if rows.len() != n {
        return Err(Error::Parse {
            line: 0,
            message: format!("expected {n} weight rows, found {}", rows.len()),
        });
    }
    let mut weights = Array2::zeros((n, m));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, w) in row.into_iter().enumerate() {
            weights[(i, j)] = w;
        }
    }
    let model = RbmModel::from_parts(Array1::from(visible_bias), Array1::from(hidden_bias), weights)?;
    Ok((model, provenance))
}

pub fn save_rbm_model(
    path: impl AsRef<Path>,
    model: &RbmModel,
    provenance: &Provenance,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_rbm_model(&mut out, model, provenance)?;
    out.flush()?;
    Ok(())
}

pub fn load_rbm_model(path: impl AsRef<Path>) -> Result<(RbmModel, Provenance)> {
    read_rbm_model(File::open(path)?)
}
