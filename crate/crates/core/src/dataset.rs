//! Training corpus: grid generation over (frequency, permittivity), seeded
//! subsampling, min-max scaling, splitting and CSV persistence.

use crate::antenna::{self, AntennaError, DesignInput, PatchDims, STANDARD_HEIGHT_M};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid count: {0}")]
    InvalidCount(String),
    #[error("feature `{0}` is constant; cannot scale")]
    DegenerateFeature(&'static str),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Antenna(#[from] AntennaError),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// CSV header of the dataset file format.
pub const CSV_HEADER: [&str; 5] = ["f_hz", "eps_r", "h_m", "w_m", "l_m"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub input: DesignInput<T>,
    pub target: PatchDims<T>,
}

impl<T: Scalar> Sample<T> {
    /// Builds a sample whose target comes from the transmission-line model.
    pub fn from_model(input: DesignInput<T>) -> Result<Self> {
        let target = antenna::patch_dimensions(&input)?;
        Ok(Self { input, target })
    }
}

/// Frequency-major grid: frequency is the outer loop, permittivity the inner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub f_start_hz: f64,
    pub f_step_hz: f64,
    pub f_count: usize,
    pub eps_start: f64,
    pub eps_step: f64,
    pub eps_count: usize,
    pub h_m: f64,
}

impl Default for GridSpec {
    /// 200 frequencies from 0.5 GHz in 0.0975 GHz steps, 50 permittivities
    /// from 1.2 in steps of 0.196, 1.5 mm substrate.
    fn default() -> Self {
        Self {
            f_start_hz: 0.5e9,
            f_step_hz: 0.0975e9,
            f_count: 200,
            eps_start: 1.2,
            eps_step: 0.196,
            eps_count: 50,
            h_m: STANDARD_HEIGHT_M,
        }
    }
}

impl GridSpec {
    pub fn f_end_hz(&self) -> f64 {
        self.f_start_hz + (self.f_count.saturating_sub(1)) as f64 * self.f_step_hz
    }

    pub fn eps_end(&self) -> f64 {
        self.eps_start + (self.eps_count.saturating_sub(1)) as f64 * self.eps_step
    }
}

/// How a dataset was produced. Written as `#` comment lines in CSV files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub grid: Option<GridSpec>,
    pub subsample: Option<SubsampleSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub n: usize,
    pub seed: u64,
}

impl Provenance {
    fn to_lines(&self) -> Vec<String> {
        let mut out = vec!["order=frequency-major".to_string()];
        if let Some(g) = &self.grid {
            out.push(format!("f_start_hz={}", g.f_start_hz));
            out.push(format!("f_step_hz={}", g.f_step_hz));
            out.push(format!("f_count={}", g.f_count));
            out.push(format!("eps_start={}", g.eps_start));
            out.push(format!("eps_step={}", g.eps_step));
            out.push(format!("eps_count={}", g.eps_count));
            out.push(format!("h_m={}", g.h_m));
        }
        if let Some(s) = &self.subsample {
            out.push(format!("subsample_n={}", s.n));
            out.push(format!("subsample_seed={}", s.seed));
        }
        out
    }

    fn from_lines<'a>(lines: impl Iterator<Item = &'a str>) -> Self {
        let mut kv = std::collections::HashMap::new();
        for line in lines {
            if let Some((k, v)) = line.split_once('=') {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let num = |k: &str| kv.get(k).and_then(|v| v.parse::<f64>().ok());
        let int = |k: &str| kv.get(k).and_then(|v| v.parse::<u64>().ok());
        let grid = (|| {
            Some(GridSpec {
                f_start_hz: num("f_start_hz")?,
                f_step_hz: num("f_step_hz")?,
                f_count: int("f_count")? as usize,
                eps_start: num("eps_start")?,
                eps_step: num("eps_step")?,
                eps_count: int("eps_count")? as usize,
                h_m: num("h_m")?,
            })
        })();
        let subsample = (|| {
            Some(SubsampleSpec {
                n: int("subsample_n")? as usize,
                seed: int("subsample_seed")?,
            })
        })();
        Self { grid, subsample }
    }
}

/// Ordered, non-empty collection of samples with unique (f_r, eps_r) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    samples: Vec<Sample<T>>,
    pub provenance: Provenance,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(samples: Vec<Sample<T>>, provenance: Provenance) -> Result<Self> {
        if samples.is_empty() {
            return Err(DatasetError::Invalid("dataset is empty".into()));
        }
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            let key = (s.input.f_r.as_f64().to_bits(), s.input.eps_r.as_f64().to_bits());
            if !seen.insert(key) {
                return Err(DatasetError::Invalid(format!(
                    "duplicate sample at f_r = {}, eps_r = {}",
                    s.input.f_r, s.input.eps_r
                )));
            }
        }
        Ok(Self { samples, provenance })
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples at the given positions, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(idx.iter().map(|&i| self.samples[i]).collect(), self.provenance.clone())
    }
}

/// Full Cartesian grid with model targets, frequency-major.
pub fn generate_grid<T: Scalar>(spec: &GridSpec) -> Result<Dataset<T>> {
    if spec.f_count == 0 || spec.eps_count == 0 {
        return Err(DatasetError::InvalidRange("grid counts must be at least 1".into()));
    }
    if (spec.f_count > 1 && !(spec.f_step_hz > 0.0)) || (spec.eps_count > 1 && !(spec.eps_step > 0.0)) {
        return Err(DatasetError::InvalidRange("grid steps must be positive".into()));
    }
    if !(spec.f_start_hz > 0.0) || !(spec.eps_start >= 1.0) || !(spec.h_m > 0.0) {
        return Err(DatasetError::InvalidRange(format!(
            "grid start (f = {} Hz, eps_r = {}, h = {} m) is not physical",
            spec.f_start_hz, spec.eps_start, spec.h_m
        )));
    }
    let mut samples = Vec::with_capacity(spec.f_count * spec.eps_count);
    for i in 0..spec.f_count {
        let f = spec.f_start_hz + i as f64 * spec.f_step_hz;
        for j in 0..spec.eps_count {
            let eps = spec.eps_start + j as f64 * spec.eps_step;
            let input = DesignInput::new(T::lit(f), T::lit(eps), T::lit(spec.h_m))
                .map_err(|e| DatasetError::InvalidRange(e.to_string()))?;
            samples.push(Sample::from_model(input)?);
        }
    }
    Dataset::new(
        samples,
        Provenance {
            grid: Some(*spec),
            subsample: None,
        },
    )
}

/// Uniform sample of `n` rows without replacement; order is seed-determined.
pub fn subsample<T: Scalar>(d: &Dataset<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    if n == 0 || n > d.len() {
        return Err(DatasetError::InvalidCount(format!(
            "cannot draw {n} samples from {}",
            d.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, d.len(), n).into_vec();
    let mut out = d.subset(&idx)?;
    out.provenance.subsample = Some(SubsampleSpec { n, seed });
    Ok(out)
}

/// Inputs and targets mapped to [−1, 1], one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedData<T> {
    pub inputs: Matrix<T>,
    pub targets: Matrix<T>,
}

impl<T: Scalar> NormalizedData<T> {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(idx),
            targets: self.targets.select_rows(idx),
        }
    }
}

/// Affine min-max map of (f_r, eps_r) inputs and (W, L) targets to [−1, 1].
///
/// Substrate height is constant across the corpus and is not a feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler<T> {
    /// Minimum/maximum of [f_r (Hz), eps_r].
    pub input_min: [T; 2],
    pub input_max: [T; 2],
    /// Minimum/maximum of [W (m), L (m)].
    pub target_min: [T; 2],
    pub target_max: [T; 2],
}

const FEATURE_NAMES: [&str; 4] = ["f_r", "eps_r", "W", "L"];

#[inline]
fn to_unit<T: Scalar>(x: T, lo: T, hi: T) -> T {
    T::lit(2.0) * (x - lo) / (hi - lo) - T::one()
}

#[inline]
fn from_unit<T: Scalar>(u: T, lo: T, hi: T) -> T {
    (u + T::one()) / T::lit(2.0) * (hi - lo) + lo
}

impl<T: Scalar> Scaler<T> {
    pub fn fit(d: &Dataset<T>) -> Result<Self> {
        let big = T::infinity();
        let mut lo = [big; 4];
        let mut hi = [-big; 4];
        for s in d.samples() {
            let v = [s.input.f_r, s.input.eps_r, s.target.w, s.target.l];
            for k in 0..4 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        for k in 0..4 {
            if !(hi[k] > lo[k]) {
                return Err(DatasetError::DegenerateFeature(FEATURE_NAMES[k]));
            }
        }
        Ok(Self {
            input_min: [lo[0], lo[1]],
            input_max: [hi[0], hi[1]],
            target_min: [lo[2], lo[3]],
            target_max: [hi[2], hi[3]],
        })
    }

    pub fn scale_input(&self, input: &DesignInput<T>) -> [T; 2] {
        [
            to_unit(input.f_r, self.input_min[0], self.input_max[0]),
            to_unit(input.eps_r, self.input_min[1], self.input_max[1]),
        ]
    }

    pub fn scale_target(&self, target: &PatchDims<T>) -> [T; 2] {
        [
            to_unit(target.w, self.target_min[0], self.target_max[0]),
            to_unit(target.l, self.target_min[1], self.target_max[1]),
        ]
    }

    /// Maps normalized (f_r, eps_r) back to physical units.
    pub fn unscale_input(&self, u: &[T]) -> (T, T) {
        (
            from_unit(u[0], self.input_min[0], self.input_max[0]),
            from_unit(u[1], self.input_min[1], self.input_max[1]),
        )
    }

    /// Maps a normalized network output back to patch dimensions.
    pub fn invert(&self, output: &[T]) -> PatchDims<T> {
        PatchDims {
            w: from_unit(output[0], self.target_min[0], self.target_max[0]),
            l: from_unit(output[1], self.target_min[1], self.target_max[1]),
        }
    }

    pub fn apply(&self, d: &Dataset<T>) -> NormalizedData<T> {
        let n = d.len();
        let mut inputs = Vec::with_capacity(2 * n);
        let mut targets = Vec::with_capacity(2 * n);
        for s in d.samples() {
            inputs.extend(self.scale_input(&s.input));
            targets.extend(self.scale_target(&s.target));
        }
        NormalizedData {
            inputs: Matrix::from_vec(n, 2, inputs).unwrap(),
            targets: Matrix::from_vec(n, 2, targets).unwrap(),
        }
    }

    /// Millimeters per normalized unit, per output.
    pub fn output_scale_mm(&self) -> Vec<T> {
        (0..2)
            .map(|k| (self.target_max[k] - self.target_min[k]) / T::lit(2.0) * T::lit(1e3))
            .collect()
    }

    /// Stable identity of the scaling parameters.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for v in self
            .input_min
            .iter()
            .chain(&self.input_max)
            .chain(&self.target_min)
            .chain(&self.target_max)
        {
            h.update(v.as_f64().to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn to_f64(&self) -> Scaler<f64> {
        let c = |a: [T; 2]| [a[0].as_f64(), a[1].as_f64()];
        Scaler {
            input_min: c(self.input_min),
            input_max: c(self.input_max),
            target_min: c(self.target_min),
            target_max: c(self.target_max),
        }
    }

    pub fn from_f64(s: &Scaler<f64>) -> Self {
        let c = |a: [f64; 2]| [T::lit(a[0]), T::lit(a[1])];
        Self {
            input_min: c(s.input_min),
            input_max: c(s.input_max),
            target_min: c(s.target_min),
            target_max: c(s.target_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            train,
            validation,
            test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || !(self.train > 0.0) {
            return Err(DatasetError::InvalidSplit(format!("bad fractions {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidSplit(format!("fractions {parts:?} do not sum to 1")));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
            seed: 0,
        }
    }
}

/// Row indices of each part. Together they cover the dataset exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded random partition. Validation and test sizes are floored; the
/// remainder goes to training.
pub fn split(n: usize, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if n == 0 {
        return Err(DatasetError::InvalidSplit("nothing to split".into()));
    }
    let n_val = (n as f64 * spec.validation).floor() as usize;
    let n_test = (n as f64 * spec.test).floor() as usize;
    if n_val + n_test >= n {
        return Err(DatasetError::InvalidSplit(format!(
            "{n} samples leave no training data"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let test = idx.split_off(n - n_test);
    let validation = idx.split_off(idx.len() - n_val);
    Ok(Split {
        train: idx,
        validation,
        test,
    })
}

pub fn write_csv_to<T: Scalar, W: Write>(d: &Dataset<T>, mut out: W) -> Result<()> {
    writeln!(out, "# patchnet dataset")?;
    for line in d.provenance.to_lines() {
        writeln!(out, "# {line}")?;
    }
    let mut wr = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| DatasetError::Io(std::io::Error::other(e));
    wr.write_record(CSV_HEADER).map_err(csv_err)?;
    for s in d.samples() {
        // f64 Display is the shortest representation that parses back exactly.
        let row = [s.input.f_r, s.input.eps_r, s.input.h, s.target.w, s.target.l].map(|v| v.as_f64().to_string());
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv_from<T: Scalar, R: Read>(mut input: R) -> Result<Dataset<T>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let comment_lines: Vec<&str> = text
        .lines()
        .take_while(|l| l.trim_start().starts_with('#'))
        .map(|l| l.trim_start().trim_start_matches('#').trim())
        .collect();
    let skipped = comment_lines.len();
    let body: String = text.lines().skip(skipped).collect::<Vec<_>>().join("\n");
    let line_of = |pos: Option<&csv::Position>| pos.map_or(0, |p| p.line()) + skipped as u64;

    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let header = rd.headers().map_err(|e| DatasetError::Parse {
        line: line_of(e.position()),
        column: 0,
        message: e.to_string(),
    })?;
    if header.is_empty() || header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(DatasetError::Parse {
            line: skipped as u64 + 1,
            column: 0,
            message: format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut samples = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| DatasetError::Parse {
            line: line_of(e.position()),
            column: 0,
            message: e.to_string(),
        })?;
        let line = line_of(rec.position());
        if rec.len() != CSV_HEADER.len() {
            return Err(DatasetError::Parse {
                line,
                column: rec.len().min(CSV_HEADER.len()) + 1,
                message: format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()),
            });
        }
        let mut v = [0.0f64; 5];
        for (c, field) in rec.iter().enumerate() {
            v[c] = field.trim().parse().map_err(|_| DatasetError::Parse {
                line,
                column: c + 1,
                message: format!("`{field}` is not a number"),
            })?;
        }
        let input = DesignInput::new(T::lit(v[0]), T::lit(v[1]), T::lit(v[2])).map_err(|e| DatasetError::Parse {
            line,
            column: 1,
            message: e.to_string(),
        })?;
        samples.push(Sample {
            input,
            target: PatchDims {
                w: T::lit(v[3]),
                l: T::lit(v[4]),
            },
        });
    }
    if samples.is_empty() {
        return Err(DatasetError::Parse {
            line: skipped as u64 + 1,
            column: 0,
            message: "no data rows".into(),
        });
    }
    Dataset::new(samples, Provenance::from_lines(comment_lines.into_iter()))
}

pub fn write_csv<T: Scalar>(d: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_csv_to(d, &mut buf)?;
    buf.flush()?;
    Ok(())
}

pub fn read_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    read_csv_from(fs::File::open(path)?)
}

/// The default corpus: full grid, then `n` seeded draws (1000 unless the
/// full grid is requested).
pub fn default_corpus<T: Scalar>(full_grid: bool, n: usize, seed: u64) -> Result<Dataset<T>> {
    let grid = generate_grid(&GridSpec::default())?;
    if full_grid {
        Ok(grid)
    } else {
        subsample(&grid, n, seed)
    }
}

pub const DEFAULT_CORPUS_SIZE: usize = 1000;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Dataset<f64> {
        generate_grid(&GridSpec::default()).unwrap()
    }

    #[test]
    fn default_grid_shape() {
        let d = grid();
        assert_eq!(d.len(), 10_000);
        let first = d.samples()[0].input;
        assert_eq!((first.f_r, first.eps_r, first.h), (0.5e9, 1.2, 1.5e-3));
        // frequency-major: the second row steps permittivity
        assert_eq!(d.samples()[1].input.f_r, 0.5e9);
        let last = d.samples().last().unwrap().input;
        assert!((last.f_r - 19.9025e9).abs() < 1.0);
        assert!((last.eps_r - 10.804).abs() < 1e-12);
        assert!((GridSpec::default().f_end_hz() - 19.9025e9).abs() < 1.0);
        for s in d.samples() {
            assert!(s.target.w > 0.0 && s.target.l > 0.0);
            let (_, im) = antenna::patch_model(&s.input).unwrap();
            assert!(im.eps_eff >= 1.0 && im.eps_eff <= s.input.eps_r);
            assert!(im.l_eff > 2.0 * im.delta_l);
        }
    }

    #[test]
    fn single_point_grid() {
        let spec = GridSpec {
            f_count: 1,
            eps_count: 1,
            ..GridSpec::default()
        };
        assert_eq!(generate_grid::<f64>(&spec).unwrap().len(), 1);
        let bad = GridSpec { f_count: 0, ..spec };
        assert!(matches!(generate_grid::<f64>(&bad), Err(DatasetError::InvalidRange(_))));
        let bad = GridSpec {
            f_start_hz: -1.0,
            ..GridSpec::default()
        };
        assert!(matches!(generate_grid::<f64>(&bad), Err(DatasetError::InvalidRange(_))));
    }

    #[test]
    fn subsample_contracts() {
        let d = grid();
        let a = subsample(&d, 1000, 7).unwrap();
        assert_eq!(a.len(), 1000);
        let b = subsample(&d, 1000, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples(), subsample(&d, 1000, 8).unwrap().samples());
        let all = subsample(&d, d.len(), 1).unwrap();
        let key = |s: &Sample<f64>| (s.input.f_r.to_bits(), s.input.eps_r.to_bits());
        let mut x: Vec<_> = all.samples().iter().map(key).collect();
        let mut y: Vec<_> = d.samples().iter().map(key).collect();
        x.sort_unstable();
        y.sort_unstable();
        assert_eq!(x, y);
        assert!(matches!(subsample(&d, 0, 1), Err(DatasetError::InvalidCount(_))));
        assert!(matches!(subsample(&d, 10_001, 1), Err(DatasetError::InvalidCount(_))));
    }

    #[test]
    fn scaler_endpoints_and_midpoint() {
        let d = grid();
        let s = Scaler::fit(&d).unwrap();
        let lo = DesignInput::new(0.5e9, 1.2, 1.5e-3).unwrap();
        let hi = DesignInput::new(19.9025e9, 10.804, 1.5e-3).unwrap();
        let u = s.scale_input(&lo);
        assert_eq!(u, [-1.0, -1.0]);
        let u = s.scale_input(&hi);
        assert!((u[0] - 1.0).abs() < 1e-15 && (u[1] - 1.0).abs() < 1e-15);
        let mid = DesignInput::new((0.5e9 + s.input_max[0]) / 2.0, (1.2 + s.input_max[1]) / 2.0, 1.5e-3).unwrap();
        let u = s.scale_input(&mid);
        assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
        let n = s.apply(&d);
        assert!(n.inputs.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(n.targets.as_slice().iter().all(|v| (-1.0 - 1e-15..=1.0 + 1e-15).contains(v)));
    }

    #[test]
    fn scaler_rejects_constant_feature() {
        let spec = GridSpec {
            eps_count: 1,
            ..GridSpec::default()
        };
        let d = generate_grid::<f64>(&spec).unwrap();
        assert!(matches!(Scaler::fit(&d), Err(DatasetError::DegenerateFeature("eps_r"))));
    }

    #[test]
    fn split_sizes() {
        let s = split(1000, &SplitSpec::with_seed(3)).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (700, 150, 150));
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(s, split(1000, &SplitSpec::with_seed(3)).unwrap());
        let s = split(10, &SplitSpec::new(1.0, 0.0, 0.0, 1).unwrap()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (10, 0, 0));
        assert!(SplitSpec::new(0.5, 0.5, 0.5, 0).is_err());
        assert!(SplitSpec::new(0.0, 0.5, 0.5, 0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = subsample(&grid(), 50, 11).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        let back: Dataset<f64> = read_csv_from(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.provenance.subsample, Some(SubsampleSpec { n: 50, seed: 11 }));
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(read_csv_from::<f64, _>(&b""[..]), Err(DatasetError::Parse { .. })));
        let bad_header = b"f_hz,eps,h_m,w_m,l_m\n1,2,3,4,5\n";
        assert!(matches!(read_csv_from::<f64, _>(&bad_header[..]), Err(DatasetError::Parse { .. })));
        let bad_value = b"# c\nf_hz,eps_r,h_m,w_m,l_m\n1e9,2.2,0.0015,0.1,0.08\n1e9,x,0.0015,0.1,0.08\n";
        match read_csv_from::<f64, _>(&bad_value[..]) {
            Err(DatasetError::Parse { line, column, .. }) => assert_eq!((line, column), (4, 2)),
            other => panic!("unexpected {other:?}"),
        }
        let header_only = b"f_hz,eps_r,h_m,w_m,l_m\n";
        assert!(matches!(read_csv_from::<f64, _>(&header_only[..]), Err(DatasetError::Parse { .. })));
    }

    proptest! {
        #[test]
        fn scaler_round_trip(w in 0.003f64..0.29, l in 0.002f64..0.23) {
            let s = Scaler::fit(&grid()).unwrap();
            let t = PatchDims { w, l };
            let back = s.invert(&s.scale_target(&t));
            prop_assert!((back.w - w).abs() <= 1e-12 * w.max(1.0));
            prop_assert!((back.l - l).abs() <= 1e-12 * l.max(1.0));
        }
    }
}
