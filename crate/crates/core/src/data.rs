//! Deterministic dataset synthesis, persistence and corruption.
//!
//! All randomness comes from [`crate::rng`] (ChaCha8 seeded through
//! SplitMix64), so a `(spec, seed)` pair reproduces the same dataset on any
//! machine.
//!
//! # File format
//!
//! ```text
//! # dims: N d C has_consistency
//! # source: free text            (optional)
//! id,label[,consistency],f_0,...,f_{d-1}
//! ```
//!
//! One line per sample with `id` running from `0` to `N-1`. Floats are
//! written in Rust's shortest round-trip form. The train split lives in a
//! sibling file (same path, extension `split`) holding one train id per
//! line; every other id is a test sample.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Per-sample agreement score in `[0, 1]`; high means the label is
    /// believed to be clean.
    pub consistency: Option<Vec<f64>>,
    /// Sorted ascending.
    pub train_ids: Vec<usize>,
    /// Sorted ascending; the complement of `train_ids`.
    pub test_ids: Vec<usize>,
    pub source: String,
}

/// Features, labels and optional consistency of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub consistency: Option<Vec<f64>>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn train(&self) -> Split {
        self.split(&self.train_ids)
    }

    pub fn test(&self) -> Split {
        self.split(&self.test_ids)
    }

    fn split(&self, ids: &[usize]) -> Split {
        Split {
            features: self.features.select_rows(ids),
            labels: ids.iter().map(|&i| self.labels[i]).collect(),
            consistency: self.consistency.as_ref().map(|c| ids.iter().map(|&i| c[i]).collect()),
        }
    }

    /// Checks labels, split partition and channel lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if self.labels.len() != n {
            return Err(Error::LengthMismatch {
                context: "labels vs feature rows",
                left: self.labels.len(),
                right: n,
            });
        }
        if self.class_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two classes, got {}",
                self.class_count
            )));
        }
        if let Some((row, &label)) = self.labels.iter().enumerate().find(|(_, &l)| l >= self.class_count) {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                classes: self.class_count,
            });
        }
        if let Some(c) = &self.consistency {
            if c.len() != n {
                return Err(Error::LengthMismatch {
                    context: "consistency vs samples",
                    left: c.len(),
                    right: n,
                });
            }
        }
        let mut seen = vec![false; n];
        for &i in self.train_ids.iter().chain(&self.test_ids) {
            if i >= n || seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "split is not a partition of 0..{n}: id {i} repeated or out of range"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("split does not cover every sample".into()));
        }
        Ok(())
    }

    fn with_train_ids(mut self, mut train_ids: Vec<usize>) -> Self {
        train_ids.sort_unstable();
        let mut is_train = vec![false; self.len()];
        train_ids.iter().for_each(|&i| is_train[i] = true);
        self.test_ids = (0..self.len()).filter(|&i| !is_train[i]).collect();
        self.train_ids = train_ids;
        self
    }
}

/// Gaussian mixture with isotropic components.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    /// `class_centers[c]` lists the component centers of class `c`.
    pub class_centers: Vec<Vec<Vec<f64>>>,
    pub std: f64,
    pub train_per_component: usize,
    pub test_per_component: usize,
    pub seed: u64,
}

impl MixtureSpec {
    /// The default benchmark: 8 classes in 2-D, two components per class
    /// on a 4×4 unit grid centred on the origin, 500 train + 125 test
    /// samples per component.
    ///
    /// Cell `(i, j)` belongs to class `(i + 2j) mod 8`, so the two
    /// components of a class are never neighbours and every class boundary
    /// is non-linear.
    pub fn benchmark(seed: u64) -> Self {
        let mut class_centers = vec![Vec::new(); 8];
        for j in 0..4 {
            for i in 0..4 {
                class_centers[(i + 2 * j) % 8].push(vec![i as f64 - 1.5, j as f64 - 1.5]);
            }
        }
        MixtureSpec {
            class_centers,
            std: BENCHMARK_STD,
            train_per_component: 500,
            test_per_component: 125,
            seed,
        }
    }

    fn validate(&self) -> Result<usize> {
        if self.class_centers.len() < 2 {
            return Err(Error::InvalidArgument("mixture needs at least two classes".into()));
        }
        if !(self.std > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "component std must be positive, got {}",
                self.std
            )));
        }
        if self.train_per_component + self.test_per_component == 0 {
            return Err(Error::InvalidArgument("component count must be at least 1".into()));
        }
        let dim = self
            .class_centers
            .iter()
            .flatten()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument("mixture has no components".into()))?;
        if self.class_centers.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("every class needs a component".into()));
        }
        if self.class_centers.iter().flatten().any(|c| c.len() != dim) {
            return Err(Error::InvalidArgument("component centers differ in dimension".into()));
        }
        Ok(dim)
    }
}

/// Component spread of the default benchmark (grid spacing is 1).
pub const BENCHMARK_STD: f64 = 0.15;

/// Draws every component, then shuffles sample order. Labels are the
/// component's class.
pub fn gen_mixture(spec: &MixtureSpec) -> Result<Dataset> {
    let dim = spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let noise = Normal::new(0.0, spec.std).expect("std validated");
    let per = spec.train_per_component + spec.test_per_component;
    let mut rows: Vec<(Vec<f64>, usize, bool)> = Vec::new();
    for (class, centers) in spec.class_centers.iter().enumerate() {
        for center in centers {
            for k in 0..per {
                let point = center.iter().map(|c| c + noise.sample(&mut rng)).collect();
                rows.push((point, class, k < spec.train_per_component));
            }
        }
    }
    rows.shuffle(&mut rng);
    let mut data = Vec::with_capacity(rows.len() * dim);
    let mut labels = Vec::with_capacity(rows.len());
    let mut train_ids = Vec::new();
    for (i, (point, class, train)) in rows.into_iter().enumerate() {
        data.extend(point);
        labels.push(class);
        if train {
            train_ids.push(i);
        }
    }
    let n = labels.len();
    let ds = Dataset {
        features: Matrix::from_vec(n, dim, data)?,
        labels,
        class_count: spec.class_centers.len(),
        consistency: None,
        train_ids: Vec::new(),
        test_ids: Vec::new(),
        source: format!(
            "mixture classes={} components={} std={} seed={}",
            spec.class_centers.len(),
            spec.class_centers.iter().map(Vec::len).sum::<usize>(),
            spec.std,
            spec.seed
        ),
    };
    Ok(ds.with_train_ids(train_ids))
}

/// Concentric rings in 2-D: class `c` lies on radius `c + 1` with radial
/// Gaussian jitter.
pub fn gen_rings(
    classes: usize,
    train_per_class: usize,
    test_per_class: usize,
    std: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || !(std > 0.0) || train_per_class + test_per_class == 0 {
        return Err(Error::InvalidArgument(
            "rings need ≥ 2 classes, positive std and samples".into(),
        ));
    }
    let mut rng = rng::seeded(seed);
    let mut rows = Vec::new();
    for class in 0..classes {
        for k in 0..train_per_class + test_per_class {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let z: f64 = StandardNormal.sample(&mut rng);
            let radius = (class + 1) as f64 + std * z;
            rows.push((
                vec![radius * angle.cos(), radius * angle.sin()],
                class,
                k < train_per_class,
            ));
        }
    }
    rows.shuffle(&mut rng);
    let n = rows.len();
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut train_ids = Vec::new();
    for (i, (p, c, train)) in rows.into_iter().enumerate() {
        data.extend(p);
        labels.push(c);
        if train {
            train_ids.push(i);
        }
    }
    let ds = Dataset {
        features: Matrix::from_vec(n, 2, data)?,
        labels,
        class_count: classes,
        consistency: None,
        train_ids: Vec::new(),
        test_ids: Vec::new(),
        source: format!("rings classes={classes} std={std} seed={seed}"),
    };
    Ok(ds.with_train_ids(train_ids))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub flip_rate: f64,
    pub seed: u64,
    pub consistency_noise_std: f64,
    /// Gaussian jitter added to the features of flipped samples.
    pub feature_corruption_std: f64,
}

impl NoiseSpec {
    pub fn new(flip_rate: f64, seed: u64) -> Self {
        NoiseSpec {
            flip_rate,
            seed,
            consistency_noise_std: 0.05,
            feature_corruption_std: 0.0,
        }
    }
}

/// Flips `round(flip_rate·N_train)` train labels to a uniformly chosen
/// different class and attaches a consistency score
/// `clamp(1 − flipped + N(0, σ), 0, 1)` to every sample. Test samples keep
/// their labels. Returns the sorted flipped ids.
pub fn inject_label_noise(dataset: &Dataset, noise: &NoiseSpec) -> Result<(Dataset, Vec<usize>)> {
    if !(0.0..1.0).contains(&noise.flip_rate) {
        return Err(Error::InvalidArgument(format!(
            "flip rate must lie in [0, 1), got {}",
            noise.flip_rate
        )));
    }
    if !(noise.consistency_noise_std >= 0.0) || !(noise.feature_corruption_std >= 0.0) {
        return Err(Error::InvalidArgument("noise std must be non-negative".into()));
    }
    let c = dataset.class_count;
    if c < 2 {
        return Err(Error::InvalidArgument("label noise needs at least two classes".into()));
    }
    let mut rng = rng::seeded(noise.seed);
    let n_train = dataset.train_ids.len();
    let flips = (noise.flip_rate * n_train as f64).round() as usize;
    let mut flipped: Vec<usize> = rand::seq::index::sample(&mut rng, n_train, flips)
        .into_iter()
        .map(|k| dataset.train_ids[k])
        .collect();
    flipped.sort_unstable();

    let mut out = dataset.clone();
    let mut is_flipped = vec![false; dataset.len()];
    for &i in &flipped {
        let old = out.labels[i];
        let pick = rng.random_range(0..c - 1);
        out.labels[i] = if pick >= old { pick + 1 } else { pick };
        is_flipped[i] = true;
    }
    if noise.feature_corruption_std > 0.0 {
        let jitter = Normal::new(0.0, noise.feature_corruption_std).expect("validated");
        for &i in &flipped {
            for v in out.features.row_mut(i) {
                *v += jitter.sample(&mut rng);
            }
        }
    }
    let consistency = (0..dataset.len())
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let base = if is_flipped[i] { 0.0 } else { 1.0 };
            (base + noise.consistency_noise_std * z).clamp(0.0, 1.0)
        })
        .collect();
    out.consistency = Some(consistency);
    out.source = format!("{} noise={} seed={}", dataset.source, noise.flip_rate, noise.seed);
    Ok((out, flipped))
}

/// Path of the split file that accompanies `path`.
pub fn split_path(path: &Path) -> PathBuf {
    path.with_extension("split")
}

pub fn save(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let write = |path: &Path, body: &dyn Fn(&mut BufWriter<fs::File>) -> std::io::Result<()>| {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    };
    write(path, &|w| {
        writeln!(
            w,
            "# dims: {} {} {} {}",
            dataset.len(),
            dataset.dim(),
            dataset.class_count,
            u8::from(dataset.consistency.is_some())
        )?;
        if !dataset.source.is_empty() {
            writeln!(w, "# source: {}", dataset.source.replace('\n', " "))?;
        }
        for (i, row) in dataset.features.iter_rows().enumerate() {
            write!(w, "{},{}", i, dataset.labels[i])?;
            if let Some(c) = &dataset.consistency {
                write!(w, ",{:?}", c[i])?;
            }
            for v in row {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write(&split_path(path), &|w| {
        for id in &dataset.train_ids {
            writeln!(w, "{id}")?;
        }
        Ok(())
    })
}

pub fn load(path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let dims: Vec<usize> = header
        .strip_prefix("# dims:")
        .ok_or_else(|| parse_err(1, "expected '# dims: N d C has_consistency'".into()))?
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(1, format!("bad dims header: {e}")))?;
    let [n, d, c, has_consistency] = dims[..] else {
        return Err(parse_err(1, format!("dims header needs 4 fields, got {}", dims.len())));
    };
    if has_consistency > 1 {
        return Err(parse_err(1, "has_consistency must be 0 or 1".into()));
    }
    let has_consistency = has_consistency == 1;

    let mut source = String::new();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut consistency = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(s) = rest.trim_start().strip_prefix("source:") {
                source = s.trim().to_string();
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = 2 + usize::from(has_consistency) + d;
        if fields.len() != expected {
            return Err(parse_err(
                lineno,
                format!("expected {expected} fields, got {}", fields.len()),
            ));
        }
        let row = labels.len();
        let id: usize = fields[0]
            .parse()
            .map_err(|e| parse_err(lineno, format!("field 'id': {e}")))?;
        if id != row {
            return Err(parse_err(lineno, format!("expected id {row}, got {id}")));
        }
        let label: usize = fields[1]
            .parse()
            .map_err(|e| parse_err(lineno, format!("field 'label': {e}")))?;
        if label >= c {
            return Err(parse_err(
                lineno,
                format!("row {row}: label {label} out of range for {c} classes"),
            ));
        }
        labels.push(label);
        let mut rest = &fields[2..];
        if has_consistency {
            let v: f64 = rest[0]
                .parse()
                .map_err(|e| parse_err(lineno, format!("field 'consistency': {e}")))?;
            consistency.push(v);
            rest = &rest[1..];
        }
        for (k, f) in rest.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|e| parse_err(lineno, format!("field 'f_{k}': {e}")))?;
            features.push(v);
        }
    }
    if labels.len() != n {
        return Err(parse_err(
            0,
            format!("header declares {n} samples, found {}", labels.len()),
        ));
    }

    let split_file = split_path(path);
    let text = fs::read_to_string(&split_file).map_err(|e| Error::io(&split_file, e))?;
    let mut train_ids = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let id: usize = line.trim().parse().map_err(|e| Error::Parse {
            path: split_file.clone(),
            line: idx + 1,
            message: format!("bad train id: {e}"),
        })?;
        train_ids.push(id);
    }

    let ds = Dataset {
        features: Matrix::from_vec(n, d, features)?,
        labels,
        class_count: c,
        consistency: has_consistency.then_some(consistency),
        train_ids: Vec::new(),
        test_ids: Vec::new(),
        source,
    };
    if let Some(&bad) = train_ids.iter().find(|&&i| i >= n) {
        return Err(Error::Parse {
            path: split_file,
            line: 0,
            message: format!("train id {bad} out of range"),
        });
    }
    let ds = ds.with_train_ids(train_ids);
    ds.validate()?;
    Ok(ds)
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    /// Header name of the label column, or its zero-based index.
    pub label_column: String,
    /// Fraction of each class assigned to the train split.
    pub train_fraction: f64,
    pub seed: u64,
    /// Z-score every feature column with statistics fitted on the train
    /// split.
    pub standardize: bool,
}

/// Loads a headed numeric CSV file and makes a seeded stratified split.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&options.train_fraction) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in [0, 1], got {}",
            options.train_fraction
        )));
    }
    let csv_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == options.label_column)
        .or_else(|| {
            options
                .label_column
                .parse::<usize>()
                .ok()
                .filter(|&i| i < headers.len())
        })
        .ok_or_else(|| csv_err(1, format!("no label column '{}'", options.label_column)))?;
    let d = headers.len() - 1;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| csv_err(line, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(csv_err(
                line,
                format!("expected {} fields, got {}", headers.len(), record.len()),
            ));
        }
        for (k, cell) in record.iter().enumerate() {
            let name = &headers[k];
            if k == label_idx {
                let label: usize = cell
                    .parse()
                    .map_err(|_| csv_err(line, format!("column '{name}': '{cell}' is not a class index")))?;
                labels.push(label);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| csv_err(line, format!("column '{name}': '{cell}' is not numeric")))?;
                features.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(csv_err(2, "no data rows".into()));
    }
    let n = labels.len();
    let class_count = (labels.iter().copied().max().unwrap_or(0) + 1).max(2);
    let mut ds = Dataset {
        features: Matrix::from_vec(n, d, features)?,
        labels,
        class_count,
        consistency: None,
        train_ids: Vec::new(),
        test_ids: Vec::new(),
        source: format!("csv {}", path.display()),
    };
    let train_ids = stratified_train_ids(&ds.labels, class_count, options.train_fraction, options.seed);
    ds = ds.with_train_ids(train_ids);
    if options.standardize {
        standardize_columns(&mut ds);
    }
    ds.validate()?;
    Ok(ds)
}

/// Seeded stratified split. The total train size is
/// `round(fraction·N)`; classes receive `floor(fraction·n_c)` each and the
/// remainder goes to the largest fractional parts (lower class first on
/// ties).
pub fn stratified_train_ids(labels: &[usize], classes: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut rng = rng::seeded(seed);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let target = (fraction * labels.len() as f64).round() as usize;
    let mut quota: Vec<usize> = by_class
        .iter()
        .map(|ids| (fraction * ids.len() as f64).floor() as usize)
        .collect();
    let mut remainders: Vec<(f64, usize)> = by_class
        .iter()
        .enumerate()
        .map(|(c, ids)| (fraction * ids.len() as f64 - quota[c] as f64, c))
        .collect();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut missing = target.saturating_sub(quota.iter().sum());
    for (_, c) in remainders {
        if missing == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }
    let mut train = Vec::with_capacity(target);
    for (ids, q) in by_class.iter_mut().zip(quota) {
        ids.shuffle(&mut rng);
        train.extend_from_slice(&ids[..q]);
    }
    train
}

fn standardize_columns(ds: &mut Dataset) {
    let d = ds.dim();
    for k in 0..d {
        let col: Vec<f64> = ds.train_ids.iter().map(|&i| ds.features.get(i, k)).collect();
        let m = stats::mean(&col);
        let s = stats::std_dev(&col);
        let s = if s > 0.0 { s } else { 1.0 };
        for i in 0..ds.len() {
            let v = ds.features.get(i, k);
            ds.features.set(i, k, (v - m) / s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs(count: usize, seed: u64) -> MixtureSpec {
        MixtureSpec {
            class_centers: vec![vec![vec![-2.0, 0.0]], vec![vec![2.0, 0.0]]],
            std: 0.5,
            train_per_component: count,
            test_per_component: 0,
            seed,
        }
    }

    #[test]
    fn two_component_counts() {
        let ds = gen_mixture(&two_blobs(100, 1)).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 0).count(), 100);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 100);
        ds.validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_mixture(&MixtureSpec::benchmark(3)).unwrap();
        let b = gen_mixture(&MixtureSpec::benchmark(3)).unwrap();
        assert_eq!(a, b);
        let c = gen_mixture(&MixtureSpec::benchmark(4)).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn benchmark_shape() {
        let ds = gen_mixture(&MixtureSpec::benchmark(0)).unwrap();
        assert_eq!(ds.len(), 10_000);
        assert_eq!(ds.train_ids.len(), 8000);
        assert_eq!(ds.test_ids.len(), 2000);
        assert_eq!(ds.class_count, 8);
        for c in 0..8 {
            let train = ds.train_ids.iter().filter(|&&i| ds.labels[i] == c).count();
            assert_eq!(train, 1000);
        }
    }

    #[test]
    fn component_means_recovered() {
        let spec = two_blobs(10_000, 5);
        let ds = gen_mixture(&spec).unwrap();
        let tol = 3.0 * spec.std / (10_000f64).sqrt();
        for (class, centers) in spec.class_centers.iter().enumerate() {
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
            for (k, want) in centers[0].iter().enumerate() {
                let col: Vec<f64> = rows.iter().map(|&i| ds.features.get(i, k)).collect();
                assert!((stats::mean(&col) - want).abs() < tol);
            }
        }
    }

    #[test]
    fn noise_flip_counts() {
        let spec = MixtureSpec {
            train_per_component: 50,
            test_per_component: 10,
            ..two_blobs(0, 2)
        };
        let ds = gen_mixture(&spec).unwrap();
        let (noisy, flipped) = inject_label_noise(&ds, &NoiseSpec::new(0.2, 7)).unwrap();
        assert_eq!(flipped.len(), 20);
        for &i in &flipped {
            assert_ne!(noisy.labels[i], ds.labels[i]);
            assert!(ds.train_ids.binary_search(&i).is_ok());
        }
        for &i in &ds.test_ids {
            assert_eq!(noisy.labels[i], ds.labels[i]);
        }
        let changed = (0..ds.len()).filter(|&i| noisy.labels[i] != ds.labels[i]).count();
        assert_eq!(changed, 20);

        let (clean, none) = inject_label_noise(&ds, &NoiseSpec::new(0.0, 7)).unwrap();
        assert!(none.is_empty());
        assert_eq!(clean.labels, ds.labels);
        assert!(clean.consistency.unwrap().iter().all(|c| *c > 0.75));

        assert!(inject_label_noise(&ds, &NoiseSpec::new(1.0, 7)).is_err());
    }

    #[test]
    fn consistency_separates_flipped() {
        let ds = gen_mixture(&MixtureSpec::benchmark(1)).unwrap();
        let (noisy, flipped) = inject_label_noise(&ds, &NoiseSpec::new(0.2, 3)).unwrap();
        let c = noisy.consistency.unwrap();
        let mut is_flipped = vec![false; ds.len()];
        flipped.iter().for_each(|&i| is_flipped[i] = true);
        let (mut clean, mut dirty) = (Vec::new(), Vec::new());
        for &i in &noisy.train_ids {
            if is_flipped[i] {
                dirty.push(c[i])
            } else {
                clean.push(c[i])
            }
        }
        assert!(stats::mean(&clean) - stats::mean(&dirty) >= 0.8);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.txt");
        let ds = gen_mixture(&MixtureSpec::benchmark(9)).unwrap();
        save(&ds, &path).unwrap();
        assert_eq!(load(&path).unwrap(), ds);

        let (noisy, _) = inject_label_noise(&ds, &NoiseSpec::new(0.1, 1)).unwrap();
        save(&noisy, &path).unwrap();
        assert_eq!(load(&path).unwrap(), noisy);
    }

    #[test]
    fn load_rejects_label_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "# dims: 2 1 2 0\n0,1,0.5\n1,2,0.25\n").unwrap();
        fs::write(split_path(&path), "0\n").unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("row 1"), "{err}");
    }

    #[test]
    fn load_without_consistency_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.txt");
        fs::write(&path, "# dims: 3 2 2 0\n0,0,1.5,2\n1,1,-1,0.25\n2,0,0,0\n").unwrap();
        fs::write(split_path(&path), "0\n2\n").unwrap();
        let ds = load(&path).unwrap();
        assert!(ds.consistency.is_none());
        assert_eq!(ds.train_ids, vec![0, 2]);
        assert_eq!(ds.test_ids, vec![1]);
        assert_eq!(ds.features.row(1), &[-1.0, 0.25]);
    }

    fn write_csv(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("in.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn csv_split_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(dir.path(), "a,b,y\n1,2,0\n3,4,1\n5,6,0\n7,8,1\n");
        let opts = CsvOptions {
            label_column: "y".into(),
            train_fraction: 0.5,
            seed: 4,
            standardize: false,
        };
        let ds = load_csv(&p, &opts).unwrap();
        assert_eq!(ds.train_ids.len(), 2);
        assert_eq!(ds.test_ids.len(), 2);
        let train_labels: Vec<usize> = ds.train_ids.iter().map(|&i| ds.labels[i]).collect();
        assert!(train_labels.contains(&0) && train_labels.contains(&1));
        assert_eq!(load_csv(&p, &opts).unwrap(), ds);
        let by_index = CsvOptions {
            label_column: "2".into(),
            ..opts
        };
        assert_eq!(load_csv(&p, &by_index).unwrap().labels, ds.labels);
    }

    #[test]
    fn csv_rejects_non_numeric_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(dir.path(), "a,y\n1,0\nfoo,1\n");
        let opts = CsvOptions {
            label_column: "y".into(),
            train_fraction: 0.5,
            seed: 0,
            standardize: false,
        };
        let err = load_csv(&p, &opts).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("'a'"), "{err}");
    }

    #[test]
    fn csv_standardization_fits_on_train() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("x0,x1,label\n");
        for i in 0..40 {
            body.push_str(&format!(
                "{},{},{}\n",
                i as f64 * 1.7 - 3.0,
                (i * i) as f64 * 0.1,
                i % 3
            ));
        }
        let p = write_csv(dir.path(), &body);
        let opts = CsvOptions {
            label_column: "label".into(),
            train_fraction: 0.75,
            seed: 2,
            standardize: true,
        };
        let ds = load_csv(&p, &opts).unwrap();
        for k in 0..2 {
            let col: Vec<f64> = ds.train_ids.iter().map(|&i| ds.features.get(i, k)).collect();
            assert!(stats::mean(&col).abs() < 1e-9);
            assert!((stats::std_dev(&col) - 1.0).abs() < 1e-9);
        }
    }
}
