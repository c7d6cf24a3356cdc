//! Feature matrices with class labels: synthetic 2D generators, CSV
//! ingestion and stratified train/validation/test splits.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    /// Validates labels (`0..c`, every class non-empty) and features.
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<usize>) -> Result<Self> {
        let n = features.rows();
        if n < 2 {
            return Err(Error::invalid(format!("dataset needs at least 2 points, got {n}")));
        }
        if features.cols() == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if labels.len() != n {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                n
            )));
        }
        if !features.is_finite() {
            return Err(Error::invalid("features contain non-finite values"));
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_classes];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("class {missing} has no members")));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_classes];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Z-scores every feature column. Constant columns are centred only.
    pub fn standardized(&self) -> Dataset {
        let (n, d) = self.features.shape();
        let mut means = vec![0.0; d];
        for r in 0..n {
            for (m, v) in means.iter_mut().zip(self.features.row(r)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut sds = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in sds.iter_mut().zip(self.features.row(r)).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        sds.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());
        let features = Matrix::from_fn(n, d, |r, c| {
            let centred = self.features.get(r, c) - means[c];
            if sds[c] > 0.0 {
                centred / sds[c]
            } else {
                centred
            }
        });
        Dataset {
            name: self.name.clone(),
            features,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingSpec {
    pub radius: f64,
    pub count: usize,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub count: usize,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSpec {
    pub center: [f64; 2],
    pub count: usize,
    pub sd: f64,
}

/// Concentric rings around the origin, optionally with a Gaussian blob at
/// the centre. Ring `i` gets label `i`; the blob gets the next label.
///
/// Angles are uniform on `[0, 2π)`; the radius of each point is
/// `radius + N(0, noise_sd)`.
pub fn gen_rings(rings: &[RingSpec], center_blob: Option<BlobSpec>, seed: u64) -> Result<Dataset> {
    if rings.is_empty() {
        return Err(Error::invalid("at least one ring is required"));
    }
    for r in rings {
        if r.count == 0 || !(r.noise_sd >= 0.0) || !r.radius.is_finite() {
            return Err(Error::invalid(format!("invalid ring spec {r:?}")));
        }
    }
    if let Some(b) = center_blob {
        if b.count == 0 || !(b.noise_sd >= 0.0) {
            return Err(Error::invalid(format!("invalid centre blob {b:?}")));
        }
    }
    let mut rng = rng::stream(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (label, ring) in rings.iter().enumerate() {
        let noise = Normal::new(0.0, ring.noise_sd).expect("noise_sd checked");
        for _ in 0..ring.count {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let r = ring.radius + noise.sample(&mut rng);
            points.extend_from_slice(&[r * angle.cos(), r * angle.sin()]);
            labels.push(label);
        }
    }
    if let Some(blob) = center_blob {
        let label = rings.len();
        for _ in 0..blob.count {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            points.extend_from_slice(&[blob.noise_sd * dx, blob.noise_sd * dy]);
            labels.push(label);
        }
    }
    let n = labels.len();
    let total: usize = rings.iter().map(|r| r.count).sum::<usize>() + center_blob.map_or(0, |b| b.count);
    Dataset::new(format!("rings{total}"), Matrix::new(n, 2, points)?, labels)
}

/// Isotropic Gaussian clusters in the plane; cluster `i` gets label `i`.
pub fn gen_clusters(clusters: &[ClusterSpec], seed: u64) -> Result<Dataset> {
    if clusters.is_empty() {
        return Err(Error::invalid("at least one cluster is required"));
    }
    for c in clusters {
        if c.count == 0 || !(c.sd >= 0.0) || !c.center.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("invalid cluster spec {c:?}")));
        }
    }
    let mut rng = rng::stream(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (label, c) in clusters.iter().enumerate() {
        for _ in 0..c.count {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            points.extend_from_slice(&[c.center[0] + c.sd * dx, c.center[1] + c.sd * dy]);
            labels.push(label);
        }
    }
    let n = labels.len();
    Dataset::new(format!("clusters{n}"), Matrix::new(n, 2, points)?, labels)
}

/// Named look-alikes of the 2D benchmark sets. Only the names (class count
/// and size) are known; the geometry is a reconstruction.
pub fn preset(name: &str, seed: u64) -> Result<Dataset> {
    let ring = |radius, count| RingSpec {
        radius,
        count,
        noise_sd: 0.1,
    };
    let cluster = |x, y, count| ClusterSpec {
        center: [x, y],
        count,
        sd: 1.0,
    };
    let mut ds = match name {
        "ring238" => gen_rings(&[ring(1.0, 100), ring(3.0, 138)], None, seed)?,
        "3rings299" => gen_rings(&[ring(1.0, 75), ring(2.5, 100), ring(4.0, 124)], None, seed)?,
        "sparse303" => gen_clusters(
            &[cluster(0.0, 0.0, 101), cluster(5.0, 0.0, 101), cluster(2.5, 4.5, 101)],
            seed,
        )?,
        "sparse622" => gen_clusters(
            &[
                cluster(0.0, 0.0, 155),
                cluster(5.0, 0.0, 155),
                cluster(0.0, 5.0, 156),
                cluster(5.0, 5.0, 156),
            ],
            seed,
        )?,
        other => return Err(Error::invalid(format!("unknown dataset preset '{other}'"))),
    };
    ds.name = name.to_string();
    Ok(ds)
}

pub const PRESETS: [&str; 4] = ["ring238", "3rings299", "sparse303", "sparse622"];

/// Reads a headered CSV. Every column except `label_column` must be
/// numeric; labels are re-encoded to `0..c` in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::invalid(format!("{}: no column named '{label_column}'", path.display())))?;
    let d = headers.len() - 1;
    if d == 0 {
        return Err(Error::invalid(format!("{}: no feature columns", path.display())));
    }

    let mut codes: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based file line numbers, header on line 1.
        let line = row_idx + 2;
        for (col, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if col == label_idx {
                let next = codes.len();
                labels.push(*codes.entry(cell.to_string()).or_insert(next));
                continue;
            }
            let bad = |reason: &str| Error::BadCell {
                path: path.to_path_buf(),
                row: line,
                column: headers[col].to_string(),
                reason: reason.to_string(),
            };
            let v: f64 = cell.parse().map_err(|_| bad(&format!("'{cell}' is not numeric")))?;
            if !v.is_finite() {
                return Err(bad(&format!("'{cell}' is not a finite number")));
            }
            data.push(v);
        }
    }
    if codes.len() < 2 {
        return Err(Error::invalid(format!(
            "{}: need at least 2 classes, found {}",
            path.display(),
            codes.len()
        )));
    }
    let n = labels.len();
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, Matrix::new(n, d, data)?, labels)
}

/// Disjoint train/validation/test index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMasks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified random split. Train and validation counts are spread over
/// classes in proportion to class size (largest remainder), with every
/// class guaranteed at least one training node; everything left is test.
pub fn split_masks(n: usize, n_train: usize, n_val: usize, labels: &[usize], seed: u64) -> Result<SplitMasks> {
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for n = {n}", labels.len())));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let present = by_class.iter().filter(|c| !c.is_empty()).count();
    if n_train < present {
        return Err(Error::invalid(format!(
            "n_train = {n_train} cannot cover {present} classes"
        )));
    }
    if n_train + n_val >= n {
        return Err(Error::invalid(format!(
            "n_train + n_val = {} leaves no test nodes out of {n}",
            n_train + n_val
        )));
    }

    let mut rng = rng::stream(seed);
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let train_alloc = allocate(n_train, &sizes, 1);
    let remaining: Vec<usize> = sizes.iter().zip(&train_alloc).map(|(s, t)| s - t).collect();
    let val_alloc = allocate(n_val, &remaining, 0);

    let mut masks = SplitMasks {
        train: Vec::with_capacity(n_train),
        val: Vec::with_capacity(n_val),
        test: Vec::new(),
    };
    for (c, members) in by_class.iter().enumerate() {
        let (tr, rest) = members.split_at(train_alloc[c]);
        let (va, te) = rest.split_at(val_alloc[c]);
        masks.train.extend_from_slice(tr);
        masks.val.extend_from_slice(va);
        masks.test.extend_from_slice(te);
    }
    masks.train.sort_unstable();
    masks.val.sort_unstable();
    masks.test.sort_unstable();
    Ok(masks)
}

/// Splits `total` across buckets proportionally to `capacity`, giving each
/// non-empty bucket at least `floor` and never exceeding its capacity.
/// Assumes `total <= Σ capacity`.
fn allocate(total: usize, capacity: &[usize], floor: usize) -> Vec<usize> {
    let mut alloc: Vec<usize> = capacity.iter().map(|&c| floor.min(c)).collect();
    let mut left = total - alloc.iter().sum::<usize>();
    let pool: usize = capacity.iter().zip(&alloc).map(|(c, a)| c - a).sum();
    if left == 0 || pool == 0 {
        return alloc;
    }
    let budget = left;
    let mut remainders = Vec::with_capacity(capacity.len());
    for (i, (&cap, a)) in capacity.iter().zip(alloc.iter_mut()).enumerate() {
        let free = cap - *a;
        let exact = budget as f64 * free as f64 / pool as f64;
        let whole = (exact.floor() as usize).min(free).min(left);
        *a += whole;
        left -= whole;
        remainders.push((exact - whole as f64, i));
    }
    remainders.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    while left > 0 {
        let mut progressed = false;
        for &(_, i) in &remainders {
            if left == 0 {
                break;
            }
            if alloc[i] < capacity[i] {
                alloc[i] += 1;
                left -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    alloc
}
