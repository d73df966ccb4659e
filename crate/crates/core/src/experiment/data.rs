//! Datasets: Iris CSV, MNIST IDX, synthetic clusters; stratified splits and
//! min-max scaling.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{HtnError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(HtnError::EmptyDataset("dataset has no samples".into()));
        }
        if features.len() != labels.len() {
            return Err(HtnError::invalid(format!("{} feature rows but {} labels", features.len(), labels.len())));
        }
        let width = features[0].len();
        if width == 0 || features.iter().any(|f| f.len() != width) {
            return Err(HtnError::invalid("feature rows must share a non-zero width"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(HtnError::invalid(format!("label {l} outside {n_classes} classes")));
        }
        Ok(Dataset { features, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features[0].len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(
            idx.iter().map(|&i| self.features[i].clone()).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
            self.n_classes,
        )
    }
}

/// Four numeric columns and a class name per row, with a header line.
/// Classes are numbered in sorted name order.
pub fn load_iris(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| HtnError::io_at(path, e))?;
    parse_iris(file)
}

pub fn parse_iris<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<(Vec<f64>, String)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = rec.as_ref().ok().and_then(|r| r.position()).map_or(i + 2, |p| p.line() as usize);
        let rec = rec.map_err(|e| HtnError::Parse { line, message: e.to_string() })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != 5 {
            return Err(HtnError::Parse { line, message: format!("expected 5 fields, found {}", rec.len()) });
        }
        let mut x = Vec::with_capacity(4);
        for field in rec.iter().take(4) {
            let v: f64 = field
                .parse()
                .map_err(|_| HtnError::Parse { line, message: format!("not a number: {field:?}") })?;
            if !v.is_finite() {
                return Err(HtnError::Parse { line, message: format!("non-finite value {field:?}") });
            }
            x.push(v);
        }
        let name = rec[4].to_string();
        if name.is_empty() {
            return Err(HtnError::Parse { line, message: "missing class label".into() });
        }
        rows.push((x, name));
    }
    if rows.is_empty() {
        return Err(HtnError::EmptyDataset("no data rows in Iris file".into()));
    }
    let names: BTreeMap<&str, usize> = {
        let mut m: BTreeMap<&str, usize> = rows.iter().map(|(_, n)| (n.as_str(), 0)).collect();
        for (i, v) in m.values_mut().enumerate() {
            *v = i;
        }
        m
    };
    let labels = rows.iter().map(|(_, n)| names[n.as_str()]).collect();
    let n_classes = names.len();
    Dataset::new(rows.iter().map(|(x, _)| x.clone()).collect(), labels, n_classes)
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| HtnError::Format("IDX header truncated".into()))
}

/// `(rows, cols, pixels)` with pixels image-major.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_IMAGES {
        return Err(HtnError::Format(format!("bad IDX image magic {magic:#010x}")));
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * size {
        return Err(HtnError::Format(format!("IDX body has {} bytes, expected {}", body.len(), n * size)));
    }
    Ok((rows, cols, body.chunks(size.max(1)).take(n).map(|c| c.to_vec()).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_LABELS {
        return Err(HtnError::Format(format!("bad IDX label magic {magic:#010x}")));
    }
    let n = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(HtnError::Format(format!("IDX body has {} labels, expected {n}", body.len())));
    }
    Ok(body.to_vec())
}

/// Mean over `block x block` tiles, scaled from `0..=255` to `[0, 1]`.
pub fn mean_pool(pixels: &[u8], rows: usize, cols: usize, block: usize) -> Vec<f64> {
    let (pr, pc) = (rows / block, cols / block);
    let mut out = vec![0.0; pr * pc];
    for i in 0..pr * block {
        for j in 0..pc * block {
            out[(i / block) * pc + j / block] += pixels[i * cols + j] as f64;
        }
    }
    let scale = 1.0 / (255.0 * (block * block) as f64);
    out.iter_mut().for_each(|x| *x *= scale);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| HtnError::io_at(path, e))
}

/// Images of the two digits in `class_pair`, pooled 4x4 to 7x7. The first
/// digit becomes class 0.
pub fn load_mnist(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    class_pair: (u8, u8),
    max_samples: Option<usize>,
) -> Result<Dataset> {
    let (rows, cols, imgs) = parse_idx_images(&read_file(images.as_ref())?)?;
    let labs = parse_idx_labels(&read_file(labels.as_ref())?)?;
    mnist_from_parts(rows, cols, &imgs, &labs, class_pair, max_samples)
}

pub fn mnist_from_parts(
    rows: usize,
    cols: usize,
    imgs: &[Vec<u8>],
    labs: &[u8],
    class_pair: (u8, u8),
    max_samples: Option<usize>,
) -> Result<Dataset> {
    if imgs.len() != labs.len() {
        return Err(HtnError::Format(format!("{} images but {} labels", imgs.len(), labs.len())));
    }
    if rows != 28 || cols != 28 {
        return Err(HtnError::Format(format!("expected 28x28 images, found {rows}x{cols}")));
    }
    let (mut features, mut labels) = (Vec::new(), Vec::new());
    for (img, &l) in imgs.iter().zip(labs) {
        let class = if l == class_pair.0 {
            0
        } else if l == class_pair.1 {
            1
        } else {
            continue;
        };
        features.push(mean_pool(img, rows, cols, 4));
        labels.push(class);
        if max_samples.is_some_and(|m| labels.len() >= m) {
            break;
        }
    }
    Dataset::new(features, labels, 2)
}

/// Gaussian clusters around random centroids in the unit cube, clamped.
pub fn synthetic(n_samples: usize, n_features: usize, n_classes: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n_classes < 1 || n_features < 1 {
        return Err(HtnError::invalid("synthetic data needs at least one class and one feature"));
    }
    if !(noise >= 0.0) {
        return Err(HtnError::invalid(format!("noise {noise} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids: Vec<Vec<f64>> =
        (0..n_classes).map(|_| (0..n_features).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let normal = Normal::new(0.0, noise.max(1e-300)).map_err(|e| HtnError::invalid(e.to_string()))?;
    let mut features = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let l = i % n_classes;
        let x = centroids[l]
            .iter()
            .map(|&c| if noise > 0.0 { (c + normal.sample(&mut rng)).clamp(0.0, 1.0) } else { c })
            .collect();
        features.push(x);
        labels.push(l);
    }
    Dataset::new(features, labels, n_classes)
}

/// Per-class shuffle, then the first `round(fraction * n_c)` of each class go
/// to training. Indices come back sorted.
pub fn stratified_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(HtnError::Config(format!("train fraction {train_fraction} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in 0..data.n_classes {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let k = ((idx.len() as f64) * train_fraction).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    if train.is_empty() {
        return Err(HtnError::EmptyDataset("training split is empty".into()));
    }
    Ok((train, test))
}

/// Per-feature min-max map fitted on one set and applied to others. Values
/// outside the fitted range are clamped to `[0, 1]`; constant features map
/// to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(data: &Dataset) -> Self {
        let w = data.n_features();
        let mut min = vec![f64::INFINITY; w];
        let mut max = vec![f64::NEG_INFINITY; w];
        for x in &data.features {
            for j in 0..w {
                min[j] = min[j].min(x[j]);
                max[j] = max[j].max(x[j]);
            }
        }
        MinMaxScaler { min, max }
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let span = self.max[j] - self.min[j];
                if span > 0.0 {
                    ((v - self.min[j]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn transform(&self, data: &Dataset) -> Dataset {
        Dataset {
            features: data.features.iter().map(|x| self.transform_row(x)).collect(),
            labels: data.labels.clone(),
            n_classes: data.n_classes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iris_file_has_three_balanced_classes() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv");
        let d = load_iris(path).unwrap();
        assert_eq!(d.len(), 150);
        assert_eq!(d.class_counts(), vec![50, 50, 50]);
        assert_eq!(d.n_features(), 4);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let text = "a,b,c,d,species\n1,2,3,4,x\n1,2,oops,4,y\n";
        match parse_iris(text.as_bytes()) {
            Err(HtnError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_iris("a,b,c,d,species\n".as_bytes()), Err(HtnError::EmptyDataset(_))));
    }

    #[test]
    fn scaling_maps_extremes_to_unit_interval() {
        let d = Dataset::new(vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![2.0, 5.0]], vec![0, 0, 0], 1).unwrap();
        let s = MinMaxScaler::fit(&d);
        let t = s.transform(&d);
        assert_eq!(t.features[0], vec![0.0, 0.0]);
        assert_eq!(t.features[1], vec![1.0, 0.0]);
        assert_eq!(t.features[2], vec![0.5, 0.0]);
        assert_eq!(s.transform_row(&[10.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn split_is_disjoint_stratified_and_reproducible() {
        let d = synthetic(50, 3, 2, 0.1, 0).unwrap();
        let (tr, te) = stratified_split(&d, 0.8, 42).unwrap();
        assert_eq!(tr.len() + te.len(), 50);
        assert!(tr.iter().all(|i| !te.contains(i)));
        assert_eq!(tr.iter().filter(|&&i| d.labels[i] == 0).count(), 20);
        assert_eq!((tr.clone(), te.clone()), stratified_split(&d, 0.8, 42).unwrap());
    }

    #[test]
    fn pooling_constant_image() {
        let px = vec![200u8; 784];
        let f = mean_pool(&px, 28, 28, 4);
        assert_eq!(f.len(), 49);
        assert!(f.iter().all(|&v| (v - 200.0 / 255.0).abs() < 1e-15));
    }

    #[test]
    fn pooling_matches_per_pixel_sum() {
        let px: Vec<u8> = (0..784).map(|i| ((i * 37) % 256) as u8).collect();
        let f = mean_pool(&px, 28, 28, 4);
        for bi in 0..7 {
            for bj in 0..7 {
                let mut s = 0.0;
                for i in 0..4 {
                    for j in 0..4 {
                        s += px[(bi * 4 + i) * 28 + bj * 4 + j] as f64;
                    }
                }
                assert!((f[bi * 7 + bj] - s / 16.0 / 255.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn idx_round_trip_and_bad_magic() {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        img.extend(std::iter::repeat_n(7u8, 2 * 784));
        let (r, c, imgs) = parse_idx_images(&img).unwrap();
        assert_eq!((r, c, imgs.len()), (28, 28, 2));
        let labs = parse_idx_labels(&[0, 0, 8, 1, 0, 0, 0, 2, 1, 5]).unwrap();
        let d = mnist_from_parts(r, c, &imgs, &labs, (0, 1), None).unwrap();
        assert_eq!(d.labels, vec![1]);
        img[3] = 1;
        assert!(matches!(parse_idx_images(&img), Err(HtnError::Format(_))));
    }
}
