//! Synthetic dataset generation, file ingestion, stratified splitting and the
//! four-patch mosaic builder for fractional-probability regularization.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::heads::fpr_target;
use crate::matrix::Matrix;
use crate::seeding::derive_seed;

/// Radius of the circle / simplex the synthetic class centers sit on.
pub const BLOB_CENTER_RADIUS: f64 = 2.0;

/// Relative radial jitter applied to ring OOD points.
pub const RING_JITTER: f64 = 0.02;

/// Feature rows with optional integer labels and optional grid structure.
/// `grid_shape = (H, W, C)` must satisfy `H * W * C == D`, with `H` and `W`
/// even so the mosaic builder can cut quadrants.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    pub grid_shape: Option<(usize, usize, usize)>,
}

impl LabeledDataset {
    pub fn labeled(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(
                "LabeledDataset",
                format!("{} labels", features.rows()),
                format!("{}", labels.len()),
            ));
        }
        Ok(LabeledDataset {
            features,
            labels: Some(labels),
            grid_shape: None,
        })
    }

    pub fn unlabeled(features: Matrix) -> Self {
        LabeledDataset {
            features,
            labels: None,
            grid_shape: None,
        }
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

    /// Smallest class count that covers every label.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn with_grid_shape(mut self, h: usize, w: usize, c: usize) -> Result<Self> {
        if h * w * c != self.dim() {
            return Err(Error::shape(
                "with_grid_shape",
                format!("H*W*C == {}", self.dim()),
                format!("{h}*{w}*{c} = {}", h * w * c),
            ));
        }
        if !h.is_multiple_of(2) || !w.is_multiple_of(2) {
            return Err(Error::contract(
                "grid_shape requires even H and W (quadrant patches)",
            ));
        }
        self.grid_shape = Some((h, w, c));
        Ok(self)
    }

    fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            grid_shape: self.grid_shape,
        }
    }
}

/// Compound examples plus their quarter-probability target rows.
#[derive(Clone, Debug)]
pub struct MosaicBatch {
    pub compound_features: Matrix,
    pub target_q: Matrix,
}

/// Class centers for the blob generator: a circle in the first two
/// coordinates, upgraded to a regular simplex when the dimension allows, and
/// spun by a seeded rotation for dim >= 3 so the class signal spreads over
/// all coordinates (which keeps every mosaic quadrant informative).
pub fn blob_centers(classes: usize, dim: usize, seed: u64) -> Matrix {
    assert!(classes >= 2 && dim >= 2);
    let mut centers = Matrix::zeros(classes, dim);
    if dim >= classes {
        // regular simplex: e_c minus the centroid, rescaled to the radius
        let shift = 1.0 / classes as f64;
        let norm = (1.0 - shift).hypot(((classes - 1) as f64).sqrt() * shift);
        for c in 0..classes {
            for d in 0..classes {
                let v = if c == d { 1.0 - shift } else { -shift };
                centers.set(c, d, v / norm * BLOB_CENTER_RADIUS);
            }
        }
    } else {
        for c in 0..classes {
            let theta = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
            centers.set(c, 0, BLOB_CENTER_RADIUS * theta.cos());
            centers.set(c, 1, BLOB_CENTER_RADIUS * theta.sin());
        }
    }
    if dim >= 3 {
        let q = random_rotation(dim, derive_seed(seed, 0xA0));
        centers = crate::matrix::matmul(&centers, &q);
    }
    centers
}

/// Orthogonal matrix from Gram-Schmidt over seeded Gaussian columns.
fn random_rotation(dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for u in &cols {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= dot * ui;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // degenerate draw, resample
        }
        for vi in &mut v {
            *vi /= norm;
        }
        cols.push(v);
    }
    let mut q = Matrix::zeros(dim, dim);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            q.set(i, j, v);
        }
    }
    q
}

/// In-distribution blobs: `per_class` points per class around fixed centers
/// with isotropic Gaussian noise of the given spread. Rows are grouped by
/// class, deterministic under the seed.
pub fn gen_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::contract("gen_blobs: need at least 2 classes"));
    }
    if dim < 2 {
        return Err(Error::contract("gen_blobs: dim must be >= 2"));
    }
    if per_class == 0 {
        return Err(Error::contract("gen_blobs: per_class must be >= 1"));
    }
    if spread < 0.0 {
        return Err(Error::contract("gen_blobs: spread must be non-negative"));
    }
    let centers = blob_centers(classes, dim, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA1));
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let center = centers.row(c);
        for _ in 0..per_class {
            for &mu in center {
                let noise: f64 = if spread > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * spread
                } else {
                    0.0
                };
                data.push(mu + noise);
            }
            labels.push(c);
        }
    }
    LabeledDataset::labeled(
        Matrix::new_unchecked(classes * per_class, dim, data),
        labels,
    )
}

/// Unlabeled OOD points spread uniformly over the sphere of the given radius
/// with small radial jitter. Callers must keep the radius clear of the blob
/// region (`radius > max center norm + 3 * spread`).
pub fn gen_ood_ring(count: usize, dim: usize, radius: f64, seed: u64) -> Result<LabeledDataset> {
    if count == 0 {
        return Err(Error::contract("gen_ood_ring: count must be >= 1"));
    }
    if dim < 2 {
        return Err(Error::contract("gen_ood_ring: dim must be >= 2"));
    }
    if radius <= 0.0 {
        return Err(Error::contract("gen_ood_ring: radius must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA2));
    let mut data = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let mut v: Vec<f64>;
        loop {
            v = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                let r = radius * (1.0 + RING_JITTER * rng.gen_range(-1.0..1.0));
                for x in &mut v {
                    *x *= r / norm;
                }
                break;
            }
        }
        data.extend(v);
    }
    Ok(LabeledDataset::unlabeled(Matrix::new_unchecked(
        count, dim, data,
    )))
}

/// Unlabeled OOD points uniform over the axis-aligned box `[-hw, hw]^dim`.
pub fn gen_ood_uniform_box(
    count: usize,
    dim: usize,
    half_width: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if count == 0 || dim == 0 {
        return Err(Error::contract("gen_ood_uniform_box: empty shape"));
    }
    if half_width <= 0.0 {
        return Err(Error::contract(
            "gen_ood_uniform_box: half_width must be positive",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA3));
    let data: Vec<f64> = (0..count * dim)
        .map(|_| rng.gen_range(-half_width..half_width))
        .collect();
    Ok(LabeledDataset::unlabeled(Matrix::new_unchecked(
        count, dim, data,
    )))
}

/// Builds `bc` compound examples. Quadrant q of each compound comes from the
/// same quadrant of the q-th of four sources sampled uniformly with
/// replacement; the target row spreads one quarter per source label. No
/// interpolation happens: every compound pixel is some source pixel.
pub fn build_mosaic(
    dataset: &LabeledDataset,
    bc: usize,
    classes: usize,
    seed: u64,
) -> Result<MosaicBatch> {
    let (h, w, c) = dataset
        .grid_shape
        .ok_or_else(|| Error::Unsupported("FPR requires grid-structured inputs".to_string()))?;
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| Error::contract("build_mosaic: dataset must be labeled"))?;
    if bc == 0 {
        return Err(Error::contract(
            "build_mosaic: need at least one compound example",
        ));
    }
    let dim = dataset.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA4));
    let mut features = Vec::with_capacity(bc * dim);
    let mut targets = Vec::with_capacity(bc * classes);
    for _ in 0..bc {
        let sources: [usize; 4] = [
            rng.gen_range(0..dataset.len()),
            rng.gen_range(0..dataset.len()),
            rng.gen_range(0..dataset.len()),
            rng.gen_range(0..dataset.len()),
        ];
        let mut compound = vec![0.0; dim];
        for (q, &src) in sources.iter().enumerate() {
            let row = dataset.features.row(src);
            let (r0, r1) = if q < 2 { (0, h / 2) } else { (h / 2, h) };
            let (c0, c1) = if q % 2 == 0 { (0, w / 2) } else { (w / 2, w) };
            for gr in r0..r1 {
                for gc in c0..c1 {
                    let base = (gr * w + gc) * c;
                    compound[base..base + c].copy_from_slice(&row[base..base + c]);
                }
            }
        }
        features.extend(compound);
        let labels4 = [
            labels[sources[0]],
            labels[sources[1]],
            labels[sources[2]],
            labels[sources[3]],
        ];
        targets.extend(fpr_target(labels4, classes)?);
    }
    Ok(MosaicBatch {
        compound_features: Matrix::new_unchecked(bc, dim, features),
        target_q: Matrix::new_unchecked(bc, classes, targets),
    })
}

/// Label-stratified split into train/val/test. Fractions must be strictly
/// positive and sum to one; per-class remainders are assigned greedily to
/// whichever split is furthest from its global target so the split sizes hit
/// the largest-remainder totals exactly.
pub fn split(
    dataset: &LabeledDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr.iter().any(|&f| f <= 0.0) {
        return Err(Error::contract("split: fractions must be positive"));
    }
    if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::contract("split: fractions must sum to 1"));
    }
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| Error::contract("split: dataset must be labeled"))?;

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    for (class, members) in &by_class {
        if members.len() < 3 {
            return Err(Error::contract(format!(
                "split: class {class} has only {} rows, need at least 3 to stratify",
                members.len()
            )));
        }
    }

    // global targets by largest remainder
    let total = dataset.len();
    let mut target = [0usize; 3];
    let mut remainders: Vec<(f64, usize)> = Vec::new();
    let mut assigned = 0;
    for k in 0..3 {
        let exact = fr[k] * total as f64;
        target[k] = exact.floor() as usize;
        assigned += target[k];
        remainders.push((exact - exact.floor(), k));
    }
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for i in 0..total - assigned {
        target[remainders[i % 3].1] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA5));
    let mut filled = [0usize; 3];
    let mut picks: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];

    // first pass: per-class floors
    struct ClassAlloc {
        size: usize,
        shuffled: Vec<usize>,
        counts: [usize; 3],
        remainders: [f64; 3],
    }
    let mut pending: Vec<ClassAlloc> = Vec::new();
    for (_, members) in by_class {
        let mut shuffled = members;
        // Fisher-Yates with the shared stream; class order is BTreeMap-stable
        for i in (1..shuffled.len()).rev() {
            let j = rng.gen_range(0..=i);
            shuffled.swap(i, j);
        }
        let n = shuffled.len();
        let mut counts = [0usize; 3];
        let mut rema = [0f64; 3];
        for k in 0..3 {
            let exact = fr[k] * n as f64;
            counts[k] = exact.floor() as usize;
            rema[k] = exact - counts[k] as f64;
            filled[k] += counts[k];
        }
        pending.push(ClassAlloc {
            size: n,
            shuffled,
            counts,
            remainders: rema,
        });
    }

    // second pass: hand out per-class leftovers toward the global targets
    for alloc in pending {
        let ClassAlloc {
            size,
            shuffled,
            mut counts,
            remainders: rema,
        } = alloc;
        let mut spare = size - counts.iter().sum::<usize>();
        while spare > 0 {
            let mut best = 0;
            for k in 1..3 {
                let deficit_k = target[k] as i64 - filled[k] as i64;
                let deficit_b = target[best] as i64 - filled[best] as i64;
                if deficit_k > deficit_b || (deficit_k == deficit_b && rema[k] > rema[best]) {
                    best = k;
                }
            }
            counts[best] += 1;
            filled[best] += 1;
            spare -= 1;
        }
        let mut offset = 0;
        for k in 0..3 {
            picks[k].extend_from_slice(&shuffled[offset..offset + counts[k]]);
            offset += counts[k];
        }
    }

    debug_assert_eq!(filled, target);
    Ok((
        dataset.select(&picks[0]),
        dataset.select(&picks[1]),
        dataset.select(&picks[2]),
    ))
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Loads a headered CSV. A column named `label` (any position) provides
/// integer labels; every other column is a numeric feature in header order.
/// A file without a `label` column loads as an unlabeled (OOD) set.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV file".to_string()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let label_col = columns.iter().position(|&c| c == "label");
    let feature_cols = columns.len() - label_col.map_or(0, |_| 1);
    if feature_cols == 0 {
        return Err(Error::Format("CSV has no feature columns".to_string()));
    }

    let mut data: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut rows = 0usize;
    for (line_idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let row_no = line_idx + 1; // 1-based, header is row 1
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::Parse {
                row: row_no,
                col: cells.len(),
                message: format!("expected {} cells, found {}", columns.len(), cells.len()),
            });
        }
        for (ci, cell) in cells.iter().enumerate() {
            if Some(ci) == label_col {
                let label: usize = cell.trim().parse().map_err(|_| Error::Parse {
                    row: row_no,
                    col: ci + 1,
                    message: format!("invalid label '{cell}'"),
                })?;
                labels.push(label);
            } else {
                let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    row: row_no,
                    col: ci + 1,
                    message: format!("invalid number '{cell}'"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        row: row_no,
                        col: ci + 1,
                        message: format!("non-finite value '{cell}'"),
                    });
                }
                data.push(value);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format("CSV has no data rows".to_string()));
    }
    let features = Matrix::new_unchecked(rows, feature_cols, data);
    match label_col {
        Some(_) => LabeledDataset::labeled(features, labels),
        None => Ok(LabeledDataset::unlabeled(features)),
    }
}

/// Writes features as `x0..x{D-1}` (plus a trailing `label` column when
/// present) with 17 significant digits, enough for exact `f64` round trips.
pub fn write_csv(path: impl AsRef<Path>, dataset: &LabeledDataset) -> Result<()> {
    let mut out = String::new();
    for d in 0..dataset.dim() {
        if d > 0 {
            out.push(',');
        }
        out.push_str(&format!("x{d}"));
    }
    if dataset.labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for r in 0..dataset.len() {
        for (d, v) in dataset.features.row(r).iter().enumerate() {
            if d > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:.16e}"));
        }
        if let Some(labels) = &dataset.labels {
            out.push_str(&format!(",{}", labels[r]));
        }
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// IDX (big-endian binary image/label pairs)
// ---------------------------------------------------------------------------

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format(format!("IDX: truncated {what}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads an IDX image/label pair. Pixels scale to `[0, 1]`; the grid shape
/// is recorded when both sides are even (the mosaic builder needs quadrants).
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset> {
    let mut img = std::fs::File::open(images_path.as_ref())?;
    let magic = read_u32_be(&mut img, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "IDX images: bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(&mut img, "image count")? as usize;
    let h = read_u32_be(&mut img, "image rows")? as usize;
    let w = read_u32_be(&mut img, "image cols")? as usize;
    if count == 0 {
        return Err(Error::Format("IDX images: empty image set".to_string()));
    }
    let mut pixels = vec![0u8; count * h * w];
    img.read_exact(&mut pixels)
        .map_err(|_| Error::Format("IDX images: truncated pixel data".to_string()))?;

    let mut lab = std::fs::File::open(labels_path.as_ref())?;
    let magic = read_u32_be(&mut lab, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "IDX labels: bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let label_count = read_u32_be(&mut lab, "label count")? as usize;
    if label_count != count {
        return Err(Error::Format(format!(
            "IDX: {count} images but {label_count} labels"
        )));
    }
    let mut raw_labels = vec![0u8; count];
    lab.read_exact(&mut raw_labels)
        .map_err(|_| Error::Format("IDX labels: truncated label data".to_string()))?;

    let data: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let dataset = LabeledDataset::labeled(Matrix::new_unchecked(count, h * w, data), labels)?;
    if h.is_multiple_of(2) && w.is_multiple_of(2) {
        dataset.with_grid_shape(h, w, 1)
    } else {
        Ok(dataset)
    }
}
