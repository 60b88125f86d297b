//! Synthetic image data, non-IID partitioning, backdoor injection and the
//! perturbation augmentation used by server-side calibration.

mod io;

pub use io::{read_dataset, write_dataset};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Dirichlet, Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Batch;
use crate::rng;

/// One labelled image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Flattened `[channel][row][col]` pixels in [0, 1].
    pub pixels: Vec<f64>,
    pub label: usize,
    /// True when the backdoor patch was applied and the label rewritten.
    pub poisoned: bool,
}

/// A set of samples held by one party.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShard {
    pub samples: Vec<Sample>,
    /// `(channels, height, width)` common to all samples.
    pub shape: (usize, usize, usize),
    pub num_classes: usize,
    /// Owning client id, when partitioned.
    pub owner: Option<usize>,
}

impl DatasetShard {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn pixel_dim(&self) -> usize {
        self.shape.0 * self.shape.1 * self.shape.2
    }

    /// Number of samples per class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.num_classes];
        for s in &self.samples {
            hist[s.label] += 1;
        }
        hist
    }

    /// The whole shard as one batch.
    pub fn as_batch(&self) -> Batch {
        self.batch_of(&(0..self.len()).collect::<Vec<_>>())
    }

    /// Batch assembled from the given sample indices.
    pub fn batch_of(&self, indices: &[usize]) -> Batch {
        let dim = self.pixel_dim();
        let mut inputs = Vec::with_capacity(indices.len() * dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(&self.samples[i].pixels);
            labels.push(self.samples[i].label);
        }
        Batch::new(inputs, labels, dim).expect("indices yield a consistent batch")
    }
}

/// Backdoor trigger: a pixel patch stamped at a fixed position, with the
/// label rewritten to the target class.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerSpec {
    /// Row-major `size x size` patch values.
    pub patch: Vec<f64>,
    pub size: usize,
    /// Top-left `(row, col)` of the patch.
    pub position: (usize, usize),
    pub target_class: usize,
    /// Fraction of the shard to poison, in (0, 1].
    pub poison_rate: f64,
}

impl TriggerSpec {
    /// Uniform-valued square patch.
    pub fn uniform(size: usize, value: f64, position: (usize, usize), target_class: usize, poison_rate: f64) -> Self {
        TriggerSpec {
            patch: vec![value; size * size],
            size,
            position,
            target_class,
            poison_rate,
        }
    }

    pub fn validate(&self, shape: (usize, usize, usize), num_classes: usize) -> Result<()> {
        let (_, h, w) = shape;
        if self.patch.len() != self.size * self.size {
            return Err(Error::Config("trigger patch length mismatch".into()));
        }
        if self.position.0 + self.size > h || self.position.1 + self.size > w {
            return Err(Error::Config(format!(
                "trigger patch {}x{} at {:?} does not fit {h}x{w} image",
                self.size, self.size, self.position
            )));
        }
        if self.target_class >= num_classes {
            return Err(Error::Config(format!(
                "trigger target class {} out of range",
                self.target_class
            )));
        }
        if !(self.poison_rate > 0.0 && self.poison_rate <= 1.0) {
            return Err(Error::Config(format!(
                "poison_rate must be in (0, 1], got {}",
                self.poison_rate
            )));
        }
        Ok(())
    }

    fn stamp(&self, pixels: &mut [f64], shape: (usize, usize, usize)) {
        let (c, h, w) = shape;
        let _ = h;
        for ch in 0..c {
            for i in 0..self.size {
                for j in 0..self.size {
                    let idx = ch * (shape.1 * w) + (self.position.0 + i) * w + (self.position.1 + j);
                    pixels[idx] = self.patch[i * self.size + j].clamp(0.0, 1.0);
                }
            }
        }
    }
}

/// Perturbation transform: Gaussian pixel noise plus one constant block at a
/// random position. `noise_stddev = 0` and `block_size = 0` is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub noise_stddev: f64,
    pub block_size: usize,
    pub block_intensity: f64,
}

impl AugmentSpec {
    pub fn identity() -> Self {
        AugmentSpec {
            noise_stddev: 0.0,
            block_size: 0,
            block_intensity: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.noise_stddev == 0.0 && self.block_size == 0
    }

    pub fn validate(&self, shape: (usize, usize, usize)) -> Result<()> {
        let (_, h, w) = shape;
        if self.noise_stddev < 0.0 {
            return Err(Error::Config("noise_stddev must be >= 0".into()));
        }
        if self.block_size > h || self.block_size > w {
            return Err(Error::Config(format!(
                "augment block {} does not fit {h}x{w} image",
                self.block_size
            )));
        }
        if !(0.0..=1.0).contains(&self.block_intensity) {
            return Err(Error::Config("block_intensity must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-sample pixel noise used by the synthetic generator.
const GEN_NOISE_STDDEV: f64 = 0.26;

/// Pattern anchor per class. Class 0 sits in the top-left quadrant so that
/// its legitimate feature shares support with typical corner triggers; the
/// remaining classes are spread away from it.
const CLASS_ANCHORS: [(isize, isize); 7] = [
    (5, 5),
    (11, 11),
    (4, 11),
    (11, 4),
    (8, 8),
    (12, 8),
    (8, 12),
];

/// Generates `num_classes * per_class` labelled images.
///
/// Each class is a distinct Gaussian-blurred geometric pattern at a
/// class-indexed anchor; per-sample position jitter, brightness jitter,
/// background illumination and pixel noise are added on top. Deterministic
/// under the seed.
pub fn generate_synthetic(num_classes: usize, per_class: usize, seed: u64) -> DatasetShard {
    assert!(num_classes >= 2, "need at least 2 classes");
    assert!(per_class >= 1, "need at least 1 sample per class");
    let shape = (1usize, 16usize, 16usize);
    let (_, h, w) = shape;
    let mut samples = Vec::with_capacity(num_classes * per_class);
    for class in 0..num_classes {
        let mut rng = rng::stream(seed, "datagen", class as u64, 0);
        let noise = Normal::new(0.0, GEN_NOISE_STDDEV).expect("valid stddev");
        for _ in 0..per_class {
            let dy = rng.gen_range(-2..=2isize);
            let dx = rng.gen_range(-2..=2isize);
            let template = blur(
                &blur(&class_template(class, h, w, dy, dx), h, w),
                h,
                w,
            );
            let brightness = rng.gen_range(0.25..0.70);
            let background = rng.gen_range(0.05..0.30);
            let pixels: Vec<f64> = template
                .iter()
                .map(|t| {
                    (background + t * brightness + noise.sample(&mut rng)).clamp(0.0, 1.0)
                })
                .collect();
            samples.push(Sample {
                pixels,
                label: class,
                poisoned: false,
            });
        }
    }
    DatasetShard {
        samples,
        shape,
        num_classes,
        owner: None,
    }
}

fn class_template(class: usize, h: usize, w: usize, jitter_y: isize, jitter_x: isize) -> Vec<f64> {
    let mut canvas = vec![0.0; h * w];
    let (ay, ax) = CLASS_ANCHORS[class % CLASS_ANCHORS.len()];
    let ring = class / CLASS_ANCHORS.len();
    let cy = (ay + jitter_y + ring as isize).clamp(3, h as isize - 4);
    let cx = (ax + jitter_x).clamp(3, w as isize - 4);
    let mut put = |di: isize, dj: isize, v: f64| {
        let i = cy + di;
        let j = cx + dj;
        if i >= 0 && j >= 0 && (i as usize) < h && (j as usize) < w {
            canvas[i as usize * w + j as usize] = v;
        }
    };
    match class % 7 {
        0 => {
            // filled disc
            for di in -3..=3isize {
                for dj in -3..=3isize {
                    if (di * di + dj * dj) as f64 <= 6.5 {
                        put(di, dj, 1.0);
                    }
                }
            }
        }
        1 => {
            // filled square
            for di in -2..=2isize {
                for dj in -2..=2isize {
                    put(di, dj, 1.0);
                }
            }
        }
        2 => {
            // plus sign
            for d in -3..=3isize {
                put(d, 0, 1.0);
                put(d, 1, 1.0);
                put(0, d, 1.0);
                put(1, d, 1.0);
            }
        }
        3 => {
            // horizontal bar
            for di in -1..=1isize {
                for dj in -3..=3isize {
                    put(di, dj, 1.0);
                }
            }
        }
        4 => {
            // vertical bar
            for di in -3..=3isize {
                for dj in -1..=1isize {
                    put(di, dj, 1.0);
                }
            }
        }
        5 => {
            // ring
            for di in -3..=3isize {
                for dj in -3..=3isize {
                    let d2 = (di * di + dj * dj) as f64;
                    if (4.0..=10.5).contains(&d2) {
                        put(di, dj, 1.0);
                    }
                }
            }
        }
        _ => {
            // diagonal stripe
            for di in -3..=3isize {
                for dj in -3..=3isize {
                    if (di - dj).abs() <= 1 {
                        put(di, dj, 1.0);
                    }
                }
            }
        }
    }
    canvas
}

/// 3x3 binomial blur with zero boundary.
fn blur(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let kernel = [1.0, 2.0, 1.0];
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (di, kv) in kernel.iter().enumerate() {
                let ii = i as isize + di as isize - 1;
                if ii < 0 || ii >= h as isize {
                    continue;
                }
                for (dj, kh) in kernel.iter().enumerate() {
                    let jj = j as isize + dj as isize - 1;
                    if jj < 0 || jj >= w as isize {
                        continue;
                    }
                    acc += kv * kh * img[ii as usize * w + jj as usize];
                    norm += kv * kh;
                }
            }
            out[i * w + j] = acc / norm.max(1.0);
        }
    }
    out
}

/// Stratified train/test split; the test side takes `ceil(fraction * n)` of
/// each class, chosen by seed.
pub fn split_test_stratified(
    data: &DatasetShard,
    fraction: f64,
    seed: u64,
) -> Result<(DatasetShard, DatasetShard)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "test_fraction must be in [0, 1), got {fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..data.num_classes {
        let mut indices: Vec<usize> = (0..data.len())
            .filter(|&i| data.samples[i].label == class)
            .collect();
        let mut rng = rng::stream(seed, "split", class as u64, 0);
        indices.shuffle(&mut rng);
        let n_test = ((indices.len() as f64) * fraction).ceil() as usize;
        for (k, &i) in indices.iter().enumerate() {
            if k < n_test {
                test.push(data.samples[i].clone());
            } else {
                train.push(data.samples[i].clone());
            }
        }
    }
    let mk = |samples: Vec<Sample>| DatasetShard {
        samples,
        shape: data.shape,
        num_classes: data.num_classes,
        owner: None,
    };
    Ok((mk(train), mk(test)))
}

const PARTITION_MAX_RETRIES: usize = 100;

/// Splits a dataset across clients with per-class Dirichlet(alpha) label
/// skew.
///
/// Per class, client proportions are drawn from Dir(alpha) and the class
/// samples are divided by largest-remainder rounding (ties to the lowest
/// client id). The whole draw is retried until every shard is non-empty,
/// within a bounded retry budget.
pub fn dirichlet_partition(
    data: &DatasetShard,
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<DatasetShard>> {
    if n_clients < 2 {
        return Err(Error::Config("need at least 2 clients".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("alpha must be > 0, got {alpha}")));
    }
    let hist = data.class_histogram();
    for (class, count) in hist.iter().enumerate() {
        if *count < n_clients {
            return Err(Error::Config(format!(
                "class {class} has {count} samples, fewer than {n_clients} clients"
            )));
        }
    }
    let by_class: Vec<Vec<usize>> = (0..data.num_classes)
        .map(|class| {
            (0..data.len())
                .filter(|&i| data.samples[i].label == class)
                .collect()
        })
        .collect();

    for attempt in 0..PARTITION_MAX_RETRIES {
        let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
        for (class, indices) in by_class.iter().enumerate() {
            let mut rng = rng::stream(seed, "partition", attempt as u64, class as u64);
            let dirichlet =
                Dirichlet::new(&vec![alpha; n_clients]).expect("valid Dirichlet parameters");
            let proportions = dirichlet.sample(&mut rng);
            let counts = largest_remainder(&proportions, indices.len());
            let mut shuffled = indices.clone();
            shuffled.shuffle(&mut rng);
            let mut cursor = 0;
            for (client, count) in counts.iter().enumerate() {
                assignment[client].extend_from_slice(&shuffled[cursor..cursor + count]);
                cursor += count;
            }
        }
        if assignment.iter().all(|a| !a.is_empty()) {
            return Ok(assignment
                .into_iter()
                .enumerate()
                .map(|(client, mut indices)| {
                    indices.sort_unstable();
                    DatasetShard {
                        samples: indices.iter().map(|&i| data.samples[i].clone()).collect(),
                        shape: data.shape,
                        num_classes: data.num_classes,
                        owner: Some(client),
                    }
                })
                .collect());
        }
    }
    Err(Error::Partition(format!(
        "could not produce non-empty shards for alpha={alpha}, n_clients={n_clients} \
         after {PARTITION_MAX_RETRIES} draws"
    )))
}

/// Integer apportionment of `total` by `proportions`: floor everything, then
/// hand remaining units to the largest fractional remainders (ties to the
/// lowest index).
fn largest_remainder(proportions: &[f64], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for k in 0..total.saturating_sub(assigned) {
        counts[order[k % order.len()]] += 1;
    }
    counts
}

/// Poisons a `poison_rate` fraction of the shard (chosen by seed) and builds
/// the backdoor evaluation set by stamping the trigger onto every sample of
/// the held-out clean test set, labels rewritten to the target class.
pub fn inject_backdoor(
    shard: &DatasetShard,
    clean_test: &DatasetShard,
    trig: &TriggerSpec,
    seed: u64,
) -> Result<(DatasetShard, DatasetShard)> {
    trig.validate(shard.shape, shard.num_classes)?;
    let n_poison = (trig.poison_rate * shard.len() as f64).floor() as usize;
    let mut indices: Vec<usize> = (0..shard.len()).collect();
    let mut rng = rng::stream(seed, "poison", 0, 0);
    indices.shuffle(&mut rng);
    let mut poisoned_shard = shard.clone();
    for &i in indices.iter().take(n_poison) {
        let sample = &mut poisoned_shard.samples[i];
        trig.stamp(&mut sample.pixels, shard.shape);
        sample.label = trig.target_class;
        sample.poisoned = true;
    }
    let mut poisoned_test = clean_test.clone();
    poisoned_test.owner = None;
    for sample in poisoned_test.samples.iter_mut() {
        trig.stamp(&mut sample.pixels, clean_test.shape);
        sample.label = trig.target_class;
        sample.poisoned = true;
    }
    Ok((poisoned_shard, poisoned_test))
}

/// The perturbation transform: adds Gaussian pixel noise, sets one random
/// `block_size^2` block to `block_intensity`, clamps to [0, 1]. The label is
/// never changed.
pub fn augment(
    x: &Sample,
    shape: (usize, usize, usize),
    spec: &AugmentSpec,
    seed: u64,
) -> Sample {
    let (c, h, w) = shape;
    debug_assert_eq!(x.pixels.len(), c * h * w);
    let mut rng = rng::stream(seed, "augment", 0, 0);
    let mut pixels = x.pixels.clone();
    let block_pos = if spec.block_size > 0 {
        let r = rng.gen_range(0..=h - spec.block_size);
        let col = rng.gen_range(0..=w - spec.block_size);
        Some((r, col))
    } else {
        None
    };
    if spec.noise_stddev > 0.0 {
        let noise = Normal::new(0.0, spec.noise_stddev).expect("valid stddev");
        for p in pixels.iter_mut() {
            *p += noise.sample(&mut rng);
        }
    }
    if let Some((r, col)) = block_pos {
        for ch in 0..c {
            for i in 0..spec.block_size {
                for j in 0..spec.block_size {
                    pixels[ch * h * w + (r + i) * w + (col + j)] = spec.block_intensity;
                }
            }
        }
    }
    for p in pixels.iter_mut() {
        *p = p.clamp(0.0, 1.0);
    }
    Sample {
        pixels,
        label: x.label,
        poisoned: x.poisoned,
    }
}
