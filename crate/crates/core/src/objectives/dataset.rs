//! Labelled feature matrices, the synthetic Gaussian generator, and the iid /
//! label-sorted partition strategies.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ObjectiveError;

/// Default distance between class means, in units of the per-coordinate
/// noise standard deviation.
pub const DEFAULT_SEPARATION: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Per-agent sample indices. Disjoint and covering `0..n_samples`.
pub type Partition = Vec<Vec<usize>>;

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self, ObjectiveError> {
        if features.len() != labels.len() {
            return Err(ObjectiveError::Dataset(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            if features.iter().any(|r| r.len() != first.len()) {
                return Err(ObjectiveError::Dataset("ragged feature rows".into()));
            }
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Reads a CSV with a header row, feature columns, and a final `label`
    /// column.
    pub fn load_csv(path: &Path) -> Result<Self, ObjectiveError> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.iter().next_back() != Some("label") {
            return Err(ObjectiveError::Dataset("last CSV column must be `label`".into()));
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let mut values = Vec::with_capacity(record.len() - 1);
            for field in record.iter().take(record.len() - 1) {
                values.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| ObjectiveError::Dataset(format!("row {}: bad feature {field:?}", row + 1)))?,
                );
            }
            let label = record[record.len() - 1].trim();
            labels.push(
                label
                    .parse::<usize>()
                    .map_err(|_| ObjectiveError::Dataset(format!("row {}: bad label {label:?}", row + 1)))?,
            );
            features.push(values);
        }
        Self::new(features, labels)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), ObjectiveError> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.n_features()).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        writer.write_record(&header)?;
        for (row, &label) in self.features.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            writer.write_record(&rec)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Gaussian class-conditional samples with unit noise and means separated by
/// [`DEFAULT_SEPARATION`]. Labels are assigned round-robin, so class counts
/// differ by at most one.
pub fn make_synthetic_dataset(
    seed: u64,
    n_samples: usize,
    n_features: usize,
    n_classes: usize,
) -> Result<Dataset, ObjectiveError> {
    make_synthetic_dataset_with_separation(seed, n_samples, n_features, n_classes, DEFAULT_SEPARATION)
}

pub fn make_synthetic_dataset_with_separation(
    seed: u64,
    n_samples: usize,
    n_features: usize,
    n_classes: usize,
    separation: f64,
) -> Result<Dataset, ObjectiveError> {
    if n_samples == 0 || n_features == 0 || n_classes == 0 {
        return Err(ObjectiveError::Dataset(
            "sample, feature and class counts must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = || -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n_features).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    };
    // Two classes sit antipodally at distance `separation`; more classes sit
    // on a sphere of radius separation/√2 so nearly orthogonal means are
    // about `separation` apart.
    let means: Vec<Vec<f64>> = if n_classes == 2 {
        let u = unit();
        vec![
            u.iter().map(|x| -0.5 * separation * x).collect(),
            u.iter().map(|x| 0.5 * separation * x).collect(),
        ]
    } else {
        (0..n_classes)
            .map(|_| unit().into_iter().map(|x| x * separation / 2f64.sqrt()).collect())
            .collect()
    };
    let mut features = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let class = i % n_classes;
        let row = means[class]
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + z
            })
            .collect();
        features.push(row);
        labels.push(class);
    }
    Dataset::new(features, labels)
}

fn check_split(n_samples: usize, n_agents: usize) -> Result<(), ObjectiveError> {
    if n_agents == 0 || n_agents > n_samples {
        return Err(ObjectiveError::Partition {
            agents: n_agents,
            samples: n_samples,
        });
    }
    Ok(())
}

/// Near-equal contiguous blocks; the first `len % n` blocks get one extra.
fn split_blocks(order: Vec<usize>, n_agents: usize) -> Partition {
    let base = order.len() / n_agents;
    let extra = order.len() % n_agents;
    let mut out = Vec::with_capacity(n_agents);
    let mut start = 0;
    for a in 0..n_agents {
        let len = base + usize::from(a < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Shuffles all indices with `seed` and deals near-equal contiguous blocks.
pub fn partition_iid(data: &Dataset, n_agents: usize, seed: u64) -> Result<Partition, ObjectiveError> {
    check_split(data.len(), n_agents)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(split_blocks(order, n_agents))
}

/// Sorts indices by label (stable) and cuts them into contiguous chunks, so
/// each agent sees label ranges the others mostly lack.
pub fn partition_noniid(data: &Dataset, n_agents: usize) -> Result<Partition, ObjectiveError> {
    check_split(data.len(), n_agents)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by_key(|&i| data.labels[i]);
    Ok(split_blocks(order, n_agents))
}
