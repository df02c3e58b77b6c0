//! Dataset representation, synthetic generation, CSV ingestion, label
//! corruption, and partitioning into valuation players.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Result, ValuationError};
use crate::rng::rng_for;

/// A classification dataset: feature matrix, integer labels, stable ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    ids: Vec<u64>,
    num_features: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        ids: Vec<u64>,
        num_features: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if ids.len() != n || features.len() != n * num_features {
            return Err(ValuationError::Contract(format!(
                "inconsistent dataset shapes: {} labels, {} ids, {} feature values for d={}",
                n,
                ids.len(),
                features.len(),
                num_features
            )));
        }
        if num_classes < 2 {
            return Err(ValuationError::Invalid("num_classes must be >= 2".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(ValuationError::Invalid(format!(
                "label {bad} out of range [0, {num_classes})"
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n {
            return Err(ValuationError::Invalid("duplicate point ids".into()));
        }
        Ok(Self { features, labels, ids, num_features, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// New dataset keeping only the given row indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(ValuationError::Invalid(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            ids.push(self.ids[i]);
        }
        Dataset::new(features, labels, ids, self.num_features, self.num_classes)
    }

    /// Row indices of the given ids; errors on unknown ids.
    pub fn indices_of_ids(&self, ids: &[u64]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            match self.ids.iter().position(|x| x == id) {
                Some(i) => out.push(i),
                None => return Err(ValuationError::Invalid(format!("unknown point id {id}"))),
            }
        }
        Ok(out)
    }

    /// Complement of the given row indices, in ascending order.
    pub fn complement_indices(&self, indices: &[usize]) -> Vec<usize> {
        let mut member = vec![false; self.len()];
        for &i in indices {
            member[i] = true;
        }
        (0..self.len()).filter(|&i| !member[i]).collect()
    }
}

/// Player granularity for a valuation game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Point,
    Subset,
}

/// Disjoint, non-empty index sets over a dataset; the players of the game.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    players: Vec<Vec<usize>>,
    granularity: Granularity,
}

impl Partition {
    /// Build a subset-granularity partition from explicit player index sets.
    pub fn from_players(players: Vec<Vec<usize>>) -> Self {
        debug_assert!(players.iter().all(|p| !p.is_empty()));
        Self { players, granularity: Granularity::Subset }
    }

    pub fn players(&self) -> &[Vec<usize>] {
        &self.players
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Union of the named players' indices, ascending.
    pub fn coalition_indices(&self, players: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = players
            .iter()
            .flat_map(|&p| self.players[p].iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Which points (or players) had their labels flipped.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMask {
    pub flipped: Vec<bool>,
}

impl NoiseMask {
    pub fn count(&self) -> usize {
        self.flipped.iter().filter(|&&f| f).count()
    }

    /// Fraction of players of a partition containing at least one flipped point.
    pub fn player_mask(&self, partition: &Partition) -> Vec<bool> {
        partition
            .players()
            .iter()
            .map(|p| p.iter().any(|&i| self.flipped[i]))
            .collect()
    }
}

/// Class-conditional Gaussian blobs with means `separation` apart.
///
/// Class means are placed at `separation * e_c` along the first
/// `num_classes` feature axes (cycling when d < C); labels are assigned
/// round-robin so classes are balanced within one point.
pub fn generate_synthetic(
    n: usize,
    d: usize,
    num_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 || n < num_classes || d == 0 {
        return Err(ValuationError::Invalid(
            "need n >= num_classes >= 2 and d >= 1".into(),
        ));
    }
    if separation < 0.0 {
        return Err(ValuationError::Invalid("separation must be >= 0".into()));
    }
    let mut rng = rng_for(seed, 0x6765_6e); // "gen"
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    // Round-robin labels through a shuffled slot order so class identity is
    // not correlated with id while counts stay balanced within +-1.
    let mut slots: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    slots.shuffle(&mut rng);
    for &class in &slots {
        for j in 0..d {
            let mean = if j % num_classes == class { separation } else { 0.0 };
            let x: f64 = standard_normal(&mut rng);
            features.push(mean + x);
        }
        labels.push(class);
    }
    let ids = (0..n as u64).collect();
    Dataset::new(features, labels, ids, d, num_classes)
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple and portable.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Load a dataset from a headered CSV file.
///
/// Every column except `label_column` is a numeric feature; row ids are the
/// 0-based data row index.
pub fn load_csv(path: &Path, label_column: &str, num_classes: usize) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(ValuationError::Parse { line: 1, message: "empty file".into() })
        }
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_idx = columns
        .iter()
        .position(|c| *c == label_column)
        .ok_or_else(|| ValuationError::Parse {
            line: 1,
            message: format!("label column `{label_column}` not found in header"),
        })?;
    let d = columns.len() - 1;
    if d == 0 {
        return Err(ValuationError::Parse { line: 1, message: "no feature columns".into() });
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, line) in lines.enumerate() {
        let line_no = row + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(ValuationError::Parse {
                line: line_no,
                message: format!("expected {} cells, found {}", columns.len(), cells.len()),
            });
        }
        for (i, cell) in cells.iter().enumerate() {
            if i == label_idx {
                let label: i64 = cell.parse().map_err(|_| ValuationError::Parse {
                    line: line_no,
                    message: format!("non-integer label `{cell}`"),
                })?;
                if label < 0 || label as usize >= num_classes {
                    return Err(ValuationError::Invalid(format!(
                        "line {line_no}: label {label} out of range [0, {num_classes})"
                    )));
                }
                labels.push(label as usize);
            } else {
                let value: f64 = cell.parse().map_err(|_| ValuationError::Parse {
                    line: line_no,
                    message: format!("non-numeric feature `{cell}`"),
                })?;
                features.push(value);
            }
        }
    }
    let n = labels.len();
    let ids = (0..n as u64).collect();
    Dataset::new(features, labels, ids, d, num_classes)
}

/// Write a dataset as CSV with feature columns `f0..` and a `label` column.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..dataset.num_features())
        .map(|j| format!("f{j}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..dataset.len() {
        let mut cells: Vec<String> = dataset.row(i).iter().map(|x| format!("{x:?}")).collect();
        cells.push(dataset.label(i).to_string());
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Flip the labels of `round(fraction * n)` points chosen uniformly without
/// replacement; each new label is uniform over the other classes.
pub fn flip_labels(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, NoiseMask)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(ValuationError::Invalid("fraction must be in [0, 1]".into()));
    }
    let n = dataset.len();
    let count = (fraction * n as f64).round() as usize;
    let mut rng = rng_for(seed, 0x666c_6970); // "flip"
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let chosen = &order[..count];

    let mut flipped = vec![false; n];
    let mut labels = dataset.labels().to_vec();
    let c = dataset.num_classes();
    let mut sorted_chosen = chosen.to_vec();
    sorted_chosen.sort_unstable();
    for &i in &sorted_chosen {
        let offset = rng.gen_range(1..c);
        labels[i] = (labels[i] + offset) % c;
        flipped[i] = true;
    }
    let out = Dataset::new(
        dataset.features.clone(),
        labels,
        dataset.ids.clone(),
        dataset.num_features,
        c,
    )?;
    Ok((out, NoiseMask { flipped }))
}

/// Flip all labels of `round(fraction * num_players)` whole players.
pub fn flip_player_labels(
    dataset: &Dataset,
    partition: &Partition,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, NoiseMask)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(ValuationError::Invalid("fraction must be in [0, 1]".into()));
    }
    let p = partition.num_players();
    let count = (fraction * p as f64).round() as usize;
    let mut rng = rng_for(seed, 0x7066_6c70); // "pflp"
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut chosen = order[..count].to_vec();
    chosen.sort_unstable();

    let mut flipped = vec![false; dataset.len()];
    let mut labels = dataset.labels().to_vec();
    let c = dataset.num_classes();
    for &player in &chosen {
        for &i in &partition.players()[player] {
            let offset = rng.gen_range(1..c);
            labels[i] = (labels[i] + offset) % c;
            flipped[i] = true;
        }
    }
    let out = Dataset::new(
        dataset.features.clone(),
        labels,
        dataset.ids.clone(),
        dataset.num_features,
        c,
    )?;
    Ok((out, NoiseMask { flipped }))
}

/// Split a dataset into valuation players.
///
/// Point granularity yields one singleton per point in id order. Subset
/// granularity shuffles the indices and cuts contiguous blocks whose sizes
/// differ by at most one.
pub fn partition(
    dataset: &Dataset,
    granularity: Granularity,
    num_players: usize,
    seed: u64,
) -> Result<Partition> {
    let n = dataset.len();
    if num_players == 0 || num_players > n {
        return Err(ValuationError::Invalid(format!(
            "num_players {num_players} must be in [1, {n}]"
        )));
    }
    match granularity {
        Granularity::Point => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| dataset.ids[i]);
            Ok(Partition {
                players: order.into_iter().map(|i| vec![i]).collect(),
                granularity,
            })
        }
        Granularity::Subset => {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = rng_for(seed, 0x7061_7274); // "part"
            order.shuffle(&mut rng);
            let base = n / num_players;
            let extra = n % num_players;
            let mut players = Vec::with_capacity(num_players);
            let mut cursor = 0;
            for p in 0..num_players {
                let size = base + usize::from(p < extra);
                let mut block = order[cursor..cursor + size].to_vec();
                block.sort_unstable();
                players.push(block);
                cursor += size;
            }
            Ok(Partition { players, granularity })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(50, 4, 3, 2.0, 9).unwrap();
        let b = generate_synthetic(50, 4, 3, 2.0, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(50, 4, 3, 2.0, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_labels_balanced() {
        let d = generate_synthetic(101, 3, 4, 1.0, 1).unwrap();
        let mut counts = [0usize; 4];
        for &l in d.labels() {
            counts[l] += 1;
        }
        let max = *counts.iter().max().unwrap();
        let min = *counts.iter().min().unwrap();
        assert!(max - min <= 1, "counts {counts:?}");
    }

    #[test]
    fn flip_counts_and_mask() {
        let d = generate_synthetic(500, 5, 2, 1.0, 3).unwrap();
        let (noisy, mask) = flip_labels(&d, 0.2, 11).unwrap();
        assert_eq!(mask.count(), 100);
        for i in 0..d.len() {
            if mask.flipped[i] {
                assert_ne!(noisy.label(i), d.label(i));
            } else {
                assert_eq!(noisy.label(i), d.label(i));
            }
        }
        assert_eq!(noisy.ids(), d.ids());
        assert_eq!(noisy.features, d.features);
    }

    #[test]
    fn flip_zero_fraction_is_identity() {
        let d = generate_synthetic(20, 2, 2, 1.0, 3).unwrap();
        let (same, mask) = flip_labels(&d, 0.0, 11).unwrap();
        assert_eq!(same, d);
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn point_partition_is_singletons() {
        let d = generate_synthetic(5, 2, 2, 1.0, 3).unwrap();
        let p = partition(&d, Granularity::Point, 5, 0).unwrap();
        assert_eq!(p.num_players(), 5);
        assert!(p.players().iter().all(|s| s.len() == 1));
    }

    #[test]
    fn subset_partition_covers_and_balances() {
        let d = generate_synthetic(103, 2, 2, 1.0, 3).unwrap();
        let p = partition(&d, Granularity::Subset, 10, 4).unwrap();
        let sizes: Vec<usize> = p.players().iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 103);
        assert_eq!(sizes.iter().filter(|&&s| s == 11).count(), 3);
        assert_eq!(sizes.iter().filter(|&&s| s == 10).count(), 7);
        let mut all: Vec<usize> = p.players().iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
    }

    #[test]
    fn partition_rejects_too_many_players() {
        let d = generate_synthetic(10, 2, 2, 1.0, 3).unwrap();
        assert!(partition(&d, Granularity::Subset, 11, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = generate_synthetic(30, 3, 2, 1.5, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        save_csv(&d, &path).unwrap();
        let back = load_csv(&path, "label", 2).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_bad_cell_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "f0,label\n1.0,0\nnope,1\n").unwrap();
        let err = load_csv(&path, "label", 2).unwrap_err();
        match err {
            ValuationError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
