//! Runs one configured experiment end to end: data preparation, model
//! training, value computation, evaluation, and persistence. Every numeric
//! output is a pure function of the config plus the master seed; curves and
//! per-player values land in CSV files, scalars in `summary.json`, and
//! reproducibility metadata in `manifest.json` (the only file carrying
//! timestamps).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::audit::{kr, lkd, lmse, loss_histogram, AuditReport};
use crate::baselines::{beta_shapley, influence_scores, knn_shapley};
use crate::config::{
    DataSource, ExperimentConfig, ExperimentKind, ModeFlag, ValueMethod,
};
use crate::data::{flip_labels, generate_synthetic, load_csv, partition, Dataset, Granularity, Partition};
use crate::error::{Result, ValuationError};
use crate::harness::{bench_timing, noisy_detection_curve, partial_study, removal_curve};
use crate::model::{init_params, ModelSpec, ParamVector};
use crate::rng::mix_seed;
use crate::shapley::{
    exact_shapley, make_retrain_utility, make_unlearn_utility, mc_shapley, partial_value,
    UnlearnMode, EXACT_PLAYER_LIMIT,
};
use crate::train::{perf, train, TrainConfig};
use crate::unlearn::{oracle_unlearn, unlearn, UnlearnConfig};

// stage identifiers for seed derivation
const STAGE_DATA: u64 = 1;
const STAGE_TEST: u64 = 2;
const STAGE_FLIP: u64 = 3;
const STAGE_TRAIN: u64 = 4;
const STAGE_UNLEARN: u64 = 5;
const STAGE_PARTITION: u64 = 6;
const STAGE_SHAPLEY: u64 = 7;

#[derive(Debug, Clone, serde::Serialize)]
pub struct StageSeeds {
    pub master: u64,
    pub data: u64,
    pub test: u64,
    pub flip: u64,
    pub train: u64,
    pub unlearn: u64,
    pub partition: u64,
    pub shapley: u64,
}

impl StageSeeds {
    fn derive(master: u64) -> Self {
        Self {
            master,
            data: mix_seed(master, STAGE_DATA),
            test: mix_seed(master, STAGE_TEST),
            flip: mix_seed(master, STAGE_FLIP),
            train: mix_seed(master, STAGE_TRAIN),
            unlearn: mix_seed(master, STAGE_UNLEARN),
            partition: mix_seed(master, STAGE_PARTITION),
            shapley: mix_seed(master, STAGE_SHAPLEY),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub artifact_version: &'static str,
    pub start_unix_seconds: u64,
    pub end_unix_seconds: u64,
    pub seeds: StageSeeds,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn config_digest(config: &ExperimentConfig) -> String {
    let serialized = serde_json::to_string(config).unwrap_or_default();
    let mut hasher = Sha256::new();
    hasher.update(serialized.as_bytes());
    hex::encode(hasher.finalize())
}

/// Shortest round-trip float formatting keeps CSVs byte-stable.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct Prepared {
    train_set: Dataset,
    test_set: Dataset,
    point_noise: Option<Vec<bool>>,
    spec: ModelSpec,
    train_config: TrainConfig,
    unlearn_config: UnlearnConfig,
    seeds: StageSeeds,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let seeds = StageSeeds::derive(config.seed);
    let (mut train_set, test_set) = match &config.data.source {
        DataSource::Synthetic { num_points, num_features, num_classes, separation, test_points } => (
            generate_synthetic(*num_points, *num_features, *num_classes, *separation, seeds.data)?,
            generate_synthetic(*test_points, *num_features, *num_classes, *separation, seeds.test)?,
        ),
        DataSource::Csv { path, test_path, label_column, num_classes } => (
            load_csv(path, label_column, *num_classes)?,
            load_csv(test_path, label_column, *num_classes)?,
        ),
    };
    let mut point_noise = None;
    if config.data.flip_fraction > 0.0 {
        let (flipped, mask) = flip_labels(&train_set, config.data.flip_fraction, seeds.flip)?;
        train_set = flipped;
        point_noise = Some(mask.flipped);
    }
    let spec = ModelSpec::new(
        train_set.num_features(),
        config.model.hidden_dims.clone(),
        train_set.num_classes(),
        config.model.activation,
    )?;
    let train_config = TrainConfig { seed: seeds.train, ..config.train.clone() };
    let unlearn_config = UnlearnConfig { seed: seeds.unlearn, ..config.unlearn.clone() };
    Ok(Prepared { train_set, test_set, point_noise, spec, train_config, unlearn_config, seeds })
}

fn make_partition(config: &ExperimentConfig, p: &Prepared) -> Result<Partition> {
    let players = match config.shapley.granularity {
        Granularity::Point => p.train_set.len(),
        Granularity::Subset => config.shapley.num_players,
    };
    partition(&p.train_set, config.shapley.granularity, players, p.seeds.partition)
}

struct ValueInfo {
    method: &'static str,
    converged: Option<bool>,
    permutations_used: Option<usize>,
}

fn compute_values(
    config: &ExperimentConfig,
    p: &Prepared,
    part: &Partition,
) -> Result<(Vec<f64>, ValueInfo)> {
    let per_point_only = |name: &str| -> Result<()> {
        if part.granularity() != Granularity::Point {
            return Err(ValuationError::Invalid(format!(
                "shapley.method {name} supports only point granularity"
            )));
        }
        Ok(())
    };
    match config.shapley.method {
        ValueMethod::Knn => {
            per_point_only("knn")?;
            let values = knn_shapley(&p.train_set, &p.test_set, config.shapley.k)?;
            Ok((values, ValueInfo { method: "knn", converged: None, permutations_used: None }))
        }
        ValueMethod::Influence => {
            per_point_only("influence")?;
            let (model, _) = train(&p.spec, &p.train_set, &p.train_config)?;
            let scores = influence_scores(&model, &p.spec, &p.train_set, &p.test_set)?;
            Ok((
                scores.scores,
                ValueInfo { method: "influence", converged: None, permutations_used: None },
            ))
        }
        ValueMethod::Beta => {
            let utility = make_retrain_utility(
                &p.train_set,
                part,
                &p.spec,
                &p.train_config,
                &p.test_set,
            )?;
            let result = beta_shapley(
                &utility,
                part.num_players(),
                &config.shapley.beta,
                config.shapley.criterion.max_permutations,
                p.seeds.shapley,
            )?;
            Ok((
                result.values,
                ValueInfo {
                    method: "beta",
                    converged: Some(result.converged),
                    permutations_used: Some(result.permutations_used),
                },
            ))
        }
        ValueMethod::Retrain | ValueMethod::Unlearn => {
            let utility = if config.shapley.method == ValueMethod::Retrain {
                make_retrain_utility(&p.train_set, part, &p.spec, &p.train_config, &p.test_set)?
            } else {
                let (model_full, _) = train(&p.spec, &p.train_set, &p.train_config)?;
                let mode = match config.shapley.mode {
                    ModeFlag::Approx => UnlearnMode::Approx,
                    ModeFlag::Oracle => UnlearnMode::Oracle(p.train_config.clone()),
                };
                make_unlearn_utility(
                    &model_full,
                    &p.train_set,
                    part,
                    &p.spec,
                    &p.unlearn_config,
                    &p.test_set,
                    mode,
                )?
            };
            let name =
                if config.shapley.method == ValueMethod::Retrain { "retrain" } else { "unlearn" };
            if config.shapley.exact {
                if part.num_players() > EXACT_PLAYER_LIMIT {
                    return Err(ValuationError::Capability(format!(
                        "shapley.exact requires at most {EXACT_PLAYER_LIMIT} players"
                    )));
                }
                let result = exact_shapley(&utility, part.num_players())?;
                Ok((
                    result.values,
                    ValueInfo { method: name, converged: Some(true), permutations_used: None },
                ))
            } else {
                let result = mc_shapley(
                    &utility,
                    part.num_players(),
                    &config.shapley.criterion,
                    p.seeds.shapley,
                )?;
                Ok((
                    result.values,
                    ValueInfo {
                        method: name,
                        converged: Some(result.converged),
                        permutations_used: Some(result.permutations_used),
                    },
                ))
            }
        }
    }
}

fn values_csv_rows(part: &Partition, values: &[f64]) -> Vec<Vec<String>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            vec![i.to_string(), part.players()[i].len().to_string(), fmt_f64(v)]
        })
        .collect()
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ValuationError::NonFinite("computed values".into()));
    }
    Ok(())
}

/// Execute the configured experiment, writing all artifacts into the
/// configured output directory.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.check_invariants()?;
    let start = now_unix();
    let out_dir = config.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    let p = prepare(config)?;
    let mut files: Vec<PathBuf> = Vec::new();

    let summary = match config.kind {
        ExperimentKind::Value => {
            let part = make_partition(config, &p)?;
            let (values, info) = compute_values(config, &p, &part)?;
            check_finite(&values)?;
            let path = out_dir.join("values.csv");
            write_csv(&path, "player,points,value", &values_csv_rows(&part, &values))?;
            files.push(path);
            serde_json::json!({
                "kind": "value",
                "method": info.method,
                "num_players": part.num_players(),
                "values_sum": values.iter().sum::<f64>(),
                "converged": info.converged,
                "permutations_used": info.permutations_used,
            })
        }
        ExperimentKind::EvalNoisy => {
            let noise = p.point_noise.clone().ok_or_else(|| {
                ValuationError::Invalid(
                    "eval-noisy requires data.flip_fraction > 0".into(),
                )
            })?;
            let part = make_partition(config, &p)?;
            let (values, info) = compute_values(config, &p, &part)?;
            check_finite(&values)?;
            let mask = crate::data::NoiseMask { flipped: noise }.player_mask(&part);
            let curve = noisy_detection_curve(&values, &mask, config.task.bin_fraction)?;

            let vpath = out_dir.join("values.csv");
            write_csv(&vpath, "player,points,value", &values_csv_rows(&part, &values))?;
            files.push(vpath);
            let cpath = out_dir.join("detection_curve.csv");
            let rows: Vec<Vec<String>> = curve
                .bins_inspected_fraction
                .iter()
                .zip(&curve.noisy_found_fraction)
                .map(|(&x, &y)| vec![fmt_f64(x), fmt_f64(y)])
                .collect();
            write_csv(&cpath, "inspected_fraction,noisy_found_fraction", &rows)?;
            files.push(cpath);
            serde_json::json!({
                "kind": "eval-noisy",
                "method": info.method,
                "num_players": part.num_players(),
                "noisy_players": mask.iter().filter(|&&m| m).count(),
                "converged": info.converged,
                "permutations_used": info.permutations_used,
            })
        }
        ExperimentKind::EvalRemoval => {
            let part = make_partition(config, &p)?;
            let (values, info) = compute_values(config, &p, &part)?;
            check_finite(&values)?;
            let curve = removal_curve(
                &p.train_set,
                &part,
                &values,
                config.task.direction,
                &config.task.removal_fractions,
                &p.spec,
                &p.train_config,
                &p.test_set,
            )?;
            let vpath = out_dir.join("values.csv");
            write_csv(&vpath, "player,points,value", &values_csv_rows(&part, &values))?;
            files.push(vpath);
            let cpath = out_dir.join("removal_curve.csv");
            let rows: Vec<Vec<String>> = curve
                .removal_fraction
                .iter()
                .zip(&curve.test_accuracy)
                .map(|(&x, &y)| vec![fmt_f64(x), fmt_f64(y)])
                .collect();
            write_csv(&cpath, "removal_fraction,test_accuracy", &rows)?;
            files.push(cpath);
            serde_json::json!({
                "kind": "eval-removal",
                "method": info.method,
                "direction": config.task.direction,
                "skipped_fractions": curve.skipped_fractions,
                "converged": info.converged,
            })
        }
        ExperimentKind::Partial => {
            let part = partition(
                &p.train_set,
                Granularity::Subset,
                config.task.num_subsets,
                p.seeds.partition,
            )?;
            let (model_full, _) = train(&p.spec, &p.train_set, &p.train_config)?;
            let d_tgt = p.train_set.select(&part.players()[0])?;
            let (phi, components) = partial_value(
                &model_full,
                &p.spec,
                &d_tgt,
                &p.test_set,
                &p.train_config,
                &p.unlearn_config,
            )?;
            if !phi.is_finite() {
                return Err(ValuationError::NonFinite("partial value".into()));
            }
            let study = partial_study(
                &p.train_set,
                config.task.num_subsets,
                &p.spec,
                &p.train_config,
                &p.unlearn_config,
                &p.test_set,
                p.seeds.partition,
            )?;
            let spath = out_dir.join("partial_study.csv");
            let rows: Vec<Vec<String>> = study
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.subset.to_string(),
                        fmt_f64(r.phi_unlearn),
                        fmt_f64(r.phi_exact),
                        fmt_f64(r.retrain_perf),
                    ]
                })
                .collect();
            write_csv(&spath, "subset,phi_unlearn,phi_exact,retrain_perf", &rows)?;
            files.push(spath);
            serde_json::json!({
                "kind": "partial",
                "phi_tgt": phi,
                "components": components,
                "spc_vs_retrain_perf": study.spc_vs_retrain_perf,
                "spc_vs_exact": study.spc_vs_exact,
            })
        }
        ExperimentKind::Audit => {
            let part = partition(
                &p.train_set,
                Granularity::Subset,
                config.task.num_subsets,
                p.seeds.partition,
            )?;
            let forget_indices = &part.players()[0];
            let forget = p.train_set.select(forget_indices)?;
            let remain = p.train_set.select(&p.train_set.complement_indices(forget_indices))?;
            let forget_ids: Vec<u64> =
                forget_indices.iter().map(|&i| p.train_set.ids()[i]).collect();

            let (model_full, _) = train(&p.spec, &p.train_set, &p.train_config)?;
            let (m_unlearn, _) =
                unlearn(&model_full, &p.spec, &forget, &p.test_set, &p.unlearn_config)?;
            let m_retrain = oracle_unlearn(&p.train_set, &forget_ids, &p.spec, &p.train_config)?;
            let m_random: ParamVector = init_params(&p.spec, p.train_config.seed);

            let report = AuditReport {
                lkd: lkd(&m_unlearn, &m_retrain, &p.spec, &remain)?,
                lmse: lmse(&m_unlearn, &m_retrain, &p.spec, &remain)?,
                kr: kr(&m_unlearn, &model_full, &m_random, &p.spec, &forget)?,
                spc: None,
            };
            let hist = loss_histogram(&m_unlearn, &p.spec, &forget, 10)?;
            let hpath = out_dir.join("loss_histogram.csv");
            let rows: Vec<Vec<String>> = hist
                .counts
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    vec![fmt_f64(hist.bin_edges[i]), fmt_f64(hist.bin_edges[i + 1]), c.to_string()]
                })
                .collect();
            write_csv(&hpath, "bin_low,bin_high,count", &rows)?;
            files.push(hpath);
            serde_json::json!({
                "kind": "audit",
                "forget_points": forget.len(),
                "report": report,
                "perf_full": perf(&model_full, &p.spec, &p.test_set)?,
                "perf_unlearned": perf(&m_unlearn, &p.spec, &p.test_set)?,
                "perf_retrained": perf(&m_retrain, &p.spec, &p.test_set)?,
            })
        }
        ExperimentKind::Bench => {
            let report = bench_timing(
                &p.train_set,
                &p.spec,
                &p.train_config,
                &p.unlearn_config,
                config.task.repeats,
            )?;
            serde_json::json!({
                "kind": "bench",
                "report": report,
            })
        }
    };

    let spath = out_dir.join("summary.json");
    std::fs::write(&spath, serde_json::to_string_pretty(&summary)? + "\n")?;
    files.push(spath);

    let manifest = RunManifest {
        config_digest: config_digest(config),
        artifact_version: env!("CARGO_PKG_VERSION"),
        start_unix_seconds: start,
        end_unix_seconds: now_unix(),
        seeds: p.seeds.clone(),
        outputs: files.clone(),
    };
    let mpath = out_dir.join("manifest.json");
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n")?;
    files.push(mpath);

    Ok(RunOutput { out_dir, files, summary })
}

impl From<serde_json::Error> for ValuationError {
    fn from(e: serde_json::Error) -> Self {
        ValuationError::Invalid(format!("serialization failure: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn run_in_tempdir(text: &str) -> (RunOutput, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::parse(text).unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        let out = run(&cfg).unwrap();
        (out, dir)
    }

    const SMALL_VALUE: &str = "\
[experiment]
kind = value
seed = 3
[data]
num_points = 5
num_features = 3
test_points = 30
separation = 3.0
[train]
epochs = 5
learning_rate = 0.05
[shapley]
method = retrain
exact = true
";

    #[test]
    fn value_run_writes_efficient_per_player_csv() {
        let (out, _dir) = run_in_tempdir(SMALL_VALUE);
        let csv = std::fs::read_to_string(out.out_dir.join("values.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "player,points,value");
        let values: Vec<f64> =
            lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
        assert_eq!(values.len(), 5);
        // efficiency: values sum to v(N) - v(empty)
        let sum: f64 = values.iter().sum();
        assert_eq!(
            sum,
            out.summary.get("values_sum").unwrap().as_f64().unwrap()
        );
    }

    #[test]
    fn rerun_is_byte_identical() {
        let (a, _da) = run_in_tempdir(SMALL_VALUE);
        let (b, _db) = run_in_tempdir(SMALL_VALUE);
        for name in ["values.csv", "summary.json"] {
            let x = std::fs::read(a.out_dir.join(name)).unwrap();
            let y = std::fs::read(b.out_dir.join(name)).unwrap();
            assert_eq!(x, y, "{name} differs between reruns");
        }
    }

    #[test]
    fn different_seed_changes_values() {
        let (a, _da) = run_in_tempdir(SMALL_VALUE);
        let (b, _db) = run_in_tempdir(&SMALL_VALUE.replace("seed = 3", "seed = 4"));
        let x = std::fs::read(a.out_dir.join("values.csv")).unwrap();
        let y = std::fs::read(b.out_dir.join("values.csv")).unwrap();
        assert_ne!(x, y);
    }

    #[test]
    fn manifest_lists_every_output() {
        let (out, _dir) = run_in_tempdir(SMALL_VALUE);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.out_dir.join("manifest.json")).unwrap())
                .unwrap();
        let listed = manifest.get("outputs").unwrap().as_array().unwrap();
        assert_eq!(listed.len(), 2); // values.csv + summary.json
        assert!(manifest.get("config_digest").unwrap().as_str().unwrap().len() == 64);
    }

    #[test]
    fn eval_noisy_requires_flips() {
        let dir = tempfile::tempdir().unwrap();
        let text = "[experiment]\nkind = eval-noisy\n[data]\nnum_points = 10\n[shapley]\nmethod = knn\n";
        let mut cfg = ExperimentConfig::parse(text).unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        assert!(run(&cfg).is_err());
    }

    #[test]
    fn eval_noisy_knn_writes_curve() {
        let text = "\
[experiment]
kind = eval-noisy
seed = 1
[data]
num_points = 40
num_features = 4
test_points = 30
flip_fraction = 0.2
[shapley]
method = knn
k = 3
[task]
bin_fraction = 0.1
";
        let (out, _dir) = run_in_tempdir(text);
        let csv = std::fs::read_to_string(out.out_dir.join("detection_curve.csv")).unwrap();
        assert!(csv.starts_with("inspected_fraction,noisy_found_fraction"));
        assert_eq!(csv.lines().count(), 11);
        assert_eq!(out.summary.get("noisy_players").unwrap().as_u64().unwrap(), 8);
    }

    #[test]
    fn partial_run_reports_components() {
        let text = "\
[experiment]
kind = partial
seed = 2
[data]
num_points = 60
num_features = 4
test_points = 40
flip_fraction = 0.3
[train]
epochs = 5
learning_rate = 0.01
[unlearn]
steps = 20
learning_rate = 0.02
lambda1 = 0.01
lambda2 = 0.3
[task]
num_subsets = 4
";
        let (out, _dir) = run_in_tempdir(text);
        let components = out.summary.get("components").unwrap();
        for key in ["v_tgt", "v_remain", "v_full"] {
            assert!(components.get(key).unwrap().is_f64(), "missing {key}");
        }
        assert!(out.summary.get("phi_tgt").unwrap().is_f64());
    }

    #[test]
    fn audit_run_reports_metrics() {
        let text = "\
[experiment]
kind = audit
seed = 2
[data]
num_points = 60
num_features = 4
separation = 4.0
test_points = 40
[train]
epochs = 3
learning_rate = 0.01
[unlearn]
steps = 10
learning_rate = 0.01
[task]
num_subsets = 4
";
        let (out, _dir) = run_in_tempdir(text);
        let report = out.summary.get("report").unwrap();
        assert!(report.get("lkd").unwrap().as_f64().unwrap() >= 0.0);
        assert!(report.get("lmse").unwrap().as_f64().unwrap() >= 0.0);
        let clipped = report.get("kr").unwrap().get("clipped").unwrap().as_f64().unwrap();
        assert!((0.0..=1.0).contains(&clipped));
        assert!(out.out_dir.join("loss_histogram.csv").exists());
    }

    #[test]
    fn bench_run_reports_speedup() {
        let text = "\
[experiment]
kind = bench
[data]
num_points = 80
num_features = 4
[train]
epochs = 2
[unlearn]
steps = 5
[task]
repeats = 3
";
        let (out, _dir) = run_in_tempdir(text);
        let report = out.summary.get("report").unwrap();
        assert!(report.get("speedup").unwrap().as_f64().unwrap() > 0.0);
    }
}
