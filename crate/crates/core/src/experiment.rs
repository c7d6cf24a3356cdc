//! Configuration-driven experiments: forest-size sweeps, GCN accuracy
//! comparisons between graph builders, and the complement-edge ablation.
//!
//! Every run is a grid of independent cells (dataset × builder × seed). Cells
//! are evaluated on a worker pool but always reported in grid order, so the
//! result files depend only on the configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{self, Dataset, SplitMasks};
use crate::gcn::{self, Hyperparams, NormalizedAdjacency};
use crate::graph::{self, WeightedGraph};
use crate::rng;
use crate::rptree::{SplitRule, TreeConfig, DEFAULT_MAX_LEAF_SIZE};
use crate::spectral::{self, Elbow, SweepCurve};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_TREES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Built-in generator name (`ring238`, `3rings299`, `sparse303`, `sparse622`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Headered CSV file; exclusive with `preset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_col: Option<String>,
    #[serde(default)]
    pub standardize: bool,
    /// Training nodes; defaults to `train_per_class` times the class count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<usize>,
}

impl DatasetSpec {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: Some(name.to_string()),
            csv: None,
            label_col: None,
            standardize: false,
            train: None,
            val: None,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, label_col: &str) -> Self {
        Self {
            preset: None,
            csv: Some(path.into()),
            label_col: Some(label_col.to_string()),
            standardize: false,
            train: None,
            val: None,
        }
    }

    pub fn name(&self) -> String {
        match (&self.preset, &self.csv) {
            (Some(p), _) => p.clone(),
            (None, Some(path)) => path
                .file_stem()
                .map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned()),
            (None, None) => "unnamed".into(),
        }
    }

    fn validate(&self) -> anyhow::Result<()> {
        match (&self.preset, &self.csv) {
            (Some(_), Some(_)) => bail!("dataset sets both 'preset' and 'csv'"),
            (None, None) => bail!("dataset needs 'preset' or 'csv'"),
            (None, Some(_)) if self.label_col.is_none() => bail!("csv dataset needs 'label_col'"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BuilderSpec {
    Rpforest {
        #[serde(default = "default_trees")]
        trees: usize,
        #[serde(default = "default_leaf")]
        max_leaf_size: usize,
        #[serde(default = "default_split_rule", with = "split_rule_serde")]
        split_rule: SplitRule,
    },
    Knn {
        #[serde(default = "default_k")]
        k: usize,
    },
    Heat {
        sigma: f64,
    },
    Selftuning {
        #[serde(default = "default_self_tuning_k")]
        k: usize,
    },
}

fn default_trees() -> usize {
    DEFAULT_TREES
}
fn default_leaf() -> usize {
    DEFAULT_MAX_LEAF_SIZE
}
fn default_split_rule() -> SplitRule {
    SplitRule::Quantile
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_self_tuning_k() -> usize {
    graph::DEFAULT_SELF_TUNING_K
}

mod split_rule_serde {
    use super::SplitRule;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(rule: &SplitRule, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&rule.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SplitRule, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl BuilderSpec {
    pub fn rpforest(trees: usize) -> Self {
        BuilderSpec::Rpforest {
            trees,
            max_leaf_size: DEFAULT_MAX_LEAF_SIZE,
            split_rule: SplitRule::Quantile,
        }
    }

    pub fn knn(k: usize) -> Self {
        BuilderSpec::Knn { k }
    }

    /// Label used in result files; contains no commas.
    pub fn label(&self) -> String {
        match self {
            BuilderSpec::Rpforest {
                trees,
                max_leaf_size,
                split_rule,
            } => {
                let mut s = format!("rpforest:T{trees}:L{max_leaf_size}");
                if *split_rule != SplitRule::Quantile {
                    write!(s, ":{split_rule}").unwrap();
                }
                s
            }
            BuilderSpec::Knn { k } => format!("knn:k{k}"),
            BuilderSpec::Heat { sigma } => format!("heat:s{sigma}"),
            BuilderSpec::Selftuning { k } => format!("selftuning:K{k}"),
        }
    }

    pub fn build(&self, x: &crate::Matrix, seed: u64) -> crate::Result<WeightedGraph> {
        match *self {
            BuilderSpec::Rpforest {
                trees,
                max_leaf_size,
                split_rule,
            } => graph::build_rpforest_graph(
                x,
                trees,
                TreeConfig {
                    max_leaf_size,
                    split_rule,
                },
                seed,
            ),
            BuilderSpec::Knn { k } => graph::build_knn_graph(x, k),
            BuilderSpec::Heat { sigma } => graph::build_heat_kernel_graph(x, sigma, graph::KERNEL_PRUNE),
            BuilderSpec::Selftuning { k } => graph::build_self_tuning_graph(x, k, graph::KERNEL_PRUNE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnSpec {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub patience: usize,
    pub dropout: f64,
}

impl Default for GcnSpec {
    fn default() -> Self {
        let h = Hyperparams::default();
        Self {
            hidden: h.hidden,
            learning_rate: h.learning_rate,
            epochs: h.epochs,
            weight_decay: h.weight_decay,
            patience: h.patience,
            dropout: h.dropout,
        }
    }
}

impl GcnSpec {
    pub fn hyperparams(&self, seed: u64) -> Hyperparams {
        Hyperparams {
            hidden: self.hidden,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            patience: self.patience,
            dropout: self.dropout,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Strictly increasing tree counts.
    pub trees: Vec<usize>,
    pub connect_threshold: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            trees: (1..=20).collect(),
            connect_threshold: spectral::CONNECT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtraEdgesSpec {
    pub percents: Vec<f64>,
    /// Weight of added edges; defaults to `1/T` of the forest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl Default for ExtraEdgesSpec {
    fn default() -> Self {
        Self {
            percents: vec![0.0, 25.0, 50.0, 75.0, 100.0],
            weight: None,
        }
    }
}

/// Everything that determines the contents of result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// First run seed; runs use `seed, seed + 1, ..`.
    pub seed: u64,
    pub seeds: usize,
    /// Default per-class train and validation counts.
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub datasets: Vec<DatasetSpec>,
    pub builders: Vec<BuilderSpec>,
    pub gcn: GcnSpec,
    pub sweep: SweepSpec,
    pub extra_edges: ExtraEdgesSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 10,
            train_per_class: 10,
            val_per_class: 10,
            datasets: vec![DatasetSpec::preset("ring238")],
            builders: vec![BuilderSpec::rpforest(DEFAULT_TREES), BuilderSpec::knn(DEFAULT_K)],
            gcn: GcnSpec::default(),
            sweep: SweepSpec::default(),
            extra_edges: ExtraEdgesSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed + i).collect()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds == 0 {
            bail!("at least one seed is required");
        }
        if self.datasets.is_empty() {
            bail!("at least one dataset is required");
        }
        for d in &self.datasets {
            d.validate()?;
        }
        for b in &self.builders {
            match *b {
                BuilderSpec::Rpforest { trees, max_leaf_size, .. } => {
                    if trees == 0 || max_leaf_size == 0 {
                        bail!("rpforest needs trees >= 1 and max_leaf_size >= 1");
                    }
                }
                BuilderSpec::Knn { k } | BuilderSpec::Selftuning { k } => {
                    if k == 0 {
                        bail!("{} needs k >= 1", b.label());
                    }
                }
                BuilderSpec::Heat { sigma } => {
                    if !(sigma > 0.0) {
                        bail!("heat kernel needs sigma > 0");
                    }
                }
            }
        }
        if self.extra_edges.percents.iter().any(|p| !(0.0..=100.0).contains(p)) {
            bail!("extra-edge percents must lie in [0, 100]");
        }
        Ok(())
    }

    /// The first forest builder, or the default forest.
    pub fn forest_spec(&self) -> BuilderSpec {
        self.builders
            .iter()
            .copied()
            .find(|b| matches!(b, BuilderSpec::Rpforest { .. }))
            .unwrap_or_else(|| BuilderSpec::rpforest(DEFAULT_TREES))
    }
}

/// Settings that affect how a run executes but not what it produces.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Fill the `build_ms` / `train_ms` columns. Off by default so result
    /// files are byte-identical across reruns.
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dataset: String,
    pub builder: String,
    pub seed: u64,
    pub test_accuracy: f64,
    pub total_weight: f64,
    pub edge_count: usize,
    pub build_ms: f64,
    pub train_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub dataset: String,
    pub builder: String,
    pub runs: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation over seeds (0 for a single run).
    pub sd_accuracy: f64,
    pub mean_total_weight: f64,
    pub mean_total_weight_doubled: f64,
    pub mean_edge_count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

pub const RESULTS_HEADER: &str = "dataset,builder,seed,test_accuracy,total_weight,edge_count,build_ms,train_ms";

impl ExperimentResult {
    fn from_records(config_hash: String, records: Vec<RunRecord>) -> Self {
        let aggregates = aggregate(&records);
        Self {
            config_hash,
            records,
            aggregates,
        }
    }

    pub fn results_csv(&self, timings: bool) -> String {
        let mut s = String::from(RESULTS_HEADER);
        s.push('\n');
        for r in &self.records {
            let (b, t) = if timings {
                (format!("{:.3}", r.build_ms), format!("{:.3}", r.train_ms))
            } else {
                (String::new(), String::new())
            };
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.dataset, r.builder, r.seed, r.test_accuracy, r.total_weight, r.edge_count, b, t
            )
            .unwrap();
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "dataset,builder,runs,mean_accuracy,sd_accuracy,mean_total_weight,mean_total_weight_doubled,mean_edge_count,config_hash\n",
        );
        for a in &self.aggregates {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                a.dataset,
                a.builder,
                a.runs,
                a.mean_accuracy,
                a.sd_accuracy,
                a.mean_total_weight,
                a.mean_total_weight_doubled,
                a.mean_edge_count,
                self.config_hash
            )
            .unwrap();
        }
        s
    }

    pub fn aggregate_for(&self, dataset: &str, builder: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.dataset == dataset && a.builder == builder)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Groups consecutive records by `(dataset, builder)` in first-seen order.
fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.dataset.clone(), r.builder.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(dataset, builder)| {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.dataset == dataset && r.builder == builder)
                .collect();
            let acc: Vec<f64> = group.iter().map(|r| r.test_accuracy).collect();
            let tw: Vec<f64> = group.iter().map(|r| r.total_weight).collect();
            let ec: Vec<f64> = group.iter().map(|r| r.edge_count as f64).collect();
            Aggregate {
                runs: group.len(),
                mean_accuracy: mean(&acc),
                sd_accuracy: sample_sd(&acc),
                mean_total_weight: mean(&tw),
                mean_total_weight_doubled: 2.0 * mean(&tw),
                mean_edge_count: mean(&ec),
                dataset,
                builder,
            }
        })
        .collect()
}

/// A dataset and split for one `(dataset, seed)` pair.
pub struct PreparedData {
    pub dataset: Dataset,
    pub masks: SplitMasks,
}

fn load_base(spec: &DatasetSpec) -> anyhow::Result<Option<Dataset>> {
    match &spec.csv {
        Some(path) => {
            let label = spec.label_col.as_deref().expect("validated");
            let ds = dataset::load_csv(path, label).with_context(|| format!("loading {}", path.display()))?;
            Ok(Some(ds))
        }
        None => Ok(None),
    }
}

pub fn prepare(config: &ExperimentConfig, spec: &DatasetSpec, base: Option<&Dataset>, seed: u64) -> anyhow::Result<PreparedData> {
    let mut ds = match (base, &spec.preset) {
        (Some(ds), _) => ds.clone(),
        (None, Some(name)) => dataset::preset(name, rng::derive(seed, rng::DATASET))?,
        (None, None) => bail!("dataset needs 'preset' or 'csv'"),
    };
    if spec.standardize {
        ds = ds.standardized();
    }
    ds.name = spec.name();
    let c = ds.n_classes();
    let n_train = spec.train.unwrap_or(config.train_per_class * c);
    let n_val = spec.val.unwrap_or(config.val_per_class * c);
    let masks = dataset::split_masks(ds.len(), n_train, n_val, &ds.labels, rng::derive(seed, rng::SPLIT))?;
    Ok(PreparedData { dataset: ds, masks })
}

fn train_on(data: &PreparedData, g: &WeightedGraph, config: &ExperimentConfig, seed: u64) -> crate::Result<(f64, f64)> {
    let start = Instant::now();
    let adj = NormalizedAdjacency::from_graph(g);
    let (_, report) = gcn::train(&data.dataset, &data.masks, &adj, config.gcn.hyperparams(seed))?;
    Ok((report.test_accuracy, start.elapsed().as_secs_f64() * 1e3))
}

fn pool(workers: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| anyhow!("building worker pool: {e}"))
}

/// Trains a GCN on every `(dataset, builder, seed)` cell.
pub fn run_compare(config: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<ExperimentResult> {
    config.validate()?;
    if config.builders.is_empty() {
        bail!("compare needs at least one builder");
    }
    let bases: Vec<Option<Dataset>> = config.datasets.iter().map(load_base).collect::<anyhow::Result<_>>()?;
    let seeds = config.seed_list();
    let mut cells = Vec::new();
    for (di, _) in config.datasets.iter().enumerate() {
        for (bi, _) in config.builders.iter().enumerate() {
            for &s in &seeds {
                cells.push((di, bi, s));
            }
        }
    }
    let records = pool(opts.workers)?.install(|| {
        cells
            .par_iter()
            .map(|&(di, bi, seed)| {
                let spec = &config.datasets[di];
                let builder = &config.builders[bi];
                let ctx = || format!("dataset {}, builder {}, seed {seed}", spec.name(), builder.label());
                let data = prepare(config, spec, bases[di].as_ref(), seed).with_context(ctx)?;
                let start = Instant::now();
                let g = builder.build(&data.dataset.features, seed).with_context(ctx)?;
                let build_ms = start.elapsed().as_secs_f64() * 1e3;
                let (acc, train_ms) = train_on(&data, &g, config, seed).with_context(ctx)?;
                Ok(RunRecord {
                    dataset: spec.name(),
                    builder: builder.label(),
                    seed,
                    test_accuracy: acc,
                    total_weight: g.total_weight(),
                    edge_count: g.edge_count(),
                    build_ms,
                    train_ms,
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    Ok(ExperimentResult::from_records(config.hash(), records))
}

/// Label for a forest with complement edges added.
pub fn extra_label(forest: &BuilderSpec, percent: f64) -> String {
    format!("{}+extra{percent}", forest.label())
}

/// Forest graph plus sampled complement edges at each configured percentage.
pub fn run_extra_edges(config: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<ExperimentResult> {
    config.validate()?;
    let forest = config.forest_spec();
    let BuilderSpec::Rpforest { trees, .. } = forest else {
        unreachable!("forest_spec returns a forest")
    };
    let weight = config.extra_edges.weight.unwrap_or(1.0 / trees as f64);
    if !(weight > 0.0) {
        bail!("extra edge weight must be positive");
    }
    let percents = &config.extra_edges.percents;
    if percents.is_empty() {
        bail!("extra-edges needs at least one percent value");
    }
    let bases: Vec<Option<Dataset>> = config.datasets.iter().map(load_base).collect::<anyhow::Result<_>>()?;
    let seeds = config.seed_list();
    let mut cells = Vec::new();
    for di in 0..config.datasets.len() {
        for &s in &seeds {
            cells.push((di, s));
        }
    }
    let per_cell: Vec<Vec<RunRecord>> = pool(opts.workers)?.install(|| {
        cells
            .par_iter()
            .map(|&(di, seed)| {
                let spec = &config.datasets[di];
                let ctx = || format!("dataset {}, builder {}, seed {seed}", spec.name(), forest.label());
                let data = prepare(config, spec, bases[di].as_ref(), seed).with_context(ctx)?;
                let start = Instant::now();
                let base = forest.build(&data.dataset.features, seed).with_context(ctx)?;
                let base_ms = start.elapsed().as_secs_f64() * 1e3;
                percents
                    .iter()
                    .map(|&p| {
                        let start = Instant::now();
                        let g = graph::add_complement_edges(&base, p, weight, seed).with_context(ctx)?;
                        let build_ms = base_ms + start.elapsed().as_secs_f64() * 1e3;
                        let (acc, train_ms) = train_on(&data, &g, config, seed).with_context(ctx)?;
                        Ok(RunRecord {
                            dataset: spec.name(),
                            builder: extra_label(&forest, p),
                            seed,
                            test_accuracy: acc,
                            total_weight: g.total_weight(),
                            edge_count: g.edge_count(),
                            build_ms,
                            train_ms,
                        })
                    })
                    .collect::<anyhow::Result<Vec<_>>>()
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    // Grid order: dataset, then percent, then seed.
    let mut records = Vec::new();
    for di in 0..config.datasets.len() {
        let rows: Vec<&Vec<RunRecord>> = cells
            .iter()
            .zip(&per_cell)
            .filter(|((cd, _), _)| *cd == di)
            .map(|(_, r)| r)
            .collect();
        for pi in 0..percents.len() {
            records.extend(rows.iter().map(|r| r[pi].clone()));
        }
    }
    Ok(ExperimentResult::from_records(config.hash(), records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub dataset: String,
    pub seed: u64,
    pub curve: SweepCurve,
    pub elbow: Elbow,
}

/// Connectivity sweep over tree counts for every `(dataset, seed)`.
pub fn run_sweep(config: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<Vec<SweepRun>> {
    config.validate()?;
    let t_values = &config.sweep.trees;
    if t_values.len() < 3 {
        bail!("sweep needs at least 3 tree counts to locate an elbow, got {}", t_values.len());
    }
    let BuilderSpec::Rpforest {
        max_leaf_size,
        split_rule,
        ..
    } = config.forest_spec()
    else {
        unreachable!("forest_spec returns a forest")
    };
    let tree_cfg = TreeConfig {
        max_leaf_size,
        split_rule,
    };
    let bases: Vec<Option<Dataset>> = config.datasets.iter().map(load_base).collect::<anyhow::Result<_>>()?;
    let mut cells = Vec::new();
    for di in 0..config.datasets.len() {
        for s in config.seed_list() {
            cells.push((di, s));
        }
    }
    pool(opts.workers)?.install(|| {
        cells
            .par_iter()
            .map(|&(di, seed)| {
                let spec = &config.datasets[di];
                let ctx = || format!("sweep on dataset {}, seed {seed}", spec.name());
                let data = prepare(config, spec, bases[di].as_ref(), seed).with_context(ctx)?;
                let mut curve = spectral::sweep_trees(&data.dataset.features, t_values, tree_cfg, seed).with_context(ctx)?;
                curve.dataset = spec.name();
                let elbow = spectral::detect_elbow(&curve, config.sweep.connect_threshold).with_context(ctx)?;
                Ok(SweepRun {
                    dataset: spec.name(),
                    seed,
                    curve,
                    elbow,
                })
            })
            .collect()
    })
}

pub fn elbows_csv(runs: &[SweepRun], config_hash: &str) -> String {
    let mut s = String::from("dataset,seed,elbow_T,no_connect,config_hash\n");
    for r in runs {
        writeln!(
            s,
            "{},{},{},{},{config_hash}",
            r.dataset, r.seed, r.elbow.trees, r.elbow.no_connect
        )
        .unwrap();
    }
    s
}

pub fn sweep_file_name(run: &SweepRun) -> String {
    format!("sweep_{}_seed{}.csv", run.dataset, run.seed)
}

/// Prepares an output directory, refusing to mix results from different
/// configurations unless `force` is set.
pub fn prepare_out_dir(dir: &Path, config: &ExperimentConfig, force: bool) -> anyhow::Result<()> {
    let hash = config.hash();
    let hash_file = dir.join("config.hash");
    if hash_file.exists() {
        let existing = std::fs::read_to_string(&hash_file)?;
        if existing.trim() != hash && !force {
            bail!(
                "{} holds results for config {} (this run is {}); pass --force to overwrite",
                dir.display(),
                existing.trim(),
                hash
            );
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(&hash_file, format!("{hash}\n"))?;
    std::fs::write(dir.join("config.toml"), config.to_toml())?;
    Ok(())
}

pub fn write_result(dir: &Path, result: &ExperimentResult, opts: &RunOptions) -> anyhow::Result<Vec<PathBuf>> {
    let results = dir.join("results.csv");
    let summary = dir.join("summary.csv");
    std::fs::write(&results, result.results_csv(opts.timings))?;
    std::fs::write(&summary, result.summary_csv())?;
    Ok(vec![results, summary])
}

pub fn write_sweeps(dir: &Path, runs: &[SweepRun], config_hash: &str) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for r in runs {
        let path = dir.join(sweep_file_name(r));
        r.curve.write_csv(&path)?;
        out.push(path);
    }
    let elbows = dir.join("elbows.csv");
    std::fs::write(&elbows, elbows_csv(runs, config_hash))?;
    out.push(elbows);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            seeds: 3,
            gcn: GcnSpec {
                epochs: 15,
                ..Default::default()
            },
            datasets: vec![DatasetSpec::preset("sparse303")],
            ..Default::default()
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig {
            builders: vec![
                BuilderSpec::rpforest(5),
                BuilderSpec::Rpforest {
                    trees: 3,
                    max_leaf_size: 7,
                    split_rule: SplitRule::Median,
                },
                BuilderSpec::knn(4),
                BuilderSpec::Heat { sigma: 0.5 },
                BuilderSpec::Selftuning { k: 7 },
            ],
            datasets: vec![DatasetSpec::preset("ring238"), DatasetSpec::csv("data/iris.csv", "species")],
            ..Default::default()
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn config_defaults_and_errors() {
        let cfg = ExperimentConfig::from_toml("seeds = 2\n[[builders]]\nkind = \"knn\"\n").unwrap();
        assert_eq!(cfg.builders, vec![BuilderSpec::knn(10)]);
        assert_eq!(cfg.seed_list(), vec![0, 1]);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[[builders]]\nkind = \"rpforest\"\nsplit_rule = \"mean\"\n").is_err());
        let bad = ExperimentConfig { seeds: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            datasets: vec![DatasetSpec { label_col: None, ..DatasetSpec::csv("x.csv", "y") }],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn labels_have_no_commas() {
        for b in [BuilderSpec::rpforest(10), BuilderSpec::knn(3), BuilderSpec::Heat { sigma: 1.5 }] {
            assert!(!b.label().contains(','));
        }
        assert_eq!(BuilderSpec::rpforest(10).label(), "rpforest:T10:L20");
    }

    #[test]
    fn compare_counts_records_and_aggregates() {
        let cfg = quick_config();
        let res = run_compare(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(res.records.len(), 6);
        assert_eq!(res.aggregates.len(), 2);
        assert!(res.aggregates.iter().all(|a| a.runs == 3));
        let csv = res.results_csv(false);
        assert!(csv.starts_with(RESULTS_HEADER));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn compare_is_reproducible_across_worker_counts() {
        let cfg = quick_config();
        let a = run_compare(&cfg, &RunOptions { workers: 1, timings: false }).unwrap();
        let b = run_compare(&cfg, &RunOptions { workers: 3, timings: false }).unwrap();
        assert_eq!(a.results_csv(false), b.results_csv(false));
        assert_eq!(a.summary_csv(), b.summary_csv());
    }

    #[test]
    fn extra_edges_zero_percent_equals_plain_forest() {
        let mut cfg = quick_config();
        cfg.seeds = 2;
        cfg.builders = vec![BuilderSpec::rpforest(10)];
        cfg.extra_edges.percents = vec![0.0, 100.0];
        let extra = run_extra_edges(&cfg, &RunOptions::default()).unwrap();
        let plain = run_compare(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(extra.records.len(), 4);
        assert_eq!(extra.aggregates.len(), 2);
        for (e, p) in extra.records.iter().take(2).zip(&plain.records) {
            assert_eq!(e.seed, p.seed);
            assert_eq!(e.test_accuracy, p.test_accuracy);
            assert_eq!(e.total_weight, p.total_weight);
            assert_eq!(e.edge_count, p.edge_count);
        }
        let n = 303usize;
        assert_eq!(extra.records[2].edge_count, n * (n - 1) / 2);
    }

    #[test]
    fn sweep_requires_three_points() {
        let mut cfg = quick_config();
        cfg.seeds = 1;
        cfg.sweep.trees = vec![5];
        assert!(run_sweep(&cfg, &RunOptions::default()).is_err());
        cfg.sweep.trees = vec![1, 2, 3, 4];
        let runs = run_sweep(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].curve.points.len(), 4);
    }

    #[test]
    fn sweep_single_leaf_connects_at_one_tree() {
        let mut cfg = quick_config();
        cfg.seeds = 2;
        cfg.builders = vec![BuilderSpec::Rpforest {
            trees: 10,
            max_leaf_size: 1000,
            split_rule: SplitRule::Quantile,
        }];
        cfg.sweep.trees = (1..=5).collect();
        let runs = run_sweep(&cfg, &RunOptions::default()).unwrap();
        for r in &runs {
            assert_eq!(r.elbow, Elbow { trees: 1, no_connect: false });
        }
        let csv = elbows_csv(&runs, &cfg.hash());
        assert!(csv.lines().nth(1).unwrap().ends_with(&cfg.hash()));
    }

    #[test]
    fn out_dir_guards_against_config_mixing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_config();
        prepare_out_dir(dir.path(), &cfg, false).unwrap();
        prepare_out_dir(dir.path(), &cfg, false).unwrap();
        let mut other = cfg.clone();
        other.seeds = 4;
        assert!(prepare_out_dir(dir.path(), &other, false).is_err());
        prepare_out_dir(dir.path(), &other, true).unwrap();
    }

    #[test]
    fn sample_sd_matches_definition() {
        assert_eq!(sample_sd(&[1.0]), 0.0);
        assert!((sample_sd(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }
}
