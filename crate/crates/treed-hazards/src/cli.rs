//! Command implementations behind the `thm` binary: simulate, fit,
//! summarize, predict, and km. Each command is deterministic given its
//! configuration and seed, and every emitted table is a plain CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::data::{
    load_csv, normalize_times, stats_for_rows, BinGrid, CovariateValues, CsvSchema, DataError,
    NormalizedDataset, SurvivalDataset,
};
use crate::node_model::{empirical_bayes, LeafFit};
use crate::posterior::{kaplan_meier, leaf_survival, PosteriorError, SurvivalCurve};
use crate::sampler::{self, derive_seed, RunResult, Sample, SamplerError};
use crate::simgen::{generate, Scenario, SimError, SimSpec};
use crate::tree::{RuleKind, Tree, TreeError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numeric(String),
}

impl CliError {
    /// 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UnknownScenario(_) | SimError::EmptySample => CliError::Usage(e.to_string()),
            SimError::BadWeibull { .. } => CliError::Usage(e.to_string()),
            SimError::Data(d) => CliError::Data(d.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Config(_) => CliError::Usage(e.to_string()),
            SamplerError::Data(d) => CliError::Data(d.to_string()),
            SamplerError::Tree(t) => CliError::Data(t.to_string()),
            SamplerError::Fit(f) => CliError::Numeric(f.to_string()),
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PosteriorError> for CliError {
    fn from(e: PosteriorError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| io_err(path, e))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn load_schema(path: Option<&Path>) -> Result<CsvSchema, CliError> {
    match path {
        Some(p) => Ok(CsvSchema::from_toml_file(p)?),
        None => Ok(CsvSchema::default()),
    }
}

/// Writes a dataset in the canonical CSV layout: time, status, covariates.
pub fn write_dataset_csv(data: &SurvivalDataset, path: &Path) -> Result<(), CliError> {
    let mut out = String::new();
    let mut header = vec!["time".to_string(), "status".to_string()];
    header.extend(data.columns().iter().map(|c| c.name.clone()));
    out.push_str(&header.join(","));
    out.push('\n');
    for row in 0..data.n() {
        let mut fields = vec![
            format!("{}", data.times()[row]),
            if data.status()[row] { "1" } else { "0" }.to_string(),
        ];
        for col in data.columns() {
            match &col.values {
                CovariateValues::Continuous(v) => fields.push(format!("{}", v[row])),
                CovariateValues::Categorical { labels, codes } => {
                    fields.push(labels[codes[row] as usize].clone())
                }
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

/// simulate: write a scenario dataset plus its truth sidecar.
pub fn cmd_simulate(scenario: &str, n: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let scenario = Scenario::parse(scenario)?;
    let spec = SimSpec { scenario, n, seed };
    let (data, truth) = generate(&spec)?;
    ensure_dir(out)?;
    write_dataset_csv(&data, &out.join("data.csv"))?;
    let mut sidecar = String::from("row,branch,dist,param1,param2,latent_time\n");
    for t in &truth {
        let (p1, p2) = t.dist.params();
        let _ = writeln!(
            sidecar,
            "{},{},{},{},{},{}",
            t.row,
            t.branch,
            t.dist.name(),
            p1,
            p2,
            t.latent_time
        );
    }
    write_file(&out.join("truth.csv"), &sidecar)?;
    Ok(())
}

/// One parsed record of the sample stream.
#[derive(Debug, Clone)]
pub struct StreamRecord {
    pub iteration: usize,
    pub log_prior: f64,
    pub log_marginal: f64,
    pub log_posterior: f64,
    pub leaves: usize,
    pub tree_text: String,
}

fn samples_to_csv(samples: &[Sample], data: &SurvivalDataset) -> String {
    let mut out = String::from("iteration,log_prior,log_marginal,log_posterior,leaves,tree\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.iteration,
            s.log_prior,
            s.log_marginal_sum,
            s.log_posterior(),
            s.tree.n_leaves(),
            s.tree.encode(data)
        );
    }
    out
}

/// Parses the sample stream CSV written by `cmd_fit`.
pub fn read_samples_csv(path: &Path) -> Result<Vec<StreamRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "iteration,log_prior,log_marginal,log_posterior,leaves,tree" {
                return Err(CliError::Data(format!(
                    "{}: unexpected sample stream header",
                    path.display()
                )));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CliError::Data(format!(
                "{}: line {} has {} fields, expected 6",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::Data(format!("bad {what} value `{s}`")))
        };
        records.push(StreamRecord {
            iteration: fields[0]
                .parse()
                .map_err(|_| CliError::Data(format!("bad iteration `{}`", fields[0])))?,
            log_prior: parse_f(fields[1], "log_prior")?,
            log_marginal: parse_f(fields[2], "log_marginal")?,
            log_posterior: parse_f(fields[3], "log_posterior")?,
            leaves: fields[4]
                .parse()
                .map_err(|_| CliError::Data(format!("bad leaf count `{}`", fields[4])))?,
            tree_text: fields[5].to_string(),
        });
    }
    Ok(records)
}

fn diagnostics_to_log(result: &RunResult) -> String {
    let mut out = String::new();
    for d in &result.diagnostics {
        let _ = write!(out, "iter={} leaves={} log_post={}", d.iteration, d.leaves, d.log_posterior);
        for (i, name) in ["grow", "prune", "change", "swap"].iter().enumerate() {
            let _ = write!(
                out,
                " {name}_prop={} {name}_acc={} {name}_auto={}",
                d.proposed[i], d.accepted[i], d.auto_rejected[i]
            );
        }
        let _ = writeln!(out, " pt_prop={} pt_acc={}", d.swap_proposed, d.swap_accepted);
    }
    out
}

/// fit: run the sampler and write the sample stream, diagnostics, and the
/// resolved-config echo.
pub fn cmd_fit(config: &RunConfig) -> Result<PathBuf, CliError> {
    let data_path = config
        .data_path
        .as_ref()
        .ok_or_else(|| CliError::Usage("fit requires data.path (--data)".into()))?;
    let schema = load_schema(config.schema_path.as_deref())?;
    let raw = load_csv(data_path, &schema)?;
    let data = normalize_times(&raw)?;
    config.sampler.validate()?;
    let result = sampler::run(&data, &config.sampler)?;
    ensure_dir(&config.out_dir)?;
    let samples_path = config.out_dir.join("samples.csv");
    write_file(&samples_path, &samples_to_csv(&result.samples, &data.dataset))?;
    write_file(
        &config.out_dir.join("diagnostics.log"),
        &diagnostics_to_log(&result),
    )?;
    write_file(
        &config.out_dir.join("config_echo.toml"),
        &config.to_toml_string(),
    )?;
    Ok(samples_path)
}

/// The refit MAP tree: per-leaf row sets and empirical-Bayes fits,
/// reconstructed from a sample stream plus the training data.
pub struct MapFit {
    pub tree: Tree,
    pub record: StreamRecord,
    pub leaf_rows: Vec<(u32, Vec<u32>)>,
    pub fits: Vec<(u32, LeafFit)>,
}

/// Finds the MAP record in a stream and refits its leaves on the data.
pub fn refit_map_tree(
    records: &[StreamRecord],
    data: &NormalizedDataset,
    config: &RunConfig,
) -> Result<MapFit, CliError> {
    if records.is_empty() {
        return Err(CliError::Data("empty sample stream".into()));
    }
    let mut best = &records[0];
    for r in &records[1..] {
        if r.log_posterior > best.log_posterior {
            best = r;
        }
    }
    let tree = Tree::decode(&best.tree_text, &data.dataset)?;
    let grid = BinGrid::new(config.sampler.k_bins)?;
    let all_rows: Vec<u32> = (0..data.dataset.n() as u32).collect();
    let leaf_rows = tree.partition_rows(&data.dataset, &all_rows)?;
    let mut fits = Vec::with_capacity(leaf_rows.len());
    for (leaf, rows) in &leaf_rows {
        let stats = stats_for_rows(data, rows, &grid)?;
        let fit = empirical_bayes(&stats, &config.sampler.eb)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        fits.push((*leaf, fit));
    }
    Ok(MapFit {
        tree,
        record: best.clone(),
        leaf_rows,
        fits,
    })
}

fn curve_csv_rows(out: &mut String, leaf: u32, curve: &SurvivalCurve) {
    for i in 0..curve.times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            leaf, curve.times[i], curve.mean[i], curve.lower[i], curve.upper[i]
        );
    }
}

/// Deterministic per-leaf curve draws: one RNG stream per leaf id.
fn leaf_curve(
    leaf: u32,
    fit: &LeafFit,
    grid: &BinGrid,
    config: &RunConfig,
) -> Result<SurvivalCurve, CliError> {
    let kernel = fit.kernel(grid.width());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        derive_seed(config.sampler.seed, 0xC0DE),
        leaf as u64,
    ));
    Ok(leaf_survival(
        fit,
        &kernel,
        grid,
        config.n_draws,
        config.level,
        &mut rng,
    )?)
}

fn map_tree_text(map: &MapFit, data: &NormalizedDataset) -> String {
    // Tree text: id parent kind var payload, then per-node summaries.
    let dataset = &data.dataset;
    let encode = map.tree.encode(dataset);
    let mut per_node: Vec<String> = Vec::new();
    let mut out = String::from("# id parent kind var payload n events tau length log_marginal\n");
    // Node rows and event counts for every node, from the leaf partition.
    let n_nodes = map.tree.len();
    let mut counts = vec![(0usize, 0usize); n_nodes];
    for (leaf, rows) in &map.leaf_rows {
        let events = rows
            .iter()
            .filter(|&&r| dataset.status()[r as usize])
            .count();
        // Propagate to ancestors.
        let mut cur = Some(*leaf);
        while let Some(id) = cur {
            counts[id as usize].0 += rows.len();
            counts[id as usize].1 += events;
            cur = map.tree.node(id).parent;
        }
    }
    for (entry, node_text) in encode.split(';').enumerate() {
        let fields: Vec<&str> = node_text.split(':').collect();
        let id = entry as u32;
        let (n, events) = counts[id as usize];
        let fit = map.fits.iter().find(|(leaf, _)| *leaf == id);
        let (tau, length, lm) = match fit {
            Some((_, f)) => (
                format!("{}", f.tau_hat),
                format!("{}", f.length_hat),
                format!("{}", f.log_marginal),
            ),
            None => ("-".into(), "-".into(), "-".into()),
        };
        per_node.push(format!(
            "{} {} {} {} {} {} {} {} {} {}",
            fields[0], fields[1], fields[2], fields[3], fields[4], n, events, tau, length, lm
        ));
    }
    out.push_str(&per_node.join("\n"));
    out.push('\n');
    out
}

/// summarize: MAP tree text, per-leaf survival curves, leaf summary table,
/// and row-to-leaf assignments.
pub fn cmd_summarize(
    samples_path: &Path,
    data_path: &Path,
    schema_path: Option<&Path>,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let config = resolve_config(samples_path, config_path)?;
    let schema = load_schema(schema_path)?;
    let raw = load_csv(data_path, &schema)?;
    let data = normalize_times(&raw)?;
    let records = read_samples_csv(samples_path)?;
    let map = refit_map_tree(&records, &data, &config)?;
    let grid = BinGrid::new(config.sampler.k_bins)?;
    ensure_dir(out)?;

    write_file(&out.join("map_tree.txt"), &map_tree_text(&map, &data))?;

    let mut curves = String::from("leaf_id,time_raw,mean,lower,upper\n");
    let mut summary = String::from("leaf_id,n,events,tau,length,log_marginal\n");
    for (leaf, fit) in &map.fits {
        let curve =
            leaf_curve(*leaf, fit, &grid, &config)?.scaled_times(data.time_scale);
        curve_csv_rows(&mut curves, *leaf, &curve);
        let rows = &map
            .leaf_rows
            .iter()
            .find(|(id, _)| id == leaf)
            .expect("leaf rows")
            .1;
        let events = rows
            .iter()
            .filter(|&&r| data.dataset.status()[r as usize])
            .count();
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{}",
            leaf,
            rows.len(),
            events,
            fit.tau_hat,
            fit.length_hat,
            fit.log_marginal
        );
    }
    write_file(&out.join("curves.csv"), &curves)?;
    write_file(&out.join("leaf_summary.csv"), &summary)?;

    let mut assignments = String::from("row,leaf_id\n");
    for row in 0..data.dataset.n() {
        let leaf = map.tree.route(&data.dataset, row)?;
        let _ = writeln!(assignments, "{row},{leaf}");
    }
    write_file(&out.join("leaf_assignments.csv"), &assignments)?;
    Ok(())
}

fn resolve_config(samples_path: &Path, config_path: Option<&Path>) -> Result<RunConfig, CliError> {
    match config_path {
        Some(p) => Ok(RunConfig::from_file(p)?),
        None => {
            let sibling = samples_path
                .parent()
                .map(|d| d.join("config_echo.toml"))
                .filter(|p| p.exists());
            match sibling {
                Some(p) => Ok(RunConfig::from_file(&p)?),
                None => Err(CliError::Usage(
                    "no --config given and no config_echo.toml beside the samples file".into(),
                )),
            }
        }
    }
}

/// Parses a covariates-only CSV against the training dataset's columns,
/// returning a dataset with placeholder times for routing.
pub fn parse_new_rows(path: &Path, train: &SurvivalDataset) -> Result<SurvivalDataset, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(CliError::Data(format!("{}: empty file", path.display()))),
    };
    let mut col_sources: Vec<(usize, usize)> = Vec::new(); // (train col, file col)
    for (ci, col) in train.columns().iter().enumerate() {
        let fi = header
            .iter()
            .position(|h| *h == col.name)
            .ok_or_else(|| CliError::Data(format!("new rows missing column `{}`", col.name)))?;
        col_sources.push((ci, fi));
    }
    let rows: Vec<Vec<String>> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
        .collect();
    if rows.is_empty() {
        return Err(CliError::Data("no rows".into()));
    }
    let mut columns = Vec::new();
    for (ci, fi) in col_sources {
        let train_col = &train.columns()[ci];
        let values = match &train_col.values {
            CovariateValues::Continuous(_) => {
                let mut v = Vec::with_capacity(rows.len());
                for (ri, row) in rows.iter().enumerate() {
                    let cell = row.get(fi).cloned().unwrap_or_default();
                    let x: f64 = cell.parse().map_err(|_| {
                        CliError::Data(format!(
                            "row {ri}, column `{}`: bad numeric value `{cell}`",
                            train_col.name
                        ))
                    })?;
                    v.push(x);
                }
                CovariateValues::Continuous(v)
            }
            CovariateValues::Categorical { labels, .. } => {
                let mut codes = Vec::with_capacity(rows.len());
                for (ri, row) in rows.iter().enumerate() {
                    let cell = row.get(fi).cloned().unwrap_or_default();
                    let code = labels.iter().position(|l| *l == cell).ok_or_else(|| {
                        CliError::Data(format!(
                            "row {ri}, column `{}`: unknown label `{cell}`",
                            train_col.name
                        ))
                    })? as u32;
                    codes.push(code);
                }
                CovariateValues::Categorical {
                    labels: labels.clone(),
                    codes,
                }
            }
        };
        columns.push(crate::data::Covariate {
            name: train_col.name.clone(),
            values,
        });
    }
    SurvivalDataset::new(vec![1.0; rows.len()], vec![true; rows.len()], columns)
        .map_err(CliError::from)
}

/// predict: route each new covariate row through the MAP tree and write
/// its leaf's curve in raw time units, one CSV per row.
pub fn cmd_predict(
    samples_path: &Path,
    data_path: &Path,
    schema_path: Option<&Path>,
    config_path: Option<&Path>,
    newrows_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let config = resolve_config(samples_path, config_path)?;
    let schema = load_schema(schema_path)?;
    let raw = load_csv(data_path, &schema)?;
    let data = normalize_times(&raw)?;
    let records = read_samples_csv(samples_path)?;
    let map = refit_map_tree(&records, &data, &config)?;
    let grid = BinGrid::new(config.sampler.k_bins)?;
    ensure_dir(out)?;

    let text = fs::read_to_string(newrows_path).map_err(|e| io_err(newrows_path, e))?;
    if text.lines().skip(1).all(|l| l.trim().is_empty()) {
        log::warn!("new-rows file {} has no rows; nothing to predict", newrows_path.display());
        return Ok(());
    }
    let newrows = parse_new_rows(newrows_path, &data.dataset)?;

    // One curve per leaf, drawn once; rows share their leaf's curve.
    let mut leaf_curves: Vec<(u32, SurvivalCurve)> = Vec::new();
    for row in 0..newrows.n() {
        let leaf = map.tree.route(&newrows, row)?;
        if !leaf_curves.iter().any(|(id, _)| *id == leaf) {
            let fit = &map
                .fits
                .iter()
                .find(|(id, _)| *id == leaf)
                .expect("fit for routed leaf")
                .1;
            let curve =
                leaf_curve(leaf, fit, &grid, &config)?.scaled_times(data.time_scale);
            leaf_curves.push((leaf, curve));
        }
        let curve = &leaf_curves.iter().find(|(id, _)| *id == leaf).unwrap().1;
        let mut out_csv = String::from("leaf_id,time_raw,mean,lower,upper\n");
        curve_csv_rows(&mut out_csv, leaf, curve);
        write_file(&out.join(format!("predict_row_{row}.csv")), &out_csv)?;
    }
    Ok(())
}

/// km: Kaplan-Meier curves with Greenwood bands, optionally grouped by a
/// row-to-leaf assignment file.
pub fn cmd_km(
    data_path: &Path,
    schema_path: Option<&Path>,
    groupby: Option<&Path>,
    level: f64,
    out: &Path,
) -> Result<(), CliError> {
    let schema = load_schema(schema_path)?;
    let data = load_csv(data_path, &schema)?;
    let groups: Vec<(String, Vec<usize>)> = match groupby {
        None => vec![("all".to_string(), (0..data.n()).collect())],
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let mut assignment: Vec<(usize, String)> = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if i == 0 {
                    if line != "row,leaf_id" {
                        return Err(CliError::Data(format!(
                            "{}: bad group file header `{line}`",
                            path.display()
                        )));
                    }
                    continue;
                }
                let mut parts = line.split(',');
                let row: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| CliError::Data(format!("bad group row `{line}`")))?;
                let group = parts
                    .next()
                    .ok_or_else(|| CliError::Data(format!("bad group row `{line}`")))?
                    .to_string();
                if row >= data.n() {
                    return Err(CliError::Data(format!(
                        "group file row {row} out of range (n = {})",
                        data.n()
                    )));
                }
                assignment.push((row, group));
            }
            if assignment.len() != data.n() {
                return Err(CliError::Data(format!(
                    "group file covers {} rows, dataset has {}",
                    assignment.len(),
                    data.n()
                )));
            }
            let mut names: Vec<String> =
                assignment.iter().map(|(_, g)| g.clone()).collect::<Vec<_>>();
            names.sort();
            names.dedup();
            names
                .into_iter()
                .map(|name| {
                    let rows = assignment
                        .iter()
                        .filter(|(_, g)| *g == name)
                        .map(|(r, _)| *r)
                        .collect();
                    (name, rows)
                })
                .collect()
        }
    };
    ensure_dir(out)?;
    let mut csv = String::from("group,time,survival,lower,upper\n");
    for (name, rows) in groups {
        let times: Vec<f64> = rows.iter().map(|&r| data.times()[r]).collect();
        let status: Vec<bool> = rows.iter().map(|&r| data.status()[r]).collect();
        let km = kaplan_meier(&times, &status, level)?;
        let _ = writeln!(csv, "{name},0,1,1,1");
        for i in 0..km.times.len() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                name, km.times[i], km.survival[i], km.lower[i], km.upper[i]
            );
        }
    }
    write_file(&out.join("km.csv"), &csv)?;
    Ok(())
}

/// Parses one leaf's curve rows out of a curves.csv emitted by summarize
/// or predict. Used by tests and downstream tooling.
pub fn read_curve_csv(path: &Path) -> Result<Vec<(u32, f64, f64, f64, f64)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "leaf_id,time_raw,mean,lower,upper" {
                return Err(CliError::Data(format!("bad curve header `{line}`")));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(CliError::Data(format!("bad curve row `{line}`")));
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::Data(format!("bad number `{s}`")))
        };
        rows.push((
            f[0].parse()
                .map_err(|_| CliError::Data(format!("bad leaf id `{}`", f[0])))?,
            parse(f[1])?,
            parse(f[2])?,
            parse(f[3])?,
            parse(f[4])?,
        ));
    }
    Ok(rows)
}

/// Returns true when the rule payloads of a decoded tree mention the given
/// column index anywhere.
pub fn tree_uses_variable(tree: &Tree, variable: usize) -> bool {
    (0..tree.len() as u32).any(|id| {
        tree.node(id)
            .rule
            .as_ref()
            .map(|r| r.variable == variable)
            .unwrap_or(false)
    })
}

/// Variables used by the tree, with threshold payloads, for reporting.
pub fn tree_split_summary(tree: &Tree, data: &SurvivalDataset) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for id in tree.internal_nodes() {
        let rule = tree.node(id).rule.as_ref().unwrap();
        let name = data.column(rule.variable).name.clone();
        let payload = match &rule.kind {
            RuleKind::Threshold(r) => format!("le={r}"),
            RuleKind::Subset(codes) => format!("in={codes:?}"),
        };
        out.push((name, payload));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnKind;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Data("x".into()).exit_code(), 2);
        assert_eq!(CliError::Numeric("x".into()).exit_code(), 3);
    }

    #[test]
    fn simulate_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        cmd_simulate("tree-nonph", 50, 3, dir.path()).unwrap();
        assert!(dir.path().join("data.csv").exists());
        assert!(dir.path().join("truth.csv").exists());
        // Round-trips through the loader.
        let data = load_csv(&dir.path().join("data.csv"), &CsvSchema::default()).unwrap();
        assert_eq!(data.n(), 50);
        assert_eq!(data.n_covariates(), 2);
        assert_eq!(data.column(0).kind(), ColumnKind::Continuous);
        assert_eq!(data.column(1).kind(), ColumnKind::Categorical);
    }

    #[test]
    fn simulate_rejects_unknown_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_simulate("bogus", 10, 1, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn cox_csv_has_expected_columns() {
        let dir = tempfile::tempdir().unwrap();
        cmd_simulate("cox-ph", 20, 5, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("data.csv")).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "time,status,x1,x2,x3,x4,x5,x6");
        assert_eq!(text.lines().count(), 21);
    }
}
