//! Subcommand implementations. Every command validates its inputs and runs
//! to completion before the first output file is written.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use idg_core::game::{run_cells, summarize, CellRuns};
use idg_core::io::write_atomic;
use idg_core::metrics::write_curves_csv;
use idg_core::shapley::{prefix_accuracy, random_order, read_valuation_csv, ValuationMethod};
use idg_core::{
    aggregate_curves, exact_knn_shapley, gini, load_dataset, spearman, CurveSeries, DataFormat,
    Dataset, Game, GridCell, GridResult, PointId, SplitDataset, SyntheticSpec, TrainView,
    ValuationVector,
};
use serde::Serialize;

use crate::config::RunConfig;

/// Present in an output directory while a command is still writing to it.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

const SPEARMAN_NOTE: &str = "spearman_q_shapley compares each run's final Q vector with exact kNN \
Shapley values of the original training points, averaged over validation points before ranking";

/// Prefix fractions of the acquisition curve.
pub const ACQUISITION_FRACTIONS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    fn begin(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_atomic(&dir.join(INCOMPLETE_MARKER), b"")?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)
            .with_context(|| format!("writing {}", self.dir.join(name).display()))
    }

    fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn finish(self) -> Result<()> {
        fs::remove_file(self.dir.join(INCOMPLETE_MARKER))?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    full_data_utility: f64,
    u_target: f64,
    cells: usize,
    seeds: &'a [u64],
    train_n: usize,
    val_n: usize,
    test_n: usize,
    notes: Vec<&'a str>,
}

/// Resolves the output directory: the flag wins over the config.
pub fn output_dir(config: &RunConfig, flag: Option<&Path>) -> Result<PathBuf> {
    match (flag, &config.output_dir) {
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(p)) => Ok(p.clone()),
        (None, None) => bail!("no output directory: pass --output or set output_dir"),
    }
}

fn prepare(config: &RunConfig) -> Result<SplitDataset> {
    config.validate()?;
    config.build_split()
}

fn full_utility(config: &RunConfig, game: &Game<'_>) -> Result<f64> {
    if config.u_target_from_full_data {
        Ok(game.full_data_utility()?)
    } else {
        Ok(0.0)
    }
}

fn cell_label(cell: &GridCell) -> String {
    format!(
        "{} b_max={} c={} eps={} fraction={}",
        cell.strategy.kind.as_str(),
        cell.b_max,
        cell.exploration_c,
        cell.du_policy.eps_per_feature,
        cell.strategy.fraction
    )
}

fn q_vector(game: &Game<'_>, q: &[f64]) -> ValuationVector {
    ValuationVector {
        points: (0..q.len()).collect(),
        ids: game.train().ids().to_vec(),
        values: q.to_vec(),
        method: ValuationMethod::QValue,
        eval_size: game.validation().len(),
    }
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> idg_core::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// Writes per-run traces, ledgers and Q vectors plus the utility curves.
fn write_runs(out: &OutputDir, game: &Game<'_>, runs: &[CellRuns]) -> Result<()> {
    let mut curves = Vec::new();
    let mut any_q = false;
    for (ci, cell) in runs.iter().enumerate() {
        for run in &cell.runs {
            let seed = run.trace.seed;
            out.write(
                &format!("trace_{ci}_{seed}.csv"),
                &csv_bytes(|b| run.trace.write_csv(b))?,
            )?;
            let mut ledger = run.ledger.to_json()?;
            ledger.push('\n');
            out.write(&format!("ledger_{ci}_{seed}.json"), ledger.as_bytes())?;
            if let Some(q) = &run.q_values {
                any_q = true;
                let v = q_vector(game, q);
                out.write(
                    &format!("q_{ci}_{seed}.csv"),
                    &csv_bytes(|b| v.write_csv(b))?,
                )?;
            }
        }
        let traces: Vec<_> = cell.runs.iter().map(|r| r.trace.clone()).collect();
        curves.push(aggregate_curves(&traces, cell_label(&cell.cell))?);
    }
    out.write("curves.csv", &csv_bytes(|b| write_curves_csv(&curves, b))?)?;
    if any_q {
        let reference = game.original_shapley()?;
        out.write(
            "shapley_original.csv",
            &csv_bytes(|b| reference.write_csv(b))?,
        )?;
    }
    Ok(())
}

fn run_and_write(
    config: &RunConfig,
    output: &Path,
    command: &str,
    cells_for: impl FnOnce(f64) -> Vec<GridCell>,
) -> Result<Vec<GridResult>> {
    let split = prepare(config)?;
    let game = Game::new(&split, config.k, config.distance)?;
    let full = full_utility(config, &game)?;
    let cells = cells_for(full);
    let runs = run_cells(&game, &cells, &config.seeds)?;
    let results = summarize(&game, &runs)?;

    let out = OutputDir::begin(output)?;
    write_runs(&out, &game, &runs)?;
    out.write_json("config.json", config)?;
    out.write_json(
        "metadata.json",
        &Metadata {
            command,
            version: env!("CARGO_PKG_VERSION"),
            full_data_utility: game.full_data_utility()?,
            u_target: cells[0].du_policy.u_target,
            cells: cells.len(),
            seeds: &config.seeds,
            train_n: split.train.len(),
            val_n: split.validation.len(),
            test_n: split.test.len(),
            notes: vec![SPEARMAN_NOTE],
        },
    )?;
    if command == "simulate" {
        out.write_json("summary.json", &results[0])?;
    } else {
        out.write_json("grid_results.json", &results)?;
    }
    out.finish()?;
    Ok(results)
}

/// One DU policy and one strategy over every seed.
pub fn cmd_simulate(config: &RunConfig, output: &Path) -> Result<GridResult> {
    let results = run_and_write(config, output, "simulate", |full| {
        vec![GridCell::new(
            config.policy(full).expect("validated"),
            config.strategy.clone(),
        )]
    })?;
    Ok(results.into_iter().next().expect("one cell"))
}

/// Cartesian product of the grid axes over every seed.
pub fn cmd_grid(config: &RunConfig, output: &Path) -> Result<Vec<GridResult>> {
    let Some(grid) = &config.grid else {
        bail!("grid command needs a `grid` block in the config");
    };
    run_and_write(config, output, "grid", |full| {
        idg_core::game::grid_cells(&config.du_grid(grid, full), &config.strategy_grid(grid))
    })
}

/// Replaces the training features with centers read from `path`. Dataset
/// files carry no ids, so rows must follow the training split's order.
fn centers_dataset(train: &Dataset, path: &Path) -> Result<Dataset> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => DataFormat::Csv,
        _ => DataFormat::Binary,
    };
    let centers = load_dataset(path, format)
        .with_context(|| format!("loading centers {}", path.display()))?;
    ensure!(
        centers.len() == train.len() && centers.dim() == train.dim(),
        "centers are {}x{}, training split is {}x{}",
        centers.len(),
        centers.dim(),
        train.len(),
        train.dim()
    );
    if let Some(i) = (0..train.len()).find(|&i| centers.label(i) != train.label(i)) {
        bail!(
            "centers row {i} has label {}, training row has {}",
            centers.label(i),
            train.label(i)
        );
    }
    Ok(train.with_features(centers.features().to_vec())?)
}

/// Both acquisition curves: descending Shapley order and random orders.
pub fn acquisition_curves(
    train: &Dataset,
    test: &Dataset,
    values: &ValuationVector,
    k: usize,
    metric: idg_core::Distance,
    seeds: &[u64],
) -> Result<Vec<CurveSeries>> {
    let view = TrainView::full(train).with_metric(metric);
    let x = ACQUISITION_FRACTIONS.to_vec();
    let by_value = prefix_accuracy(&view, test, &values.ranking(), &x, k)?;
    let random: Vec<Vec<f64>> = seeds
        .iter()
        .map(|&s| prefix_accuracy(&view, test, &random_order(train.len(), s), &x, k))
        .collect::<idg_core::Result<_>>()?;
    let mut random = CurveSeries::from_runs(&random, "random")?;
    random.x = x.clone();
    Ok(vec![
        CurveSeries {
            x,
            y_std: vec![0.0; by_value.len()],
            y_mean: by_value,
            label: "shapley".into(),
        },
        random,
    ])
}

/// Exact kNN Shapley values of the training points on the validation set,
/// plus test accuracy of Shapley-ordered and random prefixes.
pub fn cmd_shapley(
    config: &RunConfig,
    output: &Path,
    centers: Option<&Path>,
) -> Result<ValuationVector> {
    let split = prepare(config)?;
    ensure!(
        !split.test.is_empty(),
        "shapley needs split.test_n >= 1 for the acquisition curve"
    );
    let valued = match centers {
        Some(p) => centers_dataset(&split.train, p)?,
        None => split.train.clone(),
    };
    let view = TrainView::full(&valued).with_metric(config.distance);
    let values = exact_knn_shapley(&view, &split.validation, config.k)?;
    let curves = acquisition_curves(
        &split.train,
        &split.test,
        &values,
        config.k,
        config.distance,
        &config.seeds,
    )?;

    let out = OutputDir::begin(output)?;
    out.write("valuation.csv", &csv_bytes(|b| values.write_csv(b))?)?;
    out.write(
        "acquisition.csv",
        &csv_bytes(|b| write_curves_csv(&curves, b))?,
    )?;
    out.finish()?;
    Ok(values)
}

/// Generates a synthetic dataset file.
pub fn cmd_synth(spec: &SyntheticSpec, output: &Path, format: DataFormat) -> Result<Dataset> {
    let data = idg_core::generate_synthetic(spec)?;
    let bytes = match format {
        DataFormat::Csv => csv_bytes(|b| idg_core::data::write_csv(&data, b))?,
        DataFormat::Binary => csv_bytes(|b| idg_core::data::write_binary(&data, b))?,
    };
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_atomic(output, &bytes)?;
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub run: String,
    pub gini_spend: Option<f64>,
    pub spearman_q_shapley: Option<f64>,
}

#[derive(serde::Deserialize)]
struct LedgerRow {
    spent: f64,
}

/// Recomputes Gini of spend and Spearman(Q, Shapley) from a run directory
/// and writes `metrics.json` into `output`.
pub fn cmd_metrics(runs_dir: &Path, output: &Path) -> Result<Vec<RunMetrics>> {
    let mut ledgers: Vec<(String, PathBuf)> = fs::read_dir(runs_dir)
        .with_context(|| format!("reading {}", runs_dir.display()))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let run = name
                .strip_prefix("ledger_")?
                .strip_suffix(".json")?
                .to_string();
            Some((run, e.path()))
        })
        .collect();
    ensure!(
        !ledgers.is_empty(),
        "no ledger_*.json files in {}",
        runs_dir.display()
    );
    ledgers.sort();

    let reference_path = runs_dir.join("shapley_original.csv");
    let reference: Option<HashMap<PointId, f64>> = if reference_path.exists() {
        Some(
            read_valuation_csv(fs::File::open(&reference_path)?)?
                .into_iter()
                .collect(),
        )
    } else {
        None
    };

    let mut out = Vec::with_capacity(ledgers.len());
    for (run, path) in ledgers {
        let rows: Vec<LedgerRow> = serde_json::from_slice(&fs::read(&path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        let spent: Vec<f64> = rows.iter().map(|r| r.spent).collect();
        let q_path = runs_dir.join(format!("q_{run}.csv"));
        let spearman_q_shapley = match (&reference, q_path.exists()) {
            (Some(reference), true) => {
                let q = read_valuation_csv(fs::File::open(&q_path)?)?;
                let mut a = Vec::with_capacity(q.len());
                let mut b = Vec::with_capacity(q.len());
                for (id, v) in q {
                    let Some(&s) = reference.get(&id) else {
                        bail!(
                            "{} has id {id} missing from the reference",
                            q_path.display()
                        );
                    };
                    a.push(v);
                    b.push(s);
                }
                spearman(&a, &b).ok()
            }
            _ => None,
        };
        out.push(RunMetrics {
            run,
            gini_spend: gini(&spent).ok(),
            spearman_q_shapley,
        });
    }

    let dir = OutputDir::begin(output)?;
    dir.write_json("metrics.json", &out)?;
    dir.finish()?;
    Ok(out)
}
