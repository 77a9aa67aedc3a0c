//! Grid sweeps over (algorithm, λ, η).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::sync::Mutex;

use super::config::{ExperimentConfig, GridCell};
use super::data::{corrupt_labels, generate_synthetic, SyntheticSpec};
use super::metrics::{csv_writer, write_header, write_row, MetricsRow};
use crate::error::{Error, Result};
use crate::model::{Dataset, LossSpec, ModelSpec};
use crate::numerics::RngStream;
use crate::optimizer::{self, HyperParams, RunConfig, Schedule};

/// Callback invoked once per finished cell, in grid order.
pub type Progress<'a> = &'a (dyn Fn(&GridCell, &[MetricsRow]) + Sync);

/// Training and test sets for a config: CSV files when given, otherwise
/// synthetic clusters drawn from stream 0 of the seed. Training labels are
/// then corrupted; the test set never is.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let mut rng = RngStream::with_stream(cfg.seed, 0);
    let (train, test) = match &cfg.train_csv {
        Some(path) => {
            let train = Dataset::load_csv(path)?;
            let test = match &cfg.test_csv {
                Some(p) => Dataset::load_csv(p)?,
                None => Dataset::default(),
            };
            for ds in [&train, &test] {
                if let Some(bad) = ds
                    .labels()
                    .into_iter()
                    .find(|y| !(y.fract() == 0.0 && *y >= 0.0 && (*y as usize) < cfg.classes))
                {
                    return Err(Error::InvalidArgument(format!(
                        "label {bad} is not a class index below {}",
                        cfg.classes
                    )));
                }
            }
            (train, test)
        }
        None => generate_synthetic(
            &SyntheticSpec {
                classes: cfg.classes,
                n_train: cfg.n_train,
                n_test: cfg.n_test,
                d: cfg.d,
                noise: cfg.noise,
                separation: cfg.separation,
            },
            &mut rng,
        ),
    };
    if let (Some(a), Some(b)) = (train.dim(), test.dim()) {
        if a != b {
            return Err(Error::DimensionMismatch {
                context: "test features",
                expected: a,
                found: b,
            });
        }
    }
    let train = corrupt_labels(&train, cfg.corruption, cfg.classes, &mut rng)?;
    Ok((train, test))
}

/// Runs the whole grid and writes `cfg.out`. Refuses to overwrite an
/// existing file unless `cfg.force` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    run_experiment_with(cfg, &|_, _| {})
}

pub fn run_experiment_with(cfg: &ExperimentConfig, progress: Progress) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    if cfg.out.exists() && !cfg.force {
        return Err(Error::OutputExists(cfg.out.clone()));
    }
    let (train, test) = load_data(cfg)?;
    let file = BufWriter::new(File::create(&cfg.out)?);
    run_grid(cfg, &train, &test, file, progress)
}

/// Runs every grid cell on the given data, streaming rows to `out`. Cells
/// may finish in any order; rows are committed in grid order so the output
/// does not depend on scheduling.
pub fn run_grid<W: Write + Send>(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    out: W,
    progress: Progress,
) -> Result<Vec<MetricsRow>> {
    let dim = train
        .dim()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let model = cfg.model_spec(dim)?;
    let cells = cfg.grid();
    let sink = OrderedSink::new(out, cells.clone())?;
    cfg.execution().for_each(cells, |cell| {
        let rows = run_cell(cfg, &model, train, test, &cell);
        sink.commit(cell.index, rows, progress);
    });
    sink.finish()
}

/// One training run. Runs that blow up (non-finite weights, leaving the
/// potential's domain) end with their abort row instead of failing the grid.
pub fn run_cell(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    train: &Dataset,
    test: &Dataset,
    cell: &GridCell,
) -> Result<Vec<MetricsRow>> {
    let mut rng = RngStream::with_stream(cfg.seed, 1 + cell.index as u64);
    let hp = HyperParams {
        eta: cell.eta,
        lambda: cell.lambda.unwrap_or(1.0),
        batch_size: cfg.batch_size,
        epsilon_guard: cfg.epsilon_guard,
    };
    let schedule = Schedule {
        max_epochs: cfg.epochs,
        stopping: cfg.stopping_rule(cell.algorithm),
        log_every: cfg.log_every,
    };
    let mut run_cfg = RunConfig::new(cell.algorithm, cfg.potential, hp, schedule);
    run_cfg.init_std = cfg.init_std;
    run_cfg.z_init_std = cfg.z_init_std;
    run_cfg.exec = cfg.execution();

    let mut rows = Vec::new();
    let test = (!test.is_empty()).then_some(test);
    let outcome = optimizer::run(
        model,
        LossSpec::Square,
        train,
        test,
        &run_cfg,
        &mut rng,
        &mut |m| {
            rows.push(MetricsRow::from_epoch(
                &cfg.name,
                cell.algorithm,
                cell.lambda,
                cell.eta,
                cfg.seed,
                m,
            ));
        },
    );
    match outcome {
        Ok(_) | Err(Error::NonFinite { .. } | Error::DomainError { .. }) => Ok(rows),
        Err(e) => Err(e),
    }
}

struct SinkState<W: Write> {
    writer: csv::Writer<W>,
    cells: Vec<GridCell>,
    next: usize,
    pending: BTreeMap<usize, Result<Vec<MetricsRow>>>,
    written: Vec<MetricsRow>,
    error: Option<Error>,
}

struct OrderedSink<W: Write> {
    state: Mutex<SinkState<W>>,
}

impl<W: Write> OrderedSink<W> {
    fn new(out: W, cells: Vec<GridCell>) -> Result<Self> {
        let mut writer = csv_writer(out);
        write_header(&mut writer)?;
        writer.flush()?;
        Ok(Self {
            state: Mutex::new(SinkState {
                writer,
                cells,
                next: 0,
                pending: BTreeMap::new(),
                written: Vec::new(),
                error: None,
            }),
        })
    }

    fn commit(&self, index: usize, rows: Result<Vec<MetricsRow>>, progress: Progress) {
        let mut guard = self.state.lock().expect("sink lock poisoned");
        let st = &mut *guard;
        st.pending.insert(index, rows);
        while let Some(ready) = st.pending.remove(&st.next) {
            match ready {
                Ok(rows) => {
                    let written = rows
                        .iter()
                        .try_for_each(|r| write_row(&mut st.writer, r))
                        .and_then(|_| st.writer.flush().map_err(Error::from));
                    if let Err(e) = written {
                        st.error.get_or_insert(e);
                    }
                    progress(&st.cells[st.next], &rows);
                    st.written.extend(rows);
                }
                Err(e) => {
                    st.error.get_or_insert(e);
                }
            }
            st.next += 1;
        }
    }

    fn finish(self) -> Result<Vec<MetricsRow>> {
        let st = self.state.into_inner().expect("sink lock poisoned");
        if let Some(e) = st.error {
            return Err(e);
        }
        st.writer
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))?;
        Ok(st.written)
    }
}
