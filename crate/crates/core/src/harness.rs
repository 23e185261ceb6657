//! Synthetic teacher-student tasks and the method/initialization sweep.
//!
//! A task plants a rank-`k` update `ΔW* = A*·W*·B*` on top of a random base
//! weight; the sweep trains every `(method, mixer init, rank, seed)` cell on
//! it and reports convergence figures.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::adapter::{Adapter, AdapterConfig, MixerKind};
use crate::dynamics::{train, Dataset, TrainConfig};
use crate::error::{Error, Result};
use crate::init::InitKind;
use crate::matrix::Matrix;
use crate::rng::{Rng, Stream};

/// Loss fraction that counts as "90% of the way": `loss <= 0.1·loss₀`.
pub const CONVERGED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TargetKind {
    /// `W* = I`
    LowRankPlain,
    /// `W*` dense Gaussian
    LowRankMixed,
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "lowrankplain" | "low-rank-plain" => Ok(TargetKind::LowRankPlain),
            "mixed" | "lowrankmixed" | "low-rank-mixed" => Ok(TargetKind::LowRankMixed),
            other => Err(Error::Parse(format!("unknown target kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub d1: usize,
    pub d2: usize,
    pub n_train: usize,
    /// `0` means no held-out split.
    pub n_eval: usize,
    pub target_rank: usize,
    pub target_kind: TargetKind,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            d1: 16,
            d2: 16,
            n_train: 256,
            n_eval: 64,
            target_rank: 4,
            target_kind: TargetKind::LowRankPlain,
            noise_std: 0.01,
            seed: 0,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 || self.n_train == 0 || self.target_rank == 0 {
            return Err(Error::Config(
                "d1, d2, n_train and target_rank must be at least 1".into(),
            ));
        }
        if self.target_rank > self.d1.min(self.d2) {
            return Err(Error::Config(format!(
                "target rank {} exceeds min(d1, d2) = {}",
                self.target_rank,
                self.d1.min(self.d2)
            )));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::Config(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub w0: Matrix,
    /// Planted update `ΔW*`.
    pub delta_star: Matrix,
    pub train: Dataset,
    pub eval: Option<Dataset>,
}

fn gaussian(rows: usize, cols: usize, std: f64, stream: &mut Stream) -> Result<Matrix> {
    Matrix::from_fn(rows, cols, |_, _| stream.normal(std))
}

/// Builds the teacher: `W0` entries `~ N(0, σ² = 1/d1)`; `A*`, `B*` (and `W*`
/// for mixed targets) with standard normal entries; inputs `~ N(0, 1)`; and
/// `Y = X·(W0 + ΔW*) + noise`.
pub fn make_task(spec: &TaskSpec) -> Result<Task> {
    spec.validate()?;
    let rng = Rng::new(spec.seed);
    let (d1, d2, k) = (spec.d1, spec.d2, spec.target_rank);

    let w0 = gaussian(d1, d2, 1.0 / (d1 as f64).sqrt(), &mut rng.stream("task/W0"))?;
    let a_star = gaussian(d1, k, 1.0, &mut rng.stream("task/A*"))?;
    let b_star = gaussian(k, d2, 1.0, &mut rng.stream("task/B*"))?;
    let w_star = match spec.target_kind {
        TargetKind::LowRankPlain => Matrix::identity(k),
        TargetKind::LowRankMixed => gaussian(k, k, 1.0, &mut rng.stream("task/W*"))?,
    };
    let delta_star = a_star.matmul(&w_star)?.matmul(&b_star)?;
    let teacher = w0.add(&delta_star)?;

    let split = |n: usize, label: &str| -> Result<Dataset> {
        let x = gaussian(n, d1, 1.0, &mut rng.stream(&format!("task/X/{label}")))?;
        let mut noise = rng.stream(&format!("task/noise/{label}"));
        let clean = x.matmul(&teacher)?;
        let y = if spec.noise_std > 0.0 {
            clean.add(&gaussian(n, d2, spec.noise_std, &mut noise)?)?
        } else {
            clean
        };
        Ok(Dataset { x, y })
    };
    let train = split(spec.n_train, "train")?;
    let eval = if spec.n_eval > 0 {
        Some(split(spec.n_eval, "eval")?)
    } else {
        None
    };
    Ok(Task {
        w0,
        delta_star,
        train,
        eval,
    })
}

/// Adapter family compared by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Lora,
    TsMixing,
    MosloraFixedOrth,
    MosloraLearnable,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Lora,
        Method::TsMixing,
        Method::MosloraFixedOrth,
        Method::MosloraLearnable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lora => "lora",
            Method::TsMixing => "ts-mixing",
            Method::MosloraFixedOrth => "moslora-fixed-orth",
            Method::MosloraLearnable => "moslora-learnable",
        }
    }

    pub fn mixer(self, init: Option<InitKind>) -> MixerKind {
        match self {
            Method::Lora => MixerKind::FixedIdentity,
            Method::TsMixing => MixerKind::FixedButterfly,
            Method::MosloraFixedOrth => MixerKind::FixedOrthogonal,
            Method::MosloraLearnable => {
                MixerKind::Learnable(init.unwrap_or(InitKind::KaimingUniform))
            }
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lora" => Ok(Method::Lora),
            "ts-mixing" | "tsmixing" => Ok(Method::TsMixing),
            "moslora-fixed-orth" => Ok(Method::MosloraFixedOrth),
            "moslora-learnable" | "moslora" => Ok(Method::MosloraLearnable),
            other => Err(Error::Parse(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub methods: Vec<Method>,
    /// Mixer initializations tried for [`Method::MosloraLearnable`].
    pub inits: Vec<InitKind>,
    pub ranks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub task: TaskSpec,
    pub alpha: f64,
    /// Measure `wall_ms`. Off by default: timings make reports non-reproducible.
    pub record_wall_time: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            inits: InitKind::ALL.to_vec(),
            ranks: vec![4],
            seeds: vec![0],
            train: TrainConfig::new(0.05, 1000),
            task: TaskSpec::default(),
            alpha: 0.0,
            record_wall_time: false,
        }
    }
}

/// One sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell {
    pub method: Method,
    pub init: Option<InitKind>,
    pub rank: usize,
    pub seed: u64,
}

fn list<T: FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("bad value {value:?} for {key}")))
}

fn numbers<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|v| number(key, v))
        .collect()
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty()
            || self.inits.is_empty()
            || self.ranks.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::Config(
                "methods, inits, ranks and seeds must be non-empty".into(),
            ));
        }
        self.train.validate()?;
        self.task.validate()?;
        for cell in self.cells() {
            self.adapter_config(&cell).validate()?;
        }
        Ok(())
    }

    /// Every cell, sorted by `(method, init, rank, seed)`. Fixed-mixer
    /// methods get a single `init = None` cell per rank and seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &method in &self.methods {
            let inits: Vec<Option<InitKind>> = if method == Method::MosloraLearnable {
                self.inits.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for &init in &inits {
                for &rank in &self.ranks {
                    for &seed in &self.seeds {
                        cells.push(Cell {
                            method,
                            init,
                            rank,
                            seed,
                        });
                    }
                }
            }
        }
        cells.sort();
        cells.dedup();
        cells
    }

    pub fn adapter_config(&self, cell: &Cell) -> AdapterConfig {
        AdapterConfig::new(
            self.task.d1,
            self.task.d2,
            cell.rank,
            cell.method.mixer(cell.init),
        )
        .with_alpha(self.alpha)
        .with_seed(cell.seed)
    }

    /// Reads `key = value` lines; `#` starts a comment. Unset keys keep the
    /// [`Default`] values. List values are comma separated.
    ///
    /// Keys: `methods inits ranks seeds lr steps alpha d1 d2 n_train n_eval
    /// target_rank target_kind noise_std task_seed wall_time`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SweepSpec::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "methods" => spec.methods = list(value)?,
                "inits" => spec.inits = list(value)?,
                "ranks" => spec.ranks = numbers(key, value)?,
                "seeds" => spec.seeds = numbers(key, value)?,
                "lr" | "eta" => spec.train.eta = number(key, value)?,
                "steps" => spec.train.steps = number(key, value)?,
                "alpha" => spec.alpha = number(key, value)?,
                "d1" => spec.task.d1 = number(key, value)?,
                "d2" => spec.task.d2 = number(key, value)?,
                "n_train" => spec.task.n_train = number(key, value)?,
                "n_eval" => spec.task.n_eval = number(key, value)?,
                "target_rank" => spec.task.target_rank = number(key, value)?,
                "target_kind" => spec.task.target_kind = value.parse()?,
                "noise_std" => spec.task.noise_std = number(key, value)?,
                "task_seed" => spec.task.seed = number(key, value)?,
                "wall_time" => spec.record_wall_time = number(key, value)?,
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )));
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub mixer_init: Option<InitKind>,
    pub rank: usize,
    pub seed: u64,
    /// Last training loss; `+inf` when the run diverged.
    pub final_loss: f64,
    pub best_loss: f64,
    /// First step with `loss <= 0.1·loss₀`, `None` if never reached.
    pub steps_to_90pct: Option<usize>,
    pub param_count: usize,
    pub wall_ms: u64,
}

impl ReportRow {
    pub fn diverged(&self) -> bool {
        !self.final_loss.is_finite()
    }

    pub fn cell(&self) -> Cell {
        Cell {
            method: self.method,
            init: self.mixer_init,
            rank: self.rank,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str =
    "method,mixer_init,rank,seed,final_loss,best_loss,steps_to_90pct,param_count,wall_ms";

fn run_cell(spec: &SweepSpec, task: &Task, cell: Cell) -> Result<ReportRow> {
    let started = Instant::now();
    let config = spec.adapter_config(&cell);
    let param_count = config.param_count();
    let adapter = Adapter::new(config)?;
    let mut train_cfg = spec.train.clone();
    train_cfg.seed = cell.seed;
    let log = train(&adapter, &task.w0, &task.train, &train_cfg)?;

    let best_loss = log.best_loss().unwrap_or(f64::INFINITY);
    let final_loss = if log.diverged() {
        f64::INFINITY
    } else {
        log.final_loss().unwrap_or(f64::INFINITY)
    };
    let wall_ms = if spec.record_wall_time {
        started.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(ReportRow {
        method: cell.method,
        mixer_init: cell.init,
        rank: cell.rank,
        seed: cell.seed,
        final_loss,
        best_loss,
        steps_to_90pct: log.steps_to_fraction(CONVERGED_FRACTION),
        param_count,
        wall_ms,
    })
}

/// Trains every cell (in parallel) on one shared task. Rows come back in
/// cell order regardless of scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<Report> {
    spec.validate()?;
    let task = make_task(&spec.task)?;
    let rows = spec
        .cells()
        .into_par_iter()
        .map(|cell| run_cell(spec, &task, cell))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report { rows })
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

impl Report {
    /// CSV text: header plus one LF-terminated line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let init = row.mixer_init.map_or("none", InitKind::name);
            let steps = row
                .steps_to_90pct
                .map_or_else(|| "never".to_string(), |s| s.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.method,
                init,
                row.rank,
                row.seed,
                fmt_real(row.final_loss),
                fmt_real(row.best_loss),
                steps,
                row.param_count,
                row.wall_ms
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
            return Err(Error::Parse(format!("unexpected CSV header {header:?}")));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |i: usize| record.get(i).unwrap_or("");
            let mixer_init = match field(1) {
                "none" => None,
                name => Some(name.parse()?),
            };
            let steps_to_90pct = match field(6) {
                "never" => None,
                s => Some(number("steps_to_90pct", s)?),
            };
            rows.push(ReportRow {
                method: field(0).parse()?,
                mixer_init,
                rank: number("rank", field(2))?,
                seed: number("seed", field(3))?,
                final_loss: number("final_loss", field(4))?,
                best_loss: number("best_loss", field(5))?,
                steps_to_90pct,
                param_count: number("param_count", field(7))?,
                wall_ms: number("wall_ms", field(8))?,
            });
        }
        Ok(Report { rows })
    }

    pub fn find(&self, cell: Cell) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.cell() == cell)
    }
}

pub fn emit_csv(report: &Report, path: &Path) -> Result<()> {
    fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Report::from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_task(kind: TargetKind, noise: f64) -> TaskSpec {
        TaskSpec {
            d1: 8,
            d2: 6,
            n_train: 32,
            n_eval: 8,
            target_rank: 2,
            target_kind: kind,
            noise_std: noise,
            seed: 3,
        }
    }

    /// Numerical rank via Gram-Schmidt on the rows.
    fn numerical_rank(m: &Matrix, tol: f64) -> usize {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for i in 0..m.rows() {
            let mut v = m.row(i).to_vec();
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > tol {
                basis.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        basis.len()
    }

    #[test]
    fn noiseless_residual_has_target_rank() {
        for kind in [TargetKind::LowRankPlain, TargetKind::LowRankMixed] {
            let task = make_task(&small_task(kind, 0.0)).unwrap();
            let residual = task
                .train
                .y
                .sub(&task.train.x.matmul(&task.w0).unwrap())
                .unwrap();
            assert_eq!(numerical_rank(&residual, 1e-8), 2);
        }
    }

    #[test]
    fn noisy_task_is_full_rank() {
        let task = make_task(&small_task(TargetKind::LowRankPlain, 0.01)).unwrap();
        let residual = task
            .train
            .y
            .sub(&task.train.x.matmul(&task.w0).unwrap())
            .unwrap();
        assert_eq!(numerical_rank(&residual, 1e-8), 6);
    }

    #[test]
    fn task_is_deterministic() {
        let spec = small_task(TargetKind::LowRankMixed, 0.01);
        assert_eq!(make_task(&spec).unwrap(), make_task(&spec).unwrap());
        let other = TaskSpec {
            seed: 4,
            ..spec.clone()
        };
        assert_ne!(make_task(&spec).unwrap(), make_task(&other).unwrap());
    }

    #[test]
    fn task_rank_too_large() {
        let spec = TaskSpec {
            target_rank: 7,
            ..small_task(TargetKind::LowRankPlain, 0.0)
        };
        assert!(matches!(make_task(&spec), Err(Error::Config(_))));
        let spec = TaskSpec {
            n_eval: 0,
            ..small_task(TargetKind::LowRankPlain, 0.0)
        };
        assert!(make_task(&spec).unwrap().eval.is_none());
    }

    #[test]
    fn cells_are_sorted_and_fixed_methods_ignore_inits() {
        let spec = SweepSpec {
            methods: vec![Method::MosloraLearnable, Method::Lora],
            inits: vec![InitKind::KaimingUniform, InitKind::Zeros],
            ranks: vec![4, 2],
            seeds: vec![1, 0],
            ..SweepSpec::default()
        };
        let cells = spec.cells();
        assert_eq!(cells.len(), 2 * 2 + 2 * 2 * 2);
        assert!(cells.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(cells[0].method, Method::Lora);
        assert_eq!(cells[0].init, None);
        assert_eq!(cells[4].init, Some(InitKind::Zeros));
    }

    #[test]
    fn sweep_with_zero_steps_reports_initial_loss() {
        let spec = SweepSpec {
            methods: vec![Method::Lora],
            ranks: vec![2],
            train: TrainConfig::new(0.05, 0),
            task: small_task(TargetKind::LowRankPlain, 0.0),
            ..SweepSpec::default()
        };
        let report = run_sweep(&spec).unwrap();
        assert_eq!(report.rows.len(), 1);
        let task = make_task(&spec.task).unwrap();
        let initial = crate::dynamics::mse_loss(
            &Adapter::new(spec.adapter_config(&spec.cells()[0])).unwrap(),
            &task.w0,
            &task.train.x,
            &task.train.y,
        )
        .unwrap();
        assert_eq!(report.rows[0].final_loss, initial);
        assert_eq!(report.rows[0].best_loss, initial);
    }

    #[test]
    fn odd_rank_ts_mixing_is_rejected_up_front() {
        let spec = SweepSpec {
            methods: vec![Method::TsMixing],
            ranks: vec![3],
            task: small_task(TargetKind::LowRankPlain, 0.0),
            ..SweepSpec::default()
        };
        assert!(matches!(run_sweep(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn empty_report_csv_is_header_only() {
        assert_eq!(Report::default().to_csv(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn csv_lines_and_roundtrip() {
        let rows = vec![
            ReportRow {
                method: Method::Lora,
                mixer_init: None,
                rank: 4,
                seed: 0,
                final_loss: 1.0 / 3.0,
                best_loss: 0.1,
                steps_to_90pct: Some(17),
                param_count: 128,
                wall_ms: 5,
            },
            ReportRow {
                method: Method::MosloraLearnable,
                mixer_init: Some(InitKind::Zeros),
                rank: 4,
                seed: 0,
                final_loss: f64::INFINITY,
                best_loss: 2.5e-300,
                steps_to_90pct: None,
                param_count: 144,
                wall_ms: 0,
            },
        ];
        let report = Report { rows };
        let text = report.to_csv();
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains('\r'));
        assert!(text.contains(",never,"));
        assert_eq!(Report::from_csv(&text).unwrap(), report);
        assert!(report.rows[1].diverged());
    }

    #[test]
    fn csv_reals_have_17_significant_digits() {
        assert_eq!(fmt_real(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(fmt_real(0.0), "0.0000000000000000e0");
    }

    #[test]
    fn spec_file_parsing() {
        let text = "\
            # tiny sweep\n\
            methods = lora, moslora-learnable\n\
            inits = kaiming,zeros\n\
            ranks = 2\n\
            seeds = 0,1\n\
            lr = 0.1\n\
            steps = 10\n\
            d1 = 8\n\
            d2 = 8\n\
            target_rank = 2\n\
            target_kind = mixed\n\
            noise_std = 0\n";
        let spec = SweepSpec::parse(text).unwrap();
        assert_eq!(spec.methods, vec![Method::Lora, Method::MosloraLearnable]);
        assert_eq!(spec.inits, vec![InitKind::KaimingUniform, InitKind::Zeros]);
        assert_eq!(spec.train.eta, 0.1);
        assert_eq!(spec.task.target_kind, TargetKind::LowRankMixed);
        assert!(SweepSpec::parse("bogus = 1").is_err());
        assert!(SweepSpec::parse("ranks").is_err());
        assert!(SweepSpec::parse("ranks = x").is_err());
        assert!(SweepSpec::parse("seeds =").is_err());
    }
}
