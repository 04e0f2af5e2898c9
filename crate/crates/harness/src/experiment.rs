//! Paired Hamiltonian-learning / oracle runs and their logs.

use std::fs;
use std::path::{Path, PathBuf};

use hamlearn::hamiltonian::Phi;
use hamlearn::oracles::{bptt_gradients, map_params, sgd_momentum_step, truncated_bptt_gradients, BufferInit};
use hamlearn::recovery::{run_mode, ModeKind, RecoveryMode, RunRow};
use hamlearn::stream::{from_dataset_epochs, tokenize_sequences, Sequence, Stream, StreamItem};
use hamlearn::{
    Dense, HlConfig, InitialState, LossKind, ModelState, NetSpec, OutputNet, RecurrentCell, ResidualMode, SgdConfig,
    Source, StateNet, Tape, Tensor,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, ExperimentConfig, Metric, ModeName, ModelConfig};
use crate::datasets::{self, SequenceTask, Table};
use crate::error::HarnessError;

/// Offset between the model seed and the shuffle seed.
const SHUFFLE_SALT: u64 = 0x5eed_5eed;

pub enum Data {
    Table(Table),
    Sequences(Vec<Sequence>),
}

pub fn load_dataset(cfg: &DatasetConfig) -> Result<Data, HarnessError> {
    Ok(match cfg {
        DatasetConfig::Iris { seed } => Data::Table(datasets::iris_like(*seed)),
        DatasetConfig::Digits { seed } => Data::Table(datasets::digits_like(*seed)),
        DatasetConfig::Sequences { seed, count, length, input_dim, target_dim } => {
            Data::Sequences(datasets::token_sequences(
                *seed,
                SequenceTask { count: *count, length: *length, input_dim: *input_dim, target_dim: *target_dim },
            )?)
        }
        DatasetConfig::Csv { path } => Data::Table(datasets::read_table_csv(path)?),
        DatasetConfig::Jsonl { path } => Data::Sequences(datasets::read_sequences_jsonl(path)?),
    })
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub time: f64,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub max_abs_dtheta: f64,
    pub mean_abs_dtheta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl DiffStats {
    pub fn between(a: &Tensor, b: &Tensor) -> Self {
        let d: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).collect();
        if d.is_empty() {
            return Self { mean: 0.0, min: 0.0, max: 0.0 };
        }
        Self {
            mean: d.iter().sum::<f64>() / d.len() as f64,
            min: d.iter().copied().fold(f64::INFINITY, f64::min),
            max: d.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Weight gap between one Hamiltonian variant and one oracle convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConventionReport {
    pub oracle_buffer: BufferInit,
    /// Whether the first step used `φ = 1/τ`.
    pub first_step_reciprocal_phi: bool,
    pub final_weights: DiffStats,
    pub max_abs_dtheta: f64,
    pub max_mean_abs_dtheta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub scenario: String,
    pub mode: ModeName,
    pub steps: usize,
    pub parameters: usize,
    /// `|θ_HL − θ_oracle|` over the final weights.
    pub final_weights: DiffStats,
    /// Largest per-step maximum of `|Δθ|`.
    pub max_abs_dtheta: f64,
    /// Largest per-step mean of `|Δθ|`.
    pub max_mean_abs_dtheta: f64,
    pub max_loss_gap: f64,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub tolerance: f64,
    pub metric: Metric,
    pub conventions: Vec<ConventionReport>,
    pub pass: bool,
}

pub struct ExperimentResult {
    pub hl: Vec<LogRow>,
    pub oracle: Vec<LogRow>,
    pub summary: Summary,
}

/// Everything a pair of runs needs.
struct Prepared {
    spec: NetSpec,
    stream: Stream,
    /// Sequences in stream order (replay modes only).
    sequences: Vec<Sequence>,
    init: ModelState,
    loss: LossKind,
    mode: RecoveryMode,
    hl: HlConfig,
    sgd: SgdConfig,
    /// Items per epoch, for running accuracy.
    epoch_len: usize,
}

fn dense_stack(input: usize, hidden: &[usize], output: usize, act: hamlearn::Activation) -> Vec<Dense> {
    let mut layers = Vec::new();
    let mut prev = input;
    for &h in hidden {
        layers.push(Dense::new(prev, h, act));
        prev = h;
    }
    layers.push(Dense::new(prev, output, hamlearn::Activation::Identity));
    layers
}

fn model_error(msg: &str) -> HarnessError {
    HarnessError::Data(format!("model: {msg}"))
}

fn table_spec(model: &ModelConfig, mode: ModeName, input: usize, classes: usize) -> Result<NetSpec, HarnessError> {
    let layers = match model {
        ModelConfig::Linear => dense_stack(input, &[], classes, hamlearn::Activation::Identity),
        ModelConfig::Mlp { hidden, activation } => dense_stack(input, hidden, classes, *activation),
        ModelConfig::Custom { spec } => return Ok(spec.clone()),
        ModelConfig::Rnn { .. } => return Err(model_error("rnn models need a sequence dataset")),
    };
    Ok(match mode {
        ModeName::FfState => NetSpec::new(input, StateNet::Mlp { layers }, OutputNet::Identity)?
            .with_residual(ResidualMode::Instantaneous),
        _ => NetSpec::new(input, StateNet::Empty, OutputNet::Mlp { source: Source::Input, layers })?,
    })
}

fn shuffled_epochs(seqs: &[Sequence], epochs: usize, seed: Option<u64>) -> Vec<Sequence> {
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut out = Vec::with_capacity(seqs.len() * epochs);
    for _ in 0..epochs {
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        out.extend(order.iter().map(|&i| seqs[i].clone()));
    }
    out
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    let bad = |m: String| HarnessError::Config { path: PathBuf::from(&cfg.name), message: m };
    let sgd = cfg.sgd_config().map_err(bad)?;
    let params = cfg.sgd_params().map_err(bad)?;
    let tau = params.tau;
    let shuffle_seed = cfg.shuffle.then_some(cfg.seed ^ SHUFFLE_SALT);
    let data = load_dataset(&cfg.dataset)?;

    let kind = match cfg.mode {
        ModeName::Online => ModeKind::Online,
        ModeName::FfOutput => ModeKind::FfOutput,
        ModeName::FfState => ModeKind::FfState,
        ModeName::RnnUnfold => ModeKind::RnnUnfold,
        ModeName::RnnHlBptt => ModeKind::RnnHlBptt,
        ModeName::RnnTruncated => ModeKind::RnnTruncated { window: cfg.window.unwrap_or(1) },
    };
    let mut mode = RecoveryMode::new(kind);
    if let Some(reset) = cfg.omega_reset {
        mode = mode.with_omega_reset(reset);
    }

    let (spec, stream, sequences, loss, epoch_len) = match data {
        Data::Table(table) => {
            let spec = table_spec(&cfg.model, cfg.mode, table.input_dim(), table.classes)?;
            let stream = from_dataset_epochs(&table.samples(), shuffle_seed, tau, cfg.epochs)?;
            (spec, stream, Vec::new(), cfg.loss.unwrap_or(LossKind::SoftmaxCrossEntropy), table.len())
        }
        Data::Sequences(seqs) => {
            let tok = seqs[0].tokens[0].len();
            let target_dim = seqs
                .iter()
                .flat_map(|s| s.targets.iter().flatten())
                .map(Tensor::len)
                .next()
                .ok_or_else(|| HarnessError::Data("sequences carry no targets".into()))?;
            let activation = match &cfg.model {
                ModelConfig::Rnn { activation } => *activation,
                _ => return Err(model_error("sequence modes need model kind = \"rnn\"")),
            };
            let cell = RecurrentCell { inputs: tok, hidden: target_dim, activation };
            let loss = cfg.loss.unwrap_or(LossKind::Mse);
            let ordered = shuffled_epochs(&seqs, cfg.epochs, shuffle_seed);
            if cfg.mode == ModeName::RnnUnfold {
                let len = seqs[0].len();
                if seqs.iter().any(|s| s.len() != len || s.targets[len - 1].is_none()) {
                    return Err(HarnessError::Data(
                        "unfolding needs equal-length sequences with a final target".into(),
                    ));
                }
                let spec =
                    NetSpec::new(tok * len, StateNet::Empty, OutputNet::Unrolled { cell, steps: len, head: vec![] })?;
                let items = ordered
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        let parts: Vec<&Tensor> = s.tokens.iter().collect();
                        Ok(StreamItem {
                            u: Tensor::concat(&parts)?,
                            y_hat: s.targets[len - 1].clone(),
                            delta: true,
                            timestamp: k as f64 * tau,
                        })
                    })
                    .collect::<Result<Vec<_>, hamlearn::Error>>()?;
                (spec, Stream::custom(items)?, Vec::new(), loss, seqs.len())
            } else {
                let spec = NetSpec::new(tok, StateNet::Recurrent { cell }, OutputNet::Identity)?
                    .with_residual(ResidualMode::Instantaneous);
                let stream = tokenize_sequences(&ordered, tau)?;
                if let ModeKind::RnnTruncated { window } = kind {
                    if ordered.iter().any(|s| window > s.len()) {
                        return Err(bad("window exceeds a sequence length".into()));
                    }
                }
                let n = seqs.iter().map(Sequence::len).sum();
                (spec, stream, ordered, loss, n)
            }
        }
    };
    mode.check_spec(&spec)?;

    let init = spec.init_state(cfg.seed, InitialState::Zeros);
    let mapped = map_params(&sgd, tau)?;
    let mut hl = mapped.hl_config(spec.theta_len())?;
    match kind {
        ModeKind::RnnHlBptt | ModeKind::RnnTruncated { .. } => {
            // Replay reproduces BPTT when τφ = 1 and η = 0.
            hl.eta = 0.0;
            hl.phi = Phi::Reciprocal;
        }
        ModeKind::Online => hl.ordering = cfg.ordering.unwrap_or_default(),
        _ => {}
    }
    Ok(Prepared { spec, stream, sequences, init, loss, mode, hl, sgd, epoch_len })
}

/// `φ = 1/τ` on the first item, then the mapped constant.
fn first_step_reciprocal(hl: &HlConfig) -> HlConfig {
    let after = hl.phi.at(0.0, hl.tau);
    let mut out = hl.clone();
    out.phi = Phi::Step { before: 1.0 / hl.tau, after, switch: 0.5 * hl.tau };
    out
}

/// Plain tape backprop of the loss with respect to the flat `θ`.
fn ff_gradient(
    spec: &NetSpec,
    theta: &Tensor,
    item: &StreamItem,
    loss: LossKind,
) -> Result<(Tensor, Tensor, Option<f64>), HarnessError> {
    let mut state = spec.state_with(Tensor::zeros(&[spec.theta_h_len()]), Tensor::zeros(&[spec.theta_y_len()]))?;
    state.set_theta(theta)?;
    let mut tape = Tape::new();
    let rec = spec.record(&mut tape, &item.u, &state, 1.0)?;
    let out = match spec.output {
        OutputNet::Identity => rec.next.ok_or_else(|| model_error("identity output needs the instantaneous form"))?,
        _ => rec.y,
    };
    let y = tape.value(out).clone();
    match &item.y_hat {
        Some(target) => {
            let t = tape.constant(target.clone())?;
            let l = loss.record(&mut tape, out, t)?;
            let value = tape.value(l).item()?;
            let grads = tape.vjp(l, &Tensor::scalar(1.0))?;
            let g = Tensor::concat(&[&rec.theta_h.gather(&grads), &rec.theta_y.gather(&grads)])?;
            Ok((g, y, Some(value)))
        }
        None => Ok((Tensor::zeros_like(theta), y, None)),
    }
}

fn oracle_rows_ff(p: &Prepared, sgd: &SgdConfig) -> Result<Vec<RunRow>, HarnessError> {
    let mut theta = p.init.theta();
    let mut buffer: Option<Tensor> = None;
    let mut rows = Vec::with_capacity(p.stream.len());
    for (k, item) in p.stream.iter().enumerate() {
        let (g, y, loss) = ff_gradient(&p.spec, &theta, item, p.loss)?;
        if loss.is_some() {
            let (t, b) = sgd_momentum_step(&theta, &g, buffer.as_ref(), sgd)?;
            theta = t;
            buffer = Some(b);
        }
        rows.push(RunRow {
            step: k,
            time: item.timestamp,
            loss,
            y: Some(y),
            target: item.y_hat.clone(),
            theta: theta.clone(),
        });
    }
    Ok(rows)
}

/// One SGD step per sequence on the (possibly truncated) BPTT gradient, laid
/// out on the same rows as the replay stream.
fn oracle_rows_bptt(p: &Prepared, window: Option<usize>) -> Result<Vec<RunRow>, HarnessError> {
    let theta_y = p.init.theta_y.clone();
    let mut theta_h = p.init.theta_h.clone();
    let h0 = Tensor::zeros(&[p.spec.state_dim()]);
    let mut rows = Vec::new();
    for seq in &p.sequences {
        let n = seq.len();
        let r = window.unwrap_or(n);
        let res = match window {
            Some(r) => truncated_bptt_gradients(seq, &h0, &theta_h, &p.spec, p.loss, r)?,
            None => bptt_gradients(seq, &h0, &theta_h, &p.spec, p.loss)?,
        };
        let full = hamlearn::oracles::rnn_forward(seq, &h0, &theta_h, &p.spec)?;
        let before = Tensor::concat(&[&theta_h, &theta_y])?;
        for k in 0..n {
            let loss = match &seq.targets[k] {
                Some(t) => Some(p.loss.value(&full[k + 1], t)?),
                None => None,
            };
            rows.push(RunRow {
                step: 0,
                time: 0.0,
                loss,
                y: Some(full[k + 1].clone()),
                target: seq.targets[k].clone(),
                theta: before.clone(),
            });
        }
        for _ in 0..r - 1 {
            rows.push(RunRow { step: 0, time: 0.0, loss: None, y: None, target: None, theta: before.clone() });
        }
        theta_h = theta_h.axpy(-p.sgd.gamma, &res.grad)?;
        rows.last_mut().expect("non-empty sequence").theta = Tensor::concat(&[&theta_h, &theta_y])?;
    }
    for (k, row) in rows.iter_mut().enumerate() {
        row.step = k;
        row.time = k as f64 * p.hl.tau;
    }
    Ok(rows)
}

fn to_log(rows: &[RunRow], other: &[RunRow], epoch_len: usize, classification: bool) -> Vec<LogRow> {
    let mut seen = 0usize;
    let mut correct = 0usize;
    rows.iter()
        .zip(other)
        .enumerate()
        .map(|(k, (a, b))| {
            if epoch_len > 0 && k % epoch_len == 0 {
                seen = 0;
                correct = 0;
            }
            let accuracy = a.correct().filter(|_| classification).map(|c| {
                seen += 1;
                correct += c as usize;
                correct as f64 / seen as f64
            });
            let s = DiffStats::between(&a.theta, &b.theta);
            LogRow {
                step: a.step,
                time: a.time,
                loss: a.loss,
                accuracy,
                max_abs_dtheta: s.max,
                mean_abs_dtheta: s.mean,
            }
        })
        .collect()
}

fn trajectory_gaps(a: &[RunRow], b: &[RunRow]) -> (f64, f64) {
    a.iter().zip(b).fold((0.0_f64, 0.0_f64), |(mx, mn), (x, y)| {
        let s = DiffStats::between(&x.theta, &y.theta);
        (mx.max(s.max), mn.max(s.mean))
    })
}

fn loss_gap(a: &[RunRow], b: &[RunRow]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x.loss, y.loss) {
            (Some(p), Some(q)) => (p - q).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Runs the Hamiltonian learner and its oracle side by side.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let p = prepare(cfg)?;
    let replay_window = match p.mode.kind {
        ModeKind::RnnHlBptt => Some(None),
        ModeKind::RnnTruncated { window } => Some(Some(window)),
        _ => None,
    };

    let aligned_hl = match (replay_window, p.sgd.buffer_init) {
        (None, BufferInit::FirstGradient) => first_step_reciprocal(&p.hl),
        _ => p.hl.clone(),
    };
    let hl = run_mode(&p.mode, &p.stream, &p.spec, &p.init, &aligned_hl, p.loss)?;
    let oracle = match replay_window {
        Some(w) => oracle_rows_bptt(&p, w)?,
        None => oracle_rows_ff(&p, &p.sgd)?,
    };

    let mut conventions = Vec::new();
    let momentum = p.sgd.rho != 0.0 || p.sgd.mu != 0.0;
    if replay_window.is_none() && momentum {
        let plain = if aligned_hl == p.hl {
            hl.rows.clone()
        } else {
            run_mode(&p.mode, &p.stream, &p.spec, &p.init, &p.hl, p.loss)?.rows
        };
        let first = if aligned_hl != p.hl {
            hl.rows.clone()
        } else {
            run_mode(&p.mode, &p.stream, &p.spec, &p.init, &first_step_reciprocal(&p.hl), p.loss)?.rows
        };
        let zero_oracle = oracle_rows_ff(&p, &p.sgd.with_buffer_init(BufferInit::Zero))?;
        let first_oracle = oracle_rows_ff(&p, &p.sgd.with_buffer_init(BufferInit::FirstGradient))?;
        for (rows, oracle_rows, buf, recip) in [
            (&plain, &zero_oracle, BufferInit::Zero, false),
            (&first, &first_oracle, BufferInit::FirstGradient, true),
            (&plain, &first_oracle, BufferInit::FirstGradient, false),
        ] {
            let (mx, mn) = trajectory_gaps(rows, oracle_rows);
            let final_weights = match (rows.last(), oracle_rows.last()) {
                (Some(a), Some(b)) => DiffStats::between(&a.theta, &b.theta),
                _ => DiffStats::between(&p.init.theta(), &p.init.theta()),
            };
            conventions.push(ConventionReport {
                oracle_buffer: buf,
                first_step_reciprocal_phi: recip,
                final_weights,
                max_abs_dtheta: mx,
                max_mean_abs_dtheta: mn,
            });
        }
    }

    let final_weights =
        DiffStats::between(&hl.state.theta(), &oracle.last().map_or(p.init.theta(), |r| r.theta.clone()));
    let (max_abs, max_mean) = trajectory_gaps(&hl.rows, &oracle);
    let gap = loss_gap(&hl.rows, &oracle);
    let classification = p.loss == LossKind::SoftmaxCrossEntropy;
    let hl_log = to_log(&hl.rows, &oracle, p.epoch_len, classification);
    let oracle_log = to_log(&oracle, &hl.rows, p.epoch_len, classification);
    let weight_metric = match cfg.tolerance.metric {
        Metric::Max => max_abs,
        Metric::Mean => max_mean,
    };
    let pass = weight_metric <= cfg.tolerance.value && gap <= cfg.tolerance.value;
    let summary = Summary {
        name: cfg.name.clone(),
        scenario: cfg.scenario.name().into(),
        mode: cfg.mode,
        steps: hl.rows.len(),
        parameters: p.spec.theta_len(),
        final_weights,
        max_abs_dtheta: max_abs,
        max_mean_abs_dtheta: max_mean,
        max_loss_gap: gap,
        final_loss: hl_log.iter().rev().find_map(|r| r.loss),
        final_accuracy: hl_log.iter().rev().find_map(|r| r.accuracy),
        tolerance: cfg.tolerance.value,
        metric: cfg.tolerance.metric,
        conventions,
        pass,
    };
    Ok(ExperimentResult { hl: hl_log, oracle: oracle_log, summary })
}

pub const CSV_HEADER: [&str; 6] = ["step", "time", "loss", "accuracy", "max_abs_dtheta", "mean_abs_dtheta"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_log(rows: &[LogRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| HarnessError::io(path, e))?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.time.to_string(),
            opt(r.loss),
            opt(r.accuracy),
            r.max_abs_dtheta.to_string(),
            r.mean_abs_dtheta.to_string(),
        ])
        .map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    let header = reader.headers().map_err(|e| HarnessError::io(path, e))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Data(format!("{}: unexpected header", path.display())));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| HarnessError::Data(format!("{}:{}: {e}", path.display(), i + 2))))
        .collect()
}

/// Paths written by [`write_outputs`].
pub struct OutputPaths {
    pub hl: PathBuf,
    pub oracle: PathBuf,
    pub summary: PathBuf,
}

/// Writes `hl.csv`, `oracle.csv` and `summary.json` under `dir/name/`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<OutputPaths, HarnessError> {
    let run_dir = dir.join(&result.summary.name);
    fs::create_dir_all(&run_dir).map_err(|e| HarnessError::io(&run_dir, e))?;
    let paths = OutputPaths {
        hl: run_dir.join("hl.csv"),
        oracle: run_dir.join("oracle.csv"),
        summary: run_dir.join("summary.json"),
    };
    write_log(&result.hl, &paths.hl)?;
    write_log(&result.oracle, &paths.oracle)?;
    let json = serde_json::to_string_pretty(&result.summary).map_err(|e| HarnessError::Data(e.to_string()))?;
    fs::write(&paths.summary, json + "\n").map_err(|e| HarnessError::io(&paths.summary, e))?;
    Ok(paths)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub rows: usize,
    pub max_gap: f64,
    /// Index of the first row whose loss gap exceeds the tolerance.
    pub first_offending: Option<usize>,
    pub pass: bool,
}

/// Row-by-row loss gap between two logs.
pub fn compare_curves(a: &Path, b: &Path, tol: f64) -> Result<CompareReport, HarnessError> {
    let ra = read_log(a)?;
    let rb = read_log(b)?;
    compare_rows(&ra, &rb, tol)
}

pub fn compare_rows(ra: &[LogRow], rb: &[LogRow], tol: f64) -> Result<CompareReport, HarnessError> {
    if ra.len() != rb.len() {
        return Err(HarnessError::Compare(format!("row counts differ: {} vs {}", ra.len(), rb.len())));
    }
    let mut max_gap: f64 = 0.0;
    let mut first_offending = None;
    for (i, (x, y)) in ra.iter().zip(rb).enumerate() {
        let gap = match (x.loss, y.loss) {
            (Some(p), Some(q)) => (p - q).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        let gap = if gap.is_nan() { f64::INFINITY } else { gap };
        max_gap = max_gap.max(gap);
        if gap > tol && first_offending.is_none() {
            first_offending = Some(i);
        }
    }
    Ok(CompareReport { rows: ra.len(), max_gap, first_offending, pass: first_offending.is_none() })
}
