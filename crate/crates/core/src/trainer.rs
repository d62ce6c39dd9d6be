//! Corpus ingestion and the training loop.
//!
//! Each epoch reshuffles the windowed samples with the run's generator, then
//! for every batch runs forward (train mode), MSE, backward, optional global
//! norm clipping and one RMSprop step. A metrics row is produced per batch
//! plus one per epoch, and the checkpoint is rewritten after every epoch so a
//! failed run leaves the last good state on disk.

use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::error::{Error, Result};
use crate::midi::{merge_tracks, parse_midi};
use crate::model::{model_backward, model_forward, Mode, ModelConfig, ModelParams, PARAM_NAMES};
use crate::note_matrix::{events_to_matrix, fit_scaling, make_batches, make_samples, scale, NoteMatrix, Sample, ScalingParams, ROW_WIDTH};
use crate::numerics::{Rng, Tensor};
use crate::optim::{accuracy, clip_global_norm, mse, RmspropConfig, RmspropState};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub corpus_dir: PathBuf,
    pub window: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    pub lr: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Total epochs; a resumed run continues up to this count.
    pub epochs: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    pub checkpoint_path: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    pub histogram_path: Option<PathBuf>,
    /// Fill `wall_seconds` from the clock. Off by default so that equal
    /// seeds give byte-identical metrics files.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            corpus_dir: PathBuf::from("."),
            window: 50,
            hidden: 512,
            dropout_rate: 0.75,
            lr: 1e-4,
            rho: 0.9,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            clip_norm: Some(5.0),
            checkpoint_path: None,
            metrics_path: None,
            histogram_path: None,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_dim: ROW_WIDTH,
            hidden: self.hidden,
            output_dim: ROW_WIDTH,
            window: self.window,
            dropout_rate: self.dropout_rate,
        }
    }

    pub fn optimizer_config(&self) -> RmspropConfig {
        RmspropConfig {
            lr: self.lr,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.rho) || self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad(format!("rho {} / epsilon {} out of range", self.rho, self.epsilon));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("clip norm {c} must be positive"));
            }
        }
        Ok(())
    }
}

/// One metrics row. `batch` is `None` for the epoch summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub batch: Option<usize>,
    pub loss: f64,
    pub accuracy: f64,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: [&str; 6] = ["scope", "epoch", "batch", "loss", "accuracy", "wall_seconds"];
pub const HISTOGRAM_HEADER: [&str; 6] = ["epoch", "tensor", "min", "max", "mean", "std"];

impl TrainRecord {
    fn csv_fields(&self) -> [String; 6] {
        [
            if self.batch.is_some() { "batch" } else { "epoch" }.to_string(),
            self.epoch.to_string(),
            self.batch.map(|b| b.to_string()).unwrap_or_default(),
            self.loss.to_string(),
            self.accuracy.to_string(),
            self.wall_seconds.to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    /// Retained files, in the order their matrices appear.
    pub files: Vec<PathBuf>,
    pub matrices: Vec<NoteMatrix>,
    pub scaling: ScalingParams,
    /// Division of the first retained file.
    pub division: u16,
    /// Files that failed to parse, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

fn is_midi(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

/// Reads every `.mid`/`.midi` file in `dir` (sorted by name) into a note
/// matrix. Files that fail to parse are logged and skipped.
pub fn ingest_corpus(dir: &Path) -> Result<Corpus> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_midi(p))
        .collect();
    paths.sort();

    let mut corpus = Corpus {
        files: Vec::new(),
        matrices: Vec::new(),
        scaling: ScalingParams::new(1),
        division: 0,
        skipped: Vec::new(),
    };
    for path in paths {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        match parse_midi(&bytes) {
            Ok(file) => {
                let (events, _) = merge_tracks(&file);
                corpus.matrices.push(events_to_matrix(&events, file.division));
                corpus.files.push(path);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                corpus.skipped.push((path, e.to_string()));
            }
        }
    }
    corpus.scaling = fit_scaling(&corpus.matrices)?;
    corpus.division = corpus.matrices[0].division;
    Ok(corpus)
}

/// Windowed samples of every matrix, file by file.
pub fn corpus_samples(matrices: &[NoteMatrix], scaling: &ScalingParams, window: usize) -> Vec<Sample> {
    matrices
        .iter()
        .flat_map(|m| make_samples(&scale(m, scaling), window))
        .collect()
}

pub struct Trainer {
    config: TrainConfig,
    samples: Vec<Sample>,
    scaling: ScalingParams,
    division: u16,
    params: ModelParams,
    optimizer: RmspropState,
    rng: Rng,
    epoch: usize,
    started: Instant,
}

impl Trainer {
    /// Ingests the corpus, initialises the model from `config.seed` and
    /// truncates the metrics files.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let corpus = ingest_corpus(&config.corpus_dir)?;
        let mut rng = Rng::new(config.seed);
        let params = ModelParams::init(&config.model_config(), &mut rng)?;
        let optimizer = RmspropState::new(config.optimizer_config(), &params);
        let trainer = Self::assemble(config, &corpus.matrices, corpus.scaling, corpus.division, params, optimizer, rng, 0)?;
        trainer.create_outputs()?;
        Ok(trainer)
    }

    /// Continues from a checkpoint. The corpus is re-read but scaled with the
    /// checkpoint's parameters; metrics are appended.
    pub fn resume(config: TrainConfig, checkpoint: Checkpoint) -> Result<Self> {
        config.validate()?;
        let want = config.model_config();
        let have = checkpoint.params.config();
        if want != have {
            return Err(Error::InvalidConfig(format!(
                "checkpoint model {have:?} does not match configuration {want:?}"
            )));
        }
        let corpus = ingest_corpus(&config.corpus_dir)?;
        let mut optimizer = checkpoint.optimizer;
        optimizer.config = config.optimizer_config();
        let trainer = Self::assemble(
            config,
            &corpus.matrices,
            checkpoint.scaling,
            checkpoint.division,
            checkpoint.params,
            optimizer,
            Rng::from_state(checkpoint.rng_state),
            checkpoint.epoch as usize,
        )?;
        for (path, header) in [
            (&trainer.config.metrics_path, &METRICS_HEADER),
            (&trainer.config.histogram_path, &HISTOGRAM_HEADER),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    write_header(path, header)?;
                }
            }
        }
        Ok(trainer)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: TrainConfig,
        matrices: &[NoteMatrix],
        scaling: ScalingParams,
        division: u16,
        params: ModelParams,
        optimizer: RmspropState,
        rng: Rng,
        epoch: usize,
    ) -> Result<Self> {
        let samples = corpus_samples(matrices, &scaling, config.window);
        if samples.is_empty() {
            return Err(Error::NoSamples { window: config.window });
        }
        Ok(Trainer {
            config,
            samples,
            scaling,
            division,
            params,
            optimizer,
            rng,
            epoch,
            started: Instant::now(),
        })
    }

    fn create_outputs(&self) -> Result<()> {
        if let Some(path) = &self.config.metrics_path {
            write_header(path, &METRICS_HEADER)?;
        }
        if let Some(path) = &self.config.histogram_path {
            write_header(path, &HISTOGRAM_HEADER)?;
        }
        Ok(())
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn scaling(&self) -> ScalingParams {
        self.scaling
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            scaling: self.scaling,
            division: self.division,
            rng_state: self.rng.state(),
            epoch: self.epoch as u64,
        }
    }

    fn elapsed(&self) -> f64 {
        if self.config.record_wall_time {
            self.started.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    /// Trains one epoch and returns its batch records followed by the epoch
    /// record. Nothing is written or updated for an epoch that fails.
    pub fn run_epoch(&mut self) -> Result<Vec<TrainRecord>> {
        let epoch = self.epoch;
        let mut params = self.params.clone();
        let mut optimizer = self.optimizer.clone();
        let mut rng = self.rng.clone();

        let batches = make_batches(&self.samples, self.config.batch_size, &mut rng);
        let mut records = Vec::with_capacity(batches.len() + 1);
        for (index, batch) in batches.iter().enumerate() {
            let (predictions, cache) = model_forward(&params, &batch.inputs, Mode::Train, &mut rng)?;
            let loss = mse(&predictions, &batch.targets)?;
            if !loss.mse.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: index });
            }
            let acc = accuracy(&predictions, &batch.targets, &self.scaling)?;
            let mut grads = model_backward(&params, &cache, &loss.grad)?;
            if let Some(max_norm) = self.config.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            optimizer.step(&mut params, &grads)?;
            records.push(TrainRecord {
                epoch,
                batch: Some(index),
                loss: loss.mse,
                accuracy: acc,
                wall_seconds: self.elapsed(),
            });
        }
        let n = records.len() as f64;
        records.push(TrainRecord {
            epoch,
            batch: None,
            loss: records.iter().map(|r| r.loss).sum::<f64>() / n,
            accuracy: records.iter().map(|r| r.accuracy).sum::<f64>() / n,
            wall_seconds: self.elapsed(),
        });

        self.params = params;
        self.optimizer = optimizer;
        self.rng = rng;
        self.epoch += 1;
        self.write_outputs(&records)?;
        Ok(records)
    }

    /// Runs the remaining epochs, returning every record produced.
    pub fn run(&mut self) -> Result<Vec<TrainRecord>> {
        let mut all = Vec::new();
        while !self.is_finished() {
            let records = self.run_epoch()?;
            if let Some(last) = records.last() {
                log::info!("epoch {}: loss {:.6} accuracy {:.4}", last.epoch, last.loss, last.accuracy);
            }
            all.extend(records);
        }
        Ok(all)
    }

    fn write_outputs(&self, records: &[TrainRecord]) -> Result<()> {
        if let Some(path) = &self.config.metrics_path {
            append_rows(path, records.iter().map(TrainRecord::csv_fields))?;
        }
        if let Some(path) = &self.config.histogram_path {
            let epoch = self.epoch - 1;
            let rows = PARAM_NAMES
                .iter()
                .zip(self.params.tensors())
                .map(|(name, t)| {
                    let s = TensorSummary::of(t);
                    [
                        epoch.to_string(),
                        name.to_string(),
                        s.min.to_string(),
                        s.max.to_string(),
                        s.mean.to_string(),
                        s.std.to_string(),
                    ]
                });
            append_rows(path, rows)?;
        }
        if let Some(path) = &self.config.checkpoint_path {
            save_checkpoint(path, &self.checkpoint())?;
        }
        Ok(())
    }
}

/// Distribution summary of one parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl TensorSummary {
    pub fn of(t: &Tensor) -> Self {
        let n = t.len().max(1) as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        TensorSummary {
            min: t.data().iter().copied().fold(f64::INFINITY, f64::min),
            max: t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: var.sqrt(),
        }
    }
}

fn write_header(path: &Path, header: &[&str]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn append_rows<I, R>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let file = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.write_record(row)?;
    }
    let mut file = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    file.flush().map_err(|e| Error::io(path, e))
}

/// Trains from scratch for `config.epochs` epochs.
pub fn train(config: TrainConfig) -> Result<(ModelParams, Vec<TrainRecord>)> {
    let mut trainer = Trainer::new(config)?;
    let records = trainer.run()?;
    Ok((trainer.into_params(), records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::write_midi;
    use crate::note_matrix::{matrix_to_midi, NoteRow};

    fn write_song(dir: &Path, name: &str, notes: usize) {
        let rows: Vec<NoteRow> = (0..notes)
            .map(|i| NoteRow::new(60 + (i % 7) as u8, 90, if i == 0 { 0 } else { 24 * (1 + i as u32 % 2) }))
            .collect();
        let m = NoteMatrix { rows, division: 96 };
        fs::write(dir.join(name), write_midi(&matrix_to_midi(&m, 24).unwrap()).unwrap()).unwrap();
    }

    fn tiny_config(dir: &Path) -> TrainConfig {
        TrainConfig {
            corpus_dir: dir.to_path_buf(),
            window: 4,
            hidden: 6,
            batch_size: 5,
            epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn ingest_skips_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        write_song(dir.path(), "a.mid", 12);
        fs::write(dir.path().join("b.mid"), b"MThd garbage").unwrap();
        fs::write(dir.path().join("notes.txt"), b"not midi").unwrap();
        let corpus = ingest_corpus(dir.path()).unwrap();
        assert_eq!(corpus.matrices.len(), 1);
        assert_eq!(corpus.skipped.len(), 1);
        assert_eq!(corpus.scaling.dt_max_ticks, 48);
        assert_eq!(corpus.division, 96);
    }

    #[test]
    fn ingest_counts_and_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(ingest_corpus(dir.path()), Err(Error::EmptyCorpus)));
        for i in 0..4 {
            write_song(dir.path(), &format!("{i}.MID"), 10 + i);
        }
        assert_eq!(ingest_corpus(dir.path()).unwrap().matrices.len(), 4);
    }

    #[test]
    fn too_short_corpus_has_no_samples() {
        let dir = tempfile::tempdir().unwrap();
        write_song(dir.path(), "a.mid", 4);
        let err = Trainer::new(tiny_config(dir.path())).err().unwrap();
        assert!(matches!(err, Error::NoSamples { window: 4 }));
    }

    #[test]
    fn epoch_record_is_mean_of_batches() {
        let dir = tempfile::tempdir().unwrap();
        write_song(dir.path(), "a.mid", 20);
        write_song(dir.path(), "b.mid", 17);
        let (_, records) = train(tiny_config(dir.path())).unwrap();
        // (20 - 4) + (17 - 4) = 29 samples → 6 batches + 1 summary per epoch.
        assert_eq!(records.len(), 3 * 7);
        for epoch in records.chunks(7) {
            let batches = &epoch[..6];
            let summary = epoch[6];
            assert!(summary.batch.is_none());
            let mean = batches.iter().map(|r| r.loss).sum::<f64>() / 6.0;
            assert_eq!(summary.loss, mean);
            assert!(batches.iter().enumerate().all(|(i, r)| r.batch == Some(i)));
            assert!(epoch.iter().all(|r| r.loss >= 0.0 && (0.0..=1.0).contains(&r.accuracy)));
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let base = tiny_config(dir.path());
        for cfg in [
            TrainConfig { lr: 0.0, ..base.clone() },
            TrainConfig { batch_size: 0, ..base.clone() },
            TrainConfig { dropout_rate: 1.0, ..base.clone() },
            TrainConfig { clip_norm: Some(-1.0), ..base.clone() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn non_finite_loss_aborts_and_keeps_last_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        write_song(dir.path(), "a.mid", 20);
        let ckpt = dir.path().join("m.ckpt");
        let mut trainer = Trainer::new(TrainConfig {
            checkpoint_path: Some(ckpt.clone()),
            ..tiny_config(dir.path())
        })
        .unwrap();
        trainer.run_epoch().unwrap();
        let good = fs::read(&ckpt).unwrap();
        trainer.params.dense.bias.data_mut()[0] = f64::NAN;
        assert!(matches!(trainer.run_epoch(), Err(Error::NonFiniteLoss { epoch: 1, batch: 0 })));
        assert_eq!(fs::read(&ckpt).unwrap(), good);
        assert_eq!(trainer.epoch(), 1);
    }

    #[test]
    fn summaries() {
        let t = Tensor::new(&[4], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let s = TensorSummary::of(&t);
        assert_eq!((s.min, s.max, s.mean), (1.0, 6.0, 3.0));
        assert!((s.std - 3.5f64.sqrt()).abs() < 1e-15);
    }
}
