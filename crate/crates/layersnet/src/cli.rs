//! Command implementations behind the `layersim` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use layersnet_core::geometry::Vec3;
use layersnet_core::metrics::{evaluate_sequence, score_frames, EvalReport};
use layersnet_core::model::{rollout, ModelParams};
use layersnet_core::oracle::generate_sequence;
use layersnet_core::sequence::Sequence;
use layersnet_core::train::{StepLog, Trainer, TrainingSequence};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::threads::{par_map, thread_count};
use crate::{checkpoint, lseq, obj, verify};

#[derive(Debug, Parser)]
#[command(name = "layersim", version, about = "Layered garment simulation: oracle data, training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate oracle sequences as LSEQ files.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model on a directory of LSEQ files and write an LNPK checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV training log; defaults to the checkpoint path with `.csv` appended.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Predict a sequence from its first frames and write the result as LSEQ.
    Rollout {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Frames to predict; defaults to the rest of the sequence.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Roll out every sequence of a directory and write a CSV report.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write one frame of a sequence as a Wavefront OBJ.
    ExportObj {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check analytic gradients of the one-step loss per parameter block.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the property suite; exits nonzero when any check fails.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Smaller trial counts.
        #[arg(long)]
        quick: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, Sequence)>> {
    let paths = lseq::list_dir(dir)?;
    if paths.is_empty() {
        return Err(Error::Usage(format!("no .lseq files in {}", dir.display())));
    }
    let loaded = par_map(&paths, thread_count(), |_, p| lseq::read(p));
    paths.into_iter().zip(loaded).map(|(p, s)| Ok((p, s?))).collect()
}

pub fn gen_data(config: &RunConfig, out: &Path, count: usize, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let seeds: Vec<u64> = (0..count as u64).map(|i| seed.wrapping_add(i)).collect();
    let written = par_map(&seeds, thread_count(), |i, &s| -> Result<PathBuf> {
        let mut scene = config.scene.clone();
        scene.seed = s;
        let seq = generate_sequence(&scene)?;
        let path = out.join(format!("seq_{i:04}.lseq"));
        lseq::write(&path, &seq)?;
        Ok(path)
    });
    written.into_iter().collect()
}

#[derive(Serialize)]
struct LogRow {
    step: usize,
    epoch: usize,
    sequence: usize,
    frame: usize,
    noise_steps: usize,
    mse: f64,
    normal: f64,
    body_collision: f64,
    garment_collision: f64,
    total: f64,
    wall_s: f64,
}

pub fn train(config: &RunConfig, sequences: &[Sequence], seed: u64, log_path: &Path) -> Result<ModelParams> {
    let mut model_cfg = config.model.clone();
    model_cfg.seed = seed;
    let mut train_cfg = config.train.clone();
    train_cfg.seed = seed;
    let params = ModelParams::init(&model_cfg)?;
    let mut trainer = Trainer::new(params, train_cfg);
    let data = sequences
        .iter()
        .map(|s| TrainingSequence::new(s, &trainer.params, &config.train.loss))
        .collect::<layersnet_core::Result<Vec<_>>>()?;
    let mut writer = csv::Writer::from_path(log_path)?;
    let started = Instant::now();
    let mut write_err = None;
    trainer.train(&data, |e: &StepLog| {
        let row = LogRow {
            step: e.step,
            epoch: e.epoch,
            sequence: e.sequence,
            frame: e.frame,
            noise_steps: e.noise_steps,
            mse: e.loss.mse,
            normal: e.loss.normal,
            body_collision: e.loss.body_collision,
            garment_collision: e.loss.garment_collision,
            total: e.loss.total,
            wall_s: started.elapsed().as_secs_f64(),
        };
        if write_err.is_none() {
            write_err = writer.serialize(row).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    writer.flush()?;
    Ok(trainer.params)
}

/// Copy of `seq` holding the predicted garments from `start + 1` on,
/// cut where the prediction ends.
pub fn rollout_sequence(params: &ModelParams, seq: &Sequence, start: usize, steps: usize) -> Result<(Sequence, Option<usize>)> {
    let r = rollout(params, seq, start, steps)?;
    let mut out = seq.clone();
    out.frames.truncate(start + 1 + r.frames.len());
    let counts = seq.vertex_counts();
    for (k, pred) in r.frames.iter().enumerate() {
        let mut rest: &[Vec3] = pred;
        let frame = &mut out.frames[start + 1 + k];
        for (layer, &n) in counts.iter().enumerate() {
            frame.garments[layer] = rest[..n].to_vec();
            rest = &rest[n..];
        }
    }
    Ok((out, r.diverged_at))
}

#[derive(Serialize)]
struct ReportRow {
    sequence_id: usize,
    euclid_err_m: f64,
    coll_body_pct: f64,
    coll_garment_pct: f64,
}

pub fn evaluate(params: &ModelParams, sequences: &[Sequence], rollout_steps: Option<usize>) -> Result<Vec<EvalReport>> {
    let reports = par_map(sequences, thread_count(), |i, seq| -> Result<EvalReport> {
        match rollout_steps {
            None => Ok(evaluate_sequence(params, seq, i)?),
            Some(steps) => {
                let start = params.config.history.min(seq.len().saturating_sub(1));
                let r = rollout(params, seq, start, steps)?;
                let mut rep = score_frames(seq, start, &r.frames, i);
                rep.diverged_at = r.diverged_at;
                Ok(rep)
            }
        }
    });
    reports.into_iter().collect()
}

pub fn write_report(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(ReportRow {
            sequence_id: r.sequence_id,
            euclid_err_m: r.euclid_err_m,
            coll_body_pct: r.coll_body_pct,
            coll_garment_pct: r.coll_garment_pct,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn mean_line(label: &str, reports: &[&EvalReport]) -> String {
    if reports.is_empty() {
        return format!("{label}: no sequences");
    }
    let n = reports.len() as f64;
    let m = |f: fn(&EvalReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
    format!(
        "{label}: n={} euclid_err_m={:.6} coll_body_pct={:.3} coll_garment_pct={:.3}",
        reports.len(),
        m(|r| r.euclid_err_m),
        m(|r| r.coll_body_pct),
        m(|r| r.coll_garment_pct)
    )
}

fn divergence(frame: usize) -> Error {
    Error::Core(layersnet_core::Error::Divergence { frame, magnitude: f64::INFINITY })
}

fn print_checks(checks: &[verify::Check]) -> bool {
    let mut ok = true;
    for c in checks {
        let tag = if c.passed() { "PASS" } else { "FAIL" };
        println!("{tag} {} value={:.3e} tol={:.0e}", c.name, c.value, c.tolerance);
        ok &= c.passed();
    }
    ok
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out, count, seed } => {
            let cfg = load_config(config.as_deref())?;
            for p in gen_data(&cfg, &out, count, seed)? {
                println!("{}", p.display());
            }
        }
        Command::Train { data, config, out, seed, log } => {
            let cfg = load_config(config.as_deref())?;
            let seqs: Vec<Sequence> = load_dir(&data)?.into_iter().map(|(_, s)| s).collect();
            let log = log.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".csv");
                p.into()
            });
            let params = train(&cfg, &seqs, seed, &log)?;
            checkpoint::write(&out, &params)?;
        }
        Command::Rollout { ckpt, seq, out, steps } => {
            let params = checkpoint::read(&ckpt)?;
            let seq = lseq::read(&seq)?;
            let start = params.config.history.min(seq.len().saturating_sub(1));
            let (pred, diverged) = rollout_sequence(&params, &seq, start, steps.unwrap_or(seq.len()))?;
            lseq::write(&out, &pred)?;
            if let Some(f) = diverged {
                return Err(divergence(f));
            }
        }
        Command::Eval { ckpt, data, report, config } => {
            let cfg = load_config(config.as_deref())?;
            let params = checkpoint::read(&ckpt)?;
            let loaded = load_dir(&data)?;
            let seqs: Vec<Sequence> = loaded.iter().map(|(_, s)| s.clone()).collect();
            let reports = evaluate(&params, &seqs, cfg.eval.rollout_steps)?;
            write_report(&report, &reports)?;
            let windy: Vec<&EvalReport> = reports.iter().filter(|r| seqs[r.sequence_id].is_windy(cfg.eval.windy_threshold)).collect();
            let calm: Vec<&EvalReport> = reports.iter().filter(|r| !seqs[r.sequence_id].is_windy(cfg.eval.windy_threshold)).collect();
            println!("{}", mean_line("all", &reports.iter().collect::<Vec<_>>()));
            println!("{}", mean_line("windy", &windy));
            println!("{}", mean_line("calm", &calm));
            if let Some(r) = reports.iter().find(|r| r.diverged_at.is_some()) {
                eprintln!("sequence {} ({}) diverged", r.sequence_id, loaded[r.sequence_id].0.display());
                return Err(divergence(r.diverged_at.unwrap_or(0)));
            }
        }
        Command::ExportObj { seq, frame, out } => {
            let seq = lseq::read(&seq)?;
            if frame >= seq.len() {
                return Err(Error::Usage(format!("frame {frame} out of range (sequence has {})", seq.len())));
            }
            fs::File::create(&out)?.write_all(obj::frame_to_obj(&seq, frame)?.as_bytes())?;
        }
        Command::Gradcheck { seed } => {
            let mut ok = true;
            for ret in [true, false] {
                println!("rotation_equivalent={ret}");
                for c in verify::full_step_gradcheck(seed, ret)? {
                    let block = c.name.trim_start_matches("gradcheck step ");
                    let tag = if c.passed() { "ok" } else { "FAIL" };
                    println!("  {block:<16} max_rel_err={:.3e} {tag}", c.value);
                    ok &= c.passed();
                }
            }
            if !ok {
                return Err(Error::Format("gradient check failed".into()));
            }
        }
        Command::Verify { seed, quick } => {
            if !print_checks(&verify::run_suite(quick, seed)?) {
                return Err(Error::Format("verification failed".into()));
            }
        }
    }
    Ok(())
}
