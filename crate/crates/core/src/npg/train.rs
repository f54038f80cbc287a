use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{npg_step, IterationReport, NpgConfig, NpgError};
use crate::envcore::{EnvError, Environment};
use crate::neural::{DiagGaussianPolicy, InitConfig, Mlp};
use crate::sampler::{parallel_rollouts, rollout, trajectory_rng, Deterministic, SamplerConfig};
use crate::scalar::Real;
use crate::seed;

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LOG_CSV: &str = "iterations.csv";
pub const LOG_JSONL: &str = "iterations.jsonl";
pub const TIMING_CSV: &str = "timing.csv";
const STATE_FILE: &str = "state.json";

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub workers: usize,
    /// Where logs and checkpoints go; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Checkpoint directory to continue from.
    pub resume: Option<PathBuf>,
}

/// Wall-clock breakdown of one iteration, logged apart from the
/// deterministic report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTiming {
    pub iteration: usize,
    pub wall_s: f64,
    pub sample_s: f64,
    pub eval_s: f64,
    pub update_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub policy: DiagGaussianPolicy<T>,
    pub value: Mlp<T>,
    /// Reports of the iterations run by this call.
    pub reports: Vec<IterationReport>,
    /// Iteration the run started after (0 unless resumed).
    pub start_iteration: usize,
}

/// Contents of `state.json` in a checkpoint directory, next to
/// `policy.{bin,json}` and `value.{bin,json}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub iteration: usize,
    pub seed: u64,
}

impl Checkpoint {
    pub fn dir(out_dir: &Path, iteration: usize) -> PathBuf {
        out_dir
            .join(CHECKPOINT_DIR)
            .join(format!("iter_{iteration:04}"))
    }

    pub fn save<T: Real>(
        &self,
        dir: &Path,
        policy: &DiagGaussianPolicy<T>,
        value: &Mlp<T>,
    ) -> Result<(), NpgError> {
        fs::create_dir_all(dir).map_err(|e| NpgError::io(dir, e))?;
        policy.save(&dir.join("policy"))?;
        value.save(&dir.join("value"))?;
        let path = dir.join(STATE_FILE);
        let json = serde_json::to_string_pretty(self).map_err(|e| NpgError::io(&path, e))?;
        fs::write(&path, json + "\n").map_err(|e| NpgError::io(&path, e))
    }

    pub fn load<T: Real>(dir: &Path) -> Result<(Self, DiagGaussianPolicy<T>, Mlp<T>), NpgError> {
        let path = dir.join(STATE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| NpgError::io(&path, e))?;
        let state: Self = serde_json::from_str(&text).map_err(|e| NpgError::io(&path, e))?;
        let policy = DiagGaussianPolicy::load(&dir.join("policy"))?;
        let value = Mlp::load(&dir.join("value"))?;
        Ok((state, policy, value))
    }
}

/// Runs `episodes` mean-action episodes, episode `k` reset from
/// `trajectory_rng(seed, k)`. Returns the mean return and the mean eval
/// metric at the last step.
pub fn evaluate_deterministic<T: Real, E: Environment<T>>(
    env: &mut E,
    policy: &DiagGaussianPolicy<T>,
    episodes: usize,
    hmax: usize,
    seed: u64,
) -> Result<(f64, f64), NpgError> {
    if episodes == 0 {
        return Ok((0.0, 0.0));
    }
    let ctrl = Deterministic(policy);
    let (mut ret, mut fin) = (0.0, 0.0);
    for k in 0..episodes {
        let mut rng = trajectory_rng(seed, k);
        env.rand_reset(&mut rng);
        let traj = rollout(env, &ctrl, hmax, &mut rng)?;
        ret += traj.total_reward();
        fin += traj.evals.last().map_or(0.0, |e| e.as_f64());
    }
    Ok((ret / episodes as f64, fin / episodes as f64))
}

pub fn read_reports(path: &Path) -> Result<Vec<IterationReport>, NpgError> {
    let f = File::open(path).map_err(|e| NpgError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| NpgError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| NpgError::io(path, e))?);
    }
    Ok(out)
}

fn read_timings(path: &Path) -> Result<Vec<IterationTiming>, NpgError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| NpgError::io(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| NpgError::io(path, e)))
        .collect()
}

struct Logs {
    dir: PathBuf,
    csv: csv::Writer<File>,
    jsonl: BufWriter<File>,
    timing: csv::Writer<File>,
}

impl Logs {
    /// Opens the logs in `dir`, keeping only rows up to iteration `keep`.
    fn open(dir: &Path, keep: usize) -> Result<Self, NpgError> {
        let jp = dir.join(LOG_JSONL);
        let tp = dir.join(TIMING_CSV);
        let reports = if keep > 0 && jp.exists() {
            read_reports(&jp)?
        } else {
            Vec::new()
        };
        let timings = if keep > 0 && tp.exists() {
            read_timings(&tp)?
        } else {
            Vec::new()
        };
        let mut logs = Self {
            dir: dir.to_path_buf(),
            csv: csv_writer(&dir.join(LOG_CSV))?,
            jsonl: BufWriter::new(create(&jp)?),
            timing: csv_writer(&tp)?,
        };
        for r in reports.iter().filter(|r| r.iteration <= keep) {
            logs.write_report(r)?;
        }
        for t in timings.iter().filter(|t| t.iteration <= keep) {
            logs.timing.serialize(t).map_err(|e| NpgError::io(&tp, e))?;
        }
        logs.flush()?;
        Ok(logs)
    }

    fn write_report(&mut self, r: &IterationReport) -> Result<(), NpgError> {
        self.csv
            .serialize(r)
            .map_err(|e| NpgError::io(&self.dir.join(LOG_CSV), e))?;
        let line =
            serde_json::to_string(r).map_err(|e| NpgError::io(&self.dir.join(LOG_JSONL), e))?;
        writeln!(self.jsonl, "{line}").map_err(|e| NpgError::io(&self.dir.join(LOG_JSONL), e))
    }

    fn append(&mut self, r: &IterationReport, t: &IterationTiming) -> Result<(), NpgError> {
        self.write_report(r)?;
        self.timing
            .serialize(t)
            .map_err(|e| NpgError::io(&self.dir.join(TIMING_CSV), e))?;
        self.flush()
    }

    fn flush(&mut self) -> Result<(), NpgError> {
        self.csv
            .flush()
            .map_err(|e| NpgError::io(&self.dir.join(LOG_CSV), e))?;
        self.jsonl
            .flush()
            .map_err(|e| NpgError::io(&self.dir.join(LOG_JSONL), e))?;
        self.timing
            .flush()
            .map_err(|e| NpgError::io(&self.dir.join(TIMING_CSV), e))
    }
}

fn create(path: &Path) -> Result<File, NpgError> {
    OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(path)
        .map_err(|e| NpgError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, NpgError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

/// Runs NPG iterations `start + 1 ..= config.iterations`, where `start` is
/// 0 for a fresh run or the checkpoint's iteration when resuming.
///
/// Iteration `i` draws everything from `derive_indexed(seed, "npg-iteration",
/// i)`, so a resumed run reproduces the uninterrupted one exactly. With an
/// output directory, logs are flushed after every iteration and checkpoints
/// are written at iteration 0, every `checkpoint_every` iterations and at
/// the end.
pub fn train<T, E, F, C>(
    factory: F,
    config: &NpgConfig,
    seed: u64,
    options: &TrainOptions,
    mut on_iteration: C,
) -> Result<TrainOutcome<T>, NpgError>
where
    T: Real,
    E: Environment<T>,
    F: Fn(usize) -> Result<E, EnvError> + Sync,
    C: FnMut(&IterationReport),
{
    config.validate()?;
    let mut env = factory(0)?;
    let (d, m) = (env.obs_space().len(), env.action_space().len());
    let (start, mut policy, mut value) = match &options.resume {
        Some(dir) => {
            let (state, policy, value) = Checkpoint::load::<T>(dir)?;
            if state.seed != seed {
                return Err(NpgError::Config(format!(
                    "checkpoint {} was written with seed {}, not {seed}",
                    dir.display(),
                    state.seed
                )));
            }
            if policy.obs_len() != d
                || policy.act_len() != m
                || value.input_len() != d
                || value.output_len() != 1
            {
                return Err(NpgError::Config(format!(
                    "checkpoint {} does not match the environment's obs/action sizes ({d}, {m})",
                    dir.display()
                )));
            }
            (state.iteration, policy, value)
        }
        None => {
            let policy = DiagGaussianPolicy::new(
                d,
                &config.policy_hidden,
                m,
                &mut seed::rng(seed::derive(seed, "policy-init")),
            );
            let mut sizes = vec![d];
            sizes.extend_from_slice(&config.value_hidden);
            sizes.push(1);
            let value = Mlp::new(
                &sizes,
                InitConfig::default(),
                &mut seed::rng(seed::derive(seed, "value-init")),
            );
            (0, policy, value)
        }
    };
    let mut logs = match &options.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| NpgError::io(dir, e))?;
            if start == 0 {
                Checkpoint { iteration: 0, seed }.save(
                    &Checkpoint::dir(dir, 0),
                    &policy,
                    &value,
                )?;
            }
            Some(Logs::open(dir, start)?)
        }
        None => None,
    };
    let mut reports = Vec::new();
    for it in start + 1..=config.iterations {
        let t0 = Instant::now();
        let it_seed = seed::derive_indexed(seed, "npg-iteration", it as u64);
        let batch = parallel_rollouts(
            &factory,
            &policy,
            &SamplerConfig {
                n_samples: config.samples,
                hmax: config.hmax,
                workers: options.workers.max(1),
                seed: seed::derive(it_seed, "sample"),
            },
        )?;
        let t1 = Instant::now();
        let (det_return, det_final_eval) = evaluate_deterministic(
            &mut env,
            &policy,
            config.eval_episodes,
            config.hmax,
            seed::derive(it_seed, "eval"),
        )?;
        let t2 = Instant::now();
        let returns = batch.returns();
        let steps = batch.total_steps();
        let step = npg_step(
            &mut policy,
            &mut value,
            &batch,
            config,
            &mut seed::rng(seed::derive(it_seed, "value-fit")),
        )?;
        let t3 = Instant::now();
        let report = IterationReport {
            iteration: it,
            trajectories: batch.num_trajectories(),
            samples: steps,
            stoc_return: returns.iter().sum::<f64>() / returns.len() as f64,
            det_return,
            eval_mean: batch.evals.iter().map(|e| e.as_f64()).sum::<f64>() / steps as f64,
            det_final_eval,
            kl: step.kl,
            value_loss_before: step.value_loss_before,
            value_loss_after: step.value_loss_after,
            grad_norm: step.grad_norm,
            gx: step.gx,
            step_norm: step.step_norm,
            cg_iterations: step.cg_iterations,
            cg_residual: step.cg_residual,
            degenerate: step.degenerate,
            wall_s: (t3 - t0).as_secs_f64(),
        };
        if step.degenerate {
            log::warn!(
                "iteration {it}: degenerate step (g.x = {:e}), policy unchanged",
                step.gx
            );
        }
        if let (Some(logs), Some(dir)) = (logs.as_mut(), &options.out_dir) {
            let timing = IterationTiming {
                iteration: it,
                wall_s: report.wall_s,
                sample_s: (t1 - t0).as_secs_f64(),
                eval_s: (t2 - t1).as_secs_f64(),
                update_s: (t3 - t2).as_secs_f64(),
            };
            logs.append(&report, &timing)?;
            if it % config.checkpoint_every == 0 || it == config.iterations {
                Checkpoint {
                    iteration: it,
                    seed,
                }
                .save(&Checkpoint::dir(dir, it), &policy, &value)?;
            }
        }
        on_iteration(&report);
        reports.push(report);
    }
    Ok(TrainOutcome {
        policy,
        value,
        reports,
        start_iteration: start,
    })
}
