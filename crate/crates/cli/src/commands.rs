use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ergon::envs::{BuiltinEnv, ENV_NAMES};
use ergon::live::{serve, LiveLoop, PolicyController};
use ergon::mppi::{run_episode, Mppi};
use ergon::neural::DiagGaussianPolicy;
use ergon::npg::{train, TrainOptions};
use ergon::sampler::{benchmark_throughput, rollout, throughput_rows, trajectory_rng, Deterministic, RandomController};
use ergon::stats::{success_rate, Summary, SuccessRate};
use ergon::{seed, EnvError, Environment};
use serde::Serialize;

use crate::config::{ControllerKind, ExperimentConfig};
use crate::CliError;

pub fn make_env(cfg: &ExperimentConfig) -> Result<BuiltinEnv<f64>, CliError> {
    BuiltinEnv::from_name(&cfg.env, cfg.env_config.as_ref()).map_err(|e| match e {
        EnvError::UnknownEnv(name) => CliError::Usage(format!("unknown environment '{name}'; available: {}", ENV_NAMES.join(", "))),
        other => CliError::Usage(other.to_string()),
    })
}

fn out_dir(cfg: &ExperimentConfig, command: &str) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{command}-{}-seed{}", cfg.env, cfg.seed)))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_snapshot(cfg: &ExperimentConfig, dir: &Path, mppi_strict: Option<bool>) -> Result<(), CliError> {
    write_json(&dir.join("config.json"), &cfg.snapshot(mppi_strict)?)
}

pub fn bench(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let env = make_env(cfg)?;
    let b = &cfg.bench;
    if b.workers.is_empty() || b.workers.contains(&0) {
        return Err(CliError::Usage("--workers needs a list of positive counts, e.g. 1,2,4".into()));
    }
    if !(b.seconds > 0.0 && b.seconds.is_finite()) || b.hmax == 0 {
        return Err(CliError::Usage("bench needs seconds > 0 and hmax >= 1".into()));
    }
    let dir = out_dir(cfg, "bench");
    create_dir(&dir)?;
    write_snapshot(cfg, &dir, None)?;
    let ctrl = RandomController::new(env.action_space());
    let factory = |_| BuiltinEnv::<f64>::from_name(&cfg.env, cfg.env_config.as_ref());
    let reports = benchmark_throughput(factory, &ctrl, &b.workers, Duration::from_secs_f64(b.seconds), b.hmax, cfg.seed).map_err(runtime)?;
    let rows = throughput_rows(&reports);
    let mut w = csv_writer(&dir.join("bench.csv"))?;
    for r in &rows {
        w.serialize(r).map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;
    write_json(&dir.join("bench.json"), &reports)?;
    println!("{:>7} {:>14} {:>8} {:>10} {:>12}", "workers", "samples/s", "speedup", "efficiency", "jitter p99");
    for r in &rows {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        println!(
            "{:>7} {:>14.0} {:>8} {:>10} {:>10.1}us",
            r.workers,
            r.samples_per_sec,
            opt(r.speedup),
            opt(r.efficiency),
            r.jitter_p99_s * 1e6
        );
    }
    println!("wrote {}", dir.join("bench.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct EpisodeRow {
    episode: usize,
    steps: usize,
    total_reward: f64,
    final_eval: f64,
    success: Option<bool>,
    wall_s: f64,
    mean_latency_s: f64,
}

#[derive(Serialize)]
struct MpcSummary {
    env: String,
    episodes: usize,
    steps: usize,
    dt: f64,
    success_radius: Option<f64>,
    success: Option<SuccessRate>,
    mean_total_reward: f64,
    episode_wall_s: Summary,
    step_latency_s: Summary,
    /// Steps whose controller latency exceeded `dt`.
    late_steps: usize,
}

pub fn mpc(cfg: &ExperimentConfig, strict: bool) -> Result<(), CliError> {
    if cfg.mpc.episodes == 0 {
        return Err(CliError::Usage(ergon::stats::StatsError::NoEpisodes.to_string()));
    }
    if cfg.mpc.steps == 0 {
        return Err(CliError::Usage("mpc needs at least 1 step per episode".into()));
    }
    let mut env = make_env(cfg)?;
    let mut mcfg = cfg.mppi_config(strict)?;
    mcfg.workers = cfg.workers.max(1);
    let radius = cfg.mpc.success_radius.or_else(|| env.success_radius());
    let dir = out_dir(cfg, "mpc");
    create_dir(&dir)?;
    write_snapshot(cfg, &dir, Some(strict))?;
    let mut mppi = Mppi::new(mcfg, &env, seed::derive(cfg.seed, "mppi")).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut w = csv_writer(&dir.join("episodes.csv"))?;
    let (mut walls, mut lats, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
    let mut successes = 0;
    for e in 0..cfg.mpc.episodes {
        let t0 = Instant::now();
        let rep = run_episode(&mut env, &mut mppi, cfg.mpc.steps, cfg.seed, e, radius).map_err(runtime)?;
        let wall = t0.elapsed().as_secs_f64();
        successes += usize::from(rep.success == Some(true));
        w.serialize(EpisodeRow {
            episode: e,
            steps: rep.steps,
            total_reward: rep.total_reward,
            final_eval: rep.final_eval,
            success: rep.success,
            wall_s: wall,
            mean_latency_s: rep.mean_latency_s,
        })
        .map_err(runtime)?;
        w.flush().map_err(runtime)?;
        log::info!("episode {e}: reward {:.3}, final eval {:.4}, success {:?}", rep.total_reward, rep.final_eval, rep.success);
        walls.push(wall);
        rewards.push(rep.total_reward);
        lats.extend(rep.latencies_s);
    }
    let dt = env.dt();
    let summary = MpcSummary {
        env: cfg.env.clone(),
        episodes: cfg.mpc.episodes,
        steps: cfg.mpc.steps,
        dt,
        success_radius: radius,
        success: match radius {
            Some(_) => Some(success_rate(successes, cfg.mpc.episodes).map_err(|e| CliError::Usage(e.to_string()))?),
            None => None,
        },
        mean_total_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
        episode_wall_s: Summary::of(&walls),
        step_latency_s: Summary::of(&lats),
        late_steps: lats.iter().filter(|l| **l > dt).count(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    if let Some(s) = &summary.success {
        println!(
            "success {}/{} = {:.1}% (95% CI {:.1}-{:.1}%)",
            s.successes,
            s.episodes,
            100.0 * s.rate,
            100.0 * s.ci_low,
            100.0 * s.ci_high
        );
    }
    println!(
        "episode wall time mean {:.3}s; step latency mean {:.2}ms p50 {:.2}ms p99 {:.2}ms (dt {:.0}ms, {} late)",
        summary.episode_wall_s.mean,
        summary.step_latency_s.mean * 1e3,
        summary.step_latency_s.p50 * 1e3,
        summary.step_latency_s.p99 * 1e3,
        dt * 1e3,
        summary.late_steps
    );
    Ok(())
}

pub fn train_cmd(cfg: &ExperimentConfig, resume: Option<PathBuf>, dry_run: bool) -> Result<(), CliError> {
    make_env(cfg)?;
    cfg.npg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let snapshot = cfg.snapshot(None)?;
    if dry_run {
        println!("config ok");
        println!("{}", serde_json::to_string_pretty(&snapshot).expect("config serializes"));
        return Ok(());
    }
    let dir = out_dir(cfg, "train");
    create_dir(&dir)?;
    write_json(&dir.join("config.json"), &snapshot)?;
    let factory = |_| BuiltinEnv::<f64>::from_name(&cfg.env, cfg.env_config.as_ref());
    let opts = TrainOptions {
        workers: cfg.workers.max(1),
        out_dir: Some(dir.clone()),
        resume,
    };
    let t0 = Instant::now();
    let outcome = train(factory, &cfg.npg, cfg.seed, &opts, |r| {
        log::info!(
            "iteration {}: stoc {:.3} det {:.3} kl {:.4} vloss {:.4} ({:.2}s)",
            r.iteration,
            r.stoc_return,
            r.det_return,
            r.kl,
            r.value_loss_after,
            r.wall_s
        );
        if r.iteration == 1 || r.iteration % 25 == 0 {
            println!("iteration {:4}: stocreward = {:.3}, detreward = {:.3}", r.iteration, r.stoc_return, r.det_return);
            let _ = std::io::stdout().flush();
        }
    })
    .map_err(|e| match e {
        ergon::npg::NpgError::Config(m) => CliError::Usage(m),
        other => runtime(other),
    })?;
    if let Some(last) = outcome.reports.last() {
        println!(
            "finished {} iterations in {:.1}s; last detreward = {:.3}",
            outcome.reports.len(),
            t0.elapsed().as_secs_f64(),
            last.det_return
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn policy_stem(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("policy")
    } else {
        path.with_extension("")
    }
}

fn load_policy(path: &Path, env: &BuiltinEnv<f64>) -> Result<DiagGaussianPolicy<f64>, CliError> {
    let p = DiagGaussianPolicy::<f64>::load(&policy_stem(path)).map_err(|e| CliError::Usage(e.to_string()))?;
    if p.obs_len() != env.obs_space().len() || p.act_len() != env.action_space().len() {
        return Err(CliError::Usage(format!(
            "checkpoint policy maps {} -> {}, but {} has {} observations and {} actions",
            p.obs_len(),
            p.act_len(),
            env.name(),
            env.obs_space().len(),
            env.action_space().len()
        )));
    }
    Ok(p)
}

pub fn replay(cfg: &ExperimentConfig, checkpoint: &Path, episodes: usize, steps: Option<usize>) -> Result<(), CliError> {
    if episodes == 0 {
        return Err(CliError::Usage(ergon::stats::StatsError::NoEpisodes.to_string()));
    }
    let mut env = make_env(cfg)?;
    let policy = load_policy(checkpoint, &env)?;
    let steps = steps.unwrap_or(cfg.npg.hmax);
    let dir = out_dir(cfg, "replay");
    create_dir(&dir)?;
    let path = dir.join("trajectory.csv");
    let mut w = csv::Writer::from_path(&path).map_err(runtime)?;
    let l = env.layout();
    let m = env.action_space().len();
    let mut header = vec!["episode".to_string(), "step".into(), "time_s".into()];
    header.extend((0..l.nq).map(|i| format!("qpos{i}")));
    header.extend((0..l.nv).map(|i| format!("qvel{i}")));
    header.extend((0..m).map(|i| format!("action{i}")));
    header.extend(["reward".into(), "eval".into(), "done".into()]);
    w.write_record(&header).map_err(runtime)?;
    let ctrl = Deterministic(&policy);
    let replay_seed = seed::derive(cfg.seed, "replay");
    for e in 0..episodes {
        let mut rng = trajectory_rng(replay_seed, e);
        env.rand_reset(&mut rng);
        let traj = rollout(&mut env, &ctrl, steps, &mut rng).map_err(runtime)?;
        let sl = traj.state_len;
        for t in 0..traj.len() {
            let s = &traj.states[t * sl..(t + 1) * sl];
            let mut rec = vec![e.to_string(), t.to_string(), l.time(s).to_string()];
            rec.extend(l.qpos(s).iter().chain(l.qvel(s)).map(|v| v.to_string()));
            rec.extend(traj.actions[t * m..(t + 1) * m].iter().map(|v| v.to_string()));
            rec.extend([traj.rewards[t].to_string(), traj.evals[t].to_string(), traj.dones[t].to_string()]);
            w.write_record(&rec).map_err(runtime)?;
        }
        println!("episode {e}: {} steps, return {:.3}", traj.len(), traj.total_reward());
    }
    w.flush().map_err(runtime)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn serve_cmd(cfg: &ExperimentConfig, strict: bool) -> Result<(), CliError> {
    let mut env = make_env(cfg)?;
    env.reset();
    let s = &cfg.serve;
    let server = match s.controller {
        ControllerKind::Mppi => {
            let mut m = cfg.mppi_config(strict)?;
            m.workers = cfg.workers.max(1);
            let mppi = Mppi::new(m, &env, seed::derive(cfg.seed, "mppi")).map_err(|e| CliError::Usage(e.to_string()))?;
            serve(&s.bind, LiveLoop::new(env, mppi, s.live))
        }
        ControllerKind::Checkpoint => {
            let path = s
                .checkpoint
                .as_ref()
                .ok_or_else(|| CliError::Usage("--controller checkpoint needs --checkpoint <dir>".into()))?;
            let policy = load_policy(path, &env)?;
            serve(&s.bind, LiveLoop::new(env, PolicyController::new(policy), s.live))
        }
    }
    .map_err(runtime)?;
    println!("listening on {}", server.local_addr());
    let _ = std::io::stdout().flush();
    server.wait();
    Ok(())
}
