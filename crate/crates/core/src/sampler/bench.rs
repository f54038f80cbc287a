use std::sync::Barrier;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::rollout::{rollout_into, RolloutScratch, Trajectory};
use super::{Controller, SampleError};
use crate::envcore::{EnvError, Environment};
use crate::scalar::Real;
use crate::seed;

/// Latencies up to this many nanoseconds are binned exactly.
const HIST_NS: usize = 1 << 16;

/// Throughput and latency jitter for one worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub workers: usize,
    pub samples_per_sec: f64,
    pub total_samples: u64,
    pub per_worker_samples: Vec<u64>,
    pub wall_s: f64,
    pub mean_step_s: f64,
    /// Largest deviation of a per-step latency from the mean.
    pub jitter_max_s: f64,
    /// 99th percentile of the absolute deviation from the mean.
    pub jitter_p99_s: f64,
}

/// Flat row for CSV output; `speedup` and `efficiency` are relative to the
/// single-worker report when one exists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputRow {
    pub workers: usize,
    pub samples_per_sec: f64,
    pub wall_s: f64,
    pub jitter_max_s: f64,
    pub jitter_p99_s: f64,
    pub total_samples: u64,
    pub speedup: Option<f64>,
    pub efficiency: Option<f64>,
}

pub fn throughput_rows(reports: &[ThroughputReport]) -> Vec<ThroughputRow> {
    let base = reports
        .iter()
        .find(|r| r.workers == 1)
        .map(|r| r.samples_per_sec);
    reports
        .iter()
        .map(|r| {
            let speedup = base.filter(|b| *b > 0.0).map(|b| r.samples_per_sec / b);
            ThroughputRow {
                workers: r.workers,
                samples_per_sec: r.samples_per_sec,
                wall_s: r.wall_s,
                jitter_max_s: r.jitter_max_s,
                jitter_p99_s: r.jitter_p99_s,
                total_samples: r.total_samples,
                speedup,
                efficiency: speedup.map(|s| s / r.workers as f64),
            }
        })
        .collect()
}

pub fn write_throughput_csv<W: std::io::Write>(
    reports: &[ThroughputReport],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in throughput_rows(reports) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-step latency histogram: exact nanosecond bins plus an overflow list.
struct LatencyHist {
    bins: Vec<u64>,
    overflow: Vec<u64>,
    count: u64,
    sum_ns: u128,
}

impl LatencyHist {
    fn new() -> Self {
        Self {
            bins: vec![0; HIST_NS],
            overflow: Vec::with_capacity(4096),
            count: 0,
            sum_ns: 0,
        }
    }

    fn record(&mut self, ns: u64) {
        match self.bins.get_mut(ns as usize) {
            Some(b) => *b += 1,
            None => self.overflow.push(ns),
        }
        self.count += 1;
        self.sum_ns += ns as u128;
    }

    fn merge(&mut self, other: &LatencyHist) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        self.overflow.extend_from_slice(&other.overflow);
        self.count += other.count;
        self.sum_ns += other.sum_ns;
    }

    /// Mean latency, max and 99th-percentile absolute deviation (ns).
    fn jitter(&self) -> (f64, f64, f64) {
        if self.count == 0 {
            return (0.0, 0.0, 0.0);
        }
        let mean = self.sum_ns as f64 / self.count as f64;
        let mut devs: Vec<(f64, u64)> = self
            .bins
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(ns, c)| ((ns as f64 - mean).abs(), *c))
            .chain(
                self.overflow
                    .iter()
                    .map(|ns| ((*ns as f64 - mean).abs(), 1)),
            )
            .collect();
        devs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let max = devs.last().map(|d| d.0).unwrap_or(0.0);
        let rank = (0.99 * self.count as f64).ceil() as u64;
        let mut seen = 0;
        let mut p99 = max;
        for (d, c) in &devs {
            seen += c;
            if seen >= rank {
                p99 = *d;
                break;
            }
        }
        (mean, max, p99)
    }
}

/// Measures sampling throughput for each worker count.
///
/// Every worker owns one environment and first runs one full discarded
/// rollout to warm caches and buffers. Workers then start together and
/// step (controller call, `step`, `get_obs_into`) until `duration` elapses,
/// restarting from `rand_reset` whenever an episode ends.
pub fn benchmark_throughput<T, E, F, C>(
    factory: F,
    controller: &C,
    workers: &[usize],
    duration: Duration,
    hmax: usize,
    seed: u64,
) -> Result<Vec<ThroughputReport>, SampleError>
where
    T: Real,
    E: Environment<T>,
    F: Fn(usize) -> Result<E, EnvError> + Sync,
    C: Controller<T> + ?Sized,
{
    if workers.contains(&0) {
        return Err(SampleError::Config(
            "worker counts must be at least 1".into(),
        ));
    }
    let mut reports = Vec::with_capacity(workers.len());
    for &nw in workers {
        let barrier = Barrier::new(nw + 1);
        let (start, per_worker) = std::thread::scope(|s| {
            let handles: Vec<_> = (0..nw)
                .map(|w| {
                    let (factory, barrier) = (&factory, &barrier);
                    s.spawn(move || -> Result<(u64, LatencyHist), SampleError> {
                        let prep = || -> Result<_, SampleError> {
                            let mut env = factory(w)
                                .map_err(|source| SampleError::Factory { worker: w, source })?;
                            let mut rng = seed::stream(seed::derive(seed, "bench"), w as u64);
                            let mut scratch = RolloutScratch::new(&env, controller.scratch());
                            let mut traj = Trajectory::with_capacity(&env, hmax);
                            env.rand_reset(&mut rng);
                            rollout_into(
                                &mut env,
                                controller,
                                hmax,
                                &mut rng,
                                &mut scratch,
                                &mut traj,
                            )
                            .map_err(|e| e.with_worker(w))?;
                            Ok((env, rng, scratch))
                        };
                        let prepared = prep();
                        barrier.wait();
                        let (mut env, mut rng, mut scratch) = prepared?;
                        let mut hist = LatencyHist::new();
                        let mut obs = vec![T::zero(); env.obs_space().len()];
                        let mut action = vec![T::zero(); env.action_space().len()];
                        let deadline = Instant::now() + duration;
                        let mut steps = 0u64;
                        env.rand_reset(&mut rng);
                        env.get_obs_into(&mut obs).map_err(SampleError::env(w))?;
                        let mut episode_len = 0;
                        loop {
                            let t0 = Instant::now();
                            controller.act(&obs, &mut rng, &mut scratch.controller, &mut action)?;
                            let r = env.step(&action).map_err(SampleError::env(w))?;
                            env.get_obs_into(&mut obs).map_err(SampleError::env(w))?;
                            let t1 = Instant::now();
                            hist.record((t1 - t0).as_nanos() as u64);
                            steps += 1;
                            episode_len += 1;
                            if r.done || episode_len >= hmax {
                                env.rand_reset(&mut rng);
                                env.get_obs_into(&mut obs).map_err(SampleError::env(w))?;
                                episode_len = 0;
                            }
                            if t1 >= deadline {
                                break;
                            }
                        }
                        Ok((steps, hist))
                    })
                })
                .collect();
            barrier.wait();
            let start = Instant::now();
            let results: Vec<_> = handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(SampleError::Panicked)))
                .collect();
            (start, results)
        });
        let wall = start.elapsed().as_secs_f64();
        let mut hist = LatencyHist::new();
        let mut counts = Vec::with_capacity(nw);
        for r in per_worker {
            let (n, h) = r?;
            counts.push(n);
            hist.merge(&h);
        }
        let total: u64 = counts.iter().sum();
        let (mean, max, p99) = hist.jitter();
        reports.push(ThroughputReport {
            workers: nw,
            samples_per_sec: total as f64 / wall,
            total_samples: total,
            per_worker_samples: counts,
            wall_s: wall,
            mean_step_s: mean * 1e-9,
            jitter_max_s: max * 1e-9,
            jitter_p99_s: p99 * 1e-9,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_of_constant_latency_is_zero() {
        let mut h = LatencyHist::new();
        for _ in 0..100 {
            h.record(250);
        }
        assert_eq!(h.jitter(), (250.0, 0.0, 0.0));
    }

    #[test]
    fn jitter_percentile_and_overflow() {
        let mut h = LatencyHist::new();
        for _ in 0..99 {
            h.record(100);
        }
        h.record(100 + 1_000_000);
        let (mean, max, p99) = h.jitter();
        assert!((mean - 10_100.0).abs() < 1e-9);
        assert!((max - (1_000_100.0 - 10_100.0)).abs() < 1e-6);
        assert!((p99 - 10_000.0).abs() < 1e-9);
    }

    #[test]
    fn rows_carry_speedup() {
        let rep = |w, s| ThroughputReport {
            workers: w,
            samples_per_sec: s,
            total_samples: 0,
            per_worker_samples: vec![],
            wall_s: 1.0,
            mean_step_s: 0.0,
            jitter_max_s: 0.0,
            jitter_p99_s: 0.0,
        };
        let rows = throughput_rows(&[rep(1, 100.0), rep(4, 300.0)]);
        assert_eq!(rows[1].speedup, Some(3.0));
        assert_eq!(rows[1].efficiency, Some(0.75));
        let mut buf = Vec::new();
        write_throughput_csv(&[rep(1, 100.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("workers,samples_per_sec,wall_s,jitter_max_s,jitter_p99_s"));
    }
}
