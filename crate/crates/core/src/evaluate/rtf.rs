//! Real-time factor: processing time over audio duration.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::MultichannelClip;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub cpu_model: String,
    pub logical_cpus: usize,
    /// CPU the measuring thread was pinned to, if pinning succeeded.
    pub pinned_cpu: Option<usize>,
    pub os: String,
}

impl MachineInfo {
    pub fn detect(pinned_cpu: Option<usize>) -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|v| v.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        MachineInfo {
            cpu_model,
            logical_cpus: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            pinned_cpu,
            os: std::env::consts::OS.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtfReport {
    /// Median wall-clock processing time `T_p` in seconds.
    pub processing_seconds: f64,
    /// Audio duration `T_t` in seconds.
    pub audio_seconds: f64,
    pub rtf: f64,
    pub repetitions: usize,
    pub timings: Vec<f64>,
    pub machine: MachineInfo,
}

/// `T_p / T_t`.
pub fn real_time_factor(processing_seconds: f64, audio_seconds: f64) -> Result<f64> {
    if !(audio_seconds > 0.0 && audio_seconds.is_finite()) {
        return Err(Error::Input(format!(
            "audio duration {audio_seconds} must be positive"
        )));
    }
    if !(processing_seconds >= 0.0 && processing_seconds.is_finite()) {
        return Err(Error::Input(format!(
            "processing time {processing_seconds} must be non-negative"
        )));
    }
    Ok(processing_seconds / audio_seconds)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pins the calling thread to the first CPU it may run on.
#[cfg(target_os = "linux")]
fn pin_current_thread() -> Option<usize> {
    // SAFETY: cpu_set_t is plain data; the calls only read/write it.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return None;
        }
        let cpu = (0..libc::CPU_SETSIZE as usize).find(|&c| libc::CPU_ISSET(c, &set))?;
        let mut one: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut one);
        (libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &one) == 0)
            .then_some(cpu)
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_current_thread() -> Option<usize> {
    None
}

/// Runs `processor` on `clip` `repetitions` times on one pinned worker
/// thread (any data parallelism inside the processor is confined to that
/// thread) and reports the median time.
pub fn measure_rtf<P, R>(
    mut processor: P,
    clip: &MultichannelClip,
    repetitions: usize,
) -> Result<RtfReport>
where
    P: FnMut(&MultichannelClip) -> Result<R> + Send,
{
    if repetitions == 0 {
        return Err(Error::Parameter("repetitions must be at least 1".into()));
    }
    let audio_seconds = clip.duration_seconds();
    real_time_factor(0.0, audio_seconds)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::External(format!("cannot start benchmark thread: {e}")))?;
    let (pinned, timings) = pool.install(|| {
        let pinned = pin_current_thread();
        let mut timings = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let start = Instant::now();
            let out = processor(clip);
            let elapsed = start.elapsed().as_secs_f64();
            if let Err(e) = out {
                return (
                    pinned,
                    Err(Error::Benchmark {
                        timings,
                        source: Box::new(e),
                    }),
                );
            }
            std::hint::black_box(out.ok());
            timings.push(elapsed);
        }
        (pinned, Ok(timings))
    });
    let timings = timings?;
    let processing_seconds = median(&timings);
    Ok(RtfReport {
        processing_seconds,
        audio_seconds,
        rtf: real_time_factor(processing_seconds, audio_seconds)?,
        repetitions,
        timings,
        machine: MachineInfo::detect(pinned),
    })
}
