//! Aggregate metrics over a finished run: service attainment, turnaround
//! quantiles, queue waits, preemption counters, and report files.
//!
//! Everything here is a pure function of [`SimResult`]. Wall-clock scheduler
//! times are the one non-deterministic input; they are segregated into
//! `timing.json` so `report.json`, `report.csv`, `cdf.csv`, and
//! `comparison.csv` are byte-identical across reruns of the same config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::RequestKind;
use crate::sim::SimResult;

/// Number of points in the turnaround CDF grid: quantiles 0%, 1%, .., 100%.
pub const CDF_POINTS: usize = 101;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot build a report from a result with zero requests")]
    EmptyResult,
    #[error("io error at {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Latency statistics for one request class (image or video).
///
/// Quantile fields are `None` exactly when the class is empty; `cdf_ms` is
/// empty in that case and has [`CDF_POINTS`] entries otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub count: u64,
    pub met: u64,
    pub turnaround_p50_ms: Option<f64>,
    pub turnaround_p90_ms: Option<f64>,
    pub turnaround_p99_ms: Option<f64>,
    pub queue_wait_mean_ms: Option<f64>,
    pub queue_wait_p99_ms: Option<f64>,
    /// Turnaround at 101 evenly spaced quantiles (0.00, 0.01, .., 1.00).
    pub turnaround_cdf_ms: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreemptionStats {
    pub pauses: u64,
    pub resumes: u64,
    pub cancelled_pauses: u64,
    pub sp_switches: u64,
    /// Denoising steps that began under a freshly reconfigured degree,
    /// divided by all denoising steps executed. 0 when no steps ran.
    pub sp_switch_fraction: f64,
    pub image_batches: u64,
    pub batched_images: u64,
}

/// Wall-clock time spent inside the scheduler per round. Non-deterministic;
/// never written into the byte-stable report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerTimeStats {
    pub rounds: u64,
    pub mean_us: f64,
    pub max_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scheduler: String,
    pub cluster_size: usize,
    pub total_requests: u64,
    pub met_requests: u64,
    /// met_requests / total_requests.
    pub sar_overall: f64,
    /// `None` when the run had no image requests.
    pub sar_image: Option<f64>,
    /// `None` when the run had no video requests.
    pub sar_video: Option<f64>,
    pub image: ClassStats,
    pub video: ClassStats,
    pub preemption: PreemptionStats,
    /// Present only when the simulator recorded per-round wall times.
    /// Excluded from `report.json`; emitted to `timing.json`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scheduler_time: Option<SchedulerTimeStats>,
}

/// Linear-interpolation quantile (type 7) over an ascending slice.
/// `q` is clamped to [0, 1]. Panics on an empty slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty slice");
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn class_stats(result: &SimResult, kind: RequestKind) -> ClassStats {
    let records: Vec<_> = result.records.iter().filter(|r| r.kind == kind).collect();
    let count = records.len() as u64;
    let met = records.iter().filter(|r| r.met).count() as u64;

    let mut turnarounds: Vec<f64> = records.iter().filter_map(|r| r.turnaround_ms()).collect();
    turnarounds.sort_by(f64::total_cmp);
    let mut waits: Vec<f64> = records.iter().filter_map(|r| r.queue_wait_ms()).collect();
    waits.sort_by(f64::total_cmp);

    let tq = |q: f64| (!turnarounds.is_empty()).then(|| quantile(&turnarounds, q));
    let cdf = if turnarounds.is_empty() {
        Vec::new()
    } else {
        (0..CDF_POINTS)
            .map(|i| quantile(&turnarounds, i as f64 / 100.0))
            .collect()
    };

    ClassStats {
        count,
        met,
        turnaround_p50_ms: tq(0.50),
        turnaround_p90_ms: tq(0.90),
        turnaround_p99_ms: tq(0.99),
        queue_wait_mean_ms: (!waits.is_empty())
            .then(|| waits.iter().sum::<f64>() / waits.len() as f64),
        queue_wait_p99_ms: (!waits.is_empty()).then(|| quantile(&waits, 0.99)),
        turnaround_cdf_ms: cdf,
    }
}

/// Build the aggregate report for one run.
///
/// A request completing exactly at its deadline counts as met; the engine
/// already applies that closed comparison when it stamps `met`.
pub fn compute_report(result: &SimResult) -> Result<Report, MetricsError> {
    if result.records.is_empty() {
        return Err(MetricsError::EmptyResult);
    }
    let image = class_stats(result, RequestKind::Image);
    let video = class_stats(result, RequestKind::Video);
    let total = image.count + video.count;
    let met = image.met + video.met;
    let sar_of = |c: &ClassStats| (c.count > 0).then(|| c.met as f64 / c.count as f64);

    let t = &result.totals;
    let preemption = PreemptionStats {
        pauses: t.pauses,
        resumes: t.resumes,
        cancelled_pauses: t.cancelled_pauses,
        sp_switches: t.sp_switches,
        sp_switch_fraction: if t.denoise_steps == 0 {
            0.0
        } else {
            t.sp_switches as f64 / t.denoise_steps as f64
        },
        image_batches: t.image_batches,
        batched_images: t.batched_images,
    };

    let scheduler_time = (!result.round_wall_us.is_empty()).then(|| {
        let n = result.round_wall_us.len();
        SchedulerTimeStats {
            rounds: n as u64,
            mean_us: result.round_wall_us.iter().sum::<f64>() / n as f64,
            max_us: result
                .round_wall_us
                .iter()
                .copied()
                .fold(f64::MIN, f64::max),
        }
    });

    Ok(Report {
        scheduler: result.scheduler.clone(),
        cluster_size: result.cluster_size,
        total_requests: total,
        met_requests: met,
        sar_overall: met as f64 / total as f64,
        sar_image: sar_of(&image),
        sar_video: sar_of(&video),
        image,
        video,
        preemption,
        scheduler_time,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".to_string(),
    }
}

impl Report {
    /// Deterministic JSON: wall-clock stats stripped, trailing newline.
    pub fn to_json_string(&self) -> String {
        let mut trimmed = self.clone();
        trimmed.scheduler_time = None;
        let mut s = serde_json::to_string_pretty(&trimmed).expect("report serializes");
        s.push('\n');
        s
    }

    /// Deterministic `metric,value` rows in a fixed order.
    pub fn to_csv_string(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("scheduler".into(), self.scheduler.clone()),
            ("cluster_size".into(), self.cluster_size.to_string()),
            ("total_requests".into(), self.total_requests.to_string()),
            ("met_requests".into(), self.met_requests.to_string()),
            ("sar_overall".into(), format!("{}", self.sar_overall)),
            ("sar_image".into(), fmt_opt(self.sar_image)),
            ("sar_video".into(), fmt_opt(self.sar_video)),
        ];
        for (label, c) in [("image", &self.image), ("video", &self.video)] {
            rows.push((format!("{label}_count"), c.count.to_string()));
            rows.push((format!("{label}_met"), c.met.to_string()));
            rows.push((
                format!("{label}_turnaround_p50_ms"),
                fmt_opt(c.turnaround_p50_ms),
            ));
            rows.push((
                format!("{label}_turnaround_p90_ms"),
                fmt_opt(c.turnaround_p90_ms),
            ));
            rows.push((
                format!("{label}_turnaround_p99_ms"),
                fmt_opt(c.turnaround_p99_ms),
            ));
            rows.push((
                format!("{label}_queue_wait_mean_ms"),
                fmt_opt(c.queue_wait_mean_ms),
            ));
            rows.push((
                format!("{label}_queue_wait_p99_ms"),
                fmt_opt(c.queue_wait_p99_ms),
            ));
        }
        let p = &self.preemption;
        rows.push(("pauses".into(), p.pauses.to_string()));
        rows.push(("resumes".into(), p.resumes.to_string()));
        rows.push(("cancelled_pauses".into(), p.cancelled_pauses.to_string()));
        rows.push(("sp_switches".into(), p.sp_switches.to_string()));
        rows.push((
            "sp_switch_fraction".into(),
            format!("{}", p.sp_switch_fraction),
        ));
        rows.push(("image_batches".into(), p.image_batches.to_string()));
        rows.push(("batched_images".into(), p.batched_images.to_string()));

        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            out.push_str(&k);
            out.push(',');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// CDF grid as `kind,quantile,turnaround_ms` rows, image then video.
    pub fn cdf_csv_string(&self) -> String {
        let mut out = String::from("kind,quantile,turnaround_ms\n");
        for (label, c) in [("image", &self.image), ("video", &self.video)] {
            for (i, v) in c.turnaround_cdf_ms.iter().enumerate() {
                out.push_str(&format!("{label},{},{v}\n", i as f64 / 100.0));
            }
        }
        out
    }

    /// Wall-clock sidecar; the only non-deterministic output file.
    pub fn timing_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.scheduler_time).expect("timing serializes");
        s.push('\n');
        s
    }

    /// Write `report.json`, `report.csv`, `cdf.csv`, and `timing.json`
    /// under `dir` (created if missing).
    pub fn write_files(&self, dir: &Path) -> Result<(), MetricsError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| MetricsError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, body) in [
            ("report.json", self.to_json_string()),
            ("report.csv", self.to_csv_string()),
            ("cdf.csv", self.cdf_csv_string()),
            ("timing.json", self.timing_json_string()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// Side-by-side comparison across labeled runs, one row per report, in the
/// given order. Labels typically encode the sweep point and seed.
pub fn comparison_csv(rows: &[(String, Report)]) -> String {
    let mut out = String::from(
        "label,scheduler,total_requests,sar_overall,sar_image,sar_video,\
         image_turnaround_p99_ms,video_turnaround_p99_ms,\
         image_queue_wait_p99_ms,video_queue_wait_p99_ms,\
         pauses,resumes,sp_switch_fraction\n",
    );
    for (label, r) in rows {
        out.push_str(&format!(
            "{label},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.scheduler,
            r.total_requests,
            r.sar_overall,
            fmt_opt(r.sar_image),
            fmt_opt(r.sar_video),
            fmt_opt(r.image.turnaround_p99_ms),
            fmt_opt(r.video.turnaround_p99_ms),
            fmt_opt(r.image.queue_wait_p99_ms),
            fmt_opt(r.video.queue_wait_p99_ms),
            r.preemption.pauses,
            r.preemption.resumes,
            r.preemption.sp_switch_fraction,
        ));
    }
    out
}
