//! Profile-based GPU latency model.
//!
//! A [`LatencyProfile`] holds measured lookup tables (per-step video DiT
//! latency by resolution/frames/SP degree, end-to-end image latency by
//! resolution/batch size, VAE decode, text encode, preemption overheads) and
//! closes the gaps between anchored entries with two analytic rules:
//!
//! * unanchored SP degrees use `speedup(p) = p / (1 + gamma * (p - 1))` with
//!   `gamma` fitted so the bracketing anchors are reproduced exactly;
//! * unanchored image batch sizes scale the batch-1 entry with
//!   `e2e(b) = e2e(1) * (alpha + (1 - alpha) * b)` using the per-resolution
//!   `batch_alpha` knob.
//!
//! All durations are `f64` milliseconds unless a key suffix says otherwise
//! (`pause_us`). Lookups never fall back silently: a configuration outside
//! the table domain and both rules is an [`ProfileError::UnknownConfiguration`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Request modality. Images are single-shot diffusion jobs, videos are
/// multi-step denoising loops with a trailing VAE decode stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Image,
    Video,
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestKind::Image => write!(f, "image"),
            RequestKind::Video => write!(f, "video"),
        }
    }
}

/// Output resolution class. Videos use the lower three, images the upper
/// three; 720p is shared by both modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResolutionClass {
    #[serde(rename = "256p")]
    R256,
    #[serde(rename = "480p")]
    R480,
    #[serde(rename = "720p")]
    R720,
    #[serde(rename = "1024p")]
    R1024,
    #[serde(rename = "1440p")]
    R1440,
}

impl ResolutionClass {
    pub const VIDEO: [ResolutionClass; 3] = [
        ResolutionClass::R256,
        ResolutionClass::R480,
        ResolutionClass::R720,
    ];
    pub const IMAGE: [ResolutionClass; 3] = [
        ResolutionClass::R720,
        ResolutionClass::R1024,
        ResolutionClass::R1440,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ResolutionClass::R256 => "256p",
            ResolutionClass::R480 => "480p",
            ResolutionClass::R720 => "720p",
            ResolutionClass::R1024 => "1024p",
            ResolutionClass::R1440 => "1440p",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "256p" => Some(ResolutionClass::R256),
            "480p" => Some(ResolutionClass::R480),
            "720p" => Some(ResolutionClass::R720),
            "1024p" => Some(ResolutionClass::R1024),
            "1440p" => Some(ResolutionClass::R1440),
            _ => None,
        }
    }

    pub fn legal_for(self, kind: RequestKind) -> bool {
        match kind {
            RequestKind::Video => ResolutionClass::VIDEO.contains(&self),
            RequestKind::Image => ResolutionClass::IMAGE.contains(&self),
        }
    }
}

impl fmt::Display for ResolutionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Static SP degree a resolution-aware scheduler assigns to a video class,
/// and the degree its offline reference latency (deadline base) assumes.
pub fn reference_sp_degree(res: ResolutionClass) -> u32 {
    match res {
        ResolutionClass::R256 => 1,
        ResolutionClass::R480 => 2,
        _ => 4,
    }
}

#[derive(Debug, Error)]
pub enum ProfileError {
    /// Malformed JSON.
    #[error("profile parse error: {0}")]
    Parse(String),
    /// Structurally valid JSON that does not match the profile schema.
    #[error("profile schema error: {0}")]
    Schema(String),
    /// Schema-valid profile whose values violate a model invariant.
    #[error("profile validation error: {0}")]
    Validation(String),
    /// Lookup outside the table domain that no interpolation rule covers.
    #[error("unknown configuration: {0}")]
    UnknownConfiguration(String),
    #[error("profile io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

// On-disk schema. Tables are row arrays so a profile diff reads naturally.
#[derive(Serialize, Deserialize)]
struct ProfileFile {
    sp_degrees: Vec<u32>,
    steps: StepsSpec,
    text_encode_ms: f64,
    video_step_ms: Vec<VideoStepRow>,
    image_e2e_ms: Vec<ImageE2eRow>,
    vae_decode_ms: Vec<VaeRow>,
    overheads: OverheadsSpec,
    #[serde(default)]
    batch_alpha: BTreeMap<ResolutionClass, f64>,
}

#[derive(Serialize, Deserialize)]
struct StepsSpec {
    video: u32,
    image: u32,
}

#[derive(Serialize, Deserialize)]
struct VideoStepRow {
    resolution: ResolutionClass,
    frames: u32,
    sp: u32,
    ms: f64,
}

#[derive(Serialize, Deserialize)]
struct ImageE2eRow {
    resolution: ResolutionClass,
    batch: u32,
    ms: f64,
}

#[derive(Serialize, Deserialize)]
struct VaeRow {
    resolution: ResolutionClass,
    frames: u32,
    ms: f64,
}

#[derive(Serialize, Deserialize)]
struct OverheadsSpec {
    pause_us: BTreeMap<u32, f64>,
    resume_ms: BTreeMap<u32, f64>,
    sp_reconfig_ms: f64,
}

const REQUIRED_KEYS: [&str; 7] = [
    "sp_degrees",
    "steps",
    "text_encode_ms",
    "video_step_ms",
    "image_e2e_ms",
    "vae_decode_ms",
    "overheads",
];

/// Validated latency model. Construction always runs the full invariant
/// check, so downstream code can assume monotone tables and covered degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyProfile {
    sp_degrees: Vec<u32>,
    video_steps_total: u32,
    image_steps_total: u32,
    text_encode_ms: f64,
    video_step_ms: BTreeMap<(ResolutionClass, u32, u32), f64>,
    image_e2e_ms: BTreeMap<(ResolutionClass, u32), f64>,
    vae_decode_ms: BTreeMap<(ResolutionClass, u32), f64>,
    pause_us: BTreeMap<u32, f64>,
    resume_ms: BTreeMap<u32, f64>,
    sp_reconfig_ms: f64,
    batch_alpha: BTreeMap<ResolutionClass, f64>,
}

impl LatencyProfile {
    /// The fixture shipped with the crate: 8x-GPU measurements for 41/81
    /// frame videos at 256p/480p/720p and single images at 720p/1024p/1440p.
    pub fn builtin_default() -> Self {
        static DEFAULT: &str = include_str!("../profiles/default.json");
        Self::from_json_str(DEFAULT).expect("builtin default profile must be valid")
    }

    pub fn from_json_str(s: &str) -> Result<Self, ProfileError> {
        let value: serde_json::Value =
            serde_json::from_str(s).map_err(|e| ProfileError::Parse(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| ProfileError::Schema("top level must be a JSON object".into()))?;
        let missing: Vec<&str> = REQUIRED_KEYS
            .iter()
            .copied()
            .filter(|k| !obj.contains_key(*k))
            .collect();
        if !missing.is_empty() {
            return Err(ProfileError::Schema(format!(
                "missing required keys: {}",
                missing.join(", ")
            )));
        }
        let file: ProfileFile =
            serde_json::from_value(value).map_err(|e| ProfileError::Schema(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProfileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    fn from_file(file: ProfileFile) -> Result<Self, ProfileError> {
        let mut video_step_ms = BTreeMap::new();
        for row in &file.video_step_ms {
            let key = (row.resolution, row.frames, row.sp);
            if video_step_ms.insert(key, row.ms).is_some() {
                return Err(ProfileError::Schema(format!(
                    "duplicate video_step_ms row for ({}, {} frames, sp {})",
                    row.resolution, row.frames, row.sp
                )));
            }
        }
        let mut image_e2e_ms = BTreeMap::new();
        for row in &file.image_e2e_ms {
            if image_e2e_ms
                .insert((row.resolution, row.batch), row.ms)
                .is_some()
            {
                return Err(ProfileError::Schema(format!(
                    "duplicate image_e2e_ms row for ({}, batch {})",
                    row.resolution, row.batch
                )));
            }
        }
        let mut vae_decode_ms = BTreeMap::new();
        for row in &file.vae_decode_ms {
            if vae_decode_ms
                .insert((row.resolution, row.frames), row.ms)
                .is_some()
            {
                return Err(ProfileError::Schema(format!(
                    "duplicate vae_decode_ms row for ({}, {} frames)",
                    row.resolution, row.frames
                )));
            }
        }
        let mut sp_degrees = file.sp_degrees.clone();
        sp_degrees.sort_unstable();
        sp_degrees.dedup();
        let profile = LatencyProfile {
            sp_degrees,
            video_steps_total: file.steps.video,
            image_steps_total: file.steps.image,
            text_encode_ms: file.text_encode_ms,
            video_step_ms,
            image_e2e_ms,
            vae_decode_ms,
            pause_us: file.overheads.pause_us,
            resume_ms: file.overheads.resume_ms,
            sp_reconfig_ms: file.overheads.sp_reconfig_ms,
            batch_alpha: file.batch_alpha,
        };
        profile.validate()?;
        Ok(profile)
    }

    fn validate(&self) -> Result<(), ProfileError> {
        fn err(msg: String) -> Result<(), ProfileError> {
            Err(ProfileError::Validation(msg))
        }
        // Latencies must be positive and finite; NaN fails this test too.
        fn positive(ms: f64) -> bool {
            ms.is_finite() && ms > 0.0
        }
        if self.sp_degrees.is_empty() {
            return err("sp_degrees must be non-empty".into());
        }
        if self.sp_degrees[0] == 0 {
            return err("sp degree 0 is invalid".into());
        }
        if self.video_steps_total == 0 || self.image_steps_total == 0 {
            return err("step totals must be positive".into());
        }
        if !positive(self.text_encode_ms) {
            return err("text_encode_ms must be positive".into());
        }
        for (&(res, frames, sp), &ms) in &self.video_step_ms {
            if !positive(ms) {
                return err(format!(
                    "video step latency must be positive ({res}, {frames} frames, sp {sp})"
                ));
            }
            if !self.sp_degrees.contains(&sp) {
                return err(format!(
                    "video_step_ms sp {sp} for ({res}, {frames} frames) not in sp_degrees"
                ));
            }
        }
        // Non-increasing in SP degree for a fixed (resolution, frames).
        let mut prev: Option<((ResolutionClass, u32), u32, f64)> = None;
        for (&(res, frames, sp), &ms) in &self.video_step_ms {
            if let Some((key, psp, pms)) = prev {
                if key == (res, frames) && ms > pms {
                    return err(format!(
                        "video step latency increases with sp for ({res}, {frames} frames): \
                         sp {psp} -> {pms} ms, sp {sp} -> {ms} ms"
                    ));
                }
            }
            prev = Some(((res, frames), sp, ms));
        }
        for (&(res, batch), &ms) in &self.image_e2e_ms {
            if batch == 0 {
                return err(format!("image batch size 0 is invalid ({res})"));
            }
            if !positive(ms) {
                return err(format!(
                    "image e2e latency must be positive ({res}, batch {batch})"
                ));
            }
        }
        // Non-decreasing in batch size, and every image resolution needs a
        // batch-1 anchor for the alpha scaling rule.
        let mut prev: Option<(ResolutionClass, u32, f64)> = None;
        for (&(res, batch), &ms) in &self.image_e2e_ms {
            if let Some((pres, pbatch, pms)) = prev {
                if pres == res && ms < pms {
                    return err(format!(
                        "image e2e latency decreases with batch for {res}: \
                         batch {pbatch} -> {pms} ms, batch {batch} -> {ms} ms"
                    ));
                }
            }
            if (prev.is_none() || prev.unwrap().0 != res) && batch != 1 {
                return err(format!("image_e2e_ms for {res} lacks a batch=1 anchor"));
            }
            prev = Some((res, batch, ms));
        }
        for (&(res, frames), &ms) in &self.vae_decode_ms {
            if !positive(ms) {
                return err(format!(
                    "vae decode latency must be positive ({res}, {frames} frames)"
                ));
            }
        }
        for &sp in &self.sp_degrees {
            if !self.pause_us.contains_key(&sp) {
                return err(format!("overheads.pause_us missing sp degree {sp}"));
            }
            if !self.resume_ms.contains_key(&sp) {
                return err(format!("overheads.resume_ms missing sp degree {sp}"));
            }
        }
        for (&sp, &us) in &self.pause_us {
            if us < 0.0 {
                return err(format!("pause overhead must be non-negative (sp {sp})"));
            }
        }
        for (&sp, &ms) in &self.resume_ms {
            if ms < 0.0 {
                return err(format!("resume overhead must be non-negative (sp {sp})"));
            }
        }
        if self.sp_reconfig_ms < 0.0 {
            return err("sp_reconfig_ms must be non-negative".into());
        }
        for (&res, &alpha) in &self.batch_alpha {
            if !(0.0..=1.0).contains(&alpha) {
                return err(format!(
                    "batch_alpha for {res} must lie in [0, 1], got {alpha}"
                ));
            }
        }
        Ok(())
    }

    fn to_file(&self) -> ProfileFile {
        ProfileFile {
            sp_degrees: self.sp_degrees.clone(),
            steps: StepsSpec {
                video: self.video_steps_total,
                image: self.image_steps_total,
            },
            text_encode_ms: self.text_encode_ms,
            video_step_ms: self
                .video_step_ms
                .iter()
                .map(|(&(resolution, frames, sp), &ms)| VideoStepRow {
                    resolution,
                    frames,
                    sp,
                    ms,
                })
                .collect(),
            image_e2e_ms: self
                .image_e2e_ms
                .iter()
                .map(|(&(resolution, batch), &ms)| ImageE2eRow {
                    resolution,
                    batch,
                    ms,
                })
                .collect(),
            vae_decode_ms: self
                .vae_decode_ms
                .iter()
                .map(|(&(resolution, frames), &ms)| VaeRow {
                    resolution,
                    frames,
                    ms,
                })
                .collect(),
            overheads: OverheadsSpec {
                pause_us: self.pause_us.clone(),
                resume_ms: self.resume_ms.clone(),
                sp_reconfig_ms: self.sp_reconfig_ms,
            },
            batch_alpha: self.batch_alpha.clone(),
        }
    }

    /// Canonical JSON: rows sorted by key, 2-space indentation. Saving the
    /// same profile twice yields identical bytes.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("profile serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProfileError> {
        let path = path.as_ref();
        let mut text = self.to_json_string();
        text.push('\n');
        std::fs::write(path, text).map_err(|source| ProfileError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn sp_degrees(&self) -> &[u32] {
        &self.sp_degrees
    }

    /// Degrees usable on a pool of `pool` GPUs: the degree must fit and
    /// either divide the pool size or equal it, so gangs never fragment the
    /// pool into unusable remainders.
    pub fn usable_degrees(&self, pool: usize) -> Vec<u32> {
        self.sp_degrees
            .iter()
            .copied()
            .filter(|&p| {
                let p = p as usize;
                p <= pool && (p == pool || pool.is_multiple_of(p))
            })
            .collect()
    }

    pub fn video_steps_total(&self) -> u32 {
        self.video_steps_total
    }

    pub fn image_steps_total(&self) -> u32 {
        self.image_steps_total
    }

    pub fn text_encode_ms(&self) -> f64 {
        self.text_encode_ms
    }

    pub fn sp_reconfig_ms(&self) -> f64 {
        self.sp_reconfig_ms
    }

    pub fn pause_overhead_ms(&self, sp: u32) -> Result<f64, ProfileError> {
        self.pause_us.get(&sp).map(|us| us / 1000.0).ok_or_else(|| {
            ProfileError::UnknownConfiguration(format!("no pause overhead for sp degree {sp}"))
        })
    }

    pub fn resume_overhead_ms(&self, sp: u32) -> Result<f64, ProfileError> {
        self.resume_ms.get(&sp).copied().ok_or_else(|| {
            ProfileError::UnknownConfiguration(format!("no resume overhead for sp degree {sp}"))
        })
    }

    /// Per-step DiT latency. Exact table hit wins; otherwise the SP degree is
    /// interpolated between the nearest anchors for the same
    /// (resolution, frames) row family.
    pub fn video_step_latency(
        &self,
        res: ResolutionClass,
        frames: u32,
        sp: u32,
    ) -> Result<f64, ProfileError> {
        if let Some(&ms) = self.video_step_ms.get(&(res, frames, sp)) {
            return Ok(ms);
        }
        if !self.sp_degrees.contains(&sp) {
            return Err(ProfileError::UnknownConfiguration(format!(
                "sp degree {sp} not in profile sp_degrees"
            )));
        }
        let anchors: Vec<(u32, f64)> = self
            .video_step_ms
            .range((res, frames, 0)..=(res, frames, u32::MAX))
            .map(|(&(_, _, p), &ms)| (p, ms))
            .collect();
        match anchors.len() {
            0 => Err(ProfileError::UnknownConfiguration(format!(
                "no video step anchors for ({res}, {frames} frames)"
            ))),
            1 => Err(ProfileError::UnknownConfiguration(format!(
                "single anchor (sp {}) for ({res}, {frames} frames) cannot fix the \
                 interpolation model; sp {sp} unavailable",
                anchors[0].0
            ))),
            _ => Ok(interp_sp(&anchors, sp)),
        }
    }

    /// End-to-end latency of an image batch. Batch sizes present in the
    /// table bypass the scaling model entirely.
    pub fn image_batch_latency(
        &self,
        res: ResolutionClass,
        batch: u32,
    ) -> Result<f64, ProfileError> {
        if batch == 0 {
            return Err(ProfileError::UnknownConfiguration(
                "image batch size 0".into(),
            ));
        }
        if let Some(&ms) = self.image_e2e_ms.get(&(res, batch)) {
            return Ok(ms);
        }
        let base = self.image_e2e_ms.get(&(res, 1)).copied().ok_or_else(|| {
            ProfileError::UnknownConfiguration(format!("no image e2e anchor for {res}"))
        })?;
        let alpha = self.batch_alpha.get(&res).copied().ok_or_else(|| {
            ProfileError::UnknownConfiguration(format!(
                "batch {batch} for {res} not anchored and no batch_alpha knob set"
            ))
        })?;
        Ok(base * (alpha + (1.0 - alpha) * batch as f64))
    }

    pub fn vae_decode_latency(
        &self,
        res: ResolutionClass,
        frames: u32,
    ) -> Result<f64, ProfileError> {
        self.vae_decode_ms
            .get(&(res, frames))
            .copied()
            .ok_or_else(|| {
                ProfileError::UnknownConfiguration(format!(
                    "no vae decode entry for ({res}, {frames} frames)"
                ))
            })
    }

    /// Time to finish a video's DiT loop from `steps_remaining`, optionally
    /// including the trailing VAE decode.
    pub fn video_remaining_ms(
        &self,
        res: ResolutionClass,
        frames: u32,
        sp: u32,
        steps_remaining: u32,
        include_vae: bool,
    ) -> Result<f64, ProfileError> {
        let step = self.video_step_latency(res, frames, sp)?;
        let mut total = steps_remaining as f64 * step;
        if include_vae {
            total += self.vae_decode_latency(res, frames)?;
        }
        Ok(total)
    }

    /// Uncontended reference latency: what the request would take alone on
    /// the cluster under the static reference configuration. Deadlines are
    /// multiples of this value.
    pub fn offline_e2e_ms(
        &self,
        kind: RequestKind,
        res: ResolutionClass,
        frames: u32,
    ) -> Result<f64, ProfileError> {
        match kind {
            RequestKind::Image => self.image_batch_latency(res, 1),
            RequestKind::Video => {
                let sp = reference_sp_degree(res);
                let step = self.video_step_latency(res, frames, sp)?;
                let vae = self.vae_decode_latency(res, frames)?;
                Ok(self.text_encode_ms + self.video_steps_total as f64 * step + vae)
            }
        }
    }
}

/// Fit `speedup(p) = p / (1 + gamma * (p - 1))` through the two anchors that
/// bracket `sp` (the two nearest from one side when `sp` lies outside the
/// anchored range) and evaluate it at `sp`. With non-increasing anchors the
/// result is monotone in `sp` and lands between the bracketing values.
fn interp_sp(anchors: &[(u32, f64)], sp: u32) -> f64 {
    debug_assert!(anchors.len() >= 2);
    debug_assert!(anchors.windows(2).all(|w| w[0].0 < w[1].0));
    let pos = anchors.partition_point(|&(p, _)| p < sp);
    let (lo, hi) = if pos == 0 {
        (anchors[0], anchors[1])
    } else if pos == anchors.len() {
        (anchors[anchors.len() - 2], anchors[anchors.len() - 1])
    } else {
        (anchors[pos - 1], anchors[pos])
    };
    let (p_lo, t_lo) = (lo.0 as f64, lo.1);
    let (p_hi, t_hi) = (hi.0 as f64, hi.1);
    let r = t_lo / t_hi;
    let denom = r * p_lo * (p_hi - 1.0) - p_hi * (p_lo - 1.0);
    if denom.abs() < 1e-12 {
        // Degenerate fit (flat anchors at p_lo = 1): constant time.
        return t_lo;
    }
    let gamma = (p_hi - r * p_lo) / denom;
    let p = sp as f64;
    t_lo * p_lo * (1.0 + gamma * (p - 1.0)) / (p * (1.0 + gamma * (p_lo - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn default_profile() -> LatencyProfile {
        LatencyProfile::builtin_default()
    }

    #[test]
    fn builtin_default_is_valid() {
        let p = default_profile();
        assert_eq!(p.video_steps_total(), 50);
        assert_eq!(p.image_steps_total(), 28);
        assert_eq!(p.sp_degrees(), &[1, 2, 4, 8]);
    }

    #[test]
    fn step_latency_anchored_values() {
        let p = default_profile();
        assert_eq!(
            p.video_step_latency(ResolutionClass::R720, 81, 1).unwrap(),
            1000.0
        );
        assert_eq!(
            p.video_step_latency(ResolutionClass::R480, 81, 1).unwrap(),
            320.6
        );
        assert_eq!(
            p.video_step_latency(ResolutionClass::R256, 81, 1).unwrap(),
            88.2
        );
        // 7.0x endpoint speedup at 720p/81f.
        assert_relative_eq!(
            p.video_step_latency(ResolutionClass::R720, 81, 8).unwrap(),
            1000.0 / 7.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn step_latency_interpolates_unanchored_degrees() {
        let p = default_profile();
        // Independent oracle: gamma fitted from the (1, 8) anchors by hand.
        let s8 = 1000.0 / p.video_step_latency(ResolutionClass::R720, 81, 8).unwrap();
        let gamma = (8.0 / s8 - 1.0) / 7.0;
        let oracle4 = 1000.0 * (1.0 + gamma * 3.0) / 4.0;
        let got4 = p.video_step_latency(ResolutionClass::R720, 81, 4).unwrap();
        assert_relative_eq!(got4, oracle4, max_relative = 1e-9);
        assert_relative_eq!(got4, 265.30612244897964, max_relative = 1e-9);
        let oracle2 = 1000.0 * (1.0 + gamma) / 2.0;
        assert_relative_eq!(
            p.video_step_latency(ResolutionClass::R720, 81, 2).unwrap(),
            oracle2,
            max_relative = 1e-9
        );
    }

    #[test]
    fn step_latency_unknown_configuration() {
        let p = default_profile();
        assert!(matches!(
            p.video_step_latency(ResolutionClass::R720, 33, 1),
            Err(ProfileError::UnknownConfiguration(_))
        ));
        assert!(matches!(
            p.video_step_latency(ResolutionClass::R720, 81, 3),
            Err(ProfileError::UnknownConfiguration(_))
        ));
        // Images-only resolutions have no video rows.
        assert!(p.video_step_latency(ResolutionClass::R1440, 81, 1).is_err());
    }

    #[test]
    fn image_batch_latency_anchor_and_scaling() {
        let p = default_profile();
        assert_eq!(
            p.image_batch_latency(ResolutionClass::R720, 1).unwrap(),
            1400.0
        );
        // alpha = 0.6: e2e(2) = 1400 * (0.6 + 0.4 * 2) = 1960.
        assert_relative_eq!(
            p.image_batch_latency(ResolutionClass::R720, 2).unwrap(),
            1960.0,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            p.image_batch_latency(ResolutionClass::R1024, 2).unwrap(),
            2800.0 * 1.2,
            max_relative = 1e-9
        );
    }

    #[test]
    fn image_batch_anchored_entry_bypasses_scaling() {
        let mut json: serde_json::Value =
            serde_json::from_str(&default_profile().to_json_string()).unwrap();
        json["image_e2e_ms"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!({"resolution": "720p", "batch": 2, "ms": 1700.0}));
        let p = LatencyProfile::from_json_str(&json.to_string()).unwrap();
        assert_eq!(
            p.image_batch_latency(ResolutionClass::R720, 2).unwrap(),
            1700.0
        );
        // Unanchored sizes still use the model.
        assert_relative_eq!(
            p.image_batch_latency(ResolutionClass::R720, 3).unwrap(),
            1400.0 * (0.6 + 0.4 * 3.0),
            max_relative = 1e-9
        );
    }

    #[test]
    fn remaining_time_composition() {
        let p = default_profile();
        assert_relative_eq!(
            p.video_remaining_ms(ResolutionClass::R720, 81, 1, 30, false)
                .unwrap(),
            30_000.0,
            max_relative = 1e-12
        );
        assert_eq!(
            p.video_remaining_ms(ResolutionClass::R720, 81, 1, 0, false)
                .unwrap(),
            0.0
        );
        assert_eq!(
            p.video_remaining_ms(ResolutionClass::R720, 81, 1, 0, true)
                .unwrap(),
            2470.0
        );
    }

    #[test]
    fn offline_e2e_values() {
        let p = default_profile();
        // 30 + 50 * 88.2 + 340 at the 256p reference degree of 1.
        assert_relative_eq!(
            p.offline_e2e_ms(RequestKind::Video, ResolutionClass::R256, 81)
                .unwrap(),
            4780.0,
            max_relative = 1e-12
        );
        let step4 = p.video_step_latency(ResolutionClass::R720, 81, 4).unwrap();
        assert_relative_eq!(
            p.offline_e2e_ms(RequestKind::Video, ResolutionClass::R720, 81)
                .unwrap(),
            30.0 + 50.0 * step4 + 2470.0,
            max_relative = 1e-12
        );
        assert_eq!(
            p.offline_e2e_ms(RequestKind::Image, ResolutionClass::R720, 1)
                .unwrap(),
            1400.0
        );
    }

    #[test]
    fn overhead_lookups() {
        let p = default_profile();
        assert_relative_eq!(
            p.pause_overhead_ms(1).unwrap(),
            0.0034,
            max_relative = 1e-12
        );
        assert_eq!(p.resume_overhead_ms(1).unwrap(), 0.036);
        assert_eq!(p.resume_overhead_ms(8).unwrap(), 0.868);
        assert_eq!(p.sp_reconfig_ms(), 0.0);
        assert!(p.resume_overhead_ms(3).is_err());
    }

    #[test]
    fn usable_degree_filter() {
        let p = default_profile();
        assert_eq!(p.usable_degrees(8), vec![1, 2, 4, 8]);
        assert_eq!(p.usable_degrees(6), vec![1, 2]);
        assert_eq!(p.usable_degrees(4), vec![1, 2, 4]);
        assert_eq!(p.usable_degrees(1), vec![1]);
    }

    #[test]
    fn save_load_round_trip() {
        let p = default_profile();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profile.json");
        p.save(&path).unwrap();
        let q = LatencyProfile::load(&path).unwrap();
        assert_eq!(p, q);
        // Canonical serialization: a second save is byte-identical.
        q.save(dir.path().join("profile2.json")).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("profile2.json")).unwrap()
        );
    }

    #[test]
    fn schema_error_lists_missing_keys() {
        let err = LatencyProfile::from_json_str(r#"{"sp_degrees": [1]}"#).unwrap_err();
        match err {
            ProfileError::Schema(msg) => {
                assert!(msg.contains("steps"), "{msg}");
                assert!(msg.contains("overheads"), "{msg}");
                assert!(!msg.contains("sp_degrees"), "{msg}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_on_malformed_json() {
        assert!(matches!(
            LatencyProfile::from_json_str("{not json"),
            Err(ProfileError::Parse(_))
        ));
    }

    #[test]
    fn validation_rejects_non_monotone_sp_row() {
        let mut json: serde_json::Value =
            serde_json::from_str(&default_profile().to_json_string()).unwrap();
        json["video_step_ms"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!({"resolution": "720p", "frames": 81, "sp": 2, "ms": 1200.0}));
        assert!(matches!(
            LatencyProfile::from_json_str(&json.to_string()),
            Err(ProfileError::Validation(_))
        ));
    }

    #[test]
    fn validation_rejects_negative_duration() {
        let mut json: serde_json::Value =
            serde_json::from_str(&default_profile().to_json_string()).unwrap();
        json["text_encode_ms"] = serde_json::json!(-1.0);
        assert!(matches!(
            LatencyProfile::from_json_str(&json.to_string()),
            Err(ProfileError::Validation(_))
        ));
    }

    proptest! {
        // Interpolated SP values always land between the bracketing anchors.
        #[test]
        fn interpolation_bounded_by_anchors(
            t1 in 10.0f64..5000.0,
            s8 in 1.05f64..8.0,
            sp in prop::sample::select(vec![2u32, 4]),
        ) {
            let anchors = [(1u32, t1), (8u32, t1 / s8)];
            let v = interp_sp(&anchors, sp);
            prop_assert!(v <= t1 + 1e-9, "{v} > {t1}");
            prop_assert!(v >= t1 / s8 - 1e-9, "{v} < {}", t1 / s8);
        }

        // The fit reproduces the anchors themselves exactly.
        #[test]
        fn interpolation_hits_anchors(
            t1 in 10.0f64..5000.0,
            s8 in 1.05f64..8.0,
        ) {
            let anchors = [(1u32, t1), (8u32, t1 / s8)];
            prop_assert!((interp_sp(&anchors, 8) - t1 / s8).abs() / (t1 / s8) < 1e-12);
        }

        // Monotone non-increasing across the whole degree range.
        #[test]
        fn interpolation_monotone(
            t1 in 10.0f64..5000.0,
            s8 in 1.05f64..8.0,
        ) {
            let anchors = [(1u32, t1), (8u32, t1 / s8)];
            let vals: Vec<f64> = (1..=8).map(|p| interp_sp(&anchors, p)).collect();
            for w in vals.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }
}
