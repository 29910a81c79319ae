//! Plain-text key-value configuration for the fitting and prediction
//! pipeline.
//!
//! The format is one `key = value` pair per line; blank lines and lines
//! starting with `#` are ignored. Unknown keys are rejected so typos
//! surface instead of silently using defaults.
//!
//! ```text
//! # shorter fit for smoke tests
//! iters = 40, 20, 40
//! lrs = 1e-2, 1e-2, 1e-3
//! sdc_n = 5
//! ```

use std::fs;
use std::path::Path;

use crate::error::SdcError;
use crate::optimize::{default_schedule, FitOptions, FitSchedule, ScheduleMode};
use crate::pipeline::predict::{PredictConfig, DEFAULT_KERNEL_N, DEFAULT_SDC_N};

/// Optional overrides parsed from a configuration file. Every field
/// defaults to "keep the built-in value".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineConfig {
    /// Per-phase iteration counts; the length must match the schedule it
    /// is applied to.
    pub iters: Option<Vec<usize>>,
    /// Per-phase learning rates; same length rule as `iters`.
    pub lrs: Option<Vec<f64>>,
    /// Seed of the random feature extractor used by fine-tune phases.
    pub extractor_seed: Option<u64>,
    /// Kernel size of the displaced-convolution method.
    pub sdc_n: Option<usize>,
    /// Kernel size of the kernel-only method.
    pub kernel_n: Option<usize>,
    /// Radius of the integer-translation seeding grid, when enabled.
    pub multi_start_radius: Option<usize>,
    /// Number of most recent frames a prediction conditions on.
    pub condition: Option<usize>,
}

fn bad(line_no: usize, msg: impl std::fmt::Display) -> SdcError {
    SdcError::BadConfig(format!("line {line_no}: {msg}"))
}

fn parse_list<T: std::str::FromStr>(value: &str, line_no: usize) -> Result<Vec<T>, SdcError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|item| {
            let item = item.trim();
            item.parse::<T>()
                .map_err(|e| bad(line_no, format!("bad list entry '{item}': {e}")))
        })
        .collect()
}

fn parse_seed(value: &str, line_no: usize) -> Result<u64, SdcError> {
    let parsed = match value.strip_prefix("0x").or_else(|| value.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => value.parse(),
    };
    parsed.map_err(|e| bad(line_no, format!("bad seed '{value}': {e}")))
}

/// Parses configuration text. See the module docs for the format.
pub fn parse_config(text: &str) -> Result<PipelineConfig, SdcError> {
    let mut cfg = PipelineConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(line_no, format!("expected 'key = value', got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(bad(line_no, format!("key '{key}' has no value")));
        }
        match key {
            "iters" => cfg.iters = Some(parse_list(value, line_no)?),
            "lrs" => cfg.lrs = Some(parse_list(value, line_no)?),
            "extractor_seed" => cfg.extractor_seed = Some(parse_seed(value, line_no)?),
            "sdc_n" => {
                cfg.sdc_n = Some(
                    value
                        .parse()
                        .map_err(|e| bad(line_no, format!("bad sdc_n '{value}': {e}")))?,
                )
            }
            "kernel_n" => {
                cfg.kernel_n = Some(
                    value
                        .parse()
                        .map_err(|e| bad(line_no, format!("bad kernel_n '{value}': {e}")))?,
                )
            }
            "multi_start_radius" => {
                cfg.multi_start_radius = Some(value.parse().map_err(|e| {
                    bad(line_no, format!("bad multi_start_radius '{value}': {e}"))
                })?)
            }
            "condition" => {
                cfg.condition = Some(
                    value
                        .parse()
                        .map_err(|e| bad(line_no, format!("bad condition '{value}': {e}")))?,
                )
            }
            other => return Err(bad(line_no, format!("unknown key '{other}'"))),
        }
    }
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<PipelineConfig, SdcError> {
    let text = fs::read_to_string(path).map_err(|source| SdcError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

impl PipelineConfig {
    /// Builds a schedule of the given mode with this config's iteration
    /// and learning-rate overrides applied. Override lists must match the
    /// mode's phase count.
    pub fn build_schedule(&self, mode: ScheduleMode) -> Result<FitSchedule, SdcError> {
        let mut schedule = default_schedule(mode);
        if let Some(iters) = &self.iters {
            if iters.len() != schedule.phases.len() {
                return Err(SdcError::BadConfig(format!(
                    "iters has {} entries but the schedule has {} phases",
                    iters.len(),
                    schedule.phases.len()
                )));
            }
            for (phase, &it) in schedule.phases.iter_mut().zip(iters) {
                phase.iters = it;
            }
        }
        if let Some(lrs) = &self.lrs {
            if lrs.len() != schedule.phases.len() {
                return Err(SdcError::BadConfig(format!(
                    "lrs has {} entries but the schedule has {} phases",
                    lrs.len(),
                    schedule.phases.len()
                )));
            }
            for (phase, &lr) in schedule.phases.iter_mut().zip(lrs) {
                phase.lr = lr;
            }
        }
        schedule.validate()?;
        Ok(schedule)
    }

    /// Builds the full prediction configuration: the overridden schedule
    /// of the given mode, kernel sizes, and fitting options. `seed` drives
    /// every random choice of the fit; the extractor seed falls back to
    /// its built-in default when the config does not set one.
    pub fn predict_config(
        &self,
        mode: ScheduleMode,
        seed: u64,
    ) -> Result<PredictConfig, SdcError> {
        let mut fit = FitOptions {
            seed,
            multi_start_radius: self.multi_start_radius,
            ..FitOptions::default()
        };
        if let Some(es) = self.extractor_seed {
            fit.extractor_seed = es;
        }
        Ok(PredictConfig {
            sdc_n: self.sdc_n.unwrap_or(DEFAULT_SDC_N),
            kernel_n: self.kernel_n.unwrap_or(DEFAULT_KERNEL_N),
            schedule: self.build_schedule(mode)?,
            fit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file_round_trips_every_key() {
        let text = "\
# comment line

iters = 40, 20, 40
lrs = 1e-2, 1e-2, 1e-3
extractor_seed = 0xFEA7
sdc_n = 5
kernel_n = 7
multi_start_radius = 4
condition = 3
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.iters.as_deref(), Some(&[40, 20, 40][..]));
        assert_eq!(cfg.lrs.as_deref(), Some(&[1e-2, 1e-2, 1e-3][..]));
        assert_eq!(cfg.extractor_seed, Some(0xFEA7));
        assert_eq!(cfg.sdc_n, Some(5));
        assert_eq!(cfg.kernel_n, Some(7));
        assert_eq!(cfg.multi_start_radius, Some(4));
        assert_eq!(cfg.condition, Some(3));
    }

    #[test]
    fn empty_text_means_all_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert!(cfg.iters.is_none());
    }

    #[test]
    fn unknown_keys_and_malformed_lines_are_rejected() {
        assert!(parse_config("learning_rate = 3").is_err());
        assert!(parse_config("just some words").is_err());
        assert!(parse_config("iters =").is_err());
        assert!(parse_config("iters = 1, two, 3").is_err());
        assert!(parse_config("extractor_seed = banana").is_err());
    }

    #[test]
    fn schedule_overrides_apply_and_length_mismatches_fail() {
        let cfg = parse_config("iters = 40, 20, 40\nlrs = 1e-3, 1e-3, 1e-4").unwrap();
        let schedule = cfg.build_schedule(ScheduleMode::Quick).unwrap();
        assert_eq!(
            schedule.phases.iter().map(|p| p.iters).collect::<Vec<_>>(),
            vec![40, 20, 40]
        );
        assert_eq!(schedule.phases[2].lr, 1e-4);

        // Quick mode has three phases; four entries cannot apply.
        let wrong = parse_config("iters = 1, 2, 3, 4").unwrap();
        assert!(wrong.build_schedule(ScheduleMode::Quick).is_err());
        // The same file works for the four-phase mode.
        assert!(wrong.build_schedule(ScheduleMode::Full).is_ok());
    }

    #[test]
    fn decimal_seed_is_accepted_too() {
        let cfg = parse_config("extractor_seed = 12345").unwrap();
        assert_eq!(cfg.extractor_seed, Some(12345));
    }

    #[test]
    fn predict_config_applies_overrides_and_defaults() {
        let cfg =
            parse_config("sdc_n = 5\nextractor_seed = 7\nmulti_start_radius = 3").unwrap();
        let pc = cfg.predict_config(ScheduleMode::Quick, 42).unwrap();
        assert_eq!(pc.sdc_n, 5);
        assert_eq!(pc.kernel_n, DEFAULT_KERNEL_N);
        assert_eq!(pc.fit.seed, 42);
        assert_eq!(pc.fit.extractor_seed, 7);
        assert_eq!(pc.fit.multi_start_radius, Some(3));
        assert_eq!(pc.schedule.phases.len(), 3);

        let defaults = PipelineConfig::default()
            .predict_config(ScheduleMode::Full, 0)
            .unwrap();
        assert_eq!(defaults.sdc_n, DEFAULT_SDC_N);
        assert_eq!(defaults.schedule.phases.len(), 4);
        assert_eq!(
            defaults.fit.extractor_seed,
            crate::features::DEFAULT_EXTRACTOR_SEED
        );
    }
}
