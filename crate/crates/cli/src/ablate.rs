//! The 2×2 loss ablation: mode-seeking regularization on/off crossed with
//! differentiable augmentation on/off, one shared encoder and classifier.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use eeg2image::metrics::ScoreReport;

use crate::commands::{self, Inputs};
use crate::config::RunConfig;
use crate::UsageError;

pub const SUMMARY_FILE: &str = "ablation_summary.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationRegime {
    None,
    MsOnly,
    AugOnly,
    Both,
}

impl AblationRegime {
    pub const ALL: [Self; 4] = [Self::None, Self::MsOnly, Self::AugOnly, Self::Both];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::MsOnly => "ms_only",
            Self::AugOnly => "aug_only",
            Self::Both => "both",
        }
    }

    /// `(use_ms, use_aug)`.
    pub fn flags(self) -> (bool, bool) {
        match self {
            Self::None => (false, false),
            Self::MsOnly => (true, false),
            Self::AugOnly => (false, true),
            Self::Both => (true, true),
        }
    }

    /// Published inception score of this loss combination on the real
    /// dataset, kept as an annotation only.
    pub fn reference_is(self) -> f64 {
        match self {
            Self::None => 3.61,
            Self::MsOnly => 4.27,
            Self::AugOnly => 6.5,
            Self::Both => 6.78,
        }
    }
}

impl fmt::Display for AblationRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationRegime {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| UsageError(format!("unknown regime {s:?} (expected none, ms_only, aug_only or both)")))
    }
}

#[derive(Clone, Debug)]
pub enum Outcome {
    Pending,
    Done(ScoreReport),
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct RegimeRow {
    pub regime: AblationRegime,
    pub dir: PathBuf,
    pub outcome: Outcome,
}

pub struct AblationSummary {
    pub rows: Vec<RegimeRow>,
}

impl AblationSummary {
    pub fn complete(&self) -> bool {
        self.rows.iter().all(|r| !matches!(r.outcome, Outcome::Pending))
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| matches!(r.outcome, Outcome::Failed(_))).count()
    }

    /// Comment header with the reference scores and completion status, then
    /// one CSV row per regime.
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let refs: Vec<String> =
            AblationRegime::ALL.iter().map(|r| format!("{}={}", r.name(), r.reference_is())).collect();
        let mut text = format!("# reference inception scores: {}\n", refs.join(" "));
        text.push_str(&format!("# status: {}\n", if self.complete() { "complete" } else { "incomplete" }));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "regime",
            "use_ms",
            "use_aug",
            "status",
            "is_mean",
            "is_std",
            "kmeans_acc",
            "class_consistency",
            "diversity",
            "classifier",
            "reference_is",
            "error",
        ])?;
        for row in &self.rows {
            let (ms, aug) = row.regime.flags();
            let mut rec = vec![row.regime.name().to_string(), ms.to_string(), aug.to_string()];
            match &row.outcome {
                Outcome::Done(r) => rec.extend([
                    "ok".into(),
                    r.is_mean.to_string(),
                    r.is_std.to_string(),
                    r.kmeans_acc.map_or(String::new(), |a| a.to_string()),
                    r.class_consistency.to_string(),
                    r.diversity.to_string(),
                    r.classifier.clone(),
                ]),
                Outcome::Pending => rec.extend(["pending".into()].into_iter().chain(std::iter::repeat_n(String::new(), 6))),
                Outcome::Failed(_) => rec.extend(["failed".into()].into_iter().chain(std::iter::repeat_n(String::new(), 6))),
            }
            rec.push(row.regime.reference_is().to_string());
            rec.push(if let Outcome::Failed(e) = &row.outcome { e.clone() } else { String::new() });
            w.write_record(&rec)?;
        }
        text.push_str(&String::from_utf8(w.into_inner()?)?);
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Runs the selected regimes under `cfg.out/<regime>`, rewriting the summary
/// after each one. A failed regime is recorded and the rest still run.
pub fn cmd_ablate(cfg: &RunConfig, inputs: &Inputs, regimes: &[AblationRegime]) -> anyhow::Result<AblationSummary> {
    if regimes.is_empty() {
        return Err(UsageError("no regimes selected".into()).into());
    }
    let ds = commands::dataset(cfg)?;
    cfg.write_echo(&cfg.out)?;
    let encoder_path = inputs.encoder(&cfg.out);
    let encoder = if encoder_path.join(eeg2image::dataio::MANIFEST_FILE).exists() || inputs.encoder.is_some() {
        commands::load_encoder(&encoder_path)?
    } else {
        log::info!("no encoder checkpoint at {}; training one", encoder_path.display());
        let enc_cfg = RunConfig { out: cfg.out.clone(), ..cfg.clone() };
        commands::cmd_train_encoder(&enc_cfg)?.model
    };
    let clf = commands::classifier(cfg, &ds, &inputs.classifier(&cfg.out))?;
    let summary_path = cfg.out.join(SUMMARY_FILE);
    let mut summary = AblationSummary {
        rows: regimes
            .iter()
            .map(|&regime| RegimeRow { regime, dir: cfg.out.join(regime.name()), outcome: Outcome::Pending })
            .collect(),
    };
    summary.write(&summary_path)?;
    for i in 0..summary.rows.len() {
        let row = &summary.rows[i];
        let (use_ms, use_aug) = row.regime.flags();
        let mut rcfg = cfg.clone();
        rcfg.out = row.dir.clone();
        rcfg.gan.use_ms = use_ms;
        rcfg.gan.use_aug = use_aug;
        log::info!("ablation regime {} (use_ms={use_ms}, use_aug={use_aug})", row.regime);
        let result = (|| -> anyhow::Result<ScoreReport> {
            rcfg.write_echo(&rcfg.out)?;
            let run = commands::train_gan_run(&rcfg, &ds, &encoder, &clf, &rcfg.out)?;
            Ok(commands::evaluate_into(&rcfg, &ds, &encoder, &run.generator, &clf, &rcfg.out)?.report)
        })();
        summary.rows[i].outcome = match result {
            Ok(r) => Outcome::Done(r),
            Err(e) => {
                log::error!("regime {} failed: {e:#}", summary.rows[i].regime);
                Outcome::Failed(format!("{e:#}"))
            }
        };
        summary.write(&summary_path)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_names_round_trip() {
        for r in AblationRegime::ALL {
            assert_eq!(r.name().parse::<AblationRegime>().unwrap(), r);
        }
        assert!("ms".parse::<AblationRegime>().is_err());
    }

    #[test]
    fn pending_rows_mark_summary_incomplete() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(SUMMARY_FILE);
        let summary = AblationSummary {
            rows: vec![RegimeRow { regime: AblationRegime::Both, dir: dir.path().into(), outcome: Outcome::Pending }],
        };
        summary.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# reference inception scores: none=3.61 ms_only=4.27 aug_only=6.5 both=6.78\n"));
        assert!(text.contains("# status: incomplete"));
        assert!(text.contains("both,true,true,pending,,,,,,,6.78,"));
    }
}
