//! Experiment commands behind the `eeg2image` binary: dataset synthesis,
//! encoder and GAN training, the loss ablation grid, evaluation and sample
//! generation.
//!
//! Exit codes: 0 success, 1 runtime or training failure, 2 usage or input
//! error.

pub mod ablate;
pub mod commands;
pub mod config;

use eeg2image::Error;

/// Bad flags, unreadable configuration or missing inputs.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Format(_)
                | Error::Integrity(_)
                | Error::Unsupported(_)
                | Error::InvalidData(_)
                | Error::Config(_)
                | Error::Shape(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

/// Caps rayon's worker count from `EEG2IMAGE_THREADS` (0 or unset = auto).
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("EEG2IMAGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| UsageError(format!("EEG2IMAGE_THREADS must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let usage = anyhow::Error::new(UsageError("x".into()));
        assert_eq!(exit_code(&usage), 2);
        let input = anyhow::Error::new(Error::Format("x".into())).context("loading");
        assert_eq!(exit_code(&input), 2);
        let training = anyhow::Error::new(Error::Training { step: 3, term: "d_loss".into(), value: f64::NAN });
        assert_eq!(exit_code(&training), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 1);
    }
}
