use super::trace::OptimizeReport;
use super::Engine;
use crate::config::ProjectConfig;
use crate::error::{Error, Result};

/// Score a finished run is judged by: test split if there is one, else held-out.
pub fn final_score(report: &OptimizeReport) -> f64 {
    report.best_test_score.unwrap_or(report.best_score)
}

/// Runs a full optimization per batch size, everything else shared.
pub fn sweep_batch_sizes(cfg: &ProjectConfig, sizes: &[usize]) -> Result<Vec<(usize, f64)>> {
    if sizes.is_empty() {
        return Err(Error::Config("batch size sweep list is empty".into()));
    }
    sizes
        .iter()
        .map(|&b| {
            let mut point = cfg.clone();
            point.run.batch_size = b;
            let engine = Engine::from_project(&point)?;
            let (_, report) = engine.optimize()?;
            Ok((b, final_score(&report)))
        })
        .collect()
}
