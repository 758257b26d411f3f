//! Per-layer arithmetic-mode selection against a validation dataset.
//!
//! The selection is greedy: measure the all-Precise baseline, probe each
//! layer's solo flip to Imprecise, then flip layers cumulatively in
//! ascending order of solo degradation while the re-measured accuracy
//! stays within the budget. A layer rejected for Imprecise is retried
//! Relaxed before settling on Precise.

use thiserror::Error;

use crate::dataset::LabeledDataset;
use crate::engine::{
    build_execution_plan, run_network, ArithmeticMode, EngineError, ModeSpec, PlanConfig,
};
use crate::model::{NetworkModel, ParameterSet};

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset records are {dataset} but the network expects {model}")]
    ShapeMismatch { dataset: String, model: String },
    #[error("tolerance must be >= 0, got {0}")]
    NegativeTolerance(f64),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Result of mode selection: per-layer modes plus the measured accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAssignment {
    pub modes: Vec<ArithmeticMode>,
    pub baseline_accuracy: f64,
    pub achieved_accuracy: f64,
    /// Solo-flip accuracy degradation per layer (aligned with the model).
    pub solo_degradation: Vec<f64>,
    pub tolerance: f64,
}

impl ModeAssignment {
    pub fn imprecise_layers(&self) -> usize {
        self.modes
            .iter()
            .filter(|m| **m == ArithmeticMode::Imprecise)
            .count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalyzerConfig {
    pub u: usize,
    pub workers: usize,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self { u: 4, workers: 1 }
    }
}

/// Index of the largest value, ties broken toward the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (idx, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = idx;
        }
    }
    best
}

/// Classification accuracy of the network under a per-layer mode
/// assignment: fraction of records whose terminal argmax equals the label.
pub fn evaluate_accuracy(
    model: &NetworkModel,
    params: &ParameterSet,
    modes: &[ArithmeticMode],
    dataset: &LabeledDataset,
    config: &AnalyzerConfig,
) -> Result<f64, AnalyzerError> {
    if dataset.is_empty() {
        return Err(AnalyzerError::EmptyDataset);
    }
    if dataset.shape() != model.input_shape() {
        return Err(AnalyzerError::ShapeMismatch {
            dataset: dataset.shape().to_string(),
            model: model.input_shape().to_string(),
        });
    }
    let plan = build_execution_plan(
        model,
        &PlanConfig {
            u: config.u,
            // Records are evaluated in parallel; keep each inference
            // single-threaded.
            workers: 1,
            modes: ModeSpec::PerLayer(modes.to_vec()),
        },
    )?;

    let records = dataset.records();
    let workers = config.workers.max(1);
    let chunk = records.len().div_ceil(workers);
    let correct = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for part in records.chunks(chunk) {
            let plan = &plan;
            handles.push(scope.spawn(move || {
                let mut correct = 0usize;
                for (input, label) in part {
                    let result = run_network(plan, model, params, input)?;
                    if argmax(result.output.data()) == *label {
                        correct += 1;
                    }
                }
                Ok::<usize, EngineError>(correct)
            }));
        }
        let mut total = 0usize;
        for h in handles {
            total += h.join().expect("evaluation thread panicked")?;
        }
        Ok::<usize, EngineError>(total)
    })?;
    Ok(correct as f64 / records.len() as f64)
}

/// Greedy mode selection under an accuracy-degradation budget.
pub fn select_modes(
    model: &NetworkModel,
    params: &ParameterSet,
    dataset: &LabeledDataset,
    tolerance: f64,
    config: &AnalyzerConfig,
) -> Result<ModeAssignment, AnalyzerError> {
    if tolerance < 0.0 {
        return Err(AnalyzerError::NegativeTolerance(tolerance));
    }
    let layer_count = model.layers().len();
    let all_precise = vec![ArithmeticMode::Precise; layer_count];
    let baseline = evaluate_accuracy(model, params, &all_precise, dataset, config)?;
    let budget = baseline - tolerance;

    // Solo flips: one layer Imprecise at a time.
    let mut solo_degradation = vec![0.0f64; layer_count];
    let mut candidates = Vec::new();
    for idx in 0..layer_count {
        if idx == model.input_index() {
            continue;
        }
        let mut modes = all_precise.clone();
        modes[idx] = ArithmeticMode::Imprecise;
        let acc = evaluate_accuracy(model, params, &modes, dataset, config)?;
        solo_degradation[idx] = baseline - acc;
        candidates.push(idx);
    }
    // Ascending degradation; ties keep topological order for determinism.
    candidates.sort_by(|&a, &b| {
        solo_degradation[a]
            .partial_cmp(&solo_degradation[b])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut modes = all_precise;
    let mut achieved = baseline;
    for idx in candidates {
        let mut trial = None;
        for mode in [ArithmeticMode::Imprecise, ArithmeticMode::Relaxed] {
            let prev = modes[idx];
            modes[idx] = mode;
            let acc = evaluate_accuracy(model, params, &modes, dataset, config)?;
            if acc >= budget {
                trial = Some(acc);
                break;
            }
            modes[idx] = prev;
        }
        if let Some(acc) = trial {
            achieved = acc;
        }
    }

    Ok(ModeAssignment {
        modes,
        baseline_accuracy: baseline,
        achieved_accuracy: achieved,
        solo_degradation,
        tolerance,
    })
}

/// Line-oriented analysis report with a stable field order.
pub fn format_report(model: &NetworkModel, assignment: &ModeAssignment) -> String {
    let mut out = String::new();
    out.push_str("analysis v1\n");
    out.push_str(&format!("tolerance {:.6}\n", assignment.tolerance));
    out.push_str(&format!("baseline {:.6}\n", assignment.baseline_accuracy));
    out.push_str(&format!("final {:.6}\n", assignment.achieved_accuracy));
    for (idx, layer) in model.layers().iter().enumerate() {
        out.push_str(&format!(
            "layer {} mode={} solo_degradation={:.6}\n",
            layer.name, assignment.modes[idx], assignment.solo_degradation[idx]
        ));
    }
    out
}
