use fedsink_core::solve::total_objective;
use fedsink_core::{solve_centralized_with, ExtFloat, Problem, Scalar, StopPolicy, Verdict};
use serde::{Deserialize, Serialize};

use crate::config::{EpsilonStudySpec, InstanceSource, Precision};
use crate::plan::{resolve, Instance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub epsilon: f64,
    /// First iteration whose objective is within `tolerance` (relative) of the final objective.
    pub i_min: u64,
    pub tolerance: f64,
    pub final_objective: f64,
    pub iterations: u64,
    pub verdict: Verdict,
    pub err_a: f64,
    pub precision: Precision,
}

pub fn i_min(objectives: &[f64], tolerance: f64) -> u64 {
    let Some(&last) = objectives.last() else { return 0 };
    objectives.iter().position(|o| (o - last).abs() <= tolerance * last.abs()).unwrap_or(0) as u64
}

/// Objective at every iteration of a centralized solve, evaluated in `T`.
pub fn objective_trajectory<T: Scalar>(problem: &Problem<f64>, stop: &StopPolicy) -> (Vec<f64>, Verdict, f64) {
    let p = problem.cast::<T>();
    let mut objectives = Vec::new();
    let result = solve_centralized_with(&p, stop, |rec| {
        objectives.push(total_objective(rec.state, rec.kernel, p.cost().view()).to_f64());
    })
    .expect("instance was validated");
    (objectives, result.verdict, result.err_a.to_f64())
}

pub fn with_epsilon(problem: &Problem<f64>, epsilon: f64) -> Result<Problem<f64>, fedsink_core::OtError> {
    Problem::new(problem.cost().clone(), problem.source().clone(), problem.targets().clone(), epsilon)
}

pub fn epsilon_study(instance: &InstanceSource, study: &EpsilonStudySpec) -> Result<Vec<StudyRow>, String> {
    let base = match resolve(instance, None).map_err(|e| e.to_string())? {
        Instance::Generate(g) => fedsink_core::generate(&g).map_err(|e| e.to_string())?,
        Instance::Fixed { problem, .. } => (*problem).clone(),
    };
    let mut rows = Vec::new();
    for &epsilon in &study.epsilons {
        let problem = with_epsilon(&base, epsilon).map_err(|e| e.to_string())?;
        let (objectives, verdict, err_a) = match study.precision {
            Precision::Extended => objective_trajectory::<ExtFloat>(&problem, &study.stop),
            Precision::Double => objective_trajectory::<f64>(&problem, &study.stop),
        };
        rows.push(StudyRow {
            epsilon,
            i_min: i_min(&objectives, study.tolerance),
            tolerance: study.tolerance,
            final_objective: *objectives.last().expect("at least the initial state is observed"),
            iterations: objectives.len() as u64 - 1,
            verdict,
            err_a,
            precision: study.precision,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i_min_is_first_entry_near_the_end() {
        assert_eq!(i_min(&[5.0, 2.0, 1.0005, 1.2, 1.0], 1e-3), 2);
        assert_eq!(i_min(&[1.0], 1e-3), 0);
        assert_eq!(i_min(&[], 1e-3), 0);
    }
}
