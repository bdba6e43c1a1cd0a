use std::collections::HashMap;

use super::{check_sat, refutation, ConstraintError, Formula, SmtConfig, SmtSolver, Verdict};

/// Entailment oracle owned by one simulation run.
///
/// Queries go to the internal procedure; formulas it rejects as outside
/// its fragment are forwarded to the external solver when one is
/// configured. Verdicts are memoized per run.
#[derive(Debug, Default)]
pub struct Oracle {
    external: Option<SmtSolver>,
    cache: HashMap<Formula, Verdict>,
}

impl Oracle {
    pub fn internal() -> Oracle {
        Oracle::default()
    }

    pub fn with_solver(config: SmtConfig) -> Oracle {
        Oracle {
            external: Some(SmtSolver::new(config)),
            cache: HashMap::new(),
        }
    }

    pub fn check_sat(&mut self, f: &Formula) -> Result<Verdict, ConstraintError> {
        if let Some(v) = self.cache.get(f) {
            return Ok(*v);
        }
        let verdict = match check_sat(f) {
            Err(ConstraintError::Fragment { .. }) if self.external.is_some() => {
                self.external.as_mut().expect("checked").check_sat(f)?
            }
            other => other?,
        };
        if verdict != Verdict::Unknown {
            self.cache.insert(f.clone(), verdict);
        }
        Ok(verdict)
    }

    pub fn check_unsat(&mut self, f: &Formula) -> Result<bool, ConstraintError> {
        match self.check_sat(f)? {
            Verdict::Unsat => Ok(true),
            Verdict::Sat => Ok(false),
            Verdict::Unknown => Err(ConstraintError::Undecided(f.to_string())),
        }
    }

    pub fn entails(&mut self, c: &Formula, d: &Formula) -> Result<bool, ConstraintError> {
        self.check_unsat(&refutation(c, d))
    }
}
