use crate::generator::{GenConfig, HistoryGenerator};
use crate::graph::is_serializable;
use crate::history::History;
use crate::oracle::{brute_force_serializable, BRUTE_FORCE_LIMIT};
use crate::project::project;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub case: usize,
    pub reactor_model: bool,
    pub classic_model: bool,
    pub brute_force: Option<bool>,
    pub history: History,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SuiteReport {
    pub cases: usize,
    pub serializable: usize,
    pub non_serializable: usize,
    pub brute_force_checked: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// Checks, on `n_cases` random reactor-model histories, that the history is
/// serializable iff its classic projection is, and that both agree with the
/// brute-force oracle whenever it applies.
pub fn theorem1_suite(seed: u64, n_cases: usize) -> SuiteReport {
    theorem1_suite_with(seed, n_cases, GenConfig::default())
}

pub fn theorem1_suite_with(seed: u64, n_cases: usize, cfg: GenConfig) -> SuiteReport {
    let mut gen = HistoryGenerator::new(seed, cfg);
    let mut report = SuiteReport::default();
    for _ in 0..n_cases {
        let h = gen.generate();
        let reactor = is_serializable(&h).expect("generated histories are well formed");
        let case = report.cases;
        report.cases += 1;
        let classic = project(&h)
            .and_then(|p| is_serializable(&p))
            .expect("projection of a valid history is valid");
        let brute = if h.committed().len() <= BRUTE_FORCE_LIMIT {
            report.brute_force_checked += 1;
            Some(brute_force_serializable(&h).expect("within limit"))
        } else {
            None
        };
        if reactor {
            report.serializable += 1;
        } else {
            report.non_serializable += 1;
        }
        if reactor != classic || brute.is_some_and(|b| b != reactor) {
            report.counterexamples.push(Counterexample {
                case,
                reactor_model: reactor,
                classic_model: classic,
                brute_force: brute,
                history: h,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes_and_is_deterministic() {
        let a = theorem1_suite(11, 100);
        let b = theorem1_suite(11, 100);
        assert!(a.passed(), "{:?}", a.counterexamples.first());
        assert_eq!(a, b);
        assert!(a.serializable > 0 && a.non_serializable > 0);
    }
}
