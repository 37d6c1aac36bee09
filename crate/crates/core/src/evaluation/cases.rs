use super::experiment::ExperimentSpec;
use super::Estimator;

/// A named data-generating setting of the estimator comparison studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentCase {
    pub name: &'static str,
    pub dims: &'static [usize],
    /// Rank settings studied for this case; the all-2 setting is the default.
    pub rank_settings: &'static [&'static [usize]],
    pub sample_sizes: &'static [usize],
    pub estimators: &'static [Estimator],
}

const LOW_DIM: &[Estimator] = &[Estimator::Ltr, Estimator::Rrr, Estimator::Ols];
const HIGH_DIM: &[Estimator] = &[
    Estimator::Sn,
    Estimator::Mn,
    Estimator::Ssn,
    Estimator::Tssn,
];

const RANKS_1: &[&[usize]] = &[&[1, 1, 1, 1], &[2, 2, 2, 2], &[2, 3, 2, 3]];
const RANKS_2: &[&[usize]] = &[
    &[1, 1, 1, 1, 1, 1],
    &[2, 2, 2, 1, 1, 1],
    &[2, 2, 2, 2, 2, 2],
];
const RANKS_3: &[&[usize]] = &[&[1, 1, 1, 1], &[2, 2, 1, 1], &[2, 2, 2, 2]];

const T_1: &[usize] = &[1000, 1250, 1500, 1750, 2000];
const T_3: &[usize] = &[400, 550, 700, 850, 1000];
const T_4: &[usize] = &[600, 750, 900, 1050, 1200];

pub const EXPERIMENT_CASES: [ExperimentCase; 8] = [
    ExperimentCase {
        name: "1a",
        dims: &[5, 5],
        rank_settings: RANKS_1,
        sample_sizes: T_1,
        estimators: LOW_DIM,
    },
    ExperimentCase {
        name: "1b",
        dims: &[10, 10],
        rank_settings: RANKS_1,
        sample_sizes: T_1,
        estimators: LOW_DIM,
    },
    ExperimentCase {
        name: "2a",
        dims: &[5, 5, 5],
        rank_settings: RANKS_2,
        sample_sizes: T_1,
        estimators: LOW_DIM,
    },
    ExperimentCase {
        name: "2b",
        dims: &[7, 7, 7],
        rank_settings: RANKS_2,
        sample_sizes: T_1,
        estimators: LOW_DIM,
    },
    ExperimentCase {
        name: "3a",
        dims: &[5, 5],
        rank_settings: RANKS_3,
        sample_sizes: T_3,
        estimators: HIGH_DIM,
    },
    ExperimentCase {
        name: "3b",
        dims: &[10, 10],
        rank_settings: RANKS_3,
        sample_sizes: T_3,
        estimators: HIGH_DIM,
    },
    ExperimentCase {
        name: "4a",
        dims: &[5, 5, 5],
        rank_settings: RANKS_2,
        sample_sizes: T_4,
        estimators: HIGH_DIM,
    },
    ExperimentCase {
        name: "4b",
        dims: &[7, 7, 7],
        rank_settings: RANKS_2,
        sample_sizes: T_4,
        estimators: HIGH_DIM,
    },
];

pub fn experiment_case(name: &str) -> Option<&'static ExperimentCase> {
    EXPERIMENT_CASES
        .iter()
        .find(|c| c.name.eq_ignore_ascii_case(name))
}

impl ExperimentCase {
    pub fn default_ranks(&self) -> &'static [usize] {
        self.rank_settings
            .iter()
            .find(|r| r.iter().all(|&x| x == 2))
            .copied()
            .unwrap_or(self.rank_settings[0])
    }

    /// Spec with the default ranks, grid and estimators and 50 replications.
    pub fn spec(&self) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(self.name, self.dims, self.default_ranks());
        spec.sample_sizes = self.sample_sizes.to_vec();
        spec.estimators = self.estimators.to_vec();
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_consistent() {
        for case in &EXPERIMENT_CASES {
            for r in case.rank_settings {
                assert_eq!(r.len(), 2 * case.dims.len());
            }
            assert!(case.default_ranks().iter().all(|&x| x == 2));
            assert!(case.spec().validate().is_ok());
        }
        assert_eq!(experiment_case("3A").unwrap().dims, &[5, 5]);
        assert!(experiment_case("5a").is_none());
    }
}
