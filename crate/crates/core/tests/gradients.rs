mod common {
    pub mod gradcheck;
}

use common::gradcheck;

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in [1, 2, 3] {
        for report in gradcheck::run_all(seed) {
            println!("{} {} coords, max rel {:.2e}", report.name, report.coordinates, report.max_relative_error);
            assert!(report.passed(), "seed {seed}: {report:?}");
        }
    }
}
