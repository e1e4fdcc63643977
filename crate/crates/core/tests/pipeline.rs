use conquer_core::datagen::{generate_federated, make_truth, DgpKind, DgpSpec};
use conquer_core::extreme::{run_two_step_conquer, TwoStepConfig};
use conquer_core::federation::{run_algorithm1, RoundConfig, SmoothingPlan};
use conquer_core::inference::{estimate_variance, wald_intervals, VarianceKind};
use conquer_core::kernels::Kernel;
use conquer_core::smoothed_qr::{fit_conquer, GdBbConfig};
use conquer_core::FederatedDataset;
use nalgebra::DVector;

fn initial(fed: &FederatedDataset, plan: &SmoothingPlan) -> DVector<f64> {
    fit_conquer(fed.master(), &plan.local_loss().unwrap(), None, &GdBbConfig::default())
        .unwrap()
        .beta
}

#[test]
fn shards_round_trip_through_disk() {
    let spec = DgpSpec::new(DgpKind::QuadraticHetero, 4, 50, 3, 0.3, 2.0, 17).unwrap();
    let fed = generate_federated(&spec, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = fed.write_dir(dir.path()).unwrap();
    let back = FederatedDataset::read_manifest(&manifest).unwrap();
    assert_eq!(back, fed);
}

#[test]
fn distributed_fit_beats_its_initializer() {
    let spec = DgpSpec::new(DgpKind::LinearHetero(0.2), 10, 300, 20, 0.8, 2.0, 4).unwrap();
    let truth = make_truth(&spec);
    let (mut before, mut after) = (0.0, 0.0);
    for trial in 0..5 {
        let fed = generate_federated(&spec, trial).unwrap();
        let plan = SmoothingPlan::with_scale(&fed, 0.8, 2.5, Kernel::Gaussian).unwrap();
        let init = initial(&fed, &plan);
        let fit = run_algorithm1(&fed, &plan, &init, &RoundConfig::new(10)).unwrap();
        before += (init - &truth).norm();
        after += (fit.beta - &truth).norm();
    }
    assert!(after < 0.6 * before, "{after} vs {before}");
}

#[test]
fn two_step_reduces_intercept_bias_at_extreme_level() {
    let tau = 0.95;
    let spec = DgpSpec::new(DgpKind::LinearHetero(0.0), 5, 500, 20, tau, 4.0, 99).unwrap();
    let truth = make_truth(&spec);
    let (mut plain, mut two) = (0.0, 0.0);
    let trials = 100;
    for trial in 0..trials {
        let fed = generate_federated(&spec, trial).unwrap();
        let plan = SmoothingPlan::with_scale(&fed, tau, 2.5, Kernel::Gaussian).unwrap();
        let init = initial(&fed, &plan);
        let a = run_algorithm1(&fed, &plan, &init, &RoundConfig::new(10)).unwrap();
        let b = run_two_step_conquer(&fed, &plan, &init, &TwoStepConfig::new(10)).unwrap();
        plain += a.beta[0] - truth[0];
        two += b.beta[0] - truth[0];
    }
    let (plain, two) = (plain / trials as f64, two / trials as f64);
    assert!(two.abs() < plain.abs(), "two-step bias {two} vs plain {plain}");
}

#[test]
fn two_step_matches_plain_slopes_at_the_median() {
    let spec = DgpSpec::new(DgpKind::LinearHetero(0.0), 4, 400, 10, 0.5, 4.0, 12).unwrap();
    let mut diff = DVector::zeros(4);
    let trials = 20;
    for trial in 0..trials {
        let fed = generate_federated(&spec, trial).unwrap();
        let plan = SmoothingPlan::with_scale(&fed, 0.5, 2.5, Kernel::Gaussian).unwrap();
        let init = initial(&fed, &plan);
        let a = run_algorithm1(&fed, &plan, &init, &RoundConfig::new(10)).unwrap();
        let b = run_two_step_conquer(&fed, &plan, &init, &TwoStepConfig::new(10)).unwrap();
        diff += (a.beta - b.beta).rows(1, 4);
    }
    diff /= trials as f64;
    assert!(diff.amax() < 5e-3, "mean slope difference {diff}");
}

#[test]
fn wald_intervals_cover_at_nominal_rate() {
    let tau = 0.5;
    let spec = DgpSpec::new(DgpKind::LinearHetero(0.0), 3, 400, 10, tau, 5.0, 3).unwrap();
    let truth = make_truth(&spec);
    let trials = 100;
    let mut covered = 0;
    let mut total = 0;
    for trial in 0..trials {
        let fed = generate_federated(&spec, trial).unwrap();
        let plan = SmoothingPlan::with_scale(&fed, tau, 2.5, Kernel::Gaussian).unwrap();
        let init = initial(&fed, &plan);
        let fit = run_algorithm1(&fed, &plan, &init, &RoundConfig::new(10)).unwrap();
        let v = estimate_variance(&fed, &fit.beta, VarianceKind::TypeII, tau, plan.b, plan.kernel, 0.05).unwrap();
        let r = wald_intervals(&fit.beta, &v, fed.total_rows(), 0.05).unwrap();
        for c in &r.coefs {
            total += 1;
            if c.set.contains(truth[c.coef]) {
                covered += 1;
            }
        }
    }
    let rate = covered as f64 / total as f64;
    assert!((0.88..=0.995).contains(&rate), "coverage {rate}");
}
