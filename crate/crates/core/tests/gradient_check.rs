//! Analytic gradients against central finite differences in f64, twenty
//! seeded instances per layer and for the whole network.

use smri::gradcheck::{self, GradCheckReport, TOLERANCE};

const INSTANCES: usize = 20;
const SEED: u64 = 2024;

fn assert_passes(report: GradCheckReport) {
    println!(
        "{:<10} instances {:>2}  coordinates {:>5}  kinks skipped {:>2}  max rel error {:.3e}",
        report.name, report.instances, report.coordinates, report.kinks_skipped, report.max_rel_error
    );
    assert_eq!(report.instances, INSTANCES);
    assert!(report.max_rel_error <= TOLERANCE, "{report:?}");
    assert!(report.passed());
}

#[test]
fn conv() {
    assert_passes(gradcheck::check_conv(INSTANCES, SEED).unwrap());
}

#[test]
fn maxpool() {
    assert_passes(gradcheck::check_maxpool(INSTANCES, SEED).unwrap());
}

#[test]
fn fully_connected() {
    assert_passes(gradcheck::check_fc(INSTANCES, SEED).unwrap());
}

#[test]
fn relu() {
    assert_passes(gradcheck::check_relu(INSTANCES, SEED).unwrap());
}

#[test]
fn softmax_cross_entropy() {
    assert_passes(gradcheck::check_softmax_ce(INSTANCES, SEED).unwrap());
}

#[test]
fn whole_network() {
    let report = gradcheck::check_network(INSTANCES, 3, SEED).unwrap();
    // 3 coordinates from each of 7 tensors, both entries of the 2-wide
    // output bias
    assert_eq!(report.coordinates, INSTANCES * (7 * 3 + 2));
    assert_passes(report);
}
