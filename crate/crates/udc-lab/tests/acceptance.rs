//! The acceptance suite: runs every criterion at its stated tolerance and
//! prints one pass/fail line per criterion. Run with `--nocapture` to see the
//! lines as they complete; each criterion is also an individual test.

use udc_lab::sweep;

fn assert_criterion(r: sweep::CriterionResult) {
    println!("{}", r.line());
    for d in &r.details {
        if !d.is_empty() {
            println!("    {d}");
        }
    }
    assert!(r.pass, "{} failed: {:?}", r.line(), r.details);
}

#[test]
fn criterion_01_nudc_over_fair_lossy() {
    assert_criterion(sweep::criterion_1());
}

#[test]
fn criterion_02_udc_over_reliable() {
    assert_criterion(sweep::criterion_2());
}

#[test]
fn criterion_03_udc_with_strong_detector() {
    assert_criterion(sweep::criterion_3());
}

#[test]
fn criterion_04_udc_with_t_useful_detectors() {
    assert_criterion(sweep::criterion_4());
}

#[test]
fn criterion_05_completeness_conversions() {
    assert_criterion(sweep::criterion_5());
}

#[test]
fn criterion_06_weak_accuracy_equals_strong() {
    assert_criterion(sweep::criterion_6());
}

#[test]
fn criterion_07_perfect_detector_extraction() {
    assert_criterion(sweep::criterion_7());
}

#[test]
fn criterion_08_generalized_detector_extraction() {
    assert_criterion(sweep::criterion_8());
}

#[test]
fn criterion_09_account_property() {
    assert_criterion(sweep::criterion_9());
}

#[test]
fn criterion_10_negative_controls() {
    assert_criterion(sweep::criterion_10());
}

#[test]
fn criterion_11_evaluator_against_reference() {
    assert_criterion(sweep::criterion_11());
}

#[test]
fn criterion_12_determinism() {
    assert_criterion(sweep::criterion_12());
}
