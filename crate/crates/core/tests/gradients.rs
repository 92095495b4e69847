mod common;

use common::checks::{interface_gradients, potential_gradients};

#[test]
fn interface_gradients_match_central_differences() {
    let (worst, n) = interface_gradients();
    assert!(n >= 50, "only {n} coordinates away from ReLU kinks");
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn potential_gradient_matches_central_differences() {
    let (worst, n) = potential_gradients();
    assert_eq!(n, 200);
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}
