mod common;

use asi_nowcast::forecasters::Method;
use common::grad;

const TOL: f64 = 1e-4;
const SHAPES: u64 = 4;

#[test]
fn conv_gradient() {
    let e = grad::worst(grad::conv, SHAPES);
    assert!(e < TOL, "{e}");
}

#[test]
fn scale_gradient() {
    let e = grad::worst(grad::scale, SHAPES);
    assert!(e < TOL, "{e}");
}

#[test]
fn maxpool_gradient() {
    let e = grad::worst(grad::pool, SHAPES);
    assert!(e < TOL, "{e}");
}

#[test]
fn dense_gradient() {
    let e = grad::worst(grad::dense, SHAPES);
    assert!(e < TOL, "{e}");
}

#[test]
fn lstm_gradient() {
    let e = grad::worst(grad::lstm, SHAPES);
    assert!(e < TOL, "{e}");
}

#[test]
fn mae_gradient() {
    let e = grad::worst(grad::mae, SHAPES);
    assert!(e < TOL, "{e}");
}

#[test]
fn whole_network_gradients() {
    for m in [Method::A, Method::B, Method::C] {
        let e = grad::network(m, 7);
        assert!(e < TOL, "{m:?}: {e}");
    }
}
