use lagcl::augment::{DroppedGraph, TransferParams};
use lagcl::trainer::{gradient_check, GradInstance, LossSelector};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

#[test]
fn every_component_matches_finite_differences() {
    let inst = GradInstance::toy(0).unwrap();
    for sel in LossSelector::ALL {
        let err = gradient_check(sel, &inst, H).unwrap();
        assert!(err < TOL, "{sel:?}: max relative error {err:.3e}");
    }
}

/// Across seeds some gradient entries are many orders of magnitude below
/// the loss, where the central difference itself is only accurate to about
/// `ε·|L|/h`. Such entries must agree to within that bound instead.
#[test]
fn finite_differences_agree_across_seeds() {
    for seed in 1..20 {
        let inst = GradInstance::toy(seed).unwrap();
        for sel in LossSelector::ALL {
            let loss = inst.loss(sel, &inst.params).unwrap();
            let roundoff = 10.0 * f64::EPSILON * loss.abs().max(1.0) / H;
            let analytic = inst.analytic_gradient(sel).unwrap();
            let numeric = inst.finite_difference_gradient(sel, H).unwrap();
            for ((_, a), (_, n)) in analytic.tensors().into_iter().zip(numeric.tensors()) {
                for (&g, &f) in a.iter().zip(n) {
                    let rel = (g - f).abs() / (g.abs() + f.abs()).max(1e-8);
                    assert!(
                        rel < TOL || (g - f).abs() < roundoff,
                        "seed {seed} {sel:?}: analytic {g:e}, numeric {f:e}"
                    );
                }
            }
        }
    }
}

#[test]
fn translation_gradient_vanishes_at_its_minimum() {
    let mut inst = GradInstance::toy(3).unwrap();
    inst.params.transfer = TransferParams::zeros(inst.hp.dim, inst.hp.layers);
    inst.inputs.selection = Some(DroppedGraph::retain_all_unit(&inst.graph));
    assert!(inst.loss(LossSelector::Trans, &inst.params).unwrap().abs() < 1e-20);
    let g = inst.analytic_gradient(LossSelector::Trans).unwrap();
    let worst = g
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-8, "largest gradient entry {worst:e}");
}
