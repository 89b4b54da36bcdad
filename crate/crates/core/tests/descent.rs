mod common;

use common::{numeric_gradient, random_image, relative_error, rng};
use salient_core::saliency::{cost, output_error, run_saliency, run_saliency_observed, Prune, SaliencyParams, StepSize};
use salient_core::synth::class_names;
use salient_core::{ImageRgb, Network};

fn net() -> Network {
    Network::desk_scale(16, 16, class_names(4), 21).unwrap()
}

#[test]
fn zero_step_changes_nothing() {
    let net = net();
    let x = random_image(16, 16, &mut rng(1));
    let params = SaliencyParams { step: StepSize::Fixed(0.0), ..Default::default() };
    let run = run_saliency(&net, &x, &params).unwrap();
    assert_eq!(run.final_image, x);
    assert!(run.raw.is_zero());
    assert!(run.cost_trace.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn iterates_only_darken_and_stay_non_negative() {
    let net = net();
    for seed in 0..5 {
        let x = random_image(16, 16, &mut rng(seed));
        let mut prev = x.clone();
        let mut seen = 0;
        let run = run_saliency_observed(&net, &x, &SaliencyParams::default(), |t, img| {
            seen += 1;
            assert_eq!(t, seen);
            for (a, b) in img.data().iter().zip(prev.data()) {
                assert!(a <= b && *a >= 0.0);
            }
            prev = img.clone();
        })
        .unwrap();
        assert_eq!(seen, 10);
        assert_eq!(run.cost_trace.len(), 11);
        assert!(run.raw.data().iter().all(|&s| (0.0..=1.0).contains(&s)));
    }
}

#[test]
fn probe_picks_a_monotone_step() {
    let net = net();
    for seed in 0..5 {
        let x = random_image(16, 16, &mut rng(100 + seed));
        let run = run_saliency(&net, &x, &SaliencyParams::default()).unwrap();
        assert!(run.epsilon > 0.0 && run.epsilon <= 1.0);
        assert!(run.cost_trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", run.cost_trace);
    }
}

#[test]
fn backward_of_output_error_is_the_cost_gradient() {
    let net = net();
    let mut r = rng(2);
    let x0 = random_image(16, 16, &mut r);
    let o = net.forward(&x0).unwrap();
    let l = o.argmax();
    // Evaluate away from the baseline so the penalty term contributes.
    let x = random_image(16, 16, &mut r);
    for gamma in [0.0, 1.0, 3.0] {
        let a = net.forward(&x).unwrap();
        let e = output_error(&a, &o, l, gamma).unwrap();
        let g = net.backward_to_input(&x, &e).unwrap();
        let fd = numeric_gradient(&x, 1e-5, |img| cost(&net.forward(img).unwrap(), &o, l, gamma).unwrap());
        let err = relative_error(g.data(), &fd);
        assert!(err < 1e-4, "gamma {gamma}: {err}");
    }
}

#[test]
fn black_image_has_no_saliency() {
    let net = net();
    let run = run_saliency(&net, &ImageRgb::filled(16, 16, [0.0; 3]), &SaliencyParams::default()).unwrap();
    assert!(run.raw.is_zero());
}

#[test]
fn absolute_prune_zeroes_small_drops() {
    let net = net();
    let x = random_image(16, 16, &mut rng(3));
    let loose = SaliencyParams { theta: Prune::Absolute(0.0), ..Default::default() };
    let strict = SaliencyParams { theta: Prune::Absolute(1.0), ..Default::default() };
    assert!(!run_saliency(&net, &x, &loose).unwrap().raw.is_zero());
    assert!(run_saliency(&net, &x, &strict).unwrap().raw.is_zero());
}
