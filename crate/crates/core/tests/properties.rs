use hrv_core::mc::{alpha_norm, from_polar, polar, simulate_stationary, SimulationConfig};
use hrv_core::mgf::{PhiEvaluator, TailIndices};
use hrv_core::rng::with_workers;
use hrv_core::tails::{joint_tail_scan, marginal_tail_scan, JointSource};
use hrv_core::{BLaw, Family, ModelSpec};
use proptest::prelude::*;

fn log_gaussian(eta: f64) -> ModelSpec {
    ModelSpec::new(Family::LogGaussian {
        m: [-0.5, -0.5],
        c: [[1.0, eta], [eta, 1.0]],
        b_law: BLaw::Gaussian {
            mean: [0.0, 0.0],
            cov: [[1.0, 0.0], [0.0, 1.0]],
        },
    })
    .unwrap()
}

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, -1.0..1.0f64]
}

proptest! {
    #[test]
    fn polar_round_trip(x in prop::collection::vec(coord(), 2..5), a in prop::collection::vec(0.3..6.0f64, 4)) {
        let alphas = &a[..x.len()];
        let (s, omega) = polar(&x, alphas);
        prop_assert!((alpha_norm(&omega, alphas) - 1.0).abs() < 1e-12 || s == 0.0);
        let back = from_polar(s, &omega, alphas);
        for (u, v) in x.iter().zip(&back) {
            prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }

    #[test]
    fn alpha_norm_is_homogeneous(x in prop::collection::vec(coord(), 2..5), a in prop::collection::vec(0.3..6.0f64, 4), t in 1e-3..1e3f64) {
        let alphas = &a[..x.len()];
        let scaled: Vec<f64> = x.iter().zip(alphas).map(|(v, al)| t.powf(1.0 / al) * v).collect();
        let lhs = alpha_norm(&scaled, alphas);
        let rhs = t * alpha_norm(&x, alphas);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }

    /// Coordinates of one block share `|A_i|^{alpha_i}`, so the block norm scales by `e^U`.
    #[test]
    fn block_norm_scales_by_exp_u(x in prop::collection::vec(coord(), 3), a0 in 0.01..3.0f64, a1 in 0.01..3.0f64, signs in 0u8..8) {
        let alphas = [1.5, 0.7, 3.0];
        let u = alphas[0] * a0.ln();
        let mag = [a0, a1, (u / alphas[2]).exp()];
        let a: Vec<f64> = (0..3).map(|i| if signs >> i & 1 == 1 { -mag[i] } else { mag[i] }).collect();
        let block = |v: &[f64]| alpha_norm(&[v[0], v[2]], &[alphas[0], alphas[2]]);
        let ax: Vec<f64> = x.iter().zip(&a).map(|(v, s)| v * s).collect();
        let lhs = block(&ax);
        let rhs = u.exp() * block(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }

    #[test]
    fn phi_is_midpoint_convex(p in (-0.5..1.5f64, -0.5..1.5f64), q in (-0.5..1.5f64, -0.5..1.5f64), eta in -0.9..0.9f64) {
        let ev = PhiEvaluator::auto(&log_gaussian(eta), &TailIndices::given([1.0, 1.0])).unwrap();
        let (p, q) = ([p.0, p.1], [q.0, q.1]);
        let mid = ev.phi([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]).unwrap().value;
        let avg = (ev.phi(p).unwrap().value + ev.phi(q).unwrap().value) / 2.0;
        prop_assert!(mid <= avg + 1e-12);
    }
}

#[test]
fn estimates_do_not_depend_on_worker_count() {
    let spec = log_gaussian(0.5);
    let cfg = SimulationConfig::new(150_000, 77);
    let run = |w| {
        with_workers(w, || {
            simulate_stationary(&spec, &TailIndices::given([1.0, 1.0]), &cfg).unwrap()
        })
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.xs(), b.xs());
    let grid = [1.0, 4.0, 16.0];
    assert_eq!(
        marginal_tail_scan(&a, 0, &grid).unwrap(),
        marginal_tail_scan(&b, 0, &grid).unwrap()
    );
    let ja = joint_tail_scan(JointSource::Crude(&a), [0.3, 0.3], &grid, true).unwrap();
    let jb = joint_tail_scan(JointSource::Crude(&b), [0.3, 0.3], &grid, true).unwrap();
    assert_eq!(ja, jb);
}
