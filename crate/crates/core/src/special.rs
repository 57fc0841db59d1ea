//! Special functions needed by the closed-form moment evaluators.

use statrs::function::gamma::{digamma, ln_gamma};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Trigamma function for positive arguments.
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv + 0.5 * inv2 + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

/// Value, gradient and Hessian of a smooth function of two variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

/// `E|X|^p |Y|^q` for standard normal `X, Y` with correlation `r`, together
/// with its derivatives in `(p, q)`.
///
/// Uses `2^{(p+q)/2} / pi * G((p+1)/2) G((q+1)/2) * 2F1(-p/2, -q/2; 1/2; r^2)`
/// with the hypergeometric series differentiated term by term. Requires
/// `p, q > -1` and `|r| < 1`.
pub fn gaussian_abs_moment(p: f64, q: f64, r: f64) -> Jet2 {
    assert!(p > -1.0 && q > -1.0, "absolute moment diverges for exponent <= -1");
    assert!(r.abs() < 1.0, "correlation must lie in (-1, 1)");
    let z = r * r;
    let a = -0.5 * p;
    let b = -0.5 * q;

    // Pochhammer products and their first two derivatives in the parameter.
    let (mut pa, mut pa1, mut pa2) = (1.0, 0.0, 0.0);
    let (mut pb, mut pb1, mut pb2) = (1.0, 0.0, 0.0);
    let mut coef = 1.0;
    let mut s = [0.0f64; 6]; // S, S_a, S_b, S_aa, S_ab, S_bb
    let mut quiet = 0;
    for k in 0..400_000usize {
        let terms = [
            coef * pa * pb,
            coef * pa1 * pb,
            coef * pa * pb1,
            coef * pa2 * pb,
            coef * pa1 * pb1,
            coef * pa * pb2,
        ];
        for (acc, t) in s.iter_mut().zip(terms) {
            *acc += t;
        }
        let scale = s.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        if terms.iter().all(|t| t.abs() <= 1e-17 * scale) {
            quiet += 1;
            if quiet >= 3 && (k as f64) > p.max(q) + 2.0 {
                break;
            }
        } else {
            quiet = 0;
        }
        let kf = k as f64;
        pa2 = pa2 * (a + kf) + 2.0 * pa1;
        pa1 = pa1 * (a + kf) + pa;
        pa *= a + kf;
        pb2 = pb2 * (b + kf) + 2.0 * pb1;
        pb1 = pb1 * (b + kf) + pb;
        pb *= b + kf;
        coef *= z / ((0.5 + kf) * (kf + 1.0));
        if coef == 0.0 {
            break;
        }
    }
    let [sv, sa, sb, saa, sab, sbb] = s;
    // d/dp = -1/2 d/da
    let (sp, sq) = (-0.5 * sa, -0.5 * sb);
    let (spp, spq, sqq) = (0.25 * saa, 0.25 * sab, 0.25 * sbb);

    let hp = 0.5 * (p + 1.0);
    let hq = 0.5 * (q + 1.0);
    let ln2 = std::f64::consts::LN_2;
    let c = ((0.5 * (p + q)) * ln2 - std::f64::consts::PI.ln() + ln_gamma(hp) + ln_gamma(hq)).exp();
    let lp = 0.5 * ln2 + 0.5 * digamma(hp);
    let lq = 0.5 * ln2 + 0.5 * digamma(hq);
    let (cp, cq) = (c * lp, c * lq);
    let cpp = c * (lp * lp + 0.25 * trigamma(hp));
    let cqq = c * (lq * lq + 0.25 * trigamma(hq));
    let cpq = c * lp * lq;

    Jet2 {
        value: c * sv,
        grad: [cp * sv + c * sp, cq * sv + c * sq],
        hess: [
            [
                cpp * sv + 2.0 * cp * sp + c * spp,
                cpq * sv + cp * sq + cq * sp + c * spq,
            ],
            [
                cpq * sv + cp * sq + cq * sp + c * spq,
                cqq * sv + 2.0 * cq * sq + c * sqq,
            ],
        ],
    }
}

/// `E|X|^s` for standard normal `X`: value and first two derivatives in `s`.
pub fn gaussian_abs_moment_1d(s: f64) -> [f64; 3] {
    let h = 0.5 * (s + 1.0);
    let ln2 = std::f64::consts::LN_2;
    let v = (0.5 * s * ln2 + ln_gamma(h) - 0.5 * std::f64::consts::PI.ln()).exp();
    let l = 0.5 * ln2 + 0.5 * digamma(h);
    [v, v * l, v * (l * l + 0.25 * trigamma(h))]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigamma_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0) - pi2_6).abs() < 1e-13);
        assert!((trigamma(0.5) - 3.0 * pi2_6).abs() < 1e-12);
        assert!((trigamma(2.0) - (pi2_6 - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn abs_moment_special_cases() {
        // E|X|^2 |Y|^2 = 1 + 2 r^2
        let j = gaussian_abs_moment(2.0, 2.0, 0.6);
        assert!((j.value - (1.0 + 2.0 * 0.36)).abs() < 1e-13, "{}", j.value);
        // independent: E|X| E|Y| = 2/pi
        let j = gaussian_abs_moment(1.0, 1.0, 0.0);
        assert!((j.value - 2.0 / std::f64::consts::PI).abs() < 1e-14);
        // q = 0 reduces to the marginal
        let j = gaussian_abs_moment(1.7, 0.0, 0.8);
        let m = gaussian_abs_moment_1d(1.7);
        assert!((j.value - m[0]).abs() < 1e-13);
        assert!((j.grad[0] - m[1]).abs() < 1e-12);
        assert!((j.hess[0][0] - m[2]).abs() < 1e-11);
        // zero exponents: E[log|X|] = -(gamma + ln 2)/2
        let j = gaussian_abs_moment(0.0, 0.0, 0.3);
        assert!((j.value - 1.0).abs() < 1e-14);
        let euler = 0.577_215_664_901_532_9;
        assert!((j.grad[0] + 0.5 * (euler + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn abs_moment_derivatives_match_differences() {
        let (p, q, r) = (0.8, 1.3, -0.7);
        let j = gaussian_abs_moment(p, q, r);
        let h = 1e-5;
        let fd_p = (gaussian_abs_moment(p + h, q, r).value - gaussian_abs_moment(p - h, q, r).value) / (2.0 * h);
        let fd_q = (gaussian_abs_moment(p, q + h, r).value - gaussian_abs_moment(p, q - h, r).value) / (2.0 * h);
        assert!((fd_p - j.grad[0]).abs() < 1e-8 * j.grad[0].abs().max(1.0));
        assert!((fd_q - j.grad[1]).abs() < 1e-8 * j.grad[1].abs().max(1.0));
        let fd_pq = (gaussian_abs_moment(p, q + h, r).grad[0] - gaussian_abs_moment(p, q - h, r).grad[0]) / (2.0 * h);
        assert!((fd_pq - j.hess[0][1]).abs() < 1e-7 * j.hess[0][1].abs().max(1.0));
    }
}
