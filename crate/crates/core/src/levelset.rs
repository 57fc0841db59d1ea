//! The unit level set `D = {phi = 1}` inside `[0,1]^2` and the critical
//! point `xi*` where `h(xi) = xi_1 + xi_2` is maximal on it.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{norm, Vec2};
use crate::mgf::{MgfError, PhiEvaluator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevelSetError {
    #[error("a deterministic phi backend is required")]
    NonDeterministic,
    #[error("level-set trace diverged after ({:.6}, {:.6})", last[0], last[1])]
    TraceDiverged { last: Vec2 },
    #[error("level set leaves the unit square at ({:.6}, {:.6})", exit[0], exit[1])]
    OpenArc { exit: Vec2, partial: Box<LevelSetTrace> },
    #[error("no certified critical point in (0,1)^2: {reason}")]
    NotFound {
        reason: String,
        candidate: Option<Box<CriticalPoint>>,
    },
    #[error(transparent)]
    Mgf(#[from] MgfError),
}

/// Points of `D` ordered from `(1,0)` towards `(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSetTrace {
    pub points: Vec<Vec2>,
    /// `|phi - 1|` at each point.
    pub residuals: Vec<f64>,
    pub endpoints: [Vec2; 2],
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Certification {
    pub interior: bool,
    pub on_level: bool,
    pub parallel: bool,
}

impl Certification {
    pub fn all(&self) -> bool {
        self.interior && self.on_level && self.parallel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub xi_star: Vec2,
    pub h: f64,
    pub grad: Vec2,
    pub certified: Certification,
    /// `|phi(xi*) - 1|`.
    pub level_residual: f64,
    /// `|d1 phi - d2 phi| / |grad phi|`.
    pub parallel_residual: f64,
    pub method: &'static str,
}

pub const DEFAULT_STEP: f64 = 1e-2;
pub const NEWTON_TOL: f64 = 1e-10;
const MAX_FAILURES: usize = 5;
const MAX_POINTS: usize = 200_000;

fn require_deterministic(ev: &PhiEvaluator) -> Result<(), LevelSetError> {
    if ev.is_deterministic() {
        Ok(())
    } else {
        Err(LevelSetError::NonDeterministic)
    }
}

/// Newton projection onto `{phi = 1}` along the gradient.
fn correct(ev: &PhiEvaluator, mut x: Vec2) -> Option<(Vec2, f64)> {
    for _ in 0..30 {
        let j = ev.jet(x).ok()?;
        let r = j.value - 1.0;
        if r.abs() < 1e-13 {
            return Some((x, r.abs()));
        }
        let g2 = j.grad[0] * j.grad[0] + j.grad[1] * j.grad[1];
        if !(g2 > 0.0) {
            return None;
        }
        x = [x[0] - r * j.grad[0] / g2, x[1] - r * j.grad[1] / g2];
    }
    let r = (ev.phi(x).ok()?.value - 1.0).abs();
    (r < 1e-10).then_some((x, r))
}

/// Root of `phi(0, y) = 1` near `y0`.
fn axis_root(ev: &PhiEvaluator, mut y: f64) -> Option<f64> {
    for _ in 0..50 {
        let j = ev.jet([0.0, y]).ok()?;
        let step = (j.value - 1.0) / j.grad[1];
        y -= step;
        if step.abs() < 1e-15 * y.abs().max(1.0) {
            break;
        }
    }
    ((ev.phi([0.0, y]).ok()?.value - 1.0).abs() < 1e-10).then_some(y)
}

/// Traces `D` from `(1,0)` by predictor-corrector continuation with
/// arc-length step `step`.
pub fn trace_level_set(ev: &PhiEvaluator, step: f64) -> Result<LevelSetTrace, LevelSetError> {
    require_deterministic(ev)?;
    assert!(step > 0.0 && step < 0.5, "step must lie in (0, 0.5)");
    let start = [1.0, 0.0];
    let r0 = (ev.phi(start)?.value - 1.0).abs();
    let mut points = vec![start];
    let mut residuals = vec![r0];
    let mut tangent_prev: Option<Vec2> = None;
    let mut failures = 0;
    let partial = |points: &Vec<Vec2>, residuals: &Vec<f64>| LevelSetTrace {
        points: points.clone(),
        residuals: residuals.clone(),
        endpoints: [start, *points.last().unwrap()],
        step,
    };
    let mut h = step;
    loop {
        if points.len() > MAX_POINTS {
            return Err(LevelSetError::TraceDiverged {
                last: *points.last().unwrap(),
            });
        }
        let x = *points.last().unwrap();
        let g = ev.grad_phi(x)?;
        let n = norm(g);
        let mut t = [-g[1] / n, g[0] / n];
        match tangent_prev {
            Some(p) if t[0] * p[0] + t[1] * p[1] < 0.0 => t = [-t[0], -t[1]],
            None if t[1] < 0.0 => t = [-t[0], -t[1]],
            _ => {}
        }
        let guess = [x[0] + h * t[0], x[1] + h * t[1]];
        let Some((p, r)) = correct(ev, guess) else {
            failures += 1;
            if failures >= MAX_FAILURES {
                return Err(LevelSetError::TraceDiverged { last: x });
            }
            h *= 0.5;
            continue;
        };
        let chord = ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt();
        if chord > step {
            h *= 0.9 * step / chord;
            continue;
        }
        failures = 0;
        if p[0] <= 0.0 {
            // crossed the second axis: locate the crossing exactly
            let w = x[0] / (x[0] - p[0]);
            let y0 = x[1] + w * (p[1] - x[1]);
            let y = axis_root(ev, y0).ok_or(LevelSetError::TraceDiverged { last: x })?;
            let end = [0.0, y];
            points.push(end);
            residuals.push((ev.phi(end)?.value - 1.0).abs());
            return Ok(LevelSetTrace {
                points,
                residuals,
                endpoints: [start, end],
                step,
            });
        }
        if p[0] > 1.0 || p[1] > 1.0 || p[1] < 0.0 {
            return Err(LevelSetError::OpenArc {
                exit: p,
                partial: Box::new(partial(&points, &residuals)),
            });
        }
        points.push(p);
        residuals.push(r);
        tangent_prev = Some(t);
        h = (h * 1.5).min(step);
    }
}

/// Positive root `r` of `phi(r u) = 1` on the ray with direction `u`, if it
/// lies within distance `r_max`.
fn ray_root(ev: &PhiEvaluator, u: Vec2, r_max: f64) -> Result<Option<f64>, MgfError> {
    let g = |r: f64| -> Result<(f64, f64), MgfError> {
        let j = ev.jet([r * u[0], r * u[1]])?;
        Ok((j.value - 1.0, j.grad[0] * u[0] + j.grad[1] * u[1]))
    };
    // phi is convex with negative slope at the origin along every ray into the orthant
    let mut hi = 0.25;
    let mut lo = 1e-9;
    loop {
        match g(hi) {
            Ok((v, _)) if v > 0.0 => break,
            Ok(_) => {
                lo = hi;
                if hi >= r_max {
                    return Ok(None);
                }
                hi = (hi * 2.0).min(r_max);
            }
            Err(MgfError::OutsideDomain { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    let mut r = hi;
    let mut cur = g(r).ok();
    for _ in 0..200 {
        let next = match cur {
            Some((v, _)) if v.abs() < 1e-15 => return Ok(Some(r)),
            Some((v, d)) if d > 0.0 => r - v / d,
            _ => f64::NAN,
        };
        let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        r = next;
        cur = g(r).ok();
        match cur {
            Some((v, _)) if v <= 0.0 => lo = r,
            _ => hi = r,
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    Ok(Some(r))
}

fn in_square(x: Vec2) -> bool {
    (0.0..=1.0).contains(&x[0]) && (0.0..=1.0).contains(&x[1])
}

/// Point of `D` in direction `theta` (radians from the first axis) and its `h`,
/// or `None` when that point lies outside the unit square.
fn arc_point(ev: &PhiEvaluator, theta: f64) -> Result<Option<(Vec2, f64)>, MgfError> {
    let u = [theta.cos(), theta.sin()];
    let r = ray_root(ev, u, 2.0)?;
    let slack = |v: f64| (-1e-12..=1.0 + 1e-12).contains(&v);
    Ok(r.map(|r| [r * u[0], r * u[1]])
        .filter(|x| slack(x[0]) && slack(x[1]))
        .map(|x| (x, x[0] + x[1])))
}

fn certify(ev: &PhiEvaluator, x: Vec2, tol: f64, method: &'static str) -> Result<CriticalPoint, MgfError> {
    let j = ev.jet(x)?;
    let gn = norm(j.grad);
    let level_residual = (j.value - 1.0).abs();
    let parallel_residual = (j.grad[0] - j.grad[1]).abs() / gn;
    Ok(CriticalPoint {
        xi_star: x,
        h: x[0] + x[1],
        grad: j.grad,
        certified: Certification {
            interior: x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0,
            on_level: level_residual < tol,
            parallel: parallel_residual < tol,
        },
        level_residual,
        parallel_residual,
        method,
    })
}

/// Newton on `{phi = 1, d1 phi = d2 phi}`.
fn newton_polish(ev: &PhiEvaluator, mut x: Vec2, tol: f64) -> Option<Vec2> {
    for _ in 0..50 {
        let j = ev.jet(x).ok()?;
        let f = [j.value - 1.0, j.grad[0] - j.grad[1]];
        let gn = norm(j.grad);
        if f[0].abs() < 1e-3 * tol && f[1].abs() < 1e-3 * tol * gn {
            return Some(x);
        }
        let jac = [
            [j.grad[0], j.grad[1]],
            [j.hess[0][0] - j.hess[1][0], j.hess[0][1] - j.hess[1][1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-300 || !det.is_finite() {
            return None;
        }
        let dx = [
            (f[0] * jac[1][1] - f[1] * jac[0][1]) / det,
            (jac[0][0] * f[1] - jac[1][0] * f[0]) / det,
        ];
        x = [x[0] - dx[0], x[1] - dx[1]];
        if !in_square(x) {
            return None;
        }
        if norm(dx) < 1e-16 {
            let j = ev.jet(x).ok()?;
            let ok = (j.value - 1.0).abs() < tol && (j.grad[0] - j.grad[1]).abs() < tol * norm(j.grad);
            return ok.then_some(x);
        }
    }
    None
}

/// Locates `xi*` on `D` where `grad phi` is parallel to `(1,1)`.
///
/// `h` is maximized over the arc (parametrized by the ray angle) with a
/// coarse scan followed by golden-section search; Newton on the 2x2 system
/// then polishes the point. `NotFound` is returned when the maximum is not
/// attained inside the open square or cannot be certified to `tol`.
pub fn find_xi_star(ev: &PhiEvaluator, tol: f64) -> Result<CriticalPoint, LevelSetError> {
    require_deterministic(ev)?;
    let half_pi = std::f64::consts::FRAC_PI_2;
    const SCAN: usize = 64;
    let mut best: Option<(usize, f64)> = None;
    let mut feasible = vec![false; SCAN + 1];
    for (k, slot) in feasible.iter_mut().enumerate() {
        let th = half_pi * k as f64 / SCAN as f64;
        if let Some((_, h)) = arc_point(ev, th)? {
            *slot = true;
            if best.is_none_or(|(_, b)| h > b) {
                best = Some((k, h));
            }
        }
    }
    let Some((k, _)) = best else {
        return Err(LevelSetError::NotFound {
            reason: "level set does not meet the unit square".into(),
            candidate: None,
        });
    };
    let h_at = |th: f64| -> Result<f64, MgfError> { Ok(arc_point(ev, th)?.map_or(f64::NEG_INFINITY, |p| p.1)) };
    let mut lo = half_pi * k.saturating_sub(1) as f64 / SCAN as f64;
    let mut hi = half_pi * (k + 1).min(SCAN) as f64 / SCAN as f64;
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - gr * (hi - lo);
    let mut d = lo + gr * (hi - lo);
    let (mut hc, mut hd) = (h_at(c)?, h_at(d)?);
    while hi - lo > 1e-12 {
        if hc >= hd {
            hi = d;
            d = c;
            hd = hc;
            c = hi - gr * (hi - lo);
            hc = h_at(c)?;
        } else {
            lo = c;
            c = d;
            hc = hd;
            d = lo + gr * (hi - lo);
            hd = h_at(d)?;
        }
    }
    let theta = 0.5 * (lo + hi);
    let boundary_max = k == 0 || k == SCAN || !feasible[k - 1] || !feasible[k + 1];
    let Some((x0, _)) = arc_point(ev, theta)? else {
        return Err(LevelSetError::NotFound {
            reason: "maximum of h lies on the square boundary".into(),
            candidate: None,
        });
    };
    let (x, method) = match newton_polish(ev, x0, tol) {
        Some(x) if norm([x[0] - x0[0], x[1] - x0[1]]) < 1e-3 => (x, "newton"),
        _ => (x0, "golden_section"),
    };
    let cp = certify(ev, x, tol, method)?;
    if boundary_max || !cp.certified.all() {
        let reason = if boundary_max || !cp.certified.interior {
            "maximum of h on the level set is attained on the boundary of the square"
        } else {
            "critical point could not be certified"
        };
        return Err(LevelSetError::NotFound {
            reason: reason.into(),
            candidate: Some(Box::new(cp)),
        });
    }
    Ok(cp)
}

/// Writes the trace with columns `xi1, xi2, phi_residual, h`.
pub fn write_trace_csv<W: Write>(trace: &LevelSetTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "xi1,xi2,phi_residual,h")?;
    for (p, r) in trace.points.iter().zip(&trace.residuals) {
        writeln!(w, "{},{},{},{}", p[0], p[1], r, p[0] + p[1])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mgf::{tail_indices, Method};
    use crate::models::{BLaw, Family, ModelSpec};

    fn lg_ev(eta: f64) -> PhiEvaluator {
        let spec = ModelSpec::new(Family::LogGaussian {
            m: [-0.5, -0.5],
            c: [[1.0, eta], [eta, 1.0]],
            b_law: BLaw::Constant([1.0, 1.0]),
        })
        .unwrap();
        let ti = tail_indices(&spec, 1e-12).unwrap();
        PhiEvaluator::new(&spec, &ti, Method::ClosedForm).unwrap()
    }

    #[test]
    fn symmetric_log_gaussian_critical_point() {
        let cp = find_xi_star(&lg_ev(0.5), 1e-10).unwrap();
        assert!((cp.xi_star[0] - 2.0 / 3.0).abs() < 1e-9, "{cp:?}");
        assert!((cp.xi_star[1] - 2.0 / 3.0).abs() < 1e-9);
        assert!((cp.h - 4.0 / 3.0).abs() < 1e-9);
        assert!(cp.certified.all());
    }

    #[test]
    fn trace_geometry_under_a6() {
        let ev = lg_ev(0.6);
        let tr = trace_level_set(&ev, DEFAULT_STEP).unwrap();
        assert_eq!(tr.endpoints[0], [1.0, 0.0]);
        let e = tr.endpoints[1];
        assert!(e[0].abs() < 1e-6 && (e[1] - 1.0).abs() < 1e-6, "{e:?}");
        for (p, r) in tr.points.iter().zip(&tr.residuals) {
            assert!(*r < 1e-8);
            if p[0] > 1e-9 && p[1] > 1e-9 {
                assert!(p[0] + p[1] > 1.0 + 1e-9);
            }
        }
        for w in tr.points.windows(2) {
            assert!(norm([w[1][0] - w[0][0], w[1][1] - w[0][1]]) <= DEFAULT_STEP + 1e-12);
        }
        // xi* lies within one step of the arc maximum of h
        let cp = find_xi_star(&ev, 1e-10).unwrap();
        let best = tr
            .points
            .iter()
            .max_by(|a, b| (a[0] + a[1]).total_cmp(&(b[0] + b[1])))
            .unwrap();
        assert!(norm([best[0] - cp.xi_star[0], best[1] - cp.xi_star[1]]) <= DEFAULT_STEP);
    }

    #[test]
    fn trace_passes_through_two_thirds() {
        let tr = trace_level_set(&lg_ev(0.5), DEFAULT_STEP).unwrap();
        let d = tr
            .points
            .iter()
            .map(|p| norm([p[0] - 2.0 / 3.0, p[1] - 2.0 / 3.0]))
            .fold(f64::INFINITY, f64::min);
        assert!(d <= DEFAULT_STEP / 2.0 + 1e-9, "{d}");
    }

    #[test]
    fn open_arc_when_a6_fails() {
        let r = trace_level_set(&lg_ev(0.2), DEFAULT_STEP);
        assert!(matches!(r, Err(LevelSetError::OpenArc { .. })), "{r:?}");
        // the interior maximum still exists on the diagonal at 1/(1+eta)
        let cp = find_xi_star(&lg_ev(0.2), 1e-10).unwrap();
        assert!((cp.xi_star[0] - 1.0 / 1.2).abs() < 1e-9);
    }

    #[test]
    fn boundary_maximum_is_not_found() {
        // Asymmetric and strongly negatively correlated: D bulges beyond the square.
        let spec = ModelSpec::new(Family::LogGaussian {
            m: [-0.5, -0.05],
            c: [[1.0, -0.9], [-0.9, 1.0]],
            b_law: BLaw::Constant([1.0, 1.0]),
        })
        .unwrap();
        let ti = tail_indices(&spec, 1e-12).unwrap();
        let ev = PhiEvaluator::new(&spec, &ti, Method::ClosedForm).unwrap();
        let r = find_xi_star(&ev, 1e-10);
        assert!(matches!(r, Err(LevelSetError::NotFound { .. })), "{r:?}");
    }

    #[test]
    fn ccc_garch_by_quadrature() {
        let spec = ModelSpec::new(Family::CccGarch {
            a: [1.0, 1.0],
            b: [0.5, 0.5],
            c: [0.5, 0.5],
            eta: 0.9,
        })
        .unwrap();
        let ti = tail_indices(&spec, 1e-12).unwrap();
        let ev = PhiEvaluator::new(&spec, &ti, Method::Quadrature { nodes: 64 }).unwrap();
        let cp = find_xi_star(&ev, 1e-9).unwrap();
        assert!((cp.xi_star[0] - cp.xi_star[1]).abs() < 1e-8, "{cp:?}");
        let tr = trace_level_set(&ev, DEFAULT_STEP).unwrap();
        assert!(tr.residuals.iter().all(|r| *r < 1e-8));
    }

    #[test]
    fn trace_csv_columns() {
        let tr = trace_level_set(&lg_ev(0.6), 0.1).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("xi1,xi2,phi_residual,h\n"));
        assert_eq!(text.lines().count(), tr.points.len() + 1);
    }
}
