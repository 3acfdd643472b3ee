//! Building blocks shared by the step functions.
//!
//! Every gradient evaluation goes through [`eval_gradient`], which bumps the
//! caller's evaluation counter; degenerate branches that can be answered
//! without calling the objective do not count.

use crate::error::{Error, Result};
use crate::numcore::{Batch, Objective, ParamVector, DEGENERATE_NORM};

pub fn eval_gradient(
    obj: &dyn Objective,
    theta: &ParamVector,
    batch: &Batch,
    evals: &mut u64,
) -> Result<ParamVector> {
    *evals += 1;
    let g = obj.gradient(theta, batch)?;
    if !g.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(g)
}

/// `ρ·g/‖g‖`, or zero when `‖g‖` is degenerate.
pub fn sam_perturbation(g: &ParamVector, rho: f64) -> ParamVector {
    let norm = g.l2_norm();
    if norm < DEGENERATE_NORM {
        return ParamVector::zeros(g.dim());
    }
    g.scale(rho / norm)
}

/// Gradient at `θ + ρ·g/‖g‖` given the gradient `g` at θ. A degenerate `g`
/// returns `g` itself without evaluating.
pub fn perturbed_gradient(
    obj: &dyn Objective,
    theta: &ParamVector,
    g: &ParamVector,
    batch: &Batch,
    rho: f64,
    evals: &mut u64,
) -> Result<ParamVector> {
    if g.l2_norm() < DEGENERATE_NORM {
        return Ok(g.clone());
    }
    let eps = sam_perturbation(g, rho);
    eval_gradient(obj, &theta.add(&eps)?, batch, evals)
}

/// Returns `(g, g_s)`: the gradient at θ and at the SAM ascent point.
pub fn sam_gradient(
    obj: &dyn Objective,
    theta: &ParamVector,
    batch: &Batch,
    rho: f64,
    evals: &mut u64,
) -> Result<(ParamVector, ParamVector)> {
    let g = eval_gradient(obj, theta, batch, evals)?;
    let g_s = perturbed_gradient(obj, theta, &g, batch, rho, evals)?;
    Ok((g, g_s))
}

/// `θ_p = θ + ρ·(g_s − g)/‖g_s − g‖`; θ itself when the increment vanishes.
pub fn proxy_point(
    theta: &ParamVector,
    g: &ParamVector,
    g_s: &ParamVector,
    rho: f64,
) -> Result<ParamVector> {
    let inc = g_s.sub(g)?;
    let norm = inc.l2_norm();
    if norm < DEGENERATE_NORM {
        return Ok(theta.clone());
    }
    theta.axpy(rho / norm, &inc)
}

/// Given `g₀` at the proxy point, evaluates `g₁ = ∇L(θ_p + ρ′·g₀/‖g₀‖)` and
/// returns `(g₁, g_f)` with `g_f = (ρ/ρ′)(g₁ − g₀)`.
pub fn flatness_from_proxy(
    obj: &dyn Objective,
    theta_p: &ParamVector,
    g0: &ParamVector,
    batch: &Batch,
    rho: f64,
    rho_prime: f64,
    evals: &mut u64,
) -> Result<(ParamVector, ParamVector)> {
    let norm = g0.l2_norm();
    if norm < DEGENERATE_NORM {
        return Ok((g0.clone(), ParamVector::zeros(g0.dim())));
    }
    let probe = theta_p.axpy(rho_prime / norm, g0)?;
    let g1 = eval_gradient(obj, &probe, batch, evals)?;
    let g_f = g1.sub(g0)?.scale(rho / rho_prime);
    Ok((g1, g_f))
}

/// Returns `(g₀, g₁, g_f)` at the proxy point `θ_p`.
pub fn flatness_gradient(
    obj: &dyn Objective,
    theta_p: &ParamVector,
    batch: &Batch,
    rho: f64,
    rho_prime: f64,
    evals: &mut u64,
) -> Result<(ParamVector, ParamVector, ParamVector)> {
    if !(rho_prime > 0.0) {
        return Err(Error::invalid("rho_prime", "must be > 0"));
    }
    let g0 = eval_gradient(obj, theta_p, batch, evals)?;
    let (g1, g_f) = flatness_from_proxy(obj, theta_p, &g0, batch, rho, rho_prime, evals)?;
    Ok((g0, g1, g_f))
}

/// `v − (⟨v,r⟩/‖r‖²)·r`; `v` unchanged when `r` is degenerate.
///
/// The projection is applied twice. The second pass removes the rounding
/// residue of the first, which matters when `v` is nearly parallel to `r`.
pub fn orthogonal_component(v: &ParamVector, reference: &ParamVector) -> Result<ParamVector> {
    let rr = reference.sq_norm();
    if rr.sqrt() < DEGENERATE_NORM {
        if v.dim() != reference.dim() {
            return Err(Error::DimensionMismatch {
                expected: reference.dim(),
                found: v.dim(),
            });
        }
        return Ok(v.clone());
    }
    let once = v.axpy(-v.dot(reference)? / rr, reference)?;
    once.axpy(-once.dot(reference)? / rr, reference)
}

/// `β·(‖base‖/‖cached‖)·cached`, the increment a surrogate step adds to
/// `base`. `None` when either norm is degenerate.
pub fn surrogate_increment(
    base: &ParamVector,
    cached: &ParamVector,
    beta: f64,
) -> Option<ParamVector> {
    let nb = base.l2_norm();
    let nc = cached.l2_norm();
    if nb < DEGENERATE_NORM || nc < DEGENERATE_NORM {
        return None;
    }
    Some(cached.scale(beta * (nb / nc)))
}

/// `g + β·(‖g‖/‖g_vs‖)·g_vs`.
pub fn simulate_sharpness(
    g: &ParamVector,
    cached_gvs: &ParamVector,
    beta: f64,
) -> Result<ParamVector> {
    match surrogate_increment(g, cached_gvs, beta) {
        Some(inc) => g.add(&inc),
        None => Ok(g.clone()),
    }
}

/// `g₀ + β·(‖g₀‖/‖g_vf‖)·g_vf`.
pub fn simulate_flatness(
    g0: &ParamVector,
    cached_gvf: &ParamVector,
    beta: f64,
) -> Result<ParamVector> {
    simulate_sharpness(g0, cached_gvf, beta)
}

/// Linear turbo-step schedule `⌊k₀ + c·t/N⌋`, at least 1.
pub fn scheduled_k(k0: u32, slope: f64, task: u32, num_tasks: u32) -> u32 {
    let n = num_tasks.max(1) as f64;
    let k = (k0 as f64 + slope * task as f64 / n).floor();
    if k < 1.0 {
        1
    } else {
        k as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Mlp, Quadratic, Rng};

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn close(a: &ParamVector, b: &ParamVector, tol: f64) -> bool {
        a.distance(b).unwrap() <= tol
    }

    #[test]
    fn perturbation_examples() {
        let e = sam_perturbation(&pv(&[3.0, 4.0]), 0.05);
        assert!(close(&e, &pv(&[0.03, 0.04]), 1e-16));
        assert_eq!(sam_perturbation(&pv(&[0.0, 0.0]), 0.3), pv(&[0.0, 0.0]));
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let g = pv(&(0..7).map(|_| rng.normal()).collect::<Vec<_>>());
            assert!((sam_perturbation(&g, 0.2).l2_norm() - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn sam_on_identity_quadratic() {
        let q = Quadratic::diagonal(&[1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let mut evals = 0;
        let (g, gs) = sam_gradient(
            &q,
            &pv(&[3.0, 4.0]),
            &Batch::empty_placeholder(),
            0.05,
            &mut evals,
        )
        .unwrap();
        assert_eq!(g, pv(&[3.0, 4.0]));
        assert!(close(&gs, &pv(&[3.03, 4.04]), 1e-14));
        assert_eq!(evals, 2);
    }

    #[test]
    fn sam_degenerate_gradient_skips() {
        let q = Quadratic::diagonal(&[1.0, 1.0], vec![1.0, 2.0]).unwrap();
        let mut evals = 0;
        let (g, gs) = sam_gradient(
            &q,
            &pv(&[1.0, 2.0]),
            &Batch::empty_placeholder(),
            0.05,
            &mut evals,
        )
        .unwrap();
        assert_eq!(g, gs);
        assert_eq!(evals, 1);
    }

    /// `H·v` by central differences of the analytic gradient.
    fn hvp(
        obj: &dyn Objective,
        theta: &ParamVector,
        batch: &Batch,
        v: &ParamVector,
        h: f64,
    ) -> ParamVector {
        let up = obj.gradient(&theta.axpy(h, v).unwrap(), batch).unwrap();
        let down = obj.gradient(&theta.axpy(-h, v).unwrap(), batch).unwrap();
        up.sub(&down).unwrap().scale(0.5 / h)
    }

    #[test]
    fn sam_increment_follows_hessian_direction() {
        let obj = Mlp::new(&[4, 8, 3]).unwrap();
        let mut rng = Rng::new(9);
        let inputs = (0..40).map(|_| rng.normal()).collect();
        let labels = (0..10).map(|_| rng.below(3)).collect();
        let batch = Batch::new(4, inputs, labels).unwrap();
        let theta = obj.init_params(&mut rng);
        let rho = 1e-3;
        let mut evals = 0;
        let (g, gs) = sam_gradient(&obj, &theta, &batch, rho, &mut evals).unwrap();
        let u = g.normalized().unwrap();
        let predicted = hvp(&obj, &theta, &batch, &u, 1e-5).scale(rho);
        let inc = gs.sub(&g).unwrap();
        let cos = inc.dot(&predicted).unwrap() / (inc.l2_norm() * predicted.l2_norm());
        assert!(cos > 0.99, "cos {cos}");
    }

    #[test]
    fn proxy_examples() {
        let theta = pv(&[0.0, 0.0]);
        let g = pv(&[1.0, 0.0]);
        assert_eq!(proxy_point(&theta, &g, &g, 0.1).unwrap(), theta);
        let p = proxy_point(&theta, &g, &pv(&[1.0, 1.0]), 0.1).unwrap();
        assert!(close(&p, &pv(&[0.0, 0.1]), 1e-16));
        let mut rng = Rng::new(2);
        for _ in 0..50 {
            let r: Vec<ParamVector> = (0..3)
                .map(|_| pv(&(0..5).map(|_| rng.normal()).collect::<Vec<_>>()))
                .collect();
            let p = proxy_point(&r[0], &r[1], &r[2], 0.3).unwrap();
            assert!((p.distance(&r[0]).unwrap() - 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn flatness_on_diagonal_quadratic() {
        // For L = ½θᵀAθ: g₀ = Aθ_p, g₁ = g₀ + ρ′·A·g₀/‖g₀‖, so
        // g_f = (ρ/ρ′)(g₁ − g₀) = ρ·A·g₀/‖g₀‖ exactly.
        let q = Quadratic::diagonal(&[2.0, 8.0], vec![0.0, 0.0]).unwrap();
        let mut evals = 0;
        let (g0, g1, gf) = flatness_gradient(
            &q,
            &pv(&[1.0, 0.0]),
            &Batch::empty_placeholder(),
            0.1,
            0.1,
            &mut evals,
        )
        .unwrap();
        assert_eq!(g0, pv(&[2.0, 0.0]));
        assert!(close(&g1, &pv(&[2.2, 0.0]), 1e-15));
        assert!(close(&gf, &pv(&[0.2, 0.0]), 1e-15));
        assert_eq!(evals, 2);
    }

    #[test]
    fn flatness_norm_matches_closed_form() {
        let q = Quadratic::diagonal(&[2.0, 8.0, 0.5], vec![0.3, -0.2, 1.0]).unwrap();
        let mut rng = Rng::new(17);
        for _ in 0..100 {
            let tp = pv(&(0..3).map(|_| rng.normal()).collect::<Vec<_>>());
            let (rho, rho_p) = (0.05, 0.01);
            let mut evals = 0;
            let (g0, _, gf) =
                flatness_gradient(&q, &tp, &Batch::empty_placeholder(), rho, rho_p, &mut evals)
                    .unwrap();
            let u: Vec<f64> = g0.iter().map(|v| v / g0.l2_norm()).collect();
            let au = q.apply(&u);
            let expect = rho * au.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(
                (gf.l2_norm() - expect).abs() < 1e-10,
                "{} vs {expect}",
                gf.l2_norm()
            );
        }
    }

    #[test]
    fn flatness_degenerate_proxy_gradient() {
        let q = Quadratic::diagonal(&[2.0, 8.0], vec![2.0, 8.0]).unwrap();
        let mut evals = 0;
        let (g0, g1, gf) = flatness_gradient(
            &q,
            &pv(&[1.0, 1.0]),
            &Batch::empty_placeholder(),
            0.1,
            0.1,
            &mut evals,
        )
        .unwrap();
        assert_eq!(g0, g1);
        assert_eq!(gf, pv(&[0.0, 0.0]));
        assert!(flatness_gradient(
            &q,
            &pv(&[1.0, 1.0]),
            &Batch::empty_placeholder(),
            0.1,
            0.0,
            &mut evals
        )
        .is_err());
    }

    #[test]
    fn orthogonal_examples() {
        assert_eq!(
            orthogonal_component(&pv(&[1.0, 1.0]), &pv(&[1.0, 0.0])).unwrap(),
            pv(&[0.0, 1.0])
        );
        let r = pv(&[0.3, -1.2, 2.0]);
        let v = r.scale(-2.5);
        assert!(orthogonal_component(&v, &r).unwrap().l2_norm() < 1e-14);
        assert_eq!(orthogonal_component(&v, &pv(&[0.0, 0.0, 0.0])).unwrap(), v);
    }

    #[test]
    fn orthogonal_residual_is_tiny() {
        let mut rng = Rng::new(123);
        for _ in 0..1000 {
            let d = 1 + rng.below(20);
            let v = pv(&(0..d).map(|_| rng.normal()).collect::<Vec<_>>());
            let r = pv(&(0..d).map(|_| rng.normal() * 10.0).collect::<Vec<_>>());
            let o = orthogonal_component(&v, &r).unwrap();
            assert!(o.dot(&r).unwrap().abs() <= 1e-10 * v.l2_norm() * r.l2_norm());
        }
    }

    #[test]
    fn surrogate_examples() {
        let g = pv(&[1.0, 0.0]);
        assert_eq!(simulate_sharpness(&g, &pv(&[0.0, 2.0]), 0.0).unwrap(), g);
        assert_eq!(
            simulate_sharpness(&g, &pv(&[0.0, 2.0]), 0.8).unwrap(),
            pv(&[1.0, 0.8])
        );
        assert_eq!(simulate_sharpness(&g, &pv(&[0.0, 0.0]), 0.8).unwrap(), g);
        assert_eq!(
            simulate_flatness(&g, &pv(&[0.0, -4.0]), 0.5).unwrap(),
            pv(&[1.0, -0.5])
        );

        let mut rng = Rng::new(8);
        for _ in 0..100 {
            let g = pv(&(0..6).map(|_| rng.normal()).collect::<Vec<_>>());
            let c = pv(&(0..6).map(|_| rng.normal()).collect::<Vec<_>>());
            let inc = surrogate_increment(&g, &c, 0.8).unwrap();
            let cos = inc.dot(&c).unwrap() / (inc.l2_norm() * c.l2_norm());
            assert!((cos - 1.0).abs() < 1e-14);
            assert!((inc.l2_norm() - 0.8 * g.l2_norm()).abs() <= 8.0 * f64::EPSILON * g.l2_norm());
        }
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(scheduled_k(5, 10.0, 0, 10), 5);
        assert_eq!(scheduled_k(5, 10.0, 10, 10), 15);
        assert_eq!(scheduled_k(5, 10.0, 3, 10), 8);
        assert_eq!(scheduled_k(1, 0.0, 3, 10), 1);
        assert_eq!(scheduled_k(5, 10.0, 1, 3), 8);
    }
}
