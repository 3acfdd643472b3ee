//! Step functions for each optimizer in the family.
//!
//! All of them compute the update direction ḡ and finish with
//! `θ ← θ − η·ḡ`. Helpers are shared so that modes which collapse onto one
//! another (e.g. C-Flat with λ = 0 and SAM) perform the same floating-point
//! operations in the same order and produce bit-identical trajectories.

use crate::error::{Error, Result};
use crate::numcore::{Batch, Objective, ParamVector};

use super::config::{Mode, OptimizerConfig};
use super::ema::{ema_update, trigger, Gate};
use super::primitives::{
    eval_gradient, flatness_from_proxy, orthogonal_component, perturbed_gradient, proxy_point,
    surrogate_increment,
};
use super::state::{Branch, GradientBundle, StepOutput, TurboState};

fn expect_mode(cfg: &OptimizerConfig, mode: Mode) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::ModeMismatch {
            expected: mode.name(),
            found: cfg.mode.name(),
        });
    }
    Ok(())
}

fn finish(
    theta: &ParamVector,
    direction: ParamVector,
    mut bundle: GradientBundle,
    cfg: &OptimizerConfig,
    state: &mut TurboState,
    evals_before: u64,
) -> Result<StepOutput> {
    let next = theta.axpy(-cfg.lr, &direction)?;
    if !next.is_finite() {
        return Err(Error::NonFinite("updated parameters"));
    }
    bundle.direction = direction;
    bundle.evals = (state.eval_counter - evals_before) as u32;
    state.iter_in_task += 1;
    Ok(StepOutput {
        theta: next,
        bundle,
    })
}

/// Sharpness branch shared by SAM, LookSAM, C-Flat and Turbo. Either
/// evaluates `g_s` and caches its component orthogonal to `g`, or rebuilds
/// `g_s` from the cache.
fn sharpness_term(
    obj: &dyn Objective,
    theta: &ParamVector,
    g: &ParamVector,
    batch: &Batch,
    cfg: &OptimizerConfig,
    state: &mut TurboState,
    refresh: bool,
    bundle: &mut GradientBundle,
) -> Result<ParamVector> {
    let cached = match &state.cached_gvs {
        Some(c) if !refresh => c,
        _ => {
            let g_s = perturbed_gradient(obj, theta, g, batch, cfg.rho, &mut state.eval_counter)?;
            let g_vs = orthogonal_component(&g_s, g)?;
            state.cached_gvs = Some(g_vs.clone());
            bundle.g_vs = Some(g_vs);
            bundle.sharp = Branch::Computed;
            return Ok(g_s);
        }
    };
    bundle.sharp = Branch::Simulated;
    match surrogate_increment(g, cached, cfg.beta) {
        Some(inc) => {
            let g_s = g.add(&inc)?;
            bundle.sharp_increment = Some(inc);
            Ok(g_s)
        }
        None => Ok(g.clone()),
    }
}

/// Flatness branch at the proxy point, given `g₀` there.
#[allow(clippy::too_many_arguments)]
fn flatness_term(
    obj: &dyn Objective,
    theta_p: &ParamVector,
    g0: &ParamVector,
    batch: &Batch,
    cfg: &OptimizerConfig,
    state: &mut TurboState,
    refresh: bool,
    bundle: &mut GradientBundle,
) -> Result<ParamVector> {
    let cached = match &state.cached_gvf {
        Some(c) if !refresh => c,
        _ => {
            let (g1, g_f) = flatness_from_proxy(
                obj,
                theta_p,
                g0,
                batch,
                cfg.rho,
                cfg.rho_prime(),
                &mut state.eval_counter,
            )?;
            let g_vf = orthogonal_component(&g_f, g0)?;
            state.cached_gvf = Some(g_vf.clone());
            bundle.g_1 = Some(g1);
            bundle.g_vf = Some(g_vf);
            bundle.flat = Branch::Computed;
            return Ok(g_f);
        }
    };
    bundle.flat = Branch::Simulated;
    match surrogate_increment(g0, cached, cfg.beta) {
        Some(inc) => {
            let g_f = g0.add(&inc)?;
            bundle.flat_increment = Some(inc);
            Ok(g_f)
        }
        None => Ok(g0.clone()),
    }
}

/// Plain gradient descent: `θ − η·g`. One evaluation.
pub fn sgd_step(
    obj: &dyn Objective,
    theta: &ParamVector,
    batch: &Batch,
    cfg: &OptimizerConfig,
    state: &mut TurboState,
) -> Result<StepOutput> {
    expect_mode(cfg, Mode::Sgd)?;
    let before = state.eval_counter;
    let g = eval_gradient(obj, theta, batch, &mut state.eval_counter)?;
    let bundle = GradientBundle {
        g: Some(g.clone()),
        ..Default::default()
    };
    finish(theta, g, bundle, cfg, state, before)
}

/// `θ − η·g_s`. Two evaluations.
pub fn sam_step(
    obj: &dyn Objective,
    theta: &ParamVector,
    batch: &Batch,
    cfg: &OptimizerConfig,
    state: &mut TurboState,
) -> Result<StepOutput> {
    expect_mode(cfg, Mode::Sam)?;
    let before = state.eval_counter;
    let g = eval_gradient(obj, theta, batch, &mut state.eval_counter)?;
    let mut bundle = GradientBundle {
        g: Some(g.clone()),
        triggered_s: true,
        ..Default::default()
    };
    let g_s = sharpness_term(obj, theta, &g, batch, cfg, state, true, &mut bundle)?;
    bundle.g_s = Some(g_s.clone());
    finish(theta, g_s, bundle, cfg, state, before)
}

/// SAM with the perturbed gradient refreshed every k steps and rebuilt from
/// the cached orthogonal component in between.
pub fn looksam_step(
    obj: &dyn Objective,
    theta: &ParamVector,
    batch: &Batch,
    cfg: &OptimizerConfig,
    state: &mut TurboState,
) -> Result<StepOutput> {
    expect_mode(cfg, Mode::LookSam)?;
    let before = state.eval_counter;
    let refresh = state.is_cache_step();
    let g = eval_gradient(obj, theta, batch, &mut state.eval_counter)?;
    let mut bundle = GradientBundle {
        g: Some(g.clone()),
        triggered_s: true,
        ..Default::default()
    };
    let g_s = sharpness_term(obj, theta, &g, batch, cfg, state, refresh, &mut bundle)?;
    bundle.g_s = Some(g_s.clone());
    state.refresh_k(cfg);
    finish(theta, g_s, bundle, cfg, state, before)
}

/// Full C-Flat: `θ − η·(g_s + λ·g_f)`. Four evaluations.
pub fn cflat_step(
    obj: &dyn Objective,
    theta: &ParamVector,
    batch: &Batch,
    cfg: &OptimizerConfig,
    state: &mut TurboState,
) -> Result<StepOutput> {
    expect_mode(cfg, Mode::CFlat)?;
    let before = state.eval_counter;
    let g = eval_gradient(obj, theta, batch, &mut state.eval_counter)?;
    let mut bundle = GradientBundle {
        g: Some(g.clone()),
        triggered_s: true,
        triggered_f: true,
        ..Default::default()
    };
    let g_s = sharpness_term(obj, theta, &g, batch, cfg, state, true, &mut bundle)?;
    let theta_p = proxy_point(theta, &g, &g_s, cfg.rho)?;
    let g0 = eval_gradient(obj, &theta_p, batch, &mut state.eval_counter)?;
    let g_f = flatness_term(obj, &theta_p, &g0, batch, cfg, state, true, &mut bundle)?;
    let mut direction = g_s.clone();
    direction.axpy_mut(cfg.lambda, &g_f)?;
    bundle.g_s = Some(g_s);
    bundle.g_0 = Some(g0);
    bundle.g_f = Some(g_f);
    finish(theta, direction, bundle, cfg, state, before)
}

/// C-Flat with cached direction-invariant components, adaptive triggers and
/// a scheduled refresh interval.
///
/// Evaluations per step, both triggers firing: 4 on cache steps, 2 on
/// surrogate steps. With only the sharpness trigger: 3 / 2. With neither:
/// 1. When the sharpness trigger does not fire, the proxy point collapses to
/// θ and `g` is reused as `g₀`; the flatness branch then still runs if
/// `strict_alg1` is set (1 extra evaluation on cache steps, none otherwise).
pub fn turbo_step(
    obj: &dyn Objective,
    theta: &ParamVector,
    batch: &Batch,
    cfg: &OptimizerConfig,
    state: &mut TurboState,
) -> Result<StepOutput> {
    expect_mode(cfg, Mode::Turbo)?;
    let before = state.eval_counter;
    let refresh = state.is_cache_step();

    let g = eval_gradient(obj, theta, batch, &mut state.eval_counter)?;
    let g_sq = g.sq_norm();
    state.ema = ema_update(state.ema, Gate::Sharp, g_sq, cfg.decay);
    let sharp_on = !cfg.trigger || trigger(&state.ema, Gate::Sharp, g_sq, cfg.trigger_mult);

    let mut bundle = GradientBundle {
        g: Some(g.clone()),
        triggered_s: sharp_on,
        ..Default::default()
    };
    let mut direction = g.clone();

    let proxy = if sharp_on {
        let g_s = sharpness_term(obj, theta, &g, batch, cfg, state, refresh, &mut bundle)?;
        let theta_p = proxy_point(theta, &g, &g_s, cfg.rho)?;
        let g0 = eval_gradient(obj, &theta_p, batch, &mut state.eval_counter)?;
        direction = g_s.clone();
        bundle.g_s = Some(g_s);
        Some((theta_p, g0))
    } else if cfg.strict_alg1 {
        Some((theta.clone(), g.clone()))
    } else {
        None
    };

    if let Some((theta_p, g0)) = proxy {
        let g0_sq = g0.sq_norm();
        state.ema = ema_update(state.ema, Gate::Flat, g0_sq, cfg.decay);
        let flat_on = !cfg.trigger || trigger(&state.ema, Gate::Flat, g0_sq, cfg.trigger_mult);
        bundle.triggered_f = flat_on;
        if flat_on {
            let g_f = flatness_term(obj, &theta_p, &g0, batch, cfg, state, refresh, &mut bundle)?;
            direction.axpy_mut(cfg.lambda, &g_f)?;
            bundle.g_f = Some(g_f);
        }
        bundle.g_0 = Some(g0);
    }

    state.refresh_k(cfg);
    finish(theta, direction, bundle, cfg, state, before)
}
