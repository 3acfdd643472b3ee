use serde::Serialize;

/// Which gradient statistic an EMA tracks: `‖g‖²` for the sharpness gate
/// or `‖g₀‖²` for the flatness gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Sharp,
    Flat,
}

pub const INITIAL_SIGMA: f64 = 1e-8;

/// Running mean and dispersion of the squared gradient norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmaState {
    pub mu_s: f64,
    pub sigma_s: f64,
    pub mu_f: f64,
    pub sigma_f: f64,
}

impl Default for EmaState {
    fn default() -> Self {
        EmaState {
            mu_s: 0.0,
            sigma_s: INITIAL_SIGMA,
            mu_f: 0.0,
            sigma_f: INITIAL_SIGMA,
        }
    }
}

impl EmaState {
    pub fn get(&self, gate: Gate) -> (f64, f64) {
        match gate {
            Gate::Sharp => (self.mu_s, self.sigma_s),
            Gate::Flat => (self.mu_f, self.sigma_f),
        }
    }

    fn slots(&mut self, gate: Gate) -> (&mut f64, &mut f64) {
        match gate {
            Gate::Sharp => (&mut self.mu_s, &mut self.sigma_s),
            Gate::Flat => (&mut self.mu_f, &mut self.sigma_f),
        }
    }
}

/// One EMA step. The mean is updated first and the squared deviation is
/// taken against the new mean. σ is a variance-like quantity (units of the
/// squared norm squared) and is compared against the norm without a
/// square root.
pub fn ema_update(state: EmaState, gate: Gate, sq_norm: f64, decay: f64) -> EmaState {
    let mut next = state;
    let (mu, sigma) = next.slots(gate);
    *mu = decay * *mu + (1.0 - decay) * sq_norm;
    let dev = sq_norm - *mu;
    *sigma = decay * *sigma + (1.0 - decay) * dev * dev;
    next
}

/// `sq_norm ≥ μ + m·σ`. An infinite multiplier never fires.
pub fn trigger(ema: &EmaState, gate: Gate, sq_norm: f64, mult: f64) -> bool {
    if mult.is_infinite() {
        return false;
    }
    let (mu, sigma) = ema.get(gate);
    sq_norm >= mu + mult * sigma
}
