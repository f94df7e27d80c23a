//! Forward noising and reverse-time integrators.

use super::predictor::NoisePredictor;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Latent vector at diffusion time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub x: Vec<f64>,
    pub t: f64,
}

impl LatentState {
    pub fn new(x: Vec<f64>, t: f64) -> Result<Self> {
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { x, t })
    }

    pub fn clean(x: Vec<f64>) -> Result<Self> {
        Self::new(x, 0.0)
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `x_t = α(t)·x0 + σ(t)·z`.
pub fn forward_noise(
    schedule: &NoiseSchedule,
    x0: &LatentState,
    t: f64,
    z: &[f64],
) -> Result<LatentState> {
    schedule.check_time(t)?;
    Error::check_len("noise", x0.x.len(), z.len())?;
    let a = schedule.alpha(t);
    let s = schedule.sigma(t);
    let x = x0.x.iter().zip(z).map(|(x, z)| a * x + s * z).collect();
    Ok(LatentState { x, t })
}

/// Coefficients of the Gaussian posterior `q(x_s | x_t, x0)` for `s < t`:
/// `x_s = cx·x_t + c0·x0 + sd·z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AncestralCoefficients {
    pub cx: f64,
    pub c0: f64,
    pub sd: f64,
}

pub fn ancestral_coefficients(schedule: &NoiseSchedule, t: f64, s: f64) -> AncestralCoefficients {
    let (at, st) = (schedule.alpha(t), schedule.sigma(t));
    let (as_, ss) = (schedule.alpha(s), schedule.sigma(s));
    let a_ts = at / as_;
    let var_ts = (st * st - a_ts * a_ts * ss * ss).max(0.0);
    let st2 = st * st;
    AncestralCoefficients {
        cx: a_ts * ss * ss / st2,
        c0: as_ * var_ts / st2,
        sd: (var_ts * ss * ss / st2).sqrt(),
    }
}

fn check_step(schedule: &NoiseSchedule, t: f64, dt: f64) -> Result<()> {
    schedule.check_time(t)?;
    if !(dt > 0.0) || dt > t * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("step {dt} must satisfy 0 < dt <= t = {t}")));
    }
    Ok(())
}

/// One ancestral reverse step `t → t − dt` with caller-supplied noise.
///
/// The data prediction comes from the oracle; at `t − dt = 0` the noise
/// coefficient vanishes and the step returns the posterior mean.
pub fn reverse_step_with_noise(
    predictor: &NoisePredictor<'_>,
    x_t: &LatentState,
    dt: f64,
    z: &[f64],
) -> Result<LatentState> {
    check_step(predictor.schedule(), x_t.t, dt)?;
    reverse_step_to(predictor, x_t, (x_t.t - dt).max(0.0), z)
}

/// Ancestral step from `x_t.t` to an explicit target time `s < t`.
pub fn reverse_step_to(
    predictor: &NoisePredictor<'_>,
    x_t: &LatentState,
    s: f64,
    z: &[f64],
) -> Result<LatentState> {
    let schedule = predictor.schedule();
    schedule.check_time(s)?;
    if !(s < x_t.t) {
        return Err(Error::invalid(format!("target time {s} is not below {}", x_t.t)));
    }
    Error::check_len("noise", x_t.x.len(), z.len())?;
    let pred = predictor.predict(&x_t.x, x_t.t)?;
    let c = ancestral_coefficients(schedule, x_t.t, s);
    let x = x_t
        .x
        .iter()
        .zip(&pred.x0)
        .zip(z)
        .map(|((x, x0), z)| c.cx * x + c.c0 * x0 + c.sd * z)
        .collect();
    Ok(LatentState { x, t: s })
}

pub fn reverse_sde_step<R: Rng + ?Sized>(
    predictor: &NoisePredictor<'_>,
    x_t: &LatentState,
    dt: f64,
    rng: &mut R,
) -> Result<LatentState> {
    let z = standard_normal(rng, x_t.x.len());
    reverse_step_with_noise(predictor, x_t, dt, &z)
}

/// Euler-Maruyama step of the reverse-time flow SDE
/// `dx = (u − g²/2·∇log p) dt + g dw`, integrated from `t` to `t − dt`.
///
/// With `g = 0` this is an Euler step of the probability-flow ODE.
pub fn flow_step_with_noise(
    predictor: &NoisePredictor<'_>,
    x_t: &LatentState,
    dt: f64,
    g: f64,
    z: &[f64],
) -> Result<LatentState> {
    check_step(predictor.schedule(), x_t.t, dt)?;
    Error::check_len("noise", x_t.x.len(), z.len())?;
    let (u, score) = predictor.velocity(&x_t.x, x_t.t)?;
    let drift_scale = 0.5 * g * g * dt;
    let noise_scale = g * dt.sqrt();
    let x = x_t
        .x
        .iter()
        .zip(&u)
        .zip(&score)
        .zip(z)
        .map(|(((x, u), s), z)| x - dt * u + drift_scale * s + noise_scale * z)
        .collect();
    Ok(LatentState {
        x,
        t: (x_t.t - dt).max(0.0),
    })
}

pub fn flow_sde_step<R: Rng + ?Sized>(
    predictor: &NoisePredictor<'_>,
    x_t: &LatentState,
    dt: f64,
    g: f64,
    rng: &mut R,
) -> Result<LatentState> {
    let z = standard_normal(rng, x_t.x.len());
    flow_step_with_noise(predictor, x_t, dt, g, &z)
}

/// Integrate with ancestral steps along `times` (descending).
pub fn integrate_reverse<R: Rng + ?Sized>(
    predictor: &NoisePredictor<'_>,
    mut state: LatentState,
    times: &[f64],
    rng: &mut R,
) -> Result<LatentState> {
    for w in times.windows(2) {
        state.t = w[0];
        let z = standard_normal(rng, state.x.len());
        state = reverse_step_to(predictor, &state, w[1], &z)?;
    }
    Ok(state)
}

/// Draw `x_T ~ N(0, I)` and integrate to `t = 0` in `schedule.steps`
/// ancestral steps (exactly that many NFEs).
pub fn sample_base<R: Rng + ?Sized>(
    predictor: &NoisePredictor<'_>,
    rng: &mut R,
) -> Result<LatentState> {
    let schedule = *predictor.schedule();
    let x = standard_normal(rng, predictor.world().dim());
    let times = NoiseSchedule::time_grid(schedule.horizon, 0.0, schedule.steps);
    integrate_reverse(predictor, LatentState { x, t: schedule.horizon }, &times, rng)
}

/// Flow-SDE counterpart of [`sample_base`] with injection scale `g(t)`.
pub fn sample_flow<R, G>(predictor: &NoisePredictor<'_>, g: G, rng: &mut R) -> Result<LatentState>
where
    R: Rng + ?Sized,
    G: Fn(f64) -> f64,
{
    let schedule = *predictor.schedule();
    let mut state = LatentState {
        x: standard_normal(rng, predictor.world().dim()),
        t: schedule.horizon,
    };
    let times = NoiseSchedule::time_grid(schedule.horizon, 0.0, schedule.steps);
    for w in times.windows(2) {
        state.t = w[0];
        state = flow_sde_step(predictor, &state, w[0] - w[1], g(w[0]), rng)?;
        state.t = w[1];
    }
    Ok(state)
}
