//! Numerical integration of the parallelization loop.
//!
//! Classical fourth-order Runge-Kutta on `(i, v1, v2, e_loss)` with the
//! diode latched on at `t = 0` and released at the first downward zero of
//! the loop current, located by bisection inside the last step. Nothing
//! here uses the closed-form roots; the integrator is the independent
//! check on [`crate::parallel`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::parallel::LoopParams;

/// First-order system `dy/dt = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn derivative(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// Reusable RK4 stage buffers.
#[derive(Debug, Clone, Default)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `y` in place by one step of size `h`.
    pub fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, y: &mut [f64], h: f64) {
        let n = y.len();
        if self.k1.len() != n {
            *self = Rk4::new(n);
        }
        sys.derivative(t, y, &mut self.k1);
        for j in 0..n {
            self.tmp[j] = y[j] + 0.5 * h * self.k1[j];
        }
        sys.derivative(t + 0.5 * h, &self.tmp, &mut self.k2);
        for j in 0..n {
            self.tmp[j] = y[j] + 0.5 * h * self.k2[j];
        }
        sys.derivative(t + 0.5 * h, &self.tmp, &mut self.k3);
        for j in 0..n {
            self.tmp[j] = y[j] + h * self.k3[j];
        }
        sys.derivative(t + h, &self.tmp, &mut self.k4);
        for j in 0..n {
            y[j] += h / 6.0 * (self.k1[j] + 2.0 * self.k2[j] + 2.0 * self.k3[j] + self.k4[j]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Nominal step (s).
    pub dt: f64,
    /// Relative tolerance of the zero-crossing bisection.
    pub rel_tol: f64,
    pub t_max: f64,
    /// Below this current (A), after the peak, conduction counts as finished.
    pub zero_current_eps: f64,
    /// Upper bound on stored samples; the stride doubles when exceeded.
    pub max_samples: usize,
}

impl OracleConfig {
    /// Step and horizon derived from the loop's own time scales.
    ///
    /// `dt = min(t_char / 200, 2L/R)` with `t_char = min(RC/2, 2π√(LC/2))`;
    /// the `2L/R` cap keeps the fast mode inside the RK4 stability region.
    pub fn for_loop(p: &LoopParams, delta_v0: f64) -> Self {
        let rc2 = 0.5 * p.r * p.c;
        let ring = 2.0 * std::f64::consts::PI * (0.5 * p.l * p.c).sqrt();
        let t_char = rc2.min(ring);
        let drive = (delta_v0 - p.v_d).max(f64::MIN_POSITIVE);
        OracleConfig {
            dt: (t_char / 200.0).min(2.0 * p.l / p.r),
            rel_tol: 1e-9,
            t_max: 30.0 * rc2 + 2.0 * ring,
            zero_current_eps: 1e-9 * drive / (p.r + (2.0 * p.l / p.c).sqrt()),
            max_samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndReason {
    /// Current reached zero; the diode blocks.
    ZeroCrossing,
    /// Current decayed below `zero_current_eps` without crossing.
    Decayed,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub i: f64,
    pub v1: f64,
    pub v2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub end_reason: EndReason,
    /// `∫(R i² + V_d i) dt` over the trajectory (J).
    pub dissipated: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> TrajectorySample {
        *self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn t_end(&self) -> f64 {
        self.last().t
    }

    pub fn i_peak(&self) -> f64 {
        self.samples.iter().map(|s| s.i).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "i_a", "v1_v", "v2_v"])?;
        for s in &self.samples {
            out.serialize((s.t, s.i, s.v1, s.v2))?;
        }
        out.flush()?;
        Ok(())
    }
}

struct LoadedLoop {
    p: LoopParams,
    i_load: f64,
}

impl OdeSystem for LoadedLoop {
    fn dim(&self) -> usize {
        4
    }

    fn derivative(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let (i, v1, v2) = (y[0], y[1], y[2]);
        let p = &self.p;
        dy[0] = (v1 - v2 - p.v_d - p.r * i) / p.l;
        dy[1] = -i / p.c;
        dy[2] = (i - self.i_load) / p.c;
        dy[3] = p.r * i * i + p.v_d * i;
    }
}

/// Integrates an isolated loop from `i(0) = 0`.
pub fn integrate_loop(p: &LoopParams, v1_0: f64, v2_0: f64, cfg: &OracleConfig) -> Trajectory {
    integrate_loaded_loop(p, v1_0, v2_0, 0.0, cfg)
}

/// As [`integrate_loop`] with a constant current `i_load` drawn from the
/// receiving capacitor (`v2`) for the whole dwell.
pub fn integrate_loaded_loop(
    p: &LoopParams,
    v1_0: f64,
    v2_0: f64,
    i_load: f64,
    cfg: &OracleConfig,
) -> Trajectory {
    let start = TrajectorySample { t: 0.0, i: 0.0, v1: v1_0, v2: v2_0 };
    if !p.engaged(v1_0, v2_0) {
        let mut samples = vec![start];
        if i_load != 0.0 {
            samples.push(TrajectorySample {
                t: cfg.t_max,
                i: 0.0,
                v1: v1_0,
                v2: v2_0 - i_load * cfg.t_max / p.c,
            });
        }
        return Trajectory {
            samples,
            end_reason: EndReason::Horizon,
            dissipated: 0.0,
            steps: 0,
        };
    }

    let sys = LoadedLoop { p: *p, i_load };
    let mut rk = Rk4::new(4);
    let mut y = [0.0, v1_0, v2_0, 0.0];
    let mut prev = y;
    let mut samples = vec![start];
    let mut stride = 1usize;
    let mut since_sample = 0usize;
    let mut t = 0.0;
    let mut h = cfg.dt.min(0.02 * p.l / p.r);
    let mut i_max = 0.0f64;
    let mut steps = 0usize;
    let end_reason;

    loop {
        if t >= cfg.t_max {
            end_reason = EndReason::Horizon;
            break;
        }
        let step = h.min(cfg.t_max - t);
        prev.copy_from_slice(&y);
        rk.step(&sys, t, &mut y, step);
        steps += 1;

        if y[0] <= 0.0 {
            let h_cross = bisect_crossing(&sys, &mut rk, t, &prev, step, cfg.rel_tol);
            y = prev;
            rk.step(&sys, t, &mut y, h_cross);
            y[0] = 0.0;
            t += h_cross;
            end_reason = EndReason::ZeroCrossing;
            break;
        }
        t += step;
        i_max = i_max.max(y[0]);
        if y[0] < i_max && y[0] < cfg.zero_current_eps {
            end_reason = EndReason::Decayed;
            break;
        }

        since_sample += 1;
        if since_sample >= stride {
            since_sample = 0;
            samples.push(TrajectorySample { t, i: y[0], v1: y[1], v2: y[2] });
            if samples.len() > cfg.max_samples {
                // keep the first sample and every other one after it
                let mut k = 0usize;
                samples.retain(|_| {
                    k += 1;
                    k % 2 == 1
                });
                stride *= 2;
            }
        }
        if h < cfg.dt {
            h = (h * 1.05).min(cfg.dt);
        }
    }

    let last = TrajectorySample { t, i: y[0], v1: y[1], v2: y[2] };
    if samples.last().map(|s| s.t) != Some(t) {
        samples.push(last);
    }
    Trajectory {
        samples,
        end_reason,
        dissipated: y[3],
        steps,
    }
}

/// Sub-step length in `(0, h]` at which the single-step RK4 current from `y0` vanishes.
fn bisect_crossing(sys: &LoadedLoop, rk: &mut Rk4, t0: f64, y0: &[f64; 4], h: f64, rel_tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, h);
    let mut y = *y0;
    for _ in 0..200 {
        if hi - lo <= rel_tol * (t0 + hi).max(f64::MIN_POSITIVE) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        y.copy_from_slice(y0);
        rk.step(sys, t0, &mut y, mid);
        if y[0] > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
