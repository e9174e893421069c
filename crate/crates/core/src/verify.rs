//! Randomized closed-form versus ODE comparison of the parallelization loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{par_map, Exec};
use crate::oracle::{integrate_loop, EndReason, OracleConfig};
use crate::parallel::{classify_regime, equilibrate, LoopParams, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Final voltage error relative to the initial difference.
    pub delta_v_rel: f64,
    pub energy_rel: f64,
    /// Inductive conduction time relative to `π/β`.
    pub t_end_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            delta_v_rel: 1e-3,
            energy_rel: 5e-3,
            t_end_rel: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    Resistive,
    Inductive,
    /// Pair drawn just either side of the critical inductance.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub kind: CaseKind,
    pub params: LoopParams,
    pub v1: f64,
    pub v2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub draw: Draw,
    pub delta_v_err: f64,
    pub energy_err: f64,
    pub t_end_err: Option<f64>,
    /// Relative jump of the closed-form loss across the boundary (boundary draws only).
    pub continuity_err: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub cases: usize,
    pub max_delta_v_err: f64,
    pub max_energy_err: f64,
    pub max_t_end_err: f64,
    pub max_continuity_err: f64,
    /// Cases whose current crossed zero and had their end time compared.
    pub t_end_checked: usize,
}

impl Stats {
    fn add(&mut self, c: &CaseResult) {
        self.cases += 1;
        self.max_delta_v_err = self.max_delta_v_err.max(c.delta_v_err);
        self.max_energy_err = self.max_energy_err.max(c.energy_err);
        if let Some(e) = c.t_end_err {
            self.t_end_checked += 1;
            self.max_t_end_err = self.max_t_end_err.max(e);
        }
        self.max_continuity_err = self.max_continuity_err.max(c.continuity_err.unwrap_or(0.0));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub tolerances: Tolerances,
    pub resistive: Stats,
    pub inductive: Stats,
    pub boundary: Stats,
    pub breaches: Vec<CaseResult>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.breaches.is_empty()
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// `n` draws per kind, deterministic in `seed`.
pub fn draw_cases(n: usize, seed: u64) -> Vec<Draw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(3 * n);
    for kind in [CaseKind::Resistive, CaseKind::Inductive, CaseKind::Boundary] {
        for _ in 0..n {
            let c = log_uniform(&mut rng, 1e-3, 50e-3);
            let r = log_uniform(&mut rng, 2e-3, 100e-3);
            let v_d = rng.random_range(0.0..3.0);
            let l_star = r * r * c / 8.0;
            let l = match kind {
                CaseKind::Resistive => l_star * log_uniform(&mut rng, 1e-2, 0.999),
                CaseKind::Inductive => l_star * log_uniform(&mut rng, 1.1, 1e3),
                CaseKind::Boundary => l_star * (1.0 + rng.random_range(-1e-3..1e-3)),
            };
            let v2 = rng.random_range(0.0..50.0);
            let v1 = v2 + v_d + rng.random_range(0.1..20.0);
            out.push(Draw {
                kind,
                params: LoopParams { c, r, l, v_d },
                v1,
                v2,
            });
        }
    }
    out
}

/// Compares one draw against the ODE oracle.
pub fn verify_case(draw: &Draw, tol: &Tolerances) -> CaseResult {
    let p = &draw.params;
    let dv0 = draw.v1 - draw.v2;
    let cf = equilibrate(p, draw.v1, draw.v2);
    let (delta_v_err, energy_err, t_end_err) = if cf.engaged {
        let traj = integrate_loop(p, draw.v1, draw.v2, &OracleConfig::for_loop(p, dv0));
        let last = traj.last();
        let dv_err = ((last.v1 - last.v2) - cf.delta_v_inf).abs() / dv0.abs();
        let e_err = (traj.dissipated - cf.energy_loss).abs() / cf.energy_loss.abs().max(f64::MIN_POSITIVE);
        let t_err = match classify_regime(p) {
            Regime::InductanceDominated { beta, .. } if traj.end_reason == EndReason::ZeroCrossing => {
                let half = std::f64::consts::PI / beta;
                Some((traj.t_end() - half).abs() / half)
            }
            _ => None,
        };
        (dv_err, e_err, t_err)
    } else {
        (0.0, 0.0, None)
    };

    let continuity_err = (draw.kind == CaseKind::Boundary).then(|| {
        let l_star = p.critical_inductance();
        let below = LoopParams { l: l_star * (1.0 - 1e-6), ..*p };
        let above = LoopParams { l: l_star * (1.0 + 1e-6), ..*p };
        let a = equilibrate(&below, draw.v1, draw.v2).energy_loss;
        let b = equilibrate(&above, draw.v1, draw.v2).energy_loss;
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    });

    let passed = delta_v_err <= tol.delta_v_rel
        && energy_err <= tol.energy_rel
        && t_end_err.is_none_or(|e| e <= tol.t_end_rel)
        && continuity_err.is_none_or(|e| e <= tol.energy_rel);
    CaseResult {
        draw: *draw,
        delta_v_err,
        energy_err,
        t_end_err,
        continuity_err,
        passed,
    }
}

/// Runs `n_cases` draws per kind.
pub fn verify_oracle(n_cases: usize, seed: u64, tol: Tolerances, exec: Exec) -> Result<OracleReport> {
    if n_cases == 0 {
        return Err(Error::invalid("cases", "must be at least 1"));
    }
    let draws = draw_cases(n_cases, seed);
    let results = par_map(exec, &draws, |d| verify_case(d, &tol));
    let mut report = OracleReport {
        seed,
        tolerances: tol,
        resistive: Stats::default(),
        inductive: Stats::default(),
        boundary: Stats::default(),
        breaches: Vec::new(),
    };
    for r in results {
        match r.draw.kind {
            CaseKind::Resistive => report.resistive.add(&r),
            CaseKind::Inductive => report.inductive.add(&r),
            CaseKind::Boundary => report.boundary.add(&r),
        }
        if !r.passed {
            report.breaches.push(r);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_deterministic_and_in_regime() {
        let a = draw_cases(50, 9);
        assert_eq!(a, draw_cases(50, 9));
        assert_ne!(a, draw_cases(50, 10));
        for d in &a {
            let resistive = classify_regime(&d.params).is_resistive();
            match d.kind {
                CaseKind::Resistive => assert!(resistive),
                CaseKind::Inductive => assert!(!resistive),
                CaseKind::Boundary => {}
            }
        }
    }

    #[test]
    fn degenerate_draw_passes() {
        let d = Draw {
            kind: CaseKind::Resistive,
            params: LoopParams::new(15e-3, 20e-3, 0.1e-6, 2.0).unwrap(),
            v1: 30.0,
            v2: 30.0,
        };
        let r = verify_case(&d, &Tolerances::default());
        assert!(r.passed);
        assert_eq!(r.energy_err, 0.0);
    }

    #[test]
    fn small_batch_passes() {
        let r = verify_oracle(20, 1, Tolerances::default(), Exec::default()).unwrap();
        assert!(r.passed(), "{:?}", r.breaches.first());
        assert_eq!(r.resistive.cases, 20);
        assert_eq!(r.inductive.t_end_checked, 20);
        assert!(verify_oracle(0, 1, Tolerances::default(), Exec::Sequential).is_err());
    }
}
