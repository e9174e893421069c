//! Closed-form equilibration of two equal capacitors joined by a series
//! R-L loop with a lumped diode drop.
//!
//! The loop only conducts from the higher capacitor (`v1`) to the lower one
//! (`v2`) and only once `v1 > v2 + v_d`. Conduction starts from zero current
//! and ends at the first current zero (inductive loops) or decays
//! asymptotically (resistive loops).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative distance to `R² = 8L/C` below which the repeated-root form is used.
const CRITICAL_REL_TOL: f64 = 1e-9;
/// Resistive loops report their end once the current falls below this fraction of its peak.
const RESISTIVE_END_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopParams {
    /// Per-module capacitance (F).
    pub c: f64,
    /// Loop resistance (Ω).
    pub r: f64,
    /// Loop inductance (H).
    pub l: f64,
    /// Lumped loop diode drop (V).
    pub v_d: f64,
}

impl LoopParams {
    pub fn new(c: f64, r: f64, l: f64, v_d: f64) -> Result<Self> {
        let p = LoopParams { c, r, l, v_d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c", self.c), ("r", self.r), ("l", self.l)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("loop.{name}"), format!("must be > 0, got {v}")));
            }
        }
        if !(self.v_d >= 0.0 && self.v_d.is_finite()) {
            return Err(Error::invalid("loop.v_d", format!("must be >= 0, got {}", self.v_d)));
        }
        Ok(())
    }

    /// Inductance at which the loop changes regime, `R²C/8`.
    pub fn critical_inductance(&self) -> f64 {
        self.r * self.r * self.c / 8.0
    }

    pub fn engaged(&self, v1: f64, v2: f64) -> bool {
        v1 > v2 + self.v_d
    }

    fn is_critical(&self) -> bool {
        let eight_l_c = 8.0 * self.l / self.c;
        (self.r * self.r - eight_l_c).abs() < CRITICAL_REL_TOL * eight_l_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// `R² ≥ 8L/C`: two real roots, unipolar decaying current.
    ResistanceDominated { r1: f64, r2: f64 },
    /// `R² < 8L/C`: half-sine pulse `e^{αt} sin(βt)`.
    InductanceDominated { alpha: f64, beta: f64 },
}

impl Regime {
    pub fn is_resistive(&self) -> bool {
        matches!(self, Regime::ResistanceDominated { .. })
    }
}

pub fn classify_regime(p: &LoopParams) -> Regime {
    let a = p.r / (2.0 * p.l);
    let inner = a * a - 2.0 / (p.l * p.c);
    if p.r * p.r >= 8.0 * p.l / p.c {
        let d = inner.max(0.0).sqrt();
        Regime::ResistanceDominated { r1: -a + d, r2: -a - d }
    } else {
        Regime::InductanceDominated {
            alpha: -a,
            beta: (-inner).sqrt(),
        }
    }
}

/// `e^{απ/β}`: the fraction of the driving voltage left after the half-sine pulse.
fn overshoot_factor(alpha: f64, beta: f64) -> f64 {
    (alpha * std::f64::consts::PI / beta).exp()
}

/// Loop current at time `t` after the loop is closed.
pub fn loop_current(p: &LoopParams, v1_0: f64, v2_0: f64, t: f64) -> f64 {
    if !p.engaged(v1_0, v2_0) || t < 0.0 {
        return 0.0;
    }
    let drive = v1_0 - v2_0 - p.v_d;
    match classify_regime(p) {
        Regime::ResistanceDominated { r1, r2 } => {
            let alpha = 0.5 * (r1 + r2);
            let d = 0.5 * (r1 - r2);
            let shape = if p.is_critical() || d * t < 1e-3 {
                // e^{αt} sinh(dt)/d, series-expanded near the repeated root
                let x2 = (d * t) * (d * t);
                t * (alpha * t).exp() * (1.0 + x2 / 6.0 + x2 * x2 / 120.0)
            } else {
                ((r1 * t).exp() - (r2 * t).exp()) / (r1 - r2)
            };
            drive / p.l * shape
        }
        Regime::InductanceDominated { alpha, beta } => {
            if t >= std::f64::consts::PI / beta {
                0.0
            } else {
                drive / (p.l * beta) * (alpha * t).exp() * (beta * t).sin()
            }
        }
    }
}

/// Final state of one parallelization event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibrationOutcome {
    pub v1_end: f64,
    pub v2_end: f64,
    /// `v1_end - v2_end`.
    pub delta_v_inf: f64,
    pub energy_loss: f64,
    /// End of conduction (s). For resistive loops: current below 1e-6 of its peak.
    pub t_end: f64,
    pub i_peak: f64,
    pub engaged: bool,
    pub regime: Regime,
}

pub fn equilibrate(p: &LoopParams, v1_0: f64, v2_0: f64) -> EquilibrationOutcome {
    let regime = classify_regime(p);
    if !p.engaged(v1_0, v2_0) {
        return EquilibrationOutcome {
            v1_end: v1_0,
            v2_end: v2_0,
            delta_v_inf: v1_0 - v2_0,
            energy_loss: 0.0,
            t_end: 0.0,
            i_peak: 0.0,
            engaged: false,
            regime,
        };
    }
    let drive = v1_0 - v2_0 - p.v_d;
    let (transfer, t_peak, t_end) = match regime {
        Regime::ResistanceDominated { r1, r2 } => {
            let t_peak = if p.is_critical() || r1 == r2 {
                2.0 * p.l / p.r
            } else {
                (r1 / r2).ln() / (r2 - r1)
            };
            let i_peak = loop_current(p, v1_0, v2_0, t_peak);
            let t_end = resistive_end_time(p, v1_0, v2_0, t_peak, i_peak, r1);
            (0.5 * drive, t_peak, t_end)
        }
        Regime::InductanceDominated { alpha, beta } => {
            let k = 0.5 * (1.0 + overshoot_factor(alpha, beta));
            let t_peak = (beta / -alpha).atan() / beta;
            (drive * k, t_peak, std::f64::consts::PI / beta)
        }
    };
    let v1_end = v1_0 - transfer;
    let v2_end = v2_0 + transfer;
    EquilibrationOutcome {
        v1_end,
        v2_end,
        delta_v_inf: v1_end - v2_end,
        energy_loss: energy_loss_disep(p, v1_0, v2_0),
        t_end,
        i_peak: loop_current(p, v1_0, v2_0, t_peak),
        engaged: true,
        regime,
    }
}

fn resistive_end_time(p: &LoopParams, v1: f64, v2: f64, t_peak: f64, i_peak: f64, r1: f64) -> f64 {
    let target = RESISTIVE_END_FRACTION * i_peak;
    let mut lo = t_peak;
    let mut hi = t_peak + 1.0 / r1.abs().max(f64::MIN_POSITIVE);
    while loop_current(p, v1, v2, hi) > target {
        lo = hi;
        hi = t_peak + 2.0 * (hi - t_peak);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if loop_current(p, v1, v2, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Loss of a bidirectional (double-H-bridge) paralleling: `C(V1-V2)²/4`.
pub fn energy_loss_ch2b(c: f64, v1: f64, v2: f64) -> f64 {
    0.25 * c * (v1 - v2) * (v1 - v2)
}

/// Loss of one direction-selective paralleling event, regime-matched.
pub fn energy_loss_disep(p: &LoopParams, v1_0: f64, v2_0: f64) -> f64 {
    if !p.engaged(v1_0, v2_0) {
        return 0.0;
    }
    let dv = v1_0 - v2_0;
    match classify_regime(p) {
        Regime::ResistanceDominated { .. } => 0.25 * p.c * (dv * dv - p.v_d * p.v_d),
        Regime::InductanceDominated { alpha, beta } => {
            let e = overshoot_factor(alpha, beta);
            let drive = dv - p.v_d;
            0.25 * p.c
                * drive
                * drive
                * (1.0 - e * e)
                * (1.0 + 2.0 * p.v_d / (drive * (1.0 - e)))
        }
    }
}

/// Steady deviation after one event, evaluated for any inductance.
pub fn residual_deviation(p: &LoopParams, delta_v0: f64) -> f64 {
    match classify_regime(p) {
        Regime::ResistanceDominated { .. } => p.v_d,
        Regime::InductanceDominated { alpha, beta } => {
            let e = overshoot_factor(alpha, beta);
            -delta_v0 * e + p.v_d * (1.0 + e)
        }
    }
}

/// Loop inductance that leaves zero deviation after one event.
///
/// Bisects the inductive deviation over `[R²C/8, 1 H]` in log space.
pub fn zero_deviation_inductance(c: f64, r: f64, v_d: f64, delta_v0: f64) -> Result<f64> {
    LoopParams::new(c, r, 1e-6, v_d)?;
    if !(delta_v0 > v_d) {
        return Err(Error::Precondition(format!(
            "initial difference {delta_v0} V does not exceed the loop drop {v_d} V"
        )));
    }
    let deviation = |l: f64| {
        let beta2 = 2.0 / (l * c) - r * r / (4.0 * l * l);
        if beta2 <= 0.0 {
            return v_d;
        }
        let e = overshoot_factor(-r / (2.0 * l), beta2.sqrt());
        -delta_v0 * e + v_d * (1.0 + e)
    };
    let mut lo = r * r * c / 8.0;
    let mut hi = 1.0;
    let (f_lo, f_hi) = (deviation(lo), deviation(hi));
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::NoRoot {
            lo,
            hi,
            reason: format!("deviation does not change sign ({f_lo:.3e} V to {f_hi:.3e} V)"),
        });
    }
    for _ in 0..300 {
        let mid = (lo * hi).sqrt();
        let f = deviation(mid);
        if f.abs() < 1e-9 || hi / lo - 1.0 < 1e-14 {
            return Ok(mid);
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn proto(l: f64) -> LoopParams {
        LoopParams::new(0.015, 0.02, l, 2.0).unwrap()
    }

    #[test]
    fn regime_examples() {
        assert!(classify_regime(&proto(0.5e-6)).is_resistive());
        match classify_regime(&proto(10e-6)) {
            Regime::InductanceDominated { alpha, beta } => {
                let l = 10e-6;
                let expect = (2.0 / (l * 0.015) - 0.02f64.powi(2) / (4.0 * l * l)).sqrt();
                assert!((beta - expect).abs() < 1e-9 * expect);
                assert!(alpha < 0.0 && beta > 0.0);
            }
            r => panic!("{r:?}"),
        }
        let p = proto(0.75e-6);
        assert!((p.critical_inductance() - 0.75e-6).abs() < 1e-18);
    }

    #[test]
    fn exact_boundary_is_resistive_with_repeated_root() {
        // r² = 8l/c with exactly representable values
        let p = LoopParams::new(8.0, 1.0, 1.0, 0.0).unwrap();
        match classify_regime(&p) {
            Regime::ResistanceDominated { r1, r2 } => {
                assert_eq!(r1, r2);
                assert_eq!(r1, -0.5);
            }
            r => panic!("{r:?}"),
        }
        // repeated-root current is drive/L · t e^{rt}
        let i = loop_current(&p, 3.0, 1.0, 2.0);
        assert!((i - 2.0 * 2.0 * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn non_engaged_is_identity() {
        let p = proto(1e-6);
        let o = equilibrate(&p, 10.0, 10.0);
        assert!(!o.engaged);
        assert_eq!((o.v1_end, o.v2_end, o.energy_loss, o.i_peak), (10.0, 10.0, 0.0, 0.0));
        assert_eq!(loop_current(&p, 12.0, 10.0, 1e-6), 0.0);
        assert_eq!(energy_loss_disep(&p, 12.0, 10.0), 0.0);
    }

    #[test]
    fn resistive_final_voltages() {
        let o = equilibrate(&proto(0.5e-6), 12.0, 2.0);
        assert!(o.engaged);
        assert!((o.v1_end - 8.0).abs() < 1e-12);
        assert!((o.v2_end - 6.0).abs() < 1e-12);
        assert!((o.delta_v_inf - 2.0).abs() < 1e-12);
        assert!(o.t_end > 0.0 && o.t_end.is_finite());
        let i_end = loop_current(&proto(0.5e-6), 12.0, 2.0, o.t_end);
        assert!((i_end / o.i_peak - 1e-6).abs() < 1e-9);
    }

    #[test]
    fn inductive_current_ends_at_half_period() {
        let p = proto(10e-6);
        let o = equilibrate(&p, 12.0, 2.0);
        if let Regime::InductanceDominated { beta, .. } = o.regime {
            assert!((o.t_end - std::f64::consts::PI / beta).abs() < 1e-15);
        }
        assert_eq!(loop_current(&p, 12.0, 2.0, o.t_end), 0.0);
        assert!(loop_current(&p, 12.0, 2.0, 0.999 * o.t_end) > 0.0);
    }

    #[test]
    fn ch2b_examples() {
        assert!((energy_loss_ch2b(0.015, 20.0, 10.0) - 0.375).abs() < 1e-15);
        // cross-check against capacitor energy with final voltages at the mean
        let e0 = 0.5 * 0.015 * (20.0f64.powi(2) + 10.0f64.powi(2));
        let e1 = 0.015 * 15.0f64.powi(2);
        assert!((e0 - e1 - 0.375).abs() < 1e-12);
        assert_eq!(energy_loss_ch2b(0.015, 7.0, 7.0), 0.0);
    }

    #[test]
    fn resistive_loss_ratio_is_096() {
        let p = proto(0.5e-6);
        let ratio = energy_loss_disep(&p, 12.0, 2.0) / energy_loss_ch2b(p.c, 12.0, 2.0);
        assert!((ratio - 0.96).abs() < 1e-12);
        assert!((energy_loss_disep(&p, 12.0, 2.0) - 0.36).abs() < 1e-12);
    }

    #[test]
    fn zero_drop_resistive_equals_ch2b() {
        let p = LoopParams::new(0.015, 0.02, 0.5e-6, 0.0).unwrap();
        assert_eq!(energy_loss_disep(&p, 12.0, 2.0), energy_loss_ch2b(0.015, 12.0, 2.0));
    }

    #[test]
    fn lossless_limit() {
        let mut last = f64::INFINITY;
        for r in [1e-3, 1e-5, 1e-7, 1e-9] {
            let p = LoopParams::new(0.015, r, 10e-6, 0.0).unwrap();
            let e = energy_loss_disep(&p, 12.0, 2.0);
            assert!(e < last);
            last = e;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn zero_deviation_examples() {
        let l = zero_deviation_inductance(0.015, 0.02, 2.0, 10.0).unwrap();
        assert!((l - 4.6e-6).abs() < 0.05e-6, "l = {l}");
        let o = equilibrate(&proto(l), 12.0, 2.0);
        assert!(o.delta_v_inf.abs() < 1e-3);
        assert!(matches!(
            zero_deviation_inductance(0.015, 0.02, 0.0, 10.0),
            Err(Error::NoRoot { .. })
        ));
        assert!(matches!(
            zero_deviation_inductance(0.015, 0.02, 2.0, 2.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn regime_continuity_at_boundary() {
        let base = proto(1.0);
        let l_star = base.critical_inductance();
        let below = proto(l_star * (1.0 - 1e-6));
        let above = proto(l_star * (1.0 + 1e-6));
        let (a, b) = (equilibrate(&below, 12.0, 2.0), equilibrate(&above, 12.0, 2.0));
        assert!(a.regime.is_resistive() && !b.regime.is_resistive());
        assert!((a.delta_v_inf - b.delta_v_inf).abs() < 1e-6);
        assert!((a.energy_loss - b.energy_loss).abs() < 1e-6 * a.energy_loss);
    }

    #[test]
    fn resistive_below_ch2b_loss() {
        let p = proto(0.1e-6);
        for dv in [2.5, 5.0, 10.0, 40.0] {
            assert!(energy_loss_disep(&p, 2.0 + dv, 2.0) < energy_loss_ch2b(p.c, 2.0 + dv, 2.0));
        }
    }

    proptest! {
        #[test]
        fn charge_and_energy_accounting(
            log_l in -8.0f64..-2.0, log_r in -3.0f64..0.0, log_c in -4.0f64..-1.0,
            vd in 0.0f64..3.0, v2 in 0.0f64..50.0, extra in 1e-3f64..50.0,
        ) {
            let p = LoopParams::new(10f64.powf(log_c), 10f64.powf(log_r), 10f64.powf(log_l), vd).unwrap();
            let v1 = v2 + vd + extra;
            let o = equilibrate(&p, v1, v2);
            prop_assert!(o.engaged);
            prop_assert!(((o.v1_end + o.v2_end) - (v1 + v2)).abs() <= 1e-12 * (v1 + v2));
            let stored = 0.5 * p.c * (v1 * v1 + v2 * v2 - o.v1_end * o.v1_end - o.v2_end * o.v2_end);
            prop_assert!(o.energy_loss >= 0.0);
            prop_assert!((stored - o.energy_loss).abs() <= 1e-9 * o.energy_loss.max(1e-300) + 1e-12 * p.c * v1 * v1);
        }

        #[test]
        fn deviation_decreases_with_inductance(scale in 1.01f64..1e4, step in 1.001f64..2.0) {
            let p0 = proto(1.0);
            let l1 = p0.critical_inductance() * scale;
            let a = residual_deviation(&proto(l1), 10.0);
            let b = residual_deviation(&proto(l1 * step), 10.0);
            prop_assert!(b < a);
        }
    }
}
