//! Parameter sweeps: closed-form loop inductance, and simulated string sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::circuit::ConverterConfig;
use crate::error::{Error, Result};
use crate::exec::{par_map, Exec};
use crate::modulation::ModulatorConfig;
use crate::parallel::{energy_loss_ch2b, equilibrate, LoopParams};
use crate::report::{summarize, window_loss, RunSummary};
use crate::scenario::SweepParameter;
use crate::sim::{run, SimOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductanceRow {
    /// `None` for the hard-switched reference row.
    pub l_h: Option<f64>,
    pub regime: String,
    pub delta_v_inf_v: f64,
    pub energy_loss_j: f64,
    pub t_end_s: Option<f64>,
    pub i_peak_a: Option<f64>,
}

/// Closed-form equilibration across `grid`, plus a direct-paralleling reference row.
pub fn inductance_sweep(c: f64, r: f64, v_d: f64, delta_v0: f64, grid: &[f64]) -> Result<Vec<InductanceRow>> {
    let mut rows = grid
        .iter()
        .map(|&l| {
            let p = LoopParams::new(c, r, l, v_d)?;
            let o = equilibrate(&p, delta_v0, 0.0);
            Ok(InductanceRow {
                l_h: Some(l),
                regime: if o.regime.is_resistive() { "resistive" } else { "inductive" }.into(),
                delta_v_inf_v: o.delta_v_inf,
                energy_loss_j: o.energy_loss,
                t_end_s: Some(o.t_end),
                i_peak_a: Some(o.i_peak),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.push(InductanceRow {
        l_h: None,
        regime: "ch2b".into(),
        delta_v_inf_v: 0.0,
        energy_loss_j: energy_loss_ch2b(c, delta_v0, 0.0),
        t_end_s: None,
        i_peak_a: None,
    });
    Ok(rows)
}

pub fn write_inductance_csv<W: Write>(rows: &[InductanceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["l_loop_h", "regime", "delta_v_inf_v", "energy_loss_j", "t_end_s", "i_peak_a"])?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.9e}"));
    for r in rows {
        out.write_record([
            opt(r.l_h),
            r.regime.clone(),
            format!("{:.9e}", r.delta_v_inf_v),
            format!("{:.9e}", r.energy_loss_j),
            opt(r.t_end_s),
            opt(r.i_peak_a),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Returns copies of the configs with `param` set to `value`.
pub fn apply(
    cfg: &ConverterConfig,
    modulator: &ModulatorConfig,
    opts: &SimOptions,
    param: SweepParameter,
    value: f64,
) -> Result<(ConverterConfig, ModulatorConfig, SimOptions)> {
    let mut cfg = cfg.clone();
    let mut m = modulator.clone();
    let opts = opts.clone();
    let as_index = |field: &str| -> Result<usize> {
        if value >= 0.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(Error::invalid(field, format!("{value} is not a non-negative integer")))
        }
    };
    match param {
        SweepParameter::LoopInductance => cfg.links.iter_mut().for_each(|l| l.l_loop = value),
        SweepParameter::LoopResistance => cfg.links.iter_mut().for_each(|l| l.r_loop = value),
        SweepParameter::LoopDrop => cfg.links.iter_mut().for_each(|l| l.v_d_loop = value),
        SweepParameter::SupplyIndex => cfg.supply_index = as_index("sweep.grid")?,
        SweepParameter::CarrierFrequency => {
            cfg.f_carrier = value;
            m.f_carrier = value;
        }
        SweepParameter::ModulationIndex => {
            cfg.modulation_index = value;
            m.modulation_index = value;
        }
        SweepParameter::ModuleCount => {
            let n = as_index("sweep.grid")?;
            if n < 2 {
                return Err(Error::invalid("sweep.grid", "module count must be at least 2"));
            }
            cfg.modules.resize(n, cfg.modules[0]);
            cfg.links.resize(n - 1, cfg.links[0]);
            cfg.n_modules = n;
            cfg.supply_index = cfg.supply_index.min(n - 1);
            m = ModulatorConfig::from_converter(&cfg);
        }
    }
    cfg.validate()?;
    m.validate()?;
    Ok((cfg, m, opts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub summary: RunSummary,
    /// Device transitions per second over the window.
    pub transitions_per_s: f64,
}

/// Simulates every grid point; results come back in grid order.
pub fn simulation_sweep(
    cfg: &ConverterConfig,
    modulator: &ModulatorConfig,
    opts: &SimOptions,
    param: SweepParameter,
    grid: &[f64],
    window: usize,
    exec: Exec,
) -> Result<Vec<SweepPoint>> {
    let jobs = grid
        .iter()
        .map(|&v| apply(cfg, modulator, opts, param, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>>>()?;
    par_map(exec, &jobs, |(v, (c, m, o))| {
        let result = run(c, m, o)?;
        let k = window.min(result.period_means.len());
        let (loss, _, span) = window_loss(&result, k);
        let transitions: u64 = loss.transition_count.iter().sum();
        Ok(SweepPoint {
            value: *v,
            summary: summarize(&result, window),
            transitions_per_s: transitions as f64 * f64::from(o.devices_per_transition) / span,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub e_sw_j: f64,
    /// The unconstrained fit was negative and was clamped to zero.
    pub clamped: bool,
    /// `(f_carrier, target, efficiency without switching loss)`.
    pub points: Vec<(f64, f64, f64)>,
}

/// Least-squares switching energy matching efficiency targets at given carriers.
///
/// Switching loss is linear in `e_sw` at fixed transition counts, so the fit
/// uses one zero-switching-loss run per target.
pub fn calibrate_e_sw(
    cfg: &ConverterConfig,
    modulator: &ModulatorConfig,
    opts: &SimOptions,
    targets: &[(f64, f64)],
    window: usize,
    exec: Exec,
) -> Result<CalibrationReport> {
    let base = SimOptions { e_sw: 0.0, ..opts.clone() };
    let grid: Vec<f64> = targets.iter().map(|t| t.0).collect();
    let runs = par_map(exec, &grid, |&f| -> Result<(f64, f64, f64, f64)> {
        let (c, m, o) = apply(cfg, modulator, &base, SweepParameter::CarrierFrequency, f)?;
        let result = run(&c, &m, &o)?;
        let k = window.min(result.period_means.len());
        let (loss, delivered, _) = window_loss(&result, k);
        let devices = f64::from(o.devices_per_transition) * loss.transition_count.iter().sum::<u64>() as f64;
        Ok((delivered, loss.total(), devices, delivered / (delivered + loss.total())))
    });
    let mut num = 0.0;
    let mut den = 0.0;
    let mut points = Vec::with_capacity(targets.len());
    for (run, &(f, eta)) in runs.into_iter().zip(targets) {
        let (d, l0, a, eta0) = run?;
        if !(d > 0.0) {
            return Err(Error::ZeroDelivered);
        }
        let b = d / eta - d - l0;
        num += a * b;
        den += a * a;
        points.push((f, eta, eta0));
    }
    let raw = if den > 0.0 { num / den } else { 0.0 };
    Ok(CalibrationReport {
        e_sw_j: raw.max(0.0),
        clamped: raw < 0.0,
        points,
    })
}

pub fn write_sweep_csv<W: Write>(param: SweepParameter, points: &[SweepPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n_profile = points.iter().filter_map(|p| p.summary.profile_v.as_ref().map(Vec::len)).max().unwrap_or(0);
    let name = serde_json::to_value(param)?.as_str().unwrap_or("value").to_string();
    let mut header = vec![
        name,
        "settled".into(),
        "thd".into(),
        "thd_full_band".into(),
        "thd_n".into(),
        "efficiency".into(),
        "load_w".into(),
        "conduction_w".into(),
        "switching_w".into(),
        "parallelization_w".into(),
        "transitions_per_s".into(),
    ];
    header.extend((0..n_profile).map(|k| format!("v_mean{}_v", k + 1)));
    out.write_record(&header)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.9e}"));
    for p in points {
        let s = &p.summary;
        let mut row = vec![
            format!("{:.9e}", p.value),
            s.settled.to_string(),
            opt(s.thd),
            opt(s.thd_full_band),
            opt(s.thd_n),
            opt(s.efficiency),
            format!("{:.9e}", s.power.load_w),
            format!("{:.9e}", s.power.conduction_w),
            format!("{:.9e}", s.power.switching_w),
            format!("{:.9e}", s.power.parallelization_w),
            format!("{:.9e}", p.transitions_per_s),
        ];
        let prof = s.profile_v.clone().unwrap_or_default();
        row.extend((0..n_profile).map(|k| prof.get(k).map_or(String::new(), |v| format!("{v:.9e}"))));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Deviation rows `(value, distance, deviation)` for a supply-position or drop sweep.
pub fn write_deviation_csv<W: Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["value", "distance", "deviation_v"])?;
    for p in points {
        for (d, v) in &p.summary.deviation_v {
            out.write_record([format!("{:.9e}", p.value), d.to_string(), format!("{v:.9e}")])?;
        }
    }
    out.flush()?;
    Ok(())
}
