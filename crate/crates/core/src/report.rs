//! Run summaries and CSV/JSON artifact writers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{self, DEFAULT_H_MAX};
use crate::scenario::SCHEMA_VERSION;
use crate::sim::{steady_state_profile, LossBreakdown, SimResult};

/// Mean power of each loss class over a window (W).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossPower {
    pub conduction_w: f64,
    pub switching_w: f64,
    pub parallelization_w: f64,
    pub load_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub settled: bool,
    pub window_periods: usize,
    pub profile_v: Option<Vec<f64>>,
    pub deviation_v: Vec<(usize, f64)>,
    pub v1_peak_v: Option<f64>,
    pub thd: Option<f64>,
    /// THD over every harmonic up to Nyquist.
    pub thd_full_band: Option<f64>,
    pub thd_n: Option<f64>,
    pub efficiency: Option<f64>,
    pub power: LossPower,
    /// Window loss tallies.
    pub window_loss: LossBreakdown,
    /// Largest dwell peak per link in the window (A).
    pub link_peak_a: Vec<f64>,
    pub energy_residual: f64,
}

/// Loss book of the last `k` periods.
pub fn window_loss(result: &SimResult, k: usize) -> (LossBreakdown, f64, f64) {
    let snaps = &result.snapshots;
    let last = &snaps[snaps.len() - 1];
    let first = &snaps[snaps.len().saturating_sub(k + 1)];
    let span = last.t - first.t;
    (last.loss.since(&first.loss), last.delivered_j - first.delivered_j, span)
}

pub fn summarize(result: &SimResult, k: usize) -> RunSummary {
    let profile = steady_state_profile(result, k).ok();
    let deviation_v = profile
        .as_deref()
        .map(|p| metrics::deviation_vs_distance(p, result.supply_index))
        .unwrap_or_default();
    let k_avail = k.min(result.period_means.len());
    let spectrum = metrics::output_spectrum(result, k_avail).ok();
    let (loss, delivered, span) = window_loss(result, k_avail);
    let per_s = if span > 0.0 { 1.0 / span } else { 0.0 };
    let mut link_peak_a = vec![0.0_f64; result.n_modules.saturating_sub(1)];
    for d in result.window_dwells(k_avail) {
        link_peak_a[d.link] = link_peak_a[d.link].max(d.peak_a);
    }
    RunSummary {
        settled: result.settled,
        window_periods: k_avail,
        deviation_v,
        v1_peak_v: spectrum.as_ref().map(|s| s.fundamental()),
        thd: spectrum.as_ref().and_then(|s| metrics::thd(s, DEFAULT_H_MAX).ok()),
        thd_full_band: spectrum
            .as_ref()
            .and_then(|s| metrics::thd(s, s.harmonic_mags.len().max(2)).ok()),
        thd_n: spectrum.as_ref().and_then(|s| metrics::thd_n(s).ok()),
        efficiency: metrics::efficiency(result, k_avail).ok(),
        power: LossPower {
            conduction_w: loss.conduction_j * per_s,
            switching_w: loss.switching_j * per_s,
            parallelization_w: loss.parallelization_j * per_s,
            load_w: delivered * per_s,
        },
        window_loss: loss,
        link_peak_a,
        energy_residual: result.energy_residual(),
        profile_v: profile,
    }
}

pub fn write_waveforms_csv<W: Write>(result: &SimResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_s", "v_out_v", "i_out_a"])?;
    for s in &result.output {
        out.write_record([format!("{:.9e}", s.t), format!("{:.9e}", s.v_out), format!("{:.9e}", s.i_out)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_traces_csv<W: Write>(result: &SimResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t_s".to_string()];
    header.extend((0..result.n_modules).map(|k| format!("v_cap{}_v", k + 1)));
    header.extend((0..result.n_modules.saturating_sub(1)).map(|j| format!("i_link{}_a", j + 1)));
    out.write_record(&header)?;
    for s in &result.traces {
        let row = std::iter::once(s.t)
            .chain(s.v_caps.iter().copied())
            .chain(s.link_currents.iter().copied())
            .map(|x| format!("{x:.9e}"));
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ProfileDoc<'a> {
    schema_version: u32,
    scenario: &'a str,
    settled: bool,
    supply_index: usize,
    window_periods: usize,
    profile_v: &'a Option<Vec<f64>>,
    deviation_vs_distance: Vec<DeviationRow>,
}

#[derive(Serialize)]
struct DeviationRow {
    distance: usize,
    deviation_v: f64,
}

pub fn write_profile_json<W: Write>(name: &str, result: &SimResult, summary: &RunSummary, w: W) -> Result<()> {
    let doc = ProfileDoc {
        schema_version: SCHEMA_VERSION,
        scenario: name,
        settled: summary.settled,
        supply_index: result.supply_index,
        window_periods: summary.window_periods,
        profile_v: &summary.profile_v,
        deviation_vs_distance: summary
            .deviation_v
            .iter()
            .map(|&(distance, deviation_v)| DeviationRow { distance, deviation_v })
            .collect(),
    };
    serde_json::to_writer_pretty(w, &doc)?;
    Ok(())
}

#[derive(Serialize)]
struct LossDoc<'a> {
    schema_version: u32,
    scenario: &'a str,
    total: &'a LossBreakdown,
    window: &'a LossBreakdown,
    window_periods: usize,
    window_power: LossPower,
    energy_supplied_j: f64,
    energy_delivered_j: f64,
    stored_initial_j: f64,
    stored_final_j: f64,
    energy_residual: f64,
}

pub fn write_losses_json<W: Write>(name: &str, result: &SimResult, summary: &RunSummary, w: W) -> Result<()> {
    let doc = LossDoc {
        schema_version: SCHEMA_VERSION,
        scenario: name,
        total: &result.loss,
        window: &summary.window_loss,
        window_periods: summary.window_periods,
        window_power: summary.power,
        energy_supplied_j: result.energy_supplied_j,
        energy_delivered_j: result.energy_delivered_j,
        stored_initial_j: result.stored_initial_j,
        stored_final_j: result.stored_final_j,
        energy_residual: summary.energy_residual,
    };
    serde_json::to_writer_pretty(w, &doc)?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    schema_version: u32,
    scenario: &'a str,
    #[serde(flatten)]
    summary: &'a RunSummary,
}

pub fn write_summary_json<W: Write>(name: &str, summary: &RunSummary, w: W) -> Result<()> {
    serde_json::to_writer_pretty(
        w,
        &SummaryDoc {
            schema_version: SCHEMA_VERSION,
            scenario: name,
            summary,
        },
    )?;
    Ok(())
}

/// Plain-text table for the terminal.
pub fn format_summary(name: &str, s: &RunSummary) -> String {
    let pct = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{:.2} %", 100.0 * v));
    let mut t = format!("scenario          {name}\n");
    t += &format!("settled           {}\n", s.settled);
    if let Some(p) = &s.profile_v {
        let vs: Vec<String> = p.iter().map(|v| format!("{v:.2}")).collect();
        t += &format!("profile (V)       {}\n", vs.join("  "));
    }
    t += &format!("THD (H=50)        {}\n", pct(s.thd));
    t += &format!("THD full band     {}\n", pct(s.thd_full_band));
    t += &format!("THD+N             {}\n", pct(s.thd_n));
    t += &format!("efficiency        {}\n", pct(s.efficiency));
    t += &format!(
        "power (W)         load {:.2}  conduction {:.3}  switching {:.3}  parallel {:.3}\n",
        s.power.load_w, s.power.conduction_w, s.power.switching_w, s.power.parallelization_w
    );
    let peaks: Vec<String> = s.link_peak_a.iter().map(|v| format!("{v:.2}")).collect();
    t += &format!("link peaks (A)    {}\n", peaks.join("  "));
    t += &format!("energy residual   {:.2e}\n", s.energy_residual);
    t
}
