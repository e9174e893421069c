//! Phase-shifted-carrier PWM adapted to direction-selective modules.
//!
//! Each module compares the rectified reference against the magnitude of
//! its own bipolar triangular carrier; carriers are offset by `kπ/n`, which
//! spreads the rectified carriers evenly over their period. A zero level is
//! mapped onto a parallel mode instead of bypass, and a rising-edge latch on
//! every link flips the parallel polarity each time that link returns from
//! series, so consecutive parallel dwells alternate direction.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::circuit::{ConnectionMode, ConverterConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulatorConfig {
    pub n_modules: usize,
    pub f_carrier: f64,
    pub f_out: f64,
    pub modulation_index: f64,
    /// Carrier phase offsets (rad); defaults to `kπ/n`.
    pub carrier_phases: Vec<f64>,
}

impl ModulatorConfig {
    pub fn new(n_modules: usize, f_carrier: f64, f_out: f64, modulation_index: f64) -> Self {
        ModulatorConfig {
            n_modules,
            f_carrier,
            f_out,
            modulation_index,
            carrier_phases: default_phases(n_modules),
        }
    }

    pub fn from_converter(cfg: &ConverterConfig) -> Self {
        Self::new(cfg.n_modules, cfg.f_carrier, cfg.f_out, cfg.modulation_index)
    }

    pub fn validate(&self) -> Result<()> {
        if self.carrier_phases.len() != self.n_modules {
            return Err(Error::invalid(
                "carrier_phases",
                format!("expected {} offsets, found {}", self.n_modules, self.carrier_phases.len()),
            ));
        }
        if !(0.0..=1.0).contains(&self.modulation_index) {
            return Err(Error::invalid("modulation_index", "must lie in [0, 1]"));
        }
        let mut wrapped: Vec<f64> = self.carrier_phases.iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
        wrapped.sort_by(f64::total_cmp);
        if wrapped.windows(2).any(|w| (w[1] - w[0]).abs() < 1e-12) {
            return Err(Error::invalid("carrier_phases", "offsets must be distinct modulo the carrier period"));
        }
        Ok(())
    }
}

pub fn default_phases(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * PI / n as f64).collect()
}

/// Per-unit reference `m sin(2π f_out t)`.
pub fn reference(cfg: &ModulatorConfig, t: f64) -> f64 {
    cfg.modulation_index * (2.0 * PI * cfg.f_out * t).sin()
}

/// Bipolar symmetric triangle in `[-1, 1]`, `+1` at phase zero.
pub fn carrier(cfg: &ModulatorConfig, k: usize, t: f64) -> f64 {
    let x = (cfg.f_carrier * t + cfg.carrier_phases[k] / (2.0 * PI)).rem_euclid(1.0);
    4.0 * (x - 0.5).abs() - 1.0
}

pub fn psc_levels(cfg: &ModulatorConfig, t: f64) -> Vec<i8> {
    let mut out = vec![0; cfg.n_modules];
    psc_levels_into(cfg, t, &mut out);
    out
}

pub fn psc_levels_into(cfg: &ModulatorConfig, t: f64, out: &mut [i8]) {
    let r = reference(cfg, t);
    let sign = if r > 0.0 {
        1
    } else if r < 0.0 {
        -1
    } else {
        0
    };
    for (k, level) in out.iter_mut().enumerate() {
        *level = if sign != 0 && r.abs() >= carrier(cfg, k, t).abs() { sign } else { 0 };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    MinusNext,
    PlusNext,
}

impl Polarity {
    fn flipped(self) -> Self {
        match self {
            Polarity::MinusNext => Polarity::PlusNext,
            Polarity::PlusNext => Polarity::MinusNext,
        }
    }
}

/// Rising-edge latches, one per inter-module link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatchState {
    pub polarity: Vec<Polarity>,
    /// Previous separator sample (`true` while the link is in series).
    pub prev_sep: Vec<bool>,
}

impl LatchState {
    pub fn new(n_links: usize, initial: Polarity) -> Self {
        LatchState {
            polarity: vec![initial; n_links],
            prev_sep: vec![false; n_links],
        }
    }
}

/// Connection schedule for one sample instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCommand {
    pub t: f64,
    /// `link_modes[j]` joins module `j` and `j + 1`; owned by module `j + 1`.
    pub link_modes: Vec<ConnectionMode>,
    pub module_levels: Vec<i8>,
}

impl ModeCommand {
    /// Mode seen at string position `k`: the upstream link, or the output
    /// terminal for the first module (which cannot parallel).
    pub fn position_mode(&self, k: usize) -> ConnectionMode {
        if k == 0 {
            match self.module_levels[0] {
                1 => ConnectionMode::SeriesPlus,
                -1 => ConnectionMode::SeriesMinus,
                _ => ConnectionMode::BypassPlus,
            }
        } else {
            self.link_modes[k - 1]
        }
    }
}

/// Maps module levels to link modes and advances the latches.
pub fn map_levels_to_modes(t: f64, levels: &[i8], latch: &LatchState) -> (ModeCommand, LatchState) {
    let n_links = levels.len().saturating_sub(1);
    debug_assert_eq!(latch.polarity.len(), n_links);
    let mut next = latch.clone();
    let mut link_modes = Vec::with_capacity(n_links);
    for j in 0..n_links {
        let level = levels[j + 1];
        let sep = level != 0;
        if sep && !latch.prev_sep[j] {
            next.polarity[j] = next.polarity[j].flipped();
        }
        next.prev_sep[j] = sep;
        link_modes.push(match level {
            1 => ConnectionMode::SeriesPlus,
            -1 => ConnectionMode::SeriesMinus,
            _ => match next.polarity[j] {
                Polarity::MinusNext => ConnectionMode::ParallelMinus,
                Polarity::PlusNext => ConnectionMode::ParallelPlus,
            },
        });
    }
    (
        ModeCommand {
            t,
            link_modes,
            module_levels: levels.to_vec(),
        },
        next,
    )
}

/// Owns the latch and produces the command stream.
#[derive(Debug, Clone)]
pub struct Modulator {
    cfg: ModulatorConfig,
    latch: LatchState,
    levels: Vec<i8>,
}

impl Modulator {
    pub fn new(cfg: ModulatorConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_modules;
        Ok(Modulator {
            latch: LatchState::new(n.saturating_sub(1), Polarity::MinusNext),
            levels: vec![0; n],
            cfg,
        })
    }

    pub fn config(&self) -> &ModulatorConfig {
        &self.cfg
    }

    pub fn latch(&self) -> &LatchState {
        &self.latch
    }

    pub fn command(&mut self, t: f64) -> ModeCommand {
        psc_levels_into(&self.cfg, t, &mut self.levels);
        let (cmd, latch) = map_levels_to_modes(t, &self.levels, &self.latch);
        self.latch = latch;
        cmd
    }
}

/// Writes the command stream on a uniform grid: `t_s, level_k..., mode_j...`.
pub fn write_command_csv<W: Write>(cfg: &ModulatorConfig, dt: f64, steps: usize, w: W) -> Result<()> {
    let mut m = Modulator::new(cfg.clone())?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t_s".to_string()];
    header.extend((0..cfg.n_modules).map(|k| format!("level_{k}")));
    header.extend((0..cfg.n_modules.saturating_sub(1)).map(|j| format!("mode_{j}_{}", j + 1)));
    out.write_record(&header)?;
    for s in 0..steps {
        let cmd = m.command(s as f64 * dt);
        let mut row = vec![format!("{}", cmd.t)];
        row.extend(cmd.module_levels.iter().map(|l| l.to_string()));
        row.extend(cmd.link_modes.iter().map(|m| m.label().to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
