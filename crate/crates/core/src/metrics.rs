//! Harmonic analysis, efficiency and voltage-deviation profiles.

use std::io::Write;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SimResult;

pub const DEFAULT_H_MAX: usize = 50;
pub const STEADY_WINDOW_PERIODS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub f_fund: f64,
    pub dc: f64,
    /// Peak amplitude of harmonic `h` at index `h - 1`, up to Nyquist.
    pub harmonic_mags: Vec<f64>,
    pub rms_total: f64,
    pub window_periods: usize,
    /// Bin spacing (Hz).
    pub bin_hz: f64,
    /// Peak amplitude of every bin from DC to Nyquist.
    pub bins: Vec<f64>,
    pub n_samples: usize,
}

impl SpectrumReport {
    pub fn fundamental(&self) -> f64 {
        self.harmonic_mags.first().copied().unwrap_or(0.0)
    }

    fn checked_fundamental(&self) -> Result<f64> {
        let v1 = self.fundamental();
        // round-off floor of the transform
        if v1 > 1e-12 * self.rms_total && v1 > 0.0 {
            Ok(v1)
        } else {
            Err(Error::ZeroFundamental)
        }
    }

    /// Mean-square of the bins relative to `rms_total²`, minus one.
    pub fn parseval_residual(&self) -> f64 {
        let n = self.bins.len();
        let ms: f64 = self
            .bins
            .iter()
            .enumerate()
            .map(|(k, a)| if k == 0 || (k == n - 1 && self.n_samples.is_multiple_of(2)) { a * a } else { a * a / 2.0 })
            .sum();
        let total = self.rms_total * self.rms_total;
        if total == 0.0 {
            ms
        } else {
            ms / total - 1.0
        }
    }
}

/// Rectangular-window DFT of a waveform covering an integer number of periods.
pub fn spectrum(waveform: &[f64], dt: f64, f_fund: f64) -> Result<SpectrumReport> {
    if waveform.len() < 4 {
        return Err(Error::invalid("waveform", "needs at least four samples"));
    }
    if !(dt > 0.0) || !(f_fund > 0.0) {
        return Err(Error::invalid("dt/f_fund", "must be > 0"));
    }
    let n = waveform.len();
    let span = n as f64 * dt * f_fund;
    let periods = span.round();
    if periods < 1.0 || (span - periods).abs() > 1e-6 * span.max(1.0) {
        return Err(Error::NonIntegerPeriods { periods: span });
    }
    let periods = periods as usize;

    let mut buf: Vec<Complex<f64>> = waveform.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    let nf = n as f64;
    let bins: Vec<f64> = (0..=half)
        .map(|k| {
            let m = buf[k].norm() / nf;
            if k == 0 || (n.is_multiple_of(2) && k == half) {
                m
            } else {
                2.0 * m
            }
        })
        .collect();
    let harmonic_mags = (1..=half / periods).map(|h| bins[h * periods]).collect();
    let rms_total = (waveform.iter().map(|x| x * x).sum::<f64>() / nf).sqrt();
    Ok(SpectrumReport {
        f_fund,
        dc: buf[0].re / nf,
        harmonic_mags,
        rms_total,
        window_periods: periods,
        bin_hz: 1.0 / (nf * dt),
        bins,
        n_samples: n,
    })
}

/// `sqrt(sum_{h=2..h_max} V_h²) / V_1`, truncated at Nyquist.
pub fn thd(report: &SpectrumReport, h_max: usize) -> Result<f64> {
    if h_max < 2 {
        return Err(Error::invalid("h_max", "must be at least 2"));
    }
    let v1 = report.checked_fundamental()?;
    let top = h_max.min(report.harmonic_mags.len());
    let sum: f64 = report.harmonic_mags.iter().take(top).skip(1).map(|v| v * v).sum();
    Ok(sum.sqrt() / v1)
}

/// All non-fundamental content over the fundamental.
pub fn thd_n(report: &SpectrumReport) -> Result<f64> {
    let v1 = report.checked_fundamental()?;
    let rest = (report.rms_total * report.rms_total - v1 * v1 / 2.0).max(0.0);
    Ok(rest.sqrt() / (v1 / 2f64.sqrt()))
}

/// Spectrum of the output voltage over the last `k` periods.
pub fn output_spectrum(result: &SimResult, k: usize) -> Result<SpectrumReport> {
    let v: Vec<f64> = result.window(k).iter().map(|s| s.v_out).collect();
    spectrum(&v, result.dt, result.f_out)
}

/// Delivered over delivered plus losses, across the last `k` periods.
pub fn efficiency(result: &SimResult, k: usize) -> Result<f64> {
    if !result.settled {
        return Err(Error::NotSettled {
            periods: result.period_means.len(),
        });
    }
    let snaps = &result.snapshots;
    let last = snaps.last().ok_or(Error::ZeroDelivered)?;
    let first = &snaps[snaps.len().saturating_sub(k + 1)];
    let delivered = last.delivered_j - first.delivered_j;
    if !(delivered > 0.0) {
        return Err(Error::ZeroDelivered);
    }
    let loss = last.loss.since(&first.loss).total();
    Ok(delivered / (delivered + loss))
}

/// Mean `v_supply - v(module)` grouped by hop distance from the supply.
pub fn deviation_vs_distance(profile: &[f64], supply_index: usize) -> Vec<(usize, f64)> {
    let Some(&v_s) = profile.get(supply_index) else {
        return Vec::new();
    };
    let max_d = supply_index.max(profile.len() - 1 - supply_index);
    (0..=max_d)
        .filter_map(|d| {
            let devs: Vec<f64> = [supply_index.checked_sub(d), Some(supply_index + d)]
                .into_iter()
                .flatten()
                .filter(|&k| k < profile.len())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .map(|k| v_s - profile[k])
                .collect();
            (!devs.is_empty()).then(|| (d, devs.iter().sum::<f64>() / devs.len() as f64))
        })
        .collect()
}

/// Harmonic table with magnitudes normalised to the fundamental.
pub fn write_spectrum_csv<W: Write>(report: &SpectrumReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["harmonic", "frequency_hz", "magnitude_v", "normalized_db"])?;
    let v1 = report.fundamental();
    for (i, &m) in report.harmonic_mags.iter().enumerate() {
        let h = i + 1;
        let db = if v1 > 0.0 && m > 0.0 { 20.0 * (m / v1).log10() } else { f64::NEG_INFINITY };
        out.write_record([
            h.to_string(),
            format!("{:.6}", h as f64 * report.f_fund),
            format!("{m:.9e}"),
            format!("{db:.4}"),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn sampled(f: impl Fn(f64) -> f64, n: usize, periods: usize, f0: f64) -> (Vec<f64>, f64) {
        let dt = periods as f64 / (f0 * n as f64);
        ((0..n).map(|i| f(i as f64 * dt)).collect(), dt)
    }

    #[test]
    fn pure_sine() {
        let (x, dt) = sampled(|t| 200.0 * (2.0 * PI * 60.0 * t).sin(), 6000, 3, 60.0);
        let r = spectrum(&x, dt, 60.0).unwrap();
        assert!((r.harmonic_mags[0] - 200.0).abs() < 1e-9);
        assert!(r.harmonic_mags[1..].iter().all(|m| *m < 1e-9));
        assert!(thd(&r, DEFAULT_H_MAX).unwrap() < 1e-12);
        assert!(thd_n(&r).unwrap() < 1e-6);
        assert!(r.parseval_residual().abs() < 1e-9);
    }

    #[test]
    fn square_wave() {
        let sq = |t: f64| if (t * 60.0).fract() < 0.5 { 1.0 } else { -1.0 };
        let (x, dt) = sampled(|t| sq(t + 0.25 / 6000.0 / 60.0), 200_000, 1, 60.0);
        let r = spectrum(&x, dt, 60.0).unwrap();
        let h = &r.harmonic_mags;
        assert!((h[2] / h[0] - 1.0 / 3.0).abs() < 1e-3);
        assert!((h[4] / h[0] - 1.0 / 5.0).abs() < 1e-3);
        let full = thd(&r, h.len()).unwrap();
        assert!((full - (PI * PI / 8.0 - 1.0).sqrt()).abs() < 2e-3, "{full}");
        assert!(thd_n(&r).unwrap() >= thd(&r, DEFAULT_H_MAX).unwrap());
        assert!(r.parseval_residual().abs() < 1e-9);
    }

    #[test]
    fn noise_injection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sigma = 5.0;
        let noise = Normal::new(0.0, sigma).unwrap();
        let expected = sigma / (100.0 / 2f64.sqrt());
        for _ in 0..100 {
            let (mut x, dt) = sampled(|t| 100.0 * (2.0 * PI * 50.0 * t).sin(), 60_000, 5, 50.0);
            x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            let r = spectrum(&x, dt, 50.0).unwrap();
            let got = thd_n(&r).unwrap();
            assert!((got / expected - 1.0).abs() < 0.02, "{got} vs {expected}");
            assert!(got >= thd(&r, DEFAULT_H_MAX).unwrap());
        }
    }

    #[test]
    fn rejects_partial_periods_and_empty_fundamental() {
        let (x, dt) = sampled(|t| (2.0 * PI * 60.0 * t).sin(), 1000, 2, 60.0);
        assert!(matches!(spectrum(&x[..750], dt, 60.0), Err(Error::NonIntegerPeriods { .. })));
        let r = spectrum(&vec![1.0; 1000], dt, 60.0).unwrap();
        assert!(matches!(thd(&r, 50), Err(Error::ZeroFundamental)));
        assert!(matches!(thd_n(&r), Err(Error::ZeroFundamental)));
        let r = spectrum(&x, dt, 60.0).unwrap();
        assert!(thd(&r, 1).is_err());
    }

    #[test]
    fn deviation_profiles() {
        let p = [30.2, 32.6, 35.0, 32.6, 30.2, 27.8];
        let d = deviation_vs_distance(&p, 2);
        let want = [0.0, 2.4, 4.8, 7.2];
        assert_eq!(d.len(), 4);
        for ((k, v), w) in d.iter().zip(want) {
            assert!((v - w).abs() < 1e-9, "d={k}: {v}");
        }
        let flat = deviation_vs_distance(&[35.0; 6], 2);
        assert!(flat.iter().all(|(_, v)| v.abs() < 1e-12));
        let one_sided = deviation_vs_distance(&[35.0, 32.5, 30.0, 27.4, 25.0, 22.6], 0);
        assert!(one_sided.windows(2).all(|w| w[1].1 > w[0].1));
    }

    #[test]
    fn spectrum_csv_is_normalised() {
        let (x, dt) = sampled(|t| 10.0 * (2.0 * PI * 60.0 * t).sin() + (2.0 * PI * 180.0 * t).sin(), 600, 1, 60.0);
        let r = spectrum(&x, dt, 60.0).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "harmonic,frequency_hz,magnitude_v,normalized_db");
        assert!(lines.next().unwrap().ends_with(",0.0000"));
        assert!(lines.nth(1).unwrap().ends_with(",-20.0000"));
    }
}
