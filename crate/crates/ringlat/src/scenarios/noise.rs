//! Parametric heating budget from relative intensity noise, either from a
//! measured intensity series or from spectrum values given directly.

use std::path::Path;

use ringlat_core::thermo::{heating_rates, heating_rates_from_values, psd_one_sided, HeatingRates};
use serde::Serialize;

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::output::RunOutput;

#[derive(Debug, Clone, Serialize)]
pub struct PsdRow {
    pub frequency: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseReport {
    pub source: String,
    pub nu_ax: f64,
    pub nu_rad: f64,
    /// Spectral densities used at `2 nu_ax` and `2 nu_rad`, 1/Hz.
    pub s_ax: f64,
    pub s_rad: f64,
    pub sample_rate: Option<f64>,
    pub rates: HeatingRates,
    /// `false` when the heating time is unbounded (no noise).
    pub heating: bool,
    #[serde(skip)]
    pub psd: Vec<PsdRow>,
}

/// Reads a two-column `(t_seconds, value)` CSV. An optional non-numeric
/// header line is skipped; samples must be uniformly spaced.
pub fn read_series(path: &Path) -> Result<(f64, Vec<f64>)> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| HarnessError::Input { path: name.clone(), line: 0, reason: e.to_string() })?;
    let mut t = Vec::new();
    let mut v = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Input {
            path: name.clone(),
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        let bad = |reason: String| HarnessError::Input { path: name.clone(), line, reason };
        if rec.len() != 2 {
            return Err(bad(format!("expected 2 columns, found {}", rec.len())));
        }
        let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
        match parsed {
            (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => {
                t.push(a);
                v.push(b);
            }
            _ if i == 0 => continue,
            _ => return Err(bad(format!("cannot parse `{}`,`{}` as numbers", &rec[0], &rec[1]))),
        }
    }
    if t.len() < 2 {
        return Err(HarnessError::Input { path: name, line: 0, reason: "fewer than 2 samples".into() });
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(HarnessError::Input { path: name, line: 0, reason: "time column must increase".into() });
    }
    for (i, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) / dt - 1.0).abs() > 1e-3 {
            return Err(HarnessError::Input {
                path: name,
                line: i + 2,
                reason: "sampling is not uniform".into(),
            });
        }
    }
    Ok((1.0 / dt, v))
}

pub fn compute(cfg: &Config) -> Result<NoiseReport> {
    let c = &cfg.noise;
    match &c.series {
        Some(p) => {
            let (fs, v) = read_series(Path::new(p))?;
            let spec = psd_one_sided(&v, fs, c.segment_length.min(v.len()), c.overlap)?;
            let rates = heating_rates(c.nu_ax, c.nu_rad, &spec)?;
            let at = |f: f64| spec.value_at(f).unwrap_or(f64::NAN);
            Ok(NoiseReport {
                source: p.clone(),
                nu_ax: c.nu_ax,
                nu_rad: c.nu_rad,
                s_ax: at(2.0 * c.nu_ax),
                s_rad: at(2.0 * c.nu_rad),
                sample_rate: Some(fs),
                heating: rates.tau_h.is_some(),
                rates,
                psd: spec
                    .frequency
                    .iter()
                    .zip(&spec.s)
                    .map(|(&frequency, &s)| PsdRow { frequency, s })
                    .collect(),
            })
        }
        None => {
            let rates = heating_rates_from_values(c.nu_ax, c.spot.s_ax, c.nu_rad, c.spot.s_rad)?;
            Ok(NoiseReport {
                source: "spot values".into(),
                nu_ax: c.nu_ax,
                nu_rad: c.nu_rad,
                s_ax: c.spot.s_ax,
                s_rad: c.spot.s_rad,
                sample_rate: None,
                heating: rates.tau_h.is_some(),
                rates,
                psd: Vec::new(),
            })
        }
    }
}

pub fn emit(r: &NoiseReport, out: &mut RunOutput) -> Result<()> {
    if !r.psd.is_empty() {
        out.write_csv("noise_psd.csv", &r.psd)?;
    }
    out.write_json("noise_report.json", r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_with_header() {
        let f = file("t,v\n0,1\n0.5,1.1\n1.0,0.9\n");
        let (fs, v) = read_series(f.path()).unwrap();
        assert_eq!(fs, 2.0);
        assert_eq!(v, vec![1.0, 1.1, 0.9]);
    }

    #[test]
    fn reports_line_of_bad_value() {
        let f = file("t,v\n0,1\n1,abc\n2,1\n");
        match read_series(f.path()).unwrap_err() {
            HarnessError::Input { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        let f = file("0,1\n1,2,3\n");
        match read_series(f.path()).unwrap_err() {
            HarnessError::Input { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn rejects_irregular_sampling() {
        let f = file("0,1\n1,1\n3,1\n4,1\n");
        assert!(matches!(read_series(f.path()), Err(HarnessError::Input { .. })));
    }
}
