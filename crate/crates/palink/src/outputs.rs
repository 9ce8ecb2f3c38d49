//! CSV result files. Column layouts are fixed:
//!
//! | file             | columns                                             |
//! |------------------|-----------------------------------------------------|
//! | `psd_<angle>.csv`| `freq_norm, dB`                                     |
//! | `pattern.csv`    | `angle_deg, Pib_dB, Pob_dB`                         |
//! | `gmi.csv`        | `snr_dB, bits`                                      |
//! | `ber.csv`        | `snr_dB, ber_analytical, ber_mc, ci_lo, ci_hi`      |
//!
//! `freq_norm` is the frequency in cycles per sample of the oversampled
//! signal, from -0.5 up to just below 0.5. PSD values are the mean
//! periodogram power per bin in dB (absolute, not normalized), so curves of
//! different legs can be compared directly. Pattern values are in dB
//! relative to the largest in-band power of the leg.

use std::path::{Path, PathBuf};

use palink_core::metrics::{PsdCurve, RadiationReport};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdRow {
    pub freq_norm: f64,
    #[serde(rename = "dB")]
    pub db: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternRow {
    pub angle_deg: f64,
    #[serde(rename = "Pib_dB")]
    pub pib_db: f64,
    #[serde(rename = "Pob_dB")]
    pub pob_db: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmiRow {
    #[serde(rename = "snr_dB")]
    pub snr_db: f64,
    pub bits: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    #[serde(rename = "snr_dB")]
    pub snr_db: f64,
    pub ber_analytical: f64,
    pub ber_mc: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn psd_file_name(angle: f64) -> String {
    format!("psd_{angle}.csv")
}

pub fn psd_rows(curve: &PsdCurve) -> Vec<PsdRow> {
    curve.freq.iter().zip(&curve.db).map(|(&freq_norm, &db)| PsdRow { freq_norm, db }).collect()
}

pub fn pattern_rows(report: &RadiationReport) -> Vec<PatternRow> {
    (0..report.angles.len())
        .map(|a| PatternRow {
            angle_deg: report.angles[a],
            pib_db: report.in_band_db[a],
            pob_db: report.out_of_band_db[a],
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| with_path(e, path))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| with_path(e, path))?;
    r.deserialize().map(|row| row.map_err(|e| with_path(e, path))).collect()
}

fn with_path(e: csv::Error, path: &Path) -> Error {
    Error::parse(PathBuf::from(path), e.to_string())
}

/// Sum of linear PSD power over `lo <= |f| <= hi` on one side of the
/// spectrum (`side` = -1 or +1), from dB rows.
pub fn band_power(rows: &[PsdRow], side: f64, lo: f64, hi: f64) -> f64 {
    rows.iter()
        .filter(|r| r.freq_norm * side >= lo && r.freq_norm * side <= hi)
        .map(|r| 10f64.powf(r.db / 10.0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_headers_are_frozen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ber.csv");
        write_csv(&p, &[BerRow { snr_db: 5.0, ber_analytical: 0.1, ber_mc: 0.2, ci_lo: 0.15, ci_hi: 0.25 }]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("snr_dB,ber_analytical,ber_mc,ci_lo,ci_hi\n"));
        let p = dir.path().join("pattern.csv");
        write_csv(&p, &[PatternRow { angle_deg: -50.0, pib_db: -3.0, pob_db: -40.0 }]).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("angle_deg,Pib_dB,Pob_dB\n"));
        let p = dir.path().join("psd.csv");
        write_csv(&p, &[PsdRow { freq_norm: 0.0, db: 1.0 }]).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("freq_norm,dB\n"));
        let p = dir.path().join("gmi.csv");
        write_csv(&p, &[GmiRow { snr_db: 0.0, bits: 1.0 }]).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("snr_dB,bits\n"));
    }

    #[test]
    fn values_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gmi.csv");
        let rows = vec![GmiRow { snr_db: -10.0, bits: 0.1 + 0.2 }, GmiRow { snr_db: 30.0, bits: f64::MIN_POSITIVE }];
        write_csv(&p, &rows).unwrap();
        assert_eq!(read_csv::<GmiRow>(&p).unwrap(), rows);
    }

    #[test]
    fn band_power_selects_one_side() {
        let rows: Vec<PsdRow> = (-4..4).map(|k| PsdRow { freq_norm: k as f64 / 8.0, db: 0.0 }).collect();
        assert_eq!(band_power(&rows, 1.0, 0.2, 0.5), 2.0);
        assert_eq!(band_power(&rows, -1.0, 0.2, 0.5), 3.0);
    }
}
